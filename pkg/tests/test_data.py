import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from dppca.data import (
    SYNTHETIC_SPECTRUM,
    DataError,
    Feature,
    OneHotExpander,
    RawTable,
    load_dataset,
    normalize,
    one_hot_expand,
    read_dataset_csv,
    read_table,
    subsample,
    synthetic_gaussian,
    write_dataset_csv,
)
from dppca.linalg import DatasetMatrix, ParameterError, eigengap, second_moment, top_k_subspace, utility_qf


def kddcup_like_schema():
    schema = {f"c{i}": "continuous" for i in range(36)}
    schema.update(protocol_type=3, service=66, flag=11)
    return schema


def kddcup_like_columns(rows=200, seed=0):
    rng = np.random.default_rng(seed)
    cols = {f"c{i}": list(rng.uniform(0, 100, rows)) for i in range(36)}
    for name, q in (("protocol_type", 3), ("service", 66), ("flag", 11)):
        vals = [f"{name}{j}" for j in range(q)]
        cols[name] = vals + list(rng.choice(vals, rows - q))
    return cols


# --- expansion --------------------------------------------------------------

def test_one_hot_block():
    table = RawTable([Feature("f", "categorical", [2, 1, 3], arity=3)])
    x, report = one_hot_expand(table)
    np.testing.assert_array_equal(x[:, 0], [0, 1, 0])
    assert report.output_d == 3 and report.expansion == {"f": [0, 1, 2]}


def test_all_continuous_identity():
    vals = np.random.default_rng(0).standard_normal((4, 6))
    table = RawTable([Feature(f"c{i}", "continuous", list(vals[i])) for i in range(4)])
    x, _ = one_hot_expand(table)
    np.testing.assert_array_equal(x, vals)


def test_kddcup_shaped_dimension():
    table = RawTable.from_schema(kddcup_like_columns(), kddcup_like_schema())
    x, report = one_hot_expand(table)
    assert x.shape == (116, 200) == (report.output_d, table.rows)
    assert report.input_dims == 39


def test_unseen_category_raises():
    train = RawTable([Feature("f", "categorical", ["a", "b"], arity=2)])
    enc = OneHotExpander().fit(train)
    with pytest.raises(DataError):
        enc.transform(RawTable([Feature("f", "categorical", ["a", "c"], arity=2)]))


def test_schema_checks():
    with pytest.raises(DataError):
        RawTable([Feature("f", "categorical", ["a", "b"], arity=3)])
    with pytest.raises(DataError):
        RawTable([Feature("a", "continuous", [1.0]), Feature("b", "continuous", [1.0, 2.0])])
    with pytest.raises(DataError):
        RawTable.from_schema({"a": [1]}, {"b": "continuous"})


# --- normalization ----------------------------------------------------------

def test_normalize_hand_example():
    data, report = normalize(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(data.entries[:, 0], [1 / math.sqrt(2)] * 2, rtol=1e-15)
    assert report.row_scales == [3.0, 4.0]


def test_normalize_fixed_point():
    x = np.eye(3)
    data, _ = normalize(x)
    np.testing.assert_array_equal(data.entries, x)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
@settings(max_examples=100)
def test_normalize_postconditions(x):
    if not np.any(x):
        return
    data, _ = normalize(x)
    assert abs(np.max(np.linalg.norm(data.entries, axis=0)) - 1) < 1e-12
    assert np.max(np.abs(data.entries)) <= 1 + 1e-12


def test_normalize_rejects_empty():
    with pytest.raises(ParameterError):
        normalize(np.zeros((0, 3)))


# --- subsampling ------------------------------------------------------------

def test_subsample_full_is_permutation():
    x = np.arange(12.0).reshape(2, 6) / 20
    data = DatasetMatrix(x)
    sub = subsample(data, 6, seed=1)
    assert sorted(map(tuple, sub.entries.T)) == sorted(map(tuple, x.T))


def test_subsample_single():
    data = DatasetMatrix(np.arange(10.0).reshape(1, 10) / 10)
    sub = subsample(data, 1, seed=2)
    assert sub.n == 1 and sub.entries[0, 0] in data.entries[0]


def test_subsample_frequencies():
    n, m, draws = 20, 5, 10_000
    data = DatasetMatrix(np.arange(n, dtype=float)[None, :] / n)
    counts = np.zeros(n)
    for s in range(draws):
        idx = np.rint(subsample(data, m, seed=s).entries[0] * n).astype(int)
        assert len(set(idx)) == m
        counts[idx] += 1
    p = m / n
    band = 3 * math.sqrt(p * (1 - p) / draws)
    assert np.all(np.abs(counts / draws - p) < band + 1e-12)


def test_subsample_bounds():
    data = DatasetMatrix(np.zeros((2, 3)))
    with pytest.raises(ParameterError):
        subsample(data, 4, seed=0)
    with pytest.raises(ParameterError):
        subsample(data, 0, seed=0)


# --- synthetic data ---------------------------------------------------------

def test_zero_spectrum():
    data = synthetic_gaussian(50, spectrum=[0.0] * 4, seed=0)
    assert not np.any(data.entries)


def test_empirical_gap_on_raw_draws():
    for seed in range(20):
        a = second_moment(synthetic_gaussian(5000, seed=seed, clip=False))
        assert abs(eigengap(a, 1).gap - 0.2) < 0.05


def test_clipping_enforces_unit_norm():
    data = synthetic_gaussian(5000, seed=0)
    assert data.bounded
    assert np.max(np.linalg.norm(data.entries, axis=0)) <= 1 + 1e-12
    assert 0 < data.provenance["clip_fraction"] < 1
    raw = synthetic_gaussian(5000, seed=0, clip=False)
    assert not raw.bounded and raw.provenance["clip_fraction"] == 0.0


def test_rotation_invariance_of_utility():
    def qf(basis, seed):
        data = synthetic_gaussian(1000, seed=seed, basis=basis)
        a = second_moment(data)
        return utility_qf(top_k_subspace(a, 2), a)

    ident = [qf("identity", s) for s in range(1000)]
    rot = [qf("random-orthogonal", 10_000 + s) for s in range(1000)]
    assert stats.ks_2samp(ident, rot).statistic < 0.07


def test_synthetic_checks():
    with pytest.raises(ParameterError):
        synthetic_gaussian(10, spectrum=[0.1, 0.2])
    with pytest.raises(ParameterError):
        synthetic_gaussian(10, basis="haar")
    assert synthetic_gaussian(10, seed=3).d == len(SYNTHETIC_SPECTRUM)


# --- files ------------------------------------------------------------------

def test_table_files_roundtrip(tmp_path):
    cols = kddcup_like_columns(rows=120, seed=1)
    csv_path = tmp_path / "table.csv"
    names = list(cols)
    with open(csv_path, "w") as fh:
        fh.write(",".join(names + ["ignored"]) + "\n")
        for r in range(120):
            fh.write(",".join(str(cols[n][r]) for n in names) + ",x\n")
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(kddcup_like_schema()))
    table = read_table(csv_path, schema_path)
    assert table.rows == 120
    data, report = load_dataset(csv_path, schema_path)
    assert data.d == 116 and data.n == 120
    assert abs(np.max(np.linalg.norm(data.entries, axis=0)) - 1) < 1e-12
    assert json.loads(report.to_json())["output_d"] == 116


def test_dataset_csv_roundtrip(tmp_path):
    data = synthetic_gaussian(30, seed=4)
    path = tmp_path / "x.csv"
    write_dataset_csv(data, path)
    back = read_dataset_csv(path)
    np.testing.assert_array_equal(back.entries, data.entries)
