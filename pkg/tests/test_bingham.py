import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dppca.bingham import (
    BinghamParam,
    ChainTrace,
    SamplerError,
    burnin_statistic,
    sample_matrix_bingham,
    sample_vector_bingham,
    uniform_frame,
)
from dppca.linalg import OrthonormalFrame, ParameterError

import oracles


def ks_against(samples, cdf):
    return stats.kstest(samples, cdf).statistic


# --- vector sampler ---------------------------------------------------------

@pytest.mark.parametrize("d", [2, 3, 7])
def test_zero_parameter_is_uniform(d):
    v = sample_vector_bingham(np.zeros((d, d)), seed=1, count=10_000)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    t = v[:, 0] ** 2
    sd = math.sqrt(2 * (d - 1) / (d * d * (d + 2)) / len(t))
    assert abs(t.mean() - 1 / d) < 3 * sd


def test_scalar_shift_does_not_change_draws():
    a = sample_vector_bingham(np.zeros((4, 4)), seed=3, count=500)
    b = sample_vector_bingham(5.0 * np.eye(4), seed=3, count=500)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kappa,d", [(0.0, 3), (2.0, 3), (10.0, 3), (10.0, 5), (-4.0, 3), (60.0, 4)])
def test_axis_marginal_matches_quadrature(kappa, d):
    b = np.zeros((d, d))
    b[0, 0] = kappa
    v = sample_vector_bingham(b, seed=int(abs(kappa) * 10) + d, count=5000)
    assert ks_against(v[:, 0] ** 2, oracles.bingham_axis_cdf(kappa, d)) < 0.05


def test_rotated_parameter():
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    b = q @ np.diag([8.0, 0.0, 0.0]) @ q.T
    v = sample_vector_bingham(b, seed=2, count=5000)
    assert ks_against((v @ q[:, 0]) ** 2, oracles.bingham_axis_cdf(8.0, 3)) < 0.05


def test_vector_sampler_input_checks():
    with pytest.raises(ParameterError):
        sample_vector_bingham(np.array([[0.0, 1.0], [0.0, 0.0]]), seed=0, count=1)
    with pytest.raises(ParameterError):
        sample_vector_bingham(np.zeros((2, 3)), seed=0, count=1)


def test_budget_exhaustion_raises():
    b = np.diag([50.0, 0.0, 0.0, 0.0])
    with pytest.raises(SamplerError) as info:
        sample_vector_bingham(b, seed=0, count=1000, max_proposals=10)
    assert info.value.proposals >= 10
    assert info.value.draws < 1000


# --- uniform frames ---------------------------------------------------------

def test_uniform_frame_one_dimensional():
    signs = np.array([uniform_frame(1, 1, s).columns[0, 0] for s in range(4000)])
    assert set(np.unique(signs)) == {-1.0, 1.0}
    assert abs(np.mean(signs > 0) - 0.5) < 3 * 0.5 / math.sqrt(4000)


def test_uniform_frame_moments():
    rng = np.random.default_rng(0)
    means = np.mean([uniform_frame(3, 1, rng).columns[:, 0] for _ in range(10_000)], axis=0)
    assert np.all(np.abs(means) < 0.03)
    proj = np.mean([uniform_frame(5, 2, rng).projector() for _ in range(10_000)], axis=0)
    assert np.max(np.abs(proj - 0.4 * np.eye(5))) < 0.03


def test_uniform_frame_checks():
    with pytest.raises(ParameterError):
        uniform_frame(3, 4, 0)


# --- Gibbs chain ------------------------------------------------------------

def test_full_frame_chain_stays_orthonormal():
    b = np.diag([3.0, 1.0, 0.5, 0.0])
    tr = sample_matrix_bingham(BinghamParam(b, 4), iterations=300, thin=1, seed=0)
    for f in tr.frames[::50]:
        np.testing.assert_allclose(f.T @ f, np.eye(4), atol=1e-10)
        assert np.trace(f.T @ b @ f) == pytest.approx(np.trace(b))


def test_zero_parameter_projector_mean():
    tr = sample_matrix_bingham(BinghamParam(np.zeros((5, 5)), 2), iterations=50_000, thin=5, seed=1)
    assert len(tr) == 10_000
    proj = np.einsum("tik,tjk->ij", tr.frames, tr.frames) / len(tr)
    assert np.max(np.abs(proj - 0.4 * np.eye(5))) < 0.03


def test_single_column_chain_matches_vector_law():
    kappa = 6.0
    b = np.diag([kappa, 0.0, 0.0])
    tr = sample_matrix_bingham(BinghamParam(b, 1), iterations=5000, thin=1, seed=2)
    t = tr.frames[:, 0, 0] ** 2
    assert ks_against(t, oracles.bingham_axis_cdf(kappa, 3)) < 0.05


def test_two_column_chain_normal_follows_negated_law():
    # For d=3, k=2 the density exp(tr(V^T B V)) equals exp(tr B - u^T B u) with u
    # the unit normal of span(V), so u is Bingham with parameter -B.
    kappa = 5.0
    b = np.diag([kappa, 0.0, 0.0])
    tr = sample_matrix_bingham(BinghamParam(b, 2), iterations=20_000, thin=4, seed=3)
    normals = np.cross(tr.frames[:, :, 0], tr.frames[:, :, 1])
    t = normals[:, 0] ** 2
    assert ks_against(t, oracles.bingham_axis_cdf(-kappa, 3)) < 0.05


def test_chain_is_deterministic_in_seed():
    p = BinghamParam(np.diag([4.0, 2.0, 0.0, 0.0]), 2)
    a = sample_matrix_bingham(p, iterations=200, thin=10, seed=9)
    b = sample_matrix_bingham(p, iterations=200, thin=10, seed=9)
    c = sample_matrix_bingham(p, iterations=200, thin=10, seed=10)
    np.testing.assert_array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)


def test_chain_accepts_initial_frame():
    p = BinghamParam(np.diag([4.0, 2.0, 0.0]), 2)
    init = OrthonormalFrame(np.eye(3)[:, :2])
    tr = sample_matrix_bingham(p, iterations=10, seed=0, init=init)
    assert tr.frames.shape == (10, 3, 2)
    with pytest.raises(ParameterError):
        sample_matrix_bingham(p, iterations=10, seed=0, init=OrthonormalFrame(np.eye(3)[:, :1]))
    with pytest.raises(ParameterError):
        sample_matrix_bingham(p, iterations=10, seed=0, init="warm")
    with pytest.raises(ParameterError):
        sample_matrix_bingham(p, iterations=10, seed=None)


def test_param_validation():
    with pytest.raises(ParameterError):
        BinghamParam(np.zeros((2, 3)), 1)
    with pytest.raises(ParameterError):
        BinghamParam(np.zeros((3, 3)), 4)
    with pytest.raises(ParameterError):
        BinghamParam(np.full((2, 2), np.inf), 1)


@given(st.integers(2, 7), st.integers(0, 10_000), st.floats(0, 200))
@settings(max_examples=25, deadline=None)
def test_chain_frames_orthonormal(d, seed, scale):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d))
    k = 1 + seed % d
    tr = sample_matrix_bingham(BinghamParam(scale * (g + g.T) / 2, k), iterations=40, thin=8,
                               seed=seed)
    for f in tr.frames:
        assert np.linalg.norm(f.T @ f - np.eye(k)) <= 1e-8


def test_large_exponent_concentrates():
    b = 1e4 * np.diag([1.0, 0.5, 0.1, 0.0])
    tr = sample_matrix_bingham(BinghamParam(b, 2), iterations=500, thin=500, seed=4)
    proj = tr.final_frame().projector()
    assert np.trace(proj[:2, :2]) > 1.99


# --- burn-in statistic and trace I/O ----------------------------------------

def _trace(frames):
    return ChainTrace(np.array(frames), seed=0, thin=1, iterations=len(frames))


def test_burnin_constant_trace():
    v = np.eye(4)[:, :2]
    diag = burnin_statistic(_trace([v] * 10), [1, 5, 10])
    np.testing.assert_allclose(diag.f, 1.0)


def test_burnin_alternating_trace():
    v = np.eye(4)[:, :2]
    diag = burnin_statistic(_trace([v, -v] * 5), [2, 4, 10])
    np.testing.assert_allclose(diag.f, 0.0, atol=1e-15)
    with pytest.raises(ParameterError):
        burnin_statistic(_trace([v] * 3), [4])


def test_burnin_zero_parameter_large_d():
    tr = sample_matrix_bingham(BinghamParam(np.zeros((50, 50)), 5), iterations=20_000, thin=1,
                               seed=5)
    diag = burnin_statistic(tr, [1, 20_000])
    assert diag.f[0] == pytest.approx(1.0)
    assert diag.f[-1] < 0.05


def test_running_f_matches_statistic():
    tr = sample_matrix_bingham(BinghamParam(np.diag([3.0, 1.0, 0.0]), 2), iterations=50,
                               thin=1, seed=6)
    diag = burnin_statistic(tr, range(1, 51))
    np.testing.assert_allclose(tr.running_f, diag.f, rtol=1e-9)


def test_trace_csv_roundtrip(tmp_path):
    tr = sample_matrix_bingham(BinghamParam(np.diag([3.0, 1.0, 0.0]), 2), iterations=30,
                               thin=3, seed=7)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = ChainTrace.from_csv(path)
    np.testing.assert_array_equal(back.frames, tr.frames)
    assert (back.seed, back.thin, back.iterations) == (7, 3, 30)
