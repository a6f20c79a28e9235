import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dppca.rng import derive_seed, make_rng


@given(st.integers(0, 2**63), st.lists(st.one_of(st.integers(0, 10**6), st.text()), max_size=4))
def test_derive_seed_deterministic(master, keys):
    a = derive_seed(master, *keys)
    assert a == derive_seed(master, *keys)
    assert 0 <= a < 2**64


def test_keys_separate_streams():
    assert derive_seed(0, "ppca", 1) != derive_seed(0, "ppca", 2)
    assert derive_seed(0, "ppca") != derive_seed(0, "modsulq")
    assert derive_seed(0, 1) != derive_seed(1, 1)


def test_make_rng_reproducible():
    x = make_rng(7, "a").standard_normal(5)
    np.testing.assert_array_equal(x, make_rng(7, "a").standard_normal(5))
    assert not np.array_equal(x, make_rng(7, "b").standard_normal(5))


def test_make_rng_passthrough_and_errors():
    g = np.random.default_rng(0)
    assert make_rng(g) is g
    with pytest.raises(ValueError):
        make_rng(None)
    with pytest.raises(ValueError):
        make_rng(g, "key")
    with pytest.raises(ValueError):
        make_rng(-1)
