import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grassrmc import observation
from grassrmc.errors import DimensionMismatch, DuplicateEntry, IndexOutOfRange, NonFiniteValue
from grassrmc.grassmann import orthonormalize
from grassrmc.observation import (
    ObservationSet,
    build_observation_set,
    product_on_omega,
    project_complement_norm_sq,
    residual_on_omega,
)

from conftest import random_instance, random_obs


def test_build_small():
    obs = build_observation_set(2, 2, [(0, 0, 1.0), (1, 1, 2.0)])
    assert obs.nnz == 2
    assert obs.col_ptr.tolist() == [0, 1, 2]
    assert obs.triples() == [(0, 0, 1.0), (1, 1, 2.0)]


def test_build_sorts_column_major():
    obs = build_observation_set(3, 2, [(2, 1, 5.0), (1, 0, 4.0), (0, 1, 3.0), (2, 0, 2.0)])
    assert obs.cols.tolist() == [0, 0, 1, 1]
    assert obs.rows.tolist() == [1, 2, 0, 2]
    assert obs.values.tolist() == [4.0, 2.0, 3.0, 5.0]
    rows, vals = obs.column(1)
    assert rows.tolist() == [0, 2] and vals.tolist() == [3.0, 5.0]


def test_duplicate_rejected():
    with pytest.raises(DuplicateEntry):
        build_observation_set(2, 2, [(0, 0, 1.0), (0, 0, 3.0)])


@pytest.mark.parametrize("triple", [(2, 0, 1.0), (0, 2, 1.0), (-1, 0, 1.0)])
def test_out_of_range(triple):
    with pytest.raises(IndexOutOfRange):
        build_observation_set(2, 2, [triple])


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite(bad):
    with pytest.raises(NonFiniteValue):
        build_observation_set(2, 2, [(0, 0, bad)])


def test_empty_and_immutable():
    obs = build_observation_set(3, 4, [])
    assert obs.nnz == 0 and obs.col_ptr.tolist() == [0] * 5
    obs = random_obs(5, 4, 0.5, 0)
    with pytest.raises(ValueError):
        obs.values[0] = 1.0


def test_column_groups_partition():
    obs = random_obs(30, 20, 0.1, 3)
    seen = np.concatenate([np.arange(obs.col_ptr[j], obs.col_ptr[j + 1]) for j in range(obs.n)])
    assert seen.tolist() == list(range(obs.nnz))
    for j in range(obs.n):
        rows, _ = obs.column(j)
        assert np.all(np.diff(rows) > 0)


def test_residual_zero_product_gives_minus_m():
    obs, U, _ = random_instance(10, 8, 2, 0.5, 1)
    R = residual_on_omega(obs, U, np.zeros((2, 8)), np.zeros(obs.nnz))
    assert np.array_equal(R, -obs.values)


def test_residual_exact_fit_is_zero():
    rng = np.random.default_rng(2)
    U = orthonormalize(rng.standard_normal((10, 2)))
    V = rng.standard_normal((2, 8))
    X = U.basis @ V
    base = random_obs(10, 8, 0.5, 2)
    obs = base.with_values(base.restrict(X))
    R = residual_on_omega(obs, U, V, np.zeros(obs.nnz))
    assert np.max(np.abs(R)) <= 1e-14


def test_residual_dense_oracle():
    obs, U, S = random_instance(10, 8, 2, 0.5, 4)
    V = np.random.default_rng(5).standard_normal((2, 8))
    dense = U.basis @ V - obs.to_dense() + obs.to_dense(S)
    R = residual_on_omega(obs, U, V, S)
    np.testing.assert_allclose(R, obs.restrict(dense), rtol=0, atol=1e-14)


def test_residual_linear_in_s():
    obs, U, S1 = random_instance(12, 9, 3, 0.4, 6)
    V = np.random.default_rng(7).standard_normal((3, 9))
    S2 = np.random.default_rng(8).standard_normal(obs.nnz)
    diff = residual_on_omega(obs, U, V, S1 + S2) - residual_on_omega(obs, U, V, S1)
    np.testing.assert_allclose(diff, S2, rtol=0, atol=1e-13)


def test_residual_dimension_checks():
    obs, U, S = random_instance(10, 8, 2, 0.5, 9)
    with pytest.raises(DimensionMismatch):
        residual_on_omega(obs, U, np.zeros((2, 7)), S)
    with pytest.raises(DimensionMismatch):
        residual_on_omega(obs, U, np.zeros((3, 8)), S)
    with pytest.raises(DimensionMismatch):
        residual_on_omega(obs, U, np.zeros((2, 8)), S[:-1])


def test_residual_counts_inner_products():
    obs, U, S = random_instance(20, 15, 3, 0.3, 10)
    V = np.zeros((3, 15))
    before = observation.counters["inner_products"]
    residual_on_omega(obs, U, V, S)
    assert observation.counters["inner_products"] - before == obs.nnz


def test_complement_full_observation_is_zero():
    rng = np.random.default_rng(11)
    rows, cols = np.nonzero(np.ones((6, 5), dtype=bool))
    obs = ObservationSet.from_arrays(6, 5, rows, cols, rng.standard_normal(30))
    U = orthonormalize(rng.standard_normal((6, 2)))
    assert project_complement_norm_sq(obs, U, rng.standard_normal((2, 5))) <= 1e-12


def test_complement_zero_v():
    obs, U, _ = random_instance(12, 9, 3, 0.3, 12)
    assert project_complement_norm_sq(obs, U, np.zeros((3, 9))) == 0.0


def test_complement_dense_oracle():
    obs, U, _ = random_instance(12, 9, 3, 0.3, 13)
    V = np.random.default_rng(14).standard_normal((3, 9))
    X = U.basis @ V
    expected = np.sum(np.where(obs.mask(), 0.0, X) ** 2)
    got = project_complement_norm_sq(obs, U, V)
    assert abs(got - expected) <= 1e-12 * expected


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), density=st.floats(0.05, 1.0))
def test_complement_nonnegative(seed, density):
    obs, U, _ = random_instance(8, 6, 2, density, seed)
    V = np.random.default_rng(seed).standard_normal((2, 6))
    assert project_complement_norm_sq(obs, U, V) >= 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_restriction_idempotent(seed):
    obs = random_obs(9, 7, 0.4, seed)
    Z = np.random.default_rng(seed).standard_normal((9, 7))
    once = obs.restrict(Z)
    twice = obs.restrict(obs.to_dense(once))
    assert np.array_equal(once, twice)


def test_sparse_views_agree():
    obs = random_obs(15, 11, 0.3, 15)
    dense = obs.to_dense()
    assert np.array_equal(obs.to_sparse().toarray(), dense)
    assert np.array_equal(obs.to_csr().toarray(), dense)


def test_product_independent_of_thread_count(threads):
    obs, U, _ = random_instance(400, 300, 4, 0.1, 16)
    V = np.random.default_rng(17).standard_normal((4, 300))
    threads(1)
    one = product_on_omega(obs, U, V)
    threads(4)
    four = product_on_omega(obs, U, V)
    assert obs.nnz > 2048
    assert np.array_equal(one, four)
