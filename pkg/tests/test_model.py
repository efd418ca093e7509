"""Precision assembly, Woodbury inversion, partial correlations, and the
data-driven rank selector."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import support
from precfactor.errors import DataError, NumericalError, ParameterError
from precfactor.model import (
    DlLocals,
    DpState,
    Hyperparams,
    ModelState,
    assemble_precision,
    partial_correlation,
    select_q,
    woodbury_covariance,
)


def _state(lam, delta2):
    lam = np.asarray(lam, dtype=float)
    d, q = lam.shape
    dl = DlLocals(psi=np.ones((d, q)), phi=np.full((d, q), 1.0 / (d * q)), tau=1.0)
    dp = DpState(labels=np.arange(d, dtype=np.int64), uniques=np.asarray(delta2, float), alpha=1.0)
    return ModelState(lam=lam, dl=dl, dp=dp)


def test_assemble_zero_loadings():
    s = _state(np.zeros((3, 2)), [1.0, 2.0, 3.0])
    assert np.array_equal(assemble_precision(s), np.diag([1.0, 2.0, 3.0]))


def test_assemble_hand_case():
    s = _state([[1.0], [1.0]], [1.0, 1.0])
    assert np.array_equal(assemble_precision(s), np.array([[2.0, 1.0], [1.0, 2.0]]))


def test_assemble_dense_oracle():
    rng = np.random.default_rng(0)
    s = support.make_state(6, 3, rng)
    want = s.lam @ s.lam.T + np.diag(s.delta2)
    assert np.max(np.abs(assemble_precision(s) - want)) < 1e-12


def test_woodbury_zero_loadings():
    s = _state(np.zeros((3, 2)), [1.0, 2.0, 4.0])
    assert np.allclose(woodbury_covariance(s), np.diag([1.0, 0.5, 0.25]), atol=1e-15)


def test_woodbury_hand_case():
    s = _state([[1.0], [0.0]], [1.0, 1.0])
    assert np.max(np.abs(woodbury_covariance(s) - np.array([[0.5, 0.0], [0.0, 1.0]]))) < 1e-14


def test_woodbury_identity_product():
    rng = np.random.default_rng(1)
    s = support.make_state(8, 3, rng)
    prod = assemble_precision(s) @ woodbury_covariance(s)
    assert np.max(np.abs(prod - np.eye(8))) < 1e-8


def test_inverse_consistency_large_states():
    rng = np.random.default_rng(2)
    for d, q in [(2, 1), (20, 5), (100, 10), (200, 20)]:
        s = support.make_state(d, q, rng)
        prod = assemble_precision(s) @ woodbury_covariance(s)
        assert np.max(np.abs(prod - np.eye(d))) < 1e-8, (d, q)


def test_positive_definite_lower_bound():
    rng = np.random.default_rng(3)
    for _ in range(10):
        s = support.make_state(12, 4, rng)
        evals = np.linalg.eigvalsh(assemble_precision(s))
        assert evals.min() >= s.delta2.min() - 1e-8


def test_partial_correlation_diagonal():
    assert np.array_equal(partial_correlation(np.diag([2.0, 5.0, 0.5])), np.eye(3))


def test_partial_correlation_hand_case():
    rho = partial_correlation(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(rho, [[1.0, 0.5], [0.5, 1.0]], atol=1e-15)


def test_partial_correlation_formula_oracle():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((5, 5))
    omega = A @ A.T + 5 * np.eye(5)
    rho = partial_correlation(omega)
    for i in range(5):
        for j in range(5):
            want = omega[i, j] / np.sqrt(omega[i, i] * omega[j, j]) if i != j else 1.0
            assert abs(rho[i, j] - want) < 1e-12
    assert np.max(np.abs(rho - rho.T)) < 1e-12
    assert np.all(np.abs(rho) <= 1 + 1e-12)


@given(seed=st.integers(0, 2**16))
@settings(max_examples=25, deadline=None)
def test_partial_correlation_rescaling_invariant(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 5))
    omega = A @ A.T + 5 * np.eye(5)
    D = np.diag(rng.uniform(0.1, 10.0, size=5))
    assert np.max(np.abs(partial_correlation(D @ omega @ D) - partial_correlation(omega))) < 1e-12


def test_partial_correlation_rejects_bad_diagonal():
    with pytest.raises(ParameterError):
        partial_correlation(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_hyperparams_validation():
    Hyperparams(q=3)
    for kwargs in [{"q": 0}, {"q": 2, "a": 0.0}, {"q": 2, "b": -1.0}, {"q": 2, "a_delta": np.nan}]:
        with pytest.raises(ParameterError):
            Hyperparams(**kwargs)


def test_dp_state_validation():
    dp = DpState(labels=np.array([0, 1, 0]), uniques=np.array([1.0, 2.0]), alpha=1.0)
    dp.validate()
    bad = DpState(labels=np.array([0, 2, 0]), uniques=np.array([1.0, 2.0]), alpha=1.0)
    with pytest.raises(NumericalError):
        bad.validate()


def test_dl_locals_validation():
    good = DlLocals(psi=np.ones((2, 2)), phi=np.full((2, 2), 0.25), tau=1.0)
    good.validate()
    with pytest.raises(NumericalError):
        DlLocals(psi=np.ones((2, 2)), phi=np.full((2, 2), 0.3), tau=1.0).validate()
    with pytest.raises(NumericalError):
        DlLocals(psi=np.ones((2, 2)), phi=np.full((2, 2), 0.25), tau=-1.0).validate()


# ---------------------------------------------------------------------------
# select_q
# ---------------------------------------------------------------------------


def _zero_mean_matrix_with_singular_values(n, sv, rng):
    """n x len(sv) matrix with zero column means and the given singular values."""
    d = len(sv)
    basis = np.linalg.qr(np.column_stack([np.ones(n), rng.standard_normal((n, d))]))[0]
    U = basis[:, 1 : d + 1]  # orthonormal columns, all orthogonal to the ones vector
    Vt = np.linalg.qr(rng.standard_normal((d, d)))[0]
    return U @ np.diag(sv) @ Vt


def test_select_q_equal_singular_values():
    rng = np.random.default_rng(5)
    Y = _zero_mean_matrix_with_singular_values(40, np.full(10, 3.0), rng)
    assert select_q(Y, threshold=0.95) == 10


def test_select_q_dominant_reciprocal():
    # Reciprocals proportional to (0.96, 0.02, 0.02) after normalization.
    rng = np.random.default_rng(6)
    Y = _zero_mean_matrix_with_singular_values(30, np.array([1.0 / 48.0, 1.0, 1.0]), rng)
    assert select_q(Y, threshold=0.95) == 1


def _brute_force_q(Y, threshold, invert):
    Yc = Y - Y.mean(axis=0)
    sv = np.linalg.svd(Yc, compute_uv=False)
    sv = sv[sv > 1e-12 * sv.max()]
    w = np.sort(1.0 / sv if invert else sv)[::-1]
    cum = np.cumsum(w)
    return int(np.searchsorted(cum, threshold * cum[-1] - 1e-12 * cum[-1]) + 1)


@pytest.mark.parametrize("invert", [True, False])
def test_select_q_full_svd_oracle(invert):
    rng = np.random.default_rng(7)
    Y = rng.standard_normal((50, 20)) @ np.diag(rng.uniform(0.2, 4.0, size=20))
    for threshold in (0.5, 0.8, 0.95, 1.0):
        assert select_q(Y, threshold=threshold, invert_singular_values=invert) == _brute_force_q(
            Y, threshold, invert
        )


def test_select_q_errors():
    with pytest.raises(DataError):
        select_q(np.zeros((10, 4)))
    with pytest.raises(DataError):
        select_q(np.ones((1, 4)))
    with pytest.raises(ParameterError):
        select_q(np.random.default_rng(0).standard_normal((10, 4)), threshold=1.5)
