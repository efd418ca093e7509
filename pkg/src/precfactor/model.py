"""Model state, priors, precision assembly, and shared matrix transforms.

The precision matrix is modeled as Omega = Lambda Lambda^T + diag(delta^2)
with a d x q loadings matrix Lambda under a Dirichlet-Laplace shrinkage
prior and Dirichlet-process clustered residual precisions delta^2. Delta is
kept as a vector plus cluster bookkeeping; the dense d x d matrix is only
materialized on demand for summaries.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import svds

from .errors import DataError, NumericalError, ParameterError


@dataclass
class Hyperparams:
    """Prior hyperparameters and latent rank.

    (a, b): Dirichlet-Laplace concentration and global-scale rate;
    (a_delta, b_delta): Gamma base measure of the DP on residual precisions;
    (a_alpha, b_alpha): Gamma prior on the DP concentration; q: latent rank.
    """

    q: int
    a: float = 0.5
    b: float = 2.0
    a_delta: float = 0.1
    b_delta: float = 0.1
    a_alpha: float = 0.1
    b_alpha: float = 0.1

    def __post_init__(self):
        for name in ("a", "b", "a_delta", "b_delta", "a_alpha", "b_alpha"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"Hyperparams.{name} must be positive finite, got {v}")
        if self.q < 1:
            raise ParameterError(f"Hyperparams.q must be a positive integer, got {self.q}")


@dataclass
class DlLocals:
    """Dirichlet-Laplace local scales: psi (d x q), phi (d x q, summing to 1
    over all d*q entries), and global scale tau."""

    psi: np.ndarray
    phi: np.ndarray
    tau: float

    def validate(self):
        if np.any(self.psi <= 0) or np.any(self.phi <= 0) or self.tau <= 0:
            raise NumericalError("DlLocals entries must be strictly positive")
        if abs(self.phi.sum() - 1.0) > 1e-12:
            raise NumericalError(f"phi must sum to 1, got {self.phi.sum()}")


@dataclass
class DpState:
    """Dirichlet-process clustering of the residual precisions.

    labels[j] = r means delta_j^2 equals uniques[r]; labels are compact,
    every cluster id in 0..k-1 has at least one member.
    """

    labels: np.ndarray
    uniques: np.ndarray
    alpha: float

    @property
    def k(self) -> int:
        return len(self.uniques)

    @property
    def delta2(self) -> np.ndarray:
        return self.uniques[self.labels]

    def validate(self):
        if self.alpha <= 0 or np.any(self.uniques <= 0):
            raise NumericalError("DpState requires positive alpha and precisions")
        present = np.unique(self.labels)
        if len(present) != len(self.uniques) or present[0] != 0 or present[-1] != len(self.uniques) - 1:
            raise NumericalError("DpState labels are not compact over live uniques")


@dataclass
class ModelState:
    """Full parameter state of one Gibbs iteration."""

    lam: np.ndarray  # d x q loadings
    dl: DlLocals
    dp: DpState

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    @property
    def q(self) -> int:
        return self.lam.shape[1]

    @property
    def delta2(self) -> np.ndarray:
        return self.dp.delta2


@dataclass
class LatentBlock:
    """Latent (U, V) draws and the q x q matrix P = I_q + Lambda^T Delta^-1 Lambda."""

    U: np.ndarray  # n x q
    V: np.ndarray  # n x d
    P: np.ndarray  # q x q SPD


def assemble_precision(state: ModelState) -> np.ndarray:
    """Dense Omega = Lambda Lambda^T + diag(delta^2); SPD by construction."""
    omega = state.lam @ state.lam.T
    omega[np.diag_indices_from(omega)] += state.delta2
    return omega


def woodbury_covariance(state: ModelState) -> np.ndarray:
    """Inverse of assemble_precision via the q x q Woodbury solve:
    Delta^-1 - Delta^-1 Lambda (I_q + Lambda^T Delta^-1 Lambda)^-1 Lambda^T Delta^-1.
    """
    dinv = 1.0 / state.delta2
    A = dinv[:, None] * state.lam  # Delta^-1 Lambda, d x q
    P = np.eye(state.q) + state.lam.T @ A
    try:
        c = cho_factor(P, lower=True)
        middle = cho_solve(c, A.T)  # P^-1 Lambda^T Delta^-1
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"q x q Woodbury solve failed: {exc}") from exc
    cov = -A @ middle
    cov[np.diag_indices_from(cov)] += dinv
    return 0.5 * (cov + cov.T)


def partial_correlation(omega: np.ndarray) -> np.ndarray:
    """diag(Omega)^(-1/2) Omega diag(Omega)^(-1/2).

    This follows the sign convention used for testing and FDR control; the
    scientifically standard partial correlations are the negated
    off-diagonals of this matrix.
    """
    diag = np.diag(omega)
    if np.any(diag <= 0):
        raise ParameterError("partial_correlation requires a strictly positive diagonal")
    s = 1.0 / np.sqrt(diag)
    rho = omega * np.outer(s, s)
    np.fill_diagonal(rho, 1.0)
    return rho


def sample_gaussian_precision(omega: np.ndarray, n: int, rng) -> np.ndarray:
    """n iid mean-zero Gaussian rows with precision omega, via Cholesky of
    omega and a triangular solve."""
    try:
        L = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"precision matrix is not SPD: {exc}") from exc
    z = rng.standard_normal((n, omega.shape[0]))
    # Solve L^T x = z row-wise: cov(x) = (L L^T)^-1 = omega^-1.
    return np.linalg.solve(L.T, z.T).T


def select_q(
    data: np.ndarray,
    threshold: float = 0.95,
    max_rank: int | None = None,
    invert_singular_values: bool = True,
) -> int:
    """Latent rank from a truncated SVD of the centered data matrix.

    Computes the top min(max_rank, min(n, d)) singular values, transforms
    them (reciprocals by default; raw values with
    invert_singular_values=False), sorts decreasing, and returns the
    smallest count whose cumulative sum reaches threshold * total.
    """
    Y = np.asarray(data, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2 or Y.shape[1] < 2:
        raise DataError(f"select_q needs an n x d matrix with n, d >= 2, got shape {Y.shape}")
    if not 0 < threshold <= 1:
        raise ParameterError(f"threshold must lie in (0, 1], got {threshold}")
    n, d = Y.shape
    if max_rank is None:
        max_rank = min(n - 1, d, 500)
    Yc = Y - Y.mean(axis=0)
    if not np.any(Yc):
        raise DataError("select_q: centered data matrix is identically zero")
    k = min(max_rank, min(n, d))
    if k < min(n, d) - 1:
        sv = svds(Yc, k=k, return_singular_vectors=False)
    else:
        sv = np.linalg.svd(Yc, compute_uv=False)[:k]
    sv = sv[sv > 1e-12 * sv.max()]
    weights = 1.0 / sv if invert_singular_values else sv
    weights = np.sort(weights)[::-1]
    cum = np.cumsum(weights)
    return int(np.searchsorted(cum, threshold * cum[-1] - 1e-12 * cum[-1]) + 1)
