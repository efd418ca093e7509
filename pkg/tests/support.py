"""Shared test fixtures: analytic distribution oracles, random valid model
states, and the distribution battery run both per-sampler and as one
acceptance gate."""

import mpmath
import numpy as np
from scipy import special, stats

from precfactor import rvgen
from precfactor.model import DlLocals, DpState, ModelState


# ---------------------------------------------------------------------------
# KS and analytic CDF oracles
# ---------------------------------------------------------------------------


def ks_statistic(sample, cdf):
    """Two-sided KS statistic of a sample against an analytic CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    F = cdf(x)
    hi = np.arange(1, n + 1) / n
    return float(max(np.max(np.abs(F - hi)), np.max(np.abs(F - hi + 1.0 / n))))


def gamma_cdf(shape, rate):
    return lambda x: special.gammainc(shape, rate * np.asarray(x))


def inverse_gaussian_cdf(mu, lam):
    def cdf(x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(lam / x)
        return stats.norm.cdf(r * (x / mu - 1.0)) + np.exp(2.0 * lam / mu) * stats.norm.cdf(
            -r * (x / mu + 1.0)
        )

    return cdf


def gig_mean(p, a, b):
    """sqrt(b/a) K_{p+1}(sqrt(ab)) / K_p(sqrt(ab)), Bessel ratio in log domain
    so large |p| cannot overflow."""
    with mpmath.workdps(50):
        s = mpmath.sqrt(mpmath.mpf(a) * mpmath.mpf(b))
        log_ratio = mpmath.log(mpmath.besselk(p + 1, s)) - mpmath.log(mpmath.besselk(p, s))
        return float(mpmath.sqrt(mpmath.mpf(b) / mpmath.mpf(a)) * mpmath.exp(log_ratio))


# ---------------------------------------------------------------------------
# Random valid model states
# ---------------------------------------------------------------------------


def make_state(d, q, rng, n_clusters=None, lam_scale=1.0, delta2_range=(0.5, 3.0)):
    """Random ModelState satisfying every type invariant."""
    lam = lam_scale * rng.standard_normal((d, q))
    phi = rng.dirichlet(np.full(d * q, 0.5)).reshape(d, q)
    phi = np.maximum(phi, 1e-12)
    phi /= phi.sum()
    psi = rng.exponential(2.0, size=(d, q)) + 1e-12
    tau = float(rng.gamma(2.0, 1.0)) + 1e-6
    k = n_clusters if n_clusters is not None else int(rng.integers(1, min(d, 4) + 1))
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=d - k)]).astype(np.int64)
    lo, hi = delta2_range
    uniques = rng.uniform(lo, hi, size=k)
    dl = DlLocals(psi=psi, phi=phi, tau=tau)
    dp = DpState(labels=labels, uniques=uniques, alpha=float(rng.gamma(2.0, 1.0)) + 0.1)
    return ModelState(lam=lam, dl=dl, dp=dp)


def state_from_record(rec):
    """Rebuild a ModelState from one persisted draw-store record."""
    lam = rec["lam"]
    labels = rec["labels"]
    delta2 = rec["delta2"]
    k = int(labels.max()) + 1
    uniques = np.zeros(k)
    uniques[labels] = delta2
    d, q = lam.shape
    dl = DlLocals(psi=np.ones((d, q)), phi=np.full((d, q), 1.0 / (d * q)), tau=rec["tau"])
    dp = DpState(labels=labels, uniques=uniques, alpha=rec["alpha"])
    return ModelState(lam=lam, dl=dl, dp=dp)


# ---------------------------------------------------------------------------
# Distribution battery (shared with the acceptance gate)
# ---------------------------------------------------------------------------

N_DRAWS = 1_000_000


def _rng(idx):
    return rvgen.RngStream(777, stream_id=idx).generator()


def check_gamma_exponential_mean():
    x = rvgen.gamma(1.0, 1.0, _rng(1), size=N_DRAWS)
    assert abs(x.mean() - 1.0) < 0.01


def check_gamma_default_base_measure_moments():
    x = rvgen.gamma(0.1, 0.1, _rng(2), size=N_DRAWS)
    assert abs(x.mean() - 1.0) < 0.02
    assert abs(x.var() / 10.0 - 1.0) < 0.05


def check_gamma_ks():
    x = rvgen.gamma(2.5, 0.7, _rng(3), size=N_DRAWS)
    assert ks_statistic(x, gamma_cdf(2.5, 0.7)) < 0.002


def check_inverse_gaussian_mean():
    x = rvgen.inverse_gaussian(1.0, 1.0, _rng(4), size=N_DRAWS)
    assert abs(x.mean() - 1.0) < 0.01


def check_inverse_gaussian_variance():
    x = rvgen.inverse_gaussian(2.0, 3.0, _rng(5), size=N_DRAWS)
    assert abs(x.var() / (8.0 / 3.0) - 1.0) < 0.03


def check_inverse_gaussian_ks():
    x = rvgen.inverse_gaussian(0.5, 10.0, _rng(6), size=N_DRAWS)
    assert np.all(x > 0)
    assert ks_statistic(x, inverse_gaussian_cdf(0.5, 10.0)) < 0.002


def check_gig_inverse_gaussian_reduction():
    # Fast path against the generic rejection sampler, two-sample KS; plus a
    # one-sample KS against the analytic inverse-Gaussian CDF.
    a, b = 2.0, 3.0
    fast = rvgen.gig(rvgen.GigParams(-0.5, a, b), _rng(7), size=N_DRAWS)
    generic = stats.geninvgauss.rvs(
        -0.5, np.sqrt(a * b), scale=np.sqrt(b / a), size=N_DRAWS, random_state=_rng(8)
    )
    assert stats.ks_2samp(fast, generic).statistic < 0.003
    assert ks_statistic(fast, inverse_gaussian_cdf(np.sqrt(b / a), b)) < 0.002


def check_gig_bessel_moment():
    for p, a, b in [(2.0, 3.0, 5.0), (-0.5, 2.0, 3.0), (-2.0, 4.0, 8.0)]:
        x = rvgen.gig(rvgen.GigParams(p, a, b), _rng(9), size=N_DRAWS)
        assert abs(x.mean() / gig_mean(p, a, b) - 1.0) < 0.01, (p, a, b)


def check_gig_gamma_limit():
    x = rvgen.gig(rvgen.GigParams(2.0, 2.0, 1e-8), _rng(10), size=N_DRAWS)
    assert ks_statistic(x, gamma_cdf(2.0, 1.0)) < 0.005


def check_dirichlet_moments():
    cases = [
        (np.array([1.0, 1.0]), np.array([0.5, 0.5])),
        (np.full(4, 0.5), np.full(4, 0.25)),
        (np.array([2.0, 3.0, 5.0]), np.array([0.2, 0.3, 0.5])),
    ]
    for idx, (w, want) in enumerate(cases):
        rng = _rng(11 + idx)
        draws = np.array([rvgen.dirichlet(w, rng) for _ in range(100_000)])
        assert np.allclose(draws.sum(axis=1), 1.0, atol=1e-12)
        assert np.max(np.abs(draws.mean(axis=0) - want)) < 0.005


def check_beta_uniform():
    x = rvgen.beta(1.0, 1.0, _rng(14), size=N_DRAWS)
    assert abs(x.mean() - 0.5) < 0.005
    assert np.all((x > 0) & (x < 1))


def check_exponential_mean():
    x = rvgen.exponential(0.5, _rng(15), size=N_DRAWS)
    assert abs(x.mean() - 2.0) < 0.02


def check_std_normal_vec():
    x = rvgen.std_normal_vec(3 * N_DRAWS, _rng(16)).reshape(-1, 3)
    assert np.max(np.abs(x.mean(axis=0))) < 0.005
    assert np.max(np.abs(x.var(axis=0) - 1.0)) < 0.01


def check_positivity_and_finiteness():
    rng = _rng(17)
    for draw in (
        rvgen.gamma(0.1, 0.1, rng, size=50_000),
        rvgen.inverse_gaussian(1e-4, 1e3, rng, size=50_000),
        rvgen.gig(rvgen.GigParams(3.0, 0.5, 0.5), rng, size=50_000),
        rvgen.gig(rvgen.GigParams(-0.5, 1e4, 1e-4), rng, size=50_000),
    ):
        assert np.all(np.isfinite(draw)) and np.all(draw > 0)


BATTERY = [
    ("gamma exponential mean", check_gamma_exponential_mean),
    ("gamma base-measure moments", check_gamma_default_base_measure_moments),
    ("gamma KS", check_gamma_ks),
    ("inverse-Gaussian mean", check_inverse_gaussian_mean),
    ("inverse-Gaussian variance", check_inverse_gaussian_variance),
    ("inverse-Gaussian KS", check_inverse_gaussian_ks),
    ("giG p=-1/2 reduction", check_gig_inverse_gaussian_reduction),
    ("giG Bessel-ratio moment", check_gig_bessel_moment),
    ("giG Gamma limit", check_gig_gamma_limit),
    ("Dirichlet moments", check_dirichlet_moments),
    ("beta uniform", check_beta_uniform),
    ("exponential mean", check_exponential_mean),
    ("standard normal vector", check_std_normal_vec),
    ("positivity and finiteness", check_positivity_and_finiteness),
]
