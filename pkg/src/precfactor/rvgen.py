"""Random-variate engines for every distribution the Gibbs sampler draws from.

All samplers are stateless functions taking an explicit numpy Generator.
Streams are derived from (seed, stream_id) pairs through SeedSequence, so
identical pairs reproduce bit-identical sequences and distinct stream ids
give statistically independent PCG64 streams.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ParameterError

# |x| floor before forming iG/giG parameters from a loading magnitude; the
# conditionals are undefined at exactly zero, which floating point can reach.
MAGNITUDE_FLOOR = 1e-300

# Largest inverse-Gaussian mean we hand to the generator; numpy's wald
# overflows internally around mu^2 ~ 1e308.
_IG_MEAN_CAP = 1e150


@dataclass(frozen=True)
class RngStream:
    """Seedable, splittable generator handle.

    Identical (seed, stream_id) pairs yield bit-identical variate sequences;
    distinct stream_ids from one seed yield independent streams.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh PCG64 generator positioned at the start of this stream."""
        return np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed, self.stream_id)))
        )

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)


@dataclass(frozen=True)
class GigParams:
    """Parameters of the generalized inverse Gaussian.

    Density is proportional to x^(p-1) * exp(-(a*x + b/x)/2) on x > 0.
    """

    p: float
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.a) and np.isfinite(self.b)):
            raise ParameterError(f"non-finite giG parameters {self}")
        if self.a <= 0 or self.b <= 0:
            raise ParameterError(f"giG requires a, b > 0, got {self}")


def _check_positive(name, *values):
    for v in values:
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ParameterError(f"{name}: parameters must be positive finite, got {v!r}")


def gamma(shape, rate, rng, size=None):
    """Gamma draw with mean shape/rate."""
    _check_positive("gamma", shape, rate)
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def inverse_gaussian(mu, lam, rng, size=None):
    """Inverse-Gaussian draw with mean mu and shape lam.

    Michael-Schucany-Haas construction. The smaller root is evaluated as
    mu / (1 + w + sqrt(w(w + 2))) with w = mu*z^2/(2*lam), which stays
    positive for extreme mu/lam ratios where the textbook difference form
    cancels catastrophically.
    """
    _check_positive("inverse_gaussian", mu, lam)
    mu = np.minimum(np.asarray(mu, dtype=float), _IG_MEAN_CAP)
    lam = np.asarray(lam, dtype=float)
    if size is None:
        size = np.broadcast_shapes(mu.shape, lam.shape)
    z = rng.standard_normal(size)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        w = mu * z**2 / (2.0 * lam)
        denom = 1.0 + w + np.sqrt(w * (w + 2.0))
        # w large enough that w^2 overflows: the small root tends to the
        # Levy(lam) limit lam/z^2 (and the large root is then never taken,
        # its acceptance probability rounds to zero).
        levy = w >= 1e100
        x_small = np.where(levy, lam / z**2, mu / denom)
        take_small = rng.random(size) < mu / (mu + x_small)
        # x_small * x_large = mu^2, so x_large = mu * denom without forming
        # mu^2 (which under/overflows at extreme mu).
        out = np.where(take_small, x_small, mu * denom)
    if np.ndim(out) == 0:
        return float(out)
    return out


def gig(params: GigParams, rng, size=None):
    """Generalized inverse Gaussian draw, any (p, a, b) with a, b > 0.

    p = -1/2 reduces exactly to inverse_gaussian(sqrt(b/a), b) and uses the
    fast vectorized path; other indices go through scipy's rejection sampler
    (Hoermann-Leydold ratio-of-uniforms family).
    """
    return gig_raw(params.p, params.a, params.b, rng, size=size)


def gig_raw(p, a, b, rng, size=None):
    """gig() on raw arrays; parameters must already be validated positive."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.all(p == -0.5):
        return inverse_gaussian(np.sqrt(b / a), b, rng, size=size)
    return stats.geninvgauss.rvs(
        p, np.sqrt(a * b), scale=np.sqrt(b / a), size=size, random_state=rng
    )


def dirichlet(weights, rng):
    """Dirichlet draw on the simplex."""
    _check_positive("dirichlet", weights)
    return rng.dirichlet(np.asarray(weights, dtype=float))


def beta(a, b, rng, size=None):
    """Beta draw on (0, 1)."""
    _check_positive("beta", a, b)
    return rng.beta(a, b, size=size)


def exponential(rate, rng, size=None):
    """Exponential draw with mean 1/rate."""
    _check_positive("exponential", rate)
    return rng.exponential(1.0 / rate, size=size)


def std_normal_vec(k, rng):
    """k-vector of iid standard normals."""
    if k < 0:
        raise ParameterError(f"std_normal_vec: k must be non-negative, got {k}")
    return rng.standard_normal(k)
