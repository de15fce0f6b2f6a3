"""Stationary fading laws and reproducible Monte Carlo traces.

Each user's power gain follows one of a few marginal laws.  Users are either
independent or coupled through a Gaussian copula whose latent correlation is
fitted so the gains have a requested covariance matrix.

Traces are drawn in fixed-size blocks, each from its own seeded substream, so
the rows of a trace do not depend on how many workers produced them and the
first ``n`` rows of a longer trace equal the trace of length ``n``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

BLOCK_SIZE = 4096
TAIL_PROB = 1e-8

# Substream tags; traces for different purposes never share random numbers.
STREAM_FADING = 0
STREAM_PROBES = 1
STREAM_CHECK = 2


class ContinuityError(ValueError):
    """A density was requested from a law without one."""


class Marginal:
    """Base class for a per-user gain law on ``[0, inf)``."""

    continuous = True

    def mean(self) -> float:
        raise NotImplementedError

    def var(self) -> float:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    # Scalar fast paths used inside nested quadrature.
    def cdf1(self, x: float) -> float:
        return float(self.cdf(x))

    def pdf1(self, x: float) -> float:
        return float(self.pdf(x))

    def support(self) -> tuple[float, float]:
        return 0.0, math.inf

    def upper(self, tail: float = TAIL_PROB) -> float:
        """Finite upper integration limit: the ``1 - tail`` quantile or the support end."""
        hi = self.support()[1]
        return hi if math.isfinite(hi) else float(self.ppf(1.0 - tail))

    def scaled(self, c: float) -> "Marginal":
        """Same mean, variance multiplied by ``c``."""
        raise NotImplementedError(f"{type(self).__name__} cannot be variance-scaled")


@dataclass(frozen=True)
class Exponential(Marginal):
    """Rayleigh fading power gain: exponential with the given mean."""

    mean_gain: float

    def __post_init__(self):
        if not (self.mean_gain > 0 and math.isfinite(self.mean_gain)):
            raise ValueError("exponential mean must be positive and finite")

    def mean(self):
        return self.mean_gain

    def var(self):
        return self.mean_gain**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0) / self.mean_gain), 0.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.exp(-np.maximum(x, 0) / self.mean_gain) / self.mean_gain, 0.0)

    def ppf(self, u):
        return -self.mean_gain * np.log1p(-np.asarray(u, dtype=float))

    def cdf1(self, x):
        return -math.expm1(-x / self.mean_gain) if x > 0 else 0.0

    def pdf1(self, x):
        return math.exp(-x / self.mean_gain) / self.mean_gain if x >= 0 else 0.0


@dataclass(frozen=True)
class Uniform(Marginal):
    low: float
    high: float

    def __post_init__(self):
        if not (0 <= self.low < self.high and math.isfinite(self.high)):
            raise ValueError("uniform law needs 0 <= low < high < inf")

    def mean(self):
        return 0.5 * (self.low + self.high)

    def var(self):
        return (self.high - self.low) ** 2 / 12.0

    def support(self):
        return self.low, self.high

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def ppf(self, u):
        return self.low + (self.high - self.low) * np.asarray(u, dtype=float)

    def cdf1(self, x):
        if x <= self.low:
            return 0.0
        if x >= self.high:
            return 1.0
        return (x - self.low) / (self.high - self.low)

    def pdf1(self, x):
        return 1.0 / (self.high - self.low) if self.low <= x <= self.high else 0.0

    def scaled(self, c):
        m, half = self.mean(), 0.5 * (self.high - self.low) * math.sqrt(c)
        return Uniform(m - half, m + half)


@dataclass(frozen=True)
class LogNormal(Marginal):
    """``exp(N(mu, sigma^2))``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ValueError("lognormal law needs finite mu and sigma > 0")

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)

    def var(self):
        return math.expm1(self.sigma**2) * math.exp(2 * self.mu + self.sigma**2)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0)) - self.mu) / self.sigma
        return special.ndtr(z)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.maximum(x, 1e-300)
        z = (np.log(pos) - self.mu) / self.sigma
        dens = np.exp(-0.5 * z * z) / (pos * self.sigma * math.sqrt(2 * math.pi))
        return np.where(x > 0, dens, 0.0)

    def ppf(self, u):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))

    def cdf1(self, x):
        if x <= 0:
            return 0.0
        return 0.5 * math.erfc(-(math.log(x) - self.mu) / (self.sigma * math.sqrt(2)))

    def pdf1(self, x):
        if x <= 0:
            return 0.0
        z = (math.log(x) - self.mu) / self.sigma
        return math.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2 * math.pi))

    def scaled(self, c):
        m = self.mean()
        s2 = math.log1p(c * math.expm1(self.sigma**2))
        return LogNormal(math.log(m) - 0.5 * s2, math.sqrt(s2))


@dataclass(frozen=True)
class PointMass(Marginal):
    """Deterministic gain; only for degenerate test scenarios."""

    value: float
    continuous = False

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ValueError("point-mass gain must be positive and finite")

    def mean(self):
        return self.value

    def var(self):
        return 0.0

    def support(self):
        return self.value, self.value

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.value, 1.0, 0.0)

    def pdf(self, x):
        raise ContinuityError("a point-mass law has no density")

    def pdf1(self, x):
        raise ContinuityError("a point-mass law has no density")

    def ppf(self, u):
        return np.full(np.shape(u), self.value)

    def scaled(self, c):
        return self


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(80)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def _copula_covariance(a: Marginal, b: Marginal, rho: float) -> float:
    """Covariance of ``(a.ppf(Phi(X)), b.ppf(Phi(Y)))`` for standard normals with correlation ``rho``."""
    x = _GH_NODES[:, None]
    y = rho * x + math.sqrt(max(0.0, 1 - rho * rho)) * _GH_NODES[None, :]
    w = _GH_WEIGHTS[:, None] * _GH_WEIGHTS[None, :]
    # Outer nodes reach |x| ~ 16 where ndtr rounds to 1; keep quantiles finite.
    ga = a.ppf(np.clip(special.ndtr(x), 1e-300, 1 - 2**-53))
    gb = b.ppf(np.clip(special.ndtr(y), 1e-300, 1 - 2**-53))
    return float(np.sum(w * ga * gb)) - a.mean() * b.mean()


def _latent_correlation(a: Marginal, b: Marginal, target: float) -> float:
    if target == 0:
        return 0.0
    lo, hi = -0.999999, 0.999999
    f = lambda r: _copula_covariance(a, b, r) - target
    if f(lo) > 0 or f(hi) < 0:
        raise ValueError(
            f"covariance {target} is not attainable by a Gaussian copula of these marginals"
        )
    return optimize.brentq(f, lo, hi, xtol=1e-13)


@dataclass(frozen=True)
class FadingModel:
    """Joint law of the gain vector ``H``.

    ``latent_corr`` is ``None`` for independent users, otherwise the
    correlation matrix of the Gaussian copula.
    """

    marginals: tuple
    latent_corr: np.ndarray | None = None
    covariance: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        margs = tuple(self.marginals)
        if not margs:
            raise ValueError("a fading model needs at least one user")
        object.__setattr__(self, "marginals", margs)
        if self.covariance is None:
            cov = np.diag([m.var() for m in margs])
            object.__setattr__(self, "covariance", cov)
        if self.latent_corr is not None:
            chol = np.linalg.cholesky(self.latent_corr + 1e-12 * np.eye(len(margs)))
            object.__setattr__(self, "_chol", chol)

    @classmethod
    def independent(cls, marginals) -> "FadingModel":
        return cls(tuple(marginals))

    @classmethod
    def with_covariance(cls, marginals, covariance, check_samples: int = 20000,
                        seed: int = 0) -> "FadingModel":
        """Couple the marginals through a Gaussian copula reproducing ``covariance``.

        The fitted model is checked by Monte Carlo: every sample covariance
        entry must be within 3 standard errors of the target.
        """
        margs = tuple(marginals)
        k = np.array(covariance, dtype=float)
        m = len(margs)
        if k.shape != (m, m):
            raise ValueError("covariance must be an M x M matrix")
        if not np.allclose(k, k.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(k)) < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        var = np.array([g.var() for g in margs])
        if not np.allclose(np.diag(k), var, rtol=1e-9, atol=1e-12):
            raise ValueError("covariance diagonal must equal the marginal variances")
        if np.allclose(k, np.diag(var), atol=0):
            return cls(margs)
        corr = np.eye(m)
        for i in range(m):
            for j in range(i + 1, m):
                if k[i, j] != 0 and (var[i] == 0 or var[j] == 0):
                    raise ValueError("a point-mass user cannot be correlated")
                corr[i, j] = corr[j, i] = _latent_correlation(margs[i], margs[j], k[i, j])
        if np.min(np.linalg.eigvalsh(corr)) < -1e-10:
            raise ValueError("the fitted copula correlation is not positive semidefinite")
        model = cls(margs, corr, k)
        model._check_covariance(check_samples, seed)
        return model

    def _check_covariance(self, n: int, seed: int) -> None:
        g = sample(self, n, seed, stream=STREAM_CHECK).gains
        d = g - g.mean(axis=0)
        prods = d[:, :, None] * d[:, None, :]
        est = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / math.sqrt(n)
        bad = np.abs(est - self.covariance) > 3 * se + 1e-12
        if np.any(bad):
            raise ValueError(
                "copula fit failed the Monte Carlo covariance check:\n"
                f"target {self.covariance.tolist()}\nsampled {est.tolist()}"
            )

    @property
    def num_users(self) -> int:
        return len(self.marginals)

    @property
    def is_independent(self) -> bool:
        return self.latent_corr is None

    @property
    def is_continuous(self) -> bool:
        return all(m.continuous for m in self.marginals)

    def scaled(self, c: float) -> "FadingModel":
        """Model with the same mean and covariance ``c * K``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        margs = tuple(m.scaled(c) for m in self.marginals)
        if self.is_independent:
            return FadingModel(margs)
        return FadingModel.with_covariance(margs, c * self.covariance)

    def _block(self, seed: int, stream: int, index: int) -> np.ndarray:
        rng = np.random.default_rng([seed, stream, index])
        m = self.num_users
        if self.latent_corr is None:
            u = rng.random((BLOCK_SIZE, m))
        else:
            u = special.ndtr(rng.standard_normal((BLOCK_SIZE, m)) @ self._chol.T)
        # Keep u inside (0, 1) so quantile transforms stay finite.
        u = np.clip(u, 1e-300, 1 - 2**-53)
        return np.column_stack([g.ppf(u[:, i]) for i, g in enumerate(self.marginals)])


@dataclass(frozen=True)
class FadingTrace:
    gains: np.ndarray
    seed: int

    @property
    def n_samples(self) -> int:
        return self.gains.shape[0]

    def to_csv(self, path) -> None:
        m = self.gains.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_index"] + [f"h_{i + 1}" for i in range(m)])
            for k, row in enumerate(self.gains):
                w.writerow([k] + [repr(float(x)) for x in row])


def sample(model: FadingModel, n: int, seed: int = 0, stream: int = STREAM_FADING,
           workers: int = 1) -> FadingTrace:
    """Draw ``n`` i.i.d. gain vectors; identical for any ``workers``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    blocks = range(-(-n // BLOCK_SIZE))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: model._block(seed, stream, b), blocks))
    else:
        parts = [model._block(seed, stream, b) for b in blocks]
    gains = np.concatenate(parts)[:n]
    gains.setflags(write=False)
    return FadingTrace(gains, seed)


def uniform_draws(n: int, shape: tuple, seed: int, stream: int = STREAM_PROBES) -> np.ndarray:
    """Uniform array ``(n, *shape)`` drawn blockwise like :func:`sample`.

    Row ``k`` depends only on ``(seed, stream, k)``, so shorter draws are
    prefixes of longer ones.
    """
    blocks = [np.random.default_rng([seed, stream, b]).random((BLOCK_SIZE, *shape))
              for b in range(-(-n // BLOCK_SIZE))]
    return np.concatenate(blocks)[:n]


def marginal_cdf(model: FadingModel, user: int, x):
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    return model.marginals[user].cdf(x)


def marginal_pdf(model: FadingModel, user: int, x):
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    return model.marginals[user].pdf(x)


def moments(model: FadingModel) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector ``H_bar`` and covariance matrix ``K`` of the gains."""
    mean = np.array([m.mean() for m in model.marginals])
    cov = np.array(model.covariance, dtype=float)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise ValueError("fading law has no finite second moments")
    return mean, cov


def from_config(table: dict, num_users: int | None = None) -> FadingModel:
    """Build a model from a config table such as ``{type="exponential", mean=[1, 0.5]}``."""
    kind = table.get("type")

    def vec(name):
        if name not in table:
            raise KeyError(f"fading.{name}")
        v = table[name]
        return list(v) if isinstance(v, (list, tuple)) else [v] * (num_users or 1)

    if kind == "exponential":
        margs = [Exponential(float(m)) for m in vec("mean")]
    elif kind == "uniform":
        margs = [Uniform(float(a), float(b)) for a, b in zip(vec("low"), vec("high"), strict=True)]
    elif kind == "lognormal":
        margs = [LogNormal(float(a), float(b)) for a, b in zip(vec("mu"), vec("sigma"), strict=True)]
    elif kind == "point_mass":
        margs = [PointMass(float(v)) for v in vec("value")]
    else:
        raise KeyError("fading.type")
    if num_users is not None and len(margs) != num_users:
        raise ValueError(f"fading parameters describe {len(margs)} users, expected {num_users}")
    if "covariance" in table:
        return FadingModel.with_covariance(margs, table["covariance"])
    return FadingModel.independent(margs)
