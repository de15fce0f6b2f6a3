"""Joint rate and power allocation when transmit power can follow the fading.

For weights ``mu`` and power prices ``lam`` the per-state problem

    maximize  mu'r - lam'p   subject to  r in C_g(p, h)

is solved by stacking received power in interference levels.  Level ``z``
(received power of the users decoded after it) is worth
``mu_i / (2 (N0 + z)) - lam_i / h_i`` per unit of received power to user
``i``; each level goes to the user with the largest positive value.  In the
variable ``x = 1 / (2 (N0 + z))`` these values are lines, so every user owns
at most one contiguous band of levels.

Averaging over the fading law gives the expected power and rate integrals
(outer integral over the level ``z``, inner over the winner's own gain).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .capacity import Scenario
from .fading import ContinuityError, FadingModel, TAIL_PROB

QUAD_TOL = 1e-8
INNER_TOL = 1e-11
FIXED_POINT_DAMPING = 0.5
FIXED_POINT_ITERS = 60
BISECTION_SWEEPS = 50


class MultiplierConvergenceError(RuntimeError):
    """The multiplier search stopped without meeting the power budget."""

    def __init__(self, message, multipliers, residuals):
        super().__init__(f"{message}; relative residuals {np.round(residuals, 8).tolist()}")
        self.multipliers = multipliers
        self.residuals = residuals


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerBudget:
    """Per-user long-run average power limits."""

    average: np.ndarray

    def __post_init__(self):
        avg = np.array(self.average, dtype=float).reshape(-1)
        if np.any(avg <= 0) or not np.all(np.isfinite(avg)):
            raise ValueError("average powers must be positive and finite")
        avg.setflags(write=False)
        object.__setattr__(self, "average", avg)


@dataclass(frozen=True)
class StateAllocation:
    """Rates and powers for one channel state.

    ``bands`` lists ``(user, z_low, z_high)`` interference intervals in
    increasing ``z``; the user with the highest band is decoded first.
    """

    rates: np.ndarray
    powers: np.ndarray
    bands: tuple = ()

    def objective(self, mu, lam) -> float:
        return float(np.dot(mu, self.rates) - np.dot(lam, self.powers))


def _check_weights(mu, lam, m):
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if mu.shape != (m,) or lam.shape != (m,):
        raise ValueError("mu and lambda must have one entry per user")
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be nonnegative and finite")
    return mu, lam


def per_state_allocation(scenario: Scenario, gains, mu, lam) -> StateAllocation:
    """Optimal ``(r, p)`` for one state ``h`` (ties go to the lower user index)."""
    m = scenario.num_users
    mu, lam = _check_weights(mu, lam, m)
    h = np.asarray(gains, dtype=float)
    if h.shape != (m,) or np.any(h < 0):
        raise ValueError("gains must be a nonnegative vector with one entry per user")
    if np.any((lam == 0) & (h > 0)):
        raise ValueError("a zero power price with a positive gain makes the objective unbounded")
    n0 = scenario.noise
    live = h > 0
    price = np.full(m, math.inf)
    price[live] = lam[live] / h[live]
    # Level where user i's marginal value reaches zero.
    top = np.where(live, mu / (2 * price) - n0, -math.inf) if np.any(live) else np.full(m, -math.inf)
    z_max = float(np.max(top)) if np.any(live) else -math.inf
    rates, powers = np.zeros(m), np.zeros(m)
    if not z_max > 0:
        return StateAllocation(rates, powers, ())

    cuts = {0.0, z_max}
    cuts.update(float(t) for t in top if 0 < t < z_max)
    users = np.flatnonzero(live)
    for a_pos, i in enumerate(users):
        for j in users[a_pos + 1:]:
            if mu[i] != mu[j]:
                x = (price[i] - price[j]) / (mu[i] - mu[j])
                if x > 0:
                    z = 1.0 / (2 * x) - n0
                    if 0 < z < z_max:
                        cuts.add(float(z))
    cuts = sorted(cuts)

    bands = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        mid = 0.5 * (lo + hi)
        val = np.where(live, mu / (2 * (n0 + mid)) - price, -math.inf)
        k = int(np.argmax(val))
        if not val[k] > 0:
            continue
        if bands and bands[-1][0] == k and bands[-1][2] == lo:
            bands[-1] = (k, bands[-1][1], hi)
        else:
            bands.append((k, lo, hi))
    for k, lo, hi in bands:
        powers[k] += (hi - lo) / h[k]
        rates[k] += 0.5 * math.log((n0 + hi) / (n0 + lo))
    return StateAllocation(rates, powers, tuple(bands))


def _require_product_law(fading: FadingModel):
    if not fading.is_independent:
        raise ValueError("power-control integrals need independent users")
    if not fading.is_continuous:
        raise ContinuityError("power-control integrals need fading laws with densities")


class _Integrals:
    """Expected power and rate of each user under prices ``lam`` and weights ``mu``."""

    def __init__(self, scenario: Scenario, fading: FadingModel, mu, lam):
        _require_product_law(fading)
        self.n0 = scenario.noise
        self.margs = fading.marginals
        self.mu, self.lam = _check_weights(mu, lam, fading.num_users)
        if np.any(self.lam == 0):
            raise ValueError("lambda must be positive for fading laws with unbounded support")
        self.h_hi = [g.upper(TAIL_PROB) for g in self.margs]

    def _loser_prob(self, i, h, c):
        """Probability that every other user values level ``N0 + z = c`` less than user ``i``."""
        out = 1.0
        lam, mu = self.lam, self.mu
        for k, g in enumerate(self.margs):
            if k == i:
                continue
            den = 2 * lam[i] * c + (mu[k] - mu[i]) * h
            if den > 0:
                out *= g.cdf1(2 * lam[k] * h * c / den)
                if out == 0.0:
                    break
        return out

    def _kinks(self, i, c, lo, hi):
        """Gains of user ``i`` where some competitor's CDF argument hits a support edge."""
        pts = []
        lam, mu = self.lam, self.mu
        for k, g in enumerate(self.margs):
            if k == i:
                continue
            if mu[k] < mu[i]:
                pts.append(2 * lam[i] * c / (mu[i] - mu[k]))
            for edge in g.support():
                if 0 < edge < math.inf:
                    den = 2 * lam[k] * c - edge * (mu[k] - mu[i])
                    if den > 0:
                        pts.append(2 * edge * lam[i] * c / den)
        return sorted(p for p in pts if lo < p < hi)

    def _inner(self, i, z, weight):
        c = self.n0 + z
        g = self.margs[i]
        lo = max(2 * self.lam[i] * c / self.mu[i], g.support()[0])
        hi = self.h_hi[i]
        if not hi > lo:
            return 0.0
        if weight == "power":
            f = lambda h: self._loser_prob(i, h, c) * g.pdf1(h) / h
        else:
            f = lambda h: self._loser_prob(i, h, c) * g.pdf1(h)
        pts = self._kinks(i, c, lo, hi)
        val, err = _quad(f, lo, hi, INNER_TOL, pts)
        if weight == "rate":
            val /= 2 * c
        return val

    def user(self, i, weight) -> float:
        z_hi = self.mu[i] * self.h_hi[i] / (2 * self.lam[i]) - self.n0
        if not z_hi > 0:
            return 0.0
        val, _ = _quad(lambda z: self._inner(i, z, weight), 0.0, z_hi, QUAD_TOL)
        return val

    def vector(self, weight) -> np.ndarray:
        return np.array([self.user(i, weight) for i in range(len(self.margs))])


def _quad(f, a, b, tol, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            f, a, b, epsabs=tol, epsrel=tol, limit=200,
            points=points or None, full_output=1)[:3]
    if not math.isfinite(val) or err > 1e3 * tol * max(1.0, abs(val)):
        raise QuadratureError(
            f"quadrature on [{a:.6g}, {b:.6g}] failed: value {val!r}, error estimate {err:.3g}")
    return val, err


def expected_power(scenario: Scenario, fading: FadingModel, mu, lam) -> np.ndarray:
    """``E[p_i(H)]`` of the per-state allocation, by nested adaptive quadrature."""
    return _Integrals(scenario, fading, mu, lam).vector("power")


def boundary_rate(scenario: Scenario, fading: FadingModel, mu, lam) -> np.ndarray:
    """Average rate vector ``R*(mu)`` on the boundary of ``C(P_bar)``."""
    return _Integrals(scenario, fading, mu, lam).vector("rate")


@dataclass
class Multipliers:
    """Solution of the average-power equations."""

    values: np.ndarray
    expected_power: np.ndarray
    residual: float
    iterations: int
    method: str

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _initial_guess(fading, budget, mu, n0):
    mean = np.array([g.mean() for g in fading.marginals])
    # Single-user waterfilling at the mean gain: mu / (2 lam) - N0 / h = P_bar.
    return mu / (2 * (budget.average + n0 / mean))


def solve_multipliers(scenario: Scenario, fading: FadingModel, budget: PowerBudget, mu,
                      rtol: float = 1e-7, start=None) -> Multipliers:
    """Power prices ``lam`` with ``E[p_i] = P_bar_i`` for every user.

    Runs the damped update ``lam <- lam * (E[p] / P_bar) ** 0.5`` and falls
    back to cyclic per-user bisection, which is safe because ``E[p_i]`` is
    decreasing in ``lam_i`` and increasing in the other prices.
    """
    _require_product_law(fading)
    m = fading.num_users
    if scenario.num_users != m or budget.average.size != m:
        raise ValueError("scenario, fading model and budget disagree on the number of users")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (m,) or np.any(mu <= 0):
        raise ValueError("mu must be positive")
    target = budget.average
    n0 = scenario.noise
    lam = _initial_guess(fading, budget, mu, n0) if start is None else np.array(start, dtype=float)

    def power(l):
        return expected_power(scenario, fading, mu, l)

    def rel(p):
        return (p - target) / target

    p = power(lam)
    it = 0
    for it in range(1, FIXED_POINT_ITERS + 1):
        if np.max(np.abs(rel(p))) <= rtol:
            return Multipliers(lam, p, float(np.max(np.abs(rel(p)))), it - 1, "fixed-point")
        ratio = np.where(p > 0, p / target, 0.25)
        lam = lam * ratio**FIXED_POINT_DAMPING
        p = power(lam)

    # Fallback: cyclic one-dimensional root finding in log(lam_i).
    for sweep in range(BISECTION_SWEEPS):
        if np.max(np.abs(rel(p))) <= rtol:
            return Multipliers(lam, p, float(np.max(np.abs(rel(p)))), it + sweep, "bisection")
        for i in range(m):
            lam = _solve_one(scenario, fading, mu, lam, i, target[i], rtol)
        p = power(lam)
    res = rel(p)
    if np.max(np.abs(res)) <= rtol:
        return Multipliers(lam, p, float(np.max(np.abs(res))), it + BISECTION_SWEEPS, "bisection")
    raise MultiplierConvergenceError("multiplier search did not converge", lam, res)


def _solve_one(scenario, fading, mu, lam, i, target, rtol):
    def resid(log_l):
        trial = lam.copy()
        trial[i] = math.exp(log_l)
        return _Integrals(scenario, fading, mu, trial).user(i, "power") - target

    hi = math.log(mu[i] * fading.marginals[i].upper(TAIL_PROB) / (2 * scenario.noise))
    lo = math.log(lam[i])
    while resid(lo) <= 0:
        lo -= 1.0
    root = optimize.brentq(resid, lo, hi, xtol=1e-12, rtol=rtol * 1e-2)
    out = lam.copy()
    out[i] = math.exp(root)
    return out


class PowerControlOracle:
    """Linear oracle over ``C(P_bar)``: ``mu -> R*(mu)`` with re-solved prices.

    Results are memoized by the direction of ``mu`` (prices scale with
    ``mu``), and each solve is warm-started from the closest cached
    direction.
    """

    def __init__(self, scenario: Scenario, fading: FadingModel, budget: PowerBudget,
                 rtol: float = 1e-7):
        _require_product_law(fading)
        self.scenario, self.fading, self.budget, self.rtol = scenario, fading, budget, rtol
        self._cache: dict = {}

    def solve(self, mu) -> tuple[np.ndarray, Multipliers]:
        mu = np.asarray(mu, dtype=float)
        scale = float(np.linalg.norm(mu))
        unit = mu / scale
        key = tuple(np.round(unit, 12))
        if key not in self._cache:
            start = None
            if self._cache:
                near = min(self._cache, key=lambda k: np.linalg.norm(np.subtract(k, unit)))
                start = self._cache[near][1].values
            mult = solve_multipliers(self.scenario, self.fading, self.budget, unit,
                                     rtol=self.rtol, start=start)
            rates = boundary_rate(self.scenario, self.fading, unit, mult.values)
            self._cache[key] = (rates, mult)
        rates, mult = self._cache[key]
        scaled = Multipliers(mult.values * scale, mult.expected_power, mult.residual,
                             mult.iterations, mult.method)
        return rates.copy(), scaled

    def __call__(self, mu) -> np.ndarray:
        return self.solve(mu)[0]


def simulate_allocation(scenario: Scenario, gains, mu, lam) -> tuple[np.ndarray, np.ndarray]:
    """Per-state powers and rates ``(n, M)`` over a trace."""
    gains = np.atleast_2d(gains)
    powers = np.empty_like(gains, dtype=float)
    rates = np.empty_like(gains, dtype=float)
    for k, h in enumerate(gains):
        alloc = per_state_allocation(scenario, h, mu, lam)
        powers[k] = alloc.powers
        rates[k] = alloc.rates
    return powers, rates

