"""Bounds on how much the greedy policy loses against the optimal policy.

Everything here works with powers normalized by the noise, ``Gamma_S``
having entries ``P_i / N0`` on ``S`` and zero elsewhere, so all capacity
quantities are in nats.

Two parameterized bounds are evaluated over a grid of ``eps`` in ``(0, 1]``:

* the Lipschitz/quadratic-growth bound
  ``eps u* + (1 - eps) B [sqrt(delta) + sqrt(B / A)] sqrt(delta)`` with
  ``delta = sigma_H / sqrt(eps)``;
* the curvature bound ``eps u* + (1 - eps) r(eps)^2 Omega / 2``.

``A`` and ``B`` have no closed form.  They are estimated over sampled
states whose region lies within ``delta`` of the averaged region, so they
are statistical estimates rather than guarantees.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .capacity import Scenario, hausdorff_distances, membership, rank_tables
from .fading import FadingModel, STREAM_PROBES, moments, sample, uniform_draws
from .optimize import frank_wolfe_batch, maximize_linear_batch
from .policy import GapResult, performance_gap
from .utility import Utility

A_FLOOR = 1e-12
PROBES_PER_STATE = 16


class BoundRegimeWarning(UserWarning):
    """The variance bound was clamped outside the regime it was derived for."""


def gamma_vector(scenario: Scenario, users) -> np.ndarray:
    out = np.zeros(scenario.num_users)
    idx = list(users)
    out[idx] = scenario.snr[idx]
    return out


def _ys_bound(z_mean: float, z_var: float) -> float:
    root = math.sqrt(2 * math.log1p(z_mean)) - math.sqrt(z_var) / 2
    if root < 0:
        warnings.warn(
            f"variance bound bracket clamped at 0 (mean SNR {z_mean:.4g}, variance {z_var:.4g})",
            BoundRegimeWarning, stacklevel=3)
        root = 0.0
    return z_var / 4 * (1 + ((1 + z_mean) * root) ** 2)


def variance_bound_ys(scenario: Scenario, users, mean_gain, cov) -> float:
    """Upper bound on ``Var(0.5 log(1 + sum_{i in S} H_i P_i / N0))`` for ``S = users``."""
    users = list(users)
    if not users:
        raise ValueError("subset must be nonempty")
    g = gamma_vector(scenario, users)
    cov = np.asarray(cov, dtype=float)
    return _ys_bound(float(g @ np.asarray(mean_gain, dtype=float)), float(g @ cov @ g))


def sigma_h_squared(scenario: Scenario, mean_gain, cov) -> float:
    """Scenario constant ``sigma_H^2``: the sum of the subset variance bounds."""
    cov = np.asarray(cov, dtype=float)
    if np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -1e-12:
        raise ValueError("covariance has a negative eigenvalue")
    mem = membership(scenario.num_users)
    total = 0.0
    for mask in range(1, mem.shape[0]):
        total += variance_bound_ys(scenario, np.flatnonzero(mem[mask]), mean_gain, cov)
    return total


def chebyshev_region_bound(sigma_h2: float, delta: float) -> float:
    """Bound on ``Pr{d_H(C_g(P, H), C_a(P)) > delta}``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return min(1.0, sigma_h2 / delta**2)


def opt_distance_bound(a: float, b: float, delta: float) -> float:
    """Distance between utility maximizers of two regions within ``delta``."""
    if a <= 0 or b <= 0:
        raise ValueError("A and B must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return math.sqrt(delta) * (math.sqrt(delta) + math.sqrt(b / a))


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise ValueError("epsilon must lie in (0, 1]")


def theorem1_bound(eps: float, u_star: float, a: float, b: float, sigma_h: float) -> float:
    """Lipschitz/quadratic-growth bound on the greedy performance loss."""
    _check_eps(eps)
    if u_star < 0:
        raise ValueError("the bound needs a nonnegative utility")
    delta = sigma_h / math.sqrt(eps)
    return eps * u_star + (1 - eps) * b * (math.sqrt(delta) + math.sqrt(b / a)) * math.sqrt(delta)


def theorem2_bound(eps: float, u_star: float, r_eps: float, omega: float) -> float:
    """Curvature bound on the greedy performance loss."""
    _check_eps(eps)
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return eps * u_star + 0.5 * (1 - eps) * r_eps**2 * omega


def face_widths(tables: np.ndarray) -> np.ndarray:
    """Per-state range ``f({i}) + f(M - {i}) - f(M)`` of each rate on the dominant face."""
    full = tables.shape[1] - 1
    m = full.bit_length()
    single = 1 << np.arange(m)
    return tables[:, single] + tables[:, full ^ single] - tables[:, [full]]


def face_floor(tables: np.ndarray) -> np.ndarray:
    """Per-state smallest value ``f(M) - f(M - {i})`` of each rate on the dominant face."""
    full = tables.shape[1] - 1
    m = full.bit_length()
    single = 1 << np.arange(m)
    return tables[:, [full]] - tables[:, full ^ single]


def width_term(tables: np.ndarray) -> tuple[float, float]:
    """``||E[face widths]||`` and its delta-method standard error."""
    w = face_widths(tables)
    mean = w.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0 or w.shape[0] < 2:
        return norm, 0.0
    proj = w @ (mean / norm)
    return norm, float(proj.std(ddof=1) / math.sqrt(w.shape[0]))


def r_epsilon(scenario: Scenario, fading: FadingModel, eps: float, sigma_h: float,
              n: int, seed: int = 0) -> tuple[float, float]:
    """Radius ``r(eps)`` and the standard error of its Monte Carlo part."""
    _check_eps(eps)
    tables = rank_tables(scenario, sample(fading, n, seed).gains)
    width, se = width_term(tables)
    return math.sqrt(scenario.num_users) * sigma_h / math.sqrt(eps) + width, se


@dataclass
class StateStatistics:
    """Per-state quantities reused for every ``eps`` of a sweep."""

    distance: np.ndarray        # d_H(C_g(P, h), C_a(P))
    floor: np.ndarray           # (n, M) lowest dominant-face coordinates
    growth: np.ndarray          # smallest |u(Rbar) - u(R)| / ||Rbar - R||^2 over probes
    average_floor: np.ndarray   # lowest dominant-face coordinates of C_a(P)


def state_statistics(tables: np.ndarray, average: np.ndarray, utility: Utility,
                     seed: int, greedy: np.ndarray | None = None,
                     probes: int = PROBES_PER_STATE) -> StateStatistics:
    n, m = tables.shape[0], utility.num_users
    if greedy is None:
        greedy = frank_wolfe_batch(tables, utility).rates
    draws = uniform_draws(n, (probes, 2 * m + 2), seed, STREAM_PROBES)
    best = np.full(n, np.inf)
    u_greedy = utility.value(greedy)
    for k in range(probes):
        d = draws[:, k]
        v1 = maximize_linear_batch(tables, d[:, :m])
        if k % 2 == 0:
            # Along the segment from the greedy point towards a random vertex.
            probe = greedy + d[:, [2 * m]] * (v1 - greedy)
        else:
            v2 = maximize_linear_batch(tables, d[:, m:2 * m])
            mix = d[:, [2 * m]] * v1 + (1 - d[:, [2 * m]]) * v2
            probe = d[:, [2 * m + 1]] * mix
        dist2 = np.sum((greedy - probe) ** 2, axis=1)
        ok = dist2 > 1e-20
        ratio = np.full(n, np.inf)
        ratio[ok] = np.abs(u_greedy[ok] - utility.value(probe[ok])) / dist2[ok]
        best = np.minimum(best, ratio)
    return StateStatistics(
        distance=hausdorff_distances(tables, average),
        floor=face_floor(tables),
        growth=best,
        average_floor=face_floor(average[None, :])[0],
    )


@dataclass
class Constants:
    a: float
    b: float
    n_states: int
    n_event: int
    vacuous: bool


def constants_from_statistics(stats: StateStatistics, utility: Utility, delta: float) -> Constants:
    """``A`` and ``B`` over the sampled states with ``d_H <= delta``.

    ``B`` bounds the gradient norm over the box above the lowest dominant-face
    coordinates seen, which contains every segment between the averaged
    region's face and the sampled faces.  ``A`` is the smallest observed
    quadratic-growth ratio.
    """
    event = stats.distance <= delta
    k = int(event.sum())
    lower = stats.average_floor
    if k:
        lower = np.minimum(lower, stats.floor[event].min(axis=0))
    b = utility.lipschitz_bound(lower)
    a = float(stats.growth[event].min()) if k else math.nan
    vacuous = not (k and math.isfinite(a) and a > A_FLOOR)
    if vacuous:
        a = A_FLOOR
    return Constants(a, b, stats.distance.size, k, vacuous)


def estimate_constants(scenario: Scenario, fading: FadingModel, utility: Utility, eps: float,
                       n: int, seed: int = 0) -> Constants:
    """Estimate ``A(eps)`` and ``B(eps)`` from ``n`` sampled states."""
    _check_eps(eps)
    gains = sample(fading, n, seed).gains
    tables = rank_tables(scenario, gains)
    average = tables.mean(axis=0)
    mean_gain, cov = moments(fading)
    sigma_h = math.sqrt(sigma_h_squared(scenario, mean_gain, cov))
    stats = state_statistics(tables, average, utility, seed)
    return constants_from_statistics(stats, utility, sigma_h / math.sqrt(eps))


@dataclass
class BoundRow:
    epsilon: float
    delta: float
    a: float
    b: float
    r: float
    omega: float
    bound1: float
    bound2: float
    min_bound: float
    vacuous: bool
    n_event: int


@dataclass
class BoundReport:
    sigma_h2: float
    u_star: float
    gap: float
    gap_se: float
    rows: list
    n_samples: int
    seed: int
    width: float
    width_se: float
    omega_method: str = "closed-form"
    gap_result: GapResult | None = field(default=None, repr=False)

    @property
    def sigma_h(self) -> float:
        return math.sqrt(self.sigma_h2)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def minimizer(self, name: str = "min_bound") -> tuple[float, float]:
        """``(eps, value)`` at the smallest entry of a bound column."""
        vals = self.column(name)
        k = int(np.argmin(vals))
        return self.rows[k].epsilon, float(vals[k])


def bound_sweep(scenario: Scenario, fading: FadingModel, utility: Utility, eps_grid,
                n: int, seed: int = 0, workers: int = 1) -> BoundReport:
    """Evaluate both bounds over ``eps_grid`` next to the measured gap."""
    grid = np.sort(np.asarray(eps_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("epsilon grid is empty")
    for e in grid:
        _check_eps(e)
    mean_gain, cov = moments(fading)
    s2 = sigma_h_squared(scenario, mean_gain, cov)
    sigma_h = math.sqrt(s2)
    gap = performance_gap(scenario, fading, utility, n, seed, workers)
    u_star = gap.u_star
    tables = rank_tables(scenario, gap.gains)
    greedy = gap.greedy.samples
    stats = state_statistics(tables, gap.region.rank, utility, seed, greedy=greedy)
    width, width_se = width_term(tables)
    rows = []
    for eps in grid:
        eps = float(eps)
        delta = sigma_h / math.sqrt(eps)
        const = constants_from_statistics(stats, utility, delta)
        r = math.sqrt(scenario.num_users) * delta + width
        omega = utility.max_neg_hessian_eig(gap.optimum, r)
        b1 = math.inf if const.vacuous else theorem1_bound(eps, u_star, const.a, const.b, sigma_h)
        b2 = theorem2_bound(eps, u_star, r, omega)
        rows.append(BoundRow(eps, delta, const.a, const.b, r, omega, b1, b2, min(b1, b2),
                             const.vacuous, const.n_event))
    return BoundReport(s2, u_star, gap.gap, gap.gap_se, rows, n, seed, width, width_se,
                       gap_result=gap)


def figure1(scenario: Scenario, fading: FadingModel, utility: Utility, eps_grid,
            scales, n: int, seed: int = 0, workers: int = 1) -> list[tuple[float, BoundReport]]:
    """One bound sweep per covariance scale ``c`` (fading covariance ``c K``)."""
    return [(float(c), bound_sweep(scenario, fading.scaled(c), utility, eps_grid, n, seed, workers))
            for c in scales]
