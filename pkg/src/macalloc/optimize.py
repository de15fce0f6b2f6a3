"""Conditional-gradient (Frank-Wolfe) maximization of concave utilities.

The solver only needs a linear oracle: a callable mapping a positive weight
vector ``mu`` to a maximizer of ``mu'R`` over the feasible region.  For a
polymatroid that oracle is the greedy vertex; for the power-controlled
region it is :class:`macalloc.allocation.PowerControlOracle`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .capacity import PolymatroidRegion, contains, vertex_for_order
from .utility import Utility

ARMIJO_SHRINK = 0.5
ARMIJO_SLOPE = 0.1
LINE_TOL = 1e-12
RULES = ("limited-max", "armijo")


class FeasibilityError(ValueError):
    pass


def greedy_order(mu) -> np.ndarray:
    """Users by decreasing weight; ties go to the lower index."""
    mu = np.asarray(mu, dtype=float)
    return np.argsort(-mu, kind="stable")


def maximize_linear(region: PolymatroidRegion, mu) -> np.ndarray:
    """Greedy maximizer of ``mu'R`` over a polymatroid (a dominant-face vertex)."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (region.num_users,):
        raise ValueError("weight vector length does not match the region")
    if np.any(mu < 0) or not np.any(mu > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    return vertex_for_order(region, greedy_order(mu))


def maximize_linear_batch(tables: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Row-wise greedy vertices for rank tables ``(n, 2**M)`` and weights ``(n, M)``."""
    n, m = mu.shape
    order = np.argsort(-mu, axis=1, kind="stable")
    masks = np.concatenate(
        [np.zeros((n, 1), dtype=np.int64),
         np.bitwise_or.accumulate(np.left_shift(1, order), axis=1)], axis=1)
    prefix = np.take_along_axis(tables, masks, axis=1)
    out = np.empty((n, m))
    np.put_along_axis(out, order, np.diff(prefix, axis=1), axis=1)
    return out


class PolymatroidOracle:
    """Linear oracle over a fixed polymatroid region."""

    def __init__(self, region: PolymatroidRegion):
        self.region = region

    def __call__(self, mu) -> np.ndarray:
        return maximize_linear(self.region, mu)

    def feasible(self, rates, slack: float = 1e-9) -> bool:
        return contains(self.region, rates, slack)


@dataclass
class Atom:
    """A vertex used by the solver, with the weights that produced it."""

    weight: float
    mu: np.ndarray | None
    vertex: np.ndarray


@dataclass
class FWReport:
    rates: np.ndarray
    gap: float
    iterations: int
    rule: str
    converged: bool
    utilities: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    path: list = field(default_factory=list)
    # Current iterate as a convex combination of oracle outputs.
    atoms: list = field(default_factory=list)

    @property
    def utility(self) -> float:
        return self.utilities[-1]


def line_maximize(slope, tol: float = LINE_TOL) -> float:
    """Maximizer on ``[0, 1]`` of a concave function given its derivative ``slope``.

    Bisects on the sign of the derivative, which keeps full precision where
    comparing function values would stall near the optimum.
    """
    if slope(1.0) >= 0:
        return 1.0
    if slope(0.0) <= 0:
        return 0.0
    a, b = 0.0, 1.0
    while b - a > tol:
        mid = 0.5 * (a + b)
        if slope(mid) > 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def armijo_step(phi: Callable[[float], float], slope: float) -> float:
    """Backtracking from a unit step until the sufficient-increase test holds."""
    f0 = phi(0.0)
    alpha = 1.0
    while alpha > 1e-20:
        if phi(alpha) >= f0 + ARMIJO_SLOPE * alpha * slope:
            return alpha
        alpha *= ARMIJO_SHRINK
    return 0.0


def frank_wolfe(oracle, utility: Utility, start=None, rule: str = "limited-max",
                gap_tol: float = 1e-6, max_iter: int = 100_000) -> FWReport:
    """Maximize ``utility`` over the region behind ``oracle``.

    The default start is ``oracle(1)``.  Iteration stops once the
    Frank-Wolfe gap ``grad u(R)'(Rbar - R)`` is at most ``gap_tol``.
    ``iterations`` counts oracle calls; a call is skipped when the gradient
    has not changed since the previous one.
    """
    if rule not in RULES:
        raise ValueError(f"unknown step rule {rule!r}")
    if gap_tol <= 0:
        raise ValueError("gap_tol must be positive")
    m = utility.num_users
    if start is None:
        mu0 = np.ones(m)
        rates = np.asarray(oracle(mu0), dtype=float)
        atoms = [Atom(1.0, mu0, rates.copy())]
    else:
        rates = np.asarray(start, dtype=float).copy()
        if hasattr(oracle, "feasible") and not oracle.feasible(rates):
            raise FeasibilityError("starting point is outside the region")
        atoms = [Atom(1.0, None, rates.copy())]

    report = FWReport(rates, math.inf, 0, rule, False, atoms=atoms)
    value = float(utility.value(rates))
    report.utilities.append(value)
    report.path.append(rates.copy())
    last_mu, vertex = None, None
    for _ in range(max_iter):
        mu = utility.gradient(rates)
        if last_mu is None or not np.array_equal(mu, last_mu):
            vertex = np.asarray(oracle(mu), dtype=float)
            report.iterations += 1
            last_mu = mu
        direction = vertex - rates
        gap = float(mu @ direction)
        report.gaps.append(gap)
        report.gap = gap
        if gap <= gap_tol:
            report.converged = True
            break
        phi = lambda a: float(utility.value(rates + a * direction))
        if rule == "limited-max":
            alpha = line_maximize(lambda a: float(utility.gradient(rates + a * direction) @ direction))
            if phi(alpha) < value:
                alpha = 0.0
        else:
            alpha = armijo_step(phi, gap)
            if alpha > 0 and not phi(alpha) >= value + ARMIJO_SLOPE * alpha * gap:
                raise AssertionError("Armijo step failed the sufficient-increase test")
        if alpha == 0.0:
            # No progress possible along the direction; the gap is numerical noise.
            report.converged = gap <= 10 * gap_tol
            break
        rates = rates + alpha * direction
        _merge_atom(atoms, alpha, mu, vertex)
        value = float(utility.value(rates))
        report.utilities.append(value)
        report.path.append(rates.copy())
        report.steps.append(alpha)
    report.rates = rates
    return report


def _merge_atom(atoms: list, alpha: float, mu, vertex) -> None:
    for a in atoms:
        a.weight *= 1 - alpha
    for a in atoms:
        if np.array_equal(a.vertex, vertex):
            a.weight += alpha
            break
    else:
        atoms.append(Atom(alpha, np.array(mu), vertex.copy()))
    atoms[:] = [a for a in atoms if a.weight > 0]


def recover_linearization(utility: Utility, rates) -> np.ndarray:
    """Weights ``mu* = grad u(R*)`` whose linear program reproduces ``R*``."""
    mu = utility.gradient(rates)
    if np.any(mu <= 0):
        raise ValueError("utility gradient must be strictly positive")
    return mu


@dataclass
class BatchResult:
    rates: np.ndarray
    gaps: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


def frank_wolfe_batch(tables: np.ndarray, utility: Utility, gap_tol: float = 1e-8,
                      max_iter: int = 10_000) -> BatchResult:
    """Limited-maximization Frank-Wolfe run independently on many polymatroids.

    Each row of ``tables`` is one rank table.  Rows are solved with the same
    arithmetic regardless of how the batch is split.
    """
    tables = np.atleast_2d(np.asarray(tables, dtype=float))
    n = tables.shape[0]
    m = utility.num_users
    rates = maximize_linear_batch(tables, np.ones((n, m)))
    gaps = np.full(n, np.inf)
    iters = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    done = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        r = rates[active]
        mu = utility.gradient(r)
        v = maximize_linear_batch(tables[active], mu)
        iters[active] += 1
        d = v - r
        g = np.einsum("ij,ij->i", mu, d)
        gaps[active] = g
        fin = g <= gap_tol
        done[active[fin]] = True
        keep = ~fin
        active, r, d = active[keep], r[keep], d[keep]
        if active.size == 0:
            break
        alpha = _line_maximize_batch(utility, r, d)
        rates[active] = r + alpha[:, None] * d
        if utility.is_linear:
            # Linear objectives land on the oracle vertex; its gap is zero.
            gaps[active] = 0.0
            done[active] = True
            break
    return BatchResult(rates, gaps, iters, done)


def _line_maximize_batch(utility: Utility, r: np.ndarray, d: np.ndarray,
                         tol: float = LINE_TOL) -> np.ndarray:
    def slope(a):
        return np.einsum("ij,ij->i", utility.gradient(r + a[:, None] * d), d)

    k = r.shape[0]
    a, b = np.zeros(k), np.ones(k)
    steps = int(math.ceil(math.log2(1.0 / tol)))
    for _ in range(steps):
        mid = 0.5 * (a + b)
        up = slope(mid) > 0
        a = np.where(up, mid, a)
        b = np.where(up, b, mid)
    alpha = 0.5 * (a + b)
    alpha = np.where(slope(np.ones(k)) >= 0, 1.0, alpha)
    return np.where(slope(np.zeros(k)) <= 0, 0.0, alpha)
