"""Rate policies with fixed transmit powers, and their Monte Carlo evaluation.

The greedy policy maximizes the utility separately in every channel state.
Its performance is the utility of its average rate, which is compared with
the optimum ``u(R*)`` over the averaged region.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .capacity import PolymatroidRegion, Scenario, averaged_ranks, rank_tables
from .fading import FadingModel, sample
from .optimize import (FWReport, PolymatroidOracle, frank_wolfe, frank_wolfe_batch,
                       maximize_linear_batch)
from .utility import Utility

CHUNK = 8192
POLICY_KINDS = ("greedy", "linear-greedy", "fixed", "mixture")


@dataclass(frozen=True)
class RatePolicy:
    """Map from channel state to a rate vector in ``C_g(P, h)``.

    * ``greedy``: maximize ``utility`` per state.
    * ``linear-greedy``: greedy vertex for ``weights`` per state.
    * ``fixed``: the constant vector ``rates``.
    * ``mixture``: per state, the convex combination of greedy vertices for
      each weight vector in ``components`` (pairs ``(share, weights)``).
    """

    kind: str
    utility: Utility | None = None
    weights: np.ndarray | None = None
    rates: np.ndarray | None = None
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def greedy(cls, utility: Utility) -> "RatePolicy":
        return cls("greedy", utility=utility)

    @classmethod
    def linear_greedy(cls, weights) -> "RatePolicy":
        return cls("linear-greedy", weights=np.asarray(weights, dtype=float))

    @classmethod
    def fixed(cls, rates) -> "RatePolicy":
        return cls("fixed", rates=np.asarray(rates, dtype=float))

    @classmethod
    def mixture(cls, components) -> "RatePolicy":
        comps = tuple((float(w), np.asarray(mu, dtype=float)) for w, mu in components)
        total = sum(w for w, _ in comps)
        if not comps or any(w < 0 for w, _ in comps) or abs(total - 1) > 1e-9:
            raise ValueError("mixture shares must be nonnegative and sum to 1")
        return cls("mixture", components=comps)

    @classmethod
    def optimal_witness(cls, report: FWReport) -> "RatePolicy":
        """Policy whose mean rate is the solver's optimum over the averaged region.

        Each vertex the solver used is the greedy vertex of the averaged
        region for some weight vector; the same weights applied per state
        average to exactly that vertex, so the solver's convex weights carry
        over state by state.
        """
        if any(a.mu is None for a in report.atoms):
            raise ValueError("report was started from a point with no vertex decomposition")
        return cls.mixture([(a.weight, a.mu) for a in report.atoms])

    def apply(self, tables: np.ndarray, gap_tol: float = 1e-8) -> np.ndarray:
        """Rates ``(n, M)`` for rank tables ``(n, 2**M)``."""
        n = tables.shape[0]
        m = int(round(math.log2(tables.shape[1])))
        if self.kind == "greedy":
            return frank_wolfe_batch(tables, self.utility, gap_tol=gap_tol).rates
        if self.kind == "linear-greedy":
            return maximize_linear_batch(tables, np.broadcast_to(self.weights, (n, m)))
        if self.kind == "fixed":
            return np.broadcast_to(self.rates, (n, m)).copy()
        out = np.zeros((n, m))
        for share, mu in self.components:
            out += share * maximize_linear_batch(tables, np.broadcast_to(mu, (n, m)))
        return out


def greedy_rate(scenario: Scenario, gains, utility: Utility, gap_tol: float = 1e-8) -> np.ndarray:
    """Utility-maximizing rate vector in ``C_g(P, h)`` for a single state."""
    gains = np.asarray(gains, dtype=float)
    tables = rank_tables(scenario, gains)
    if not np.any(tables > 0):
        return np.zeros(scenario.num_users)
    region = PolymatroidRegion(scenario.num_users, tables)
    return frank_wolfe(PolymatroidOracle(region), utility, gap_tol=gap_tol).rates


def apply_policy(scenario: Scenario, gains: np.ndarray, policy: RatePolicy,
                 workers: int = 1) -> np.ndarray:
    """Per-state rates over a trace; chunks may be processed in parallel."""
    starts = range(0, gains.shape[0], CHUNK)

    def run(k):
        return policy.apply(rank_tables(scenario, gains[k:k + CHUNK]))

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(k) for k in starts]
    return np.concatenate(parts)


@dataclass
class PolicyEvaluation:
    mean_rates: np.ndarray
    rate_se: np.ndarray
    mean_utility: float
    utility_se: float
    utility_of_mean: float
    utility_of_mean_se: float
    n_samples: int
    seed: int
    samples: np.ndarray | None = field(default=None, repr=False)
    sample_utilities: np.ndarray | None = field(default=None, repr=False)


def summarize(rates: np.ndarray, utility: Utility, seed: int) -> PolicyEvaluation:
    """Means and standard errors of per-state rates and utilities."""
    n = rates.shape[0]
    mean = _pairwise_mean(rates)
    se = rates.std(axis=0, ddof=1) / math.sqrt(n)
    utils = utility.value(rates)
    u_mean = float(_pairwise_mean(utils[:, None])[0])
    u_se = float(utils.std(ddof=1) / math.sqrt(n))
    grad = utility.gradient(mean)
    # Delta method for u(mean).
    proj = rates @ grad
    uom_se = float(proj.std(ddof=1) / math.sqrt(n))
    return PolicyEvaluation(mean, se, u_mean, u_se, float(utility.value(mean)), uom_se,
                            n, seed, rates, utils)


def _pairwise_mean(x: np.ndarray) -> np.ndarray:
    # np.add.reduce along axis 0 of a contiguous array uses pairwise summation.
    return np.add.reduce(np.ascontiguousarray(x), axis=0) / x.shape[0]


def evaluate_policy(scenario: Scenario, fading: FadingModel, policy: RatePolicy,
                    utility: Utility, n: int, seed: int = 0, workers: int = 1) -> PolicyEvaluation:
    """Monte Carlo estimates of ``E[R(H)]``, ``E[u(R(H))]`` and ``u(E[R(H)])``."""
    if n < 100:
        raise ValueError("policy evaluation needs at least 100 samples")
    trace = sample(fading, n, seed, workers=workers)
    rates = apply_policy(scenario, trace.gains, policy, workers)
    return summarize(rates, utility, seed)


@dataclass
class GapResult:
    """Greedy-versus-optimal comparison on one shared trace."""

    u_star: float
    u_greedy: float
    gap: float
    gap_se: float
    optimum: np.ndarray
    solver: FWReport
    greedy: PolicyEvaluation
    witness: PolicyEvaluation
    region: PolymatroidRegion
    region_se: np.ndarray
    gains: np.ndarray = field(repr=False)

    def jensen_chain(self) -> list[tuple[str, float, float]]:
        """``E[u(witness)] <= E[u(greedy)] <= u(E[greedy]) <= u(R*)`` with standard errors."""
        return [
            ("E[u(R*(H))]", self.witness.mean_utility, self.witness.utility_se),
            ("E[u(Rbar(H))]", self.greedy.mean_utility, self.greedy.utility_se),
            ("u(E[Rbar(H)])", self.greedy.utility_of_mean, self.greedy.utility_of_mean_se),
            ("u(R*)", self.u_star, self.witness.utility_of_mean_se),
        ]


def solve_averaged(region: PolymatroidRegion, utility: Utility, gap_tol: float = 1e-10,
                   max_iter: int = 100_000) -> FWReport:
    return frank_wolfe(PolymatroidOracle(region), utility, gap_tol=gap_tol, max_iter=max_iter)


def performance_gap(scenario: Scenario, fading: FadingModel, utility: Utility, n: int,
                    seed: int = 0, workers: int = 1, gains=None) -> GapResult:
    """``u(R*) - u(E[Rbar(H)])`` estimated from one trace.

    The averaged region, the greedy policy and the optimal witness are all
    evaluated on the same draws, so the greedy mean lies in the estimated
    region and the estimated gap is nonnegative up to solver tolerance.
    """
    if gains is None:
        gains = sample(fading, n, seed, workers=workers).gains
    mean, se = averaged_ranks(scenario, gains)
    region = PolymatroidRegion(scenario.num_users, mean)
    report = solve_averaged(region, utility)
    r_star = report.rates
    u_star = float(utility.value(r_star))
    g_rates = apply_policy(scenario, gains, RatePolicy.greedy(utility), workers)
    w_rates = apply_policy(scenario, gains, RatePolicy.optimal_witness(report), workers)
    greedy = summarize(g_rates, utility, seed)
    witness = summarize(w_rates, utility, seed)
    # Linearize both sides of the gap around their own means.
    diff = w_rates @ utility.gradient(r_star) - g_rates @ utility.gradient(greedy.mean_rates)
    gap_se = float(diff.std(ddof=1) / math.sqrt(len(diff)))
    return GapResult(u_star, greedy.utility_of_mean, u_star - greedy.utility_of_mean, gap_se,
                     r_star, report, greedy, witness, region, se, gains)
