"""Capacity regions of the Gaussian multiple-access channel as polymatroids.

A region over ``M`` users is stored as a dense rank table indexed by subset
bitmask: bit ``i`` of the index is set when user ``i`` (0-based) belongs to
the subset.  Entry 0 is the empty set and is always zero.  All rates are in
nats per channel use.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_USERS = 16
MAX_VERTEX_USERS = 8


def awgn_capacity(power, noise):
    """Shannon capacity ``0.5 * log(1 + power / noise)`` of an AWGN channel in nats."""
    noise = np.asarray(noise, dtype=float)
    power = np.asarray(power, dtype=float)
    if np.any(noise <= 0):
        raise ValueError("noise power must be positive")
    if np.any(power < 0):
        raise ValueError("signal power must be nonnegative")
    out = 0.5 * np.log1p(power / noise)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Scenario:
    """Fixed-power scenario: per-user transmit powers and receiver noise."""

    powers: np.ndarray
    noise: float = 1.0

    def __post_init__(self):
        powers = np.array(self.powers, dtype=float).reshape(-1)
        if powers.size < 1:
            raise ValueError("a scenario needs at least one user")
        if powers.size > MAX_USERS:
            raise ValueError(f"at most {MAX_USERS} users are supported")
        if np.any(powers < 0) or not np.all(np.isfinite(powers)):
            raise ValueError("powers must be finite and nonnegative")
        if not self.noise > 0:
            raise ValueError("noise power must be positive")
        powers.setflags(write=False)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "noise", float(self.noise))

    @property
    def num_users(self) -> int:
        return self.powers.size

    @property
    def snr(self) -> np.ndarray:
        """Per-user ``P_i / N0``."""
        return self.powers / self.noise


@lru_cache(maxsize=None)
def membership(num_users: int) -> np.ndarray:
    """Boolean matrix of shape ``(2**M, M)``; row ``S`` marks the members of ``S``."""
    masks = np.arange(1 << num_users)
    out = (masks[:, None] >> np.arange(num_users)) & 1
    out = out.astype(bool)
    out.setflags(write=False)
    return out


def subset_key(mask: int) -> str:
    """JSON key of a subset: ascending 1-based user indices joined by commas."""
    return ",".join(str(i + 1) for i in range(mask.bit_length()) if mask >> i & 1)


def parse_subset_key(key: str) -> int:
    mask = 0
    for part in key.split(","):
        idx = int(part)
        if idx < 1:
            raise ValueError(f"bad subset key {key!r}")
        mask |= 1 << (idx - 1)
    return mask


def _check_gains(scenario: Scenario, gains) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    if gains.shape[-1] != scenario.num_users:
        raise ValueError(
            f"expected {scenario.num_users} channel gains, got {gains.shape[-1]}"
        )
    if np.any(gains < 0) or not np.all(np.isfinite(gains)):
        raise ValueError("channel gains must be finite and nonnegative")
    return gains


def rank_tables(scenario: Scenario, gains) -> np.ndarray:
    """Instantaneous rank tables for one state ``(M,)`` or many states ``(n, M)``."""
    gains = _check_gains(scenario, gains)
    snr = gains * scenario.snr
    mem = membership(scenario.num_users).astype(float)
    return 0.5 * np.log1p(snr @ mem.T)


@dataclass(frozen=True)
class PolymatroidRegion:
    """Polymatroid ``{R >= 0 : sum_{i in S} R_i <= f(S) for all S}``.

    ``rank`` has length ``2**num_users`` with ``rank[0] == 0``.
    """

    num_users: int
    rank: np.ndarray

    def __post_init__(self):
        rank = np.array(self.rank, dtype=float).reshape(-1)
        if not 1 <= self.num_users <= MAX_USERS:
            raise ValueError(f"num_users must be in [1, {MAX_USERS}]")
        if rank.size != 1 << self.num_users:
            raise ValueError("rank table size must be 2**num_users")
        if not np.all(np.isfinite(rank)):
            raise ValueError("rank values must be finite")
        rank[0] = 0.0
        rank.setflags(write=False)
        object.__setattr__(self, "rank", rank)

    def __getitem__(self, users) -> float:
        """Rank of a subset given as an iterable of 0-based user indices."""
        mask = 0
        for i in users:
            mask |= 1 << int(i)
        return float(self.rank[mask])

    @property
    def total(self) -> float:
        """Sum-rate constraint ``f(M)``."""
        return float(self.rank[-1])

    def violations(self, tol: float = 1e-12) -> list[str]:
        """Names of the polymatroid axioms the rank table breaks (empty if valid).

        Uses the local forms: ``f(S+i) >= f(S)`` for monotonicity and
        ``f(S+i) + f(S+j) >= f(S+i+j) + f(S)`` for submodularity, which are
        equivalent to the pairwise definitions.
        """
        out = []
        f = self.rank
        scale = tol * max(1.0, float(np.max(np.abs(f))))
        if np.any(f < -scale):
            out.append("nonnegative")
        masks = np.arange(f.size)
        for i in range(self.num_users):
            base = masks[(masks >> i & 1) == 0]
            if np.any(f[base | 1 << i] < f[base] - scale):
                out.append("monotone")
                break
        for i, j in itertools.combinations(range(self.num_users), 2):
            base = masks[((masks >> i & 1) == 0) & ((masks >> j & 1) == 0)]
            lhs = f[base | 1 << i] + f[base | 1 << j]
            rhs = f[base | 1 << i | 1 << j] + f[base]
            if np.any(lhs < rhs - scale):
                out.append("submodular")
                break
        return out

    def validate(self, tol: float = 1e-12) -> "PolymatroidRegion":
        bad = self.violations(tol)
        if bad:
            raise ValueError(f"rank table is not a polymatroid: fails {', '.join(bad)}")
        return self

    def to_dict(self) -> dict:
        return {
            "M": self.num_users,
            "rank": {subset_key(m): float(self.rank[m]) for m in range(1, self.rank.size)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolymatroidRegion":
        m = int(data["M"])
        rank = np.zeros(1 << m)
        seen = set()
        for key, value in data["rank"].items():
            mask = parse_subset_key(key)
            if mask >= rank.size:
                raise ValueError(f"subset {key!r} exceeds M={m}")
            rank[mask] = float(value)
            seen.add(mask)
        if len(seen) != rank.size - 1:
            raise ValueError("rank table must list every nonempty subset")
        return cls(m, rank)


def instantaneous_region(scenario: Scenario, gains) -> PolymatroidRegion:
    """Capacity region ``C_g(P, h)`` for a single channel state."""
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1:
        raise ValueError("a single channel state must be a 1-D vector")
    return PolymatroidRegion(scenario.num_users, rank_tables(scenario, gains))


def averaged_ranks(scenario: Scenario, gains) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of the rank tables over a trace ``(n, M)``."""
    tables = rank_tables(scenario, np.atleast_2d(gains))
    n = tables.shape[0]
    mean = tables.mean(axis=0)
    if n > 1:
        se = tables.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        se = np.full_like(mean, np.nan)
    se[0] = 0.0
    return mean, se


def averaged_region(scenario: Scenario, fading, n_samples: int, seed: int = 0,
                    workers: int = 1) -> tuple[PolymatroidRegion, np.ndarray]:
    """Monte Carlo estimate of the throughput region ``C_a(P)``.

    Returns the region and the per-subset standard errors of its rank values
    (indexed like ``region.rank``).
    """
    from .fading import sample

    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    trace = sample(fading, n_samples, seed, workers=workers)
    if trace.gains.shape[1] != scenario.num_users:
        raise ValueError("fading model and scenario disagree on the number of users")
    mean, se = averaged_ranks(scenario, trace.gains)
    return PolymatroidRegion(scenario.num_users, mean), se


def contains(region: PolymatroidRegion, rates, slack: float = 0.0) -> bool:
    """Whether ``rates`` satisfies every rank constraint up to ``slack``."""
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (region.num_users,):
        raise ValueError("rate vector length does not match the region")
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    if np.any(rates < -slack):
        return False
    sums = membership(region.num_users)[1:].astype(float) @ rates
    return bool(np.all(sums <= region.rank[1:] + slack))


def order_masks(order) -> np.ndarray:
    """Bitmasks of the prefixes ``{pi(1..k)}`` for ``k = 0..M``."""
    bits = np.left_shift(1, np.asarray(order, dtype=np.int64))
    return np.concatenate(([0], np.bitwise_or.accumulate(bits)))


def vertex_for_order(region: PolymatroidRegion, order) -> np.ndarray:
    """Greedy vertex ``R_pi(k) = f(pi(1..k)) - f(pi(1..k-1))``."""
    order = np.asarray(order, dtype=np.int64)
    prefix = region.rank[order_masks(order)]
    out = np.empty(region.num_users)
    out[order] = np.diff(prefix)
    return out


def dominant_face_vertices(region: PolymatroidRegion) -> list[np.ndarray]:
    """Distinct vertices of the dominant face, one per user ordering."""
    if region.num_users > MAX_VERTEX_USERS:
        raise ValueError(
            f"vertex enumeration is limited to {MAX_VERTEX_USERS} users; "
            "use maximize_linear instead"
        )
    out, seen = [], set()
    for order in itertools.permutations(range(region.num_users)):
        v = vertex_for_order(region, order)
        key = tuple(np.round(v, 12))
        if key not in seen:
            seen.add(key)
            out.append(v)
    return out


def expand(region: PolymatroidRegion, delta: float) -> PolymatroidRegion:
    """Relax every nonempty-subset constraint by ``delta``.

    Adding a constant to every nonempty rank keeps the table monotone and
    submodular, so the result is again a polymatroid.
    """
    if delta < 0:
        raise ValueError("expansion must be nonnegative")
    rank = region.rank + delta
    rank[0] = 0.0
    return PolymatroidRegion(region.num_users, rank)


def hausdorff_distance(a: PolymatroidRegion, b: PolymatroidRegion) -> float:
    """Smallest uniform relaxation making each region contain the other."""
    if a.num_users != b.num_users:
        raise ValueError("regions have different numbers of users")
    return float(np.max(np.abs(a.rank[1:] - b.rank[1:])))


def hausdorff_distances(tables: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Row-wise distance between many rank tables ``(n, 2**M)`` and one table."""
    return np.max(np.abs(tables[:, 1:] - reference[1:]), axis=1)
