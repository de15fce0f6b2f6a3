"""Independent reference computations used by the tests.

Nothing here imports the solvers under test; each oracle recomputes its
answer from first principles (explicit loops, LPs, grids, closed forms).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize


def rank_by_loops(powers, noise, gains) -> dict:
    """``{frozenset(S): 0.5 log(1 + sum_{i in S} h_i P_i / N0)}`` over nonempty S (0-based)."""
    m = len(powers)
    out = {}
    for size in range(1, m + 1):
        for s in itertools.combinations(range(m), size):
            snr = sum(gains[i] * powers[i] for i in s) / noise
            out[frozenset(s)] = 0.5 * math.log(1 + snr)
    return out


def table_to_dict(rank, m) -> dict:
    out = {}
    for mask in range(1, 1 << m):
        out[frozenset(i for i in range(m) if mask >> i & 1)] = float(rank[mask])
    return out


def vertices_by_permutation(f: dict, m: int) -> list:
    verts = []
    for perm in itertools.permutations(range(m)):
        v = np.zeros(m)
        prev = 0.0
        for k in range(m):
            cur = f[frozenset(perm[:k + 1])]
            v[perm[k]] = cur - prev
            prev = cur
        verts.append(v)
    return verts


def lp_max_linear(f: dict, m: int, mu) -> float:
    """``max mu'R`` over the polymatroid by a generic LP solver."""
    subsets = sorted(f, key=lambda s: (len(s), sorted(s)))
    a = np.array([[1.0 if i in s else 0.0 for i in range(m)] for s in subsets])
    b = np.array([f[s] for s in subsets])
    res = optimize.linprog(-np.asarray(mu, float), A_ub=a, b_ub=b, bounds=[(0, None)] * m,
                           method="highs")
    assert res.status == 0
    return -res.fun


def random_rank_table(rng, m: int) -> np.ndarray:
    """Rank table of a random Gaussian MAC state (bit ``i`` is user ``i``)."""
    p = rng.uniform(0.1, 3.0, m)
    h = rng.exponential(1.0, m)
    table = np.zeros(1 << m)
    for mask in range(1, 1 << m):
        table[mask] = 0.5 * math.log1p(sum(p[i] * h[i] for i in range(m) if mask >> i & 1))
    return table


def slsqp_max(value, grad, rank, m: int):
    """``max value(R)`` over the polymatroid with rank table ``rank`` by SLSQP.

    Constraints are written out subset by subset from the table.
    """
    masks = range(1, 1 << m)
    a = np.array([[1.0 if mask >> i & 1 else 0.0 for i in range(m)] for mask in masks])
    b = np.array([rank[mask] for mask in masks])
    cons = {"type": "ineq", "fun": lambda r: b - a @ r, "jac": lambda r: -a}
    x0 = np.full(m, 0.5 * min(b) / m)
    res = optimize.minimize(lambda r: -value(r), x0, jac=lambda r: -grad(r), method="SLSQP",
                            bounds=[(0, None)] * m, constraints=[cons],
                            options={"ftol": 1e-12, "maxiter": 1000})
    assert res.success, res.message
    return res.x, -res.fun


def face_grid_max(value, f1: float, f2: float, f12: float, n: int = 200_001):
    """Grid search of ``value(R)`` along the dominant face of a 2-user region."""
    r1 = np.linspace(f12 - f2, f1, n)
    pts = np.stack([r1, f12 - r1], axis=1)
    vals = value(pts)
    k = int(np.argmax(vals))
    return pts[k], float(vals[k])


def two_user_lp(powers, gains, noise, mu) -> float:
    """``max mu'r`` over ``C_g(p, h)`` for two users, from the two corner points."""
    s1, s2 = powers[0] * gains[0] / noise, powers[1] * gains[1] / noise
    c1, c2, c12 = 0.5 * math.log1p(s1), 0.5 * math.log1p(s2), 0.5 * math.log1p(s1 + s2)
    return max(mu[0] * c1 + mu[1] * (c12 - c1), mu[1] * c2 + mu[0] * (c12 - c2))


def power_grid_objective(gains, mu, lam, noise, n: int = 400) -> float:
    """``max mu'r - lam'p`` over an ``n x n`` power grid with the exact rate LP."""
    # No user gains from received power beyond mu_i h_i / (2 lam_i) - N0.
    top = max(mu[i] * gains[i] / (2 * lam[i]) for i in range(2)) - noise
    hi = [max(top, 0.0) / gains[i] if gains[i] > 0 else 0.0 for i in range(2)]
    p1, p2 = np.meshgrid(np.linspace(0, hi[0], n), np.linspace(0, hi[1], n), indexing="ij")
    s1, s2 = p1 * gains[0] / noise, p2 * gains[1] / noise
    c1, c2, c12 = 0.5 * np.log1p(s1), 0.5 * np.log1p(s2), 0.5 * np.log1p(s1 + s2)
    rate_val = np.maximum(mu[0] * c1 + mu[1] * (c12 - c1), mu[1] * c2 + mu[0] * (c12 - c2))
    return float(np.max(rate_val - lam[0] * p1 - lam[1] * p2))


def single_user_waterfilling(p_bar: float, low: float, high: float, mu: float = 1.0,
                             noise: float = 1.0) -> tuple[float, float]:
    """``(lam, R*)`` for one user with ``H ~ Uniform(low, high)`` by direct integration.

    Power ``p(h) = [mu / (2 lam) - N0 / h]^+``; the price is found by root
    finding on the expected power, and the rate is integrated directly.
    """
    dens = 1.0 / (high - low)

    def power(lam):
        level = mu / (2 * lam)
        cut = max(low, noise / level)
        if cut >= high:
            return 0.0
        return dens * integrate.quad(lambda h: level - noise / h, cut, high, epsabs=1e-13, epsrel=1e-13)[0]

    lam = optimize.brentq(lambda l: power(l) - p_bar, 1e-6, mu * high / (2 * noise), xtol=1e-15, rtol=1e-14)
    level = mu / (2 * lam)
    cut = max(low, noise / level)
    rate = dens * integrate.quad(lambda h: 0.5 * math.log(h * level / noise), cut, high,
                                 epsabs=1e-13, epsrel=1e-13)[0]
    return lam, rate


def central_gradient(f, x, step: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def sigma_y_bound_scalar(z_mean: float, z_var: float) -> float:
    sd = math.sqrt(z_var)
    return z_var / 4 * (1 + ((1 + z_mean) * (math.sqrt(2 * math.log(1 + z_mean)) - sd / 2)) ** 2)
