"""Concave, componentwise increasing utilities of the average rate vector.

All built-ins are separable, ``u(R) = sum_i u_i(R_i)``, and normalized so
that ``u(0) = 0``; being increasing, they are then nonnegative on the whole
orthant.  Every method accepts a single rate vector ``(M,)`` or a batch
``(..., M)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SHIFT = 0.01
_NEG_TOL = 1e-12

KINDS = ("linear", "log", "alpha_fair")


@dataclass(frozen=True)
class Utility:
    """``kind`` is one of ``linear``, ``log`` or ``alpha_fair``.

    * linear: ``sum w_i R_i``
    * log: ``sum w_i log(1 + R_i / d)``
    * alpha_fair: ``sum w_i ((R_i + d)^(1-a) - d^(1-a)) / (1 - a)``, which is
      the log utility when ``a == 1``.
    """

    kind: str
    weights: np.ndarray
    alpha: float = 1.0
    shift: float = DEFAULT_SHIFT

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown utility kind {self.kind!r}")
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("utility weights must be positive and finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.kind != "linear" and not self.shift > 0:
            raise ValueError("shift must be positive")
        if self.kind == "alpha_fair" and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "log":
            object.__setattr__(self, "alpha", 1.0)

    @classmethod
    def linear(cls, weights):
        return cls("linear", weights, alpha=0.0, shift=0.0)

    @classmethod
    def log(cls, weights, shift: float = DEFAULT_SHIFT):
        return cls("log", weights, 1.0, shift)

    @classmethod
    def alpha_fair(cls, weights, alpha: float, shift: float = DEFAULT_SHIFT):
        return cls("alpha_fair", weights, alpha, shift)

    @property
    def num_users(self) -> int:
        return self.weights.size

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    @property
    def _log_like(self) -> bool:
        return self.kind == "log" or self.alpha == 1.0

    def _rates(self, rates) -> np.ndarray:
        r = np.asarray(rates, dtype=float)
        if r.shape[-1] != self.num_users:
            raise ValueError(f"expected {self.num_users} rates, got {r.shape[-1]}")
        if np.any(r < -_NEG_TOL):
            raise ValueError("rates must be nonnegative")
        return np.maximum(r, 0.0)

    def value(self, rates):
        r = self._rates(rates)
        w, d = self.weights, self.shift
        if self.is_linear:
            terms = w * r
        elif self._log_like:
            terms = w * np.log1p(r / d)
        else:
            a = self.alpha
            terms = w * ((r + d) ** (1 - a) - d ** (1 - a)) / (1 - a)
        return terms.sum(axis=-1)

    def gradient(self, rates):
        r = self._rates(rates)
        if self.is_linear:
            return np.broadcast_to(self.weights, r.shape).copy()
        return self.weights * (r + self.shift) ** (-self.alpha)

    def curvature(self, rates):
        """Diagonal of ``-Hessian``; every entry is nonnegative."""
        r = self._rates(rates)
        if self.is_linear:
            return np.zeros_like(r)
        return self.weights * self.alpha * (r + self.shift) ** (-self.alpha - 1)

    def lipschitz_bound(self, lower) -> float:
        """Bound on ``||grad u||`` over the box ``R >= lower``.

        Each derivative is nonincreasing, so the gradient is largest at the
        lower corner of the box.
        """
        return float(np.linalg.norm(self.gradient(np.maximum(lower, 0.0))))

    def max_neg_hessian_eig(self, center, radius: float) -> float:
        """Upper bound on ``lambda_max(-Hessian)`` over the ball around ``center``.

        The ball (intersected with the orthant) sits inside the box with
        coordinates ``[max(0, c_i - r), c_i + r]``; ``-u_i''`` is decreasing,
        so its supremum is at the low end of each interval.
        """
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        c = self._rates(center)
        if self.is_linear:
            return 0.0
        return float(np.max(self.curvature(np.maximum(c - radius, 0.0))))

    def to_config(self) -> dict:
        out = {"type": self.kind, "weights": self.weights.tolist()}
        if self.kind != "linear":
            out["shift"] = self.shift
        if self.kind == "alpha_fair":
            out["alpha"] = self.alpha
        return out


def sampled_neg_hessian_eig(utility: Utility, center, radius: float, n: int = 1000,
                            seed: int = 0, step: float = 1e-4) -> float:
    """Largest ``lambda_max(-Hessian)`` seen at ``n`` random points of the ball.

    Uses a central-difference Hessian of ``utility.value`` so it also serves
    as an independent check of the closed-form bound.  Points are drawn
    uniformly in the ball, then clipped to stay ``2 * step`` inside the orthant.
    """
    center = np.asarray(center, dtype=float)
    m = center.size
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal((n, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / m)
    pts = np.maximum(center + radii[:, None] * direction, 2 * step)
    eye = np.eye(m) * step
    best = 0.0
    for x in pts:
        hess = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                hess[i, j] = (
                    utility.value(x + eye[i] + eye[j]) - utility.value(x + eye[i] - eye[j])
                    - utility.value(x - eye[i] + eye[j]) + utility.value(x - eye[i] - eye[j])
                ) / (4 * step * step)
        best = max(best, float(np.max(np.linalg.eigvalsh(-0.5 * (hess + hess.T)))))
    return best


def from_config(table: dict, num_users: int | None = None) -> Utility:
    """Build a utility from ``{type="alpha_fair", alpha=2.0, weights=[1,1], shift=0.01}``."""
    kind = table.get("type")
    if kind not in KINDS:
        raise KeyError("utility.type")
    if "weights" in table:
        weights = table["weights"]
    elif num_users is not None:
        weights = [1.0] * num_users
    else:
        raise KeyError("utility.weights")
    if num_users is not None and len(weights) != num_users:
        raise ValueError(f"utility.weights has {len(weights)} entries, expected {num_users}")
    if kind == "linear":
        return Utility.linear(weights)
    shift = float(table.get("shift", DEFAULT_SHIFT))
    if kind == "log":
        return Utility.log(weights, shift)
    if "alpha" not in table:
        raise KeyError("utility.alpha")
    return Utility.alpha_fair(weights, float(table["alpha"]), shift)
