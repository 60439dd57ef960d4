"""Weight vectors on the (restricted) probability simplex.

The min player of the fairness game keeps a distribution ``w`` over the
``n`` classes.  Every component is kept above a floor ``u_min`` so that the
player can never put all of its mass on a single class; the set of such
vectors is the restricted simplex.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import permutations

import numpy as np

SUM_TOL = 1e-9


class Projection(str, enum.Enum):
    """How an arbitrary non-negative vector is mapped back onto the simplex.

    PROOF_CLIP   raise entries to ``u_min`` then renormalise (the form used in
                 the regret proof; the result can dip below ``u_min`` again).
    SCALED_CLIP  ``max(c * x_i, u_min)`` with ``c`` chosen so the sum is one.
    EUCLIDEAN    nearest point of the restricted simplex in l2.
    """

    PROOF_CLIP = "proof_clip"
    SCALED_CLIP = "scaled_clip"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class RestrictedSimplex:
    """``{w : sum(w) = 1, w_i >= u_min}`` over ``n`` classes.

    ``u_min = 0`` gives the full simplex and ``u_min = 1/n`` the single
    point ``1/n``; both are accepted as limiting cases.
    """

    n: int
    u_min: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need n >= 2 classes, got {self.n}")
        if not np.isfinite(self.u_min) or self.u_min < 0:
            raise ValueError(f"u_min must be a finite non-negative number, got {self.u_min}")
        if self.n * self.u_min > 1 + 1e-12:
            raise ValueError(f"infeasible restricted simplex: n * u_min = {self.n * self.u_min} > 1")

    @classmethod
    def default(cls, n: int) -> "RestrictedSimplex":
        """The floor used for training, ``u_min = 1 / (2n)``."""
        return cls(n, 1.0 / (2 * n))

    def uniform(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def contains(self, w, tol: float = SUM_TOL) -> bool:
        w = np.asarray(w, dtype=float)
        return (
            w.shape == (self.n,)
            and abs(w.sum() - 1.0) <= tol
            and bool(np.all(w >= self.u_min - 1e-12))
        )


@dataclass(frozen=True)
class MWConfig:
    tau: float = 1.0
    projection: Projection = Projection.SCALED_CLIP

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")
        object.__setattr__(self, "projection", Projection(self.projection))


def check_weights(w, n: int | None = None, tol: float = SUM_TOL) -> np.ndarray:
    """Validate a normalised weight vector and return it as a float array."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weight vector must be a non-empty 1-d array")
    if n is not None and w.size != n:
        raise ValueError(f"weight vector has {w.size} entries, expected {n}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"weights sum to {w.sum()!r}, not 1")
    return w


def _check_input(x, s: RestrictedSimplex) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("cannot project an empty or non-vector input")
    if x.size != s.n:
        raise ValueError(f"vector has {x.size} entries but the simplex has n={s.n}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("projection input must be finite and non-negative")
    if not np.any(x > 0):
        raise ValueError("projection input must have a positive entry")
    return x


def _scaled_clip(x, u_min):
    # Solve sum_i max(c x_i, u_min) = 1.  With the k largest entries above the
    # floor, c = (1 - (n - k) u_min) / (sum of those k entries).
    n = x.size
    if n * u_min >= 1.0:
        return np.full(n, 1.0 / n)
    order = np.argsort(-x, kind="stable")
    xs = x[order]
    csum = np.cumsum(xs)
    for k in range(1, n + 1):
        if xs[k - 1] <= 0:
            break
        c = (1.0 - (n - k) * u_min) / csum[k - 1]
        if c * xs[k - 1] >= u_min * (1 - 1e-12) and (k == n or c * xs[k] <= u_min * (1 + 1e-12)):
            return np.maximum(c * x, u_min)
    raise RuntimeError("no consistent scaling found")  # unreachable for valid input


def _euclidean(y, u_min):
    # max(y_i - theta, u_min) == u_min + max(y_i - u_min - theta, 0): a plain
    # simplex projection of y - u_min onto mass 1 - n u_min.
    n = y.size
    mass = 1.0 - n * u_min
    if mass <= 0:
        return np.full(n, 1.0 / n)
    z = y - u_min
    zs = np.sort(z)[::-1]
    css = np.cumsum(zs) - mass
    ks = np.arange(1, n + 1)
    rho = np.count_nonzero(zs - css / ks > 0)
    theta = css[rho - 1] / rho
    return u_min + np.maximum(z - theta, 0.0)


def project(x, s: RestrictedSimplex, method: Projection | str = Projection.SCALED_CLIP) -> np.ndarray:
    """Map a non-negative vector onto ``s``.

    The input is normalised to sum to one first.  SCALED_CLIP and EUCLIDEAN
    always land inside ``s``; PROOF_CLIP returns ``max(x, u_min) / Z`` which
    may leave some entries slightly below ``u_min`` (e.g. ``(0.7, 0.2, 0.1)``
    with ``u_min=0.15`` gives a last entry of 1/7).
    """
    method = Projection(method)
    x = _check_input(x, s)
    y = x / x.sum()
    if s.contains(y, tol=1e-15):
        return y
    if method is Projection.PROOF_CLIP:
        z = np.maximum(y, s.u_min)
        return z / z.sum()
    if method is Projection.SCALED_CLIP:
        return _scaled_clip(y, s.u_min)
    return _euclidean(y, s.u_min)


def hedge_step(w, v, tau: float) -> np.ndarray:
    """Normalised multiplicative-weights step ``w * exp(-tau v) / Z``."""
    u = w * np.exp(-tau * v)
    return u / u.sum()


def mw_update(w, v, cfg: MWConfig, s: RestrictedSimplex) -> np.ndarray:
    """One min-player update: exponentiate by the class accuracies, project.

    Classes with lower accuracy ``v_i`` gain relative weight.
    """
    w = check_weights(w, s.n, tol=1e-6)
    v = np.asarray(v, dtype=float)
    if v.shape != w.shape:
        raise ValueError(f"accuracy vector shape {v.shape} does not match weights {w.shape}")
    return project(hedge_step(w, v, cfg.tau), s, cfg.projection)


def weighted_value(w, v) -> float:
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if w.shape != v.shape:
        raise ValueError(f"dimension mismatch: {w.shape} vs {v.shape}")
    return float(w @ v)


def min_linear_over_simplex(v, s: RestrictedSimplex) -> tuple[np.ndarray, float]:
    """Exact ``argmin_{w in s} <w, v>`` and its value.

    Every class gets ``u_min``; the leftover mass goes to the first class
    with the smallest ``v``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (s.n,):
        raise ValueError(f"expected a vector of length {s.n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    w = np.full(s.n, s.u_min)
    w[int(np.argmin(v))] += max(1.0 - s.n * s.u_min, 0.0)
    return w, float(w @ v)


def check_ggf_weights(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("GGF weights must be a non-empty vector")
    if np.any(g <= 0) or abs(g.sum() - 1.0) > SUM_TOL:
        raise ValueError("GGF weights must be positive and sum to 1")
    if np.any(np.diff(g) >= 0):
        raise ValueError("GGF weights must be strictly decreasing")
    return g


def ggf_value(g, u) -> float:
    """Generalised Gini welfare: largest weight on the smallest utility."""
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    if g.shape != u.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {u.shape}")
    return float(g @ np.sort(u))


def ggf_value_bruteforce(g, u) -> float:
    """``min`` over all permutations of ``sum g_s(i) u_i``; exponential, small n only."""
    g = np.asarray(g, dtype=float)
    u = np.asarray(u, dtype=float)
    return min(float(np.asarray(p) @ u) for p in permutations(g))
