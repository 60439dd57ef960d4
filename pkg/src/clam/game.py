"""Finite zero-sum game between the class-weighting player and the model.

Rows of the payoff matrix are classes, columns are candidate parameter
settings, and ``M[i, j]`` is the accuracy of setting ``j`` on class ``i``.
The min player runs projected multiplicative weights over the rows; the max
player best-responds with a column.  Everything the regret bound talks
about can be evaluated exactly on such a game, which is what
:func:`verify_theorem1` does.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr

from .simplex import (
    MWConfig,
    Projection,
    RestrictedSimplex,
    hedge_step,
    min_linear_over_simplex,
    project,
)

VIOLATION_TOL = 1e-9
CLIP_TOL = 1e-12


def check_payoff(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < 2 or M.shape[1] < 1:
        raise ValueError(f"payoff matrix must be n x m with n >= 2, m >= 1; got shape {M.shape}")
    if not np.all(np.isfinite(M)) or M.min() < 0 or M.max() > 1:
        raise ValueError("payoff entries must lie in [0, 1]")
    return M


def best_response_column(M, w) -> int:
    """Column maximising the weighted accuracy ``w @ M`` (lowest index on ties)."""
    M = np.asarray(M, dtype=float)
    w = np.asarray(w, dtype=float)
    if M.ndim != 2 or w.shape != (M.shape[0],):
        raise ValueError(f"weights of shape {w.shape} do not match matrix rows {M.shape}")
    return int(np.argmax(w @ M))


@dataclass
class GameTrace:
    """Rounds ``t = 1..T`` of a game.

    ``w[t]`` is the min player's strategy in round ``t`` and ``x_next[t]`` the
    normalised pre-projection vector from which ``w[t + 1]`` was obtained;
    ``w_final`` is the strategy after the last round.
    """

    M: np.ndarray
    w: np.ndarray
    x_next: np.ndarray
    w_final: np.ndarray
    columns: np.ndarray
    tau: float
    projection: Projection
    u_min: float

    @property
    def T(self) -> int:
        return len(self.columns)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def v(self) -> np.ndarray:
        """Accuracy vectors ``v^t`` (T x n)."""
        return self.M[:, self.columns].T

    @property
    def values(self) -> np.ndarray:
        """``V_t = <w^t, v^t>``."""
        return np.einsum("ti,ti->t", self.w, self.v)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "j_t", "V_t"] + [f"w_{i + 1}" for i in range(self.n)])
            for t, (j, val, w) in enumerate(zip(self.columns, self.values, self.w), start=1):
                wr.writerow([t, int(j), repr(float(val))] + [repr(float(x)) for x in w])


def run_mw_game(M, T: int, cfg: MWConfig, s: RestrictedSimplex, w0=None) -> GameTrace:
    """Alternate best responses and projected multiplicative-weights updates."""
    M = check_payoff(M)
    n, _ = M.shape
    if n != s.n:
        raise ValueError(f"matrix has {n} rows but the simplex has n={s.n}")
    if T < 0:
        raise ValueError("T must be non-negative")
    if w0 is None:
        w = s.uniform()
    else:
        w = np.asarray(w0, dtype=float)
        if not s.contains(w):
            raise ValueError("initial weights are not in the restricted simplex")
    ws = np.empty((T, n))
    xs = np.empty((T, n))
    cols = np.empty(T, dtype=int)
    for t in range(T):
        j = best_response_column(M, w)
        x = hedge_step(w, M[:, j], cfg.tau)
        ws[t], xs[t], cols[t] = w, x, j
        w = project(x, s, cfg.projection)
    return GameTrace(M, ws, xs, w, cols, cfg.tau, cfg.projection, s.u_min)


def tau_theorem(n: int, T: int, alpha_max: float) -> float:
    """Learning rate under which the regret bound is stated."""
    if n < 2 or T < 1:
        raise ValueError("need n >= 2 and T >= 1")
    if not 0 <= alpha_max <= 1:
        raise ValueError("alpha_max must lie in [0, 1]")
    return math.log1p(math.sqrt(math.log(n) / T) / (1.0 + alpha_max))


def _kl(p, q) -> float:
    return float(np.sum(rel_entr(p, q)))


@dataclass
class RegretDiagnostics:
    valid: bool
    comparator: np.ndarray
    eps: np.ndarray          # T x n, pi(x)_i / x_i - 1
    alpha: np.ndarray        # T
    kl_step: np.ndarray      # T, KL(w~||w^{t+1}) - KL(w~||w^t)
    kl_bound: np.ndarray     # T, right-hand side of the per-step inequality
    lhs: float               # (1/T) sum_t V_t
    best_fixed: float        # (1/T) min_{w~} sum_t <w~, v^t>
    rhs_exact: float
    rhs_theorem: float
    rhs_closed_form: float
    max_alpha: float
    per_step_violations: int
    notes: list[str] = field(default_factory=list)

    @property
    def max_slack(self) -> float:
        """Largest ``kl_step - kl_bound``; positive means a violated round."""
        return float(np.max(self.kl_step - self.kl_bound)) if self.kl_step.size else -math.inf

    @property
    def summed_bound_holds(self) -> bool:
        return self.lhs <= self.rhs_theorem + VIOLATION_TOL

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "lhs": self.lhs,
            "best_fixed": self.best_fixed,
            "rhs_exact": self.rhs_exact,
            "rhs_theorem": self.rhs_theorem,
            "rhs_closed_form": self.rhs_closed_form,
            "max_alpha": self.max_alpha,
            "per_step_violations": self.per_step_violations,
            "max_slack": self.max_slack if self.kl_step.size else None,
            "comparator": self.comparator.tolist(),
            "notes": list(self.notes),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def verify_theorem1(trace: GameTrace, s: RestrictedSimplex, tau: float | None = None) -> RegretDiagnostics:
    """Evaluate every quantity of the regret bound on a finished game.

    The comparator ``w~`` is the best fixed strategy in hindsight.  For each
    round the per-step inequality

        KL(w~||w^{t+1}) - KL(w~||w^t) <= -(1 - e^-tau) V_{w^t,v^t} + (1 + alpha_t) tau V_{w~,v^t}

    is checked, then three right-hand sides for the average loss are reported:

    * ``rhs_exact``        the summed inequality solved for the average loss,
                           valid for any tau:
                           (KL(w~||w^1) + (1 + max alpha) tau sum V~) / ((1 - e^-tau) T)
    * ``rhs_closed_form``  the closed form obtained after substituting the
                           theorem's tau; only an upper bound when tau is that value
    * ``rhs_theorem``      best_fixed + ln n / T + (1 + max alpha) sqrt(ln n / T)

    Only the first two are implied by the per-step inequality; ``rhs_theorem``
    is the approximate headline statement.
    """
    tau = trace.tau if tau is None else tau
    n, T = trace.n, trace.T
    notes = []
    valid = trace.projection is Projection.PROOF_CLIP
    if not valid:
        notes.append(f"trace uses {trace.projection.value}; the inequalities are only proved for proof_clip")
    if T == 0:
        empty = np.empty(0)
        return RegretDiagnostics(valid, s.uniform(), np.empty((0, n)), empty, empty, empty,
                                 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, notes)

    v = trace.v
    values = trace.values
    total = v.sum(axis=0)
    w_tilde, best_sum = min_linear_over_simplex(total, s)

    w_next = np.vstack([trace.w[1:], trace.w_final[None, :]])
    eps = w_next / trace.x_next - 1.0
    v_tilde = v @ w_tilde
    # entries raised by the clip have eps well above rounding noise
    clipped = np.where(eps > CLIP_TOL, w_tilde[None, :] * v, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.clip(np.where(v_tilde > 0, clipped / v_tilde, 0.0), 0.0, 1.0)

    kl_prev = np.array([_kl(w_tilde, w) for w in trace.w])
    kl_next = np.array([_kl(w_tilde, w) for w in w_next])
    kl_step = kl_next - kl_prev
    shrink = -math.expm1(-tau)  # 1 - e^-tau
    kl_bound = -shrink * values + (1.0 + alpha) * tau * v_tilde
    violations = int(np.count_nonzero(kl_step - kl_bound > VIOLATION_TOL))

    a_max = float(alpha.max())
    log_n = math.log(n)
    lhs = float(values.mean())
    best_fixed = best_sum / T
    kl_start = kl_prev[0]
    if shrink > 0:
        rhs_exact = (kl_start + (1 + a_max) * tau * best_sum) / (shrink * T)
    else:
        rhs_exact = math.inf
    rhs_closed_form = (
        ((1 + a_max) / T + 0.5 * math.sqrt(log_n / T**3)) * best_sum
        + log_n / T
        + (1 + a_max) * math.sqrt(log_n / T)
    )
    rhs_theorem = best_fixed + log_n / T + (1 + a_max) * math.sqrt(log_n / T)
    return RegretDiagnostics(
        valid=valid, comparator=w_tilde, eps=eps, alpha=alpha, kl_step=kl_step,
        kl_bound=kl_bound, lhs=lhs, best_fixed=best_fixed, rhs_exact=float(rhs_exact),
        rhs_theorem=float(rhs_theorem), rhs_closed_form=float(rhs_closed_form), max_alpha=a_max,
        per_step_violations=violations, notes=notes,
    )


@dataclass
class LastIterateReport:
    converged: bool
    variation: float
    gap: float | None
    bound: float | None

    @property
    def passed(self) -> bool | None:
        if not self.converged:
            return None
        return self.gap <= self.bound


def last_iterate_check(trace: GameTrace, window: int, tol: float) -> LastIterateReport:
    """:func:`last_iterate_history` on the strategies and accuracies of a game."""
    return last_iterate_history(trace.w, trace.v, window, tol)


def last_iterate_history(weights, accuracies, window: int, tol: float) -> LastIterateReport:
    """Compare the last-round value with the trailing-window average.

    ``weights`` and ``accuracies`` are T x n histories, e.g. the per-epoch
    weights and training accuracies of a CLAM run.  When all weight
    vectors in the last ``window`` rounds lie within ``tol`` of each other
    (sup norm), the gap ``|V_T - mean V_t|`` is bounded by
    ``n * tol + max_t ||v^T - v^t||_inf`` and that bound is reported.
    """
    weights = np.asarray(weights, dtype=float)
    accuracies = np.asarray(accuracies, dtype=float)
    if weights.shape != accuracies.shape or weights.ndim != 2:
        raise ValueError("weights and accuracies must be matching T x n arrays")
    if window < 2:
        raise ValueError("window must be at least 2")
    if window > len(weights):
        raise ValueError(f"window {window} exceeds history length {len(weights)}")
    w = weights[-window:]
    v = accuracies[-window:]
    variation = float(np.max(w.max(axis=0) - w.min(axis=0)))
    if variation >= tol:
        return LastIterateReport(False, variation, None, None)
    values = np.einsum("ti,ti->t", w, v)
    gap = abs(values[-1] - values.mean())
    fluctuation = float(np.max(np.abs(v - v[-1])))
    return LastIterateReport(True, variation, float(gap), weights.shape[1] * tol + fluctuation)
