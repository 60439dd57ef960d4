"""Per-sample losses and per-epoch class-weight rules for CLAM and the baselines."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .simplex import Projection

P_FLOOR = 1e-12

METHODS = ("normal", "focal", "pw", "tce", "ggf", "clam")


def _prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must lie in (0, 1]")
    return np.maximum(p, P_FLOOR)


def ce_loss(p):
    """Cross entropy of the true-class probability, ``-ln p``."""
    return -np.log(_prob(p))


def focal_loss(p, gamma: float):
    p = _prob(p)
    return -np.log(p) * (1.0 - p) ** gamma


def pw_loss(p, gamma: float, theta_pw: float):
    p = _prob(p)
    return -np.log(p) * ((1.0 - p) ** gamma + theta_pw)


def sample_loss_and_slope(p, gamma: float = 0.0, theta_pw: float = 0.0):
    """Loss ``-ln p ((1-p)^gamma + theta)`` and ``p * dloss/dp``.

    CE, focal and PW are all this one family (CE is ``gamma=0, theta=0``),
    so every method goes through the same arithmetic.  The gradient of the
    loss with respect to the logits is ``slope * (onehot - probs)``.
    """
    p = np.maximum(np.asarray(p, dtype=float), P_FLOOR)
    q = 1.0 - p
    logp = np.log(p)
    factor = q**gamma + theta_pw
    loss = -logp * factor
    slope = -factor
    if gamma != 0:
        # gamma * p ln p (1-p)^(gamma-1), written to stay finite as p -> 1
        with np.errstate(divide="ignore", invalid="ignore"):
            extra = np.where(q > 0, gamma * p * logp * q ** (gamma - 1.0), 0.0)
        slope = slope + extra
    return loss, slope


def tce_weights_update(w_prev, class_losses, gamma: float) -> np.ndarray:
    """Blend the previous class weights with a softmax of the class losses."""
    w_prev = np.asarray(w_prev, dtype=float)
    L = np.asarray(class_losses, dtype=float)
    if w_prev.shape != L.shape:
        raise ValueError(f"dimension mismatch: {w_prev.shape} vs {L.shape}")
    e = np.exp(L - L.max())
    return (1.0 - gamma) * w_prev + gamma * (e / e.sum())


def ggf_epoch_weights(prev_epoch_acc, alpha: float, w_min: float, epoch: int, f: int = 1) -> np.ndarray:
    """Rank-based GGF class weights, ``max(alpha^(rank-1), w_min)``.

    Rank 1 is the class with the lowest accuracy (ties go to the lower class
    index).  On epochs with ``epoch % f != 0`` plain weights of one are used.
    Weights are not normalised.
    """
    v = np.asarray(prev_epoch_acc, dtype=float)
    if epoch % f != 0:
        return np.ones_like(v)
    ranks = np.empty(v.size, dtype=int)
    ranks[np.argsort(v, kind="stable")] = np.arange(v.size)
    return np.maximum(alpha ** ranks.astype(float), w_min)


@dataclass(frozen=True)
class LossSpec:
    """A training method and its hyperparameters.

    ``gamma`` and ``theta_pw`` shape the per-sample loss (focal/PW) or the
    TCE blend rate; ``alpha``, ``w_min``, ``f`` configure GGF; ``tau``,
    ``u_min`` (None means ``1/(2n)``) and ``projection`` configure CLAM.
    """

    method: str = "normal"
    gamma: float = 0.0
    theta_pw: float = 0.0
    alpha: float = 0.9
    w_min: float = 0.1
    f: int = 1
    tau: float = 1.0
    u_min: float | None = None
    projection: Projection = Projection.SCALED_CLIP

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.gamma < 0 or self.theta_pw < 0 or self.w_min < 0 or self.tau < 0:
            raise ValueError("gamma, theta_pw, w_min and tau must be non-negative")
        if self.method == "tce" and self.gamma > 1:
            raise ValueError("TCE blend rate gamma must lie in [0, 1]")
        if self.method == "ggf" and not 0 < self.alpha <= 1:
            raise ValueError("GGF alpha must lie in (0, 1]")
        if int(self.f) != self.f or self.f < 1:
            raise ValueError("GGF frequency f must be a positive integer")
        object.__setattr__(self, "projection", Projection(self.projection))

    @property
    def sample_params(self) -> tuple[float, float]:
        """(gamma, theta_pw) of the per-sample loss."""
        if self.method == "focal":
            return self.gamma, 0.0
        if self.method == "pw":
            return self.gamma, self.theta_pw
        return 0.0, 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["projection"] = self.projection.value
        return d


# Table of baseline defaults; GGF values differ per dataset.
PRESETS = {
    "normal": LossSpec("normal"),
    "focal": LossSpec("focal", gamma=2.0),
    "tce": LossSpec("tce", gamma=0.5),
    "pw": LossSpec("pw", gamma=2.5, theta_pw=0.8),
    "ggf": LossSpec("ggf", alpha=0.9, w_min=0.1, f=1),
    "clam": LossSpec("clam", tau=1.0),
}

GGF_PRESETS = {
    "cifar10": dict(alpha=0.9, w_min=0.1, f=1),
    "cifar100": dict(alpha=0.98, w_min=0.1, f=2),
    "fashion-mnist": dict(alpha=0.98, w_min=0.1, f=2),
    "mini-imagenet": dict(alpha=0.95, w_min=0.01, f=2),
    "imagenet": dict(alpha=0.998, w_min=0.2, f=1),
}
