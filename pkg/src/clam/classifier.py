"""Small numpy classifiers with hand-written backprop, and the training loops.

Two architectures are supported: softmax regression (one affine layer) and
a one-hidden-layer ReLU MLP.  :func:`train_clam` runs the class-dependent
multiplicative-weights method: after every epoch the class weights are
moved towards the classes with the lowest training accuracy, and the next
epoch's loss is reweighted accordingly.  :func:`train_baseline` covers
Normal (plain CE), Focal, PW, TCE and GGF.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import AugmentationSpec, Dataset, augment_batch
from .losses import LossSpec, ggf_epoch_weights, sample_loss_and_slope, tce_weights_update
from .simplex import MWConfig, RestrictedSimplex, check_weights, mw_update


@dataclass
class ClassifierParams:
    """Affine layers ``[(W, b), ...]``; ReLU between layers, softmax on top."""

    layers: list

    @property
    def arch(self) -> str:
        return "softmax" if len(self.layers) == 1 else "mlp"

    @property
    def n_classes(self) -> int:
        return self.layers[-1][1].size

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams([(W.copy(), b.copy()) for W, b in self.layers])

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def with_flat(self, theta) -> "ClassifierParams":
        out, k = [], 0
        for W, b in self.layers:
            W2 = theta[k:k + W.size].reshape(W.shape)
            k += W.size
            b2 = theta[k:k + b.size].copy()
            k += b.size
            out.append((W2.copy(), b2))
        return ClassifierParams(out)

    def to_dict(self) -> dict:
        return {"arch": self.arch, "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.layers]}


def init_params(in_dim: int, n_classes: int, arch: str = "mlp", hidden: int = 64, rng=None) -> ClassifierParams:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights, zero biases."""
    rng = np.random.default_rng(rng)
    if arch == "softmax":
        sizes = [in_dim, n_classes]
    elif arch == "mlp":
        sizes = [in_dim, hidden, n_classes]
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / math.sqrt(fan_in)
        layers.append((rng.uniform(-lim, lim, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return ClassifierParams(layers)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(params: ClassifierParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(X), -1)
    if X.shape[1] != params.in_dim:
        raise ValueError(f"inputs have {X.shape[1]} features, model expects {params.in_dim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite input")
    return X


def _forward(params: ClassifierParams, X):
    hs = [X]
    h = X
    last = len(params.layers) - 1
    for k, (W, b) in enumerate(params.layers):
        z = h @ W + b
        h = np.maximum(z, 0.0) if k < last else z
        hs.append(h)
    return hs


def forward_probs(params: ClassifierParams, X) -> np.ndarray:
    return softmax(_forward(params, _as_batch(params, X))[-1])


def predict(params: ClassifierParams, X) -> np.ndarray:
    return np.argmax(forward_probs(params, X), axis=1)


def _check_labels(labels, n):
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ValueError(f"labels must lie in [0, {n})")
    return labels


def per_class_batch_loss(probs, labels, n: int, spec: LossSpec | None = None):
    """Mean per-sample loss of each class present in the batch.

    Returns ``(L, absent)``; absent classes get ``L_i = 0``.
    """
    spec = spec or LossSpec()
    probs = np.asarray(probs, dtype=float)
    labels = _check_labels(labels, n)
    p_true = probs[np.arange(len(labels)), labels]
    loss, _ = sample_loss_and_slope(p_true, *spec.sample_params)
    counts = np.bincount(labels, minlength=n)
    sums = np.bincount(labels, weights=loss, minlength=n)
    absent = counts == 0
    L = np.where(absent, 0.0, sums / np.maximum(counts, 1))
    return L, absent


def weighted_loss(L, w, n: int) -> float:
    """``sum_i (n w_i) L_i``: class weights rescaled to sum to ``n``."""
    L = np.asarray(L, dtype=float)
    w = check_weights(w, n, tol=1e-6)
    if L.shape != (n,):
        raise ValueError(f"expected {n} class losses, got shape {L.shape}")
    return float(np.sum(n * w * L))


def loss_and_grads(params: ClassifierParams, X, y, sample_weights=None, spec: LossSpec | None = None):
    """Mean weighted per-sample loss and its gradient for every layer."""
    spec = spec or LossSpec()
    X = _as_batch(params, X)
    y = _check_labels(y, params.n_classes)
    B = len(y)
    s = np.ones(B) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    hs = _forward(params, X)
    P = softmax(hs[-1])
    rows = np.arange(B)
    loss, slope = sample_loss_and_slope(P[rows, y], *spec.sample_params)
    # d loss_j / d logits_j = slope_j * (onehot_j - p_j)
    E = np.zeros_like(P)
    E[rows, y] = 1.0
    G = (s * slope)[:, None] * (E - P) / B
    grads = [None] * len(params.layers)
    for k in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[k]
        grads[k] = (hs[k].T @ G, G.sum(axis=0))
        if k > 0:
            G = (G @ W.T) * (hs[k] > 0)
    return float(np.mean(s * loss)), grads, P


def grad_step(params: ClassifierParams, X, y, sample_weights, lr: float, spec: LossSpec | None = None):
    """One plain SGD step; returns ``(new_params, batch_loss, probs)``."""
    loss, grads, P = loss_and_grads(params, X, y, sample_weights, spec)
    if not all(np.all(np.isfinite(gW)) and np.all(np.isfinite(gb)) for gW, gb in grads):
        raise FloatingPointError(f"non-finite gradient (batch loss {loss!r}); lower the learning rate")
    new = ClassifierParams([(W - lr * gW, b - lr * gb) for (W, b), (gW, gb) in zip(params.layers, grads)])
    return new, loss, P


def accuracy_from_predictions(pred, labels, n: int):
    """Per-class accuracy; classes without samples get 1 and are flagged."""
    pred = np.asarray(pred)
    labels = _check_labels(labels, n)
    counts = np.bincount(labels, minlength=n)
    correct = np.bincount(labels, weights=(pred == labels).astype(float), minlength=n)
    missing = counts == 0
    return np.where(missing, 1.0, correct / np.maximum(counts, 1)), missing


def class_accuracies(params: ClassifierParams, dataset: Dataset, return_missing: bool = False):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    v, missing = accuracy_from_predictions(predict(params, dataset.X), dataset.y, dataset.n_classes)
    return (v, missing) if return_missing else v


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """``iters_per_epoch=None`` means one pass, ``ceil(N / batch_size)``.

    With ``exact_epoch_acc`` the class accuracies that drive the weight
    update come from a full pass over the training set at the end of the
    epoch instead of the predictions recorded before each minibatch step.
    """

    epochs: int = 40
    iters_per_epoch: int | None = None
    batch_size: int = 128
    learning_rate: float = 0.1
    seed: int = 0
    arch: str = "mlp"
    hidden: int = 64
    exact_epoch_acc: bool = False
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.learning_rate < 0 or self.hidden <= 0:
            raise ValueError("epochs, batch_size, learning_rate and hidden must be positive")
        if self.iters_per_epoch is not None and self.iters_per_epoch <= 0:
            raise ValueError("iters_per_epoch must be positive")
        if self.arch not in ("softmax", "mlp"):
            raise ValueError(f"unknown architecture {self.arch!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    spec: LossSpec
    config: TrainConfig
    params: ClassifierParams
    train_acc: np.ndarray      # epochs x n, accuracies that drove the weight update
    test_acc: np.ndarray | None
    weights: np.ndarray        # epochs x n, normalised class weights used in each epoch
    final_weights: np.ndarray  # weights after the last update
    mean_loss: np.ndarray      # epochs

    def to_dict(self, final_report: dict | None = None) -> dict:
        per_epoch = []
        for t in range(len(self.mean_loss)):
            per_epoch.append({
                "epoch": t,
                "w": self.weights[t].tolist(),
                "train_acc": self.train_acc[t].tolist(),
                "test_acc": None if self.test_acc is None else self.test_acc[t].tolist(),
                "mean_loss": float(self.mean_loss[t]),
            })
        return {
            "config": {"method": self.spec.to_dict(), "train": self.config.to_dict()},
            "per_epoch": per_epoch,
            "final_weights": self.final_weights.tolist(),
            "final": final_report,
        }

    def to_json(self, path, final_report: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(final_report), fh, indent=2)


def _class_scale(w: np.ndarray) -> np.ndarray:
    # Per-sample multiplier n * w_label; exactly one when w is uniform so that
    # uniform weighting reproduces unweighted training bit for bit.
    if np.all(w == w[0]):
        return np.ones_like(w)
    return w.size * w


def _train(train: Dataset, tcfg: TrainConfig, spec: LossSpec, test: Dataset | None, simplex=None) -> TrainResult:
    n = train.n_classes
    N = len(train)
    if N == 0:
        raise ValueError("empty training set")
    if n < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(tcfg.seed)
    params = init_params(train.flat().shape[1], n, tcfg.arch, tcfg.hidden, rng)
    K = tcfg.iters_per_epoch or math.ceil(N / tcfg.batch_size)
    aug = tcfg.augmentation
    if aug.kind != "none" and not train.is_image:
        raise ValueError("image augmentation requested for a non-image dataset")
    mw = MWConfig(spec.tau, spec.projection) if spec.method == "clam" else None

    w = np.full(n, 1.0 / n)
    scale = np.ones(n)
    T = tcfg.epochs
    train_acc = np.empty((T, n))
    test_acc = np.empty((T, n)) if test is not None else None
    weights = np.empty((T, n))
    mean_loss = np.empty(T)

    for t in range(T):
        if spec.method == "ggf":
            scale = np.ones(n) if t == 0 else ggf_epoch_weights(train_acc[t - 1], spec.alpha, spec.w_min, t, spec.f)
            weights[t] = scale / scale.sum()
        else:
            weights[t] = w
        order = rng.permutation(N)
        need = K * tcfg.batch_size
        if need > N:
            order = np.concatenate([order] + [rng.permutation(N) for _ in range(need // N)])
        preds = np.empty(need, dtype=int)
        seen = order[:need]
        loss_sum = np.zeros(n)
        loss_cnt = np.zeros(n)
        total = 0.0
        for k in range(K):
            idx = seen[k * tcfg.batch_size:(k + 1) * tcfg.batch_size]
            Xb = augment_batch(train.X[idx], aug, rng)
            yb = train.y[idx]
            params, loss, P = grad_step(params, Xb, yb, scale[yb], tcfg.learning_rate, spec)
            preds[k * tcfg.batch_size:(k + 1) * tcfg.batch_size] = np.argmax(P, axis=1)
            total += loss
            if spec.method == "tce":
                L, absent = per_class_batch_loss(P, yb, n, spec)
                cnt = np.bincount(yb, minlength=n)
                loss_sum += L * cnt
                loss_cnt += cnt
        mean_loss[t] = total / K
        if tcfg.exact_epoch_acc:
            train_acc[t] = class_accuracies(params, train)
        else:
            train_acc[t], _ = accuracy_from_predictions(preds, train.y[seen], n)
        if test is not None:
            test_acc[t] = class_accuracies(params, test)

        if spec.method == "clam":
            w = mw_update(w, train_acc[t], mw, simplex)
            scale = _class_scale(w)
        elif spec.method == "tce":
            epoch_losses = np.where(loss_cnt > 0, loss_sum / np.maximum(loss_cnt, 1), 0.0)
            w = tce_weights_update(w, epoch_losses, spec.gamma)
            scale = _class_scale(w)

    if spec.method == "ggf":
        final = ggf_epoch_weights(train_acc[-1], spec.alpha, spec.w_min, T, spec.f) if T else np.ones(n)
        final_weights = final / final.sum()
    else:
        final_weights = w
    return TrainResult(spec, tcfg, params, train_acc, test_acc, weights, final_weights, mean_loss)


def train_clam(train: Dataset, tcfg: TrainConfig, mw: MWConfig | None = None,
               s: RestrictedSimplex | None = None, test: Dataset | None = None) -> TrainResult:
    """Class-dependent multiplicative-weights training.

    Defaults: ``tau = 1``, ``u_min = 1 / (2n)``, scaled-clip projection.
    """
    mw = mw or MWConfig()
    s = s or RestrictedSimplex.default(train.n_classes)
    if s.n != train.n_classes:
        raise ValueError(f"simplex has n={s.n} but the data has {train.n_classes} classes")
    spec = LossSpec("clam", tau=mw.tau, u_min=s.u_min, projection=mw.projection)
    return _train(train, tcfg, spec, test, s)


def train_baseline(train: Dataset, tcfg: TrainConfig, spec: LossSpec, test: Dataset | None = None) -> TrainResult:
    if spec.method == "clam":
        raise ValueError("use train_clam (or train_method) for CLAM")
    return _train(train, tcfg, spec, test)


def train_method(train: Dataset, tcfg: TrainConfig, spec: LossSpec, test: Dataset | None = None) -> TrainResult:
    """Dispatch on ``spec.method``."""
    if spec.method == "clam":
        n = train.n_classes
        s = RestrictedSimplex(n, spec.u_min if spec.u_min is not None else 1.0 / (2 * n))
        return train_clam(train, tcfg, MWConfig(spec.tau, spec.projection), s, test)
    return train_baseline(train, tcfg, spec, test)


def with_seed(tcfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(tcfg, seed=seed)
