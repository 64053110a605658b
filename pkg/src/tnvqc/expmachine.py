"""Exponential machine: a linear model over all 2^d multiplicative feature
interactions with the weight tensor kept in TT format.

``score(x) = <W, X(x)>`` where ``X(x)`` is the rank-1 tensor with cores
``(1, x_k)``; the all-zeros entry of ``W`` plays the role of the bias.
Training runs full-batch Riemannian gradient descent on the fixed-rank
manifold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LabeledDataset
from .errors import InvalidInputError, TrainingDivergedError
from .riemannian import (
    TangentFrames,
    point_as_tangent,
    project_rank1_sum,
    retract,
)
from .tt import TtTensor, frobenius_norm, random_tt, rank1_tt, tt_add, tt_round, tt_scale

FORMAT_TAG = "tn-model v1"
LOSS_KINDS = ("logistic", "mse")


def count_params(d: int, r: int) -> int:
    return 2 * d * r * r


@dataclass
class TnTrainConfig:
    rank: int = 4
    epochs: int = 500
    lr: float = 0.05
    lam: float = 0.0
    seed: int = 0
    loss_kind: str = "logistic"
    squared_reg: bool = False  # (lam/2)*||W||^2 instead of (lam/2)*||W||

    def __post_init__(self):
        if self.rank < 1 or self.epochs < 0 or self.lr <= 0 or self.lam < 0:
            raise InvalidInputError("rank >= 1, epochs >= 0, lr > 0 and lam >= 0 required")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"unknown loss_kind {self.loss_kind!r}")


@dataclass
class TnModel:
    weights: TtTensor
    loss_kind: str = "logistic"
    lam: float = 0.0
    squared_reg: bool = False
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(n != 2 for n in self.weights.shape):
            raise InvalidInputError(f"weights must be 2x...x2, got {self.weights.shape}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidInputError(f"unknown loss_kind {self.loss_kind!r}")

    @property
    def num_features(self) -> int:
        return self.weights.ndim

    @property
    def rank(self) -> int:
        return max(self.weights.ranks)

    @property
    def param_count(self) -> int:
        return count_params(self.num_features, self.rank)

    @property
    def stored_param_count(self) -> int:
        """Actual number of stored floats (boundary cores are thinner)."""
        return self.weights.num_params

    def scores(self, x) -> np.ndarray:
        return predict_scores(self.weights, x)

    def predict_labels(self, x) -> np.ndarray:
        return decision(self.scores(x))

    def loss(self, ds: LabeledDataset) -> float:
        return loss(self, ds)


def encode_features(x) -> TtTensor:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("empty feature vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("features must be finite")
    return rank1_tt([np.array([1.0, v]) for v in x])


def _factors(x: np.ndarray) -> np.ndarray:
    """(S, d, 2) array of per-mode vectors ``(1, x_k)``."""
    return np.stack([np.ones_like(x), x], axis=-1)


def predict_scores(w: TtTensor, x) -> np.ndarray:
    """Scores for a batch ``x`` of shape (S, d), one left-to-right sweep."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != w.ndim:
        raise InvalidInputError(f"{x.shape[1]} features for a {w.ndim}-feature model")
    v = np.ones((x.shape[0], 1))
    for k, core in enumerate(w.cores):
        # G(0) + x_k G(1)
        v = v @ core[:, 0, :] + (v * x[:, k:k + 1]) @ core[:, 1, :]
    return v[:, 0]


def predict_raw(m: TnModel, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != m.num_features:
        raise InvalidInputError(f"{x.size} features for a {m.num_features}-feature model")
    return float(predict_scores(m.weights, x[None, :])[0])


def decision(scores) -> np.ndarray:
    # ties go to the positive class
    return np.where(np.asarray(scores) >= 0, 1, -1)


def classify(m: TnModel, x) -> int:
    return int(decision(predict_raw(m, x)))


def _data_loss(scores, y, kind):
    """Mean per-sample loss and d(loss_s)/d(score_s) / S."""
    S = y.size
    if kind == "logistic":
        margin = y * scores
        per = np.logaddexp(0.0, -margin)
        # d/ds log(1 + exp(-y s)) = -y * sigmoid(-y s)
        dper = -y * np.exp(-np.logaddexp(0.0, margin))
    else:
        per = (scores - y) ** 2
        dper = 2 * (scores - y)
    return float(per.mean()), dper / S


def _reg(w_norm: float, lam: float, squared: bool) -> tuple[float, float]:
    """Regularizer value and the coefficient c with d(reg)/dW = c * W."""
    if lam == 0:
        return 0.0, 0.0
    if squared:
        return 0.5 * lam * w_norm ** 2, lam
    return 0.5 * lam * w_norm, (0.5 * lam / w_norm if w_norm > 0 else 0.0)


def _check_batch(m: TnModel, batch: LabeledDataset):
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    if batch.num_features != m.num_features:
        raise InvalidInputError(f"{batch.num_features} features for a {m.num_features}-feature model")


def loss(m: TnModel, batch: LabeledDataset) -> float:
    """Mean per-sample loss plus ``(lam/2)*||W||_F`` (unsquared by default)."""
    _check_batch(m, batch)
    data, _ = _data_loss(predict_scores(m.weights, batch.features), batch.labels, m.loss_kind)
    reg, _ = _reg(frobenius_norm(m.weights) if m.lam else 0.0, m.lam, m.squared_reg)
    return data + reg


def euclidean_gradient(m: TnModel, batch: LabeledDataset, round_every: int = 8,
                       max_rank: int | None = None) -> TtTensor:
    """Full gradient as an explicit TT: a weighted sum of rank-1 feature
    tensors plus the regularizer term.

    The running sum is recompressed every ``round_every`` summands.  By
    default only numerically zero singular values are dropped, so the result
    is exact to round-off; ``max_rank`` (e.g. ``4 * m.rank``) caps the bond
    ranks instead, which is cheaper but approximate once the batch is larger
    than the cap.
    """
    _check_batch(m, batch)
    w = m.weights
    scores = predict_scores(w, batch.features)
    _, coef = _data_loss(scores, batch.labels, m.loss_kind)
    cap = max_rank or len(batch) + 1
    grad = None
    for s, (c, x) in enumerate(zip(coef, batch.features)):
        term = tt_scale(encode_features(x), c)
        grad = term if grad is None else tt_add(grad, term)
        if (s + 1) % round_every == 0:
            grad = tt_round(grad, cap)
    grad = tt_round(grad, cap)
    _, rc = _reg(frobenius_norm(w) if m.lam else 0.0, m.lam, m.squared_reg)
    if rc:
        grad = tt_add(grad, tt_scale(w, rc))
    return grad


def _riemannian_gradient(m: TnModel, frames: TangentFrames, x, y):
    """Loss and tangent-space gradient; the data part is projected summand by
    summand without forming the full Euclidean gradient."""
    w = frames.point()
    scores = predict_scores(w, x)
    data, coef = _data_loss(scores, y, m.loss_kind)
    w_norm = float(np.linalg.norm(frames.left[-1])) if m.lam else 0.0
    reg, rc = _reg(w_norm, m.lam, m.squared_reg)
    g = project_rank1_sum(frames, _factors(x), coef)
    if rc:
        g = g + point_as_tangent(frames).scaled(rc)
    return data + reg, g, scores


def init_weights(d: int, rank: int, rng: np.random.Generator) -> TtTensor:
    w = random_tt((2,) * d, rank, rng)
    return tt_scale(w, 1.0 / frobenius_norm(w))


def fit(train: LabeledDataset, cfg: TnTrainConfig, val: LabeledDataset | None = None) -> TnModel:
    """Full-batch Riemannian gradient descent with constant step ``cfg.lr``.

    ``history["loss"][e]`` is the objective at the start of epoch ``e``;
    training accuracy is recorded alongside and validation accuracy when
    ``val`` is given.
    """
    rng = np.random.default_rng(cfg.seed)
    d = train.num_features
    model = TnModel(init_weights(d, cfg.rank, rng), cfg.loss_kind, cfg.lam, cfg.squared_reg)
    hist = {"loss": [], "train_acc": [], "grad_norm": [], "val_acc": []}
    x, y = train.features, train.labels
    w = model.weights
    for epoch in range(cfg.epochs):
        frames = TangentFrames.at(w)
        value, g, scores = _riemannian_gradient(model, frames, x, y)
        if not np.isfinite(value):
            raise TrainingDivergedError(epoch, value)
        hist["loss"].append(value)
        hist["train_acc"].append(float(np.mean(decision(scores) == y)))
        hist["grad_norm"].append(g.norm())
        if val is not None:
            hist["val_acc"].append(float(np.mean(decision(predict_scores(w, val.features)) == val.labels)))
        w = retract(w, g, cfg.lr)
    model.weights = w
    model.history = hist
    return model


def save_model(m: TnModel, path) -> None:
    w = m.weights
    lines = [f"{FORMAT_TAG} {w.ndim} {m.rank} {m.loss_kind} {m.lam!r} {int(m.squared_reg)}"]
    lines.append(" ".join(str(r) for r in w.ranks))
    for core in w.cores:
        lines.append(" ".join(format(v, ".17g") for v in core.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> TnModel:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if " ".join(head[:2]) != FORMAT_TAG:
        raise InvalidInputError(f"{path}: not a {FORMAT_TAG} file")
    d = int(head[2])
    kind, lam, sq = head[4], float(head[5]), bool(int(head[6]))
    ranks = [int(r) for r in lines[1].split()]
    cores = []
    for k in range(d):
        vals = np.array(lines[2 + k].split(), dtype=float)
        cores.append(vals.reshape(ranks[k], 2, ranks[k + 1]))
    return TnModel(TtTensor(tuple(cores)), kind, lam, sq)
