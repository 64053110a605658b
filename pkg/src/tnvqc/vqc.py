"""Variational quantum classifier.

Features are loaded by angle encoding (``Ry(pi * x_k)`` on qubit ``k``),
followed by a layered ansatz: one Ry layer, then per variational layer CNOTs
controlled by the odd-numbered qubits (1-based), an Ry layer, CNOTs controlled by
the even-numbered qubits and a final Ry layer.  The model output is the
probability that the first qubit reads 1; labels are ``+1`` when it reaches
the threshold.

Training uses mini-batch Adam on the MSE loss with an exponentially decaying
learning rate.  Batched circuit evaluation drops every gate outside the
backward light cone of the measured qubit, which leaves the first-qubit
probability unchanged while shrinking the simulated register.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, qsim
from .data import LabeledDataset
from .errors import InvalidInputError, TrainingDivergedError

log = logging.getLogger(__name__)

FORMAT_TAG = "vqc-params v1"


def count_params(n: int, layers: int) -> int:
    return n * (2 * layers + 1)


@dataclass(frozen=True, eq=False)
class VqcParams:
    num_qubits: int
    num_layers: int
    angles: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float).ravel()
        if a.size != count_params(self.num_qubits, self.num_layers):
            raise InvalidInputError(
                f"{self.num_qubits} qubits x {self.num_layers} layers need "
                f"{count_params(self.num_qubits, self.num_layers)} angles, got {a.size}"
            )
        object.__setattr__(self, "angles", a)

    def layer(self, l: int) -> np.ndarray:
        """Angles of layer ``l``: N for layer 0, 2N (two Ry sublayers) otherwise."""
        n = self.num_qubits
        if l == 0:
            return self.angles[:n]
        start = n + (l - 1) * 2 * n
        return self.angles[start:start + 2 * n]

    def with_angles(self, angles) -> "VqcParams":
        return VqcParams(self.num_qubits, self.num_layers, angles)

    @classmethod
    def random(cls, n: int, layers: int, rng: np.random.Generator) -> "VqcParams":
        return cls(n, layers, rng.uniform(0.0, 2 * np.pi, count_params(n, layers)))


@dataclass
class VqcTrainConfig:
    layers: int = 2
    epochs: int = 60
    batch_size: int = 32
    lr0: float = 0.1
    decay: float = 0.95
    seed: int = 0
    threshold: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    target_mode: str = "prob"  # "prob": P vs {0,1}; "pm1": 2P-1 vs {-1,+1}
    grad_method: str = "shift"  # or "adjoint"

    def __post_init__(self):
        if not 0 < self.decay <= 1:
            raise InvalidInputError("decay must be in (0, 1]")
        if not 0 < self.threshold < 1:
            raise InvalidInputError("threshold must be in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.layers < 0:
            raise InvalidInputError("batch_size >= 1, epochs >= 0 and layers >= 0 required")
        if self.target_mode not in ("prob", "pm1"):
            raise InvalidInputError(f"unknown target_mode {self.target_mode!r}")
        if self.grad_method not in ("shift", "adjoint"):
            raise InvalidInputError(f"unknown grad_method {self.grad_method!r}")


def ansatz_ops(n: int, layers: int) -> list[tuple]:
    """Gate list ``("ry", qubit, angle_index)`` / ``("cx", control, target)``."""
    ops = [("ry", q, q) for q in range(n)]
    p = n
    for _ in range(layers):
        # 1-based odd controls are 0-based even indices
        ops += [("cx", c, c + 1) for c in range(0, n - 1, 2)]
        ops += [("ry", q, p + q) for q in range(n)]
        p += n
        ops += [("cx", c, c + 1) for c in range(1, n - 1, 2)]
        ops += [("ry", q, p + q) for q in range(n)]
        p += n
    return ops


# -- contract-level circuit functions (one sample, complex statevector) -------

def encode(x) -> qsim.Statevector:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 1:
        raise InvalidInputError("empty feature vector")
    if np.any((x < 0) | (x > 1)):
        log.debug("encoding features outside [0, 1]: %s", x)
    s = qsim.new_zero_state(x.size)
    for k, xk in enumerate(x):
        s = qsim.apply_ry(s, k, np.pi * xk)
    return s


def apply_ansatz(s: qsim.Statevector, p: VqcParams) -> qsim.Statevector:
    if s.num_qubits != p.num_qubits:
        raise InvalidInputError(f"state has {s.num_qubits} qubits, parameters {p.num_qubits}")
    for op in ansatz_ops(p.num_qubits, p.num_layers):
        if op[0] == "ry":
            s = qsim.apply_ry(s, op[1], p.angles[op[2]])
        else:
            s = qsim.apply_cnot(s, op[1], op[2])
    return s


def _check_features(x, p: VqcParams) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p.num_qubits:
        raise InvalidInputError(f"{x.size} features for {p.num_qubits} qubits")
    return x


def predict(x, p: VqcParams) -> float:
    x = _check_features(x, p)
    return qsim.prob_first_qubit_one(apply_ansatz(encode(x), p))


def label_from_prob(prob, threshold: float = 0.5):
    return np.where(np.asarray(prob) < threshold, -1, 1)


def classify(x, p: VqcParams, threshold: float = 0.5) -> int:
    return int(label_from_prob(predict(x, p), threshold))


# -- batched engine ----------------------------------------------------------

@dataclass(frozen=True)
class CompiledCircuit:
    """Ansatz restricted to the backward light cone of qubit 0."""

    num_qubits: int
    num_layers: int
    qubits: tuple[int, ...]  # original qubit index of each simulated qubit
    ops: tuple[tuple, ...]  # qubit indices are local

    @property
    def width(self) -> int:
        return len(self.qubits)

    @property
    def active_params(self) -> np.ndarray:
        return np.array(sorted(op[2] for op in self.ops if op[0] == "ry"), dtype=int)

    @classmethod
    def build(cls, n: int, layers: int, prune: bool = True) -> "CompiledCircuit":
        ops = ansatz_ops(n, layers)
        if not prune:
            return cls(n, layers, tuple(range(n)), tuple(ops))
        live = {0}
        kept = []
        for op in reversed(ops):
            if op[0] == "ry":
                if op[1] in live:
                    kept.append(op)
            elif op[1] in live or op[2] in live:
                live.update(op[1:])
                kept.append(op)
        qubits = tuple(sorted(live))
        local = {q: i for i, q in enumerate(qubits)}
        remap = []
        for op in reversed(kept):
            if op[0] == "ry":
                remap.append(("ry", local[op[1]], op[2]))
            else:
                remap.append(("cx", local[op[1]], local[op[2]]))
        return cls(n, layers, qubits, tuple(remap))

    def encoded(self, x: np.ndarray) -> np.ndarray:
        """Product states for a batch ``x`` of shape (B, N) -> (B, 2**width)."""
        xs = x[:, self.qubits]
        amps = np.ones((x.shape[0], 1))
        for k in range(self.width):
            q = np.stack([np.cos(np.pi * xs[:, k] / 2), np.sin(np.pi * xs[:, k] / 2)], axis=1)
            amps = (amps[:, :, None] * q[:, None, :]).reshape(x.shape[0], -1)
        return amps

    def run(self, amps: np.ndarray, angles: np.ndarray) -> np.ndarray:
        """Evolve a (B, 2**width) batch of real states; returns a new array."""
        out = np.array(amps, dtype=float, order="C", copy=True)
        for op in self.ops:
            if op[0] == "ry":
                _kernels.ry(out, self.width, op[1], angles[op[2]])
            else:
                _kernels.cnot_rows(out, self.width, op[1], op[2])
        return out

    def probs(self, x: np.ndarray, angles: np.ndarray) -> np.ndarray:
        return qsim.first_qubit_one_prob(self.run(self.encoded(x), angles), self.width)


_CIRCUITS: dict[tuple[int, int], CompiledCircuit] = {}


def compiled(n: int, layers: int) -> CompiledCircuit:
    key = (n, layers)
    if key not in _CIRCUITS:
        _CIRCUITS[key] = CompiledCircuit.build(n, layers)
    return _CIRCUITS[key]


def _batch_arrays(batch: LabeledDataset, p: VqcParams):
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    if batch.num_features != p.num_qubits:
        raise InvalidInputError(f"{batch.num_features} features for {p.num_qubits} qubits")
    return batch.features, batch.labels


def predict_batch(x: np.ndarray, p: VqcParams) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != p.num_qubits:
        raise InvalidInputError(f"{x.shape[1]} features for {p.num_qubits} qubits")
    return compiled(p.num_qubits, p.num_layers).probs(x, p.angles)


def _outputs(prob: np.ndarray, y: np.ndarray, target_mode: str):
    """Model output, target and d(output)/d(prob) for the chosen label mapping."""
    if target_mode == "prob":
        return prob, (y + 1) / 2, 1.0
    return 2 * prob - 1, y, 2.0


def mse_loss(batch: LabeledDataset, p: VqcParams, target_mode: str = "prob") -> float:
    x, y = _batch_arrays(batch, p)
    out, t, _ = _outputs(predict_batch(x, p), y, target_mode)
    return float(np.mean((out - t) ** 2))


def gradient(batch: LabeledDataset, p: VqcParams, target_mode: str = "prob") -> np.ndarray:
    """Gradient of ``mse_loss`` by the parameter-shift rule.

    For an Ry angle, ``dP/dtheta = (P(theta + pi/2) - P(theta - pi/2)) / 2``
    exactly.  The two shifted copies for an angle branch off the unshifted
    state just before its gate, so the shared prefix is simulated once.
    Angles outside the light cone have zero gradient.
    """
    x, y = _batch_arrays(batch, p)
    circ = compiled(p.num_qubits, p.num_layers)
    grad = np.zeros_like(p.angles)
    per_sample = 2 * max(circ.active_params.size, 1) * (1 << circ.width)
    chunk = max(1, SHIFT_BUDGET // per_sample)
    for start in range(0, len(y), chunk):
        grad += _shift_partial(circ, x[start:start + chunk], y[start:start + chunk], p.angles, len(y), target_mode)
    return grad


# floats held by the shifted branches at once
SHIFT_BUDGET = 1 << 24


def _shift_partial(circ, x, y, angles, total, target_mode):
    m, B = circ.width, len(y)
    grad = np.zeros_like(angles)
    base = np.ascontiguousarray(circ.encoded(x))
    branches = np.empty((2 * circ.active_params.size * B, base.shape[1]))
    owner = []  # angle index of each branch pair
    nb = 0  # live branch sets
    for op in circ.ops:
        if op[0] == "ry":
            _, q, k = op
            th = angles[k]
            branches[nb * B:(nb + 1) * B] = base
            branches[(nb + 1) * B:(nb + 2) * B] = base
            sets = np.full(nb + 2, th)
            sets[nb] += np.pi / 2
            sets[nb + 1] -= np.pi / 2
            _kernels.ry(branches[:(nb + 2) * B], m, q, sets, B)
            _kernels.ry(base, m, q, th)
            owner.append(k)
            nb += 2
        else:
            _kernels.cnot_rows(base, m, op[1], op[2])
            if nb:
                _kernels.cnot_rows(branches[:nb * B], m, op[1], op[2])
    if not owner:
        return grad
    out, t, dout = _outputs(qsim.first_qubit_one_prob(base, m), y, target_mode)
    dloss = 2 * (out - t) * dout / total  # dL/dprob per sample
    pr = qsim.first_qubit_one_prob(branches[:nb * B], m).reshape(-1, 2, B)
    grad[np.array(owner, dtype=int)] = ((pr[:, 0] - pr[:, 1]) / 2) @ dloss
    return grad


def adjoint_gradient(batch: LabeledDataset, p: VqcParams, target_mode: str = "prob") -> np.ndarray:
    """Same gradient as ``gradient`` by reverse-mode sweep through the circuit.

    Costs about three circuit evaluations regardless of the parameter count.
    """
    x, y = _batch_arrays(batch, p)
    circ = compiled(p.num_qubits, p.num_layers)
    m = circ.width
    psi = circ.run(circ.encoded(x), p.angles)
    prob = qsim.first_qubit_one_prob(psi, m)
    out, t, dout = _outputs(prob, y, target_mode)
    w = 2 * (out - t) * dout / len(y)
    lam = psi.copy()
    lam[:, : 1 << (m - 1)] = 0.0
    lam *= w[:, None]  # fold dL/dprob into the adjoint state
    grad = np.zeros_like(p.angles)
    for op in reversed(circ.ops):
        if op[0] == "ry":
            _, q, k = op
            half = p.angles[k] / 2
            # dRy/dtheta = Ry(theta + pi) / 2, and d<M> carries a factor 2
            grad[k] = _kernels.ry_adjoint_step(psi, lam, m, q, np.cos(half), np.sin(half))
        else:
            _kernels.cnot_rows(psi, m, op[1], op[2])
            _kernels.cnot_rows(lam, m, op[1], op[2])
    return grad


class Adam:
    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class VqcModel:
    params: VqcParams
    threshold: float = 0.5
    target_mode: str = "prob"
    history: dict = field(default_factory=dict)

    @property
    def num_features(self) -> int:
        return self.params.num_qubits

    @property
    def param_count(self) -> int:
        return count_params(self.params.num_qubits, self.params.num_layers)

    @property
    def stored_param_count(self) -> int:
        return self.params.angles.size

    def predict_proba(self, x) -> np.ndarray:
        return predict_batch(x, self.params)

    def predict_labels(self, x) -> np.ndarray:
        return label_from_prob(self.predict_proba(x), self.threshold)

    def loss(self, ds: LabeledDataset) -> float:
        return mse_loss(ds, self.params, self.target_mode)


def fit(train: LabeledDataset, cfg: VqcTrainConfig, val: LabeledDataset | None = None) -> VqcModel:
    """Mini-batch Adam with learning rate ``lr0 * decay**epoch``.

    History holds per-epoch training loss and accuracy (after the epoch), the
    mean gradient norm, the angle vector at the end of each epoch and, when
    ``val`` is given, validation accuracy.
    """
    n, nq = train.features.shape
    rng = np.random.default_rng(cfg.seed)
    params = VqcParams.random(nq, cfg.layers, rng)
    model = VqcModel(params, cfg.threshold, cfg.target_mode)
    hist = {"loss": [], "train_acc": [], "grad_norm": [], "val_acc": [], "angles": []}
    grad_fn = gradient if cfg.grad_method == "shift" else adjoint_gradient
    opt = Adam(params.angles.size, cfg.beta1, cfg.beta2, cfg.adam_eps)
    angles = params.angles.copy()
    for epoch in range(cfg.epochs):
        lr = cfg.lr0 * cfg.decay ** epoch
        order = rng.permutation(n)
        norms = []
        for start in range(0, n, cfg.batch_size):
            batch = train.subset(order[start:start + cfg.batch_size])
            g = grad_fn(batch, params.with_angles(angles), cfg.target_mode)
            norms.append(float(np.linalg.norm(g)))
            angles = opt.step(angles, g, lr)
        model.params = params.with_angles(angles)
        loss = model.loss(train)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        hist["loss"].append(loss)
        hist["train_acc"].append(float(np.mean(model.predict_labels(train.features) == train.labels)))
        hist["grad_norm"].append(float(np.mean(norms)))
        hist["angles"].append(angles.copy())
        if val is not None:
            hist["val_acc"].append(float(np.mean(model.predict_labels(val.features) == val.labels)))
    model.history = hist
    return model


def save_params(p: VqcParams, path, threshold: float = 0.5) -> None:
    lines = [f"{FORMAT_TAG} {p.num_qubits} {p.num_layers} {threshold!r}"]
    lines.append(" ".join(format(a, ".17g") for a in p.angles))
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> tuple[VqcParams, float]:
    head, body = Path(path).read_text().split("\n", 1)
    parts = head.split()
    if " ".join(parts[:2]) != FORMAT_TAG:
        raise InvalidInputError(f"{path}: not a {FORMAT_TAG} file")
    n, layers, threshold = int(parts[2]), int(parts[3]), float(parts[4])
    return VqcParams(n, layers, np.array(body.split(), dtype=float)), threshold
