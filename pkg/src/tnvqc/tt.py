"""Tensor-train (TT / MPS) format for real tensors.

Core ``k`` has shape ``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``; the entry
``A[i_1, ..., i_d]`` is the matrix product ``G_1[:, i_1, :] @ ... @ G_d[:, i_d, :]``.
Dense tensors are plain numpy arrays in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

# singular values below this fraction of the largest one are treated as zero
SVD_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class TtTensor:
    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=float) for c in self.cores)
        if not cores:
            raise InvalidInputError("a TT tensor needs at least one core")
        for k, c in enumerate(cores):
            if c.ndim != 3:
                raise InvalidInputError(f"core {k} has {c.ndim} dims, expected 3")
            if c.shape[1] < 1:
                raise InvalidInputError(f"core {k} has empty mode dimension")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise InvalidInputError("boundary ranks must be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise InvalidInputError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} != {cores[k + 1].shape[0]}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def num_params(self) -> int:
        return sum(c.size for c in self.cores)

    def full(self) -> np.ndarray:
        return tt_to_dense(self)

    def __getitem__(self, index) -> float:
        v = np.ones((1, 1))
        for c, i in zip(self.cores, index):
            v = v @ c[:, i, :]
        return float(v[0, 0])

    def __add__(self, other: "TtTensor") -> "TtTensor":
        return tt_add(self, other)

    def __sub__(self, other: "TtTensor") -> "TtTensor":
        return tt_add(self, tt_scale(other, -1.0))

    def __neg__(self) -> "TtTensor":
        return tt_scale(self, -1.0)

    def __mul__(self, c: float) -> "TtTensor":
        return tt_scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"TtTensor(shape={self.shape}, ranks={self.ranks})"


def max_ranks(shape: Sequence[int]) -> list[int]:
    """Largest attainable bond ranks for a tensor of this shape."""
    d = len(shape)
    out = [1]
    for k in range(1, d):
        left = int(np.prod(shape[:k], dtype=float))
        right = int(np.prod(shape[k:], dtype=float))
        out.append(min(left, right))
    out.append(1)
    return out


def _bond_caps(rank, d: int) -> list[int]:
    if np.isscalar(rank):
        return [1] + [int(rank)] * (d - 1) + [1]
    rank = list(rank)
    if len(rank) == d - 1:
        return [1] + [int(r) for r in rank] + [1]
    if len(rank) == d + 1:
        return [int(r) for r in rank]
    raise InvalidInputError(f"rank spec of length {len(rank)} for {d} cores")


def random_tt(shape: Sequence[int], rank, rng: np.random.Generator) -> TtTensor:
    """Gaussian random TT, bond ranks capped at what the shape allows."""
    d = len(shape)
    caps = _bond_caps(rank, d)
    full = max_ranks(shape)
    ranks = [min(a, b) for a, b in zip(caps, full)]
    cores = [rng.standard_normal((ranks[k], shape[k], ranks[k + 1])) for k in range(d)]
    return TtTensor(tuple(cores))


def zeros_tt(shape: Sequence[int]) -> TtTensor:
    return TtTensor(tuple(np.zeros((1, n, 1)) for n in shape))


def rank1_tt(vectors: Sequence[np.ndarray]) -> TtTensor:
    return TtTensor(tuple(np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors))


def _truncation_rank(s: np.ndarray, max_rank: int, delta: float, rtol: float) -> int:
    if s.size == 0:
        return 1
    keep = s.size
    if rtol > 0 and s[0] > 0:
        keep = int(np.count_nonzero(s > rtol * s[0]))
    elif s[0] == 0:
        keep = 1
    if delta > 0:
        # tail[k] = norm of s[k:]
        tail = np.sqrt(np.cumsum((s * s)[::-1])[::-1])
        ok = np.nonzero(tail <= delta)[0]
        if ok.size:
            keep = min(keep, int(ok[0]))
    keep = min(keep, max_rank)
    return max(keep, 1)


def tt_svd(t: np.ndarray, max_rank: int | None = None, eps: float = 0.0) -> TtTensor:
    """TT-SVD: sequential truncated SVDs of the unfoldings.

    The relative Frobenius error is at most ``eps`` when ``max_rank`` does not
    bind; when both bind, ``max_rank`` wins.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim < 1 or any(n < 1 for n in t.shape):
        raise InvalidInputError(f"degenerate tensor shape {t.shape}")
    if max_rank is not None and max_rank < 1:
        raise InvalidInputError("max_rank must be >= 1")
    if eps < 0:
        raise InvalidInputError("eps must be nonnegative")
    shape = t.shape
    d = len(shape)
    max_rank = np.iinfo(np.int64).max if max_rank is None else int(max_rank)
    delta = eps * np.linalg.norm(t) / np.sqrt(d - 1) if d > 1 else 0.0

    cores = []
    r_prev = 1
    rest = t.reshape(1, -1)
    for k in range(d - 1):
        mat = rest.reshape(r_prev * shape[k], -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = _truncation_rank(s, max_rank, delta, SVD_RTOL)
        cores.append(u[:, :r].reshape(r_prev, shape[k], r))
        rest = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, shape[-1], 1))
    return TtTensor(tuple(cores))


def tt_to_dense(t: TtTensor) -> np.ndarray:
    out = t.cores[0].reshape(t.shape[0], -1)
    for c in t.cores[1:]:
        out = out @ c.reshape(c.shape[0], -1)
        out = out.reshape(-1, c.shape[2])
    return out.reshape(t.shape)


def _check_same_shape(a: TtTensor, b: TtTensor):
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")


def tt_inner(a: TtTensor, b: TtTensor) -> float:
    """Sum of elementwise products, by core-wise contraction."""
    _check_same_shape(a, b)
    v = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        v = np.einsum("ab,aic,bid->cd", v, ca, cb, optimize=True)
    return float(v[0, 0])


def tt_add(a: TtTensor, b: TtTensor) -> TtTensor:
    _check_same_shape(a, b)
    if a.ndim == 1:
        return TtTensor((a.cores[0] + b.cores[0],))
    cores = []
    d = a.ndim
    for k, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra0, n, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        if k == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif k == d - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = ca
            c[ra0:, :, ra1:] = cb
            cores.append(c)
    return TtTensor(tuple(cores))


def tt_scale(a: TtTensor, c: float) -> TtTensor:
    return TtTensor((a.cores[0] * c,) + a.cores[1:])


def _qr_pos(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(mat)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def orthogonalize(t: TtTensor, direction: str = "left") -> TtTensor:
    """Left- or right-canonical form via QR sweeps.

    ``left``: cores 1..d-1 reshaped to ``(r_{k-1} n_k, r_k)`` have orthonormal
    columns.  ``right``: cores 2..d reshaped to ``(r_{k-1}, n_k r_k)`` have
    orthonormal rows.  R factors have nonnegative diagonals.
    """
    cores = list(t.cores)
    d = len(cores)
    if direction == "left":
        for k in range(d - 1):
            r0, n, r1 = cores[k].shape
            q, r = _qr_pos(cores[k].reshape(r0 * n, r1))
            cores[k] = q.reshape(r0, n, q.shape[1])
            cores[k + 1] = np.einsum("ab,bic->aic", r, cores[k + 1])
    elif direction == "right":
        for k in range(d - 1, 0, -1):
            r0, n, r1 = cores[k].shape
            q, r = _qr_pos(cores[k].reshape(r0, n * r1).T)
            cores[k] = q.T.reshape(q.shape[1], n, r1)
            cores[k - 1] = np.einsum("aib,cb->aic", cores[k - 1], r)
    else:
        raise InvalidInputError(f"direction must be 'left' or 'right', got {direction!r}")
    return TtTensor(tuple(cores))


def frobenius_norm(t: TtTensor) -> float:
    # norm of the last core of the left-canonical form; equals sqrt(<t, t>) but
    # does not lose half the digits to cancellation for near-zero tensors
    return float(np.linalg.norm(orthogonalize(t, "left").cores[-1]))


def tt_round(t: TtTensor, target_rank, rtol: float = SVD_RTOL) -> TtTensor:
    """Recompress to bond ranks at most ``target_rank`` (int or per-bond list).

    Right-orthogonalize, then sweep left to right with truncated SVDs, which
    gives the quasi-optimal TT-SVD truncation of ``t``.
    """
    d = t.ndim
    caps = _bond_caps(target_rank, d)
    cores = list(orthogonalize(t, "right").cores)
    for k in range(d - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0 * n, r1), full_matrices=False)
        r = _truncation_rank(s, caps[k + 1], 0.0, rtol)
        cores[k] = u[:, :r].reshape(r0, n, r)
        sv = s[:r, None] * vt[:r]
        cores[k + 1] = np.einsum("ab,bic->aic", sv, cores[k + 1])
    return TtTensor(tuple(cores))
