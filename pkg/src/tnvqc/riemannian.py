"""Riemannian geometry of the fixed-rank TT manifold.

A tangent vector at ``W`` is stored as ``sum_k U_1..U_{k-1} dG_k V_{k+1}..V_d``
where ``U`` are the left-orthogonal and ``V`` the right-orthogonal cores of
``W``.  Every ``dG_k`` with ``k < d`` satisfies the gauge condition
``U_k^T dG_k = 0`` (both unfolded to ``(r_{k-1} n_k, r_k)``), which makes the
representation unique and the summands mutually orthogonal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .tt import TtTensor, orthogonalize, tt_round

DEFAULT_STEP = 0.05


@dataclass(frozen=True)
class ManifoldSpec:
    shape: tuple[int, ...]
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise InvalidInputError("rank must be >= 1")
        if not self.shape or any(n < 1 for n in self.shape):
            raise InvalidInputError(f"bad shape {self.shape}")


@dataclass(frozen=True, eq=False)
class TangentFrames:
    """Left/right canonical cores of a base point, shared by its tangent vectors."""

    left: tuple[np.ndarray, ...]
    right: tuple[np.ndarray, ...]

    @classmethod
    def at(cls, w: TtTensor) -> "TangentFrames":
        # the second left sweep only matters when w carries redundant rank
        left = orthogonalize(w, "left")
        right = orthogonalize(left, "right")
        left = orthogonalize(right, "left")
        if left.ranks != right.ranks:
            right = orthogonalize(left, "right")
        return cls(left.cores, right.cores)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.left)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.left)

    def point(self) -> TtTensor:
        return TtTensor(self.left)

    def gauge(self, k: int, delta: np.ndarray) -> np.ndarray:
        """Remove the component of ``delta`` along the column space of ``U_k``."""
        if k == len(self.left) - 1:
            return delta
        u = self.left[k]
        r0, n, r1 = u.shape
        um = u.reshape(r0 * n, r1)
        dm = delta.reshape(r0 * n, r1)
        return (dm - um @ (um.T @ dm)).reshape(delta.shape)


@dataclass(frozen=True, eq=False)
class TtTangentVector:
    frames: TangentFrames
    deltas: tuple[np.ndarray, ...]

    def to_tt(self) -> TtTensor:
        """Explicit TT with bond ranks at most twice those of the base point."""
        U, V, D = self.frames.left, self.frames.right, self.deltas
        d = len(D)
        if d == 1:
            return TtTensor((D[0],))
        cores = []
        for k in range(d):
            if k == 0:
                cores.append(np.concatenate([D[0], U[0]], axis=2))
            elif k == d - 1:
                cores.append(np.concatenate([V[k], D[k]], axis=0))
            else:
                r0, n, r1 = U[k].shape
                c = np.zeros((2 * r0, n, 2 * r1))
                c[:r0, :, :r1] = V[k]
                c[r0:, :, :r1] = D[k]
                c[r0:, :, r1:] = U[k]
                cores.append(c)
        return TtTensor(tuple(cores))

    def scaled(self, c: float) -> "TtTangentVector":
        return TtTangentVector(self.frames, tuple(c * x for x in self.deltas))

    def __add__(self, other: "TtTangentVector") -> "TtTangentVector":
        if other.frames is not self.frames:
            raise InvalidInputError("tangent vectors live at different base points")
        return TtTangentVector(self.frames, tuple(a + b for a, b in zip(self.deltas, other.deltas)))

    def norm(self) -> float:
        # summands are mutually orthogonal and the frames are isometries
        return float(np.sqrt(sum(np.sum(x * x) for x in self.deltas)))

    def gauge_residual(self) -> float:
        worst = 0.0
        for k, (u, x) in enumerate(zip(self.frames.left[:-1], self.deltas[:-1])):
            r0, n, r1 = u.shape
            worst = max(worst, float(np.abs(u.reshape(r0 * n, r1).T @ x.reshape(r0 * n, r1)).max()))
        return worst


def _as_frames(w) -> TangentFrames:
    return w if isinstance(w, TangentFrames) else TangentFrames.at(w)


def project_to_tangent(w, z: TtTensor) -> TtTangentVector:
    """Orthogonal projection of ``z`` onto the tangent space at ``w``."""
    fr = _as_frames(w)
    if fr.shape != z.shape:
        raise InvalidInputError(f"shape mismatch: {fr.shape} vs {z.shape}")
    U, V, Z = fr.left, fr.right, z.cores
    d = len(Z)
    lefts = [np.ones((1, 1))]
    for k in range(d - 1):
        lefts.append(np.einsum("ab,aic,bid->cd", lefts[-1], U[k], Z[k], optimize=True))
    rights = [np.ones((1, 1))]
    for k in range(d - 1, 0, -1):
        rights.append(np.einsum("cd,aic,bid->ab", rights[-1], V[k], Z[k], optimize=True))
    rights = rights[::-1]  # rights[k] contracts modes k+1..d
    deltas = []
    for k in range(d):
        dk = np.einsum("ab,bid,cd->aic", lefts[k], Z[k], rights[k], optimize=True)
        deltas.append(fr.gauge(k, dk))
    return TtTangentVector(fr, tuple(deltas))


def project_rank1_sum(w, factors: np.ndarray, weights: np.ndarray) -> TtTangentVector:
    """Project ``sum_s weights[s] * (factors[s, 0] o ... o factors[s, d-1])``.

    ``factors`` has shape ``(S, d, n)``.  Costs ``O(S d n r^2)`` and never forms
    the (rank ``S``) sum explicitly.
    """
    fr = _as_frames(w)
    factors = np.asarray(factors, dtype=float)
    weights = np.asarray(weights, dtype=float)
    S, d, n = factors.shape
    if fr.shape != (n,) * d:
        raise InvalidInputError(f"factor shape {(d, n)} does not match {fr.shape}")
    U, V = fr.left, fr.right
    # per-mode matmuls: far cheaper than einsum for large S
    lefts = [np.ones((S, 1))]
    for k in range(d - 1):
        acc = 0.0
        for i in range(n):
            acc = acc + (lefts[-1] * factors[:, k, i:i + 1]) @ U[k][:, i, :]
        lefts.append(acc)
    rights = [np.ones((S, 1))]
    for k in range(d - 1, 0, -1):
        acc = 0.0
        for i in range(n):
            acc = acc + (rights[-1] * factors[:, k, i:i + 1]) @ V[k][:, i, :].T
        rights.append(acc)
    rights = rights[::-1]
    deltas = []
    for k in range(d):
        lw = lefts[k] * weights[:, None]
        dk = np.stack([(lw * factors[:, k, i:i + 1]).T @ rights[k] for i in range(n)], axis=1)
        deltas.append(fr.gauge(k, dk))
    return TtTangentVector(fr, tuple(deltas))


def point_as_tangent(w) -> TtTangentVector:
    """``w`` itself, which lies in its own tangent space."""
    fr = _as_frames(w)
    deltas = [np.zeros_like(u) for u in fr.left[:-1]] + [fr.left[-1]]
    return TtTangentVector(fr, tuple(deltas))


def retract(w, p: TtTangentVector, alpha: float, rank=None) -> TtTensor:
    """Step to ``w - alpha * p`` (bond ranks <= 2r) and round back to ``w``'s ranks."""
    # p carries the canonical frames of its base point, which must be w
    fr = p.frames
    if fr.shape != tuple(w.shape):
        raise InvalidInputError(f"tangent vector shape {fr.shape} vs point {tuple(w.shape)}")
    moved = point_as_tangent(fr) + p.scaled(-alpha)
    target = fr.ranks if rank is None else rank
    return tt_round(moved.to_tt(), target, rtol=0.0)


def riemannian_step(w, euclid_grad: TtTensor, alpha: float = DEFAULT_STEP) -> TtTensor:
    fr = _as_frames(w)
    return retract(fr, project_to_tangent(fr, euclid_grad), alpha)


def tangent_basis_dense(w: TtTensor) -> np.ndarray:
    """Orthonormal basis (columns) of the tangent space, by differentiating the
    core-to-tensor map.  Dense; intended as a test oracle for small tensors."""
    cols = []
    for k, c in enumerate(w.cores):
        for idx in np.ndindex(*c.shape):
            e = np.zeros_like(c)
            e[idx] = 1.0
            cores = list(w.cores)
            cores[k] = e
            cols.append(TtTensor(tuple(cores)).full().ravel())
    jac = np.stack(cols, axis=1)
    u, s, _ = np.linalg.svd(jac, full_matrices=False)
    keep = s > 1e-10 * s[0]
    return u[:, keep]


def dense_projection(w: TtTensor, z: np.ndarray) -> np.ndarray:
    basis = tangent_basis_dense(w)
    z = np.asarray(z, dtype=float).ravel()
    return (basis @ (basis.T @ z)).reshape(w.shape)
