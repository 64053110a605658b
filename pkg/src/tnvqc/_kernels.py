"""In-place numba kernels for batches of real statevectors.

Arrays are ``(rows, 2**n)``; row ``m`` belongs to angle set ``m // block``.
Qubit ``q`` maps to bit ``n - 1 - q`` of the basis index.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def ry_rows(a, n, q, cos, sin, block):
    rows, dim = a.shape
    lo = 1 << (n - q - 1)
    for m in range(rows):
        c = cos[m // block]
        s = sin[m // block]
        for h in range(0, dim, 2 * lo):
            for l in range(h, h + lo):
                a0 = a[m, l]
                a1 = a[m, l + lo]
                a[m, l] = c * a0 - s * a1
                a[m, l + lo] = s * a0 + c * a1


@numba.njit(cache=True)
def cnot_rows(a, n, control, target):
    rows, dim = a.shape
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    for m in range(rows):
        for i in range(dim):
            if (i & cbit) and not (i & tbit):
                j = i | tbit
                tmp = a[m, i]
                a[m, i] = a[m, j]
                a[m, j] = tmp


def ry(a: np.ndarray, n: int, q: int, theta, block: int | None = None) -> None:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ry_rows(a, n, q, np.cos(theta / 2), np.sin(theta / 2), block or a.shape[0])


@numba.njit(cache=True)
def ry_adjoint_step(psi, lam, n, q, c, s):
    """Undo Ry(theta) on ``psi`` and ``lam``; return ``sum(lam . Ry(theta + pi) . psi)``
    with ``psi`` taken before the gate, which is the gate's contribution to
    ``d<M>/dtheta``."""
    rows, dim = psi.shape
    lo = 1 << (n - q - 1)
    acc = 0.0
    for m in range(rows):
        for h in range(0, dim, 2 * lo):
            for l in range(h, h + lo):
                p0 = c * psi[m, l] + s * psi[m, l + lo]
                p1 = -s * psi[m, l] + c * psi[m, l + lo]
                l0 = lam[m, l]
                l1 = lam[m, l + lo]
                # Ry(theta + pi) = [[-s, -c], [c, -s]]
                acc += l0 * (-s * p0 - c * p1) + l1 * (c * p0 - s * p1)
                psi[m, l] = p0
                psi[m, l + lo] = p1
                lam[m, l] = c * l0 + s * l1
                lam[m, l + lo] = -s * l0 + c * l1
    return acc
