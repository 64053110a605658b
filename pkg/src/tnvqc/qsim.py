"""Dense statevector simulator restricted to Ry and CNOT.

Qubits are indexed from 0, and qubit 0 (the "first" qubit) is the most
significant bit of the basis-state index.  The kernels work on arrays of shape
``(..., 2**n)`` so that leading axes can carry batches of states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MAX_QUBITS = 24


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def ry_kernel(amps: np.ndarray, n: int, qubit: int, cos, sin) -> np.ndarray:
    """Apply Ry to ``qubit`` of every state in ``amps``.

    ``cos``/``sin`` are ``cos(theta/2)``/``sin(theta/2)``, scalars or arrays
    broadcastable against ``amps.shape[:-1]``.
    """
    lead = amps.shape[:-1]
    v = amps.reshape(lead + (1 << qubit, 2, 1 << (n - qubit - 1)))
    c = np.asarray(cos)[..., None, None]
    s = np.asarray(sin)[..., None, None]
    a0 = v[..., 0, :]
    a1 = v[..., 1, :]
    out = np.empty_like(v, dtype=np.result_type(amps, c))
    out[..., 0, :] = c * a0 - s * a1
    out[..., 1, :] = s * a0 + c * a1
    return out.reshape(amps.shape)


def cnot_kernel(amps: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    lead = amps.shape[:-1]
    v = amps.reshape(lead + (2,) * n).copy()
    nl = len(lead)
    sel = [slice(None)] * (nl + n)
    sel[nl + control] = 1
    sub = v[tuple(sel)]
    # the control axis is gone from ``sub``; shift the target axis if needed
    axis = nl + target - (1 if target > control else 0)
    v[tuple(sel)] = np.flip(sub, axis=axis)
    return v.reshape(amps.shape)


def first_qubit_one_prob(amps: np.ndarray, n: int) -> np.ndarray:
    half = 1 << (n - 1)
    upper = amps[..., half:]
    return np.sum(np.abs(upper) ** 2, axis=-1)


@dataclass(frozen=True, eq=False)
class Statevector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if self.num_qubits < 1 or amps.shape != (1 << self.num_qubits,):
            raise InvalidInputError(
                f"{self.num_qubits} qubits need {1 << max(self.num_qubits, 0)} amplitudes, got {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def marginal_one(self, qubit: int) -> float:
        """Probability that ``qubit`` reads 1."""
        p = self.probabilities().reshape(1 << qubit, 2, -1)
        return float(p[:, 1, :].sum())


def _check_qubit(s: Statevector, q: int):
    if not 0 <= q < s.num_qubits:
        raise InvalidInputError(f"qubit {q} out of range for {s.num_qubits} qubits")


def new_zero_state(n: int) -> Statevector:
    if not 1 <= n <= MAX_QUBITS:
        raise InvalidInputError(f"qubit count {n} outside [1, {MAX_QUBITS}]")
    amps = np.zeros(1 << n, dtype=complex)
    amps[0] = 1.0
    return Statevector(n, amps)


def basis_state(bits: str) -> Statevector:
    """State ``|bits>`` with ``bits[0]`` the first qubit, e.g. ``basis_state("10")``."""
    n = len(bits)
    amps = np.zeros(1 << n, dtype=complex)
    amps[int(bits, 2)] = 1.0
    return Statevector(n, amps)


def apply_ry(s: Statevector, qubit: int, theta: float) -> Statevector:
    _check_qubit(s, qubit)
    out = ry_kernel(s.amplitudes, s.num_qubits, qubit, np.cos(theta / 2), np.sin(theta / 2))
    return Statevector(s.num_qubits, out)


def apply_cnot(s: Statevector, control: int, target: int) -> Statevector:
    _check_qubit(s, control)
    _check_qubit(s, target)
    if control == target:
        raise InvalidInputError("control and target must differ")
    return Statevector(s.num_qubits, cnot_kernel(s.amplitudes, s.num_qubits, control, target))


def prob_first_qubit_one(s: Statevector) -> float:
    return float(first_qubit_one_prob(s.amplitudes, s.num_qubits))
