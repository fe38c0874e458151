"""Dense statevector primitives.

Qubit 0 is the most significant bit of the amplitude index, so the basis
state ``|b0 b1 ... b_{n-1}>`` lives at index ``sum(b_k << (n - 1 - k))``.
This matches ``np.kron(a, b)`` placing ``a`` on the lower-numbered qubits.

Every function here is pure: inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

MAX_QUBITS = 20

SQRT2_INV = 1.0 / np.sqrt(2.0)

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = (PAULI_X + PAULI_Z) * SQRT2_INV
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

_PAULIS = {"X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

BRA_ZERO = np.array([1, 0], dtype=complex)
BRA_ONE = np.array([0, 1], dtype=complex)
BRA_PLUS = np.array([1, 1], dtype=complex) * SQRT2_INV
BRA_MINUS = np.array([1, -1], dtype=complex) * SQRT2_INV


class CapacityError(ValueError):
    """Raised when a register would exceed ``MAX_QUBITS``."""


class ComparisonError(ValueError):
    """Raised when comparing two zero vectors up to phase."""


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.n_qubits < 0:
            raise ValueError("n_qubits must be non-negative")
        if self.n_qubits > MAX_QUBITS:
            raise CapacityError(f"{self.n_qubits} qubits exceeds limit {MAX_QUBITS}")
        if amps.size != 2**self.n_qubits:
            raise ValueError(
                f"expected {2 ** self.n_qubits} amplitudes, got {amps.size}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else -1
        if n < 0 or 2**n != amps.size:
            raise ValueError(f"length {amps.size} is not a power of two")
        return cls(n, amps)

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        _check_capacity(n)
        amps = np.zeros(2**n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes / np.sqrt(self.norm_sq))

    def scalar(self) -> complex:
        """The single amplitude of a 0-qubit state."""
        if self.n_qubits != 0:
            raise ValueError("scalar() needs a fully contracted state")
        return complex(self.amplitudes[0])

    def tensor(self, other: "StateVector") -> "StateVector":
        _check_capacity(self.n_qubits + other.n_qubits)
        return StateVector(
            self.n_qubits + other.n_qubits, np.kron(self.amplitudes, other.amplitudes)
        )

    def __len__(self):
        return self.amplitudes.size


def _check_capacity(n: int) -> None:
    if n > MAX_QUBITS:
        raise CapacityError(f"{n} qubits exceeds limit {MAX_QUBITS}")


def _check_index(state: StateVector, q: int) -> None:
    if not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit {q} out of range for {state.n_qubits} qubits")


def make_plus_state(n: int) -> StateVector:
    if n < 1:
        raise ValueError("need at least one qubit")
    _check_capacity(n)
    return StateVector(n, np.full(2**n, 2.0 ** (-n / 2), dtype=complex))


def rotation_gate(axis: str, angle: float) -> np.ndarray:
    """``exp(-i angle P / 2)`` for the Pauli ``P`` named by ``axis``."""
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    pauli = _PAULIS[axis.upper()]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * pauli


def rx(angle: float) -> np.ndarray:
    return rotation_gate("X", angle)


def ry(angle: float) -> np.ndarray:
    return rotation_gate("Y", angle)


def rz(angle: float) -> np.ndarray:
    return rotation_gate("Z", angle)


def is_unitary(u: np.ndarray, atol: float = 1e-12) -> bool:
    u = np.asarray(u)
    return u.shape[0] == u.shape[1] and np.allclose(
        u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0
    )


def apply_1q(state: StateVector, q: int, u: np.ndarray) -> StateVector:
    _check_index(state, q)
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    out = np.tensordot(np.asarray(u, dtype=complex), psi, axes=([1], [q]))
    out = np.moveaxis(out, 0, q)
    return StateVector(n, out.reshape(-1))


def apply_2q(state: StateVector, p: int, q: int, u: np.ndarray) -> StateVector:
    """Apply a 4x4 gate with ``p`` as its high (first) qubit and ``q`` as its low."""
    _check_index(state, p)
    _check_index(state, q)
    if p == q:
        raise ValueError("two-qubit gate needs distinct qubits")
    n = state.n_qubits
    psi = state.amplitudes.reshape((2,) * n)
    gate = np.asarray(u, dtype=complex).reshape(2, 2, 2, 2)
    out = np.tensordot(gate, psi, axes=([2, 3], [p, q]))
    out = np.moveaxis(out, [0, 1], [p, q])
    return StateVector(n, out.reshape(-1))


def cz_sign_mask(n: int, p: int, q: int) -> np.ndarray:
    """Boolean mask of basis indices where qubits ``p`` and ``q`` are both 1."""
    idx = np.arange(2**n)
    return ((idx >> (n - 1 - p)) & 1).astype(bool) & ((idx >> (n - 1 - q)) & 1).astype(
        bool
    )


def apply_cz(state: StateVector, p: int, q: int) -> StateVector:
    _check_index(state, p)
    _check_index(state, q)
    if p == q:
        raise ValueError("CZ needs two distinct qubits")
    amps = state.amplitudes.copy()
    amps[cz_sign_mask(state.n_qubits, p, q)] *= -1
    return StateVector(state.n_qubits, amps)


def project_out(state: StateVector, q: int, bra) -> tuple[StateVector, complex]:
    """Contract ``bra`` against qubit ``q`` and drop it from the register.

    The residual is unnormalized: for a normalized input its squared norm is
    the probability of the outcome.  The returned scale is ``sqrt`` of that
    squared norm relative to the input's, kept for callers that track
    contraction factors.
    """
    _check_index(state, q)
    n = state.n_qubits
    bra = np.asarray(bra, dtype=complex).reshape(2)
    psi = state.amplitudes.reshape((2,) * n)
    out = np.tensordot(bra, psi, axes=([0], [q]))
    residual = StateVector(n - 1, out.reshape(-1))
    in_norm = state.norm_sq
    scale = np.sqrt(residual.norm_sq / in_norm) if in_norm > 0 else 0.0
    return residual, complex(scale)


def _as_array(x: Union[StateVector, np.ndarray]) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.amplitudes
    return np.asarray(x, dtype=complex)


def distance_up_to_phase(a, b) -> float:
    """``min_phi || a/|a| - e^{i phi} b/|b| ||`` for vectors or matrices."""
    va = _as_array(a).reshape(-1)
    vb = _as_array(b).reshape(-1)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0 and nb == 0:
        raise ComparisonError("both arguments are zero")
    if na == 0 or nb == 0:
        return 1.0
    ua, ub = va / na, vb / nb
    # explicit difference at the optimal phase; sqrt(2 - 2|<a|b>|) loses ~8 digits
    inner = np.vdot(ub, ua)
    phase = inner / abs(inner) if abs(inner) > 0 else 1.0
    return float(np.linalg.norm(ua - phase * ub))
