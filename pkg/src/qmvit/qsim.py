"""Dense statevector simulator.

Amplitudes are stored little-endian: bit ``q`` of a basis index holds the
value of qubit ``q``.  Gate kernels act on strided amplitude pairs so a gate
costs O(2^n); :func:`dense_unitary` builds full matrices and exists only as a
test oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_QUBITS = 20
MAX_DENSE_QUBITS = 6

GATE_KINDS = ("H", "RX", "RY", "RZ", "CNOT")
ROTATIONS = ("RX", "RY", "RZ")

_SQRT1_2 = 1.0 / math.sqrt(2.0)


class CapacityError(ValueError):
    """Raised when a register or matrix would exceed the supported size."""


class QubitIndexError(IndexError):
    """Raised when a gate or observable references a qubit outside the register."""


class DimensionError(ValueError):
    """Raised on qubit-count or vector-length mismatches."""


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT needs a control qubit")
            if self.control == self.target:
                raise ValueError("CNOT control equals target")
        elif self.control is not None:
            raise ValueError(f"{self.kind} takes no control qubit")
        if not math.isfinite(self.angle):
            raise ValueError("gate angle must be finite")

    def qubits(self) -> tuple:
        return (self.target,) if self.control is None else (self.control, self.target)


def H(q: int) -> Gate:
    return Gate("H", q)


def RX(q: int, angle: float) -> Gate:
    return Gate("RX", q, angle=float(angle))


def RY(q: int, angle: float) -> Gate:
    return Gate("RY", q, angle=float(angle))


def RZ(q: int, angle: float) -> Gate:
    return Gate("RZ", q, angle=float(angle))


def CNOT(control: int, target: int) -> Gate:
    return Gate("CNOT", target, control=control)


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate):
        for q in g.qubits():
            if not 0 <= q < self.n_qubits:
                raise QubitIndexError(f"qubit {q} outside register of {self.n_qubits}")

    def append(self, g: Gate) -> "Circuit":
        self._check(g)
        self.gates.append(g)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self):
        return len(self.gates)

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)


class StateVector:
    """Normalized amplitude vector over ``n_qubits`` qubits."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, n_qubits: int, amps: np.ndarray, check: bool = True):
        amps = np.asarray(amps, dtype=np.complex128)
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise CapacityError(f"{n_qubits} qubits outside 1..{MAX_QUBITS}")
        if amps.shape != (1 << n_qubits,):
            raise DimensionError(f"expected {1 << n_qubits} amplitudes, got {amps.shape}")
        if check:
            if not np.all(np.isfinite(amps)):
                raise ValueError("non-finite amplitude")
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"state norm {norm} is not 1")
        self.n_qubits = n_qubits
        self.amps = amps

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amps.copy(), check=False)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def new_zero_state(n: int) -> StateVector:
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"{n} qubits outside 1..{MAX_QUBITS}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n, amps, check=False)


# --- batched kernels -------------------------------------------------------
#
# A batch of states is an array of shape (B, 2, ..., 2) with n trailing axes;
# qubit q lives on axis n - q (the last axis is the least significant bit).
# Rotation angles may be scalars or length-B arrays.


def _axis(n: int, q: int) -> int:
    return n - q


def _pair(psi: np.ndarray, n: int, q: int):
    ax = _axis(n, q)
    idx0 = [slice(None)] * psi.ndim
    idx1 = [slice(None)] * psi.ndim
    idx0[ax] = 0
    idx1[ax] = 1
    return tuple(idx0), tuple(idx1)


def _bcast(angle, psi: np.ndarray):
    a = np.asarray(angle, dtype=np.float64)
    if a.ndim == 0:
        return a
    return a.reshape((-1,) + (1,) * (psi.ndim - 2))


def batch_apply(psi: np.ndarray, n: int, kind: str, target: int, control=None, angle=0.0) -> np.ndarray:
    """Apply one gate to every state in ``psi``; returns a new array."""
    i0, i1 = _pair(psi, n, target)
    a0 = psi[i0]
    a1 = psi[i1]
    out = np.empty_like(psi)
    if kind == "H":
        out[i0] = (a0 + a1) * _SQRT1_2
        out[i1] = (a0 - a1) * _SQRT1_2
    elif kind == "RX":
        half = _bcast(angle, psi) / 2.0
        c, s = np.cos(half), np.sin(half)
        out[i0] = c * a0 - 1j * s * a1
        out[i1] = c * a1 - 1j * s * a0
    elif kind == "RY":
        half = _bcast(angle, psi) / 2.0
        c, s = np.cos(half), np.sin(half)
        out[i0] = c * a0 - s * a1
        out[i1] = s * a0 + c * a1
    elif kind == "RZ":
        half = _bcast(angle, psi) / 2.0
        out[i0] = np.exp(-1j * half) * a0
        out[i1] = np.exp(1j * half) * a1
    elif kind == "CNOT":
        out[...] = psi
        ax_c = _axis(n, control)
        sel = [slice(None)] * psi.ndim
        sel[ax_c] = 1
        sel = tuple(sel)
        # within the control=1 slab, swap target values; the slab drops one axis
        sub = psi[sel]
        t_ax = _axis(n, target) - (1 if _axis(n, target) > ax_c else 0)
        out[sel] = np.flip(sub, axis=t_ax)
    else:
        raise ValueError(f"unknown gate kind {kind!r}")
    return out


def batch_zero(batch: int, n: int) -> np.ndarray:
    psi = np.zeros((batch,) + (2,) * n, dtype=np.complex128)
    psi[(slice(None),) + (0,) * n] = 1.0
    return psi


def batch_expectation_z(psi: np.ndarray, n: int, targets: Optional[Sequence[int]] = None) -> np.ndarray:
    """<Z_t> for each state and target; shape (B, len(targets))."""
    if targets is None:
        targets = range(n)
    p = (psi.real ** 2 + psi.imag ** 2)
    b = p.shape[0]
    cols = []
    for t in targets:
        i0, i1 = _pair(p, n, t)
        cols.append(p[i0].reshape(b, -1).sum(axis=1) - p[i1].reshape(b, -1).sum(axis=1))
    return np.stack(cols, axis=1)


# --- single-state API ------------------------------------------------------


def _check_gate(state: StateVector, g: Gate):
    for q in g.qubits():
        if not 0 <= q < state.n_qubits:
            raise QubitIndexError(f"qubit {q} outside register of {state.n_qubits}")


def apply_gate(state: StateVector, g: Gate) -> StateVector:
    _check_gate(state, g)
    n = state.n_qubits
    psi = state.amps.reshape((1,) + (2,) * n)
    out = batch_apply(psi, n, g.kind, g.target, g.control, g.angle)
    return StateVector(n, out.reshape(-1), check=False)


def run_circuit(c: Circuit, init: StateVector) -> StateVector:
    if c.n_qubits != init.n_qubits:
        raise DimensionError(f"circuit has {c.n_qubits} qubits, state has {init.n_qubits}")
    n = c.n_qubits
    psi = init.amps.reshape((1,) + (2,) * n)
    for g in c.gates:
        psi = batch_apply(psi, n, g.kind, g.target, g.control, g.angle)
    return StateVector(n, psi.reshape(-1).copy(), check=False)


def probabilities(state: StateVector) -> np.ndarray:
    a = state.amps
    return a.real ** 2 + a.imag ** 2


def expectation_z(state: StateVector, j: int) -> float:
    if not 0 <= j < state.n_qubits:
        raise QubitIndexError(f"qubit {j} outside register of {state.n_qubits}")
    p = probabilities(state)
    bit = (np.arange(p.size) >> j) & 1
    return float(np.sum(np.where(bit == 0, p, -p)))


# --- dense oracle ----------------------------------------------------------


def gate_matrix(g: Gate) -> np.ndarray:
    """2x2 matrix of a single-qubit gate (not defined for CNOT)."""
    t = g.angle / 2.0
    c, s = math.cos(t), math.sin(t)
    if g.kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQRT1_2
    if g.kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if g.kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if g.kind == "RZ":
        return np.array([[np.exp(-1j * t), 0], [0, np.exp(1j * t)]], dtype=np.complex128)
    raise ValueError(f"no 2x2 matrix for {g.kind}")


def _full_matrix(g: Gate, n: int) -> np.ndarray:
    dim = 1 << n
    if g.kind == "CNOT":
        m = np.zeros((dim, dim), dtype=np.complex128)
        for k in range(dim):
            j = k ^ (1 << g.target) if (k >> g.control) & 1 else k
            m[j, k] = 1.0
        return m
    # qubit q is bit q, so in a Kronecker product it sits q places from the right
    m = np.ones((1, 1), dtype=np.complex128)
    small = gate_matrix(g)
    for q in reversed(range(n)):
        m = np.kron(m, small if q == g.target else np.eye(2))
    return m


def dense_unitary(c: Circuit) -> np.ndarray:
    if c.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense unitary limited to {MAX_DENSE_QUBITS} qubits")
    u = np.eye(1 << c.n_qubits, dtype=np.complex128)
    for g in c.gates:
        u = _full_matrix(g, c.n_qubits) @ u
    return u


# --- text dump -------------------------------------------------------------


def dump_circuit(c: Circuit) -> str:
    """One gate per line: ``H q``, ``RX q angle`` or ``CNOT control target``, after a ``QUBITS n`` header."""
    lines = [f"QUBITS {c.n_qubits}"]
    for g in c.gates:
        if g.kind == "CNOT":
            lines.append(f"CNOT {g.control} {g.target}")
        elif g.kind == "H":
            lines.append(f"H {g.target}")
        else:
            lines.append(f"{g.kind} {g.target} {g.angle!r}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("QUBITS"):
        raise ValueError("circuit dump must start with 'QUBITS n'")
    c = Circuit(int(lines[0].split()[1]))
    for ln in lines[1:]:
        parts = ln.split()
        kind = parts[0].upper()
        if kind == "CNOT":
            c.append(CNOT(int(parts[1]), int(parts[2])))
        elif kind == "H":
            c.append(H(int(parts[1])))
        elif kind in ROTATIONS:
            c.append(Gate(kind, int(parts[1]), angle=float(parts[2])))
        else:
            raise ValueError(f"unknown gate line {ln!r}")
    return c
