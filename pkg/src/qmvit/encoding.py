"""Classical-to-quantum feature maps: angle, quanvolutional, amplitude and basis encodings."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .qsim import (
    MAX_QUBITS,
    CapacityError,
    Circuit,
    Gate,
    H,
    StateVector,
    batch_apply,
    batch_zero,
)

RESCALE_MODES = ("identity", "pi_tanh")


class DegenerateInputError(ValueError):
    """Input cannot be turned into a normalized state (zero vector, empty set)."""


@dataclass
class AngleEncodingSpec:
    n_qubits: int
    axis_per_qubit: list = field(default_factory=list)
    prepend_hadamard: bool = True
    # R^dagger(x) = R(-x) for the Hadamard-style loader; the quanvolutional map rotates by +x
    dagger: bool = True

    def __post_init__(self):
        if not self.axis_per_qubit:
            self.axis_per_qubit = ["X"] * self.n_qubits
        self.axis_per_qubit = [a.upper() for a in self.axis_per_qubit]
        if len(self.axis_per_qubit) != self.n_qubits:
            raise ValueError("axis list length must equal n_qubits")
        for a in self.axis_per_qubit:
            if a not in ("X", "Y", "Z"):
                raise ValueError(f"bad rotation axis {a!r}")
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise CapacityError(f"{self.n_qubits} qubits outside 1..{MAX_QUBITS}")

    @classmethod
    def uniform(cls, n_qubits: int, axis: str = "X", prepend_hadamard: bool = True, dagger: bool = True):
        return cls(n_qubits, [axis] * n_qubits, prepend_hadamard, dagger)


def quanv_spec(n_qubits: int, axis: str = "X") -> AngleEncodingSpec:
    return AngleEncodingSpec.uniform(n_qubits, axis, prepend_hadamard=False, dagger=False)


def rescale_for_encoding(v, mode: str = "pi_tanh") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite value passed to encoder")
    if mode == "identity":
        return v.copy()
    if mode == "pi_tanh":
        return math.pi * np.tanh(v)
    raise ValueError(f"unknown rescale mode {mode!r}")


def loader_gates(spec: AngleEncodingSpec, x: Sequence[float]) -> list:
    """Gate list of the angle loader; ``spec.dagger`` negates every angle."""
    gates = []
    sign = -1.0 if spec.dagger else 1.0
    for j in range(spec.n_qubits):
        if spec.prepend_hadamard:
            gates.append(H(j))
        gates.append(Gate("R" + spec.axis_per_qubit[j], j, angle=sign * float(x[j])))
    return gates


def batch_load(x: np.ndarray, spec: AngleEncodingSpec, psi: np.ndarray | None = None) -> np.ndarray:
    """Encode every row of ``x`` (B, n) with the angle loader.

    Starts from |0...0> unless ``psi`` is given (used for re-uploading).
    """
    x = np.asarray(x, dtype=np.float64)
    n = spec.n_qubits
    sign = -1.0 if spec.dagger else 1.0
    if psi is None:
        psi = batch_zero(x.shape[0], n)
    for j in range(n):
        if spec.prepend_hadamard:
            psi = batch_apply(psi, n, "H", j)
        psi = batch_apply(psi, n, "R" + spec.axis_per_qubit[j], j, angle=sign * x[:, j])
    return psi


def _check_angles(x, n_max=MAX_QUBITS) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size < 1 or x.size > n_max:
        raise CapacityError(f"{x.size} features cannot be angle-encoded (1..{n_max} qubits)")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite angle")
    return x


def angle_encode(x, spec: AngleEncodingSpec | None = None) -> StateVector:
    """Data loader: per qubit, H then R_axis(-x_j) on |0>; X axis by default."""
    x = _check_angles(x)
    if spec is None:
        spec = AngleEncodingSpec.uniform(x.size)
    if spec.n_qubits != x.size:
        raise ValueError(f"spec has {spec.n_qubits} qubits but x has {x.size} entries")
    psi = batch_load(x[None, :], spec)
    return StateVector(x.size, psi.reshape(-1), check=False)


def quanv_encode(x, spec: AngleEncodingSpec | None = None) -> StateVector:
    """Per-qubit rotation exp(-i x_j/2 P_axis) on |0>, no Hadamard column."""
    x = _check_angles(x)
    if spec is None:
        spec = quanv_spec(x.size)
    if spec.prepend_hadamard:
        raise ValueError("quanvolutional encoding takes no Hadamard column")
    if spec.n_qubits != x.size:
        raise ValueError(f"spec has {spec.n_qubits} qubits but x has {x.size} entries")
    psi = batch_load(x[None, :], replace(spec, dagger=False))
    return StateVector(x.size, psi.reshape(-1), check=False)


def amplitude_encode(x) -> StateVector:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise DegenerateInputError("amplitude encoding needs a finite nonempty vector")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise DegenerateInputError("cannot amplitude-encode the zero vector")
    n = max(1, math.ceil(math.log2(x.size)))
    if n > MAX_QUBITS:
        raise CapacityError(f"{x.size} amplitudes need {n} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[: x.size] = x / norm
    return StateVector(n, amps, check=False)


def basis_encode(dataset: Iterable[str]) -> StateVector:
    """Uniform superposition over the distinct bitstrings in ``dataset``.

    The leftmost character is the highest qubit, so ``"01"`` is index 1.
    """
    strings = sorted(set(dataset))
    if not strings:
        raise DegenerateInputError("cannot basis-encode an empty dataset")
    width = len(strings[0])
    if any(len(s) != width for s in strings):
        raise ValueError("bitstrings must share one length")
    if not 1 <= width <= MAX_QUBITS:
        raise CapacityError(f"bitstring length {width} outside 1..{MAX_QUBITS}")
    amps = np.zeros(1 << width, dtype=np.complex128)
    weight = 1.0 / math.sqrt(len(strings))
    for s in strings:
        amps[int(s, 2)] = weight
    return StateVector(width, amps, check=False)


def loader_circuit(spec: AngleEncodingSpec, x: Sequence[float]) -> Circuit:
    return Circuit(spec.n_qubits, loader_gates(spec, x))
