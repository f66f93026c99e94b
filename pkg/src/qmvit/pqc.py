"""Layered RX/CNOT ansatz, Pauli-Z readout heads, and parameter-shift gradients.

The scalar API (``expectation_head``, ``param_shift_grad``, ``input_shift_grad``)
works on one state at a time.  :func:`evaluate_with_grads` is the batched
version used for training: every shifted copy of every row is stacked into one
simulator batch.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoding import AngleEncodingSpec, batch_load, loader_gates
from .qsim import (
    CNOT,
    RX,
    Circuit,
    DimensionError,
    H,
    QubitIndexError,
    StateVector,
    batch_apply,
    batch_expectation_z,
)

ENTANGLERS = ("cnot_ring", "cnot_chain")
SHIFT = math.pi / 2

# rows per simulator call; bounds peak memory for wide registers
_CHUNK_ROWS = 4096
_executor: Optional[ThreadPoolExecutor] = None
_n_threads = 1


def set_num_threads(n: int):
    """Worker count for batched circuit evaluation. Results do not depend on it."""
    global _executor, _n_threads
    n = max(1, int(n))
    if n == _n_threads:
        return
    if _executor is not None:
        _executor.shutdown(wait=True)
    _executor = ThreadPoolExecutor(max_workers=n) if n > 1 else None
    _n_threads = n


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    n_layers: int = 1
    entangler: str = "cnot_ring"
    initial_hadamard: bool = False
    reupload: bool = False

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("ansatz needs at least one qubit")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.entangler not in ENTANGLERS:
            raise ValueError(f"unknown entangler {self.entangler!r}")

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits

    def cnot_pairs(self) -> list:
        n = self.n_qubits
        if n < 2:
            return []
        pairs = [(q, q + 1) for q in range(n - 1)]
        if self.entangler == "cnot_ring":
            pairs.append((n - 1, 0))
        return pairs

    def gate_count(self) -> int:
        h = self.n_qubits if self.initial_hadamard else 0
        return h + self.n_layers * (self.n_qubits + len(self.cnot_pairs()))


@dataclass(frozen=True)
class ObservableSpec:
    targets: tuple

    def __post_init__(self):
        if len(self.targets) == 0:
            raise ValueError("observable needs at least one target")

    def check(self, n_qubits: int):
        for t in self.targets:
            if not 0 <= t < n_qubits:
                raise QubitIndexError(f"observable target {t} outside {n_qubits} qubits")


def init_params(spec: AnsatzSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-math.pi / 8, math.pi / 8, size=spec.n_params)


def _check_theta(spec: AnsatzSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.size != spec.n_params:
        raise DimensionError(f"ansatz needs {spec.n_params} parameters, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite circuit parameter")
    return theta


def build_ansatz(spec: AnsatzSpec, theta) -> Circuit:
    theta = _check_theta(spec, theta)
    n = spec.n_qubits
    c = Circuit(n)
    if spec.initial_hadamard:
        c.extend(H(q) for q in range(n))
    for layer in range(spec.n_layers):
        for q in range(n):
            c.append(RX(q, theta[layer * n + q]))
        for a, b in spec.cnot_pairs():
            c.append(CNOT(a, b))
    return c


def batch_ansatz(psi: np.ndarray, spec: AnsatzSpec, theta: np.ndarray, x: Optional[np.ndarray] = None,
                 enc: Optional[AngleEncodingSpec] = None) -> np.ndarray:
    """Run the ansatz on a batch.

    ``theta`` is (P,) or (B, P).  With ``spec.reupload`` the loader is applied
    before every layer after the first, using ``x`` of shape (B, n_occ, n).
    """
    n = spec.n_qubits
    theta = np.asarray(theta)
    per_row = theta.ndim == 2
    if spec.initial_hadamard:
        for q in range(n):
            psi = batch_apply(psi, n, "H", q)
    for layer in range(spec.n_layers):
        if spec.reupload and layer > 0:
            psi = batch_load(x[:, layer], enc, psi)
        for q in range(n):
            k = layer * n + q
            psi = batch_apply(psi, n, "RX", q, angle=theta[:, k] if per_row else theta[k])
        for a, b in spec.cnot_pairs():
            psi = batch_apply(psi, n, "CNOT", b, control=a)
    return psi


def n_loads(spec: AnsatzSpec) -> int:
    return max(1, spec.n_layers) if spec.reupload else 1


def _run(x_occ: np.ndarray, theta: np.ndarray, spec: AnsatzSpec, enc: AngleEncodingSpec,
         targets: Sequence[int]) -> np.ndarray:
    psi = batch_load(x_occ[:, 0], enc)
    psi = batch_ansatz(psi, spec, theta, x_occ, enc)
    return batch_expectation_z(psi, spec.n_qubits, targets)


def _variants(x: np.ndarray, theta: np.ndarray, spec: AnsatzSpec, want_x: bool, want_theta: bool):
    """Stack the base point with every +-pi/2 shifted copy; returns (x_occ, theta) batches."""
    b, n = x.shape
    occ = n_loads(spec)
    p = theta.size
    x_occ = np.repeat(x[:, None, :], occ, axis=1)
    xs = [x_occ]
    ts = [np.broadcast_to(theta, (b, p))]
    if want_theta:
        for k in range(p):
            for sgn in (1.0, -1.0):
                t = np.array(theta, copy=True)
                t[k] += sgn * SHIFT
                xs.append(x_occ)
                ts.append(np.broadcast_to(t, (b, p)))
    if want_x:
        for o in range(occ):
            for j in range(n):
                for sgn in (1.0, -1.0):
                    xv = x_occ.copy()
                    xv[:, o, j] += sgn * SHIFT
                    xs.append(xv)
                    ts.append(np.broadcast_to(theta, (b, p)))
    return np.concatenate(xs, axis=0), np.concatenate(ts, axis=0), len(xs)


def _evaluate_chunk(x, theta, spec, enc, targets, want_x, want_theta):
    b, n = x.shape
    p = theta.size
    occ = n_loads(spec)
    xv, tv, nv = _variants(x, theta, spec, want_x, want_theta)
    out = _run(xv, tv, spec, enc, targets).reshape(nv, b, len(targets))
    e = out[0]
    pos = 1
    d_theta = d_x = None
    if want_theta:
        sh = out[pos:pos + 2 * p].reshape(p, 2, b, len(targets))
        d_theta = np.moveaxis((sh[:, 0] - sh[:, 1]) / 2.0, 0, -1)
        pos += 2 * p
    if want_x:
        sh = out[pos:pos + 2 * occ * n].reshape(occ, n, 2, b, len(targets))
        g = (sh[:, :, 0] - sh[:, :, 1]) / 2.0
        # accumulate re-uploads in fixed order
        acc = g[0]
        for o in range(1, occ):
            acc = acc + g[o]
        d_x = np.moveaxis(acc, 0, -1)
    return e, d_x, d_theta


def evaluate_with_grads(x: np.ndarray, theta, spec: AnsatzSpec, enc: AngleEncodingSpec,
                        targets: Sequence[int], want_x: bool = False, want_theta: bool = False):
    """Expectations <Z_t> for every row of ``x`` plus optional shift-rule Jacobians.

    Returns ``(E, dE/dx, dE/dtheta)`` with shapes (B, T), (B, T, n), (B, T, P).
    """
    x = np.asarray(x, dtype=np.float64)
    theta = _check_theta(spec, theta)
    if x.ndim != 2 or x.shape[1] != spec.n_qubits or enc.n_qubits != spec.n_qubits:
        raise DimensionError(f"expected rows of width {spec.n_qubits}, got {x.shape}")
    nv = 1 + (2 * theta.size if want_theta else 0) + (2 * n_loads(spec) * spec.n_qubits if want_x else 0)
    rows = max(1, _CHUNK_ROWS // nv)
    starts = range(0, x.shape[0], rows)
    job = lambda s: _evaluate_chunk(x[s:s + rows], theta, spec, enc, targets, want_x, want_theta)
    if _executor is not None and len(starts) > 1:
        parts = list(_executor.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    e = np.concatenate([p[0] for p in parts], axis=0)
    dx = np.concatenate([p[1] for p in parts], axis=0) if want_x else None
    dt = np.concatenate([p[2] for p in parts], axis=0) if want_theta else None
    return e, dx, dt


# --- single-state API ------------------------------------------------------


def _head_from_state(state_in: StateVector, spec: AnsatzSpec, theta, targets) -> np.ndarray:
    n = spec.n_qubits
    psi = state_in.amps.reshape((1,) + (2,) * n)
    psi = batch_ansatz(psi, spec, theta)
    return batch_expectation_z(psi, n, targets)[0]


def expectation_head(state_in: StateVector, spec: AnsatzSpec, theta, obs: ObservableSpec) -> np.ndarray:
    if state_in.n_qubits != spec.n_qubits:
        raise DimensionError(f"state has {state_in.n_qubits} qubits, ansatz {spec.n_qubits}")
    if spec.reupload:
        raise ValueError("re-uploading ansatz needs the raw input; use evaluate_with_grads")
    obs.check(spec.n_qubits)
    theta = _check_theta(spec, theta)
    return _head_from_state(state_in, spec, theta, obs.targets)


def param_shift_grad(state_in: StateVector, spec: AnsatzSpec, theta, obs: ObservableSpec, t: int) -> np.ndarray:
    """d<Z_{targets[t]}>/d theta_k for every k, two shifted evaluations per parameter."""
    if state_in.n_qubits != spec.n_qubits:
        raise DimensionError(f"state has {state_in.n_qubits} qubits, ansatz {spec.n_qubits}")
    obs.check(spec.n_qubits)
    theta = _check_theta(spec, theta)
    target = obs.targets[t]
    p = theta.size
    if p == 0:
        return np.zeros(0)
    shifted = np.repeat(theta[None, :], 2 * p, axis=0)
    for k in range(p):
        shifted[2 * k, k] += SHIFT
        shifted[2 * k + 1, k] -= SHIFT
    n = spec.n_qubits
    psi = np.repeat(state_in.amps.reshape((1,) + (2,) * n), 2 * p, axis=0)
    e = batch_expectation_z(batch_ansatz(psi, spec, shifted), n, [target])[:, 0]
    return (e[0::2] - e[1::2]) / 2.0


def input_shift_grad(x, spec: AnsatzSpec, theta, obs: ObservableSpec, t: int,
                     enc: Optional[AngleEncodingSpec] = None) -> np.ndarray:
    """d<Z_{targets[t]}>/d x_j through the angle loader (default: H then RX(-x))."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.n_qubits:
        raise DimensionError(f"expected {spec.n_qubits} encoder angles, got {x.size}")
    obs.check(spec.n_qubits)
    if enc is None:
        enc = AngleEncodingSpec.uniform(spec.n_qubits)
    _, dx, _ = evaluate_with_grads(x[None, :], theta, spec, enc, [obs.targets[t]], want_x=True)
    return dx[0, 0]


def full_circuit(x, spec: AnsatzSpec, theta, enc: AngleEncodingSpec) -> Circuit:
    """Loader followed by the ansatz as one explicit gate list (re-uploads expanded)."""
    theta = _check_theta(spec, theta)
    c = Circuit(spec.n_qubits, loader_gates(enc, x))
    body = build_ansatz(AnsatzSpec(spec.n_qubits, 0, spec.entangler, spec.initial_hadamard), [])
    c.extend(body.gates)
    n = spec.n_qubits
    for layer in range(spec.n_layers):
        if spec.reupload and layer > 0:
            c.extend(loader_gates(enc, x))
        for q in range(n):
            c.append(RX(q, theta[layer * n + q]))
        for a, b in spec.cnot_pairs():
            c.append(CNOT(a, b))
    return c
