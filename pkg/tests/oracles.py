"""Independent reference implementations used as test oracles.

Nothing here imports from qmvit: dense matrices are built from scratch so
agreement with the package is meaningful.
"""
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
PZ = np.array([[1, 0], [0, -1]], dtype=complex)


def rot(axis: str, theta: float) -> np.ndarray:
    """exp(-i theta P / 2) by the closed form cos I - i sin P."""
    p = {"X": PX, "Y": PY, "Z": PZ}[axis]
    return math.cos(theta / 2) * I2 - 1j * math.sin(theta / 2) * p


def on_qubit(m: np.ndarray, q: int, n: int) -> np.ndarray:
    # little endian: qubit 0 is the rightmost Kronecker factor
    out = np.ones((1, 1), dtype=complex)
    for k in range(n - 1, -1, -1):
        out = np.kron(out, m if k == q else I2)
    return out


def cnot(control: int, target: int, n: int) -> np.ndarray:
    p0 = np.array([[1, 0], [0, 0]], dtype=complex)
    p1 = np.array([[0, 0], [0, 1]], dtype=complex)
    return on_qubit(p0, control, n) + on_qubit(p1, control, n) @ on_qubit(PX, target, n)


def gate_op(kind: str, n: int, target: int, control=None, angle=0.0) -> np.ndarray:
    if kind == "H":
        return on_qubit(HAD, target, n)
    if kind == "CNOT":
        return cnot(control, target, n)
    return on_qubit(rot(kind[1], angle), target, n)


def unitary(ops, n: int) -> np.ndarray:
    """ops: iterable of (kind, target, control, angle)."""
    u = np.eye(2 ** n, dtype=complex)
    for kind, t, c, a in ops:
        u = gate_op(kind, n, t, c, a) @ u
    return u


def gate_tuples(circuit):
    return [(g.kind, g.target, g.control, g.angle) for g in circuit.gates]


def zero(n: int) -> np.ndarray:
    v = np.zeros(2 ** n, dtype=complex)
    v[0] = 1
    return v


def z_expect(psi: np.ndarray, j: int, n: int) -> float:
    return float(np.real(np.conj(psi) @ on_qubit(PZ, j, n) @ psi))


def loader_ops(x, axis="X", hadamard=True, sign=-1.0):
    ops = []
    for q, v in enumerate(x):
        if hadamard:
            ops.append(("H", q, None, 0.0))
        ops.append(("R" + axis, q, None, sign * v))
    return ops


def ansatz_ops(theta, n: int, layers: int, ring=True):
    ops = []
    pairs = [(q, q + 1) for q in range(n - 1)]
    if ring and n >= 2:
        pairs.append((n - 1, 0))
    for layer in range(layers):
        for q in range(n):
            ops.append(("RX", q, None, theta[layer * n + q]))
        for a, b in pairs:
            ops.append(("CNOT", b, a, 0.0))
    return ops


def circuit_z(x, theta, n, layers, target, axis="X", hadamard=True, sign=-1.0, ring=True):
    u = unitary(loader_ops(x, axis, hadamard, sign) + ansatz_ops(theta, n, layers, ring), n)
    return z_expect(u @ zero(n), target, n)


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gradient of scalar f at x by central differences."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))) if a.size else 0.0


def pairwise_auc(scores, positive) -> float:
    """Probability a random positive outranks a random negative, ties counting half."""
    scores = np.asarray(scores, float)
    positive = np.asarray(positive, bool)
    pos, neg = scores[positive], scores[~positive]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def hand_metrics(cm):
    """Per-class precision/recall/F1/specificity by plain loops over a confusion matrix."""
    cm = np.asarray(cm)
    n = cm.shape[0]
    total = cm.sum()
    out = []
    for i in range(n):
        tp = cm[i, i]
        fp = sum(cm[j, i] for j in range(n) if j != i)
        fn = sum(cm[i, j] for j in range(n) if j != i)
        tn = total - tp - fp - fn
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        spec = tn / (tn + fp) if tn + fp else 1.0
        out.append(dict(precision=prec, recall=rec, f1=f1, specificity=spec, support=tp + fn))
    return out


def hand_mcc(cm) -> float:
    """MCC as the Pearson correlation of one-hot truth and prediction indicator vectors."""
    cm = np.asarray(cm)
    n = cm.shape[0]
    truth, pred = [], []
    for i in range(n):
        for j in range(n):
            for _ in range(int(cm[i, j])):
                truth.append(np.eye(n)[i])
                pred.append(np.eye(n)[j])
    t, p = np.array(truth), np.array(pred)
    t -= t.mean(axis=0)
    p -= p.mean(axis=0)
    num = np.sum(t * p)
    den = math.sqrt(np.sum(t * t) * np.sum(p * p))
    return num / den if den else 0.0
