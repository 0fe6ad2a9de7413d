"""Dense statevector simulator with mid-circuit measurement.

Qubit 0 is the most significant bit of the basis-state index, so a
register ``[i, i+1, ..., j]`` reads as an MSB-first integer.  All
randomness comes from a :class:`numpy.random.Generator` attached to the
state; :func:`shot_rng` derives independent, replayable per-shot streams
from one root seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_QUBITS = 24
NORM_TOL = 1e-10

_SQ2 = 1 / math.sqrt(2)
_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2

GATE_ARITY = {"H": 1, "X": 1, "RX": 1, "RY": 1, "RZ": 1, "CNOT": 2, "XX": 2, "CPHASE": 2}
PARAMETRIC = {"RX", "RY", "RZ", "XX", "CPHASE"}
BASES = ("Z", "X", "Z+X", "Z-X")


class SimulationError(RuntimeError):
    pass


def shot_rng(seed: int, shot: int, role: int = 0) -> np.random.Generator:
    """Independent generator for (root seed, shot index, role)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(shot, role)))


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if kind not in GATE_ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        if len(self.qubits) != GATE_ARITY[kind]:
            raise ValueError(f"{kind} takes {GATE_ARITY[kind]} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{kind} qubit indices collide: {self.qubits}")
        if (kind in PARAMETRIC) != (self.theta is not None):
            raise ValueError(f"{kind} angle mismatch")

    def matrix(self) -> np.ndarray:
        return gate_matrix(self.kind, self.theta)

    def dump(self) -> str:
        parts = [self.kind, *map(str, self.qubits)]
        if self.theta is not None:
            parts.append(repr(float(self.theta)))
        return " ".join(parts)

    @classmethod
    def parse(cls, line: str) -> "GateOp":
        kind, *rest = line.split()
        n = GATE_ARITY[kind.upper()]
        qubits = tuple(int(v) for v in rest[:n])
        theta = float(rest[n]) if len(rest) > n else None
        return cls(kind, qubits, theta)


def gate_matrix(kind: str, theta: float | None = None) -> np.ndarray:
    kind = kind.upper()
    if kind == "H":
        return _H
    if kind == "X":
        return _X
    if kind in ("RX", "RY", "RZ"):
        pauli = {"RX": _X, "RY": _Y, "RZ": _Z}[kind]
        return math.cos(theta / 2) * _I2 - 1j * math.sin(theta / 2) * pauli
    if kind == "CNOT":
        return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    if kind == "XX":
        # exp(i theta X(x)X)
        return math.cos(theta) * np.eye(4, dtype=complex) + 1j * math.sin(theta) * np.kron(_X, _X)
    if kind == "CPHASE":
        return np.diag([1, 1, 1, np.exp(1j * theta)]).astype(complex)
    raise ValueError(f"unknown gate {kind!r}")


def dump_gates(gates: Iterable[GateOp]) -> str:
    return "".join(g.dump() + "\n" for g in gates)


def parse_gates(text: str) -> list[GateOp]:
    return [GateOp.parse(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]


@dataclass(frozen=True)
class MeasurementRecord:
    qubits: tuple[int, ...]
    basis: str
    outcome: str
    probability: float

    @property
    def sign(self) -> str:
        """``+`` for the +1 eigenstate of the measured operator (outcome bit 0)."""
        if len(self.outcome) != 1:
            raise ValueError("sign is defined for single-qubit records")
        return "+" if self.outcome == "0" else "-"


class StateVector:
    def __init__(self, n_qubits: int, rng: np.random.Generator | None = None, amplitudes=None):
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        self.n_qubits = n_qubits
        self.rng = rng if rng is not None else np.random.default_rng()
        if amplitudes is None:
            self.amplitudes = np.zeros(1 << n_qubits, dtype=complex)
            self.amplitudes[0] = 1.0
        else:
            amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
            if amps.size != 1 << n_qubits:
                raise ValueError("amplitude count does not match qubit count")
            if abs(np.vdot(amps, amps).real - 1) > NORM_TOL:
                raise ValueError("amplitudes are not normalized")
            self.amplitudes = amps.copy()

    @classmethod
    def basis_state(cls, n_qubits: int, index: int, rng=None) -> "StateVector":
        sv = cls(n_qubits, rng)
        sv.amplitudes[0] = 0
        sv.amplitudes[index] = 1
        return sv

    def copy(self, rng: np.random.Generator | None = None) -> "StateVector":
        return StateVector(self.n_qubits, rng if rng is not None else self.rng, self.amplitudes)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def _check(self, qubits: Sequence[int]) -> None:
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"repeated qubit index in {qubits}")
        for q in qubits:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} out of range for {self.n_qubits} qubits")

    def _tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    # -- unitary evolution ---------------------------------------------

    def apply_unitary(self, matrix: np.ndarray, qubits: Sequence[int]) -> "StateVector":
        qubits = tuple(qubits)
        self._check(qubits)
        k = len(qubits)
        u = np.asarray(matrix, dtype=complex).reshape((2,) * (2 * k))
        psi = np.tensordot(u, self._tensor(), axes=(list(range(k, 2 * k)), list(qubits)))
        psi = np.moveaxis(psi, list(range(k)), list(qubits))
        self.amplitudes = np.ascontiguousarray(psi).reshape(-1)
        return self

    def apply(self, gate: GateOp) -> "StateVector":
        return self.apply_unitary(gate.matrix(), gate.qubits)

    def apply_gates(self, gates: Iterable[GateOp]) -> "StateVector":
        for g in gates:
            self.apply(g)
        return self

    def apply_diagonal_phase(
        self, register: Sequence[int], phase_fn: Callable[[np.ndarray], np.ndarray] | np.ndarray
    ) -> "StateVector":
        """Multiply each basis amplitude by ``exp(i phase(k))``, k the register value.

        ``phase_fn`` is either an array of length ``2**len(register)`` or a
        vectorized callable on the integer array ``arange(2**len(register))``.
        """
        register = tuple(register)
        self._check(register)
        k = len(register)
        vals = np.arange(1 << k)
        phases = np.asarray(phase_fn(vals) if callable(phase_fn) else phase_fn, dtype=float)
        diag = np.exp(1j * phases).reshape((2,) * k)
        psi = np.moveaxis(self._tensor(), list(register), list(range(k)))
        psi = psi * diag.reshape(diag.shape + (1,) * (self.n_qubits - k))
        self.amplitudes = np.ascontiguousarray(np.moveaxis(psi, list(range(k)), list(register))).reshape(-1)
        return self

    def _register_fft(self, register: Sequence[int], inverse: bool) -> "StateVector":
        register = tuple(register)
        self._check(register)
        if list(register) != list(range(register[0], register[0] + len(register))):
            raise ValueError("QFT register must be contiguous and ascending")
        lead = 1 << register[0]
        dim = 1 << len(register)
        psi = self.amplitudes.reshape(lead, dim, -1)
        # QFT|j> = sum_k e^{+2 pi i jk/M}|k>/sqrt(M), i.e. numpy's ifft up to norm.
        out = np.fft.fft(psi, axis=1, norm="ortho") if inverse else np.fft.ifft(psi, axis=1, norm="ortho")
        self.amplitudes = out.reshape(-1)
        return self

    def qft(self, register: Sequence[int]) -> "StateVector":
        return self._register_fft(register, inverse=False)

    def qft_inv(self, register: Sequence[int]) -> "StateVector":
        return self._register_fft(register, inverse=True)

    # -- measurement ---------------------------------------------------

    def probabilities(self, register: Sequence[int]) -> np.ndarray:
        register = tuple(register)
        self._check(register)
        k = len(register)
        psi = np.moveaxis(self._tensor(), list(register), list(range(k))).reshape(1 << k, -1)
        return np.einsum("ij,ij->i", psi.real, psi.real) + np.einsum("ij,ij->i", psi.imag, psi.imag)

    def measure(self, register: Sequence[int]) -> MeasurementRecord:
        """Born-rule sample of ``register`` in Z; collapses and renormalizes in place."""
        register = tuple(register)
        if not register:
            raise ValueError("empty register")
        probs = self.probabilities(register)
        total = probs.sum()
        if total <= 1e-300:
            raise SimulationError("register has zero total probability")
        cdf = np.cumsum(probs / total)
        idx = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(probs) - 1)
        while probs[idx] == 0:  # guard against landing on a zero-width bin
            idx -= 1
        p = float(probs[idx] / total)
        k = len(register)
        psi = np.moveaxis(self._tensor(), list(register), list(range(k))).reshape(1 << k, -1)
        out = np.zeros_like(psi)
        out[idx] = psi[idx] / math.sqrt(probs[idx])
        out = np.moveaxis(out.reshape((2,) * self.n_qubits), list(range(k)), list(register))
        self.amplitudes = np.ascontiguousarray(out).reshape(-1)
        return MeasurementRecord(register, "Z", format(idx, f"0{k}b"), p)

    def measure_in_basis(self, qubit: int, basis: str) -> MeasurementRecord:
        """Measure one qubit in Z, X, Z+X or Z-X.

        Outcome ``"0"`` is the +1 eigenstate of the named operator
        (normalized).  The post-measurement state is that eigenstate.
        """
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis!r}")
        rot = basis_rotation(basis)
        for g in rot:
            self.apply(GateOp(g.kind, (qubit,), g.theta))
        rec = self.measure((qubit,))
        for g in reversed(rot):
            self.apply(GateOp(g.kind, (qubit,), None if g.theta is None else -g.theta))
        return MeasurementRecord(rec.qubits, basis, rec.outcome, rec.probability)


def basis_rotation(basis: str) -> list[GateOp]:
    """Single-qubit gates (on qubit 0) taking the basis' +1 eigenstate to |0>."""
    if basis == "Z":
        return []
    if basis == "X":
        return [GateOp("H", (0,))]
    if basis == "Z+X":
        return [GateOp("RY", (0,), -math.pi / 4)]
    if basis == "Z-X":
        return [GateOp("RY", (0,), math.pi / 4)]
    raise ValueError(f"unknown basis {basis!r}")


def eigenstate(basis: str, sign: str) -> np.ndarray:
    """Normalized eigenvector of the basis operator with eigenvalue ``sign``1."""
    c, s = math.cos(math.pi / 8), math.sin(math.pi / 8)
    plus = {
        "Z": np.array([1, 0], dtype=complex),
        "X": np.array([_SQ2, _SQ2], dtype=complex),
        "Z+X": np.array([c, s], dtype=complex),
        "Z-X": np.array([c, -s], dtype=complex),
    }[basis]
    if sign == "+":
        return plus
    return np.array([-plus[1].conjugate(), plus[0].conjugate()])


def dense_unitary(gates: Iterable[GateOp], n_qubits: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of a gate list (kron-product oracle)."""
    u = np.eye(1 << n_qubits, dtype=complex)
    for g in gates:
        u = embed(g.matrix(), g.qubits, n_qubits) @ u
    return u


def embed(matrix: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Lift a k-qubit matrix onto ``n_qubits`` by explicit index arithmetic."""
    k = len(qubits)
    dim = 1 << n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    shifts = [n_qubits - 1 - q for q in qubits]
    mask = sum(1 << s for s in shifts)
    for col in range(dim):
        sub_in = 0
        for s in shifts:
            sub_in = (sub_in << 1) | ((col >> s) & 1)
        base = col & ~mask
        for sub_out in range(1 << k):
            amp = matrix[sub_out, sub_in]
            if amp == 0:
                continue
            row = base
            for j, s in enumerate(shifts):
                if (sub_out >> (k - 1 - j)) & 1:
                    row |= 1 << s
            out[row, col] += amp
    return out
