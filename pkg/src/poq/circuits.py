"""Commit circuits for both protocols and their branch-dependent suffixes.

Factoring: Hadamards on x and y, the phase oracle ``exp(2 pi i x^2 y / N)``
(either as one diagonal block or compiled into ZZZ/ZZ/Z rotations built
from XX gates), then an inverse QFT on y.

LWE: for each row of A, Fourier-basis addition of ``<a_i, x> + b y_i``
into a log2(q)-qubit ancilla, CNOT of its MSB into output bit i, and the
mirror-image uncompute.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .sim import GateOp, StateVector
from .tcf import LweInstance, RabinInstance

TWO_PI = 2 * math.pi
_ANGLE_EPS = 1e-12


def _wrap(angle: float) -> float:
    a = math.fmod(angle, TWO_PI)
    if a < 0:
        a += TWO_PI
    return 0.0 if min(a, TWO_PI - a) < _ANGLE_EPS else a


@dataclass(frozen=True)
class PhaseOracle:
    """Diagonal block ``exp(i phases[k])`` on an MSB-first register."""

    register: tuple[int, ...]
    phases: np.ndarray
    label: str = "ORACLE"

    def apply(self, state: StateVector) -> None:
        state.apply_diagonal_phase(self.register, self.phases)

    def dump(self) -> str:
        return " ".join([self.label, *map(str, self.register)])


@dataclass(frozen=True)
class QFTBlock:
    register: tuple[int, ...]
    inverse: bool = False

    def apply(self, state: StateVector) -> None:
        (state.qft_inv if self.inverse else state.qft)(self.register)

    def dump(self) -> str:
        return " ".join(["IQFT" if self.inverse else "QFT", *map(str, self.register)])


@dataclass(frozen=True)
class MeasureOp:
    """Measurement point; ``basis=None`` means the verifier supplies it later."""

    name: str
    qubits: tuple[int, ...]
    basis: str | None = "Z"

    def dump(self) -> str:
        return " ".join(["MEASURE", self.name, *map(str, self.qubits), self.basis or "?"])


Step = Union[GateOp, PhaseOracle, QFTBlock]


def apply_steps(state: StateVector, steps: Iterable[Step]) -> StateVector:
    for s in steps:
        if isinstance(s, GateOp):
            state.apply(s)
        else:
            s.apply(state)
    return state


def invert_gates(gates: Sequence[GateOp]) -> list[GateOp]:
    return [GateOp(g.kind, g.qubits, None if g.theta is None else -g.theta) for g in reversed(gates)]


# -- gate-level building blocks ----------------------------------------------


def qft_gates(register: Sequence[int], inverse: bool = False) -> list[GateOp]:
    """H / controlled-phase / swap decomposition of the (inverse) QFT."""
    reg = list(register)
    t = len(reg)
    gates: list[GateOp] = []
    for j in range(t):
        gates.append(GateOp("H", (reg[j],)))
        for k in range(j + 1, t):
            gates.append(GateOp("CPHASE", (reg[k], reg[j]), TWO_PI / 2 ** (k - j + 1)))
    for j in range(t // 2):
        a, b = reg[j], reg[t - 1 - j]
        gates += [GateOp("CNOT", (a, b)), GateOp("CNOT", (b, a)), GateOp("CNOT", (a, b))]
    return invert_gates(gates) if inverse else gates


def zz_gates(a: int, b: int, angle: float) -> list[GateOp]:
    """``exp(i angle Z_a Z_b)`` as an XX gate between Y rotations."""
    return [
        GateOp("RY", (a,), math.pi / 2),
        GateOp("RY", (b,), math.pi / 2),
        GateOp("XX", (a, b), angle),
        GateOp("RY", (a,), -math.pi / 2),
        GateOp("RY", (b,), -math.pi / 2),
    ]


def yy_gates(a: int, b: int, angle: float) -> list[GateOp]:
    """``exp(i angle Y_a Y_b)`` as an XX gate between Z rotations."""
    return [
        GateOp("RZ", (a,), -math.pi / 2),
        GateOp("RZ", (b,), -math.pi / 2),
        GateOp("XX", (a, b), angle),
        GateOp("RZ", (a,), math.pi / 2),
        GateOp("RZ", (b,), math.pi / 2),
    ]


def zzz_cascade(pair: tuple[int, int], targets: Sequence[tuple[int, float]]) -> list[GateOp]:
    """``prod_t exp(-i theta_t Y_a Z_b X_t)`` via one YY pair around an XX chain."""
    a, b = pair
    ts = [t for t, _ in targets]
    if len({a, b, *ts}) != 2 + len(ts):
        raise ValueError(f"cascade indices overlap: pair={pair}, targets={ts}")
    gates = yy_gates(a, b, math.pi / 4)
    for t, theta in targets:
        gates.append(GateOp("XX", (b, t), theta))
    gates += yy_gates(a, b, -math.pi / 4)
    return gates


# -- factoring --------------------------------------------------------------


@dataclass
class PhaseTermSet:
    """``exp(2 pi i x^2 y / N)`` as ``e^{i g} prod exp(i angle * Z...Z)``."""

    alpha: dict[tuple[int, int, int], float] = field(default_factory=dict)
    beta: dict[tuple[int, int], float] = field(default_factory=dict)
    gamma: dict[int, float] = field(default_factory=dict)
    global_phase: float = 0.0

    def diagonal(self, n_qubits: int) -> np.ndarray:
        """Reconstructed diagonal over all ``2^n_qubits`` basis states."""
        idx = np.arange(1 << n_qubits)
        z = 1 - 2 * ((idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))) & 1)
        phase = np.full(idx.shape, self.global_phase)
        for (i, j, k), ang in self.alpha.items():
            phase += ang * z[:, i] * z[:, j] * z[:, k]
        for (i, j), ang in self.beta.items():
            phase += ang * z[:, i] * z[:, j]
        for i, ang in self.gamma.items():
            phase += ang * z[:, i]
        return np.exp(1j * phase)


def factoring_layout(inst: RabinInstance) -> dict[str, tuple[int, ...]]:
    nx, ny = inst.n_x, inst.n_y
    return {
        "x": tuple(range(nx)),
        "y": tuple(range(nx, nx + ny)),
        "anc": (nx + ny,),
    }


def compute_phase_terms(N: int, n_x: int, n_y: int) -> PhaseTermSet:
    """Pauli-Z expansion of the bitwise form of ``2 pi x^2 y / N``.

    Qubits ``0..n_x-1`` hold x and ``n_x..n_x+n_y-1`` hold y, both MSB-first.
    """
    if (1 << n_y) < N:
        raise ValueError(f"n_y={n_y} too small for N={N}")
    wx = [2 ** (n_x - 1 - i) for i in range(n_x)]
    wy = [2 ** (n_y - 1 - k) for k in range(n_y)]
    ys = range(n_x, n_x + n_y)
    coeff: dict[frozenset, float] = defaultdict(float)  # on products of bits
    for a in range(n_x):
        for k, yq in enumerate(ys):
            coeff[frozenset((a, yq))] += TWO_PI * wx[a] * wx[a] * wy[k] / N
            for b in range(a + 1, n_x):
                coeff[frozenset((a, b, yq))] += 2 * TWO_PI * wx[a] * wx[b] * wy[k] / N
    # bit = (1 - Z)/2, so prod_{S} bit = 2^-|S| sum_{T subset S} (-1)^|T| Z_T
    zc: dict[tuple[int, ...], float] = defaultdict(float)
    for support, c in coeff.items():
        s = sorted(support)
        for r in range(len(s) + 1):
            for sub in itertools.combinations(s, r):
                zc[sub] += c * (-1) ** r / 2 ** len(s)
    terms = PhaseTermSet()
    for sub, c in zc.items():
        ang = _wrap(c)
        if len(sub) == 0:
            terms.global_phase = _wrap(c)
        elif ang == 0.0:
            continue
        elif len(sub) == 1:
            terms.gamma[sub[0]] = ang
        elif len(sub) == 2:
            terms.beta[sub] = ang
        else:
            terms.alpha[sub] = ang
    return terms


def phase_term_gates(terms: PhaseTermSet) -> list[GateOp]:
    """Gate list for the phase terms (global phase dropped).

    Three-body terms sharing an x pair are grouped into one cascade; single
    Z terms become RZ gates (software phase advances on hardware).
    """
    gates: list[GateOp] = []
    by_pair: dict[tuple[int, int], list[tuple[int, float]]] = defaultdict(list)
    for (i, j, k), ang in sorted(terms.alpha.items()):
        by_pair[(i, j)].append((k, ang))
    for (a, b), targets in by_pair.items():
        # Rx(-pi/2) maps Z_a -> Y_a and Ry(pi/2) maps Z_t -> X_t under conjugation
        pre = [GateOp("RX", (a,), -math.pi / 2)] + [GateOp("RY", (t,), math.pi / 2) for t, _ in targets]
        gates += pre
        gates += zzz_cascade((a, b), [(t, -ang) for t, ang in targets])
        gates += invert_gates(pre)
    for (i, j), ang in sorted(terms.beta.items()):
        gates += zz_gates(i, j, ang)
    for i, ang in sorted(terms.gamma.items()):
        gates.append(GateOp("RZ", (i,), -2 * ang))
    return gates


def direct_phase_oracle(inst: RabinInstance) -> PhaseOracle:
    layout = factoring_layout(inst)
    reg = layout["x"] + layout["y"]
    k = np.arange(1 << len(reg))
    x = k >> inst.n_y
    y = k & ((1 << inst.n_y) - 1)
    phases = TWO_PI * ((x * x * y) % inst.N) / inst.N
    return PhaseOracle(reg, phases, "ORACLE_X2Y")


@dataclass
class CircuitPlan:
    kind: str  # "factoring" | "lwe"
    n_qubits: int
    layout: dict[str, tuple[int, ...]]
    steps: list[Step]
    measure_register: str  # the commitment register

    @property
    def preimage_register(self) -> tuple[int, ...]:
        return self.layout["x"] if self.kind == "factoring" else self.layout["b"] + self.layout["x"]

    def gate_count(self) -> dict[str, int]:
        counts: dict[str, int] = defaultdict(int)
        for s in self.steps:
            counts[s.kind if isinstance(s, GateOp) else type(s).__name__] += 1
        return dict(counts)

    def dump(self) -> str:
        return "".join(s.dump() + "\n" for s in self.steps)

    def commit_state(self, rng=None) -> StateVector:
        """State just before the commitment measurement."""
        return apply_steps(StateVector(self.n_qubits, rng), self.steps)


def build_factoring_commit(inst: RabinInstance, compiled: bool = False) -> CircuitPlan:
    layout = factoring_layout(inst)
    x, y = layout["x"], layout["y"]
    n = inst.n_x + inst.n_y + 1
    steps: list[Step] = [GateOp("H", (q,)) for q in x + y]
    if compiled:
        steps += phase_term_gates(compute_phase_terms(inst.N, inst.n_x, inst.n_y))
        steps += qft_gates(y, inverse=True)
    else:
        steps.append(direct_phase_oracle(inst))
        steps.append(QFTBlock(y, inverse=True))
    return CircuitPlan("factoring", n, layout, steps, "y")


# -- LWE ---------------------------------------------------------------------


def lwe_layout(inst: LweInstance) -> dict[str, tuple[int, ...]]:
    k = inst.bits_per_entry
    nx = inst.n * k
    return {
        "b": (0,),
        "x": tuple(range(1, 1 + nx)),
        "anc": tuple(range(1 + nx, 1 + nx + k)),
        "out": tuple(range(1 + nx + k, 1 + nx + k + inst.m)),
    }


def lwe_row_gates(inst: LweInstance, row: int, layout) -> list[GateOp]:
    """QFT, controlled additions of ``<a_row, x> + b y_row``, inverse QFT."""
    q, k = inst.modulus, inst.bits_per_entry
    anc = layout["anc"]
    gates = qft_gates(anc)
    for l, aq in enumerate(anc):
        anc_w = 2 ** (k - 1 - l)
        for j in range(inst.n):
            for mbit in range(k):
                xq = layout["x"][j * k + mbit]
                ang = _wrap(TWO_PI * inst.A[row][j] * 2 ** (k - 1 - mbit) * anc_w / q)
                if ang:
                    gates.append(GateOp("CPHASE", (xq, aq), ang))
        ang = _wrap(TWO_PI * inst.y[row] * anc_w / q)
        if ang:
            gates.append(GateOp("CPHASE", (layout["b"][0], aq), ang))
    gates += qft_gates(anc, inverse=True)
    return gates


def build_lwe_commit(inst: LweInstance) -> CircuitPlan:
    layout = lwe_layout(inst)
    n = 1 + inst.n * inst.bits_per_entry + inst.bits_per_entry + inst.m
    steps: list[Step] = [GateOp("H", (q,)) for q in layout["b"] + layout["x"]]
    for i in range(inst.m):
        compute = lwe_row_gates(inst, i, layout)
        steps += compute
        steps.append(GateOp("CNOT", (layout["anc"][0], layout["out"][i])))
        steps += invert_gates(compute)
    return CircuitPlan("lwe", n, layout, steps, "out")


# -- branch suffixes ---------------------------------------------------------


def build_branch_suffix(
    plan: CircuitPlan, branch: str, r: str | None = None, basis: str | None = None
) -> list[GateOp | MeasureOp]:
    """Operations after the commitment for branch ``A`` or ``B``.

    Factoring B: fan the r-selected x qubits into the ancilla, measure x in
    X (giving d), then measure the ancilla in ``basis`` (``None`` until the
    verifier sends it).
    """
    pre = plan.preimage_register
    if branch == "A":
        return [MeasureOp("x", pre, "Z")]
    if branch != "B":
        raise ValueError(f"unknown branch {branch!r}")
    if plan.kind == "lwe":
        return [GateOp("H", (q,)) for q in pre] + [MeasureOp("d", pre, "Z")]
    if r is None or len(r) != len(pre) or set(r) - {"0", "1"}:
        raise ValueError(f"r must be a {len(pre)}-bit string")
    if "1" not in r:
        raise ValueError("r must be nonzero")
    anc = plan.layout["anc"][0]
    ops: list[GateOp | MeasureOp] = [GateOp("CNOT", (q, anc)) for q, bit in zip(pre, r) if bit == "1"]
    ops += [GateOp("H", (q,)) for q in pre]
    ops.append(MeasureOp("d", pre, "Z"))
    ops.append(MeasureOp("outcome", (anc,), basis))
    return ops
