"""Verifier and prover for one run of either protocol, plus the experiment loop.

A shot is driven by :class:`ShotSession`, a small state machine on the
verifier side that turns prover messages (commitment, responses) into the
next request or a final :class:`ShotRecord`.  The in-process loop and the
wire transport both drive the same session object, which is what makes
their record streams identical.
"""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import tcf
from .circuits import CircuitPlan, build_branch_suffix, build_factoring_commit, build_lwe_commit
from .numtheory import binary_inner_product, from_bits, to_bits, xor_bits
from .sim import GateOp, StateVector, eigenstate, shot_rng

log = logging.getLogger(__name__)

VERIFIER_ROLE = 0
PROVER_ROLE = 1
BELL_BASES = ("Z+X", "Z-X")
STATUSES = ("kept", "discarded-invalid-w", "discarded-zero-d", "unscorable", "void")


class ProtocolError(Exception):
    """A message arrived out of order or with a malformed payload."""


def protocol_kind(inst: tcf.Instance) -> str:
    return "factoring" if isinstance(inst, tcf.RabinInstance) else "lwe"


@dataclass(frozen=True)
class Challenge:
    branch: str
    r: str | None = None
    basis: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Challenge":
        return cls(obj["branch"], obj.get("r"), obj.get("basis"))


@dataclass
class ShotRecord:
    instance: str
    seed: int
    shot: int
    mode: str
    branch: str
    w: str | None = None
    claw: list[str] | None = None
    r: str | None = None
    basis: str | None = None
    responses: dict[str, str] = field(default_factory=dict)
    status: str = "void"
    verdict: str = "n/a"
    note: str | None = None

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    def canonical(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ShotRecord":
        return cls(**obj)


@dataclass
class Tally:
    N_A: int = 0
    k_A: int = 0
    N_B: int = 0
    k_B: int = 0
    per_r: dict[str, list[int]] = field(default_factory=dict)  # r -> [N, k]
    discards: dict[str, int] = field(default_factory=dict)

    def add(self, rec: ShotRecord) -> None:
        if rec.status != "kept":
            self.discards[rec.status] = self.discards.get(rec.status, 0) + 1
            return
        ok = int(rec.verdict == "accept")
        if rec.branch == "A":
            self.N_A += 1
            self.k_A += ok
        else:
            self.N_B += 1
            self.k_B += ok
            if rec.r is not None:
                n, k = self.per_r.get(rec.r, [0, 0])
                self.per_r[rec.r] = [n + 1, k + ok]

    def merge(self, other: "Tally") -> "Tally":
        out = Tally(self.N_A + other.N_A, self.k_A + other.k_A, self.N_B + other.N_B, self.k_B + other.k_B)
        for src in (self.per_r, other.per_r):
            for r, (n, k) in src.items():
                a, b = out.per_r.get(r, [0, 0])
                out.per_r[r] = [a + n, b + k]
        out.discards = dict(Counter(self.discards) + Counter(other.discards))
        return out

    @property
    def p_A(self) -> float:
        return self.k_A / self.N_A if self.N_A else math.nan

    @property
    def p_B(self) -> float:
        return self.k_B / self.N_B if self.N_B else math.nan

    def to_json(self) -> dict[str, Any]:
        return {
            "N_A": self.N_A,
            "k_A": self.k_A,
            "N_B": self.N_B,
            "k_B": self.k_B,
            "per_r": {r: list(v) for r, v in sorted(self.per_r.items())},
            "discards": dict(sorted(self.discards.items())),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Tally":
        return cls(
            obj["N_A"], obj["k_A"], obj["N_B"], obj["k_B"],
            {r: list(v) for r, v in obj.get("per_r", {}).items()},
            dict(obj.get("discards", {})),
        )

    @classmethod
    def from_records(cls, records) -> "Tally":
        t = cls()
        for rec in records:
            t.add(rec)
        return t


# -- verifier checks (pure) ----------------------------------------------------


def check_A(inst: tcf.Instance, x_bits: str, w: str) -> bool:
    """Standard-basis check: accept iff f(x) = w."""
    try:
        point = tcf.decode_point(inst, x_bits)
        return tcf.evaluate(inst, point) == w
    except ValueError as exc:
        raise ProtocolError(f"malformed preimage {x_bits!r}: {exc}") from exc


def check_B_lwe(inst: tcf.LweInstance, d: str, claw: tcf.Claw, include_b: bool = True) -> str:
    """Interference check for LWE; returns ``accept``, ``reject`` or ``zero-d``.

    With ``include_b`` the string d covers the b qubit as well as x, since
    the measured superposition is ``|0,x0> + |1,x1>``.
    """
    if len(d) != inst.input_width or set(d) - {"0", "1"}:
        raise ProtocolError(f"d must be a {inst.input_width}-bit string")
    v0 = tcf.encode_point(inst, claw.x0)
    v1 = tcf.encode_point(inst, claw.x1)
    if not include_b:
        d, v0, v1 = d[1:], v0[1:], v1[1:]
    if "1" not in d:
        return "zero-d"
    return "accept" if binary_inner_product(d, xor_bits(v0, v1)) == 0 else "reject"


def bell_expected(d: str, r: str, basis: str, claw: tcf.Claw) -> str | None:
    """Likelier outcome (``+``/``-``) for the ancilla state fixed by d, r and the claw.

    The ancilla holds ``(-1)^{d.x0}|r.x0> + (-1)^{d.x1}|r.x1>``.  Returns
    ``None`` when that vector vanishes, i.e. d is impossible for this claw.
    """
    n = len(r)
    x0, x1 = to_bits(claw.x0, n), to_bits(claw.x1, n)
    psi = np.zeros(2, dtype=complex)
    for x in (x0, x1):
        psi[binary_inner_product(r, x)] += (-1) ** binary_inner_product(d, x)
    norm = np.vdot(psi, psi).real
    if norm < 1e-12:
        return None
    p_plus = abs(np.vdot(eigenstate(basis, "+"), psi)) ** 2 / norm
    return "+" if p_plus > 0.5 else "-"


def check_B_factoring(d: str, r: str, basis: str, outcome: str, claw: tcf.Claw) -> bool:
    if len(d) != len(r) or set(d) - {"0", "1"}:
        raise ProtocolError(f"d must be a {len(r)}-bit string")
    if "1" not in r:
        raise ProtocolError("r must be nonzero")
    if basis not in BELL_BASES or outcome not in ("+", "-"):
        raise ProtocolError(f"bad basis/outcome {basis!r}/{outcome!r}")
    return bell_expected(d, r, basis, claw) == outcome


# -- verifier ----------------------------------------------------------------


def nonzero_strings(width: int) -> list[str]:
    return [to_bits(v, width) for v in range(1, 1 << width)]


def branch_schedule(shots_a: int, shots_b: int) -> list[str]:
    return ["A"] * shots_a + ["B"] * shots_b


@dataclass
class VerifierConfig:
    instance_id: str
    seed: int
    shots_a: int
    shots_b: int
    mode: str = "interactive"
    lwe_d_includes_b: bool = True

    def __post_init__(self):
        if self.mode not in ("interactive", "delayed"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.shots_a < 0 or self.shots_b < 0:
            raise ValueError("shot counts must be non-negative")


class Verifier:
    """Holds the trapdoor; issues challenges and scores shots."""

    def __init__(self, inst: tcf.Instance, td: tcf.Trapdoor | None, config: VerifierConfig):
        self.inst = inst
        self.td = td
        self.config = config
        self.kind = protocol_kind(inst)
        self.schedule = branch_schedule(config.shots_a, config.shots_b)
        self._r_values = nonzero_strings(inst.n_x) if self.kind == "factoring" else []
        self._inversions: dict[str, tcf.Claw | tcf.InvalidImage] = {}

    @property
    def shots(self) -> int:
        return len(self.schedule)

    def public_instance(self) -> dict[str, Any]:
        return tcf.instance_to_json(self.inst)

    def challenge(self, shot: int) -> Challenge:
        branch = self.schedule[shot]
        if branch == "A" or self.kind == "lwe":
            return Challenge(branch)
        b_index = shot - self.config.shots_a
        rng = shot_rng(self.config.seed, shot, VERIFIER_ROLE)
        r = self._r_values[b_index % len(self._r_values)]
        return Challenge("B", r, BELL_BASES[int(rng.integers(2))])

    def session(self, shot: int) -> "ShotSession":
        return ShotSession(self, shot)

    def receive_commit(self, w: str) -> tuple[tcf.Claw | tcf.InvalidImage, str]:
        """Invert ``w`` and decide whether the shot survives post-selection."""
        width = tcf.image_width(self.inst)
        if len(w) != width or set(w) - {"0", "1"}:
            raise ProtocolError(f"commitment must be a {width}-bit string")
        res = self._inversions.get(w)
        if res is None:
            res = self._inversions[w] = tcf.invert(self.inst, self.td, w)
        if isinstance(res, tcf.Claw):
            return res, "kept"
        if self.kind == "factoring":
            return res, "discarded-invalid-w"
        log.debug("unscorable LWE image %s (%s)", w, res.reason)
        return res, "unscorable"


class ShotSession:
    """Verifier-side state machine for one shot.

    Stages: ``commit`` -> ``branch`` -> (factoring B) ``basis`` -> ``done``.
    Every ``on_*`` call returns the next request ``(stage, payload)`` or
    ``None`` once the record is final.
    """

    def __init__(self, verifier: Verifier, shot: int):
        self.v = verifier
        self.shot = shot
        self.challenge = verifier.challenge(shot)
        cfg = verifier.config
        self.record = ShotRecord(cfg.instance_id, cfg.seed, shot, cfg.mode, self.challenge.branch)
        self.stage = "commit"
        self._claw: tcf.Claw | None = None
        if self.challenge.r is not None:
            self.record.r = self.challenge.r

    @property
    def done(self) -> bool:
        return self.stage == "done"

    def preview(self) -> Challenge | None:
        """Full challenge, revealed before the commitment only in delayed mode."""
        return self.challenge if self.v.config.mode == "delayed" else None

    def _finish(self, status: str, verdict: str = "n/a") -> None:
        self.record.status = status
        self.record.verdict = verdict
        self.stage = "done"

    def void(self, reason: str) -> None:
        if not self.done:
            self.record.note = reason
            self._finish("void")

    def on_commit(self, w: str):
        if self.stage != "commit":
            raise ProtocolError(f"commitment received in stage {self.stage}")
        claw, status = self.v.receive_commit(w)
        self.record.w = w
        if status != "kept":
            self._finish(status)
            return None
        self._claw = claw
        self.record.claw = [tcf.encode_point(self.v.inst, claw.x0), tcf.encode_point(self.v.inst, claw.x1)]
        self.stage = "branch"
        return "branch", Challenge(self.challenge.branch, self.challenge.r)

    def on_response(self, stage: str, value: str):
        if stage != self.stage or self.stage not in ("branch", "basis"):
            raise ProtocolError(f"{stage} response received in stage {self.stage}")
        ch, inst = self.challenge, self.v.inst
        if stage == "branch" and ch.branch == "A":
            self.record.responses["x"] = value
            self._finish("kept", "accept" if check_A(inst, value, self.record.w) else "reject")
            return None
        if stage == "branch" and self.v.kind == "lwe":
            self.record.responses["d"] = value
            res = check_B_lwe(inst, value, self._claw, self.v.config.lwe_d_includes_b)
            if res == "zero-d":
                self._finish("discarded-zero-d")
            else:
                self._finish("kept", res)
            return None
        if stage == "branch":
            if len(value) != inst.n_x or set(value) - {"0", "1"}:
                raise ProtocolError(f"d must be a {inst.n_x}-bit string")
            self.record.responses["d"] = value
            self.record.basis = ch.basis
            self.stage = "basis"
            return "basis", ch.basis
        self.record.responses["outcome"] = value
        ok = check_B_factoring(self.record.responses["d"], ch.r, ch.basis, value, self._claw)
        self._finish("kept", "accept" if ok else "reject")
        return None


def rescore(inst: tcf.Instance, td, rec: ShotRecord, lwe_d_includes_b: bool = True) -> str:
    """Recompute the verdict of a kept record from its stored fields."""
    if rec.status != "kept":
        return "n/a"
    claw = tcf.invert(inst, td, rec.w)
    if rec.branch == "A":
        return "accept" if check_A(inst, rec.responses["x"], rec.w) else "reject"
    if protocol_kind(inst) == "lwe":
        return check_B_lwe(inst, rec.responses["d"], claw, lwe_d_includes_b)
    ok = check_B_factoring(rec.responses["d"], rec.r, rec.basis, rec.responses["outcome"], claw)
    return "accept" if ok else "reject"


# -- provers -----------------------------------------------------------------


class Prover:
    """Prover interface.  Implementations see only the public instance."""

    name = "prover"

    def start_shot(self, shot: int, preview: Challenge | None) -> None:
        raise NotImplementedError

    def commit(self) -> str:
        raise NotImplementedError

    def answer_branch(self, challenge: Challenge) -> str:
        raise NotImplementedError

    def answer_basis(self, basis: str) -> str:
        raise NotImplementedError


def public_only(inst: tcf.Instance) -> tcf.Instance:
    """Round-trip through the public JSON form, dropping anything secret."""
    obj = tcf.instance_to_json(inst)
    public, _ = tcf.instance_from_json(obj)
    return public


class HonestQuantumProver(Prover):
    """Runs the commit circuit on a statevector and answers by measurement.

    ``interactive`` mode measures the commitment mid-circuit and waits for
    each challenge; ``delayed`` mode needs the full challenge up front,
    applies every gate and measures all registers together at the end.
    """

    name = "honest"

    def __init__(self, inst: tcf.Instance, seed: int, mode: str = "interactive", compiled: bool = False):
        self.inst = public_only(inst)
        self.kind = protocol_kind(self.inst)
        self.seed = seed
        self.mode = mode
        if self.kind == "factoring":
            self.plan: CircuitPlan = build_factoring_commit(self.inst, compiled=compiled)
        else:
            self.plan = build_lwe_commit(self.inst)
        self._commit_amps = self.plan.commit_state().amplitudes
        self._state: StateVector | None = None
        self._answers: dict[str, str] = {}

    def _encode_w(self, raw: str) -> str:
        if self.kind == "factoring":
            return to_bits(tcf.decode_phase_register(from_bits(raw), self.inst), self.inst.n_y)
        return raw

    def start_shot(self, shot: int, preview: Challenge | None) -> None:
        rng = shot_rng(self.seed, shot, PROVER_ROLE)
        self._state = StateVector(self.plan.n_qubits, rng, self._commit_amps)
        self._answers = {}
        if self.mode == "delayed":
            if preview is None:
                raise ProtocolError("delayed mode needs the challenge before the commitment")
            self._run_delayed(preview)

    def _run_delayed(self, ch: Challenge) -> None:
        st = self._state
        commit_reg = self.plan.layout[self.plan.measure_register]
        measured: list[tuple[str, tuple[int, ...]]] = [("w", commit_reg)]
        for op in build_branch_suffix(self.plan, ch.branch, ch.r, ch.basis):
            if isinstance(op, GateOp):
                st.apply(op)
                continue
            if op.basis not in (None, "Z"):
                for g in _rotation(op.basis, op.qubits[0]):
                    st.apply(g)
            measured.append((op.name, op.qubits))
        qubits = tuple(q for _, reg in measured for q in reg)
        bits = st.measure(qubits).outcome
        pos = 0
        for name, reg in measured:
            self._answers[name] = bits[pos : pos + len(reg)]
            pos += len(reg)
        self._answers["w"] = self._encode_w(self._answers["w"])
        if "outcome" in self._answers:
            self._answers["outcome"] = "+" if self._answers["outcome"] == "0" else "-"

    def commit(self) -> str:
        if self.mode == "delayed":
            return self._answers["w"]
        rec = self._state.measure(self.plan.layout[self.plan.measure_register])
        return self._encode_w(rec.outcome)

    def answer_branch(self, challenge: Challenge) -> str:
        key = "x" if challenge.branch == "A" else "d"
        if self.mode == "delayed":
            return self._answers[key]
        ops = build_branch_suffix(self.plan, challenge.branch, challenge.r, basis=None)
        st = self._state
        for op in ops:
            if isinstance(op, GateOp):
                st.apply(op)
            elif op.name in ("x", "d"):
                return st.measure(op.qubits).outcome
        raise ProtocolError("suffix has no preimage measurement")

    def answer_basis(self, basis: str) -> str:
        if self.mode == "delayed":
            return self._answers["outcome"]
        anc = self.plan.layout["anc"][0]
        return self._state.measure_in_basis(anc, basis).sign


def _rotation(basis: str, qubit: int) -> list[GateOp]:
    from .sim import basis_rotation

    return [GateOp(g.kind, (qubit,), g.theta) for g in basis_rotation(basis)]


# -- experiment loop -----------------------------------------------------------


def run_shot(verifier: Verifier, prover: Prover, shot: int) -> ShotRecord:
    """One shot in process; a malformed prover message voids the shot, as over the wire."""
    sess = verifier.session(shot)
    prover.start_shot(shot, sess.preview())
    try:
        req = sess.on_commit(prover.commit())
        while req is not None:
            stage, payload = req
            if stage == "branch":
                req = sess.on_response("branch", prover.answer_branch(payload))
            else:
                req = sess.on_response("basis", prover.answer_basis(payload))
    except ProtocolError as exc:
        sess.void(str(exc))
    return sess.record


@dataclass
class ExperimentConfig:
    instance: str = "paper:lwe0"
    shots_a: int = 0
    shots_b: int = 0
    mode: str = "interactive"
    prover: str = "honest"
    seed: int = 0
    compiled: bool = False
    lwe_d_includes_b: bool = True

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


def make_prover(name: str, inst: tcf.Instance, seed: int, mode: str = "interactive", compiled: bool = False) -> Prover:
    """Build a prover from a public instance by name (``honest`` or ``cheater:<name>``)."""
    public = public_only(inst)
    if name == "honest":
        return HonestQuantumProver(public, seed, mode, compiled)
    if name.startswith("cheater:"):
        from .cheater import make_cheater

        return make_cheater(name.split(":", 1)[1], public, seed)
    raise ValueError(f"unknown prover {name!r}")


def make_verifier(config: ExperimentConfig) -> Verifier:
    inst, td, inst_id = tcf.load_instance(config.instance)
    vcfg = VerifierConfig(inst_id, config.seed, config.shots_a, config.shots_b, config.mode, config.lwe_d_includes_b)
    return Verifier(inst, td, vcfg)


def run_experiment(config: ExperimentConfig) -> tuple[Tally, list[ShotRecord]]:
    verifier = make_verifier(config)
    prover = make_prover(config.prover, verifier.inst, config.seed, config.mode, config.compiled)
    records = [run_shot(verifier, prover, shot) for shot in range(verifier.shots)]
    return Tally.from_records(records), records


def issue_instance(family: str, seed: int, **params) -> tuple[tcf.Instance, tcf.Trapdoor | None]:
    """Verifier-side instance generation (public part + retained trapdoor)."""
    if family == "lwe":
        rng = np.random.default_rng(seed)
        return tcf.lwe_keygen(params["m"], params["n"], params["q"], params.get("sigma", 1.0), rng)
    if family == "rabin":
        if "N" in params:
            return tcf.rabin_demo(params["N"], params["n_x"], params["n_y"])
        return tcf.rabin_keygen(params["p"], params["q"], params["n_x"], params["n_y"])
    raise ValueError(f"unknown family {family!r}")
