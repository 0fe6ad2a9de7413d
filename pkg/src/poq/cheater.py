"""Classical provers used as the empirical baseline.

A cheater is built from the public instance alone; nothing here can name
or receive a trapdoor.  Both shipped strategies are polynomial-time
templates.  Desk-scale instances are small enough to brute-force (N = 15
factors by inspection), so a strategy that did that would "win" without
saying anything about the protocol; none is shipped.
"""
from __future__ import annotations

from . import tcf
from .numtheory import to_bits
from .protocol import PROVER_ROLE, Challenge, Prover
from .sim import shot_rng


class _ClassicalProver(Prover):
    def __init__(self, inst: tcf.Instance, seed: int):
        if not isinstance(inst, (tcf.RabinInstance, tcf.LweInstance)):
            raise TypeError("cheaters take a public instance only")
        self.inst = inst
        self.seed = seed
        self.rng = shot_rng(seed, 0, PROVER_ROLE)

    def start_shot(self, shot: int, preview: Challenge | None) -> None:
        self.rng = shot_rng(self.seed, shot, PROVER_ROLE)

    def _random_point(self):
        inst = self.inst
        if isinstance(inst, tcf.RabinInstance):
            return int(self.rng.integers(inst.domain_size))
        x = tuple(int(v) for v in self.rng.integers(inst.modulus, size=inst.n))
        return int(self.rng.integers(2)), x

    def _random_bits(self, width: int) -> str:
        return "".join(str(int(b)) for b in self.rng.integers(2, size=width))

    def answer_basis(self, basis: str) -> str:
        return "+" if self.rng.integers(2) == 0 else "-"


class KnownPreimageCheater(_ClassicalProver):
    """Commit to f(x) for a random x; answer A with x, guess on B."""

    name = "known_preimage"

    def start_shot(self, shot, preview):
        super().start_shot(shot, preview)
        self._x = self._random_point()

    def commit(self) -> str:
        return tcf.evaluate(self.inst, self._x)

    def answer_branch(self, challenge: Challenge) -> str:
        if challenge.branch == "A":
            return tcf.encode_point(self.inst, self._x)
        return self._random_bits(tcf.preimage_width(self.inst))


class RandomCheater(_ClassicalProver):
    """Uniformly random commitment and responses."""

    name = "random"

    def commit(self) -> str:
        return to_bits(int(self.rng.integers(1 << tcf.image_width(self.inst))), tcf.image_width(self.inst))

    def answer_branch(self, challenge: Challenge) -> str:
        if challenge.branch == "A":
            return tcf.encode_point(self.inst, self._random_point())
        return self._random_bits(tcf.preimage_width(self.inst))


CHEATERS = {cls.name: cls for cls in (KnownPreimageCheater, RandomCheater)}


def make_cheater(name: str, inst: tcf.Instance, seed: int) -> Prover:
    try:
        cls = CHEATERS[name]
    except KeyError:
        raise ValueError(f"unknown cheater {name!r}; choose from {sorted(CHEATERS)}") from None
    return cls(inst, seed)
