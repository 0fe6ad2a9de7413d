"""Trapdoor claw-free functions: Rabin's ``x^2 mod N`` and rounded LWE.

Instances are immutable public descriptions; trapdoors are separate
objects so that anything handed to a prover can be built from the public
half alone.  Inversion returns either a :class:`Claw` or an
:class:`InvalidImage` value; neither case raises.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from .numtheory import (
    discrete_gaussian_signed,
    from_bits,
    is_prime,
    sqrt_mod_semiprime,
    to_bits,
)

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """Instance parameters violate a width or modulus constraint."""


@dataclass(frozen=True)
class RabinInstance:
    N: int
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.N < 2:
            raise ConfigurationError(f"modulus {self.N} too small")
        if (1 << self.n_x) > self.N // 2 + 1:
            raise ConfigurationError(f"2^{self.n_x} exceeds floor(N/2)+1 for N={self.N}")
        if (1 << self.n_y) < self.N:
            raise ConfigurationError(f"n_y={self.n_y} cannot hold residues mod {self.N}")

    @property
    def domain_size(self) -> int:
        return 1 << self.n_x

    def to_json(self) -> dict[str, Any]:
        return {"family": "rabin", "N": self.N, "n_x": self.n_x, "n_y": self.n_y}


@dataclass(frozen=True)
class RabinTrapdoor:
    p: int
    q: int

    def to_json(self) -> dict[str, Any]:
        return {"p": self.p, "q": self.q}


@dataclass(frozen=True)
class LweInstance:
    A: tuple[tuple[int, ...], ...]
    y: tuple[int, ...]
    modulus: int

    def __post_init__(self):
        q = self.modulus
        if q < 2 or q & (q - 1):
            raise ConfigurationError(f"modulus {q} is not a power of two")
        if not self.A or any(len(row) != len(self.A[0]) for row in self.A):
            raise ConfigurationError("A must be a non-empty rectangular matrix")
        if len(self.y) != len(self.A):
            raise ConfigurationError("y length must equal the row count of A")
        if any(not 0 <= v < q for row in self.A for v in row) or any(not 0 <= v < q for v in self.y):
            raise ConfigurationError(f"entries must lie in [0, {q})")

    @property
    def m(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return len(self.A[0])

    @property
    def bits_per_entry(self) -> int:
        return self.modulus.bit_length() - 1

    @property
    def input_width(self) -> int:
        """Width of the encoded ``(b, x)`` register: one b bit plus x."""
        return 1 + self.n * self.bits_per_entry

    @property
    def domain_size(self) -> int:
        return 2 * self.modulus ** self.n

    def to_json(self) -> dict[str, Any]:
        return {
            "family": "lwe",
            "A": [list(r) for r in self.A],
            "y": list(self.y),
            "m": self.m,
            "n": self.n,
            "modulus": self.modulus,
        }


@dataclass(frozen=True)
class LweTrapdoor:
    s: tuple[int, ...]
    e: tuple[int, ...]

    def to_json(self) -> dict[str, Any]:
        return {"s": list(self.s), "e": list(self.e)}


# A domain element: an int for Rabin, ``(b, x)`` for LWE.
Point = Union[int, tuple[int, tuple[int, ...]]]


@dataclass(frozen=True)
class Claw:
    x0: Point
    x1: Point
    w: str


@dataclass(frozen=True)
class InvalidImage:
    w: str
    reason: str
    preimages: tuple = field(default=())


Instance = Union[RabinInstance, LweInstance]
Trapdoor = Union[RabinTrapdoor, LweTrapdoor]


# -- Rabin -----------------------------------------------------------------

# N -> (p, q, n_x, n_y); p = q = None marks a demo modulus without a CRT trapdoor.
PAPER_RABIN = {
    8: (None, None, 2, 3),
    15: (3, 5, 3, 4),
    16: (None, None, 3, 4),
    21: (3, 7, 3, 5),
}


def rabin_keygen(p: int, q: int, n_x: int, n_y: int) -> tuple[RabinInstance, RabinTrapdoor]:
    if p == q or not (is_prime(p) and is_prime(q)) or p % 2 == 0 or q % 2 == 0:
        raise ConfigurationError(f"p={p}, q={q} must be distinct odd primes")
    return RabinInstance(p * q, n_x, n_y), RabinTrapdoor(p, q)


def rabin_demo(N: int, n_x: int, n_y: int) -> tuple[RabinInstance, None]:
    """Instance for a modulus that is not an odd semiprime (N = 8, 16).

    Inversion falls back to exhaustive search; such moduli carry no
    claw-freeness at all and exist only to exercise the circuits.
    """
    if N not in (8, 16):
        raise ConfigurationError("demo override only supports N in {8, 16}")
    return RabinInstance(N, n_x, n_y), None


def paper_rabin(N: int) -> tuple[RabinInstance, RabinTrapdoor | None]:
    try:
        p, q, n_x, n_y = PAPER_RABIN[N]
    except KeyError:
        raise ConfigurationError(f"no paper instance with N={N}") from None
    if p is None:
        return rabin_demo(N, n_x, n_y)
    return rabin_keygen(p, q, n_x, n_y)


def rabin_eval(inst: RabinInstance, x: int) -> str:
    if not 0 <= x < inst.domain_size:
        raise ValueError(f"x={x} outside domain [0, {inst.domain_size})")
    return to_bits(x * x % inst.N, inst.n_y)


def rabin_preimages(inst: RabinInstance, w: int) -> list[int]:
    """Exhaustive preimage search over the domain."""
    return [x for x in range(inst.domain_size) if x * x % inst.N == w]


def rabin_invert(inst: RabinInstance, td: RabinTrapdoor | None, w: str) -> Claw | InvalidImage:
    if len(w) != inst.n_y:
        raise ValueError(f"image must have {inst.n_y} bits")
    value = from_bits(w)
    if value >= inst.N:
        return InvalidImage(w, "out-of-range")
    if td is None:
        roots = rabin_preimages(inst, value)
    else:
        roots = sorted(r for r in sqrt_mod_semiprime(value, td.p, td.q) if r < inst.domain_size)
    if len(roots) != 2:
        return InvalidImage(w, "not-two-preimages", tuple(roots))
    return Claw(roots[0], roots[1], w)


def decode_phase_register(raw: int, inst: RabinInstance) -> int:
    """Map a measured y-register value to a residue mod N.

    After the inverse QFT the y register holds an ``n_y``-bit estimate of
    ``(x^2 mod N) / N``; rounding ``raw * N / 2^n_y`` recovers the residue
    and is the identity when ``N = 2^n_y``.
    """
    size = 1 << inst.n_y
    return (raw * inst.N * 2 + size) // (2 * size) % inst.N


# -- LWE -------------------------------------------------------------------

# Reference desk instances (m=4, n=2, q=4): rows of A^T, listed e, and y.
# y = As + e holds with s = (1, 0); for instance 3 the listed e is off and
# the derived e = (0,0,0,1) is used instead.
PAPER_LWE_TABLE = {
    0: {"A_T": ((0, 2, 0, 1), (2, 0, 1, 2)), "e": (0, 1, 0, 0), "y": (0, 3, 0, 1)},
    1: {"A_T": ((0, 2, 3, 2), (2, 3, 0, 0)), "e": (0, 0, 0, 1), "y": (0, 2, 3, 3)},
    2: {"A_T": ((2, 0, 0, 1), (0, 3, 2, 1)), "e": (1, 0, 1, 0), "y": (3, 0, 1, 1)},
    3: {"A_T": ((0, 1, 3, 0), (3, 0, 0, 2)), "e": (1, 0, 1, 0), "y": (0, 1, 3, 1)},
}
PAPER_LWE_S = (1, 0)
PAPER_LWE_MODULUS = 4


def _mat_vec(A, x, q) -> tuple[int, ...]:
    return tuple(sum(a * v for a, v in zip(row, x)) % q for row in A)


def paper_lwe(index: int) -> tuple[LweInstance, LweTrapdoor]:
    """Load one of the four reference instances with A and y verbatim.

    The trapdoor stores ``s`` explicitly and ``e = y - A s mod q``; any
    disagreement with the listed ``e`` is logged rather than hidden.
    """
    try:
        row = PAPER_LWE_TABLE[index]
    except KeyError:
        raise ConfigurationError(f"no paper LWE instance {index}") from None
    q = PAPER_LWE_MODULUS
    A = tuple(zip(*row["A_T"]))
    inst = LweInstance(A, row["y"], q)
    As = _mat_vec(A, PAPER_LWE_S, q)
    e = tuple((yi - v) % q for yi, v in zip(row["y"], As))
    if e != row["e"]:
        log.warning("LWE instance %d: listed e=%s, y - As = %s", index, row["e"], e)
    return inst, LweTrapdoor(PAPER_LWE_S, e)


def lwe_keygen(
    m: int,
    n: int,
    q: int,
    sigma: float,
    rng: np.random.Generator,
    s: tuple[int, ...] | None = None,
) -> tuple[LweInstance, LweTrapdoor]:
    """Uniform A, uniform binary s (unless given), Gaussian e, y = As + e."""
    if m < 1 or n < 1:
        raise ConfigurationError("m and n must be positive")
    if q < 2 or q & (q - 1):
        raise ConfigurationError(f"modulus {q} is not a power of two")
    A = tuple(tuple(int(v) for v in row) for row in rng.integers(0, q, size=(m, n)))
    if s is None:
        s = tuple(int(v) for v in rng.integers(0, 2, size=n))
    e = tuple(int(v) % q for v in discrete_gaussian_signed(sigma, rng, size=m))
    As = _mat_vec(A, s, q)
    y = tuple((a + b) % q for a, b in zip(As, e))
    return LweInstance(A, y, q), LweTrapdoor(tuple(s), e)


def lwe_eval(inst: LweInstance, b: int, x) -> str:
    q = inst.modulus
    half = q // 2
    vals = _mat_vec(inst.A, x, q)
    return "".join("1" if (v + b * yi) % q >= half else "0" for v, yi in zip(vals, inst.y))


def lwe_domain(inst: LweInstance):
    for b in (0, 1):
        for x in itertools.product(range(inst.modulus), repeat=inst.n):
            yield b, x


def encode_lwe_point(inst: LweInstance, b: int, x) -> str:
    k = inst.bits_per_entry
    return str(b) + "".join(to_bits(v, k) for v in x)


def decode_lwe_point(inst: LweInstance, bits: str) -> tuple[int, tuple[int, ...]]:
    if len(bits) != inst.input_width:
        raise ValueError(f"expected {inst.input_width} bits, got {len(bits)}")
    k = inst.bits_per_entry
    x = tuple(from_bits(bits[1 + i * k : 1 + (i + 1) * k]) for i in range(inst.n))
    return int(bits[0]), x


def lwe_invert(inst: LweInstance, td: LweTrapdoor, w: str) -> Claw | InvalidImage:
    """Exhaustive inversion (q^n candidates per branch).

    A claw is returned only when the full preimage set of ``w`` is exactly
    ``{(0, x1 + s), (1, x1)}``; anything else is reported as an anomaly.
    """
    if len(w) != inst.m:
        raise ValueError(f"image must have {inst.m} bits")
    q = inst.modulus
    pre = tuple(p for p in lwe_domain(inst) if lwe_eval(inst, p[0], p[1]) == w)
    claws = []
    for b, x1 in pre:
        if b != 1:
            continue
        x0 = tuple((a + s) % q for a, s in zip(x1, td.s))
        if lwe_eval(inst, 0, x0) == w:
            claws.append(((0, x0), (1, x1)))
    if not claws:
        return InvalidImage(w, "no-claw", pre)
    if len(claws) > 1:
        return InvalidImage(w, "multiple-claws", pre)
    if len(pre) != 2:
        return InvalidImage(w, "extra-preimages", pre)
    (p0, p1), = claws
    return Claw(p0, p1, w)


# -- dispatch & serialization ----------------------------------------------


def evaluate(inst: Instance, point: Point) -> str:
    if isinstance(inst, RabinInstance):
        return rabin_eval(inst, point)
    b, x = point
    return lwe_eval(inst, b, x)


def invert(inst: Instance, td: Trapdoor | None, w: str) -> Claw | InvalidImage:
    if isinstance(inst, RabinInstance):
        return rabin_invert(inst, td, w)
    return lwe_invert(inst, td, w)


def image_width(inst: Instance) -> int:
    return inst.n_y if isinstance(inst, RabinInstance) else inst.m


def preimage_width(inst: Instance) -> int:
    return inst.n_x if isinstance(inst, RabinInstance) else inst.input_width


def encode_point(inst: Instance, point: Point) -> str:
    if isinstance(inst, RabinInstance):
        return to_bits(point, inst.n_x)
    return encode_lwe_point(inst, *point)


def decode_point(inst: Instance, bits: str) -> Point:
    if isinstance(inst, RabinInstance):
        if len(bits) != inst.n_x:
            raise ValueError(f"expected {inst.n_x} bits, got {len(bits)}")
        return from_bits(bits)
    return decode_lwe_point(inst, bits)


def instance_to_json(inst: Instance, td: Trapdoor | None = None) -> dict[str, Any]:
    out = inst.to_json()
    if td is not None:
        out["trapdoor"] = td.to_json()
    return out


def instance_from_json(obj: dict[str, Any]) -> tuple[Instance, Trapdoor | None]:
    family = obj.get("family")
    tdj = obj.get("trapdoor")
    if family == "rabin":
        inst = RabinInstance(int(obj["N"]), int(obj["n_x"]), int(obj["n_y"]))
        td = RabinTrapdoor(int(tdj["p"]), int(tdj["q"])) if tdj else None
        if td is not None and td.p * td.q != inst.N:
            raise ConfigurationError("trapdoor factors do not multiply to N")
        return inst, td
    if family == "lwe":
        inst = LweInstance(
            tuple(tuple(int(v) for v in r) for r in obj["A"]),
            tuple(int(v) for v in obj["y"]),
            int(obj["modulus"]),
        )
        if (inst.m, inst.n) != (obj.get("m", inst.m), obj.get("n", inst.n)):
            raise ConfigurationError("declared dimensions disagree with A")
        td = None
        if tdj:
            td = LweTrapdoor(tuple(int(v) for v in tdj["s"]), tuple(int(v) for v in tdj["e"]))
            As = _mat_vec(inst.A, td.s, inst.modulus)
            if tuple((a + b) % inst.modulus for a, b in zip(As, td.e)) != inst.y:
                raise ConfigurationError("trapdoor does not satisfy y = As + e")
        return inst, td
    raise ConfigurationError(f"unknown instance family {family!r}")


def load_instance(spec: str) -> tuple[Instance, Trapdoor | None, str]:
    """Resolve ``paper:lwe<i>``, ``paper:rabin<N>`` or a JSON file path.

    Returns ``(instance, trapdoor, instance_id)``.
    """
    if spec.startswith("paper:"):
        name = spec[len("paper:"):]
        if name.startswith("lwe"):
            inst, td = paper_lwe(int(name[3:]))
        elif name.startswith("rabin"):
            inst, td = paper_rabin(int(name[5:]))
        else:
            raise ConfigurationError(f"unknown paper instance {name!r}")
        return inst, td, name
    import json
    from pathlib import Path

    path = Path(spec)
    try:
        obj = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read instance file {spec}: {exc}") from exc
    inst, td = instance_from_json(obj)
    return inst, td, obj.get("id", path.stem)
