"""Modular arithmetic and bit-string helpers shared by both TCF families.

Bit strings are plain ``str`` objects over ``"01"``.  Every codec in the
package is MSB-first: character 0 is the most significant bit, which is
also qubit 0 of the corresponding register.
"""
from __future__ import annotations

import math

import numpy as np


def _check_bits(s: str) -> None:
    if any(c not in "01" for c in s):
        raise ValueError(f"not a bit string: {s!r}")


def to_bits(value: int, width: int) -> str:
    """Encode ``value`` as a ``width``-bit MSB-first string."""
    if width < 0:
        raise ValueError("width must be non-negative")
    if not 0 <= value < (1 << width) and not (width == 0 and value == 0):
        raise ValueError(f"{value} does not fit in {width} bits")
    return format(value, f"0{width}b") if width else ""


def from_bits(bits: str) -> int:
    _check_bits(bits)
    return int(bits, 2) if bits else 0


def binary_inner_product(a: str, b: str) -> int:
    """GF(2) inner product of two equal-length bit strings."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    _check_bits(a)
    _check_bits(b)
    return sum(1 for x, y in zip(a, b) if x == "1" and y == "1") % 2


def xor_bits(a: str, b: str) -> str:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return "".join("1" if x != y else "0" for x, y in zip(a, b))


def parity(x: int) -> int:
    return bin(x).count("1") & 1


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    return all(n % d for d in range(3, math.isqrt(n) + 1, 2))


def sqrt_mod_prime(a: int, p: int) -> list[int]:
    """All square roots of ``a`` modulo an odd prime ``p`` (sorted)."""
    a %= p
    if a == 0:
        return [0]
    if pow(a, (p - 1) // 2, p) != 1:
        return []
    if p % 4 == 3:
        r = pow(a, (p + 1) // 4, p)
    else:
        r = _tonelli_shanks(a, p)
    return sorted({r, p - r})


def _tonelli_shanks(a: int, p: int) -> int:
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, r = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c = i, b * b % p
        t, r = t * c % p, r * b % p
    return r


def crt_pair(a: int, p: int, b: int, q: int) -> int:
    """The unique x mod p*q with x = a (mod p) and x = b (mod q)."""
    return (a * q * pow(q, -1, p) + b * p * pow(p, -1, q)) % (p * q)


def sqrt_mod_semiprime(w: int, p: int, q: int) -> set[int]:
    """All x in [0, pq) with x^2 = w (mod pq); empty for non-residues."""
    if p == q or p % 2 == 0 or q % 2 == 0:
        raise ValueError("p and q must be distinct odd primes")
    n = p * q
    if not 0 <= w < n:
        raise ValueError(f"w={w} outside [0, {n})")
    return {crt_pair(a, p, b, q) for a in sqrt_mod_prime(w, p) for b in sqrt_mod_prime(w, q)}


def discrete_gaussian_sample(sigma: float, modulus: int, rng: np.random.Generator) -> int:
    """One draw with weight exp(-k^2 / 2 sigma^2) on [-ceil(6 sigma), ceil(6 sigma)], mod ``modulus``."""
    return int(discrete_gaussian_signed(sigma, rng)) % modulus


def gaussian_support(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Support and normalized weights of the truncated discrete Gaussian."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return np.array([0]), np.array([1.0])
    bound = math.ceil(6 * sigma)
    ks = np.arange(-bound, bound + 1)
    w = np.exp(-(ks.astype(float) ** 2) / (2 * sigma * sigma))
    return ks, w / w.sum()


def discrete_gaussian_signed(sigma: float, rng: np.random.Generator, size: int | None = None):
    ks, w = gaussian_support(sigma)
    return rng.choice(ks, size=size, p=w)
