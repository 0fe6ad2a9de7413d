"""Desk-scale simulation of two interactive proofs of quantumness.

Two trapdoor claw-free function families (an LWE-based one and Rabin's
``x^2 mod N``), statevector simulation of their commit circuits, the
verifier/prover interaction, classical cheating baselines, and the
statistics used to score a run against the classical threshold.
"""

__version__ = "0.1.0"
