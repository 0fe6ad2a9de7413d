import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poq import tcf
from poq.numtheory import to_bits

RABIN_N = (8, 15, 16, 21)


def test_paper_rabin_widths():
    assert [(tcf.paper_rabin(N)[0].n_x, tcf.paper_rabin(N)[0].n_y) for N in RABIN_N] == [(2, 3), (3, 4), (3, 4), (3, 5)]


def test_rabin_demo_has_no_trapdoor():
    assert tcf.paper_rabin(8)[1] is None
    assert tcf.paper_rabin(16)[1] is None
    assert tcf.paper_rabin(15)[1] == tcf.RabinTrapdoor(3, 5)


def test_rabin_keygen_rejects():
    with pytest.raises(tcf.ConfigurationError):
        tcf.rabin_keygen(3, 3, 3, 4)
    with pytest.raises(tcf.ConfigurationError):
        tcf.rabin_keygen(4, 5, 3, 5)


def test_rabin_eval_example():
    inst, _ = tcf.paper_rabin(15)
    assert tcf.rabin_eval(inst, 2) == "0100"
    assert tcf.rabin_eval(inst, 7) == "0100"


@pytest.mark.parametrize("N", RABIN_N)
def test_rabin_invert_exhaustive(N):
    inst, td = tcf.paper_rabin(N)
    for w in range(1 << inst.n_y):
        wb = to_bits(w, inst.n_y)
        pre = sorted(x for x in range(inst.domain_size) if tcf.rabin_eval(inst, x) == wb) if w < N else []
        got = tcf.rabin_invert(inst, td, wb)
        if len(pre) == 2:
            assert got == tcf.Claw(pre[0], pre[1], wb)
        else:
            assert isinstance(got, tcf.InvalidImage)
            assert got.reason == ("out-of-range" if w >= N else "not-two-preimages")


def test_rabin_trapdoor_matches_enumeration_on_keygen():
    inst, td = tcf.rabin_keygen(5, 7, 4, 6)
    for w in range(inst.N):
        wb = to_bits(w, inst.n_y)
        a = tcf.rabin_invert(inst, td, wb)
        b = tcf.rabin_invert(inst, None, wb)
        assert a == b


def test_decode_phase_register_identity_for_power_of_two():
    inst, _ = tcf.paper_rabin(16)
    assert [tcf.decode_phase_register(v, inst) for v in range(16)] == list(range(16))


def test_decode_phase_register_rounds():
    inst, _ = tcf.paper_rabin(21)
    # 32 bins over 21 residues: raw 6 sits at 6 * 21 / 32 = 3.94
    assert tcf.decode_phase_register(6, inst) == 4
    assert tcf.decode_phase_register(31, inst) == 20
    assert tcf.decode_phase_register(0, inst) == 0


@pytest.mark.parametrize("i", range(4))
def test_paper_lwe_consistent(i):
    inst, td = tcf.paper_lwe(i)
    assert (inst.m, inst.n, inst.modulus) == (4, 2, 4)
    As = [sum(a * s for a, s in zip(row, td.s)) % 4 for row in inst.A]
    assert [(a + e) % 4 for a, e in zip(As, td.e)] == list(inst.y)


def test_paper_lwe_instance3_warns(caplog):
    with caplog.at_level("WARNING"):
        tcf.paper_lwe(3)
    assert "listed e" in caplog.text


@pytest.mark.parametrize("i", range(4))
def test_lwe_invert_exhaustive(i):
    inst, td = tcf.paper_lwe(i)
    images: dict[str, list] = {}
    for b, x in tcf.lwe_domain(inst):
        images.setdefault(tcf.lwe_eval(inst, b, x), []).append((b, x))
    for wi in range(1 << inst.m):
        w = to_bits(wi, inst.m)
        pre = images.get(w, [])
        got = tcf.lwe_invert(inst, td, w)
        is_claw = len(pre) == 2 and pre[0][0] != pre[1][0]
        if is_claw:
            assert isinstance(got, tcf.Claw)
            assert {got.x0, got.x1} == set(pre)
            x1 = got.x1[1]
            assert got.x0[1] == tuple((a + s) % 4 for a, s in zip(x1, td.s))
        else:
            assert isinstance(got, tcf.InvalidImage)


@pytest.mark.parametrize("i", range(4))
def test_paper_lwe_is_two_to_one(i):
    inst, td = tcf.paper_lwe(i)
    counts = {}
    for b, x in tcf.lwe_domain(inst):
        w = tcf.lwe_eval(inst, b, x)
        counts[w] = counts.get(w, 0) + 1
    assert set(counts.values()) == {2}


def test_lwe_keygen_trivial():
    rng = np.random.default_rng(0)
    inst, td = tcf.lwe_keygen(4, 2, 4, 0.0, rng, s=(0, 0))
    assert inst.y == (0, 0, 0, 0) and td.e == (0, 0, 0, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lwe_invert_contains_point(seed):
    rng = np.random.default_rng(seed)
    inst, td = tcf.lwe_keygen(4, 2, 4, 0.5, rng)
    b = int(rng.integers(2))
    x = tuple(int(v) for v in rng.integers(0, 4, size=2))
    got = tcf.lwe_invert(inst, td, tcf.lwe_eval(inst, b, x))
    if isinstance(got, tcf.Claw):
        assert (b, x) in (got.x0, got.x1)


def test_lwe_modulus_validation():
    with pytest.raises(tcf.ConfigurationError):
        tcf.LweInstance(((1,),), (0,), 6)


@given(st.integers(0, 1), st.tuples(st.integers(0, 3), st.integers(0, 3)))
def test_lwe_point_codec(b, x):
    inst, _ = tcf.paper_lwe(0)
    assert tcf.decode_lwe_point(inst, tcf.encode_lwe_point(inst, b, x)) == (b, x)


@pytest.mark.parametrize("spec", ["paper:lwe1", "paper:rabin15"])
def test_json_roundtrip(spec, tmp_path):
    inst, td, _ = tcf.load_instance(spec)
    doc = tcf.instance_to_json(inst, td)
    assert "q" not in tcf.instance_to_json(tcf.paper_lwe(0)[0])
    path = tmp_path / "inst.json"
    path.write_text(json.dumps(doc))
    inst2, td2, ident = tcf.load_instance(str(path))
    assert inst2 == inst and td2 == td and ident == "inst"


def test_from_json_rejects_bad_trapdoor():
    doc = tcf.instance_to_json(*tcf.paper_lwe(0))
    doc["trapdoor"]["e"] = [3, 3, 3, 3]
    with pytest.raises(tcf.ConfigurationError):
        tcf.instance_from_json(doc)
    doc = tcf.instance_to_json(*tcf.paper_rabin(15))
    doc["trapdoor"]["q"] = 7
    with pytest.raises(tcf.ConfigurationError):
        tcf.instance_from_json(doc)


def test_unknown_paper_instance():
    with pytest.raises(tcf.ConfigurationError):
        tcf.load_instance("paper:lwe9")
