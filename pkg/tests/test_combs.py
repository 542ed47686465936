import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynent import channels as ch
from dynent import combs as cb
from dynent import superchannels as sc
from dynent.errors import PreconditionError, ShapeError
from dynent.operators import LabeledOperator, SystemLabel, tensor

from conftest import oracle_apply

seeds = st.integers(0, 2**31 - 1)


def _random_components(slots, rng, slot_dims=(2, 1, 1, 2), mem=(2, 2), global_in=(2, 1), out=(2, 2)):
    """Random Kraus components ``E_1..E_{n+1}`` wired through memories ``Am_k Bm_k``."""
    dA0, dA1, dB0, dB1 = slot_dims
    comps = []
    for k in range(1, slots + 2):
        if k == 1:
            ins = {"Ain": global_in[0], "Bin": global_in[1]}
        else:
            prev = cb.slot_labels(k - 1)
            ins = {prev["A1"]: dA1, prev["B1"]: dB1, f"Am{k - 1}": mem[0], f"Bm{k - 1}": mem[1]}
        if k == slots + 1:
            outs = {"Aout": out[0], "Bout": out[1]}
        else:
            lab = cb.slot_labels(k)
            outs = {lab["A0"]: dA0, lab["B0"]: dB0, f"Am{k}": mem[0], f"Bm{k}": mem[1]}
        comps.append(ch.random_kraus_channel(ins, outs, rng))
    return comps


def direct_circuit(comps, channels, global_in):
    """Run the circuit on ``|Phi><Phi|`` between references and the global input."""
    v = ch.max_entangled_vector(global_in[0])
    w = ch.max_entangled_vector(global_in[1])
    rho = LabeledOperator([SystemLabel("RA", global_in[0]), SystemLabel("Ain", global_in[0]),
                           SystemLabel("RB", global_in[1]), SystemLabel("Bin", global_in[1])],
                          np.kron(np.outer(v, v), np.outer(w, w)))
    rho = oracle_apply(comps[0], rho)
    for j, n in enumerate(channels, start=1):
        rho = oracle_apply(n.relabel(cb.slot_labels(j)), rho)
        rho = oracle_apply(comps[j], rho)
    return rho.relabel({"RA": "A0", "RB": "B0", "Aout": "A1", "Bout": "B1"}).permute(ch.STANDARD)


@settings(max_examples=20)
@given(st.integers(1, 2), seeds)
def test_plug_matches_direct_circuit(slots, seed):
    rng = np.random.default_rng(seed)
    comps = _random_components(slots, rng)
    comb = cb.build_comb_from_sequence(comps)
    assert cb.validate_comb(comb).passed
    chans = [ch.random_channel((2, 1, 1, 2), int(rng.integers(2**31))) for _ in range(slots)]
    got = cb.plug(comb, chans)
    assert ch.validate_channel(got).passed
    assert np.max(np.abs(got.choi.matrix - direct_circuit(comps, chans, (2, 1)).matrix)) <= 1e-9


def test_plugging_preparations_runs_the_postprocessing_chain():
    rng = np.random.default_rng(3)
    comps = _random_components(1, rng, slot_dims=(1, 2, 1, 2), global_in=(1, 1))
    comb = cb.build_comb_from_sequence(comps)
    rho = ch.random_state(4, rng)
    sigma = cb.plug(comb, [ch.prep(rho, 2, 2)]).state()
    memory = comps[0].choi.ptrace(["Ain", "Bin", "A0_1", "B0_1"])
    want = oracle_apply(comps[1], tensor(memory, LabeledOperator([("A1_1", 2), ("B1_1", 2)], rho)))
    assert np.allclose(sigma.matrix, want.permute(["Aout", "Bout"]).matrix, atol=1e-10)


def _stage(kraus, k, last):
    """Memoryless stage taking slot ``k``'s outputs to slot ``k+1``'s inputs (or the global output)."""
    lab = cb.slot_labels(k)
    ins = {lab["A1"]: 2, lab["B1"]: 2}
    outs = {"Aout": 2, "Bout": 2} if last else {cb.slot_labels(k + 1)["A0"]: 2, cb.slot_labels(k + 1)["B0"]: 2}
    return ch.channel_from_kraus(kraus, ins, outs)


def test_permuted_composition_order_changes_the_comb():
    rng = np.random.default_rng(5)
    u, v = ch.haar_isometry(4, 4, rng), ch.haar_isometry(4, 4, rng)
    first = ch.random_kraus_channel({"Ain": 1, "Bin": 1}, {"A0_1": 2, "B0_1": 2}, rng)
    c_uv = cb.build_comb_from_sequence([first, _stage([u], 1, False), _stage([v], 2, True)])
    c_vu = cb.build_comb_from_sequence([first, _stage([v], 1, False), _stage([u], 2, True)])
    assert cb.validate_comb(c_uv).passed and cb.validate_comb(c_vu).passed
    assert np.max(np.abs(c_uv.choi.matrix - c_vu.choi.matrix)) > 1e-3


def _identity_comb():
    pre = ch.Channel(tensor(sc._wire("Ain", "A0_1", 2), sc._wire("Bin", "B0_1", 2)),
                     ["Ain", "Bin"], ["A0_1", "B0_1"])
    post = ch.Channel(tensor(sc._wire("A1_1", "Aout", 2), sc._wire("B1_1", "Bout", 2)),
                      ["A1_1", "B1_1"], ["Aout", "Bout"])
    return cb.build_comb_from_sequence([pre, post])


def test_identity_comb():
    comb = _identity_comb()
    assert comb.choi.allclose(cb.comb_from_superchannel(sc.identity_superchannel()).choi)
    n = ch.random_channel((2, 2, 2, 2), 1)
    assert cb.plug(comb, [n]).choi.allclose(n.choi)


@settings(max_examples=5)
@given(seeds)
def test_one_slot_comb_is_a_superchannel(seed):
    s = sc.random_superchannel((2, 1, 1, 2), seed=seed)
    c = cb.comb_from_superchannel(s)
    assert cb.validate_comb(c).passed == sc.validate_superchannel(s).passed
    assert cb.is_ppt_comb(c).passed == sc.is_ppt_superchannel(s)
    n = ch.random_channel((2, 1, 1, 2), seed + 1)
    assert cb.plug(c, [n]).choi.allclose(sc.apply(s, n).choi)
    assert cb.comb_to_superchannel(c).choi.allclose(s.choi)


def test_random_psd_fails_validation():
    rng = np.random.default_rng(0)
    order = cb.comb_order(1)
    systems = [SystemLabel(n, 1 if n in cb.GLOBAL_IN else 2) for n in order]
    g = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    psd = g @ g.conj().T
    rep = cb.validate_comb(cb.Comb(LabeledOperator(systems, psd / np.trace(psd) * 8), 1))
    assert not rep.passed and max(rep.levels) > 1e-3


def test_wrong_labels_rejected():
    with pytest.raises(ShapeError):
        cb.Comb(LabeledOperator([("A", 2)], np.eye(2)), 1)


def test_leftover_systems_rejected():
    e1 = ch.Channel(LabeledOperator([("Aout", 2), ("Bout", 2), ("Junk", 2)], np.eye(8) / 4),
                    [], ["Aout", "Bout", "Junk"])
    with pytest.raises(ShapeError):
        cb.build_comb_from_sequence([e1])


def test_plug_checks_slot_shapes():
    with pytest.raises(ShapeError):
        cb.plug(cb.teleportation_distiller(), [ch.swap(2)])
    with pytest.raises(ShapeError):
        cb.plug(cb.teleportation_distiller(), [])


def test_teleportation_distiller_is_ppt_and_distils_from_ebits():
    comb = cb.teleportation_distiller()
    assert cb.validate_comb(comb).passed and cb.is_ppt_comb(comb).passed
    rep = cb.output_report(comb, [ch.max_entangled_prep(2)])
    assert rep.fidelity >= 1 - 1e-9 and rep.min_pt_eigenvalue < -0.4 and not rep.passed
    with pytest.raises(PreconditionError):
        cb.verify_no_distillation(comb, [ch.max_entangled_prep(2)])


def test_memory_swap_comb_is_not_ppt():
    comb = cb.memory_swap_comb()
    assert cb.validate_comb(comb).passed
    cert = cb.is_ppt_comb(comb)
    assert not cert.passed
    pt = np.linalg.eigvalsh(comb.choi.ptranspose(comb.bob).matrix)[0]
    assert cert.min_eigenvalue == pytest.approx(pt)
    with pytest.raises(PreconditionError):
        cb.verify_no_distillation(comb, [ch.Channel.from_matrix(np.eye(1))])


@pytest.mark.parametrize("slots", [1, 2])
def test_random_ppt_comb_outputs_are_ppt(slots):
    comb, chans = cb.random_ppt_comb(slots, seed=slots)
    assert cb.validate_comb(comb, tol=1e-7).passed
    assert all(comb.metadata["component_ppt"])
    rep = cb.verify_no_distillation(comb, chans)
    assert rep.passed and rep.fidelity <= 0.5 + 1e-6


def test_json_roundtrip():
    comb = cb.teleportation_distiller()
    back = cb.Comb.from_json(json.loads(json.dumps(comb.to_json())))
    assert back.choi.allclose(comb.choi) and back.slots == 1
