import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynent import channels as ch
from dynent import measures as ms
from dynent.operators import LabeledOperator, partial_transpose, trace_norm

seeds = st.integers(0, 2**31 - 1)


def _pt_trace_norm(rho):
    return trace_norm(partial_transpose(LabeledOperator([("A1", 2), ("B1", 2)], rho), ["B1"]))


# -- diamond norm --------------------------------------------------------------------


def test_diamond_of_channels_is_one():
    for n in (ch.swap(2), ch.depolarizing(2, 0.4), ch.random_channel((2, 1, 1, 2), 3)):
        assert ms.diamond_norm(n).value == pytest.approx(1, abs=1e-6)


def test_diamond_of_transposed_ebit_preparation():
    pt = ch.transpose_supermap(ch.max_entangled_prep(2))
    assert ms.diamond_norm(pt).value == pytest.approx(2, abs=1e-6)


def test_diamond_of_zero_difference():
    n = ch.random_channel((2, 1, 1, 2), 1)
    diff = n.choi - n.choi
    assert ms.diamond_norm(diff, n.inputs, n.outputs).value == pytest.approx(0, abs=1e-6)


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_diamond_identity_minus_depolarizing(p):
    diff = ch.ab_identity(2).choi - ch.depolarizing(2, p).choi
    assert ms.diamond_norm(diff, ["A0", "B0"], ["A1", "B1"]).value == pytest.approx(1.5 * p, abs=1e-6)


# -- negativities ---------------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3])
def test_negativity_of_ebits(d):
    n = ch.max_entangled_prep(d)
    assert ms.negativity(n).value == pytest.approx((d - 1) / 2, abs=1e-6)
    assert ms.log_negativity(n).value == pytest.approx(math.log2(d), abs=1e-6)
    assert ms.max_log_negativity(n).value == pytest.approx(math.log2(d), abs=1e-6)


@settings(max_examples=6)
@given(seeds)
def test_negativity_of_state_preparation_matches_eigensolver(seed):
    rho = ch.random_state(4, np.random.default_rng(seed), rank=1)
    n = ch.prep(rho, 2, 2)
    norm = _pt_trace_norm(rho)
    assert ms.negativity(n).value == pytest.approx((norm - 1) / 2, abs=1e-6)
    assert ms.log_negativity(n).value == pytest.approx(math.log2(norm), abs=1e-6)


def test_swap_values():
    assert ms.max_log_negativity(ch.swap(2)).value == pytest.approx(2, abs=1e-6)
    assert ms.log_negativity(ch.swap(2)).value == pytest.approx(2, abs=1e-6)


def test_ppt_channels_have_zero_measures():
    for n in (ch.tiles_povm(), ch.random_ppt_channel((2, 1, 1, 2), 4), ch.depolarizing(2, 1.0)):
        assert abs(ms.negativity(n).value) <= 1e-6
        assert abs(ms.max_log_negativity(n).value) <= 1e-6


@settings(max_examples=5)
@given(seeds)
def test_lnmax_dominates_ln(seed):
    n = ch.random_channel((2, 1, 1, 2), seed)
    assert ms.max_log_negativity(n).value >= ms.log_negativity(n).value - 1e-6


def test_lnmax_certificate_is_feasible():
    n = ch.random_channel((2, 1, 1, 2), 8)
    r = ms.max_log_negativity(n)
    pg = partial_transpose(r.certificate, n.bob)
    jg = partial_transpose(n.choi, n.bob)
    assert np.linalg.eigvalsh((pg - jg).matrix)[0] >= -1e-7
    assert np.linalg.eigvalsh((pg + jg).matrix)[0] >= -1e-7
    assert r.details["t"] == pytest.approx(2 ** r.value)


# -- E_P and conversion distance ------------------------------------------------------


def test_e_measure_with_identity_probe():
    probe = ch.Channel.from_matrix(np.eye(4), (2, 1, 2, 1))
    r = ms.e_measure_ppt(probe, ch.random_channel((1, 2, 1, 2), 0))
    assert r.value == pytest.approx(4, abs=1e-6)


def test_e_measure_ebit_probe():
    r = ms.e_measure_ppt(ch.max_entangled_prep(2), ch.max_entangled_prep(2))
    assert r.value == pytest.approx(1, abs=1e-6)
    r = ms.e_measure_ppt(ch.max_entangled_prep(2), ch.depolarizing(2, 1.0))
    assert r.value == pytest.approx(0.5, abs=1e-6)


def test_conversion_distances():
    sep = ch.prep(np.diag([1.0, 0, 0, 0]), 2, 2)
    assert ms.conversion_distance_ppt(sep, ch.max_entangled_prep(2)).value > 0.2
    assert ms.conversion_distance_ppt(ch.ab_identity(2), ch.ab_identity(2)).value <= 1e-6
    assert ms.conversion_distance_ppt(ch.max_entangled_prep(2), ch.ab_identity(2)).value <= 1e-5


# -- exact one-shot distillation and cost ---------------------------------------------


@pytest.mark.parametrize("m", [2, 3])
def test_exact_values_on_ebits(m):
    n = ch.max_entangled_prep(m)
    c = ms.exact_cost_single_shot(n)
    d = ms.exact_distill_single_shot(n)
    assert c.details["m"] == m and d.details["m"] == m
    assert c.value == pytest.approx(math.log2(m))


def test_swap_cost_and_distillation():
    assert ms.exact_cost_single_shot(ch.swap(2)).details["m"] == 4
    assert ms.exact_distill_single_shot(ch.swap(2)).details["m"] == 4


def test_tiles_is_not_distillable():
    assert ms.exact_distill_single_shot(ch.tiles_povm()).details["m"] == 1


def test_twirled_matches_full_program():
    n = ch.random_channel((2, 1, 1, 2), 11)
    a = ms.distill_fidelity(n, 2, "twirled")
    b = ms.distill_fidelity(n, 2, "full")
    assert a.value == pytest.approx(b.value, abs=1e-6)
    sa = ms.cost_slack(n, 2, "twirled")
    sb = ms.cost_slack(n, 2, "full")
    assert sb.value == pytest.approx(sa.value / 2, abs=1e-6)


def test_two_copies_reported_per_copy():
    r = ms.exact_distill_single_shot(ch.max_entangled_prep(2), copies=2)
    assert r.details["m"] == 4 and r.value == pytest.approx(1)


def test_default_m_max():
    assert ms.default_m_max(ch.swap(2)) == 4
    assert ms.default_m_max(ch.tiles_povm()) == 3


# -- generation lower bound and chain -------------------------------------------------


def test_egen_values():
    assert ms.egen_ppt_lower_bound(ch.ab_identity(2), rounds=3).value == pytest.approx(1, abs=1e-5)
    assert ms.egen_ppt_lower_bound(ch.swap(2), rounds=3).value == pytest.approx(2, abs=1e-5)
    assert abs(ms.egen_ppt_lower_bound(ch.random_ppt_channel((2, 1, 1, 2), 2), rounds=3).value) <= 1e-5


@settings(max_examples=3)
@given(seeds)
def test_egen_below_lnmax(seed):
    n = ch.random_channel((2, 1, 1, 2), seed)
    e = ms.egen_ppt_lower_bound(n, rounds=4, seed=seed, restarts=2)
    assert e.value <= ms.max_log_negativity(n).value + 1e-4
    assert e.value >= -1e-7


def test_chain_on_swap():
    rep = ms.check_cost_distill_inequality(ch.swap(2), rounds=3)
    assert rep.passed
    assert (rep.distill_bits, rep.cost_bits) == pytest.approx((2, 2))
    assert rep.to_json()["violations"] == []


def test_result_conversions():
    r = ms.negativity(ch.max_entangled_prep(2))
    assert float(r) == pytest.approx(0.5, abs=1e-6)
    assert r.to_json()["measure"] == "negativity" and r.ppt_monotone
