import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynent import channels as ch
from dynent.errors import InvalidPOVM, ShapeError
from dynent.operators import LabeledOperator, SystemLabel, partial_transpose, tensor

from conftest import oracle_apply

seeds = st.integers(0, 2**32 - 1)
small_dims = st.tuples(st.integers(1, 2), st.integers(1, 2), st.integers(1, 2), st.integers(1, 2))


def _state(labels_dims, rng):
    d = int(np.prod([x for _, x in labels_dims]))
    return LabeledOperator([SystemLabel(n, x) for n, x in labels_dims], ch.random_state(d, rng))


@pytest.mark.parametrize("c", [ch.identity(2, 2), ch.ab_identity(3), ch.ba_identity(2), ch.swap(2),
                               ch.max_entangled_prep(3), ch.depolarizing(2, 0.3), ch.tiles_povm()],
                         ids=["id", "ab", "ba", "swap", "prep", "depol", "tiles"])
def test_named_channels_are_valid(c):
    rep = ch.validate_channel(c)
    assert rep.passed
    assert np.isclose(c.choi.trace(), c.d_in)
    assert c.is_standard


@given(small_dims, seeds)
def test_random_channel_invariants(dims, seed):
    c = ch.random_channel(dims, seed)
    assert ch.validate_channel(c).passed
    assert np.isclose(c.choi.trace(), c.d_in)
    assert c.standard_dims() == dims


def test_swap_action():
    rng = np.random.default_rng(0)
    a, b = ch.random_state(2, rng), ch.random_state(2, rng)
    rho = LabeledOperator([("A0", 2), ("B0", 2)], np.kron(a, b))
    out = ch.apply(ch.swap(2), rho).permute(["A1", "B1"])
    assert np.allclose(out.matrix, np.kron(b, a))


@given(seeds)
def test_apply_matches_oracle_with_reference(seed):
    rng = np.random.default_rng(seed)
    c = ch.random_channel((2, 2, 1, 2), seed)
    rho = _state([("R", 2), ("A0", 2)], rng)
    got = ch.apply(c, rho)
    assert got.allclose(oracle_apply(c, rho), atol=1e-10)
    assert np.isclose(got.trace(), 1)


@given(seeds)
def test_apply_is_linear(seed):
    rng = np.random.default_rng(seed)
    c = ch.random_channel((2, 1, 2, 2), seed)
    r1, r2 = _state([("A0", 2), ("B0", 2)], rng), _state([("A0", 2), ("B0", 2)], rng)
    lhs = ch.apply(c, 0.3 * r1 + 0.7 * r2)
    rhs = 0.3 * ch.apply(c, r1) + 0.7 * ch.apply(c, r2)
    assert lhs.allclose(rhs)


def test_depolarizing_endpoints():
    assert ch.depolarizing(2, 0.0).choi.allclose(ch.ab_identity(2).choi)
    full = ch.depolarizing(3, 1.0)
    rho = LabeledOperator([("A0", 3)], ch.random_state(3, np.random.default_rng(1)))
    assert np.allclose(ch.apply(full, rho).ptrace(["A1"]).matrix, np.eye(3) / 3)
    with pytest.raises(ValueError):
        ch.depolarizing(2, 1.5)


def test_povm_validation():
    with pytest.raises(InvalidPOVM):
        ch.povm_channel([np.eye(4) * 0.5, np.eye(4) * 0.4])
    with pytest.raises(InvalidPOVM):
        ch.povm_channel([np.diag([2.0, -1.0, 1, 1]), np.diag([-1.0, 2.0, 0, 0])])


def test_tiles_state_is_ppt_and_entangled_by_upb():
    beta = ch.tiles_bound_entangled_state()
    assert np.isclose(beta.trace(), 1)
    assert np.min(np.linalg.eigvalsh(partial_transpose(beta, ["B0"]).matrix)) > -1e-12
    # orthogonal to every tiles product vector, so no product vector lies in its range
    for v in ch.tiles_vectors():
        assert abs(v @ beta.matrix @ v) < 1e-12
    assert ch.is_ppt_channel(ch.tiles_povm())


def test_ppt_channels():
    assert ch.is_ppt_channel(ch.depolarizing(2, 1.0))
    assert not ch.is_ppt_channel(ch.ab_identity(2))
    assert ch.ppt_violation(ch.swap(2)) == pytest.approx(-1)


@given(small_dims, seeds)
def test_separable_channels_are_ppt(dims, seed):
    c = ch.random_separable_channel(dims, seed)
    assert ch.validate_channel(c).passed
    assert ch.is_ppt_channel(c)


def test_random_ppt_channel():
    c = ch.random_ppt_channel((2, 2, 1, 2), seed=3)
    assert ch.validate_channel(c).passed and ch.is_ppt_channel(c)


def test_transpose_supermap():
    c = ch.random_channel((2, 2, 2, 2), 5)
    t = ch.transpose_supermap(c, "B")
    assert t.choi.allclose(partial_transpose(c.choi, ["B0", "B1"]))
    assert ch.transpose_supermap(ch.transpose_supermap(c, "A"), "A").choi.allclose(c.choi)
    with pytest.raises(ValueError):
        ch.transpose_supermap(c, "C")


def test_parallel_merges_parties():
    c = ch.parallel(ch.ab_identity(2), ch.ba_identity(2))
    assert c.standard_dims() == (2, 2, 2, 2)
    assert ch.validate_channel(c).passed
    assert np.isclose(c.choi.trace(), 4)


@given(seeds)
def test_sequential_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    c1 = ch.random_channel((2, 2, 1, 1), seed)
    c2 = ch.random_channel((2, 2, 1, 1), seed + 1)
    rho = _state([("A0", 2)], rng)
    mid = oracle_apply(c1, rho).ptrace(["B1"]).relabel({"A1": "A0"})
    want = oracle_apply(c2, mid)
    got = ch.apply(ch.sequential(c1, c2), rho)
    assert got.allclose(want, atol=1e-10)


def test_channel_requires_partition():
    op = tensor(LabeledOperator([("A0", 2)], np.eye(2)), LabeledOperator([("A1", 2)], np.eye(2)))
    with pytest.raises(ShapeError):
        ch.Channel(op, ["A0"], ["B1"])


def test_channel_json_roundtrip():
    c = ch.random_channel((2, 1, 1, 2), 9)
    back = ch.Channel.from_json(json.loads(json.dumps(c.to_json())))
    assert back.choi.allclose(c.choi) and back.inputs == c.inputs
