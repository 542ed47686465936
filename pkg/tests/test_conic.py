import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynent import conic
from dynent.errors import SolverError
from dynent.operators import LabeledOperator

from conftest import random_matrix

seeds = st.integers(0, 2**32 - 1)


def _lambda_max(h, real=False):
    p = conic.ConicProgram("lambda-max")
    t = p.scalar("t")
    p.add_psd(t.tensor_identity([("S", h.shape[0])]) - h)
    p.minimize(t)
    return p.solve()


@settings(max_examples=10)
@given(st.integers(1, 4), seeds)
def test_lambda_max_oracle(side, seed):
    h = random_matrix(side, np.random.default_rng(seed))
    sol = _lambda_max(h)
    assert sol.optimal
    assert sol.value == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-6)


@settings(max_examples=10)
@given(st.integers(1, 4), seeds, st.booleans())
def test_trace_norm_oracle(side, seed, real):
    h = random_matrix(side, np.random.default_rng(seed))
    if real:
        h = h.real
    p = conic.ConicProgram("trace-norm")
    pos = p.variable("P", side, real=real)
    neg = p.variable("N", side, real=real)
    p.add_psd(pos)
    p.add_psd(neg)
    p.add_equality(pos - neg, h)
    p.minimize((pos + neg).trace())
    sol = p.solve()
    assert sol.optimal
    assert sol.value == pytest.approx(np.sum(np.abs(np.linalg.eigvalsh(h))), abs=1e-6)
    assert sol.residuals["gap"] <= conic.GAP_TOL


def test_max_overlap_dual_form():
    h = random_matrix(3, np.random.default_rng(7))
    p = conic.ConicProgram("dual")
    x = p.variable("X", 3)
    p.add_psd(x)
    p.add_equality(x.trace(), 1.0)
    p.maximize(x.inner(h))
    sol = p.solve()
    assert sol.value == pytest.approx(np.linalg.eigvalsh(h)[-1], abs=1e-6)
    assert np.isclose(np.trace(sol["X"]).real, 1, atol=1e-7)


def test_frobenius_projection_onto_psd_cone():
    h = random_matrix(3, np.random.default_rng(8))
    p = conic.ConicProgram("projection")
    x = p.variable("X", 3)
    t = p.scalar("t")
    p.add_psd(x)
    p.add_soc(t, x - h)
    p.minimize(t)
    sol = p.solve()
    w = np.linalg.eigvalsh(h)
    assert sol.value == pytest.approx(np.sqrt(np.sum(w[w < 0] ** 2)), abs=1e-6)


def test_labelled_partial_trace_constraint():
    # largest phi+ overlap of a state whose B marginal is fixed to |0><0|
    p = conic.ConicProgram("marginal")
    x = p.variable("X", systems=[("A", 2), ("B", 2)])
    p.add_psd(x)
    p.add_equality(x.ptrace(["A"]), np.diag([1.0, 0.0]))
    v = np.array([1, 0, 0, 1]) / np.sqrt(2)
    p.maximize(x.inner(np.outer(v, v)))
    assert p.solve().value == pytest.approx(0.5, abs=1e-6)


def test_partial_transpose_constraint():
    # PPT states have phi+ fidelity at most 1/2
    p = conic.ConicProgram("ppt-fidelity")
    x = p.variable("X", systems=[("A", 2), ("B", 2)])
    p.add_psd(x)
    p.add_psd(x.ptranspose(["B"]))
    p.add_equality(x.trace(), 1.0)
    v = np.array([1, 0, 0, 1]) / np.sqrt(2)
    p.maximize(x.inner(np.outer(v, v)))
    assert p.solve().value == pytest.approx(0.5, abs=1e-6)


def test_link_with_constant_matches_operator_link():
    from dynent.operators import link_product
    rng = np.random.default_rng(3)
    c = LabeledOperator([("A", 2), ("S", 2)], random_matrix(4, rng))
    p = conic.ConicProgram("link")
    x = p.variable("X", systems=[("S", 2), ("C", 2)])
    xv = random_matrix(4, rng)
    p.add_equality(x, xv)
    p.minimize(x.trace())
    sol = p.solve()
    expr = x.link(c)
    params = np.linalg.lstsq(x.coef.toarray(), xv.reshape(-1), rcond=None)[0].real
    got = expr.value(params)
    want = link_product(c, LabeledOperator([("S", 2), ("C", 2)], sol["X"]))
    assert np.allclose(got, want.matrix, atol=1e-6)


def test_bmat_block_structure():
    p = conic.ConicProgram("bmat")
    a = p.variable("A", 2)
    b = p.variable("B", 2)
    big = conic.bmat([[a, None], [None, b]])
    assert big.side == 4
    p.add_psd(big)
    p.add_equality(a.trace() + b.trace(), 1.0)
    p.minimize(a.inner(np.eye(2)) * 2 + b.inner(np.eye(2)))
    assert p.solve().value == pytest.approx(1.0, abs=1e-6)


def test_infeasible_is_reported():
    p = conic.ConicProgram("infeasible")
    x = p.variable("X", 2)
    p.add_psd(x)
    p.add_equality(x.trace(), -1.0)
    p.minimize(x.trace())
    sol = p.solve()
    assert sol.status == conic.INFEASIBLE
    with pytest.raises(SolverError):
        conic.require_optimal(sol, "test")


def test_unbounded_is_reported():
    p = conic.ConicProgram("unbounded")
    x = p.variable("X", 2)
    p.add_psd(x)
    p.maximize(x.trace())
    assert p.solve().status == conic.UNBOUNDED


def test_iteration_cap_from_environment(monkeypatch):
    monkeypatch.setenv("DYNENT_SOLVER_ITERS", "1")
    sol = _lambda_max(random_matrix(4, np.random.default_rng(0)))
    assert sol.status != conic.OPTIMAL


@given(st.integers(1, 4), seeds)
def test_embedding_roundtrip_and_spectrum(side, seed):
    h = random_matrix(side, np.random.default_rng(seed))
    e = conic.embed_hermitian(h)
    assert np.allclose(conic.extract_hermitian(e), h)
    assert np.allclose(np.sort(np.linalg.eigvalsh(e))[::2], np.linalg.eigvalsh(h))


def test_recording_collects_solves():
    with conic.recording() as log:
        _lambda_max(np.eye(2))
        _lambda_max(np.eye(3))
    assert [name for name, _ in log] == ["lambda-max", "lambda-max"]
    _lambda_max(np.eye(2))
    assert len(log) == 2


def test_program_dump_is_json():
    p = conic.ConicProgram("dump")
    x = p.variable("X", 2)
    p.add_psd(x)
    p.add_equality(x.trace(), 1.0)
    p.minimize(x.inner(np.diag([1.0, 2.0])))
    data = json.loads(p.to_json())
    assert data["nparams"] == 4 and data["cones"][0]["embedded"]


def test_duplicate_variable():
    p = conic.ConicProgram()
    p.variable("X", 2)
    with pytest.raises(ValueError):
        p.variable("X", 2)
