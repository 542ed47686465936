import time

import numpy as np
from hypothesis import HealthCheck, settings

from dynent.operators import LabeledOperator, SystemLabel

settings.register_profile("dynent", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dynent")


def random_matrix(side, rng, hermitian=True):
    g = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
    return (g + g.conj().T) / 2 if hermitian else g


def random_op(dims, rng, names=None, hermitian=True):
    names = names or [f"S{k}" for k in range(len(dims))]
    side = int(np.prod(dims))
    return LabeledOperator([SystemLabel(n, d) for n, d in zip(names, dims)],
                           random_matrix(side, rng, hermitian))


def oracle_apply(channel, state):
    """``(N (x) id)(rho)`` by summing ``rho_ij N(|i><j|)`` blocks of the Choi.

    Independent of the link-product code path: only permutes and einsums.
    """
    ins = [x for x in channel.inputs if channel.choi.dim(x) > 1 or x in state.labels]
    trivial = [x for x in channel.inputs if x not in ins]
    j = channel.choi.ptrace(trivial) if trivial else channel.choi
    outs = list(channel.outputs)
    rest = [x for x in state.labels if x not in ins]
    din = int(np.prod([j.dim(x) for x in ins]))
    dout = int(np.prod([j.dim(x) for x in outs]))
    dr = int(np.prod([state.dim(x) for x in rest]))
    jm = j.permute(ins + outs).matrix.reshape(din, dout, din, dout)
    rm = state.permute(ins + rest).matrix.reshape(din, dr, din, dr)
    out = np.einsum("iojp,irjs->orps", jm, rm).reshape(dout * dr, dout * dr)
    systems = [SystemLabel(x, j.dim(x)) for x in outs] + [SystemLabel(x, state.dim(x)) for x in rest]
    return LabeledOperator(systems, out)


SESSION_START = time.monotonic()
ACCEPTANCE_LINES: list[str] = []


def pytest_collection_modifyitems(items):
    # acceptance last, so its runtime criterion sees the whole suite
    items.sort(key=lambda item: item.module.__name__ == "test_acceptance")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
