import itertools

import numpy as np
from hypothesis import strategies as st

from orsep.mixture import SourceModel


def random_model(rng: np.random.Generator, m: int, n: int, lo=0.05, hi=0.95) -> SourceModel:
    masks = rng.choice(np.arange(1, 1 << m), size=n, replace=False)
    return SourceModel.from_bitmasks(m, [int(s) for s in masks], rng.uniform(lo, hi, size=n))


@st.composite
def source_models(draw, max_m=6, max_n=8, lo=0.05, hi=0.95):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(1, min(max_n, (1 << m) - 1)))
    masks = draw(st.lists(st.integers(1, (1 << m) - 1), min_size=n, max_size=n, unique=True))
    p = draw(st.lists(st.floats(lo, hi), min_size=n, max_size=n))
    return SourceModel.from_bitmasks(m, masks, p)


def brute_force_distribution(model: SourceModel) -> np.ndarray:
    """P(x) by enumerating every source pattern; independent of the folding code."""
    table = np.zeros(1 << model.m)
    masks = model.bitmasks()
    for ys in itertools.product((0, 1), repeat=model.n):
        w = 1.0
        code = 0
        for yj, s, q in zip(ys, masks, model.p):
            w *= q if yj else 1.0 - q
            if yj:
                code |= s
        table[code] += w
    return table


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
