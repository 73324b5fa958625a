import numpy as np
import pytest

from fdnfit import autodiff as ad


def numeric_grad(f, x, step=1e-6):
    """Central differences of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        h = step * max(1.0, abs(flat[i]))
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def tape_grad(build, x):
    """Value and gradient of ``build(var) -> scalar Var`` at ``x``."""
    tape = ad.Tape()
    v = tape.var(x)
    out = build(v)
    tape.backward(out)
    return float(out.value), v.grad


def value_of(build):
    def f(x):
        tape = ad.Tape()
        return float(build(tape.var(x)).value)
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
