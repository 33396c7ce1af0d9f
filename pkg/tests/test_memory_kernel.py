import numpy as np
import pytest

from dualporo import memory_kernel as mk
from dualporo.errors import DomainError


def test_weights_positive_decreasing_telescoping():
    quad = mk.KernelQuadrature(0.01, 500)
    w = quad.weights
    assert np.all(w > 0.0)
    assert np.all(np.diff(w) < 0.0)
    for n in (1, 7, 500):
        assert quad.weight_sum(n) == pytest.approx(2.0 * np.sqrt(n * 0.01), abs=1e-15)


def test_zero_history_gives_zero_source():
    quad = mk.KernelQuadrature(0.1, 10)
    hist = mk.HistoryBuffer()
    for n in range(1, 11):
        hist.append(0.0)
        assert mk.memory_source(quad, hist, 2.0, n) == 0.0


def test_linear_history_is_exact():
    dt = 0.02
    quad = mk.KernelQuadrature(dt, 50)
    hist = mk.HistoryBuffer()
    for n in range(1, 51):
        t = n * dt
        hist.append(t)
        got = mk.memory_source(quad, hist, 1.5, n)
        assert got == pytest.approx(-1.5 * 2.0 * np.sqrt(t), rel=1e-13)


def test_linearity_in_amplitude_and_argument(rng):
    dt = 0.05
    quad = mk.KernelQuadrature(dt, 20)
    g = np.concatenate(([0.0], rng.standard_normal(20)))
    h1, h3 = mk.HistoryBuffer(), mk.HistoryBuffer()
    for v in g[1:]:
        h1.append(v)
        h3.append(3.0 * v)
    for n in (1, 10, 20):
        base = mk.memory_source(quad, h1, 1.0, n)
        assert mk.memory_source(quad, h1, 2.0, n) == pytest.approx(2.0 * base, rel=1e-13)
        assert mk.memory_source(quad, h3, 1.0, n) == pytest.approx(3.0 * base, rel=1e-13)


def test_causality(rng):
    dt = 0.05
    quad = mk.KernelQuadrature(dt, 20)
    g = rng.standard_normal(20)
    h1, h2 = mk.HistoryBuffer(), mk.HistoryBuffer()
    for v in g:
        h1.append(v)
        h2.append(v)
    h2._entries[15] += 10.0  # future relative to step 10
    assert (mk.memory_source(quad, h1, 1.0, 10)
            == mk.memory_source(quad, h2, 1.0, 10))


def test_split_reassembles_full_source(rng):
    dt = 0.02
    quad = mk.KernelQuadrature(dt, 30)
    hist = mk.HistoryBuffer()
    for n in range(1, 31):
        hist.append(rng.standard_normal())
        part, coef = mk.split_implicit_coefficient(quad, hist, 1.3, n)
        assert coef == -2.0 * 1.3 / np.sqrt(dt)
        full = mk.memory_source(quad, hist, 1.3, n)
        assert part + coef * hist.entry(n) == pytest.approx(full, abs=1e-13)


def test_split_requires_positive_step():
    quad = mk.KernelQuadrature(0.1, 5)
    hist = mk.HistoryBuffer()
    with pytest.raises(DomainError):
        mk.split_implicit_coefficient(quad, hist, 1.0, 0)


def test_amplitude_closed_forms():
    d_delta, c_m = mk.kernel_amplitude(0.0, 0.2, 1.0, 1.0, 3)
    assert c_m == pytest.approx(6.0 * np.sqrt(0.2) / np.sqrt(np.pi), rel=1e-14)
    assert c_m == pytest.approx(1.514, abs=2e-4)
    for delta in (0.1, 0.01, 0.001):
        d_delta, c_m = mk.kernel_amplitude(delta, 0.2, 1.0, 1.0, 3)
        assert d_delta <= 2.0 * delta * c_m
        assert d_delta / delta == pytest.approx(c_m, rel=5.0 * delta)
    # the d=2 surface factor is 4
    _, c2 = mk.kernel_amplitude(0.0, 0.2, 1.0, 1.0, 2)
    assert c2 == pytest.approx(4.0 * np.sqrt(0.2) / np.sqrt(np.pi), rel=1e-14)


def test_quadratic_history_convergence_order():
    errs = []
    dts = [4e-3, 2e-3, 1e-3]
    for dt in dts:
        n = int(round(1.0 / dt))
        quad = mk.KernelQuadrature(dt, n)
        hist = mk.HistoryBuffer()
        for j in range(1, n + 1):
            hist.append((j * dt) ** 2)
        got = mk.memory_source(quad, hist, 1.0, n)
        errs.append(abs(got + 8.0 / 3.0) / (8.0 / 3.0))
    orders = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(2.0)
    assert np.all(orders >= 1.4)
