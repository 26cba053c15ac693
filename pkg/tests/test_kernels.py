"""Compiled radial kernel vs the pure-numpy fallback."""
import numpy as np
import pytest

from jtoric import kernels
from jtoric.errors import StepFailure


def _setup(m=257, a=1.5, b=2.0):
    B = np.linspace(1.0, b, m)
    f = 1.0 + (a - 1.0) * (B - 1.0) / (b - 1.0)
    h = float(B[1] - B[0])
    return f, B, h, a


def test_numpy_kernel_runs():
    f, B, h, a = _setup()
    out, t, steps = kernels.radial_advance(
        f, B, h, a, 2, 0.2, 0.0, 0.05, impl=kernels.numpy_impl)
    assert t == pytest.approx(0.05, abs=1e-12)
    assert steps > 0
    assert out[0] == 1.0 and out[-1] == a
    assert np.all(np.diff(out) > 0)


@pytest.mark.skipif(not kernels.HAVE_COMPILED,
                    reason="compiled kernel unavailable")
def test_compiled_matches_numpy():
    f, B, h, a = _setup(m=513)
    fc, tc, sc = kernels.radial_advance(
        f, B, h, a, 2, 0.2, 0.0, 0.2, impl=kernels.compiled_impl)
    fn, tn, sn = kernels.radial_advance(
        f, B, h, a, 2, 0.2, 0.0, 0.2, impl=kernels.numpy_impl)
    assert sc == sn
    assert tc == pytest.approx(tn, abs=1e-14)
    assert np.abs(fc - fn).max() < 1e-12


@pytest.mark.skipif(not kernels.HAVE_COMPILED,
                    reason="compiled kernel unavailable")
def test_compiled_is_default():
    assert kernels.compiled_impl is not None


def test_budget_exhaustion_raises():
    f, B, h, a = _setup()
    with pytest.raises(StepFailure):
        kernels.radial_advance(f, B, h, a, 2, 0.2, 0.0, 10.0, max_steps=3)


def test_monotonicity_loss_raises():
    f, B, h, a = _setup()
    f[100:110] = f[110]          # plateau collapses under the flow checks
    f[105] = f[110] + 1e-3       # non-monotone bump
    f[104] = f[110] + 2e-3
    with pytest.raises(StepFailure):
        kernels.radial_advance(f, B, h, a, 2, 0.2, 0.0, 1.0)


def test_time_resumes_where_it_stopped():
    f, B, h, a = _setup()
    f1, t1, s1 = kernels.radial_advance(f, B, h, a, 2, 0.2, 0.0, 0.03)
    f2, t2, s2 = kernels.radial_advance(f1, B, h, a, 2, 0.2, t1, 0.06)
    full, tf, sf = kernels.radial_advance(f, B, h, a, 2, 0.2, 0.0, 0.06)
    assert np.abs(f2 - full).max() < 1e-11
