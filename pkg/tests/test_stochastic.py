
import numpy as np
import pytest

from sfnls.stochastic import (
    coarsen_path, extend_path_backward, load_path, ou_step_moments, quiet_path, sample_path, save_path,
    shift_path,
)


def test_determinism():
    a, b = sample_path(5, 0.0, 0.01, 500), sample_path(5, 0.0, 0.01, 500)
    assert a.same_as(b)
    assert not a.same_as(sample_path(6, 0.0, 0.01, 500))


def test_windows_agree_across_requests():
    long = sample_path(3, -1.0, 0.01, 300)
    short = sample_path(3, 0.0, 0.01, 100)
    assert long.window(0.0, 1.0).same_as(short)


def test_stationary_variance():
    p = sample_path(1, 0.0, 0.05, 100_000)
    z = p.z_samples
    # correlation time is 1, so thin to roughly independent samples for the error bar
    thin = z[::40]
    se = np.sqrt(2 / len(thin)) * 0.5
    assert abs(np.var(z) - 0.5) < 3 * se


def test_increment_variance():
    p = sample_path(2, 0.0, 0.01, 100_000)
    assert abs(np.var(p.w_increments) / 0.01 - 1) < 3 * np.sqrt(2 / 100_000)


def test_ou_recursion_consistent():
    # z_{k+1} = z_k - int z + dW exactly; check the drift integral is O(dt)
    p = sample_path(4, 0.0, 0.001, 5000)
    integral = p.w_increments - np.diff(p.z_samples)
    approx = 0.5 * p.dt * (p.z_samples[1:] + p.z_samples[:-1])
    assert np.max(np.abs(integral - approx)) < 10 * p.dt**1.5


def test_moment_series_continuity():
    lo, hi = ou_step_moments(0.00999999), ou_step_moments(0.01000001)
    for k in lo:
        assert lo[k] == pytest.approx(hi[k], rel=1e-5, abs=1e-14)


def test_shift_composition():
    p = sample_path(9, 0.0, 0.01, 400)
    assert shift_path(shift_path(p, 50), 70).same_as(shift_path(p, 120))
    s = shift_path(p, 100)
    assert s.t0 == pytest.approx(1.0)
    np.testing.assert_allclose(s.w, p.w[100:] - p.w[100], atol=1e-13)


def test_extend_backward_bit_identical():
    p = sample_path(7, 0.0, 0.01, 200)
    e = extend_path_backward(p, 150)
    assert e.t0 == pytest.approx(-1.5)
    assert shift_path(e, 150).same_as(p)
    twice = extend_path_backward(extend_path_backward(p, 50), 100)
    assert twice.same_as(e)


def test_coarsen():
    p = sample_path(1, 0.0, 0.001, 1000)
    c = coarsen_path(p, 10)
    assert c.dt == pytest.approx(0.01) and c.steps == 100
    np.testing.assert_allclose(c.w, p.w[::10], atol=1e-14)
    np.testing.assert_array_equal(c.z_samples, p.z_samples[::10])
    with pytest.raises(ValueError):
        coarsen_path(p, 7)


def test_quiet_path():
    q = quiet_path(0.0, 0.1, 10)
    assert not q.w_increments.any() and not q.z_samples.any()
    assert extend_path_backward(q, 5).quiet


def test_save_load_roundtrip(tmp_path):
    p = sample_path(123, -0.5, 0.01, 77)
    f = tmp_path / "p.bin"
    save_path(p, f)
    q = load_path(f)
    assert q.same_as(p) and q.seed == 123 and q.dt == p.dt


def test_index_alignment():
    p = sample_path(0, 0.0, 0.01, 100)
    assert p.index_of(0.5) == 50
    with pytest.raises(ValueError):
        p.index_of(0.505)
    with pytest.raises(ValueError):
        p.index_of(1.5)
