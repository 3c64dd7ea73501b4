import numpy as np
import pytest

from sfnls.attractor import (
    CocycleHandle, TemperedSetSpec, absorbing_bounds, absorbing_radius, cocycle_apply, diameter_h_alpha,
    hausdorff_h_alpha, pullback_experiment, sample_set, tail_uniformity_experiment,
)
from sfnls.dynamics import DivergenceError, IntegratorConfig
from sfnls.grid import hdot_sq, l2_sq, make_grid
from sfnls.model import ForcingSpec, ModelParams, gaussian_bump
from sfnls.stochastic import sample_path, shift_path

from conftest import gaussian

GRID = make_grid(1, 40.0, 128, 0.8)
DT = 0.01


def _handle(forcing=None, gamma=0.5):
    forcing = forcing or ForcingSpec.damped_forced(0.3, gaussian_bump(GRID, 0.5, 2.0))
    return CocycleHandle(GRID, ModelParams(0.8, 0.8, gamma, forcing.beta), forcing, IntegratorConfig(DT))


PRESETS = {
    "zero": ForcingSpec.zero(),
    "linear_damping": ForcingSpec.linear_damping(0.3),
    "damped_forced": ForcingSpec.damped_forced(0.3, gaussian_bump(GRID, 0.5, 2.0)),
}


def test_identity_and_composition():
    h = _handle()
    path = sample_path(2, 0, DT, 100)
    u0 = gaussian(GRID, chirp=0.3)
    same = cocycle_apply(h, 0.0, 0.3, path, u0)
    np.testing.assert_array_equal(same.values, u0.values)
    whole = cocycle_apply(h, 0.75, 0.0, path, u0)
    first = cocycle_apply(h, 0.25, 0.0, path, u0)
    second = cocycle_apply(h, 0.5, 0.25, path, first)
    assert np.max(np.abs(whole.values - second.values)) < 1e-12
    # the same composition on the shifted sample
    shifted = cocycle_apply(h, 0.5, 0.25, shift_path(path, 25), first)
    assert np.max(np.abs(whole.values - shifted.values)) < 1e-12
    with pytest.raises(ValueError):
        cocycle_apply(h, -1.0, 0.0, path, u0)


def test_divergence_raises():
    h = CocycleHandle(GRID, ModelParams(0.8, 0.8, 0.5), ForcingSpec.zero(), IntegratorConfig(DT, overflow_guard=1e-3))
    with pytest.raises(DivergenceError):
        cocycle_apply(h, 0.1, 0.0, sample_path(0, 0, DT, 10), gaussian(GRID))


def test_determinism_and_threads(monkeypatch):
    h = _handle()
    path = sample_path(3, -2.0, DT, 200)
    spec = TemperedSetSpec(radius=1.0, seed=7)
    monkeypatch.setenv("SFNLS_THREADS", "1")
    a = pullback_experiment(h, spec, [1.0, 2.0], 4, path)
    b = pullback_experiment(h, spec, [1.0, 2.0], 4, path)
    monkeypatch.setenv("SFNLS_THREADS", "3")
    c = pullback_experiment(h, spec, [1.0, 2.0], 4, path)
    for t in (1.0, 2.0):
        np.testing.assert_array_equal(a.per_path_endpoints[t], b.per_path_endpoints[t])
        np.testing.assert_array_equal(a.per_path_endpoints[t], c.per_path_endpoints[t])


def test_sample_set():
    spec = TemperedSetSpec(radius=2.0, seed=1)
    u = sample_set(GRID, spec, 0.0, 10)
    norms = np.sqrt(l2_sq(GRID, u) + hdot_sq(GRID, u))
    assert np.all(norms <= 2.0 + 1e-12) and np.all(norms >= 1.0 - 1e-12)
    np.testing.assert_array_equal(u, sample_set(GRID, spec, 0.0, 10))
    assert diameter_h_alpha(GRID, u) > 0
    assert hausdorff_h_alpha(GRID, u, u) == 0


def test_tempered_specs():
    fixed = TemperedSetSpec(radius=3.0)
    grow = TemperedSetSpec("ball_scaled", radius=1.0, growth_rate=0.1)
    assert fixed.is_tempered(0.01)
    assert grow.is_tempered(0.2) and not grow.is_tempered(0.05)
    assert grow.radius_at(10.0) == pytest.approx(np.e)
    with pytest.raises(ValueError):
        TemperedSetSpec("cube")


def test_lipschitz_in_initial_data():
    h = _handle()
    path = sample_path(4, 0, DT, 100)
    base = gaussian(GRID, chirp=0.3)
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(5):
        eps = 1e-4 * gaussian(GRID, width=2.0) * rng.standard_normal()
        a = cocycle_apply(h, 1.0, 0.0, path, base)
        b = cocycle_apply(h, 1.0, 0.0, path, base + eps)
        ratios.append(np.sqrt(l2_sq(GRID, a.values - b.values) / l2_sq(GRID, eps.values)))
    assert max(ratios) < 5.0


def test_unforced_contraction():
    h = _handle(ForcingSpec.zero())
    spec = TemperedSetSpec(radius=1.0, seed=2)
    path = sample_path(5, -3.0, DT, 300)
    rep = pullback_experiment(h, spec, [1.0, 2.0, 3.0], 6, path)
    for t, m in zip(rep.t_values, rep.absorbing_radius_estimates):
        m0 = np.max(l2_sq(GRID, sample_set(GRID, spec, t, 6, stream=list(rep.t_values).index(t))))
        assert m == pytest.approx(m0 * np.exp(-2 * 0.5 * t), rel=1e-10)
    assert np.all(np.diff(rep.image_diameters) < 0)
    assert rep.spearman == -1.0


@pytest.mark.parametrize("name", list(PRESETS))
def test_absorbing_presets(name):
    h = _handle(PRESETS[name])
    spec = TemperedSetSpec(radius=1.0, seed=3)
    rep = absorbing_radius(h, spec, 10.0, -0.5, sample_path(6, 0, DT, 1), n_samples=4)
    assert rep.margin > 0
    assert rep.measured <= rep.integral_rhs * (1 + 1e-3)
    integral, ball = absorbing_bounds(h, spec, 10.0, -0.5)
    assert (integral, ball) == (rep.integral_rhs, rep.ball_rhs)


def test_absorbing_needs_damping():
    h = _handle(ForcingSpec.zero(), gamma=0.0)
    with pytest.raises(ValueError):
        absorbing_bounds(h, TemperedSetSpec(), 1.0, 0.0)


def test_tail_report():
    g = make_grid(1, 80.0, 256, 0.8)
    forcing = ForcingSpec.damped_forced(0.3, gaussian_bump(g, 0.5, 2.0))
    h = CocycleHandle(g, ModelParams(0.8, 0.8, 0.5, 0.3), forcing, IntegratorConfig(0.02))
    rep = tail_uniformity_experiment(h, TemperedSetSpec(radius=1.0), [4.0, 8.0, 16.0, 32.0], 4.0,
                                     sample_path(0, 0, 0.02, 1), n_samples=3)
    assert rep.monotone
    assert rep.plateau_ratio < 1e-4
    assert rep.tail_hdot is not None and np.all(np.diff(rep.tail_hdot) <= 0)
    assert set(rep.to_dict()) >= {"k_values", "tail_l2", "plateau_ratio"}
