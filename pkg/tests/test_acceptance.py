"""Acceptance criteria, one test each, at their stated tolerances."""

import time

import numpy as np
import pytest

from sfnls.attractor import (
    CocycleHandle, TemperedSetSpec, absorbing_radius, cocycle_apply, pullback_experiment,
    tail_uniformity_experiment,
)
from sfnls.cli import random_smooth_fields
from sfnls.dynamics import IntegratorConfig, evolve
from sfnls.grid import SpectralField, frac_constant, gagliardo_seminorm_oracle, hdot_sq, l2_sq, make_grid
from sfnls.ground_state import solve_ground_state
from sfnls.model import (
    AdmissiblePair, ForcingSpec, ModelParams, check_pair, gaussian_bump, theorem_pair, validate_params,
)
from sfnls.observables import gn_ratio, top_band_fraction
from sfnls.stochastic import coarsen_path, sample_path, shift_path

from conftest import gaussian


def presets(grid, amp=0.5):
    return {
        "zero": ForcingSpec.zero(),
        "linear_damping": ForcingSpec.linear_damping(0.3),
        "damped_forced": ForcingSpec.damped_forced(0.3, gaussian_bump(grid, amp, 2.0)),
    }


def test_01_mass_decay(verdict):
    g = make_grid(1, 40.0, 1024, 0.8)
    forcing = ForcingSpec.linear_damping(0.3)
    p = ModelParams(0.8, 0.8, 0.5, 0.3)
    start = time.perf_counter()
    rec, st = evolve(gaussian(g, chirp=0.3), 0, 4, p, forcing, sample_path(17, 0, 1e-3, 4000),
                     IntegratorConfig(1e-3), stride=100)
    elapsed = time.perf_counter() - start
    err = abs(rec.mass[-1] / rec.mass[0] / np.exp(-2 * 0.8 * 4) - 1)
    band = top_band_fraction(st.field)
    ok = err < 1e-9 and elapsed < 10 and band < 1e-8
    assert verdict("1 mass decay", ok, f"rel err {err:.2e}, {elapsed:.1f} s, top band {band:.1e}")


def _mass_res(grid, forcing, dt, T, seed):
    p = ModelParams(0.8, 0.8, 0.5, forcing.beta)
    rec, _ = evolve(gaussian(grid, chirp=0.3), 0, T, p, forcing, sample_path(seed, 0, dt, int(round(T / dt))),
                    IntegratorConfig(dt))
    return float(np.max(np.abs(rec.identity_residuals["mass"])) / rec.mass[0])


def test_02_mass_identity(verdict):
    g = make_grid(1, 40.0, 256, 0.8)
    ok, parts = True, []
    for name, forcing in presets(g, 0.05).items():
        res = _mass_res(g, forcing, 5e-5, 2.0, 3)
        ratios = [_mass_res(g, forcing, 2e-3, 2.0, s) / _mass_res(g, forcing, 1e-3, 2.0, s) for s in (1, 2, 3)]
        order = float(np.exp(np.mean(np.log(ratios))))
        ok &= res < 1e-9 and 3.4 <= order <= 4.6
        parts.append(f"{name} {res:.1e} ratio {order:.2f}")
    assert verdict("2 mass identity", ok, "; ".join(parts))


def _energy_ratio(grid, seed, dts):
    p = ModelParams(grid.alpha, 0.8, 0.5, 0.3, grid.dim)
    forcing = ForcingSpec.damped_forced(0.3, gaussian_bump(grid, 0.05, 2.0))
    u0 = gaussian(grid, width=np.sqrt(2), chirp=0.3)
    fine = sample_path(seed, 0, dts[-1], int(round(1 / dts[-1])))
    out = []
    for dt in dts:
        path = coarsen_path(fine, int(round(dt / dts[-1])))
        rec, _ = evolve(u0, 0, 1, p, forcing, path, IntegratorConfig(dt), stride=50)
        out.append(abs(rec.identity_residuals["energy"][-1]))
    return [a / b for a, b in zip(out, out[1:])]


def test_03_energy_identity(verdict):
    start = time.perf_counter()
    ratios = []
    for grid, dts in ((make_grid(1, 40.0, 256, 0.8), (2e-3, 1e-3, 5e-4)),
                      (make_grid(2, 30.0, 128, 0.8), (2e-3, 1e-3))):
        for seed in range(5):
            ratios += _energy_ratio(grid, seed, dts)
    elapsed = time.perf_counter() - start
    ok = all(1.7 <= r <= 2.3 for r in ratios) and elapsed < 120
    assert verdict("3 energy identity", ok,
                   f"ratios in [{min(ratios):.2f}, {max(ratios):.2f}] over {len(ratios)}, {elapsed:.0f} s")


def test_04_gn_audit(verdict):
    g = make_grid(1, 80.0, 2048, 0.5)
    p = ModelParams(0.5, 1.0, 0.5)
    gs = solve_ground_state(g, p)
    rel = gs.residual_l2 / np.sqrt(gs.mass)
    worst = max(gn_ratio(f, p, gs.c_opt) for f in random_smooth_fields(g, 1000, 0))
    at_r = gn_ratio(gs.profile, p, gs.c_opt)
    ok = rel < 1e-8 and worst <= 1 + 1e-9 and at_r >= 0.999
    assert verdict("4 GN audit", ok, f"residual {rel:.1e}, max ratio {worst:.4f}, ground {at_r:.5f}")


def test_05_local_ground_state(verdict):
    g = make_grid(1, 40.0, 512, 1.0, local=True)
    gs = solve_ground_state(g, ModelParams(1.0, 1.0, 0.5))
    sech = np.sqrt(2) / np.cosh(g.coords()[0])
    err = np.sqrt(l2_sq(g, gs.profile.values - sech) / l2_sq(g, sech))
    assert verdict("5 ground state vs sqrt(2) sech", err < 0.02, f"rel L2 {err:.1e}")


def test_06_admissibility(verdict):
    pair = theorem_pair(ModelParams(0.8, 0.8, 0.5, dim=2))
    ok = abs(pair.p - 28) < 1e-12 and abs(pair.q - 70 / 33) < 1e-12 and pair.residual(2, 0.8) < 1e-12
    rng = np.random.default_rng(6)
    draws = 0
    while draws < 1000:
        a = rng.uniform(2 / 3, 1)
        s = rng.uniform(0, 1) * 2 * a / (2 - 2 * a)
        p = ModelParams(a, s, 0.5, dim=2)
        if not validate_params(p).valid:
            continue
        draws += 1
        ok &= check_pair(theorem_pair(p), 2, a) == []
    ok &= bool(check_pair(AdmissiblePair(2, 6), 2, 0.8))
    assert verdict("6 admissible pairs", ok, f"p={pair.p:.12g}, q={pair.q:.12g}, {draws} draws")


def test_07_cocycle(verdict):
    g = make_grid(1, 40.0, 128, 0.8)
    dt = 0.01
    h = CocycleHandle(g, ModelParams(0.8, 0.8, 0.5, 0.3), presets(g)["damped_forced"], IntegratorConfig(dt))
    rng = np.random.default_rng(7)
    u0 = gaussian(g, chirp=0.3)
    worst = 0.0
    for _ in range(20):
        n_t, n_s, n_tau = rng.integers(1, 60, 3)
        seed = int(rng.integers(0, 2**31))
        t, s, tau = n_t * dt, n_s * dt, (n_tau - 30) * dt
        path = sample_path(seed, -0.3, dt, 200)
        same = cocycle_apply(h, 0.0, tau, path, u0)
        worst = max(worst, float(np.max(np.abs(same.values - u0.values))))
        whole = cocycle_apply(h, t + s, tau, path, u0)
        mid = cocycle_apply(h, s, tau, path, u0)
        k = path.index_of(tau + s) - path.index_of(path.t0)
        for p in (path, shift_path(path, k)):
            worst = max(worst, float(np.max(np.abs(whole.values - cocycle_apply(h, t, tau + s, p, mid).values))))
    assert verdict("7 cocycle laws", worst < 1e-12, f"max deviation {worst:.1e}")


def test_08_ou_sampler(verdict):
    # dt = 5 leaves a lag correlation of e^-5, so the draws are close to independent
    z = sample_path(8, 0.0, 5.0, 100_000).z_samples
    se = 0.5 * np.sqrt(2 / len(z))
    dev = abs(np.var(z) - 0.5)
    p = sample_path(9, 0.0, 0.01, 400)
    exact = shift_path(shift_path(p, 50), 70).same_as(shift_path(p, 120))
    ok = dev < 3 * se and exact
    assert verdict("8 OU sampler", ok, f"|var - 1/2| = {dev:.1e} ({dev / se:.2f} se), shift exact {exact}")


def test_09_pullback(verdict):
    g = make_grid(1, 80.0, 512, 0.8)
    forcing = ForcingSpec.damped_forced(0.3, gaussian_bump(g, 1.0, 2.0))
    h = CocycleHandle(g, ModelParams(0.8, 0.8, 0.5, 0.3), forcing, IntegratorConfig(0.01))
    bump = gaussian_bump(g, 1.0, 3.0)
    first = TemperedSetSpec(radius=1.0, center=bump, seed=1)
    second = TemperedSetSpec(radius=1.0, center=bump * (-1), seed=2)
    start = time.perf_counter()
    rep = pullback_experiment(h, first, [1, 2, 4, 8, 16], 32, sample_path(11, -0.01, 0.01, 1), second_set=second)
    elapsed = time.perf_counter() - start
    ok = rep.spearman < -0.9 and rep.cross_basin_distance < 1e-4 and rep.diverged == 0 and elapsed < 600
    assert verdict("9 pullback attraction", ok,
                   f"spearman {rep.spearman:.2f}, cross-basin {rep.cross_basin_distance:.1e}, {elapsed:.0f} s")


def test_10_absorbing(verdict):
    g = make_grid(1, 80.0, 256, 0.8)
    gamma = 0.5
    ok, margins = True, []
    for name, forcing in presets(g, 1.0).items():
        h = CocycleHandle(g, ModelParams(0.8, 0.8, gamma, forcing.beta), forcing, IntegratorConfig(0.02))
        for t in (5 / gamma, 10 / gamma, 20 / gamma):
            r = absorbing_radius(h, TemperedSetSpec(radius=2.0, seed=3), t, 0.0, sample_path(11, 0, 0.02, 1))
            ok &= r.margin > 0
            margins.append(r.margin)
    assert verdict("10 absorbing inequality", ok, f"min margin {min(margins):.3g} over {len(margins)} cases")


def test_11_tails(verdict):
    g = make_grid(1, 200.0, 1024, 0.8)
    forcing = ForcingSpec.damped_forced(0.3, gaussian_bump(g, 1.0, 2.0))
    h = CocycleHandle(g, ModelParams(0.8, 0.8, 0.5, 0.3), forcing, IntegratorConfig(0.01))
    rep = tail_uniformity_experiment(h, TemperedSetSpec(radius=1.0, seed=1), [8, 16, 32, 64], 20.0,
                                     sample_path(11, -0.01, 0.01, 1), with_hdot=False)
    ok = rep.monotone and rep.plateau_ratio < 1e-6
    assert verdict("11 tail estimates", ok, f"monotone {rep.monotone}, tail/mass at k=64 {rep.plateau_ratio:.1e}")


@pytest.mark.parametrize("alpha, extent", [(0.3, 80.0), (0.5, 40.0), (0.8, 40.0)])
def test_12_norm_identity(verdict, alpha, extent):
    g = make_grid(1, extent, 512, alpha)
    worst = 0.0
    for width in (1.0, 2.0):
        f = SpectralField(g, np.exp(-g.radius() ** 2 / (2 * width**2)).astype(complex))
        oracle = 0.5 * frac_constant(1, alpha) * gagliardo_seminorm_oracle(f)
        worst = max(worst, abs(hdot_sq(g, f.values) / oracle - 1))
    assert verdict(f"12 norm identity alpha={alpha}", worst < 0.02, f"max rel diff {worst:.1e}")
