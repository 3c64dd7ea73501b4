"""Config-driven experiment runner.

Usage::

    sfnls list
    sfnls run experiment.ini

Configs are INI files; see ``list`` output for the sections each experiment
reads. Every run writes ``manifest.ini`` (the fully resolved config, itself a
valid config), a ``summary.json`` and experiment-specific CSV files into the
output directory, and prints one ``PASS``/``FAIL`` line per check.

Exit codes: 0 success, 1 config error, 2 parameter regime rejected,
3 divergence. Failed checks still exit 0; scripts should read the PASS/FAIL
lines or ``summary.json``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attractor as att
from .dynamics import DivergenceError, IntegratorConfig, evolve
from .grid import SpectralField, make_grid
from .ground_state import GroundStateError, solve_ground_state
from .model import (
    AdmissiblePair, ForcingKind, ForcingSpec, ModelParams, gaussian_bump, theorem_pair, validate_params,
)
from .observables import gn_ratio
from .stochastic import coarsen_path, quiet_path, sample_path, save_path

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_DIVERGED = 0, 1, 2, 3

DEFAULTS = {
    "grid": {"dim": "1", "extent": "40", "points": "256", "alpha": "0.8", "local": "false"},
    "model": {"sigma": "0.8", "gamma": "0.5", "beta": "0.3", "forcing": "damped_forced",
              "g_amplitude": "0.5", "g_width": "2.0", "regime": "strict"},
    "initial": {"amplitude": "1.0", "width": "1.0", "chirp": "0.3"},
    "time": {"dt": "1e-3", "t_start": "0", "t_end": "1", "stride": "1", "scheme": "strang",
             "form": "u", "v_form_variant": "trapezoid"},
    "noise": {"seed": "0", "n_paths": "1", "enabled": "true"},
    "attractor": {"kind": "ball", "radius": "1.0", "growth_rate": "0", "width": "3.0",
                  "t_schedule": "1, 2, 4, 8, 16", "k_schedule": "8, 16, 32, 64", "n_samples": "8",
                  "sigma0": "0", "set_seed": "1", "cross_basin": "true"},
    "check": {"tolerance": "1e-9", "residual_tolerance": "1e-9", "ratio_low": "1.7", "ratio_high": "2.3",
              "samples": "1000", "levels": "3"},
    "strichartz": {"widths": "0.5, 1, 2", "window": "2", "n_times": "129", "p": "", "q": ""},
    "output": {"directory": "out", "formats": "csv, json"},
}

# name -> (sections read, what is exercised)
CATALOG = {
    "simulate": ("grid model initial time noise output", "pathwise solution of the stochastic equation"),
    "mass_check": ("grid model initial time noise check output", "mass balance and exponential mass decay"),
    "energy_check": ("grid model initial time noise check output", "energy balance, first order in dt"),
    "gn_audit": ("grid model check output", "sharp Gagliardo-Nirenberg inequality with ground-state constant"),
    "ground_state": ("grid model check output", "ground state of the fractional elliptic equation"),
    "pullback": ("grid model time noise attractor check output", "pullback attraction of tempered sets"),
    "absorbing": ("grid model time noise attractor output", "absorbing-ball energy inequality"),
    "tails": ("grid model time noise attractor check output", "uniform smallness of far-field tails"),
    "strichartz_probe": ("grid model strichartz output", "Strichartz bound for the free fractional flow"),
    "convergence": ("grid model initial time noise check output", "strong convergence order of the splitting"),
}


class ConfigError(ValueError):
    pass


def list_experiments() -> str:
    lines = []
    for name, (blocks, claim) in CATALOG.items():
        lines.append(f"{name:17s} [{blocks}]  -> {claim}")
    return "\n".join(lines)


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    name = cp.get("experiment", "name", fallback=None)
    if name not in CATALOG:
        raise ConfigError(f"unknown or missing [experiment] name: {name!r}")
    return cp


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


class Setup:
    """Objects built from a parsed config."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        try:
            gs = cp["grid"]
            self.grid = make_grid(gs.getint("dim"), gs.getfloat("extent"), gs.getint("points"),
                                  gs.getfloat("alpha"), local=gs.getboolean("local"))
            ms = cp["model"]
            kind = ForcingKind(ms.get("forcing"))
            beta = ms.getfloat("beta") if kind is not ForcingKind.ZERO else 0.0
            if kind is ForcingKind.ZERO:
                self.forcing = ForcingSpec.zero()
            elif kind is ForcingKind.LINEAR_DAMPING:
                self.forcing = ForcingSpec.linear_damping(beta)
            else:
                g = gaussian_bump(self.grid, ms.getfloat("g_amplitude"), ms.getfloat("g_width"))
                self.forcing = ForcingSpec.damped_forced(beta, g)
            self.params = ModelParams(self.grid.alpha, ms.getfloat("sigma"), ms.getfloat("gamma"), beta,
                                      self.grid.dim)
            if ms.get("regime") not in ("strict", "report"):
                raise ConfigError("[model] regime must be strict or report")
            ts = cp["time"]
            self.dt = ts.getfloat("dt")
            self.t_start, self.t_end = ts.getfloat("t_start"), ts.getfloat("t_end")
            self.stride = ts.getint("stride")
            self.form = ts.get("form")
            if self.form not in ("u", "v"):
                raise ConfigError("[time] form must be u or v")
            self.config = IntegratorConfig(self.dt, ts.get("scheme"), ts.get("v_form_variant"))
            ns = cp["noise"]
            self.seed, self.n_paths = ns.getint("seed"), ns.getint("n_paths")
            self.noise = ns.getboolean("enabled")
            self.out = Path(cp.get("output", "directory"))
            self.formats = {f.strip() for f in cp.get("output", "formats").split(",")}
            self.tol = cp.getfloat("check", "tolerance")
        except ConfigError:
            raise
        except (ValueError, KeyError, configparser.Error) as exc:
            raise ConfigError(str(exc)) from exc

    def initial(self) -> SpectralField:
        s = self.cp["initial"]
        a, w, c = s.getfloat("amplitude"), s.getfloat("width"), s.getfloat("chirp")
        r2 = self.grid.radius() ** 2
        x0 = self.grid.coords()[0]
        return SpectralField(self.grid, a * np.exp(-r2 / (2 * w**2)) * (1 + 1j * c * x0))

    def path(self, seed: int, t0: float, t1: float, dt: float | None = None):
        dt = self.dt if dt is None else dt
        steps = int(round((t1 - t0) / dt))
        if abs(steps * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
            raise ConfigError(f"dt={dt} does not divide [{t0}, {t1}]")
        if not self.noise:
            return quiet_path(t0, dt, steps)
        return sample_path(seed, t0, dt, steps)

    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.n_paths)]


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name: str, ok: bool, value, bound: str):
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        self.items.append({"name": name, "pass": bool(ok), "value": value, "bound": bound})
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value!r} ({bound})")


def _write_json(path: Path, data: dict):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=float)


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _pool_map(fn, items):
    workers = att.worker_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# --- experiments --------------------------------------------------------------

def exp_simulate(s: Setup, checks: Checks) -> dict:
    u0 = s.initial()

    def one(seed):
        path = s.path(seed, s.t_start, s.t_end)
        rec, st = evolve(u0, s.t_start, s.t_end, s.params, s.forcing, path, s.config,
                         form=s.form, stride=s.stride)
        return seed, path, rec, st

    out = {}
    for seed, path, rec, st in _pool_map(one, s.seeds()):
        if st.diverged:
            raise DivergenceError(f"seed {seed} diverged at t={st.time}")
        if "csv" in s.formats:
            rec.to_csv(s.out / f"diagnostics_seed{seed}.csv")
        np.save(s.out / f"final_seed{seed}.npy", st.field.values)
        save_path(path, s.out / f"path_seed{seed}.bin")
        out[str(seed)] = rec.summary()
    checks.add("all paths finite", True, len(out), "no divergence")
    return out


def exp_mass_check(s: Setup, checks: Checks) -> dict:
    u0 = s.initial()
    path = s.path(s.seed, s.t_start, s.t_end)
    rec, st = evolve(u0, s.t_start, s.t_end, s.params, s.forcing, path, s.config, form=s.form, stride=s.stride)
    if st.diverged:
        raise DivergenceError("trajectory diverged")
    if "csv" in s.formats:
        rec.to_csv(s.out / "diagnostics.csv")
    res = float(np.max(np.abs(rec.identity_residuals["mass"])) / rec.mass[0])
    out = {"residual_max_relative": res, "mass_ratio": float(rec.mass[-1] / rec.mass[0])}
    rtol = s.cp.getfloat("check", "residual_tolerance")
    checks.add("mass identity residual (relative)", res < rtol, res, f"< {rtol:g}")
    if s.forcing.kind is not ForcingKind.DAMPED_FORCED:
        T = s.t_end - s.t_start
        exact = np.exp(-2 * (s.params.gamma + s.forcing.beta) * T)
        err = float(abs(rec.mass[-1] / rec.mass[0] / exact - 1))
        out["closed_form"] = float(exact)
        checks.add("mass decay vs closed form", err < s.tol, err, f"< {s.tol:g}")
    return out


def _halving(s: Setup, seed: int, levels: int, quantity):
    """Run ``quantity(path)`` at dt, dt/2, ... on one path; returns values."""
    T0, T1 = s.t_start, s.t_end
    fine_dt = s.dt / 2 ** (levels - 1)
    fine = s.path(seed, T0, T1, fine_dt)
    vals = []
    for lev in range(levels):
        f = 2 ** (levels - 1 - lev)
        p = coarsen_path(fine, f) if f > 1 else fine
        vals.append(quantity(p))
    return vals


def exp_energy_check(s: Setup, checks: Checks) -> dict:
    u0 = s.initial()
    levels = s.cp.getint("check", "levels")
    lo, hi = s.cp.getfloat("check", "ratio_low"), s.cp.getfloat("check", "ratio_high")

    def final_res(p):
        cfg = IntegratorConfig(p.dt, s.config.scheme, s.config.v_form_variant)
        rec, st = evolve(u0, s.t_start, s.t_end, s.params, s.forcing, p, cfg, form=s.form)
        if st.diverged:
            raise DivergenceError("trajectory diverged")
        return abs(float(rec.identity_residuals["energy"][-1]))

    rows, out = [], {}
    for seed, vals in zip(s.seeds(), _pool_map(lambda sd: _halving(s, sd, levels, final_res), s.seeds())):
        ratios = [vals[i] / vals[i + 1] for i in range(len(vals) - 1)]
        out[str(seed)] = {"residuals": vals, "ratios": ratios}
        rows.append([seed] + vals)
        for r in ratios:
            checks.add(f"energy residual halving ratio seed {seed}", lo <= r <= hi, r, f"in [{lo:g}, {hi:g}]")
    if "csv" in s.formats:
        _write_csv(s.out / "energy_residuals.csv", ["seed"] + [f"dt_div_{2**i}" for i in range(levels)], rows)
    return out


def _ground(s: Setup):
    try:
        return solve_ground_state(s.grid, s.params)
    except GroundStateError as exc:
        raise DivergenceError(str(exc)) from exc


def exp_ground_state(s: Setup, checks: Checks) -> dict:
    gs = _ground(s)
    rel = gs.residual_l2 / np.sqrt(gs.mass)
    if "csv" in s.formats:
        cols = s.grid.coords()
        _write_csv(s.out / "ground_state.csv", [f"x{i}" for i in range(s.grid.dim)] + ["R"],
                   np.column_stack([c.ravel() for c in cols] + [gs.profile.values.real.ravel()]))
    checks.add("ground-state relative residual", rel < 1e-8, float(rel), "< 1e-8")
    return {"mass": gs.mass, "c_opt": gs.c_opt, "gn_constant": gs.gn_constant(s.params),
            "iterations": gs.iterations, "residual_l2": gs.residual_l2}


def random_smooth_fields(grid, n: int, seed: int):
    """Localized random fields: Gaussian-windowed, band-limited random phases."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        width = rng.uniform(0.5, grid.extent / 10)
        coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        cut = rng.uniform(0.5, 4.0)
        raw = grid.ifft(coef * np.exp(-(grid.kmag / cut) ** 2))
        center = rng.uniform(-grid.extent / 8, grid.extent / 8, grid.dim)
        r2 = sum((c - x0) ** 2 for c, x0 in zip(grid.coords(), center))
        yield SpectralField(grid, rng.uniform(0.1, 5.0) * raw * np.exp(-r2 / (2 * width**2)))


def exp_gn_audit(s: Setup, checks: Checks) -> dict:
    gs = _ground(s)
    n = s.cp.getint("check", "samples")
    ratios = np.array([gn_ratio(f, s.params, gs.c_opt) for f in random_smooth_fields(s.grid, n, s.seed)])
    at_r = gn_ratio(gs.profile, s.params, gs.c_opt)
    if "csv" in s.formats:
        _write_csv(s.out / "gn_ratios.csv", ["index", "ratio"], np.column_stack([np.arange(n), ratios]))
    checks.add("GN ratio over random fields", ratios.max() <= 1 + 1e-9, float(ratios.max()), "<= 1 + 1e-9")
    checks.add("GN ratio at ground state", at_r >= 0.999, float(at_r), ">= 0.999")
    return {"c_opt": gs.c_opt, "max_ratio": float(ratios.max()), "ground_ratio": float(at_r)}


def _handle(s: Setup):
    return att.CocycleHandle(s.grid, s.params, s.forcing, s.config, s.form)


def _set_spec(s: Setup, center=None, seed_offset=0):
    a = s.cp["attractor"]
    return att.TemperedSetSpec(a.get("kind"), a.getfloat("radius"), a.getfloat("growth_rate"), center,
                               a.getfloat("width"), seed=a.getint("set_seed") + seed_offset)


def exp_pullback(s: Setup, checks: Checks) -> dict:
    a = s.cp["attractor"]
    ts = _floats(a.get("t_schedule"))
    path = s.path(s.seed, -s.dt, 0.0)
    bump = gaussian_bump(s.grid, 1.0, a.getfloat("width"))
    second = _set_spec(s, bump * (-1), 1) if a.getboolean("cross_basin") else None
    first = _set_spec(s, bump if second is not None else None)
    rep = att.pullback_experiment(_handle(s), first, ts, a.getint("n_samples"), path, second_set=second)
    if rep.diverged:
        raise DivergenceError(f"{rep.diverged} pullback trajectories diverged")
    if "csv" in s.formats:
        _write_csv(s.out / "pullback.csv",
                   ["t", "diameter", "max_mass", "distance_to_last", "h_alpha_half_max"],
                   np.column_stack([rep.t_values, rep.image_diameters, rep.absorbing_radius_estimates,
                                    rep.distance_to_last, rep.h_alpha_half_max]))
    checks.add("pullback diameter rank correlation", rep.spearman < -0.9, rep.spearman, "< -0.9")
    if rep.cross_basin_distance is not None:
        tol = s.cp.getfloat("check", "tolerance")
        checks.add("cross-basin Hausdorff distance", rep.cross_basin_distance < tol,
                   rep.cross_basin_distance, f"< {tol:g}")
    return rep.to_dict()


def exp_absorbing(s: Setup, checks: Checks) -> dict:
    a = s.cp["attractor"]
    path = s.path(s.seed, -s.dt, 0.0)
    h, spec = _handle(s), _set_spec(s)
    rows, out = [], {}
    for t in _floats(a.get("t_schedule")):
        r = att.absorbing_radius(h, spec, t, a.getfloat("sigma0"), path, a.getint("n_samples"))
        rows.append([t, r.measured, r.integral_rhs, r.ball_rhs])
        out[repr(t)] = {"measured": r.measured, "integral_rhs": r.integral_rhs, "ball_rhs": r.ball_rhs}
        checks.add(f"absorbing inequality t={t:g}", r.margin > 0, r.margin, "margin > 0")
    if "csv" in s.formats:
        _write_csv(s.out / "absorbing.csv", ["t", "measured", "integral_rhs", "ball_rhs"], rows)
    return out


def exp_tails(s: Setup, checks: Checks) -> dict:
    a = s.cp["attractor"]
    path = s.path(s.seed, -s.dt, 0.0)
    t = _floats(a.get("t_schedule"))[-1]
    rep = att.tail_uniformity_experiment(_handle(s), _set_spec(s), _floats(a.get("k_schedule")), t, path,
                                         a.getint("n_samples"))
    if "csv" in s.formats:
        cols = [rep.k_values, rep.tail_l2, rep.tail_l2_half_time]
        head = ["k", "tail_l2", "tail_l2_half_time"]
        if rep.tail_hdot is not None:
            cols.append(rep.tail_hdot)
            head.append("tail_hdot")
        _write_csv(s.out / "tails.csv", head, np.column_stack(cols))
    tol = s.cp.getfloat("check", "tolerance")
    checks.add("tail_l2 monotone in k", rep.monotone, rep.tail_l2.tolist(), "non-increasing")
    checks.add("tail_l2 at largest k / mass", rep.plateau_ratio < tol, rep.plateau_ratio, f"< {tol:g}")
    return rep.to_dict()


def exp_strichartz(s: Setup, checks: Checks) -> dict:
    from .observables import strichartz_ratio_probe

    st = s.cp["strichartz"]
    if st.get("p") and st.get("q"):
        p = float(st.get("p"))
        pair = AdmissiblePair(p, float(st.get("q")))
    else:
        pair = theorem_pair(s.params)
    fam = [SpectralField(s.grid, np.exp(-s.grid.radius() ** 2 / (2 * w**2)).astype(complex))
           for w in _floats(st.get("widths"))]
    ratio = strichartz_ratio_probe(fam, pair, s.grid, st.getfloat("window"), st.getint("n_times"))
    checks.add("Strichartz ratio finite", np.isfinite(ratio) and ratio > 0, ratio, "finite, positive")
    return {"p": pair.p, "q": pair.q, "ratio": ratio}


def exp_convergence(s: Setup, checks: Checks) -> dict:
    """Strong error ``||u_dt - u_{dt/2}||`` across levels, RMS over paths."""
    from .grid import l2_sq

    u0 = s.initial()
    levels = max(3, s.cp.getint("check", "levels"))
    lo, hi = s.cp.getfloat("check", "ratio_low"), s.cp.getfloat("check", "ratio_high")

    def final(p):
        cfg = IntegratorConfig(p.dt, s.config.scheme, s.config.v_form_variant)
        _, st = evolve(u0, s.t_start, s.t_end, s.params, s.forcing, p, cfg, form=s.form, record=False)
        if st.diverged:
            raise DivergenceError("trajectory diverged")
        return st.field.values

    sq = np.zeros(levels - 1)
    for vals in _pool_map(lambda sd: _halving(s, sd, levels, final), s.seeds()):
        sq += [float(l2_sq(s.grid, vals[i] - vals[i + 1])) for i in range(levels - 1)]
    errs = np.sqrt(sq / s.n_paths)
    ratios = errs[:-1] / errs[1:]
    slope = -np.polyfit(np.arange(levels - 1), np.log2(errs), 1)[0]
    checks.add("mean halving ratio", lo <= 2**slope <= hi, float(2**slope), f"in [{lo:g}, {hi:g}]")
    if "csv" in s.formats:
        _write_csv(s.out / "convergence.csv", ["dt", "rms_difference"],
                   np.column_stack([s.dt / 2.0 ** np.arange(levels - 1), errs]))
    return {"errors": errs.tolist(), "ratios": ratios.tolist(), "order": float(slope)}


RUNNERS = {
    "simulate": exp_simulate, "mass_check": exp_mass_check, "energy_check": exp_energy_check,
    "gn_audit": exp_gn_audit, "ground_state": exp_ground_state, "pullback": exp_pullback,
    "absorbing": exp_absorbing, "tails": exp_tails, "strichartz_probe": exp_strichartz,
    "convergence": exp_convergence,
}
DYNAMIC = {"simulate", "mass_check", "energy_check", "pullback", "absorbing", "tails", "convergence"}


def run(config_path) -> int:
    try:
        cp = load_config(config_path)
        s = Setup(cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    name = cp.get("experiment", "name")
    report = validate_params(s.params)
    if name in DYNAMIC and not report.valid:
        if cp.get("model", "regime") == "strict":
            print(f"parameter regime rejected: {report}", file=sys.stderr)
            return EXIT_REGIME
        print(f"note: outside the well-posedness regime ({report})", file=sys.stderr)
    s.out.mkdir(parents=True, exist_ok=True)
    with open(s.out / "manifest.ini", "w") as fh:
        cp.write(fh)
    checks = Checks()
    try:
        result = RUNNERS[name](s, checks)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if "json" in s.formats:
        _write_json(s.out / "summary.json", {"experiment": name, "regime": str(report),
                                             "checks": checks.items, "result": result})
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sfnls", description="stochastic fractional NLS experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    sub.add_parser("list", help="list experiments")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        print(list_experiments())
        return EXIT_OK
    return run(args.config)


if __name__ == "__main__":
    sys.exit(main())
