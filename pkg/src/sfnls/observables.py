"""Functionals, identity residuals and tail diagnostics.

Energy is ``H = K/2 - P/(2 sigma + 2)`` with ``K = ||(-Delta)^(alpha/2) u||^2``
(spectral) and ``P = int |u|^(2 sigma + 2)``. Along a solution

    dM = 2 Im(f, u) dt - 2 gamma M dt
    dH = -gamma K dt + gamma P dt + Im int [(-Delta)^alpha u - |u|^(2 sigma) u]^* f dt
         - Im int [(-Delta)^alpha u]^* u dW

The last integrand is identically zero (its argument is real), so the phase
noise leaves ``H`` untouched. Records keep every integrand so the residuals
can be rebuilt after the fact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridSpec, SpectralField, gagliardo_rows, hdot_sq, l2_sq, lp_pow
from .model import AdmissiblePair, ForcingSpec, ModelParams, check_pair, forcing_values
from .stochastic import NoisePath

__all__ = [
    "CutoffSpec",
    "DiagnosticsRecord",
    "RecordBuilder",
    "mass",
    "energy",
    "kinetic",
    "potential",
    "gn_ratio",
    "mass_identity_residual",
    "energy_identity_residual",
    "tail_mass",
    "tail_hdot",
    "cutoff_constant_probe",
    "strichartz_ratio_probe",
    "top_band_fraction",
]


# --- cutoff -----------------------------------------------------------------

def smoothstep(s):
    """Quintic ramp from 0 at ``s <= 1/2`` to 1 at ``s >= 1``."""
    t = np.clip(2 * np.asarray(s, dtype=float) - 1, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


@dataclass(frozen=True)
class CutoffSpec:
    """``rho(|x|/k)``; ``constant`` is a test hook making ``rho`` identically one."""

    k: float
    c0: float = 3.75
    constant: bool = False

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("cutoff radius must be positive")

    def rho(self, r):
        if self.constant:
            return np.ones_like(np.asarray(r, dtype=float))
        return smoothstep(np.asarray(r) / self.k)

    def on(self, grid: GridSpec) -> np.ndarray:
        if self.k >= grid.extent / 2:
            raise ValueError(f"cutoff k={self.k} does not fit in a torus of extent {grid.extent}")
        return self.rho(grid.radius())


# --- functionals ------------------------------------------------------------

def mass(f: SpectralField) -> float:
    return float(l2_sq(f.grid, f.values))


def kinetic(f: SpectralField) -> float:
    return float(hdot_sq(f.grid, f.values))


def potential(f: SpectralField, params: ModelParams) -> float:
    return float(lp_pow(f.grid, f.values, 2 * params.sigma + 2))


def energy(f: SpectralField, params: ModelParams) -> float:
    s = params.sigma
    return 0.5 * kinetic(f) - potential(f, params) / (2 * s + 2)


def _gn_exponents(params: ModelParams):
    a = params.dim * params.sigma / params.alpha
    return a, 2 * params.sigma + 2 - a


def gn_rhs(m, k, params: ModelParams, c_opt: float):
    """``C ||u||_{Hdot}^{n sigma/alpha} ||u||_{L2}^{2 sigma + 2 - n sigma/alpha}`` from squared norms."""
    a, b = _gn_exponents(params)
    return c_opt * np.asarray(k) ** (a / 2) * np.asarray(m) ** (b / 2)


def gn_ratio(f: SpectralField, params: ModelParams, c_opt: float) -> float:
    """``||u||_{2 sigma+2}^{2 sigma+2}`` over the Gagliardo-Nirenberg right-hand side."""
    m, k = mass(f), kinetic(f)
    if m == 0 or k == 0:
        raise ValueError("ratio undefined for a zero (or constant) field")
    return potential(f, params) / float(gn_rhs(m, k, params, c_opt))


def top_band_fraction(f: SpectralField) -> float:
    """Share of ``|u_hat|^2`` in the top third of the resolved band."""
    g = f.grid
    p = np.abs(g.fft(f.values)) ** 2
    kmax = g.points / 2 * (2 * np.pi / g.extent)
    return float(np.sum(p[g.kmag > 2 * kmax / 3]) / max(np.sum(p), 1e-300))


# --- records ----------------------------------------------------------------

CSV_COLUMNS = (
    "time", "mass", "energy", "kinetic", "potential", "h_alpha_sq", "gn_ratio",
    "forcing_power", "forcing_work", "noise_work", "dW", "z",
)


@dataclass
class DiagnosticsRecord:
    """Observation time series of one trajectory.

    Besides the named functionals, ``integrands`` holds the raw samples used by
    the identity residuals: ``kinetic``, ``potential``, ``forcing_power``
    (``Im(f, u)``), ``forcing_work``, ``noise_work`` and ``dW`` (noise increment
    since the previous observation).
    """

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    h_alpha_sq: np.ndarray
    gn_ratio: np.ndarray
    tail_l2: dict = field(default_factory=dict)
    tail_hdot: dict = field(default_factory=dict)
    identity_residuals: dict = field(default_factory=dict)
    integrands: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        arrays = [self.mass, self.energy, self.h_alpha_sq, self.gn_ratio, *self.tail_l2.values(),
                  *self.tail_hdot.values(), *self.integrands.values()]
        if any(len(a) != n for a in arrays):
            raise ValueError("record arrays must share length")

    def __len__(self):
        return len(self.times)

    def columns(self) -> dict:
        cols = {"time": self.times, "mass": self.mass, "energy": self.energy,
                "h_alpha_sq": self.h_alpha_sq, "gn_ratio": self.gn_ratio}
        for name in ("kinetic", "potential", "forcing_power", "forcing_work", "noise_work", "dW", "z"):
            if name in self.integrands:
                cols[name] = self.integrands[name]
        for k, v in sorted(self.tail_l2.items()):
            cols[f"tail_l2_k{k:g}"] = v
        for k, v in sorted(self.tail_hdot.items()):
            cols[f"tail_hdot_k{k:g}"] = v
        for name, v in self.identity_residuals.items():
            if len(v) == len(self.times):
                cols[f"residual_{name}"] = v
        return cols

    def to_csv(self, path) -> None:
        """Write one row per observation; fixed columns first (see ``CSV_COLUMNS``)."""
        cols = self.columns()
        order = [c for c in CSV_COLUMNS if c in cols] + [c for c in cols if c not in CSV_COLUMNS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(order)
            for i in range(len(self.times)):
                w.writerow(["%.17g" % cols[c][i] for c in order])

    def summary(self) -> dict:
        out = {"observations": len(self.times), "meta": self.meta}
        if len(self.times):
            out["final"] = {"time": float(self.times[-1]), "mass": float(self.mass[-1]),
                            "energy": float(self.energy[-1]), "h_alpha_sq": float(self.h_alpha_sq[-1])}
        out["residual_max"] = {k: float(np.max(np.abs(v))) if len(v) else 0.0
                               for k, v in self.identity_residuals.items()}
        return out

    def to_json(self, path, extra: dict | None = None) -> None:
        data = self.summary()
        if extra:
            data.update(extra)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, default=float)


class RecordBuilder:
    """Accumulates observations made during :func:`sfnls.dynamics.evolve`."""

    def __init__(self, grid: GridSpec, params: ModelParams, forcing: ForcingSpec, path: NoisePath,
                 form: str = "u", c_opt: float | None = None, cutoffs: Sequence[CutoffSpec] = ()):
        self.grid, self.params, self.forcing, self.path, self.form = grid, params, forcing, path, form
        self.c_opt = c_opt
        self.cutoffs = [(c.k, c.on(grid)) for c in cutoffs]
        self.rows: list[tuple] = []
        self.tails: dict = {k: [] for k, _ in self.cutoffs}
        self.last_k = None
        self.w = path.w

    def add(self, k: int, u: np.ndarray) -> None:
        g, p = self.grid, self.params
        s = p.sigma
        coef = g.fft(u)
        lu = g.ifft(g.symbol * coef)
        kin = float(g.cell / g.size * np.sum(g.symbol * np.abs(coef) ** 2))
        pot = float(lp_pow(g, u, 2 * s + 2))
        m = float(l2_sq(g, u))
        rot = np.exp(-1j * self.path.z_samples[k]) if self.form == "v" else None
        fv = forcing_values(self.forcing, u, rot)
        fpow = float(np.imag(np.sum(fv * np.conj(u))) * g.cell)
        grad = np.conj(lu - np.abs(u) ** (2 * s) * u)
        fwork = float(np.imag(np.sum(grad * fv)) * g.cell)
        nwork = float(np.imag(np.sum(np.conj(lu) * u)) * g.cell)
        dw = 0.0 if self.last_k is None else float(self.w[k] - self.w[self.last_k])
        self.last_k = k
        gn = np.nan
        if self.c_opt is not None and m > 0 and kin > 0:
            gn = pot / float(gn_rhs(m, kin, p, self.c_opt))
        t = (self.path.start_index + k) * self.path.dt
        self.rows.append((t, m, 0.5 * kin - pot / (2 * s + 2), kin, pot, gn, fpow, fwork, nwork, dw,
                          float(self.path.z_samples[k])))
        au2 = np.abs(u) ** 2
        for kk, rho in self.cutoffs:
            self.tails[kk].append(float(np.sum(rho * au2) * g.cell))

    def build(self) -> DiagnosticsRecord:
        a = np.array(self.rows, dtype=float).reshape(-1, 11)
        integ = {"kinetic": a[:, 3], "potential": a[:, 4], "forcing_power": a[:, 6],
                 "forcing_work": a[:, 7], "noise_work": a[:, 8], "dW": a[:, 9], "z": a[:, 10]}
        meta = {"gamma": self.params.gamma, "sigma": self.params.sigma, "alpha": self.params.alpha,
                "dim": self.params.dim, "forcing": self.forcing.kind.value, "beta": self.forcing.beta,
                "form": self.form, "seed": self.path.seed, "dt": self.path.dt}
        rec = DiagnosticsRecord(a[:, 0], a[:, 1], a[:, 2], a[:, 1] + a[:, 3], a[:, 5],
                                {k: np.array(v) for k, v in self.tails.items()}, {}, {}, integ, meta)
        if len(rec):
            rec.identity_residuals["mass"] = mass_identity_residual(rec)
            rec.identity_residuals["energy"] = energy_identity_residual(rec)
        return rec


def _cumtrapz(t, y):
    out = np.zeros(len(t))
    out[1:] = np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))
    return out


def _cumleft(t, y):
    out = np.zeros(len(t))
    out[1:] = np.cumsum(np.diff(t) * y[:-1])
    return out


def mass_identity_residual(record: DiagnosticsRecord, forcing_history=None, gamma: float | None = None):
    """``M(t) - M(0) - 2 int Im(f, u) + 2 gamma int M`` (trapezoid rule).

    ``forcing_history`` overrides the stored ``Im(f, u)`` samples.
    """
    g = record.meta["gamma"] if gamma is None else gamma
    fp = record.integrands["forcing_power"] if forcing_history is None else np.asarray(forcing_history)
    t, m = record.times, record.mass
    return m - m[0] - 2 * _cumtrapz(t, fp) + 2 * g * _cumtrapz(t, m)


def energy_identity_residual(record: DiagnosticsRecord, gamma: float | None = None):
    """``H(t) - H(0)`` minus the right-hand side of the energy balance.

    The ``dt`` integrals use left-point sums (first order); the ``dW`` integral
    uses the midpoint of its integrand, matching the central noise phase.
    """
    g = record.meta["gamma"] if gamma is None else gamma
    t, it = record.times, record.integrands
    nw = it["noise_work"]
    noise = np.zeros(len(t))
    noise[1:] = np.cumsum(0.5 * (nw[1:] + nw[:-1]) * it["dW"][1:])
    rhs = -noise - g * _cumleft(t, it["kinetic"]) + g * _cumleft(t, it["potential"]) \
        + _cumleft(t, it["forcing_work"])
    return record.energy - record.energy[0] - rhs


# --- tails ------------------------------------------------------------------

def tail_mass(f: SpectralField, cutoff: CutoffSpec) -> float:
    """``int rho(|x|/k) |u|^2 dx``."""
    rho = cutoff.on(f.grid)
    return float(np.sum(rho * np.abs(f.values) ** 2) * f.grid.cell)


def tail_hdot(f: SpectralField, cutoff: CutoffSpec) -> float:
    """Gagliardo double integral with the cutoff weight on ``x``.

    ``int rho(|x|/k) int |u(x) - u(y)|^2 / |x - y|^(n + 2 alpha) dy dx``: the
    ``x`` variable carries the far-field restriction while ``y`` ranges over
    the whole space. Points ``x`` outside the box have ``rho = 1``.
    """
    rho = cutoff.on(f.grid)
    rows, outside = gagliardo_rows(f)
    return float(np.sum(rho * rows + outside) * f.grid.cell)


def cutoff_constant_probe(grid: GridSpec, cutoff: CutoffSpec, kind: str = "L1") -> float:
    """``k^(2 alpha)`` times a sup over grid ``y`` of a cutoff regularity quantity.

    ``L1``: ``sup_y int |rho(|x|/k) - rho(|y|/k)|^2 / |x-y|^(1+2 alpha) dx``.
    ``L2``: ``sup |(-Delta)^alpha rho(|.|/k)|`` (spectral).
    Both are scale invariant on the line, so the product should not depend on
    ``k``. Uses ``w = 1 - rho``, which has compact support inside the torus.
    """
    if grid.dim != 1:
        raise ValueError("cutoff probe runs on 1D grids only")
    w = 1.0 - cutoff.on(grid)
    scale = cutoff.k ** (2 * grid.alpha)
    if kind == "L1":
        rows, _ = gagliardo_rows(SpectralField(grid, w))
        return float(np.max(rows)) * scale
    if kind == "L2":
        lw = grid.ifft(grid.symbol * grid.fft(w)).real
        return float(np.max(np.abs(lw))) * scale
    raise ValueError(f"unknown probe kind {kind!r}")


def strichartz_ratio_probe(psi_family, pair: AdmissiblePair, grid: GridSpec, t_window,
                           n_times: int = 257) -> float:
    """Empirical ``||S(t) psi||_{L^p_t L^q_x} / ||psi||_{L2}``, maximized over the family.

    ``t_window`` is ``(t0, t1)`` or a length ``T`` (meaning ``(0, T)``). Time
    integration is the trapezoid rule on ``n_times`` nodes.
    """
    bad = check_pair(pair, grid.dim, grid.alpha, tol=1e-9)
    if bad:
        raise ValueError("; ".join(bad))
    t0, t1 = (0.0, float(t_window)) if np.isscalar(t_window) else map(float, t_window)
    ts = np.linspace(t0, t1, n_times)
    best = 0.0
    for psi in psi_family:
        vals = psi.values if isinstance(psi, SpectralField) else np.asarray(psi)
        coef = grid.fft(vals)
        qn = np.empty(n_times)
        for i, t in enumerate(ts):
            u = grid.ifft(np.exp(-1j * grid.symbol * t) * coef)
            qn[i] = float(lp_pow(grid, u, pair.q)) ** (1 / pair.q)
        if np.isinf(pair.p):
            num = qn.max()
        else:
            num = np.trapezoid(qn**pair.p, ts) ** (1 / pair.p)
        best = max(best, num / np.sqrt(float(l2_sq(grid, vals))))
    return best
