"""Cocycle, pullback experiments and absorbing-set diagnostics.

Paths are indexed in absolute time, so the shifted sample ``theta_s omega``
is the same array read from index ``s / dt`` on. ``cocycle_apply(t, tau)``
evolves over ``[tau, tau + t]`` along the path; the pullback image
``Phi(t, -t, theta_{-t} omega, D)`` is the evolution of ``D`` from ``-t`` to 0.

Sample clouds are evolved as stacked arrays of shape ``(B, *grid.shape)``;
with ``SFNLS_THREADS > 1`` the stack is split into chunks run on a thread
pool and merged back in sample order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import spearmanr

from .dynamics import DivergenceError, Integrator, IntegratorConfig
from .grid import GridSpec, SpectralField, hdot_sq, l2_sq
from .model import ForcingSpec, ModelParams
from .observables import CutoffSpec, tail_hdot
from .stochastic import NoisePath, extend_path_backward

__all__ = [
    "CocycleHandle",
    "TemperedSetSpec",
    "PullbackReport",
    "AbsorbingReport",
    "TailReport",
    "cocycle_apply",
    "pullback_experiment",
    "absorbing_radius",
    "absorbing_bounds",
    "tail_uniformity_experiment",
    "sample_set",
    "hausdorff_h_alpha",
    "worker_count",
]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SFNLS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class CocycleHandle:
    grid: GridSpec
    params: ModelParams
    forcing: ForcingSpec
    config: IntegratorConfig
    form: str = "u"

    def __post_init__(self):
        self._integ = Integrator(self.grid, self.params, self.forcing, self.config)

    @property
    def integrator(self) -> Integrator:
        return self._integ


@dataclass(frozen=True)
class TemperedSetSpec:
    """A ball of random smooth localized fields in ``H^alpha``.

    ``ball`` keeps the radius fixed; ``ball_scaled`` uses ``radius e^{growth_rate t}``
    at time ``-t``, which stays tempered for any ``eps > growth_rate``.
    Members are ``center + r * shape`` with ``||shape||_{H^alpha} = 1`` and
    ``r`` uniform in ``[fill * radius, radius]``.
    """

    kind: str = "ball"
    radius: float = 1.0
    growth_rate: float = 0.0
    center: SpectralField | None = None
    width: float = 3.0
    fill: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ball", "ball_scaled"):
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.radius < 0 or self.growth_rate < 0:
            raise ValueError("radius and growth_rate must be non-negative")

    def radius_at(self, t: float) -> float:
        """Radius of ``D(theta_{-t} omega)``."""
        if self.kind == "ball_scaled":
            return self.radius * float(np.exp(self.growth_rate * t))
        return self.radius

    def bound_at(self, t: float) -> float:
        """Largest ``H^alpha`` norm in ``D(theta_{-t} omega)``."""
        c = 0.0 if self.center is None else float(np.sqrt(_h_alpha_sq(self.center.grid, self.center.values)))
        return c + self.radius_at(t)

    def is_tempered(self, eps: float, t_probe=(10.0, 100.0, 1000.0)) -> bool:
        vals = [np.exp(-eps * t) * self.bound_at(t) for t in t_probe]
        return eps > self.growth_rate and all(b < a for a, b in zip(vals, vals[1:]))


def _h_alpha_sq(grid: GridSpec, values, exponent=None):
    return l2_sq(grid, values) + hdot_sq(grid, values, exponent)


def sample_set(grid: GridSpec, spec: TemperedSetSpec, t: float, n: int, stream: int = 0) -> np.ndarray:
    """``n`` members of ``D(theta_{-t} omega)``, deterministic in ``(spec.seed, stream)``."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(stream,)))
    shape = (n,) + grid.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    envelope = np.exp(-(grid.kmag * spec.width / 4) ** 2)
    raw = grid.ifft(coef * envelope)
    raw = raw * np.exp(-grid.radius() ** 2 / (2 * spec.width**2))
    norm = np.sqrt(_h_alpha_sq(grid, raw))
    r = spec.radius_at(t) * rng.uniform(spec.fill, 1.0, n)
    out = raw * (r / norm).reshape((n,) + (1,) * grid.dim)
    if spec.center is not None:
        out = out + spec.center.values
    return out


def _embed(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Real vectors whose Euclidean distances are ``H^alpha`` distances."""
    w = np.sqrt(grid.cell / grid.size * (1 + grid.symbol))
    c = grid.fft(values) * w
    c = c.reshape(c.shape[0], -1)
    return np.concatenate([c.real, c.imag], axis=1)


def hausdorff_h_alpha(grid: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite clouds in ``H^alpha``."""
    d = cdist(_embed(grid, a), _embed(grid, b))
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def diameter_h_alpha(grid: GridSpec, a: np.ndarray) -> float:
    if len(a) < 2:
        return 0.0
    return float(pdist(_embed(grid, a)).max())


def _ensure_covers(path: NoisePath, t_start: float) -> NoisePath:
    k = round(t_start / path.dt)
    if k < path.start_index:
        path = extend_path_backward(path, path.start_index - k)
    return path


def _run_batch(handle: CocycleHandle, u: np.ndarray, path: NoisePath, t_start: float, t_end: float,
               observe=None):
    """Evolve a stack of fields; chunks go to the thread pool when allowed."""
    integ = handle.integrator
    k0, k1 = path.index_of(t_start), path.index_of(t_end)
    workers = worker_count()
    if observe is not None or workers == 1 or len(u) < 2:
        return integ.run(u, path, k0, k1, handle.form, observe)
    chunks = np.array_split(np.arange(len(u)), min(workers, len(u)))
    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda idx: integ.run(u[idx], path, k0, k1, handle.form), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def cocycle_apply(handle: CocycleHandle, t: float, tau: float, path: NoisePath, initial) -> SpectralField:
    """``Phi(t, tau, .)``: evolve ``initial`` over ``[tau, tau + t]`` along ``path``."""
    if t < 0:
        raise ValueError("cocycle time must be non-negative")
    values = initial.values if isinstance(initial, SpectralField) else np.asarray(initial, dtype=complex)
    if t == 0:
        path.index_of(tau)
        return SpectralField(handle.grid, values.copy())
    k0 = path.index_of(tau)
    k1 = path.index_of(tau + t)
    u, bad = handle.integrator.run(values, path, k0, k1, handle.form)
    if np.any(bad):
        raise DivergenceError(f"trajectory diverged on [{tau}, {tau + t}]")
    return SpectralField(handle.grid, u)


@dataclass
class PullbackReport:
    t_values: np.ndarray
    image_diameters: np.ndarray
    absorbing_radius_estimates: np.ndarray
    distance_to_last: np.ndarray
    h_alpha_half_max: np.ndarray
    per_path_endpoints: dict = field(default_factory=dict)
    diverged: int = 0
    cross_basin_distance: float | None = None

    @property
    def spearman(self) -> float:
        if len(self.t_values) < 2:
            return float("nan")
        return float(spearmanr(self.t_values, self.image_diameters)[0])

    def to_dict(self) -> dict:
        return {
            "t_values": self.t_values.tolist(),
            "image_diameters": self.image_diameters.tolist(),
            "absorbing_radius_estimates": self.absorbing_radius_estimates.tolist(),
            "distance_to_last": self.distance_to_last.tolist(),
            "h_alpha_half_max": self.h_alpha_half_max.tolist(),
            "spearman": self.spearman,
            "diverged": self.diverged,
            "cross_basin_distance": self.cross_basin_distance,
        }


def pullback_experiment(handle: CocycleHandle, set_spec: TemperedSetSpec, t_schedule, n_samples: int,
                        path: NoisePath, *, second_set: TemperedSetSpec | None = None) -> PullbackReport:
    """Evolve samples of ``D(theta_{-t} omega)`` from ``-t`` to 0 for each ``t``.

    Per ``t`` the report holds the ``H^alpha`` diameter of the image cloud,
    the largest ``||u(0)||^2``, the largest ``H^(alpha + 1/2)`` norm and the
    Hausdorff distance to the cloud of the largest ``t``. With ``second_set``
    a second cloud is pulled back over the largest ``t`` and its distance to
    the first is stored as ``cross_basin_distance``.
    """
    ts = np.asarray(sorted(float(t) for t in t_schedule))
    if len(ts) == 0 or ts[0] <= 0 or np.any(np.diff(ts) <= 0):
        raise ValueError("t_schedule must be positive and strictly increasing")
    grid = handle.grid
    path = _ensure_covers(path, -ts[-1])
    ends, diam, rad, hh = {}, [], [], []
    diverged = 0
    for i, t in enumerate(ts):
        u0 = sample_set(grid, set_spec, t, n_samples, stream=i)
        u, bad = _run_batch(handle, u0, path, -t, 0.0)
        diverged += int(np.sum(bad))
        ends[float(t)] = u
        diam.append(diameter_h_alpha(grid, u))
        rad.append(float(np.max(l2_sq(grid, u))))
        hh.append(float(np.sqrt(np.max(_h_alpha_sq(grid, u, grid.alpha + 0.5)))))
    last = ends[float(ts[-1])]
    dist = np.array([hausdorff_h_alpha(grid, ends[float(t)], last) for t in ts])
    report = PullbackReport(ts, np.array(diam), np.array(rad), dist, np.array(hh), ends, diverged)
    if second_set is not None:
        u0 = sample_set(grid, second_set, ts[-1], n_samples, stream=len(ts))
        u, bad = _run_batch(handle, u0, path, -ts[-1], 0.0)
        report.diverged += int(np.sum(bad))
        report.per_path_endpoints["second"] = u
        report.cross_basin_distance = hausdorff_h_alpha(grid, last, u)
    return report


@dataclass
class AbsorbingReport:
    t: float
    sigma0: float
    measured: float
    integral_rhs: float
    ball_rhs: float

    @property
    def margin(self) -> float:
        return self.ball_rhs - self.measured


def absorbing_bounds(handle: CocycleHandle, set_spec: TemperedSetSpec, t: float, sigma0: float,
                     constant: float = 2.0) -> tuple[float, float]:
    """Right-hand sides of the absorbing inequality.

    ``integral`` is ``e^{5 gamma (-t - sigma0)/4} R_D^2 + 2 int_{-t}^{sigma0} e^{5 gamma (s - sigma0)/4} ||psi1||_1 ds``.
    ``ball`` is ``C + C int_{-inf}^{sigma0} ...`` with ``C = constant``; it is
    valid once the tempered term has dropped below 1.
    """
    g = handle.params.gamma
    if g <= 0:
        raise ValueError("absorbing bound needs gamma > 0")
    lam = 1.25 * g
    psi = handle.forcing.psi1_l1(handle.grid)
    span = t + sigma0
    integral = np.exp(-lam * span) * set_spec.bound_at(t) ** 2 + 2 * psi * (-np.expm1(-lam * span)) / lam
    ball = constant + constant * psi / lam
    return float(integral), float(ball)


def absorbing_radius(handle: CocycleHandle, set_spec: TemperedSetSpec, t: float, sigma0: float,
                     path: NoisePath, n_samples: int = 8) -> AbsorbingReport:
    """Largest ``||v(sigma0)||^2 + (3 gamma/4 + 2 beta') int e^{5 gamma (s - sigma0)/4} ||v(s)||^2 ds`` over samples.

    The time integral uses the trapezoid rule on every step.
    """
    if not -1 <= sigma0 <= 0:
        raise ValueError("sigma0 must lie in [-1, 0]")
    grid, g = handle.grid, handle.params.gamma
    path = _ensure_covers(path, -t)
    k0 = path.index_of(-t)
    u0 = sample_set(grid, set_spec, t, n_samples, stream=10_000)
    masses = []
    handle.integrator.run(u0, path, k0, path.index_of(sigma0), handle.form,
                          observe=lambda k, u: masses.append(l2_sq(grid, u)))
    m = np.array(masses)
    s = -t + path.dt * np.arange(len(m))
    w = np.exp(1.25 * g * (s - sigma0))[:, None]
    integral = np.trapezoid(w * m, s, axis=0)
    lhs = m[-1] + (0.75 * g + 2 * handle.forcing.beta_eff) * integral
    integral, ball = absorbing_bounds(handle, set_spec, t, sigma0)
    return AbsorbingReport(t, sigma0, float(np.max(lhs)), integral, ball)


@dataclass
class TailReport:
    k_values: np.ndarray
    tail_l2: np.ndarray
    tail_hdot: np.ndarray | None
    mass: float
    tail_l2_half_time: np.ndarray

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.tail_l2) <= 0))

    @property
    def plateau_ratio(self) -> float:
        return float(self.tail_l2[-1] / self.mass)

    @property
    def cauchy_change(self) -> np.ndarray:
        return np.abs(self.tail_l2 - self.tail_l2_half_time) / np.maximum(self.tail_l2, 1e-300)

    def to_dict(self) -> dict:
        return {
            "k_values": self.k_values.tolist(),
            "tail_l2": self.tail_l2.tolist(),
            "tail_hdot": None if self.tail_hdot is None else self.tail_hdot.tolist(),
            "mass": self.mass,
            "plateau_ratio": self.plateau_ratio,
            "monotone": self.monotone,
            "cauchy_change": self.cauchy_change.tolist(),
        }


def tail_uniformity_experiment(handle: CocycleHandle, set_spec: TemperedSetSpec, k_schedule, t: float,
                               path: NoisePath, n_samples: int = 4, *, with_hdot: bool = True) -> TailReport:
    """Tails of the pullback images from ``-t`` and ``-t/2`` versus ``k``.

    Reported tails are maxima over samples. ``with_hdot`` adds the Gagliardo
    tail (subject to the oracle cost guard).
    """
    grid = handle.grid
    ks = np.asarray(sorted(float(k) for k in k_schedule))
    cuts = [CutoffSpec(k) for k in ks]
    rhos = [c.on(grid) for c in cuts]
    path = _ensure_covers(path, -t)
    dt = path.dt
    t_half = round(t / 2 / dt) * dt
    out = {}
    for j, tt in enumerate((t, t_half)):
        u0 = sample_set(grid, set_spec, tt, n_samples, stream=20_000 + j)
        u, _ = _run_batch(handle, u0, path, -tt, 0.0)
        out[tt] = u
    u = out[t]
    au2 = np.abs(u) ** 2
    tails = np.array([np.max(np.sum(rho * au2, axis=grid.axes) * grid.cell) for rho in rhos])
    au2h = np.abs(out[t_half]) ** 2
    tails_h = np.array([np.max(np.sum(rho * au2h, axis=grid.axes) * grid.cell) for rho in rhos])
    mass = float(np.max(l2_sq(grid, u)))
    hd = None
    if with_hdot:
        hd = np.array([max(tail_hdot(SpectralField(grid, ui), c) for ui in u) for c in cuts])
    return TailReport(ks, tails, hd, mass, tails_h)
