"""Model parameters, forcing presets and exponent arithmetic.

Three forcing presets ship, each with closed-form witnesses for the
structural bounds the forcing must satisfy:

* ``zero``: ``f = 0``.
* ``linear_damping``: ``f(t, x, u) = -i beta u``.
* ``damped_forced``: ``f(t, x, u) = -i beta u + g(x)``. The bound
  ``Im(f conj(u)) <= -beta' |u|^2 + psi1`` is witnessed by the Young split
  ``psi1 = |g|^2 / (2 eps)`` with ``eps = beta``, i.e. ``beta' = beta / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import GridSpec, SpectralField

__all__ = [
    "ModelParams",
    "ForcingKind",
    "ForcingSpec",
    "AdmissiblePair",
    "ValidationReport",
    "validate_params",
    "theorem_pair",
    "check_pair",
    "apply_forcing",
    "forcing_values",
    "assumption_audit",
    "gaussian_bump",
]


@dataclass(frozen=True)
class ModelParams:
    """Equation coefficients.

    ``gamma`` may be zero and ``beta`` is carried by the forcing preset; the
    analytic regime is checked by :func:`validate_params`, not enforced here.
    """

    alpha: float
    sigma: float
    gamma: float
    beta: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.gamma < 0 or self.beta < 0:
            raise ValueError("gamma and beta must be non-negative")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @property
    def mass_critical(self) -> bool:
        return abs(self.sigma * self.dim - 2 * self.alpha) <= 1e-12

    def for_grid(self, grid: GridSpec) -> "ModelParams":
        if grid.dim != self.dim or abs(grid.alpha - self.alpha) > 1e-15:
            raise ValueError("grid and parameters disagree on dim/alpha")
        return self


@dataclass
class ValidationReport:
    valid: bool
    violations: list = field(default_factory=list)
    global_regime: bool = False

    def __str__(self):
        if self.valid:
            return "valid" + (" (global regime sigma*n = 2*alpha)" if self.global_regime else "")
        return "invalid: " + "; ".join(self.violations)


def validate_params(params: ModelParams) -> ValidationReport:
    """Check the well-posedness regime ``alpha in (n/(2n-1), 1)``, ``0 < sigma < 2a/(n-2a)``."""
    n, a, s = params.dim, params.alpha, params.sigma
    bad = []
    lo = n / (2 * n - 1)
    if not lo < a < 1:
        bad.append(f"alpha={a:g} not in the interval ({lo:.6g}, 1) = (n/(2n-1), 1) for n={n}")
    if n > 2 * a:
        hi = 2 * a / (n - 2 * a)
        if not 0 < s < hi:
            bad.append(f"sigma={s:g} not in (0, {hi:.6g}) = (0, 2*alpha/(n-2*alpha))")
    if params.gamma <= 0:
        bad.append("gamma must be positive")
    return ValidationReport(not bad, bad, params.mass_critical)


@dataclass(frozen=True)
class AdmissiblePair:
    """Space-time exponents with ``2 alpha/p + n/q = n/2``."""

    p: float
    q: float

    def residual(self, n: int, alpha: float) -> float:
        inv_p = 0.0 if np.isinf(self.p) else 1.0 / self.p
        return abs(2 * alpha * inv_p + n / self.q - n / 2)


def check_pair(pair: AdmissiblePair, n: int, alpha: float, tol: float = 1e-12) -> list[str]:
    """Return the list of admissibility violations (empty when admissible)."""
    out = []
    p, q = pair.p, pair.q
    if not 2 <= p <= np.inf:
        out.append(f"p={p} not in [2, inf]")
    if not (2 <= q < np.inf):
        out.append(f"q={q} not in [2, inf)")
    if n >= 2:
        endpoint = (4 * n - 2) / (2 * n - 3)
        if p == 2 and abs(q - endpoint) < 1e-12:
            out.append(f"(p, q) = (2, {endpoint:g}) is the excluded endpoint")
    if pair.residual(n, alpha) > tol:
        out.append(f"2*alpha/p + n/q - n/2 = {pair.residual(n, alpha):.3g}")
    return out


def theorem_pair(params: ModelParams) -> AdmissiblePair:
    """``p = 4a(s+2)/(s(n-2a))``, ``q = n(s+2)/(n+s a)``."""
    n, a, s = params.dim, params.alpha, params.sigma
    if n - 2 * a <= 0:
        raise ZeroDivisionError("theorem pair needs n > 2*alpha")
    pair = AdmissiblePair(4 * a * (s + 2) / (s * (n - 2 * a)), n * (s + 2) / (n + s * a))
    bad = check_pair(pair, n, a)
    if bad:
        raise ValueError("theorem pair not admissible: " + "; ".join(bad))
    return pair


class ForcingKind(str, Enum):
    ZERO = "zero"
    LINEAR_DAMPING = "linear_damping"
    DAMPED_FORCED = "damped_forced"


def gaussian_bump(grid: GridSpec, amplitude: float, width: float) -> SpectralField:
    return SpectralField(grid, amplitude * np.exp(-grid.radius() ** 2 / width**2))


@dataclass
class ForcingSpec:
    """A forcing preset with its bound witnesses."""

    kind: ForcingKind
    beta: float = 0.0
    g_profile: SpectralField | None = None

    def __post_init__(self):
        self.kind = ForcingKind(self.kind)
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.kind is ForcingKind.ZERO and self.beta != 0:
            raise ValueError("zero forcing carries beta = 0")
        if self.kind is ForcingKind.DAMPED_FORCED:
            if self.g_profile is None:
                raise ValueError("damped_forced needs g_profile")
            if not self.beta > 0:
                raise ValueError("damped_forced needs beta > 0 for its Young witness")
        elif self.g_profile is not None:
            raise ValueError(f"{self.kind.value} takes no g_profile")

    @classmethod
    def zero(cls):
        return cls(ForcingKind.ZERO)

    @classmethod
    def linear_damping(cls, beta: float):
        return cls(ForcingKind.LINEAR_DAMPING, beta)

    @classmethod
    def damped_forced(cls, beta: float, g: SpectralField):
        return cls(ForcingKind.DAMPED_FORCED, beta, g)

    @property
    def g(self):
        return None if self.g_profile is None else self.g_profile.values

    @property
    def beta_eff(self) -> float:
        """Decay rate ``beta'`` in ``Im(f conj u) <= -beta'|u|^2 + psi1``."""
        return self.beta / 2 if self.kind is ForcingKind.DAMPED_FORCED else self.beta

    def psi1(self, grid: GridSpec) -> np.ndarray:
        if self.kind is ForcingKind.DAMPED_FORCED:
            return np.abs(self.g) ** 2 / (2 * self.beta)
        return np.zeros(grid.shape)

    def psi1_l1(self, grid: GridSpec) -> float:
        return float(np.sum(self.psi1(grid)) * grid.cell)

    def witnesses(self, grid: GridSpec) -> dict:
        """Closed-form ``psi_1 .. psi_7`` on the grid (``psi_7`` is ``grad g`` per axis)."""
        z = np.zeros(grid.shape)
        w = {i: z for i in range(1, 8)}
        if self.kind is ForcingKind.ZERO:
            return w
        w[2] = np.full(grid.shape, self.beta)
        w[4] = np.full(grid.shape, self.beta)
        if self.kind is ForcingKind.DAMPED_FORCED:
            g = self.g
            w[1] = self.psi1(grid)
            w[3] = np.abs(g)
            w[5] = g
            coef = grid.fft(g)
            grads = []
            for ax in range(grid.dim):
                shape = [1] * grid.dim
                shape[ax] = grid.points
                grads.append(grid.ifft(1j * grid.freq.reshape(shape) * coef))
            w[7] = grads[0] if grid.dim == 1 else np.stack(grads)
        return w


def forcing_values(spec: ForcingSpec, u: np.ndarray, rotation=None) -> np.ndarray:
    """Array-level ``f(u)``; with ``rotation = e^{-iz}`` returns ``f(e^{iz} u) e^{-iz}``."""
    kind = spec.kind
    if kind is ForcingKind.ZERO:
        return np.zeros_like(u)
    out = -1j * spec.beta * u
    if kind is ForcingKind.DAMPED_FORCED:
        g = spec.g if rotation is None else spec.g * rotation
        out = out + g
    return out


def apply_forcing(spec: ForcingSpec, t: float, f: SpectralField) -> SpectralField:
    """Evaluate ``f(t, x, u(x))`` pointwise (all presets are autonomous)."""
    if spec.g_profile is not None and spec.g_profile.grid != f.grid:
        raise ValueError("forcing profile lives on a different grid")
    return SpectralField(f.grid, forcing_values(spec, f.values))


@dataclass
class AuditReport:
    max_violation: dict
    samples: int

    @property
    def ok(self) -> bool:
        return all(v <= 1e-12 for v in self.max_violation.values())


def assumption_audit(spec: ForcingSpec, field_samples, rng=None, n_pairs: int = 2000) -> AuditReport:
    """Evaluate the first four structural bounds on sample fields.

    Reported numbers are the maximum (over samples and points) of
    ``lhs - rhs``; a non-positive value means the bound holds.

    1. ``Im(f conj u) + beta'|u|^2 - psi1``
    2. ``|f| - psi2 |u| - psi3``
    3. ``|df/du| - psi4`` (complex-step derivative)
    4. ``|f(x, u) - f(y, u)| - |psi5(x) - psi5(y)|`` over random point pairs
    """
    samples = list(field_samples)
    if not samples:
        raise ValueError("need at least one sample field")
    grid = samples[0].grid
    rng = np.random.default_rng(0) if rng is None else rng
    w = spec.witnesses(grid)
    be = spec.beta_eff
    worst = {1: -np.inf, 2: -np.inf, 3: -np.inf, 4: -np.inf}
    flat = grid.size
    for s in samples:
        u = s.values
        fu = forcing_values(spec, u)
        worst[1] = max(worst[1], float(np.max(np.imag(fu * np.conj(u)) + be * np.abs(u) ** 2 - w[1])))
        worst[2] = max(worst[2], float(np.max(np.abs(fu) - w[2] * np.abs(u) - w[3])))
        d = 1e-7
        du = (forcing_values(spec, u + d) - fu) / d
        worst[3] = max(worst[3], float(np.max(np.abs(du) - w[4])) - 1e-6)
        i = rng.integers(0, flat, n_pairs)
        j = rng.integers(0, flat, n_pairs)
        uf = u.reshape(-1)
        # same u value placed at two different points
        base = 0.0 if spec.kind is ForcingKind.ZERO else -1j * spec.beta * uf[i]
        fx = base + _g_at(spec, i)
        fy = base + _g_at(spec, j)
        w5 = np.asarray(w[5]).reshape(-1)
        worst[4] = max(worst[4], float(np.max(np.abs(fx - fy) - np.abs(w5[i] - w5[j]))))
    return AuditReport(worst, len(samples))


def _g_at(spec: ForcingSpec, idx):
    if spec.kind is ForcingKind.DAMPED_FORCED:
        return spec.g.reshape(-1)[idx]
    return 0.0
