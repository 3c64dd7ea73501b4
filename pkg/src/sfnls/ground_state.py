"""Ground state of ``(-Delta)^alpha R + R - R^(2 sigma + 1) = 0`` by Petviashvili iteration.

With ``L = |xi|^(2 alpha) + 1`` and ``N(R) = R^(2 sigma + 1)`` the iterate is

    R <- S^nu L^{-1} N(R),   S = <L R, R> / <N(R), R>

and ``nu = (2 sigma + 1) / (2 sigma)``, the usual choice ``p/(p-1)`` for a
power nonlinearity of degree ``p``. The translation mode is removed by
symmetrizing every iterate (``x -> -x``; the square's dihedral group in 2D).
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridSpec, SpectralField, hdot_sq, l2_sq, lp_pow
from .model import ModelParams

__all__ = [
    "GroundState",
    "GroundStateError",
    "solve_ground_state",
    "mass_critical_threshold",
    "petviashvili_exponent",
    "cache_dir",
]


class GroundStateError(RuntimeError):
    pass


@dataclass
class GroundState:
    profile: SpectralField
    residual_l2: float
    c_opt: float
    iterations: int
    quotients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def mass(self) -> float:
        return float(l2_sq(self.profile.grid, self.profile.values))

    def gn_constant(self, params: ModelParams) -> float:
        """``P / (K^(a/2) M^(b/2))`` evaluated at ``R``: the sharp constant for any ``sigma``.

        Coincides with ``c_opt`` when ``sigma n = 2 alpha``.
        """
        g, R = self.profile.grid, self.profile.values
        a = params.dim * params.sigma / params.alpha
        b = 2 * params.sigma + 2 - a
        p = float(lp_pow(g, R, 2 * params.sigma + 2))
        return p / (float(hdot_sq(g, R)) ** (a / 2) * self.mass ** (b / 2))


def petviashvili_exponent(sigma: float) -> float:
    return (2 * sigma + 1) / (2 * sigma)


def _symmetrize(grid: GridSpec, r: np.ndarray) -> np.ndarray:
    # index j <-> N - j (mod N) is x <-> -x on the grid
    out = r
    for ax in range(grid.dim):
        out = 0.5 * (out + np.roll(np.flip(out, ax), 1, ax))
    if grid.dim == 2:
        out = 0.5 * (out + out.T)
    return out


def cache_dir() -> Path:
    return Path(os.environ.get("SFNLS_CACHE", Path.home() / ".cache" / "sfnls"))


def _cache_file(grid: GridSpec, params: ModelParams) -> Path:
    key = struct.pack("<idddq", grid.dim, grid.alpha, params.sigma, grid.extent, grid.points)
    return cache_dir() / f"ground_{hashlib.sha1(key).hexdigest()[:16]}.npz"


def _residual(grid: GridSpec, r: np.ndarray, sigma: float) -> float:
    lin = grid.ifft((grid.symbol + 1) * grid.fft(r)).real
    return float(np.sqrt(l2_sq(grid, lin - np.abs(r) ** (2 * sigma) * r)))


def solve_ground_state(grid: GridSpec, params: ModelParams, init: SpectralField | None = None,
                       max_iter: int = 3000, tol: float = 1e-12, *, cache: bool = False) -> GroundState:
    """Petviashvili iteration; stops once the residual drops below ``tol * ||R||``.

    ``init`` defaults to a Gaussian of unit mass. With ``cache=True`` results
    are stored under :func:`cache_dir`, keyed by ``(n, alpha, sigma, L, N)``.
    """
    params.for_grid(grid)
    n, a, s = grid.dim, grid.alpha, params.sigma
    if n > 2 * a and not s < 2 * a / (n - 2 * a):
        raise GroundStateError("sigma is energy-supercritical; no H^alpha ground state")
    path = _cache_file(grid, params)
    if cache and init is None and path.exists():
        with np.load(path) as z:
            r = z["profile"]
            return GroundState(SpectralField(grid, r.astype(complex)), float(z["residual"]),
                               float(z["c_opt"]), int(z["iterations"]), z["quotients"], z["residuals"])
    if init is None:
        r = np.exp(-grid.radius() ** 2 / 2)
        r = r / np.sqrt(l2_sq(grid, r))
    else:
        r = np.abs(init.values)
    nu = petviashvili_exponent(s)
    L = grid.symbol + 1
    p = 2 * s + 1
    quot, res = [], []
    it = 0
    for it in range(1, max_iter + 1):
        nl = np.abs(r) ** (p - 1) * r
        lr = grid.ifft(L * grid.fft(r)).real
        S = float(np.sum(lr * r) / np.sum(nl * r))
        if not 1e-6 <= S <= 1e6:
            raise GroundStateError(f"normalization quotient left [1e-6, 1e6]: {S:.3g}")
        r = S**nu * grid.ifft(grid.fft(nl) / L).real
        r = _symmetrize(grid, r)
        quot.append(S)
        # S - 1 is quadratic in the error, so stop on the residual instead
        res.append(_residual(grid, r, s) / np.sqrt(l2_sq(grid, r)))
        if res[-1] < tol:
            break
    else:
        raise GroundStateError(f"no convergence in {max_iter} iterations (relative residual {res[-1]:.3g})")
    resid = _residual(grid, r, s)
    mass = float(l2_sq(grid, r))
    gs = GroundState(SpectralField(grid, r.astype(complex)), resid, (s + 1) / mass**s, it,
                     np.array(quot), np.array(res))
    if cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, profile=r, residual=resid, c_opt=gs.c_opt, iterations=it,
                 quotients=gs.quotients, residuals=gs.residuals)
    return gs


def mass_critical_threshold(ground: GroundState, params: ModelParams) -> float:
    """``||R||^2``: below this mass, energy controls the ``Hdot^alpha`` norm."""
    if not params.mass_critical:
        raise ValueError("threshold only defined for sigma n = 2 alpha")
    return ground.mass
