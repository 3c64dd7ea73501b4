"""Scalar Wiener paths and the stationary Ornstein-Uhlenbeck process.

The OU process ``dz = -z dt + dW`` is advanced with its exact transition,
jointly with the Wiener increment that drives it, so ``(W, z)`` has the exact
law at grid points. Random numbers come from a counter-style stream keyed by
``(seed, block index)``: every grid step ``k`` (an absolute integer index,
time ``k * dt``) owns a fixed pair of standard normals. Windows can therefore
grow backward in time without touching increments already drawn, which is
what pullback experiments need.

The anchor ``z`` at absolute index 0 is a stationary ``N(0, 1/2)`` draw. Steps
with ``k >= 0`` use the forward transition; steps with ``k < 0`` sample
``(z_k, dW_k)`` from the stationary joint law conditioned on ``z_{k+1}``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "NoisePath",
    "sample_path",
    "quiet_path",
    "shift_path",
    "extend_path_backward",
    "coarsen_path",
    "save_path",
    "load_path",
    "ou_step_moments",
]

BLOCK = 4096
_MAGIC = b"SFNLSPTH"
_HEADER = struct.Struct("<8sIqqqddq")


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One sample ``omega`` restricted to a time window.

    ``w_increments[k]`` is ``W(t_{k+1}) - W(t_k)`` and ``z_samples[k]`` is
    ``z(theta_{t_k} omega)`` with ``t_k = t0 + k dt``.
    """

    seed: int
    t0: float
    dt: float
    steps: int
    w_increments: np.ndarray
    z_samples: np.ndarray
    start_index: int = 0
    substeps: int = 1
    quiet: bool = False

    def __post_init__(self):
        if len(self.w_increments) != self.steps or len(self.z_samples) != self.steps + 1:
            raise ValueError("increment/OU array lengths do not match steps")

    @property
    def t_end(self) -> float:
        return (self.start_index + self.steps) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (self.start_index + np.arange(self.steps + 1)) * self.dt

    @property
    def w(self) -> np.ndarray:
        """``W(t_k) - W(t0)``."""
        return np.concatenate(([0.0], np.cumsum(self.w_increments)))

    def index_of(self, t: float) -> int:
        """Local index of grid time ``t``; raises if ``t`` is off-grid or outside."""
        k = round(t / self.dt) - self.start_index
        if abs((k + self.start_index) * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not aligned with dt={self.dt}")
        if not 0 <= k <= self.steps:
            raise ValueError(f"time {t} outside path window [{self.t0}, {self.t_end}]")
        return k

    def window(self, t_start: float, t_end: float) -> "NoisePath":
        i, j = self.index_of(t_start), self.index_of(t_end)
        if j < i:
            raise ValueError("window end precedes start")
        return replace(
            self,
            t0=(self.start_index + i) * self.dt,
            steps=j - i,
            w_increments=self.w_increments[i:j],
            z_samples=self.z_samples[i : j + 1],
            start_index=self.start_index + i,
        )

    def same_as(self, other: "NoisePath") -> bool:
        return (
            self.start_index == other.start_index
            and self.dt == other.dt
            and np.array_equal(self.w_increments, other.w_increments)
            and np.array_equal(self.z_samples, other.z_samples)
        )


def ou_step_moments(dt: float) -> dict:
    """Second moments of ``(dW, eta)`` over one step for the stationary OU.

    ``eta = z_{k+1} - e^{-dt} z_k``; ``cov = 1 - e^{-dt}`` couples it to ``dW``.
    ``resid`` is ``Var(eta) - cov^2/dt`` and ``back_resid`` is the conditional
    variance of ``dW`` given both OU endpoints; both are ``O(dt^3)`` and use
    series below ``dt = 1e-2`` to avoid cancellation.
    """
    a = np.exp(-dt)
    var_eta = -np.expm1(-2 * dt) / 2
    cov = -np.expm1(-dt)
    if dt < 1e-2:
        h = dt
        resid = h**3 / 12 - h**4 / 12 + 17 * h**5 / 360 - 7 * h**6 / 360 + 43 * h**7 / 6720 - 107 * h**8 / 60480
        back = h**3 / 12 - h**5 / 120 + 17 * h**7 / 20160 - 31 * h**9 / 362880
    else:
        resid = var_eta - cov**2 / dt
        back = dt - 2 * np.tanh(dt / 2)
    return {"a": a, "var_eta": var_eta, "cov": cov, "resid": resid, "back_resid": back}


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed


def _block_normals(seed: int, block: int) -> np.ndarray:
    enc = 2 * block if block >= 0 else -2 * block - 1
    ss = np.random.SeedSequence(seed, spawn_key=(1, enc))
    return np.random.Generator(np.random.Philox(ss)).standard_normal((BLOCK, 2))


def _anchor(seed: int) -> float:
    ss = np.random.SeedSequence(seed, spawn_key=(0,))
    return float(np.random.Generator(np.random.Philox(ss)).standard_normal()) * np.sqrt(0.5)


def _normals(seed: int, k0: int, k1: int) -> np.ndarray:
    """Standard normal pairs for absolute step indices ``k0 <= k < k1``."""
    if k1 <= k0:
        return np.empty((0, 2))
    b0, b1 = k0 // BLOCK, (k1 - 1) // BLOCK
    blocks = [_block_normals(seed, b) for b in range(b0, b1 + 1)]
    allv = np.concatenate(blocks)
    off = k0 - b0 * BLOCK
    return allv[off : off + (k1 - k0)]


def _generate(seed: int, dt: float, k0: int, steps: int):
    """Increments and OU values on absolute indices ``[k0, k0 + steps]``."""
    m = ou_step_moments(dt)
    a, cov = m["a"], m["cov"]
    k1 = k0 + steps
    lo, hi = min(k0, 0), max(k1, 0)
    xi = _normals(seed, lo, hi)
    dw = np.empty(hi - lo)
    z = np.empty(hi - lo + 1)
    z0 = _anchor(seed)
    i0 = -lo  # position of absolute index 0
    z[i0] = z0
    if hi > 0:
        f = xi[i0:]
        dw_f = np.sqrt(dt) * f[:, 0]
        eta = cov / dt * dw_f + np.sqrt(m["resid"]) * f[:, 1]
        zf, _ = lfilter([1.0], [1.0, -a], eta, zi=[a * z0])
        dw[i0:] = dw_f
        z[i0 + 1 :] = zf
    if lo < 0:
        # backward: condition (z_k, dW_k) on z_{k+1}, walking k = -1, -2, ...
        b = xi[:i0][::-1]
        l11 = np.sqrt(m["var_eta"])
        l21 = -a * cov / l11
        l22 = np.sqrt(m["back_resid"])
        noise_z = l11 * b[:, 0]
        zb, _ = lfilter([1.0], [1.0, -a], noise_z, zi=[a * z0])
        z_next = np.concatenate(([z0], zb[:-1]))
        dw_b = 2 * cov * z_next + l21 * b[:, 0] + l22 * b[:, 1]
        dw[:i0] = dw_b[::-1]
        z[:i0] = zb[::-1]
    s = k0 - lo
    return dw[s : s + steps].copy(), z[s : s + steps + 1].copy()


def _aligned_index(t0: float, dt: float) -> int:
    k = round(t0 / dt)
    if abs(k * dt - t0) > 1e-9 * max(1.0, abs(t0)):
        raise ValueError(f"t0={t0} is not a multiple of dt={dt}")
    return int(k)


def sample_path(seed: int, t0: float, dt: float, steps: int, *, substeps: int = 1) -> NoisePath:
    """Draw the path of sample ``seed`` on ``[t0, t0 + steps dt]``.

    ``t0`` must be a multiple of ``dt`` (grid times are absolute). With
    ``substeps > 1`` the path is generated on the finer step ``dt/substeps``
    and aggregated, so it is the exact coarsening of that finer path.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    seed = _check_seed(seed)
    k0 = _aligned_index(t0, dt)
    if substeps == 1:
        dw, z = _generate(seed, dt, k0, steps)
    else:
        fine_dw, fine_z = _generate(seed, dt / substeps, k0 * substeps, steps * substeps)
        dw = fine_dw.reshape(steps, substeps).sum(axis=1)
        z = fine_z[::substeps]
    return NoisePath(seed, k0 * dt, dt, steps, dw, z, k0, substeps)


def quiet_path(t0: float, dt: float, steps: int) -> NoisePath:
    """Noise-free path (``W`` and ``z`` identically zero), for deterministic runs."""
    k0 = _aligned_index(t0, dt)
    return NoisePath(0, k0 * dt, dt, steps, np.zeros(steps), np.zeros(steps + 1), k0, 1, True)


def shift_path(path: NoisePath, m_steps: int) -> NoisePath:
    """The shifted sample ``theta_{m dt} omega`` restricted to the remaining window.

    Increments are unchanged by the shift; only the time origin moves.
    """
    if not 0 <= m_steps <= path.steps:
        raise ValueError(f"shift {m_steps} outside [0, {path.steps}]")
    return replace(
        path,
        t0=(path.start_index + m_steps) * path.dt,
        steps=path.steps - m_steps,
        w_increments=path.w_increments[m_steps:],
        z_samples=path.z_samples[m_steps:],
        start_index=path.start_index + m_steps,
    )


def extend_path_backward(path: NoisePath, extra_steps: int) -> NoisePath:
    """Prepend ``extra_steps`` steps; the original window is reproduced bit-for-bit."""
    if extra_steps < 0:
        raise ValueError("extra_steps must be >= 0")
    if extra_steps == 0:
        return path
    k0 = path.start_index - extra_steps
    steps = path.steps + extra_steps
    if path.quiet:
        return quiet_path(k0 * path.dt, path.dt, steps)
    out = sample_path(path.seed, k0 * path.dt, path.dt, steps, substeps=path.substeps)
    tail = shift_path(out, extra_steps)
    if not (np.array_equal(tail.w_increments, path.w_increments) and np.array_equal(tail.z_samples, path.z_samples)):
        raise RuntimeError("path does not come from its seed stream; cannot extend")
    return out


def coarsen_path(path: NoisePath, factor: int) -> NoisePath:
    """Aggregate ``factor`` consecutive steps (same ``omega``, step ``factor * dt``)."""
    if factor < 1 or path.steps % factor or path.start_index % factor:
        raise ValueError("factor must divide the window length and its start index")
    steps = path.steps // factor
    return NoisePath(
        path.seed,
        path.t0,
        path.dt * factor,
        steps,
        path.w_increments.reshape(steps, factor).sum(axis=1),
        path.z_samples[::factor].copy(),
        path.start_index // factor,
        path.substeps * factor,
        path.quiet,
    )


def save_path(path: NoisePath, file) -> None:
    """Write the binary sidecar.

    Layout (little-endian): 8-byte magic ``SFNLSPTH``, ``u32`` version (1),
    ``i64`` seed (two's-complement view of the ``u64`` seed), ``i64`` start
    index, ``i64`` substeps, ``f64`` t0, ``f64`` dt, ``i64`` steps, then
    ``steps`` float64 increments, ``steps + 1`` float64 OU samples and one byte
    for the quiet flag.
    """
    seed = path.seed - 2**64 if path.seed >= 2**63 else path.seed
    head = _HEADER.pack(_MAGIC, 1, seed, path.start_index, path.substeps, path.t0, path.dt, path.steps)
    payload = np.concatenate([path.w_increments, path.z_samples]).astype("<f8").tobytes()
    Path(file).write_bytes(head + payload + bytes([int(path.quiet)]))


def load_path(file) -> NoisePath:
    raw = Path(file).read_bytes()
    magic, version, seed, k0, sub, t0, dt, steps = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError("not a noise-path sidecar")
    data = np.frombuffer(raw, dtype="<f8", count=2 * steps + 1, offset=_HEADER.size).astype(float)
    quiet = bool(raw[_HEADER.size + 8 * (2 * steps + 1)])
    return NoisePath(seed % 2**64, t0, dt, steps, data[:steps].copy(), data[steps:].copy(), k0, sub, quiet)
