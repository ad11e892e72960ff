"""Pseudospectral 2-D vorticity solver on the periodic square (0, 2pi)^2.

``w_t + u . grad(w) = nu * lap(w)`` with velocity recovered from the stream
function (``lap(psi) = -w``, ``u = psi_y``, ``v = -psi_x``).  Each step is a
Strang splitting: Crank-Nicolson half step of viscosity, RK4 step of the
dealiased convective term, Crank-Nicolson half step.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .allen_cahn import BlowUpError
from .series import FieldSeries, Grid2D


class Spectral:
    """Wavenumbers and transforms for an n x n periodic grid (rfft along y)."""

    def __init__(self, n: int):
        if n < 4 or n & (n - 1):
            raise ValueError("resolution must be a power of two >= 4")
        self.n = n
        kx = np.fft.fftfreq(n, d=1.0 / n)
        ky = np.fft.rfftfreq(n, d=1.0 / n)
        self.kx, self.ky = np.meshgrid(kx, ky, indexing="ij")
        self.k2 = self.kx ** 2 + self.ky ** 2
        self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        cut = n / 3.0
        self.dealias = (np.abs(self.kx) < cut) & (np.abs(self.ky) < cut)

    def fft(self, f):
        return np.fft.rfft2(f)

    def ifft(self, f_hat):
        return np.fft.irfft2(f_hat, s=(self.n, self.n))

    def velocity_hat(self, w_hat):
        psi_hat = w_hat * self.inv_k2
        return 1j * self.ky * psi_hat, -1j * self.kx * psi_hat

    def velocity(self, w_hat):
        u_hat, v_hat = self.velocity_hat(w_hat)
        return self.ifft(u_hat), self.ifft(v_hat)

    def dx(self, f):
        return self.ifft(1j * self.kx * self.fft(f))

    def dy(self, f):
        return self.ifft(1j * self.ky * self.fft(f))

    def divergence(self, u, v):
        return self.ifft(1j * self.kx * self.fft(u) + 1j * self.ky * self.fft(v))

    def curl(self, u, v):
        return self.ifft(1j * self.kx * self.fft(v) - 1j * self.ky * self.fft(u))


def grid_coordinates(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


@dataclass
class InitialField:
    omega: Grid2D
    u: Grid2D
    v: Grid2D


def generate_initial_vorticity(n: int, seed: int, cutoff: int = 2, u_max: float = 3.0) -> InitialField:
    """Random low-pass divergence-free field from a Gaussian stream function.

    Every Fourier mode with ``max(|kx|, |ky|) <= cutoff`` (except the mean)
    gets independent standard normal cosine and sine amplitudes; the velocity
    is then rescaled so that the largest grid speed equals ``u_max``.
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    sp = Spectral(n)
    rng = np.random.default_rng(seed)
    x = grid_coordinates(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    psi = np.zeros((n, n))
    for kx in range(-cutoff, cutoff + 1):
        for ky in range(0, cutoff + 1):
            if ky == 0 and kx <= 0:
                continue
            a, b = rng.standard_normal(2)
            phase = kx * X + ky * Y
            psi += a * np.cos(phase) + b * np.sin(phase)
    psi_hat = sp.fft(psi)
    u = sp.ifft(1j * sp.ky * psi_hat)
    v = sp.ifft(-1j * sp.kx * psi_hat)
    scale = u_max / np.max(np.hypot(u, v))
    u, v = u * scale, v * scale
    omega = sp.ifft(sp.k2 * psi_hat * scale)
    return InitialField(Grid2D(omega), Grid2D(u), Grid2D(v))


def taylor_green(n: int, t: float, nu: float) -> InitialField:
    """Decaying Taylor-Green vortex, an exact solution of the vorticity equation."""
    x = grid_coordinates(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    decay = np.exp(-2 * nu * t)
    return InitialField(Grid2D(-2 * np.cos(X) * np.cos(Y) * decay),
                        Grid2D(np.cos(X) * np.sin(Y) * decay),
                        Grid2D(-np.sin(X) * np.cos(Y) * decay))


def solve_ns_vorticity(omega0, nu: float, dt: float, t_end: float, frames: int = 21,
                       convection: bool = True, blowup: float = 1e6) -> dict[str, FieldSeries]:
    """Advance ``omega0`` to ``t_end``; returns ``{"omega", "u", "v"}`` series.

    ``dt`` is shrunk slightly if needed so frames fall on whole steps.
    """
    w = np.asarray(omega0.values if isinstance(omega0, Grid2D) else omega0, dtype=np.float64)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ValueError("vorticity grid must be square")
    if dt <= 0 or t_end <= 0 or frames < 2:
        raise ValueError("invalid solver settings")
    sp = Spectral(n)
    frame_dt = t_end / (frames - 1)
    per_frame = max(1, int(np.ceil(frame_dt / dt - 1e-9)))
    h = frame_dt / per_frame

    a = nu * sp.k2 * h / 4  # half step h/2 under the trapezoidal rule
    cn_half = (1 - a) / (1 + a)

    def rhs(w_hat):
        if not convection:
            return np.zeros_like(w_hat)
        u_hat, v_hat = sp.velocity_hat(w_hat)
        u, v = sp.ifft(u_hat), sp.ifft(v_hat)
        wx, wy = sp.ifft(1j * sp.kx * w_hat), sp.ifft(1j * sp.ky * w_hat)
        out = -sp.fft(u * wx + v * wy) * sp.dealias
        out[0, 0] = 0.0
        return out

    w_hat = sp.fft(w)
    u, v = sp.velocity(w_hat)
    cfl = np.max(np.abs(u) + np.abs(v)) * h * n / (2 * np.pi)
    if convection and cfl > 1.0:
        warnings.warn(f"CFL number {cfl:.2f} exceeds 1", RuntimeWarning, stacklevel=2)
    ws, us, vs = [w.copy()], [u], [v]
    for f in range(1, frames):
        with np.errstate(over="ignore", invalid="ignore"):
            w_hat = _advance(w_hat, per_frame, h, cn_half, rhs)
        w = sp.ifft(w_hat)
        peak = np.max(np.abs(w))
        if not np.isfinite(peak) or peak > blowup:
            raise BlowUpError(f"vorticity blew up (max|w|={peak:.3g}) at t={f * frame_dt:.4g}")
        u, v = sp.velocity(w_hat)
        ws.append(w)
        us.append(u)
        vs.append(v)
    times = np.linspace(0.0, t_end, frames)
    x = grid_coordinates(n)
    meta = {"solver": "vorticity-cn-rk4", "n": n, "dt": h, "nu": nu, "convection": convection}
    return {name: FieldSeries(name, times, np.array(arr), [x, x], meta)
            for name, arr in (("omega", ws), ("u", us), ("v", vs))}


def _advance(w_hat, steps, h, cn_half, rhs):
    """Strang steps: CN half step, RK4 convective step, CN half step."""
    for _ in range(steps):
        w_hat = cn_half * w_hat
        k1 = rhs(w_hat)
        k2 = rhs(w_hat + h / 2 * k1)
        k3 = rhs(w_hat + h / 2 * k2)
        k4 = rhs(w_hat + h * k3)
        w_hat = w_hat + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        w_hat = cn_half * w_hat
    return w_hat


def spectral_interpolate(values: np.ndarray, points: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Evaluate the trigonometric interpolant of a periodic grid at arbitrary (x, y) points.

    Modes below ``tol`` times the largest amplitude are skipped, so band-limited
    data costs only as many terms as it has active modes.
    """
    n = values.shape[0]
    c = np.fft.fft2(values) / values.size
    k = np.fft.fftfreq(n, d=1.0 / n)
    keep = np.argwhere(np.abs(c) > tol * np.max(np.abs(c)))
    pts = np.atleast_2d(points)
    out = np.zeros(pts.shape[0], dtype=complex)
    for i, j in keep:
        kx, ky = k[i], k[j]
        if abs(kx) == n / 2 or abs(ky) == n / 2:
            # Nyquist modes: use the real cosine part so the interpolant stays real
            out += c[i, j].real * np.cos(kx * pts[:, 0] + ky * pts[:, 1])
            continue
        out += c[i, j] * np.exp(1j * (kx * pts[:, 0] + ky * pts[:, 1]))
    return out.real
