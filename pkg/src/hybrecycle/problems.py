"""Deterministic test problems: Gaussian blur, parallel-beam tomography, phantoms, noise.

Noise is drawn from ``numpy.random.Generator(numpy.random.Philox(seed))``,
a counter-based 64-bit generator with a published algorithm, so that a
given seed reproduces the same data everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linops import LinearOp

__all__ = [
    "NoisyProblem",
    "GaussianBlur1D",
    "GaussianBlur2D",
    "ParallelTomo",
    "gaussian_kernel",
    "gaussian_blur_1d",
    "gaussian_blur_2d",
    "parallel_tomo",
    "shepp_logan",
    "SHEPP_LOGAN_ELLIPSES",
    "test_signal_1d",
    "add_noise",
    "make_noisy_problem",
    "noise_generator",
]


@dataclass(frozen=True)
class NoisyProblem:
    op: LinearOp
    x_true: np.ndarray
    b_exact: np.ndarray
    b: np.ndarray
    noise_level: float
    noise_norm: float
    seed: int


def gaussian_kernel(psf_sigma: float, n: int | None = None) -> np.ndarray:
    """Unit-sum Gaussian taps on ``|d| <= ceil(4 psf_sigma)``.

    With a signal length ``n`` the radius is capped at ``n - 1``: taps that
    can never touch the signal do not enter the normalization.
    """
    if not psf_sigma > 0:
        raise ValueError("psf_sigma must be positive")
    radius = int(math.ceil(4.0 * psf_sigma))
    if n is not None:
        radius = min(radius, n - 1)
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(d**2) / (2.0 * psf_sigma**2))
    return taps / taps.sum()


def _conv_zero_bc(x: np.ndarray, kernel: np.ndarray, axis: int = 0) -> np.ndarray:
    # out[i] = sum_d kernel[d + r] * x[i + d], zero outside the signal
    r = (len(kernel) - 1) // 2
    n = x.shape[axis]
    x = np.moveaxis(x, axis, -1)
    padded = np.zeros(x.shape[:-1] + (n + 2 * r,))
    padded[..., r : r + n] = x
    out = np.zeros_like(x)
    for t, w in enumerate(kernel):
        out += w * padded[..., t : t + n]
    return np.moveaxis(out, -1, axis)


class GaussianBlur1D(LinearOp):
    """Symmetric Toeplitz Gaussian blur with zero boundary conditions."""

    def __init__(self, n: int, psf_sigma: float):
        if n < 1:
            raise ValueError("n must be >= 1")
        super().__init__(n, n)
        self.psf_sigma = float(psf_sigma)
        self.kernel = gaussian_kernel(psf_sigma, n)
        self.kernel.setflags(write=False)

    def _matvec(self, x):
        return _conv_zero_bc(x, self.kernel)

    def _rmatvec(self, y):
        return _conv_zero_bc(y, self.kernel[::-1])


class GaussianBlur2D(LinearOp):
    """Separable Gaussian blur of an ``nx`` by ``ny`` image stored row-major."""

    def __init__(self, nx: int, ny: int, psf_sigma: float):
        if nx < 1 or ny < 1:
            raise ValueError("image dimensions must be >= 1")
        super().__init__(nx * ny, nx * ny)
        self.image_shape = (int(nx), int(ny))
        self.psf_sigma = float(psf_sigma)
        self.kernels = (gaussian_kernel(psf_sigma, nx), gaussian_kernel(psf_sigma, ny))
        for k in self.kernels:
            k.setflags(write=False)

    def _blur(self, x, flip: bool):
        img = x.reshape(self.image_shape)
        for axis, k in enumerate(self.kernels):
            img = _conv_zero_bc(img, k[::-1] if flip else k, axis=axis)
        return img.reshape(-1)

    def _matvec(self, x):
        return self._blur(x, False)

    def _rmatvec(self, y):
        return self._blur(y, True)


def gaussian_blur_1d(n: int, psf_sigma: float) -> GaussianBlur1D:
    return GaussianBlur1D(n, psf_sigma)


def gaussian_blur_2d(nx: int, ny: int, psf_sigma: float) -> GaussianBlur2D:
    return GaussianBlur2D(nx, ny, psf_sigma)


_EXACT_DIRECTIONS = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}


def _direction(deg: float) -> tuple[float, float]:
    """``(cos, sin)`` of an angle in degrees, exact at multiples of 90."""
    exact = _EXACT_DIRECTIONS.get(float(deg) % 360.0)
    if exact is not None:
        return exact
    theta = math.radians(deg)
    return math.cos(theta), math.sin(theta)


def _trace_ray(offset: float, ct: float, st: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel indices and intersection lengths of one ray through the unit-pixel grid.

    The grid covers ``[-n/2, n/2]^2``; pixel (r, c) spans x in
    ``[-n/2 + c, -n/2 + c + 1]`` and y in ``[n/2 - r - 1, n/2 - r]``.
    The ray is ``p(s) = offset * (ct, st) + s * (-st, ct)``.
    """
    half = n / 2.0
    px, py = offset * ct, offset * st
    dx, dy = -st, ct
    eps = 1e-15
    # parameter interval inside the box
    lo, hi = -np.inf, np.inf
    for p, d in ((px, dx), (py, dy)):
        if abs(d) < eps:
            if not (-half <= p <= half):
                return np.empty(0, dtype=np.int64), np.empty(0)
            continue
        s1, s2 = (-half - p) / d, (half - p) / d
        lo, hi = max(lo, min(s1, s2)), min(hi, max(s1, s2))
    if not hi > lo:
        return np.empty(0, dtype=np.int64), np.empty(0)
    edges = np.arange(n + 1, dtype=np.float64) - half
    params = [np.array([lo, hi])]
    if abs(dx) >= eps:
        params.append((edges - px) / dx)
    if abs(dy) >= eps:
        params.append((edges - py) / dy)
    s = np.concatenate(params)
    s = np.unique(s[(s >= lo) & (s <= hi)])
    lengths = np.diff(s)
    mid = 0.5 * (s[:-1] + s[1:])
    col = np.floor(px + mid * dx + half).astype(np.int64)
    row = np.floor(half - (py + mid * dy)).astype(np.int64)
    keep = (lengths > 1e-12) & (col >= 0) & (col < n) & (row >= 0) & (row < n)
    return row[keep] * n + col[keep], lengths[keep]


class ParallelTomo(LinearOp):
    """Parallel-beam projector with exact ray/pixel intersection lengths.

    Rays are spaced one pixel width apart and centred on the grid; the
    default ``n_rays = ceil(sqrt(2) n)`` covers the circumscribed circle.
    Row ``a * n_rays + i`` is ray ``i`` at angle ``angles[a]``.
    """

    def __init__(self, n: int, angles: Sequence[float], n_rays: int | None = None):
        angles = [float(a) for a in angles]
        if n < 2:
            raise ValueError("grid size must be >= 2")
        if not angles:
            raise ValueError("angle list is empty")
        if n_rays is None:
            n_rays = int(math.ceil(math.sqrt(2.0) * n))
        if n_rays < 1:
            raise ValueError("n_rays must be >= 1")
        super().__init__(len(angles) * n_rays, n * n)
        self.n = int(n)
        self.angles = tuple(angles)
        self.n_rays = int(n_rays)
        offsets = np.arange(n_rays, dtype=np.float64) - (n_rays - 1) / 2.0
        rows, cols, vals = [], [], []
        for a, deg in enumerate(angles):
            ct, st = _direction(deg)
            for i, t in enumerate(offsets):
                pix, length = _trace_ray(t, ct, st, self.n)
                rows.append(np.full(len(pix), a * n_rays + i, dtype=np.int64))
                cols.append(pix)
                vals.append(length)
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._vals = np.concatenate(vals)
        for arr in (self._rows, self._cols, self._vals):
            arr.setflags(write=False)

    def _matvec(self, x):
        return np.bincount(self._rows, weights=self._vals * x[self._cols], minlength=self.nrows)

    def _rmatvec(self, y):
        return np.bincount(self._cols, weights=self._vals * y[self._rows], minlength=self.ncols)


def parallel_tomo(n: int, angles: Sequence[float], n_rays: int | None = None) -> ParallelTomo:
    return ParallelTomo(n, angles, n_rays)


# (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees); modified
# Shepp-Logan intensities so that the phantom lies in [0, 1]
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def shepp_logan(n: int) -> np.ndarray:
    """Modified Shepp-Logan phantom sampled at pixel centres, row-major, top row first."""
    if n < 8:
        raise ValueError("phantom size must be >= 8")
    centres = -1.0 + (2.0 * np.arange(n) + 1.0) / n
    x = centres[None, :]
    y = centres[::-1, None]
    img = np.zeros((n, n))
    for val, a, b, x0, y0, phi in SHEPP_LOGAN_ELLIPSES:
        c, s = math.cos(math.radians(phi)), math.sin(math.radians(phi))
        xr = (x - x0) * c + (y - y0) * s
        yr = -(x - x0) * s + (y - y0) * c
        img += np.where((xr / a) ** 2 + (yr / b) ** 2 <= 1.0, val, 0.0)
    return np.clip(img, 0.0, 1.0).reshape(-1)


def test_signal_1d(n: int) -> np.ndarray:
    """Piecewise-smooth 1-D signal: two boxes and a Gaussian bump on ``[0, 1]``."""
    t = (np.arange(n) + 0.5) / n
    x = np.where((t > 0.1) & (t < 0.3), 1.0, 0.0)
    x += np.where((t > 0.45) & (t < 0.55), 0.5, 0.0)
    x += 0.8 * np.exp(-((t - 0.75) ** 2) / (2 * 0.06**2))
    return x


test_signal_1d.__test__ = False  # keep pytest from collecting it


def noise_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def add_noise(b_exact, level: float, seed: int) -> tuple[np.ndarray, float]:
    """Add white Gaussian noise rescaled to ``||e|| / ||b_exact|| = level``."""
    b_exact = np.asarray(b_exact, dtype=np.float64)
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return b_exact.copy(), 0.0
    nb = np.linalg.norm(b_exact)
    if nb == 0.0:
        raise ValueError("cannot scale noise relative to an all-zero signal")
    e = noise_generator(seed).standard_normal(b_exact.shape[0])
    e *= level * nb / np.linalg.norm(e)
    return b_exact + e, float(np.linalg.norm(e))


def make_noisy_problem(op: LinearOp, x_true, level: float, seed: int) -> NoisyProblem:
    x_true = np.asarray(x_true, dtype=np.float64)
    b_exact = op.apply(x_true)
    b, noise_norm = add_noise(b_exact, level, seed)
    return NoisyProblem(op, x_true, b_exact, b, float(level), noise_norm, int(seed))
