import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrecycle import linops, problems


def _dense(op):
    return linops.materialize(op).values


def test_blur1d_single_pixel_is_identity():
    assert np.array_equal(_dense(problems.gaussian_blur_1d(1, 1.0)), [[1.0]])


def test_blur1d_tiny_sigma_is_identity():
    assert np.allclose(_dense(problems.gaussian_blur_1d(7, 1e-6)), np.eye(7), atol=1e-300)


def test_blur1d_three_pixel_center_row():
    e = math.exp(-0.5)
    total = 1.0 + 2 * e + 2 * math.exp(-2.0)  # taps |d| <= 2 = n - 1
    row = _dense(problems.gaussian_blur_1d(3, 1.0))[1]
    assert np.allclose(row, np.array([e, 1.0, e]) / total, rtol=1e-15, atol=0)


def test_blur1d_toeplitz_symmetric_truncated():
    psf = 1.5
    M = _dense(problems.gaussian_blur_1d(20, psf))
    assert np.array_equal(M, M.T)
    radius = math.ceil(4 * psf)
    d = np.abs(np.subtract.outer(np.arange(20), np.arange(20)))
    taps = np.exp(-np.arange(radius + 1) ** 2 / (2 * psf**2))
    taps /= taps[0] + 2 * taps[1:].sum()
    expected = np.where(d <= radius, taps[np.minimum(d, radius)], 0.0)
    assert np.allclose(M, expected, rtol=1e-14, atol=0)


@pytest.mark.parametrize("bad", [(0, 1.0), (5, 0.0), (5, -1.0)])
def test_blur1d_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        problems.gaussian_blur_1d(*bad)


def test_blur2d_single_pixel():
    assert np.array_equal(_dense(problems.gaussian_blur_2d(1, 1, 2.0)), [[1.0]])


def test_blur2d_matches_kronecker_oracle():
    nx, ny, psf = 6, 5, 1.2
    K = np.kron(_dense(problems.gaussian_blur_1d(nx, psf)), _dense(problems.gaussian_blur_1d(ny, psf)))
    assert np.allclose(_dense(problems.gaussian_blur_2d(nx, ny, psf)), K, rtol=0, atol=1e-15)


def test_blur2d_preserves_constant_interior():
    n, psf = 14, 1.0
    radius = math.ceil(4 * psf)
    out = problems.gaussian_blur_2d(n, n, psf).apply(np.ones(n * n)).reshape(n, n)
    interior = out[radius : n - radius, radius : n - radius]
    assert np.allclose(interior, 1.0, atol=1e-14)
    assert out[0, 0] < 1.0


def test_blur2d_adjoint():
    assert linops.adjoint_mismatch(problems.gaussian_blur_2d(16, 16, 1.5)) <= 1e-14


def test_blur2d_rejects_bad_input():
    with pytest.raises(ValueError):
        problems.gaussian_blur_2d(0, 4, 1.0)


def test_tomo_vertical_rays_sum_columns():
    n = 8
    op = problems.parallel_tomo(n, [0.0], n_rays=n)
    assert op.shape == (n, n * n)
    assert np.allclose(op.apply(np.ones(n * n)), n * 1.0, atol=1e-12)
    img = np.arange(n * n, dtype=float).reshape(n, n)
    assert np.allclose(op.apply(img.ravel()), img.sum(axis=0), atol=1e-10)


def test_tomo_opposite_angles_reverse_rays():
    n = 10
    a = _dense(problems.parallel_tomo(n, [0.0]))
    b = _dense(problems.parallel_tomo(n, [180.0]))
    assert np.allclose(a, b[::-1], atol=1e-12)
    c = _dense(problems.parallel_tomo(n, [30.0]))
    d = _dense(problems.parallel_tomo(n, [210.0]))
    assert np.allclose(c, d[::-1], atol=1e-12)


def test_tomo_zero_image():
    op = problems.parallel_tomo(12, np.arange(0, 180, 15.0))
    assert not op.apply(np.zeros(144)).any()


def test_tomo_default_ray_count_and_shape():
    op = problems.parallel_tomo(32, np.arange(0, 180, 6.0))
    assert op.n_rays == math.ceil(math.sqrt(2) * 32)
    assert op.shape == (30 * op.n_rays, 1024)


def test_tomo_ray_length_through_square():
    # the central ray at 45 degrees crosses the full diagonal
    n = 6
    op = problems.parallel_tomo(n, [45.0], n_rays=1)
    assert math.isclose(op.apply(np.ones(n * n))[0], n * math.sqrt(2), rel_tol=1e-12)


def test_tomo_adjoint():
    op = problems.parallel_tomo(16, np.arange(0, 180, 7.0))
    assert linops.adjoint_mismatch(op) <= 1e-14


def test_tomo_rejects_bad_input():
    with pytest.raises(ValueError):
        problems.parallel_tomo(8, [])
    with pytest.raises(ValueError):
        problems.parallel_tomo(1, [0.0])


# modified Shepp-Logan ellipse table, written out independently
_TABLE = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
]


def _phantom_pixel(x, y):
    v = 0.0
    for val, a, b, x0, y0, deg in _TABLE:
        t = math.radians(deg)
        dx, dy = x - x0, y - y0
        u = dx * math.cos(t) + dy * math.sin(t)
        w = -dx * math.sin(t) + dy * math.cos(t)
        if (u / a) ** 2 + (w / b) ** 2 <= 1.0:
            v += val
    return min(max(v, 0.0), 1.0)


def test_phantom_matches_pixel_loop_oracle():
    n = 64
    img = problems.shepp_logan(n).reshape(n, n)
    ref = np.empty((n, n))
    for i in range(n):
        y = 1.0 - (2 * i + 1) / n
        for j in range(n):
            ref[i, j] = _phantom_pixel(-1.0 + (2 * j + 1) / n, y)
    assert math.fsum(img.ravel()) == math.fsum(ref.ravel())
    assert np.array_equal(img, ref)


def test_phantom_range_and_corners():
    img = problems.shepp_logan(32).reshape(32, 32)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img[0, 0] == img[0, -1] == img[-1, 0] == img[-1, -1] == 0.0
    with pytest.raises(ValueError):
        problems.shepp_logan(4)


def test_noise_level_zero():
    b = np.arange(1.0, 6.0)
    noisy, nn = problems.add_noise(b, 0.0, 3)
    assert np.array_equal(noisy, b) and nn == 0.0


@settings(max_examples=25, deadline=None)
@given(level=st.floats(1e-6, 0.5), seed=st.integers(0, 2**32 - 1))
def test_noise_level_exact(level, seed):
    b = np.linspace(1.0, 2.0, 50)
    noisy, nn = problems.add_noise(b, level, seed)
    assert abs(np.linalg.norm(noisy - b) / np.linalg.norm(b) - level) <= 1e-14
    assert math.isclose(nn, level * np.linalg.norm(b), rel_tol=1e-13)


def test_noise_deterministic_per_seed():
    b = np.ones(40)
    a1, _ = problems.add_noise(b, 0.01, 9)
    a2, _ = problems.add_noise(b, 0.01, 9)
    a3, _ = problems.add_noise(b, 0.01, 10)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, a3)


def test_noise_rejects_zero_signal_and_negative_level():
    with pytest.raises(ValueError):
        problems.add_noise(np.zeros(4), 0.1, 0)
    with pytest.raises(ValueError):
        problems.add_noise(np.ones(4), -0.1, 0)


def test_noisy_problem_fields():
    op = problems.gaussian_blur_1d(32, 1.0)
    x = problems.test_signal_1d(32)
    p = problems.make_noisy_problem(op, x, 0.01, 5)
    assert np.array_equal(p.b_exact, op.apply(x))
    assert p.seed == 5 and p.noise_level == 0.01
    assert math.isclose(np.linalg.norm(p.b - p.b_exact), p.noise_norm, rel_tol=1e-14)
