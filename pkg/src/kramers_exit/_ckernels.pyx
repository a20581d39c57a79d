# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama exit kernel for polynomial potentials and level sets.

Mirrors :mod:`kramers_exit._pykernels` operation for operation so both
backends consume the same counter-based random stream.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, isfinite, log, sin, sqrt
from libc.stdint cimport int8_t, uint64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SEED_SALT = 0x5851F42D4C957F2DULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double GRAD_FLOOR = 1e-8


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t path_key(uint64_t seed, uint64_t path) noexcept nogil:
    return mix64(mix64(seed ^ SEED_SALT) + GOLDEN * (path + 1))


cdef inline double uniform(uint64_t key, uint64_t counter) noexcept nogil:
    return <double>(mix64(key + GOLDEN * (counter + 1)) >> 11) * INV_2_53


cdef inline double horner(const double[:, ::1] c, double x, double y) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double r = 0.0, inner
    for i in range(c.shape[0] - 1, -1, -1):
        inner = 0.0
        for j in range(c.shape[1] - 1, -1, -1):
            inner = inner * y + c[i, j]
        r = r * x + inner
    return r


def uniforms(uint64_t seed, uint64_t path, uint64_t start, Py_ssize_t n):
    """Raw stream values, for cross-backend tests."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef uint64_t key = path_key(seed, path)
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = uniform(key, start + i)
    return out


def run_paths(
    const double[:, ::1] fx,
    const double[:, ::1] fy,
    const double[:, ::1] phi,
    const double[:, ::1] phix,
    const double[:, ::1] phiy,
    double x0,
    double y0,
    double epsilon,
    double dt,
    long long max_steps,
    uint64_t seed,
    long long first_path,
    long long n_paths,
    bint bridge,
    double ball_x,
    double ball_y,
    double ball_r,
):
    """Simulate paths ``first_path .. first_path + n_paths - 1``.

    Returns ``(times, positions, status, steps)`` with status 0 = left D,
    1 = censored, 2 = reached the ball, 3 = non-finite state.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] times_arr = np.empty(n_paths)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pos_arr = np.empty((n_paths, 2))
    cdef cnp.ndarray[cnp.int8_t, ndim=1] status_arr = np.empty(n_paths, dtype=np.int8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] steps_arr = np.empty(n_paths, dtype=np.int64)
    cdef double[::1] times = times_arr
    cdef double[:, ::1] pos = pos_arr
    cdef int8_t[::1] status = status_arr
    cdef cnp.int64_t[::1] steps = steps_arr

    cdef double noise = sqrt(2.0 * epsilon * dt)
    cdef bint use_ball = ball_r > 0
    cdef double ball_r2 = ball_r * ball_r
    cdef bint use_bridge = bridge and epsilon > 0
    cdef Py_ssize_t n
    cdef long long k
    cdef uint64_t key
    cdef double x, y, px, nx, ny, pn, gx, gy, u1, u2, rad, z0, z1, frac
    cdef double gphx, gphy, dist_x, dist_y, prob, mx, my, pm, gmx, gmy, g2
    cdef int8_t st
    cdef double t_exit

    with nogil:
        for n in range(n_paths):
            key = path_key(seed, <uint64_t>(first_path + n))
            x = x0
            y = y0
            st = 1
            t_exit = max_steps * dt
            k = 0
            px = horner(phi, x, y)
            if use_ball and (x - ball_x) * (x - ball_x) + (y - ball_y) * (y - ball_y) <= ball_r2:
                st = 2
                t_exit = 0.0
            elif px >= 0:
                st = 0
                t_exit = 0.0
            else:
                while k < max_steps:
                    gx = horner(fx, x, y)
                    gy = horner(fy, x, y)
                    u1 = 1.0 - uniform(key, 3 * <uint64_t>k)
                    u2 = uniform(key, 3 * <uint64_t>k + 1)
                    rad = sqrt(-2.0 * log(u1))
                    z0 = rad * cos(TWO_PI * u2)
                    z1 = rad * sin(TWO_PI * u2)
                    nx = x - gx * dt + noise * z0
                    ny = y - gy * dt + noise * z1
                    if not (isfinite(nx) and isfinite(ny)):
                        st = 3
                        t_exit = k * dt
                        break
                    pn = horner(phi, nx, ny)
                    if pn >= 0:
                        frac = px / (px - pn)
                        t_exit = (k + frac) * dt
                        x = x + frac * (nx - x)
                        y = y + frac * (ny - y)
                        st = 0
                        k += 1
                        break
                    if use_bridge:
                        gphx = horner(phix, x, y)
                        gphy = horner(phiy, x, y)
                        dist_x = -px / max(sqrt(gphx * gphx + gphy * gphy), GRAD_FLOOR)
                        gphx = horner(phix, nx, ny)
                        gphy = horner(phiy, nx, ny)
                        dist_y = -pn / max(sqrt(gphx * gphx + gphy * gphy), GRAD_FLOOR)
                        prob = exp(-dist_x * dist_y / (epsilon * dt))
                        if uniform(key, 3 * <uint64_t>k + 2) < prob:
                            mx = 0.5 * (x + nx)
                            my = 0.5 * (y + ny)
                            pm = horner(phi, mx, my)
                            gmx = horner(phix, mx, my)
                            gmy = horner(phiy, mx, my)
                            g2 = max(gmx * gmx + gmy * gmy, GRAD_FLOOR * GRAD_FLOOR)
                            x = mx - pm * gmx / g2
                            y = my - pm * gmy / g2
                            t_exit = (k + 0.5) * dt
                            st = 0
                            k += 1
                            break
                    x = nx
                    y = ny
                    px = pn
                    k += 1
                    if use_ball and (x - ball_x) * (x - ball_x) + (y - ball_y) * (y - ball_y) <= ball_r2:
                        st = 2
                        t_exit = k * dt
                        break
            times[n] = t_exit
            pos[n, 0] = x
            pos[n, 1] = y
            status[n] = st
            steps[n] = k
    return times_arr, pos_arr, status_arr, steps_arr
