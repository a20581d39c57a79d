"""Pure-Python Euler-Maruyama exit kernel, vectorised over paths.

Same contract and random stream as the compiled ``_ckernels.run_paths``;
additionally accepts arbitrary vectorised callables so that non-polynomial
potentials can be simulated.
"""
import numpy as np

from .rng import path_keys, uniform

TWO_PI = 6.283185307179586
GRAD_FLOOR = 1e-8


def horner(c):
    """Evaluate ``sum c[i, j] x^i y^j`` in the compiled kernel's operation order."""
    c = np.ascontiguousarray(c, dtype=float)

    def ev(x, y):
        r = np.zeros_like(x)
        for i in range(c.shape[0] - 1, -1, -1):
            inner = np.zeros_like(x)
            for j in range(c.shape[1] - 1, -1, -1):
                inner = inner * y + c[i, j]
            r = r * x + inner
        return r

    return ev


def polynomial_fields(fx, fy, phi, phix, phiy):
    efx, efy, ephi, ephix, ephiy = (horner(c) for c in (fx, fy, phi, phix, phiy))
    return (
        lambda x, y: (efx(x, y), efy(x, y)),
        ephi,
        lambda x, y: (ephix(x, y), ephiy(x, y)),
    )


def run_paths(
    grad_f,
    phi,
    grad_phi,
    x0,
    y0,
    epsilon,
    dt,
    max_steps,
    seed,
    first_path,
    n_paths,
    bridge,
    ball_x,
    ball_y,
    ball_r,
):
    """Simulate paths ``first_path .. first_path + n_paths - 1``.

    ``grad_f(x, y) -> (gx, gy)``, ``phi(x, y)`` and ``grad_phi(x, y)`` act on
    1-d arrays.  Returns ``(times, positions, status, steps)`` exactly as the
    compiled kernel does.
    """
    n_paths = int(n_paths)
    times = np.full(n_paths, max_steps * dt, dtype=float)
    pos = np.empty((n_paths, 2))
    status = np.ones(n_paths, dtype=np.int8)
    steps = np.full(n_paths, max_steps, dtype=np.int64)
    keys_all = path_keys(seed, first_path + np.arange(n_paths, dtype=np.int64))
    noise = np.sqrt(2.0 * epsilon * dt)
    use_ball = ball_r > 0
    use_bridge = bool(bridge) and epsilon > 0

    x = np.full(n_paths, float(x0))
    y = np.full(n_paths, float(y0))
    px = phi(x, y)
    idx = np.arange(n_paths)

    if use_ball:
        inside = (x - ball_x) * (x - ball_x) + (y - ball_y) * (y - ball_y) <= ball_r * ball_r
    else:
        inside = np.zeros(n_paths, dtype=bool)
    gone = ~inside & (px >= 0)
    status[inside] = 2
    status[gone] = 0
    times[inside | gone] = 0.0
    steps[inside | gone] = 0
    done = inside | gone
    pos[done, 0] = x[done]
    pos[done, 1] = y[done]
    keep = ~done
    idx, x, y, px = idx[keep], x[keep], y[keep], px[keep]
    keys = keys_all[keep]

    k = 0
    while k < max_steps and idx.size:
        gx, gy = grad_f(x, y)
        u1 = 1.0 - uniform(keys, 3 * k)
        u2 = uniform(keys, 3 * k + 1)
        rad = np.sqrt(-2.0 * np.log(u1))
        z0 = rad * np.cos(TWO_PI * u2)
        z1 = rad * np.sin(TWO_PI * u2)
        nx = x - gx * dt + noise * z0
        ny = y - gy * dt + noise * z1

        bad = ~(np.isfinite(nx) & np.isfinite(ny))
        if bad.any():
            sel = idx[bad]
            status[sel] = 3
            times[sel] = k * dt
            steps[sel] = k
            pos[sel, 0] = x[bad]
            pos[sel, 1] = y[bad]
        live = ~bad
        pn = np.full_like(nx, -1.0)
        pn[live] = phi(nx[live], ny[live])

        out = live & (pn >= 0)
        if out.any():
            frac = px[out] / (px[out] - pn[out])
            sel = idx[out]
            times[sel] = (k + frac) * dt
            pos[sel, 0] = x[out] + frac * (nx[out] - x[out])
            pos[sel, 1] = y[out] + frac * (ny[out] - y[out])
            status[sel] = 0
            steps[sel] = k + 1
        cont = live & ~out

        if use_bridge and cont.any():
            c_idx = np.flatnonzero(cont)
            gphx, gphy = grad_phi(x[c_idx], y[c_idx])
            dist_x = -px[c_idx] / np.maximum(np.sqrt(gphx * gphx + gphy * gphy), GRAD_FLOOR)
            gphx, gphy = grad_phi(nx[c_idx], ny[c_idx])
            dist_y = -pn[c_idx] / np.maximum(np.sqrt(gphx * gphx + gphy * gphy), GRAD_FLOOR)
            prob = np.exp(-dist_x * dist_y / (epsilon * dt))
            hit = uniform(keys[c_idx], 3 * k + 2) < prob
            if hit.any():
                h_idx = c_idx[hit]
                mx = 0.5 * (x[h_idx] + nx[h_idx])
                my = 0.5 * (y[h_idx] + ny[h_idx])
                pm = phi(mx, my)
                gmx, gmy = grad_phi(mx, my)
                g2 = np.maximum(gmx * gmx + gmy * gmy, GRAD_FLOOR * GRAD_FLOOR)
                sel = idx[h_idx]
                pos[sel, 0] = mx - pm * gmx / g2
                pos[sel, 1] = my - pm * gmy / g2
                times[sel] = (k + 0.5) * dt
                status[sel] = 0
                steps[sel] = k + 1
                cont[h_idx] = False

        k += 1
        if use_ball and cont.any():
            in_ball = cont & ((nx - ball_x) * (nx - ball_x) + (ny - ball_y) * (ny - ball_y) <= ball_r * ball_r)
            if in_ball.any():
                sel = idx[in_ball]
                status[sel] = 2
                times[sel] = k * dt
                steps[sel] = k
                pos[sel, 0] = nx[in_ball]
                pos[sel, 1] = ny[in_ball]
                cont &= ~in_ball

        idx, x, y, px, keys = idx[cont], nx[cont], ny[cont], pn[cont], keys[cont]

    if idx.size:
        pos[idx, 0] = x
        pos[idx, 1] = y
    return times, pos, status, steps
