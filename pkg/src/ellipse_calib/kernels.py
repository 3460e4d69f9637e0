"""Hot inner loops of the point-mass filter, in two interchangeable flavours.

Every kernel exists as a pure-numpy function (``*_np``) and a numba function
(``*_nb``).  The module-level names without suffix dispatch to whichever
backend :mod:`ellipse_calib._accel` selected at import time.  Both flavours
agree to float rounding; ``tests/test_kernels.py`` pins that.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# Kernel entries below this fraction of the peak are dropped by the sparse
# convolution; the discarded mass is far below double precision of the result.
KERNEL_CUTOFF = 1e-20
EXP_CUTOFF = 50.0


# --------------------------------------------------------------------------
# Grid log-likelihood


def loglik_grid_np(z, ux, uy, tx, rx, vt, vr, d, phi, kappa,
                   sigma_near, sigma_far, xi_th):
    """Gaussian log-likelihood (up to a constant) of one power change for every grid RP.

    ``vt`` and ``vr`` are ``(N, 2)`` arrays of virtual nodes, one row per grid point.
    """
    d_tx = np.hypot(tx[0] - ux, tx[1] - uy)
    d_rx = np.hypot(rx[0] - ux, rx[1] - uy)
    xi_tx = d_tx + np.hypot(vr[:, 0] - ux, vr[:, 1] - uy) - d
    xi_rx = np.hypot(vt[:, 0] - ux, vt[:, 1] - uy) + d_rx - d
    np.maximum(xi_tx, 0.0, out=xi_tx)
    np.maximum(xi_rx, 0.0, out=xi_rx)
    f = phi * (np.exp(-xi_tx / kappa) + np.exp(-xi_rx / kappa))
    sigma = np.where(np.minimum(xi_tx, xi_rx) <= xi_th, sigma_near, sigma_far)
    r = (z - f) / sigma
    return -0.5 * r * r - np.log(sigma)


@njit
def loglik_grid_nb(z, ux, uy, tx, rx, vt, vr, d, phi, kappa,
                   sigma_near, sigma_far, xi_th):
    n = vt.shape[0]
    out = np.empty(n)
    d_tx = np.sqrt((tx[0] - ux) ** 2 + (tx[1] - uy) ** 2)
    d_rx = np.sqrt((rx[0] - ux) ** 2 + (rx[1] - uy) ** 2)
    log_near = np.log(sigma_near)
    log_far = np.log(sigma_far)
    inv_kappa = 1.0 / kappa
    for i in range(n):
        ax = vr[i, 0] - ux
        ay = vr[i, 1] - uy
        bx = vt[i, 0] - ux
        by = vt[i, 1] - uy
        xi_tx = max(d_tx + np.sqrt(ax * ax + ay * ay) - d, 0.0)
        xi_rx = max(np.sqrt(bx * bx + by * by) + d_rx - d, 0.0)
        # exp(-x) for x > EXP_CUTOFF is below 1e-21 relative to phi
        f = 0.0
        if xi_tx * inv_kappa < EXP_CUTOFF:
            f += np.exp(-xi_tx * inv_kappa)
        if xi_rx * inv_kappa < EXP_CUTOFF:
            f += np.exp(-xi_rx * inv_kappa)
        f *= phi
        if min(xi_tx, xi_rx) <= xi_th:
            r = (z - f) / sigma_near
            out[i] = -0.5 * r * r - log_near
        else:
            r = (z - f) / sigma_far
            out[i] = -0.5 * r * r - log_far
    return out


# --------------------------------------------------------------------------
# Bayes update in the log domain


def _bayes_update_log_np(w, loglik):
    with np.errstate(divide="ignore"):
        logw = np.log(w) + loglik
    top = logw.max()
    if not np.isfinite(top):
        return np.full_like(w, np.nan)
    out = np.exp(logw - top)
    return out / out.sum()


def bayes_update_np(w, loglik):
    """Normalized ``w * exp(loglik)``.

    The likelihood is shifted by its maximum first; only when every product
    then underflows does it fall back to the full log-domain product.
    """
    out = w * np.exp(loglik - loglik.max())
    total = out.sum()
    if total > 1e-280 and np.isfinite(total):
        return out / total
    return _bayes_update_log_np(w, loglik)


@njit
def _bayes_update_log_nb(w, loglik):
    n = w.shape[0]
    logw = np.empty(n)
    top = -np.inf
    for i in range(n):
        v = np.log(w[i]) + loglik[i] if w[i] > 0.0 else -np.inf
        logw[i] = v
        if v > top:
            top = v
    out = np.empty(n)
    if not np.isfinite(top):
        out[:] = np.nan
        return out
    total = 0.0
    for i in range(n):
        v = np.exp(logw[i] - top)
        out[i] = v
        total += v
    for i in range(n):
        out[i] /= total
    return out


@njit
def bayes_update_nb(w, loglik):
    n = w.shape[0]
    top = loglik.max()
    out = np.empty(n)
    total = 0.0
    for i in range(n):
        v = w[i] * np.exp(loglik[i] - top)
        out[i] = v
        total += v
    if not (total > 1e-280 and np.isfinite(total)):
        return _bayes_update_log_nb(w, loglik)
    inv = 1.0 / total
    for i in range(n):
        out[i] *= inv
    return out


# --------------------------------------------------------------------------
# Circular convolution with a symmetric transition kernel


def circular_convolve_np(w, kernel):
    """``out[i] = sum_j w[j] * kernel[(i - j) % N]`` via real FFT."""
    n = w.shape[0]
    out = np.fft.irfft(np.fft.rfft(w) * np.fft.rfft(kernel), n)
    np.maximum(out, 0.0, out=out)
    return out


@njit
def circular_convolve_nb(w, kernel):
    n = w.shape[0]
    peak = kernel.max()
    offsets = np.empty(n, dtype=np.int64)
    m = 0
    for k in range(n):
        if kernel[k] > KERNEL_CUTOFF * peak:
            offsets[m] = k
            m += 1
    out = np.zeros(n)
    for j in range(n):
        wj = w[j]
        if wj == 0.0:
            continue
        for q in range(m):
            k = offsets[q]
            i = j + k
            if i >= n:
                i -= n
            out[i] += wj * kernel[k]
    return out


# --------------------------------------------------------------------------
# Expected squared wrapped distance for every grid candidate


def wrapped_cost_np(w, spacing):
    """``cost[j] = sum_i w[i] * (spacing * wrapdist(i, j))**2`` via FFT."""
    n = w.shape[0]
    m = np.arange(n)
    q = (np.minimum(m, n - m) * spacing) ** 2
    cost = np.fft.irfft(np.fft.rfft(w) * np.fft.rfft(q), n)
    np.maximum(cost, 0.0, out=cost)
    return cost


@njit
def wrapped_cost_nb(w, spacing):
    # Prefix sums over three periods; each candidate then sees exactly N
    # neighbours at wrapped offsets -floor((N-1)/2) .. floor(N/2).
    n = w.shape[0]
    s0 = np.empty(3 * n + 1)
    s1 = np.empty(3 * n + 1)
    s2 = np.empty(3 * n + 1)
    s0[0] = s1[0] = s2[0] = 0.0
    t = 0
    for rep in range(3):
        for i in range(n):
            # offsets relative to the middle period keep magnitudes small
            u = float(t - n)
            wt = w[i]
            s0[t + 1] = s0[t] + wt
            s1[t + 1] = s1[t] + wt * u
            s2[t + 1] = s2[t] + wt * u * u
            t += 1
    lo_off = (n - 1) // 2
    hi_off = n // 2
    cost = np.empty(n)
    sp2 = spacing * spacing
    for j in range(n):
        c = float(j)
        lo = j + n - lo_off
        hi = j + n + hi_off + 1
        v = (s2[hi] - s2[lo]) - 2.0 * c * (s1[hi] - s1[lo]) + c * c * (s0[hi] - s0[lo])
        cost[j] = v * sp2 if v > 0.0 else 0.0
    return cost


# --------------------------------------------------------------------------
# MMSE arc: best grid candidate, refined to the local weighted mean offset


def _wrapped_cost_at_np(w, spacing, s, period):
    diff = np.abs(np.arange(w.shape[0]) * spacing - s) % period
    diff = np.minimum(diff, period - diff)
    return float(w @ (diff * diff))


def mmse_arc_np(w, spacing):
    n = w.shape[0]
    period = n * spacing
    cost = wrapped_cost_np(w, spacing)
    best = cost.min()
    tol = 1e-12 * max(best, spacing * spacing)
    if cost.max() <= best + tol:
        return 0.0  # flat posterior: every grid point ties
    j = int(np.flatnonzero(cost <= best + tol)[0])
    off = (np.arange(n) - j + n // 2) % n - n // 2
    cand = ((j + float(w @ off)) * spacing) % period
    s_j = j * spacing
    if cand != s_j and _wrapped_cost_at_np(w, spacing, cand, period) < \
            _wrapped_cost_at_np(w, spacing, s_j, period) - 1e-15 * period * period:
        return cand
    return s_j


@njit
def _wrapped_cost_at_nb(w, spacing, s, period):
    # s and the grid both lie in [0, period), so |difference| < period
    total = 0.0
    for i in range(w.shape[0]):
        diff = abs(i * spacing - s)
        if period - diff < diff:
            diff = period - diff
        total += w[i] * diff * diff
    return total


@njit
def mmse_arc_nb(w, spacing):
    n = w.shape[0]
    period = n * spacing
    cost = wrapped_cost_nb(w, spacing)
    best = cost.min()
    tol = 1e-12 * max(best, spacing * spacing)
    if cost.max() <= best + tol:
        return 0.0
    j = 0
    for i in range(n):
        if cost[i] <= best + tol:
            j = i
            break
    mu = 0.0
    half = n // 2
    for i in range(n):
        off = i - j
        if off >= n - half:
            off -= n
        elif off < -half:
            off += n
        mu += w[i] * off
    cand = ((j + mu) * spacing) % period
    s_j = j * spacing
    if cand != s_j and _wrapped_cost_at_nb(w, spacing, cand, period) < \
            _wrapped_cost_at_nb(w, spacing, s_j, period) - 1e-15 * period * period:
        return cand
    return s_j


if USE_NUMBA:
    loglik_grid = loglik_grid_nb
    bayes_update = bayes_update_nb
    circular_convolve = circular_convolve_nb
    wrapped_cost = wrapped_cost_nb
    mmse_arc = mmse_arc_nb
    BACKEND = "numba"
else:
    loglik_grid = loglik_grid_np
    bayes_update = bayes_update_np
    circular_convolve = circular_convolve_np
    wrapped_cost = wrapped_cost_np
    mmse_arc = mmse_arc_np
    BACKEND = "numpy"


def warmup():
    """Compile the numba kernels on tiny inputs; no-op for the numpy backend."""
    if not USE_NUMBA:
        return
    w = np.full(4, 0.25)
    p = np.zeros((4, 2)) + 1.0
    ll = loglik_grid_nb(0.0, 0.0, 0.0, np.zeros(2), np.ones(2), p, p, 3.0,
                        -1.0, 0.1, 1.0, 0.5, 0.1)
    bayes_update_nb(w, ll)
    circular_convolve_nb(w, w)
    mmse_arc_nb(w, 1.0)
