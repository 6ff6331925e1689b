"""Numba kernels for the single-site heat-bath updates.

Each update draws exactly from the site's full conditional: a unit-variance
Gaussian centered at the neighbor average, tilted by exp(b) on the reward
window and truncated at the floor. The draw decomposes the support into at
most three intervals, picks one by its (log-space) tilted Gaussian mass and
samples it by inverse CDF, falling back to exponential rejection in tails
beyond 8 standard deviations.
"""

import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_TAIL = 8.0
_NEG_INF = -np.inf
_POS_INF = np.inf


@njit(cache=True)
def ndtr(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def ndtri(p):
    """Inverse standard normal CDF (Wichura's PPND16 rational fits)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    if r <= 0.0:
        return _NEG_INF if q < 0.0 else _POS_INF
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True)
def log_ndtr(x):
    """log Phi(x); erfc keeps full relative accuracy down to -25, Mills
    series beyond."""
    if x > -25.0:
        return math.log(ndtr(x))
    z = -x
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) \
        + 105.0 / (z2 * z2 * z2 * z2)
    return -0.5 * z2 - math.log(z) - _LOG_SQRT_2PI + math.log(series)


@njit(cache=True)
def _log1mexp(d):
    """log(1 - e^d) for d <= 0."""
    if d > -0.6931471805599453:
        return math.log(-math.expm1(d))
    return math.log1p(-math.exp(d))


@njit(cache=True)
def interval_logmass(alpha, beta):
    """log P(alpha <= Z <= beta) for standard normal Z, stable in tails."""
    if alpha >= beta:
        return _NEG_INF
    if alpha == _NEG_INF and beta == _POS_INF:
        return 0.0
    if beta == _POS_INF:
        return log_ndtr(-alpha)
    if alpha == _NEG_INF:
        return log_ndtr(beta)
    if alpha >= 0.0:
        la = log_ndtr(-alpha)
        lb = log_ndtr(-beta)
        return la + _log1mexp(lb - la)
    if beta <= 0.0:
        lb = log_ndtr(beta)
        la = log_ndtr(alpha)
        return lb + _log1mexp(la - lb)
    return math.log(ndtr(beta) - ndtr(alpha))


@njit(cache=True)
def _tail_reject_right(alpha, beta, rng):
    """Standard normal on [alpha, beta], alpha >= ~8: shifted-exponential
    rejection (asymptotically tight proposal)."""
    lam = 0.5 * (alpha + math.sqrt(alpha * alpha + 4.0))
    while True:
        u1 = rng.random()
        if u1 <= 0.0:
            continue
        x = alpha - math.log(u1) / lam
        if x > beta:
            continue
        u2 = rng.random()
        d = x - lam
        if math.log(u2) <= -0.5 * d * d:
            return x


@njit(cache=True)
def draw_truncated_standard(alpha, beta, rng):
    """Exact standard-normal draw conditioned on [alpha, beta]."""
    if alpha >= _TAIL:
        return _tail_reject_right(alpha, beta, rng)
    if beta <= -_TAIL:
        return -_tail_reject_right(-beta, -alpha, rng)
    u = rng.random()
    if alpha >= 0.0:
        sa = ndtr(-alpha)
        sb = 0.0 if beta == _POS_INF else ndtr(-beta)
        return -ndtri(sa + u * (sb - sa))
    ca = 0.0 if alpha == _NEG_INF else ndtr(alpha)
    cb = 1.0 if beta == _POS_INF else ndtr(beta)
    return ndtri(ca + u * (cb - ca))


@njit(cache=True)
def draw_site(m, b, w_lo, w_hi, floor, rng):
    """One exact draw of a site height given neighbor mean m: unit-variance
    Gaussian tilted by e^b on [w_lo, w_hi], truncated to [floor, inf)."""
    if b == 0.0:
        if floor == _NEG_INF:
            return m + draw_truncated_standard(_NEG_INF, _POS_INF, rng)
        return m + draw_truncated_standard(floor - m, _POS_INF, rng)

    # interval edges of the support, split at the window boundaries
    edges = np.empty(4)
    edges[0] = floor
    k = 1
    if w_lo > floor:
        edges[k] = w_lo
        k += 1
    if w_hi > floor:
        edges[k] = w_hi
        k += 1
    edges[k] = _POS_INF
    n_pieces = k

    logw = np.empty(n_pieces)
    for i in range(n_pieces):
        in_window = edges[i] >= w_lo and edges[i + 1] <= w_hi
        alpha = edges[i] - m
        beta = edges[i + 1] - m
        logw[i] = interval_logmass(alpha, beta)
        if in_window:
            logw[i] += b

    mx = logw[0]
    for i in range(1, n_pieces):
        if logw[i] > mx:
            mx = logw[i]
    total = 0.0
    for i in range(n_pieces):
        logw[i] = math.exp(logw[i] - mx)
        total += logw[i]

    u = rng.random() * total
    acc = 0.0
    piece = n_pieces - 1
    for i in range(n_pieces):
        acc += logw[i]
        if u <= acc:
            piece = i
            break
    return m + draw_truncated_standard(edges[piece] - m, edges[piece + 1] - m, rng)


@njit(cache=True)
def sweep(values, indptr, indices, inv2d, clamped, b, w_lo, w_hi, floor, rng):
    """One lexicographic heat-bath sweep, in place."""
    for j in range(values.shape[0]):
        if clamped[j]:
            continue
        m = 0.0
        for p in range(indptr[j], indptr[j + 1]):
            m += values[indices[p]]
        values[j] = draw_site(m * inv2d, b, w_lo, w_hi, floor, rng)


@njit(cache=True)
def run_sweeps(values, indptr, indices, inv2d, clamped, b, w_lo, w_hi, floor,
               n_sweeps, rng):
    for _ in range(n_sweeps):
        sweep(values, indptr, indices, inv2d, clamped, b, w_lo, w_hi, floor, rng)
