"""Inner loops shared by the noise tables, the MGF certificate and Monte Carlo.

Every kernel exists twice: a numba version (``_nb_*``) and a vectorised numpy
version (``_np_*``).  The public names at the bottom dispatch on
:func:`boundednoise._accel.use_numba`.  Both paths must agree to rounding; the
test-suite checks this and ``benchmarks/bench_kernels.py`` times them.

Family codes: 0 = PolyInverse, 1 = SingleExp, 2 = DoubleExp.
"""
import math

import numpy as np

from ._accel import njit, prange, use_numba

F_MAX = 700.0
LOG_F_MAX = math.log(F_MAX)
LOGLOG_F_MAX = math.log(LOG_F_MAX)

POLY, SINGLE, DOUBLE = 0, 1, 2


# --------------------------------------------------------------------------
# scalar log-density shape (numba side)
# --------------------------------------------------------------------------

@njit(cache=True)
def _f_scalar(kind, p, eta):
    a = abs(eta)
    if a >= 1.0:
        return np.inf
    h = 1.0 / ((1.0 - a) * (1.0 + a))
    if kind == 0:
        if p == 1.0:
            v = h
        elif p == 2.0:
            v = h * h
        else:
            lv = p * math.log(h)
            if lv > LOG_F_MAX:
                return np.inf
            v = math.exp(lv)
        if v > F_MAX:
            return np.inf
        return v
    if kind == 1:
        if h > LOG_F_MAX:
            return np.inf
        return math.exp(h)
    if h > LOGLOG_F_MAX:
        return np.inf
    e = math.exp(h)
    if e > LOG_F_MAX:
        return np.inf
    return math.exp(e)


@njit(cache=True)
def _hermite_scalar(ell, tab, lut, g0, inv_w):
    # tab rows are (ell, eta, d eta/d ell, pad) with ell ascending
    n = tab.shape[0]
    if ell <= tab[0, 0]:
        return tab[0, 1]
    if ell >= tab[n - 1, 0]:
        return tab[n - 1, 1]
    # bracket from the lookup table, full search if rounding put us outside
    j = int((math.log(-ell) - g0) * inv_w)
    lo = 0
    hi = n - 1
    if 0 <= j < lut.shape[0] - 1:
        a = lut[j + 1]
        b = lut[j] + 1
        if tab[a, 0] <= ell and ell < tab[b, 0]:
            lo = a
            hi = b
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if tab[mid, 0] <= ell:
            lo = mid
        else:
            hi = mid
    l0 = tab[lo, 0]
    H = tab[hi, 0] - l0
    t = (ell - l0) / H
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * tab[lo, 1]
            + (t3 - 2.0 * t2 + t) * H * tab[lo, 2]
            + (-2.0 * t3 + 3.0 * t2) * tab[hi, 1]
            + (t3 - t2) * H * tab[hi, 2])


@njit(cache=True)
def _unit_quantile_scalar(u, tab, lut, g0, inv_w):
    # quantile of the normalised law on (-1, 1); folded so there is no
    # data-dependent branch on the side of 1/2
    s = min(u, 1.0 - u)
    if s == 0.5:
        return 0.0
    if s > 0.0:
        m = _hermite_scalar(math.log(s), tab, lut, g0, inv_w)
    else:
        m = tab[0, 1]
    return math.copysign(m, u - 0.5)


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

@njit(cache=True)
def _nb_f(kind, p, eta):
    out = np.empty(eta.shape[0])
    for i in range(eta.shape[0]):
        out[i] = _f_scalar(kind, p, eta[i])
    return out


@njit(cache=True)
def _nb_unit_quantile(u, tab, lut, g0, inv_w):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = _unit_quantile_scalar(u[i], tab, lut, g0, inv_w)
    return out


@njit(cache=True)
def _nb_log_mgf_grid(lams, logw, v):
    out = np.empty(lams.shape[0])
    m = logw.shape[0]
    for j in range(lams.shape[0]):
        lam = lams[j]
        mx = -np.inf
        for i in range(m):
            a = logw[i] + lam * v[i]
            if a > mx:
                mx = a
        s = 0.0
        for i in range(m):
            s += math.exp(logw[i] + lam * v[i] - mx)
        out[j] = mx + math.log(s)
    return out


@njit(cache=True)
def _nb_tilted_mean(lam, logw, v):
    m = logw.shape[0]
    mx = -np.inf
    for i in range(m):
        a = logw[i] + lam * v[i]
        if a > mx:
            mx = a
    s = 0.0
    sv = 0.0
    for i in range(m):
        e = math.exp(logw[i] + lam * v[i] - mx)
        s += e
        sv += e * v[i]
    return sv / s


@njit(cache=True, parallel=True)
def _nb_loss_sums(u, d, kind, p, tab, lut, g0, inv_w):
    n, k = u.shape
    out = np.empty(n)
    for r in prange(n):
        acc = 0.0
        for c in range(k):
            eta = _unit_quantile_scalar(u[r, c], tab, lut, g0, inv_w)
            acc += _f_scalar(kind, p, eta + d) - _f_scalar(kind, p, eta)
        out[r] = acc
    return out


# --------------------------------------------------------------------------
# numpy fallbacks
# --------------------------------------------------------------------------

def _np_f(kind, p, eta):
    eta = np.asarray(eta, dtype=float)
    a = np.abs(eta)
    out = np.full(eta.shape, np.inf)
    inside = a < 1.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        h = 1.0 / ((1.0 - a[inside]) * (1.0 + a[inside]))
        if kind == POLY:
            if p == 1.0:
                val = h.copy()
            elif p == 2.0:
                val = h * h
            else:
                lv = p * np.log(h)
                val = np.where(lv > LOG_F_MAX, np.inf, np.exp(np.minimum(lv, LOG_F_MAX + 1)))
            val = np.where(val > F_MAX, np.inf, val)
        elif kind == SINGLE:
            val = np.where(h > LOG_F_MAX, np.inf, np.exp(np.minimum(h, LOG_F_MAX + 1)))
        else:
            e = np.exp(np.minimum(h, LOGLOG_F_MAX + 1))
            val = np.where(h > LOGLOG_F_MAX, np.inf, np.exp(np.minimum(e, LOG_F_MAX + 1)))
            val = np.where(e > LOG_F_MAX, np.inf, val)
    out[inside] = val
    return out


def _np_hermite(ell, ell_asc, eta_asc, slope_asc):
    n = ell_asc.shape[0]
    lo = np.clip(np.searchsorted(ell_asc, ell, side="right") - 1, 0, n - 2)
    hi = lo + 1
    H = ell_asc[hi] - ell_asc[lo]
    t = (ell - ell_asc[lo]) / H
    t2 = t * t
    t3 = t2 * t
    val = ((2.0 * t3 - 3.0 * t2 + 1.0) * eta_asc[lo]
           + (t3 - 2.0 * t2 + t) * H * slope_asc[lo]
           + (-2.0 * t3 + 3.0 * t2) * eta_asc[hi]
           + (t3 - t2) * H * slope_asc[hi])
    val = np.where(ell <= ell_asc[0], eta_asc[0], val)
    return np.where(ell >= ell_asc[-1], eta_asc[-1], val)


def _np_unit_quantile(u, tab, *_lut):
    u = np.asarray(u, dtype=float)
    s = np.minimum(u, 1.0 - u)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.log(s)
        mag = _np_hermite(ell, tab[:, 0], tab[:, 1], tab[:, 2])
    mag = np.where(s <= 0.0, tab[0, 1], mag)
    mag = np.where(s == 0.5, 0.0, mag)
    return np.copysign(mag, u - 0.5)


def _np_log_mgf_grid(lams, logw, v):
    out = np.empty(lams.shape[0])
    # chunk over lambda so the (chunk, m) matrix stays small
    step = max(1, 2_000_000 // max(1, v.shape[0]))
    for j0 in range(0, lams.shape[0], step):
        a = logw[None, :] + lams[j0:j0 + step, None] * v[None, :]
        mx = a.max(axis=1)
        out[j0:j0 + step] = mx + np.log(np.exp(a - mx[:, None]).sum(axis=1))
    return out


def _np_tilted_mean(lam, logw, v):
    a = logw + lam * v
    e = np.exp(a - a.max())
    return float((e * v).sum() / e.sum())


def _np_loss_sums(u, d, kind, p, tab, *_lut):
    eta = _np_unit_quantile(u.ravel(), tab)
    with np.errstate(invalid="ignore"):
        loss = _np_f(kind, p, eta + d) - _np_f(kind, p, eta)
    return loss.reshape(u.shape).sum(axis=1)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def f_values(kind, p, eta):
    eta = np.ascontiguousarray(eta, dtype=float)
    if use_numba():
        return _nb_f(kind, float(p), eta.ravel()).reshape(eta.shape)
    return _np_f(kind, p, eta)


def unit_quantile(u, tab, lut, g0, inv_w):
    u = np.ascontiguousarray(u, dtype=float)
    if use_numba():
        return _nb_unit_quantile(u.ravel(), tab, lut, g0, inv_w).reshape(u.shape)
    return _np_unit_quantile(u, tab)


def log_mgf_grid(lams, logw, v):
    lams = np.ascontiguousarray(lams, dtype=float)
    if use_numba():
        return _nb_log_mgf_grid(lams, logw, v)
    return _np_log_mgf_grid(lams, logw, v)


def tilted_mean(lam, logw, v):
    if use_numba():
        return float(_nb_tilted_mean(float(lam), logw, v))
    return _np_tilted_mean(lam, logw, v)


def loss_sums(u, d, kind, p, tab, lut, g0, inv_w):
    u = np.ascontiguousarray(u, dtype=float)
    if use_numba():
        return _nb_loss_sums(u, float(d), kind, float(p), tab, lut, g0, inv_w)
    return _np_loss_sums(u, d, kind, p, tab)
