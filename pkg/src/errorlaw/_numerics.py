"""Small floating-point helpers shared by the closed-form and oracle routes."""

import math

import numpy as np

# Cody-Waite split of 2*pi; the first two parts carry few enough bits that
# q * part is exact for |q| < 2**26.
_TWO_PI_1 = float(np.float32(2 * math.pi))
_TWO_PI_2 = float(np.float32(2 * math.pi - _TWO_PI_1))
_TWO_PI_3 = (2 * math.pi - _TWO_PI_1) - _TWO_PI_2
_TWO_PI_4 = 2.4492935982947064e-16  # 2*pi - fl(2*pi)

_SPLITTER = 2.0**27 + 1.0


def _split(x):
    """Veltkamp split: x == hi + lo with hi holding at most 26 bits."""
    c = _SPLITTER * x
    hi = c - (c - x)
    return hi, x - hi


def reduce_multiple(k, x):
    """Return ``k * x`` reduced to ``(-pi, pi]`` without losing the low bits.

    ``k`` may be an integer, a half-integer, or an array of them (|k| < 2**25).
    The product is formed as a sum of exact partial products so that the
    reduction error does not grow with ``k``.
    """
    k = np.asarray(k, dtype=float)
    x_hi, x_lo = _split(float(x))
    p_hi = k * x_hi  # exact: 26 bits times at most 26 bits
    q = np.rint((k * float(x)) / (2 * math.pi))
    r = p_hi - q * _TWO_PI_1  # exact cancellation
    r = r - q * _TWO_PI_2
    r = r + (k * x_lo - q * _TWO_PI_3 - q * _TWO_PI_4)
    r = np.where(r > math.pi, r - 2 * math.pi, r)
    r = np.where(r <= -math.pi, r + 2 * math.pi, r)
    return r if r.ndim else float(r)


def sin_multiple(k, x):
    return np.sin(reduce_multiple(k, x))


def cos_multiple(k, x):
    return np.cos(reduce_multiple(k, x))


def _odd_series(x, first, sign):
    # sum_{m>=first} sign**(m-first) x**(2m+1)/(2m+1)!
    term = x ** (2 * first + 1) / math.factorial(2 * first + 1)
    total = term
    m = first
    while True:
        m += 1
        term = term * sign * x * x / ((2 * m) * (2 * m + 1))
        total = total + term
        if np.all(np.abs(term) <= 1e-18 * np.abs(total)):
            return total


def x_minus_sin(x):
    """``x - sin(x)`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.5
    out = np.where(small, 0.0, x - np.sin(x))
    if np.any(small):
        xs = np.where(small, x, 0.0)
        out = np.where(small, _odd_series(xs, 1, -1.0), out)
    return out if out.ndim else float(out)


def one_minus_cos(x):
    """``1 - cos(x)`` in the cancellation-free form ``2 sin(x/2)**2``."""
    s = np.sin(np.asarray(x, dtype=float) / 2)
    return 2 * s * s


def expm1_complex(x, y):
    """Real and imaginary parts of ``exp(x + iy) - 1`` to full relative accuracy."""
    re = math.expm1(x) * math.cos(y) - one_minus_cos(y)
    im = math.exp(x) * math.sin(y)
    return re, im


def richardson(values, hs):
    """Extrapolate ``values(h) = K + C h + D h^2`` to ``h = 0``.

    ``values`` are ordered coarse to fine. Returns ``(K, C, observed_order)``;
    the observed order is ``log2`` of the ratio of successive differences and is
    ``nan`` when those differences change sign or vanish.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(hs, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three step sizes")
    design = np.vstack([np.ones_like(h), h, h * h]).T
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    d1, d2 = v[-3] - v[-2], v[-2] - v[-1]
    ratio = h[-3] / h[-2]
    if d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2):
        order = float("nan")
    else:
        order = math.log(d1 / d2) / math.log(ratio)
    return float(coef[0]), float(coef[1]), order


def loglog_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
