"""Site prior families and their Gaussian-tilted statistics.

Each site carries a prior ``P(x; theta)`` and, during inference, is tilted by a
Gaussian factor coming from its neighbours::

    Q(x) = P(x; theta) * exp(B*x - A*x**2/2) / Z_Q(B, A; theta)

Because priors are normalized, ``Z_Q(0, 0) == 1``.  The first two moments of
``Q`` are the closures ``f_a`` and ``f_c`` that drive the mean-field
iteration, and derivatives of ``ln Z_Q`` give the learning gradients.

Three families are supported, all with bounded support:

* ``binary``: ``x in {0, 1}``, ``P(x) = exp(U*x) / (1 + exp(U))``.
* ``tgauss``: Gaussian ``exp(-V*x**2/2 + U*x)`` truncated to ``[alpha, omega]``.
  ``V`` may be zero or negative; truncation keeps the density proper.
* ``tgb``: ``(1 - rho) * delta(x) + rho * tgauss(x)``, a point mass at zero
  mixed with a truncated Gaussian whose interval contains zero.

All functions broadcast over numpy arrays: a :class:`UnitParams` usually
describes a whole layer of sites of one family.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import InputError, NumericalError

__all__ = [
    "Family",
    "UnitParams",
    "TiltedMoments",
    "tilted_moments",
    "conditional_mean",
    "prior_moments",
    "log_prior",
    "grad_log_prior",
    "grad_log_z",
    "stable_erf_ratio",
    "in_support",
]


class Family(str, enum.Enum):
    BINARY = "binary"
    TRUNC_GAUSS = "tgauss"
    TRUNC_GAUSS_BERNOULLI = "tgb"


_FREE_PARAMS = {
    Family.BINARY: ("U",),
    Family.TRUNC_GAUSS: ("U", "V"),
    Family.TRUNC_GAUSS_BERNOULLI: ("rho", "U", "V"),
}

_REQUIRED = {
    Family.BINARY: ("U",),
    Family.TRUNC_GAUSS: ("U", "V", "alpha", "omega"),
    Family.TRUNC_GAUSS_BERNOULLI: ("rho", "U", "V", "alpha", "omega"),
}

_ARRAY_FIELDS = ("U", "V", "alpha", "omega", "rho")


@dataclass(frozen=True, eq=False)
class UnitParams:
    """Parameters of one prior family for a site or a layer of sites.

    Array fields broadcast against each other and are stored with a common
    shape.  Fields that do not belong to ``family`` are ``None``.
    """

    family: Family
    U: np.ndarray
    V: np.ndarray | None = None
    alpha: np.ndarray | None = None
    omega: np.ndarray | None = None
    rho: np.ndarray | None = None

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        needed = _REQUIRED[family]
        for name in _ARRAY_FIELDS:
            value = getattr(self, name)
            if name in needed:
                if value is None:
                    raise InputError(f"{family.value} units require parameter {name!r}")
            elif value is not None:
                raise InputError(f"{family.value} units take no parameter {name!r}")
        arrays = np.broadcast_arrays(*(np.asarray(getattr(self, n), dtype=float) for n in needed))
        for name, arr in zip(needed, arrays):
            arr = np.array(arr, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._validate()

    def _validate(self):
        for name in self.present_names:
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"parameter {name!r} must be finite")
        if self.family is Family.BINARY:
            return
        if np.any(self.alpha >= self.omega):
            raise InputError("truncation bounds must satisfy alpha < omega")
        if self.family is Family.TRUNC_GAUSS_BERNOULLI:
            if np.any((self.rho <= 0) | (self.rho >= 1)):
                raise InputError("rho must lie strictly inside (0, 1)")
            if np.any((self.alpha > 0) | (self.omega < 0)):
                raise InputError("tgb units need 0 inside [alpha, omega]")

    # constructors -----------------------------------------------------------

    @classmethod
    def binary(cls, U):
        return cls(Family.BINARY, U=U)

    @classmethod
    def trunc_gauss(cls, U, V, alpha=0.0, omega=1.0):
        return cls(Family.TRUNC_GAUSS, U=U, V=V, alpha=alpha, omega=omega)

    @classmethod
    def tgb(cls, rho, U, V, alpha=0.0, omega=1.0):
        return cls(Family.TRUNC_GAUSS_BERNOULLI, U=U, V=V, alpha=alpha, omega=omega, rho=rho)

    @classmethod
    def neutral(cls, family, n, alpha=0.0, omega=1.0):
        """Default hidden-layer parameters: zero fields, flat truncated density."""
        family = Family(family)
        zeros = np.zeros(n)
        if family is Family.BINARY:
            return cls.binary(zeros)
        if family is Family.TRUNC_GAUSS:
            return cls.trunc_gauss(zeros, zeros, alpha, omega)
        return cls.tgb(np.full(n, 0.5), zeros, zeros, alpha, omega)

    # accessors --------------------------------------------------------------

    @property
    def present_names(self):
        return _REQUIRED[self.family]

    @property
    def free_names(self):
        """Names of the learnable parameters (truncation bounds stay fixed)."""
        return _FREE_PARAMS[self.family]

    @property
    def shape(self):
        return self.U.shape

    @property
    def size(self):
        return self.U.size

    def __len__(self):
        return self.shape[0] if self.shape else 1

    def site(self, i):
        return replace(self, **{n: getattr(self, n)[i] for n in self.present_names})

    def with_values(self, **values):
        return replace(self, **values)

    def arrays(self):
        return {n: getattr(self, n) for n in self.present_names}

    def equals(self, other):
        if not isinstance(other, UnitParams) or other.family is not self.family:
            return False
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in self.present_names)

    def __repr__(self):
        return f"UnitParams({self.family.value}, shape={self.shape})"


class TiltedMoments(NamedTuple):
    log_z: np.ndarray
    a: np.ndarray
    c: np.ndarray
    p_nonzero: np.ndarray


# ---------------------------------------------------------------------------
# integrals of exp(-P x^2 / 2 + L x) over a bounded interval
# ---------------------------------------------------------------------------

# A piece switches to the perturbative expansion around the exponential tilt
# when its dimensionless curvature |P| * scale**2 is below this value.
_SERIES_EPS = 1e-3
_SERIES_TERMS = 12
_J_TERMS = 26
_TINY = np.finfo(float).tiny


def _piece_series(kappa, P, ell, short):
    """Expansion of the Gaussian factor in powers of P, in scaled units."""
    s = np.where(short, ell, 1.0 / np.where(short, 1.0, kappa))
    kp = kappa * s
    lp = ell / s
    pp = P * s * s
    n_orders = 2 * _SERIES_TERMS + 1
    orders = np.arange(n_orders)
    J = np.empty(kp.shape + (n_orders,))
    if np.any(short):
        # int_0^1 t^m exp(-k t) dt with k <= 1, by the alternating series in k
        k = kp[short][:, None, None]
        j = np.arange(_J_TERMS)
        coef = (-k) ** j / special.factorial(j)
        J[short] = np.sum(coef / (orders[None, :, None] + j[None, None, :] + 1.0), axis=-1)
    long_ = ~short
    if np.any(long_):
        # m! * P(m+1, l): int_0^l t^m exp(-t) dt
        x = lp[long_][:, None]
        J[long_] = special.factorial(orders) * special.gammainc(orders + 1.0, x)
    k = np.arange(_SERIES_TERMS)
    ck = (-0.5 * pp[:, None]) ** k / special.factorial(k)
    I0 = np.sum(ck * J[:, 0:-1:2], axis=-1)
    I1 = np.sum(ck * J[:, 1::2], axis=-1)
    I2 = np.sum(ck * J[:, 2::2], axis=-1)
    mean_t = I1 / I0
    var_t = np.maximum(I2 / I0 - mean_t * mean_t, 0.0)
    return np.log(s) + np.log(I0), s * mean_t, s * s * var_t


def _piece_closed(kappa, P, ell):
    """Closed form via erfcx (P > 0) or the Dawson function (P < 0)."""
    phi_end = -ell * (kappa + 0.5 * P * ell)
    e_end = np.exp(phi_end)
    out_log = np.empty_like(P)
    pos = P > 0
    if np.any(pos):
        p = P[pos]
        r = np.sqrt(2.0 * p)
        z0 = kappa[pos] / r
        z1 = (kappa[pos] + p * ell[pos]) / r
        br = special.erfcx(z0) - e_end[pos] * special.erfcx(z1)
        out_log[pos] = 0.5 * np.log(np.pi / (2.0 * p)) + np.log(br)
    neg = ~pos
    if np.any(neg):
        q = -P[neg]
        r = np.sqrt(2.0 * q)
        y0 = kappa[neg] / r
        y1 = np.maximum(kappa[neg] - q * ell[neg], 0.0) / r
        br = special.dawsn(y0) - e_end[neg] * special.dawsn(y1)
        out_log[neg] = 0.5 * np.log(2.0 / q) + np.log(br)
    inv_i0 = np.exp(-out_log)
    R = -np.expm1(phi_end) * inv_i0
    T = ell * e_end * inv_i0
    m1 = (R - kappa) / P
    var = (1.0 - T - m1 * R) / P
    np.clip(m1, 0.0, ell, out=m1)
    var = np.clip(var, 0.0, 0.25 * ell * ell)
    return out_log, m1, var


def _piece(kappa, P, ell):
    """``ln int_0^ell exp(-kappa u - P u^2/2) du`` plus mean and variance of u.

    The exponent must be non-increasing on the piece (``kappa >= 0`` and
    ``kappa + P*ell >= 0``); callers split intervals to guarantee this.
    """
    kappa = np.maximum(kappa, 0.0)
    short = kappa * ell <= 1.0
    scale = np.where(short, ell, 1.0 / np.maximum(kappa, _TINY))
    series = np.abs(P) * scale * scale < _SERIES_EPS
    log_i = np.empty_like(P)
    mean = np.empty_like(P)
    var = np.empty_like(P)
    if np.any(series):
        log_i[series], mean[series], var[series] = _piece_series(
            kappa[series], P[series], ell[series], short[series]
        )
    closed = ~series
    if np.any(closed):
        log_i[closed], mean[closed], var[closed] = _piece_closed(kappa[closed], P[closed], ell[closed])
    return log_i, mean, var


def _interval_moments(P, L, lo, hi):
    """Log-integral, mean and variance of ``exp(-P x^2/2 + L x)`` on ``[lo, hi]``.

    The interval is split at the stationary point of the exponent when it lies
    inside, so every piece is integrated away from its own maximum.
    """
    P, L, lo, hi = (np.array(v, dtype=float) for v in np.broadcast_arrays(P, L, lo, hi))
    shape = P.shape
    P, L, lo, hi = P.ravel(), L.ravel(), lo.ravel(), hi.ravel()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xs = np.where(P != 0, L / np.where(P != 0, P, 1.0), 0.0)
    inside = (P != 0) & (xs > lo) & (xs < hi)
    top_hi = ((P > 0) & (xs >= hi)) | ((P < 0) & (xs <= lo)) | ((P == 0) & (L >= 0))

    # first piece: the whole interval, the lower half for an interior mode,
    # or the run from lo up to an interior minimum
    anchor = np.where(top_hi, hi, lo)
    direction = np.where(top_hi, -1.0, 1.0)
    kappa = np.where(top_hi, L - P * hi, P * lo - L)
    ell = hi - lo
    peak = inside & (P > 0)
    anchor = np.where(peak, xs, anchor)
    direction = np.where(peak, -1.0, direction)
    kappa = np.where(peak, 0.0, kappa)
    ell = np.where(inside, xs - lo, ell)

    log_i, m_u, v_u = _piece(kappa, P, ell)
    log_w = -0.5 * P * anchor * anchor + L * anchor + log_i
    mean = anchor + direction * m_u
    var = v_u

    if np.any(inside):
        idx = np.nonzero(inside)[0]
        Pi, Li, hi_i, xs_i = P[idx], L[idx], hi[idx], xs[idx]
        pk = Pi > 0
        anchor2 = np.where(pk, xs_i, hi_i)
        dir2 = np.where(pk, 1.0, -1.0)
        kappa2 = np.where(pk, 0.0, Li - Pi * hi_i)
        ell2 = hi_i - xs_i
        log_i2, m_u2, v_u2 = _piece(kappa2, Pi, ell2)
        log_w2 = -0.5 * Pi * anchor2 * anchor2 + Li * anchor2 + log_i2
        mean2 = anchor2 + dir2 * m_u2
        log_w1 = log_w[idx]
        total = np.logaddexp(log_w1, log_w2)
        w1 = np.exp(log_w1 - total)
        w2 = np.exp(log_w2 - total)
        mean1 = mean[idx]
        mix_mean = w1 * mean1 + w2 * mean2
        mix_var = w1 * (var[idx] + (mean1 - mix_mean) ** 2) + w2 * (v_u2 + (mean2 - mix_mean) ** 2)
        log_w[idx] = total
        mean[idx] = mix_mean
        var[idx] = mix_var

    mean = np.clip(mean, lo, hi)
    return log_w.reshape(shape), mean.reshape(shape), var.reshape(shape)


# ---------------------------------------------------------------------------
# public moment functions
# ---------------------------------------------------------------------------


def _check_fields(B, A):
    B = np.asarray(B, dtype=float)
    A = np.asarray(A, dtype=float)
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(A))):
        raise InputError("cavity fields B and A must be finite")
    return B, A


def _raise_if_nonfinite(params, B, A, *outputs):
    bad = np.zeros(np.broadcast(*outputs).shape, dtype=bool)
    for out in outputs:
        bad |= ~np.isfinite(out)
    if not np.any(bad):
        return
    idx = tuple(int(i[0]) for i in np.nonzero(bad))
    Bb, Ab = np.broadcast_to(B, bad.shape), np.broadcast_to(A, bad.shape)
    site = {n: float(np.broadcast_to(getattr(params, n), bad.shape)[idx]) for n in params.present_names}
    raise NumericalError(
        "tilted moments overflowed",
        index=idx,
        B=float(Bb[idx]),
        A=float(Ab[idx]),
        family=params.family.value,
        params=site,
    )


def _tg_parts(params, B, A):
    """Tilted and prior statistics of the truncated-Gaussian component."""
    log_num, a_tg, c_tg = _interval_moments(A + params.V, B + params.U, params.alpha, params.omega)
    log_den, a0, c0 = _interval_moments(params.V, params.U, params.alpha, params.omega)
    return log_num - log_den, a_tg, c_tg, a0, c0


def tilted_moments(params: UnitParams, B=0.0, A=0.0) -> TiltedMoments:
    """``ln Z_Q``, mean and variance of the prior tilted by ``exp(B x - A x^2/2)``.

    ``p_nonzero`` is ``P_Q[x != 0]``: the mean for binary units, one for
    truncated Gaussians, the slab weight for ``tgb`` units.
    """
    B, A = _check_fields(B, A)
    fam = params.family
    if fam is Family.BINARY:
        h = params.U + B - 0.5 * A
        log_z = np.logaddexp(0.0, h) - np.logaddexp(0.0, params.U)
        a = special.expit(h)
        c = a * special.expit(-h)
        result = TiltedMoments(log_z, a, c, a)
    elif fam is Family.TRUNC_GAUSS:
        log_z, a, c, _, _ = _tg_parts(params, B, A)
        result = TiltedMoments(log_z, a, c, np.ones_like(a))
    else:
        log_ztg, a_tg, c_tg, _, _ = _tg_parts(params, B, A)
        log_slab = np.log(params.rho) + log_ztg
        log_z = np.logaddexp(np.log1p(-params.rho), log_slab)
        p_nz = np.exp(log_slab - log_z)
        a = p_nz * a_tg
        c = p_nz * c_tg + p_nz * (1.0 - p_nz) * a_tg * a_tg
        result = TiltedMoments(log_z, a, c, p_nz)
    _raise_if_nonfinite(params, B, A, result.log_z, result.a, result.c)
    return result


def prior_moments(params: UnitParams) -> TiltedMoments:
    """Moments of the untilted prior (``log_z`` is identically zero)."""
    return tilted_moments(params, 0.0, 0.0)


def conditional_mean(params: UnitParams, B) -> np.ndarray:
    """``f(B; theta)``: mean of a site whose only input is the linear field ``B``."""
    return tilted_moments(params, B, 0.0).a


# ---------------------------------------------------------------------------
# log-prior and gradients
# ---------------------------------------------------------------------------


def in_support(params: UnitParams, x, relaxed=False) -> np.ndarray:
    """Elementwise support test.

    With ``relaxed=True`` binary sites accept any value in ``[0, 1]``, which is
    what mean-field propagated activations look like.
    """
    x = np.asarray(x, dtype=float)
    if params.family is Family.BINARY:
        if relaxed:
            return (x >= 0) & (x <= 1)
        return (x == 0) | (x == 1)
    in_interval = (x >= params.alpha) & (x <= params.omega)
    if params.family is Family.TRUNC_GAUSS_BERNOULLI:
        return in_interval | (x == 0)
    return in_interval


def log_prior(params: UnitParams, x) -> np.ndarray:
    """``ln P(x; theta)``; ``-inf`` outside the support.

    For ``tgb`` units ``x == 0`` returns the log point mass ``ln(1 - rho)``
    and non-zero values the log slab density ``ln rho + ln TG(x)``.
    """
    x = np.asarray(x, dtype=float)
    fam = params.family
    if fam is Family.BINARY:
        val = params.U * x - np.logaddexp(0.0, params.U)
        return np.where(in_support(params, x), val, -np.inf)
    log_norm = _interval_moments(params.V, params.U, params.alpha, params.omega)[0]
    gauss = -0.5 * params.V * x * x + params.U * x - log_norm
    inside = (x >= params.alpha) & (x <= params.omega)
    if fam is Family.TRUNC_GAUSS:
        return np.where(inside, gauss, -np.inf)
    slab = np.log(params.rho) + gauss
    out = np.where(inside, slab, -np.inf)
    return np.where(x == 0, np.log1p(-params.rho), out)


def _require_support(params, x, relaxed):
    if not np.all(in_support(params, x, relaxed=relaxed)):
        raise InputError(f"values outside the support of {params.family.value} units")


def grad_log_prior(params: UnitParams, x) -> dict:
    """``d ln P(x; theta) / d theta`` for every learnable parameter.

    Binary units accept fractional ``x in [0, 1]`` (the gradient is linear in
    ``x``); other families require ``x`` in the support.
    """
    x = np.asarray(x, dtype=float)
    fam = params.family
    _require_support(params, x, relaxed=fam is Family.BINARY)
    if fam is Family.BINARY:
        return {"U": x - special.expit(params.U)}
    _, a0, c0 = _interval_moments(params.V, params.U, params.alpha, params.omega)
    s0 = c0 + a0 * a0
    if fam is Family.TRUNC_GAUSS:
        return {"U": x - a0, "V": -0.5 * (x * x - s0)}
    nz = (x != 0).astype(float)
    rho = params.rho
    return {
        "rho": (nz - rho) / (rho * (1.0 - rho)),
        "U": nz * (x - a0),
        "V": -0.5 * nz * (x * x - s0),
    }


def grad_log_z(params: UnitParams, B=0.0, A=0.0) -> dict:
    """``d ln Z_Q(B, A; theta) / d theta`` at fixed cavity fields."""
    B, A = _check_fields(B, A)
    fam = params.family
    if fam is Family.BINARY:
        h = params.U + B - 0.5 * A
        return {"U": special.expit(h) - special.expit(params.U)}
    log_ztg, a_tg, c_tg, a0, c0 = _tg_parts(params, B, A)
    dU = a_tg - a0
    dV = -0.5 * (c_tg + a_tg * a_tg - c0 - a0 * a0)
    if fam is Family.TRUNC_GAUSS:
        return {"U": dU, "V": dV}
    rho = params.rho
    log_slab = np.log(rho) + log_ztg
    p_nz = np.exp(log_slab - np.logaddexp(np.log1p(-rho), log_slab))
    return {"rho": (p_nz - rho) / (rho * (1.0 - rho)), "U": p_nz * dU, "V": p_nz * dV}


# ---------------------------------------------------------------------------
# the erf / erfi ratio of the closed-form truncated-Gaussian mean
# ---------------------------------------------------------------------------

# below this relative size the erf difference has lost too many digits
_DIFF_RTOL = 1e-4
_ASYMPTOTIC_MIN = 8.0


def _double_factorials(n_terms):
    out = [1.0]
    for k in range(1, n_terms):
        out.append(out[-1] * (2 * k - 1))
    return out


def _erfcx_series(z, n_terms):
    """Asymptotic expansion of ``erfcx`` about infinity, ``n_terms`` terms."""
    inv = 1.0 / (2.0 * z * z)
    total = sum((-inv) ** k * dfac for k, dfac in enumerate(_double_factorials(n_terms)))
    return total / (z * math.sqrt(math.pi))


def _dawson_series(z, n_terms):
    inv = 1.0 / (2.0 * z * z)
    total = sum(inv**k * dfac for k, dfac in enumerate(_double_factorials(n_terms)))
    return total / (2.0 * z)


def _erfcx(z, n_terms):
    return _erfcx_series(z, n_terms) if z >= _ASYMPTOTIC_MIN else float(special.erfcx(z))


def _dawson(z, n_terms):
    if abs(z) >= _ASYMPTOTIC_MIN:
        return _dawson_series(z, n_terms)
    return float(special.dawsn(z))


def _narrow_mean_ratio(a, b, curvature):
    """Ratio as sqrt(pi) times the exact mean of exp(-curvature t^2/2) on [a, b]."""
    mean = _interval_moments(np.array([curvature]), np.array([0.0]), np.array([a]), np.array([b]))[1][0]
    return math.copysign(math.sqrt(math.pi), curvature) * mean


def _ratio_plus(a, b, n_terms):
    if a > b:
        a, b = b, a
    if a == b:
        return math.sqrt(math.pi) * a
    d = math.erf(b) - math.erf(a)
    scale = max(abs(math.erf(a)), abs(math.erf(b)))
    if abs(d) > _DIFF_RTOL * scale:
        return (math.exp(-a * a) - math.exp(-b * b)) / d
    if a + b < 0:
        return -_ratio_plus(-b, -a, n_terms)
    if (b - a) * (a + b) < 1.0:
        return _narrow_mean_ratio(a, b, 2.0)
    shrink = math.exp(a * a - b * b)
    num = -math.expm1(a * a - b * b)
    den = _erfcx(a, n_terms) - shrink * _erfcx(b, n_terms)
    return num / den


def _ratio_minus(a, b, n_terms):
    if a > b:
        a, b = b, a
    if a == b:
        return -math.sqrt(math.pi) * a
    top = max(a * a, b * b)
    ea, eb = math.exp(a * a - top), math.exp(b * b - top)
    terms = (eb * _dawson(b, n_terms), ea * _dawson(a, n_terms))
    den = 2.0 / math.sqrt(math.pi) * (terms[0] - terms[1])
    scale = 2.0 / math.sqrt(math.pi) * max(abs(terms[0]), abs(terms[1]))
    if abs(den) <= _DIFF_RTOL * scale:
        return _narrow_mean_ratio(a, b, -2.0)
    return (ea - eb) / den


def stable_erf_ratio(h_alpha, h_omega, branch=1, n_terms=11):
    """Ratio entering the closed-form mean of a truncated Gaussian.

    ``branch=+1``: ``(exp(-h_a^2) - exp(-h_w^2)) / (erf(h_w) - erf(h_a))``.
    ``branch=-1``: ``(exp(h_a^2) - exp(h_w^2)) / (erfi(h_w) - erfi(h_a))``.

    When the denominator cancels, narrow intervals fall back to the exact
    interval mean, and wide intervals deep in one tail rewrite the erf
    difference with scaled complementary functions.  Beyond ``|h| = 8`` those
    use their ``n_terms``-term expansion about infinity.  erfi is always
    evaluated through the Dawson function, so the result stays finite for any
    finite input.
    """
    fn = _ratio_plus if branch > 0 else _ratio_minus
    ha, hw = np.broadcast_arrays(np.asarray(h_alpha, dtype=float), np.asarray(h_omega, dtype=float))
    if not (np.all(np.isfinite(ha)) and np.all(np.isfinite(hw))):
        raise InputError("h values must be finite")
    out = np.array([fn(float(x), float(y), n_terms) for x, y in zip(ha.ravel(), hw.ravel())])
    return out.reshape(ha.shape) if ha.shape else float(out[0])
