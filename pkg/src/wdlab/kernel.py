"""Pointwise building blocks of a widely degenerate (p > 2) or widely
singular (1 < p < 2) diffusion operator and of its uniformly elliptic
regularization.

The operator's flux through a gradient value z is

    h_gamma(z, p - 1) = (|z| - lam)_+^(p-1) * z / |z|,

which vanishes on the whole ball {|z| <= lam}.  Everything in this module
is a pure function of a point value (a vector z, or a scalar radius t) and
a :class:`Params` record.  All operations broadcast over leading axes, so
entire sampled fields can be pushed through in one call.

Functions returning derived constants for the inequality suite live at the
bottom (:func:`calibrate_constants`); those constants are empirical, found
by dense grid maximization, and carry their provenance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate as _sciint

__all__ = [
    "Params",
    "h_gamma",
    "v_lambda",
    "g_lambda",
    "g_eps",
    "dg_eps",
    "d2g_eps",
    "envelopes",
    "ellipticity_ratio",
    "phi_weight",
    "phi_slope_constant",
    "sobolev_conjugate",
    "CalibratedConstants",
    "calibrate_constants",
    "HESSIAN_RADIUS_FLOOR",
]

# d2g_eps refuses radii below this floor: the Hessian genuinely fails to
# exist at z = 0 and callers must branch to the gradient-only path.
HESSIAN_RADIUS_FLOOR = 1e-12


@dataclass(frozen=True)
class Params:
    """Problem constants.

    n    -- spatial dimension (integer >= 2)
    p    -- growth exponent (> 1)
    lam  -- degeneracy radius (>= 0); the flux vanishes on {|z| <= lam}
    eps  -- regularization weight in [0, 1]

    ``p_star_cap`` resolves the Sobolev conjugate exponent when p >= n,
    where any value in (p, inf) is admissible; the default is 2p.
    """

    n: int = 2
    p: float = 3.0
    lam: float = 1.0
    eps: float = 0.0
    p_star_cap: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n}")
        if not (self.p > 1.0) or not math.isfinite(self.p):
            raise ValueError(f"growth exponent p must be > 1, got {self.p}")
        if not (self.lam >= 0.0) or not math.isfinite(self.lam):
            raise ValueError(f"degeneracy radius lam must be >= 0, got {self.lam}")
        if not (0.0 <= self.eps <= 1.0):
            raise ValueError(f"regularization eps must lie in [0, 1], got {self.eps}")
        if self.p_star_cap is not None and not (self.p_star_cap > self.p):
            raise ValueError("p_star_cap must exceed p")

    @property
    def p_prime(self) -> float:
        """Hoelder conjugate p/(p-1)."""
        return self.p / (self.p - 1.0)

    @property
    def datum_exponent(self) -> float:
        """Sub-quadratic datum exponent n p / (n(p-1) + 2 - p); equals 2
        whenever n = 2."""
        return self.n * self.p / (self.n * (self.p - 1.0) + 2.0 - self.p)


def _radius(xi):
    return np.sqrt(np.sum(xi * xi, axis=-1))


def _as_vectors(xi, name="xi"):
    arr = np.asarray(xi, dtype=float)
    if arr.ndim == 0:
        raise ValueError(f"{name} must have a trailing component axis")
    return arr


def h_gamma(xi, gamma, params: Params):
    """(|z| - lam)_+^gamma * z/|z|, extended by zero to {|z| <= lam}.

    Broadcasts over leading axes of ``xi``; the trailing axis holds the
    components.  Raises on non-finite input or gamma <= 0.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    arr = _as_vectors(xi)
    if not np.all(np.isfinite(arr)):
        raise ValueError("h_gamma: non-finite input vector")
    s = _radius(arr)
    above = s > params.lam
    safe_s = np.where(above, s, 1.0)
    base = np.where(above, s - params.lam, 1.0)
    scale = np.where(above, base ** float(gamma) / safe_s, 0.0)
    return scale[..., None] * arr


def _g_integrand(w, p, lam):
    q = 1.0 / (p - 1.0)
    return w ** (0.5 * p + q) / (w + lam) ** (1.0 + q)


def _g_closed_form_p2(t, lam):
    # antiderivative of w^2/(w+lam)^2 evaluated on [0, t]
    return t + lam - lam * lam / (t + lam) - 2.0 * lam * np.log1p(t / lam)


# 16-point Gauss-Legendre rule reused by the bulk evaluator.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _g_bulk(ts, p, lam):
    """Integral of the degeneracy-weighted power kernel from 0 to each t.

    Sorts the requested values and accumulates Gauss-Legendre panels
    between consecutive ones, with a geometrically graded opening so the
    algebraic corner at 0 never meets a wide panel.  Relative accuracy is
    far below the 1e-10 contract for the sample counts used here.
    """
    out = np.zeros_like(ts, dtype=float)
    pos = ts > 0.0
    if not np.any(pos):
        return out
    tvals, inverse = np.unique(ts[pos], return_inverse=True)
    t0 = tvals[0]
    opening = t0 * 0.5 ** np.arange(40, -1, -1, dtype=float)
    edges = np.concatenate(([0.0], opening, tvals[1:]))
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    panels = half * (_g_integrand(nodes, p, lam) @ _GL_W)
    cumulative = np.cumsum(panels)
    out[pos] = cumulative[40 + np.arange(tvals.size)][inverse]
    return out


def g_lambda(t, params: Params, method: str = "auto"):
    """Antiderivative encoding how the operator's modulus of ellipticity
    accumulates along the radius:

        integral_0^t  w^(p/2 + 1/(p-1)) / (w + lam)^(1 + 1/(p-1))  dw.

    Monotone non-decreasing, zero at zero.  ``method="auto"`` uses exact
    antiderivatives when lam = 0 (value (2/p) t^(p/2)) or p = 2, and
    adaptive quadrature otherwise; ``method="quad"`` forces quadrature so
    the analytic shortcuts can be cross-checked against it.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("g_lambda: t must be finite and >= 0")
    p, lam = params.p, params.lam
    if method == "auto":
        if lam == 0.0:
            return (2.0 / p) * arr ** (0.5 * p)
        if p == 2.0:
            return _g_closed_form_p2(arr, lam)
        if arr.ndim == 0:
            return g_lambda(arr, params, method="quad")
        return _g_bulk(arr, p, lam)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")

    def _one(tv):
        if tv == 0.0:
            return 0.0
        val, _ = _sciint.quad(
            _g_integrand, 0.0, tv, args=(p, lam), epsabs=0.0, epsrel=1e-12, limit=200
        )
        return val

    if arr.ndim == 0:
        return float(_one(float(arr)))
    return np.array([_one(float(tv)) for tv in arr.ravel()]).reshape(arr.shape)


def v_lambda(xi, params: Params):
    """Nonlinear gradient map whose first weak derivatives the uniform
    estimates control: g_lambda((|z| - lam)_+) * z/|z|, zero on
    {|z| <= lam}.  For lam = 0 this is (2/p) |z|^((p-2)/2) z.
    """
    arr = _as_vectors(xi)
    s = _radius(arr)
    above = s > params.lam
    safe_s = np.where(above, s, 1.0)
    g = g_lambda(np.where(above, s - params.lam, 0.0), params)
    scale = np.where(above, g / safe_s, 0.0)
    return scale[..., None] * arr


def g_eps(z, params: Params):
    """Scalar energy density of the regularized problem:

        (1/p) (|z| - lam)_+^p  +  (eps/p) (1 + |z|^2)^(p/2).

    Convex in z; bounded below by eps/p.
    """
    arr = _as_vectors(z, "z")
    s = _radius(arr)
    p, lam, eps = params.p, params.lam, params.eps
    core = np.maximum(s - lam, 0.0) ** p / p
    if eps == 0.0:
        return core
    return core + (eps / p) * (1.0 + s * s) ** (0.5 * p)


def dg_eps(z, params: Params):
    """Gradient of :func:`g_eps`:

        h_gamma(z, p-1) + eps (1 + |z|^2)^((p-2)/2) z.

    Total function; returns the zero vector on {|z| <= lam} when eps = 0.
    """
    arr = _as_vectors(z, "z")
    s = _radius(arr)
    p, lam, eps = params.p, params.lam, params.eps
    above = s > lam
    safe_s = np.where(above, s, 1.0)
    base = np.where(above, s - lam, 1.0)
    scale = np.where(above, base ** (p - 1.0) / safe_s, 0.0)
    if eps != 0.0:
        scale = scale + eps * (1.0 + s * s) ** (0.5 * (p - 2.0))
    return scale[..., None] * arr


def _h_and_slope(s, p, lam):
    """Radial profile h(s) = (s-lam)_+^(p-1)/s of the degenerate flux and
    its derivative, both zero on [0, lam]."""
    above = s > lam
    safe = np.where(above, s, 1.0)
    d = np.where(above, s - lam, 1.0)
    h = np.where(above, d ** (p - 1.0) / safe, 0.0)
    hp = np.where(above, ((p - 1.0) * d ** (p - 2.0) * safe - d ** (p - 1.0)) / safe**2, 0.0)
    return h, hp


def _a_and_slope(s, p):
    a = (1.0 + s * s) ** (0.5 * (p - 2.0))
    ap = (p - 2.0) * s * (1.0 + s * s) ** (0.5 * (p - 4.0))
    return a, ap


def d2g_eps(z, params: Params):
    """Hessian of :func:`g_eps`, shaped (..., n, n):

        [h(|z|) + eps a(|z|)] I + [h'(|z|) + eps a'(|z|)] z (x) z / |z|.

    Refuses |z| below ``HESSIAN_RADIUS_FLOOR``; the Hessian does not exist
    at the origin and callers must branch to the gradient-only path.
    """
    arr = _as_vectors(z, "z")
    s = _radius(arr)
    if np.any(s < HESSIAN_RADIUS_FLOOR):
        raise ValueError("d2g_eps: |z| below the radius floor; Hessian undefined at 0")
    p, lam, eps = params.p, params.lam, params.eps
    h, hp = _h_and_slope(s, p, lam)
    iso, aniso = h, hp
    if eps != 0.0:
        a, ap = _a_and_slope(s, p)
        iso = iso + eps * a
        aniso = aniso + eps * ap
    n = arr.shape[-1]
    eye = np.eye(n)
    outer = arr[..., :, None] * arr[..., None, :]
    return iso[..., None, None] * eye + (aniso / s)[..., None, None] * outer


def envelopes(s, params: Params):
    """Lower and upper ellipticity envelopes of the regularized Hessian's
    degenerate part, as functions of the radius s = |z|.

    Returns ``(lower, upper)``.  Both vanish on [0, lam]; above lam the
    super- and sub-quadratic regimes swap which envelope carries the
    factor (p - 1).  This is the single source of truth for that case
    split.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0):
        raise ValueError("envelopes: radius must be >= 0")
    p, lam = params.p, params.lam
    above = arr > lam
    d = np.where(above, arr - lam, 1.0)
    safe = np.where(above, arr, 1.0)
    ratio_pow = np.where(above, d ** (p - 1.0) / safe, 0.0)
    flat_pow = np.where(above, d ** (p - 2.0), 0.0)
    if p > 2.0:
        lower, upper = ratio_pow, (p - 1.0) * flat_pow
    else:
        lower, upper = (p - 1.0) * ratio_pow, flat_pow
    return lower, upper


def ellipticity_ratio(xi, params: Params):
    """Highest-to-lowest eigenvalue ratio of the degenerate flux Jacobian
    at xi, defined for |xi| > lam only.  Blows up like |xi|/(|xi| - lam)
    as |xi| approaches lam from above (up to a p-dependent factor), unless
    lam = 0 where it is the constant max{1, p-1}/min{1, p-1} * (p-1)...
    more precisely the envelope ratio, independent of |xi|.
    """
    arr = _as_vectors(xi)
    s = _radius(arr)
    if np.any(s <= params.lam):
        raise ValueError("ellipticity_ratio: |xi| must exceed lam")
    lower, upper = envelopes(s, params)
    return upper / lower


def phi_slope_constant(params: Params) -> float:
    """Constant c such that phi' (t) * t <= c * phi(t): (p+1)/(p-1)."""
    return (params.p + 1.0) / (params.p - 1.0)


def phi_weight(t, params: Params):
    """Interior weight (t/(t + lam))^(1 + 2/(p-1)) and its derivative.

    Increasing from 0 to 1 on [0, inf); for lam = 0 the weight is
    identically one (derivative zero).  Returns ``(value, derivative)``.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("phi_weight: t must be finite and >= 0")
    p, lam = params.p, params.lam
    if lam == 0.0:
        one = np.ones_like(arr)
        return one, np.zeros_like(arr)
    m = 1.0 + 2.0 / (p - 1.0)
    value = (arr / (arr + lam)) ** m
    deriv = m * lam * arr ** (m - 1.0) / (arr + lam) ** (m + 1.0)
    return value, deriv


def sobolev_conjugate(params: Params) -> float:
    """Sobolev conjugate exponent: n p / (n - p) for p < n, else the
    configured cap (default 2p)."""
    n, p = params.n, params.p
    if p < n:
        return n * p / (n - p)
    return params.p_star_cap if params.p_star_cap is not None else 2.0 * p


# ---------------------------------------------------------------------------
# Calibrated constants for the non-explicit inequalities.
#
# Three of the algebraic estimates hold with constants the analysis only
# proves to exist.  All three ratios depend on a pair of vectors through
# (|xi|, |eta|, angle) alone, and are invariant under joint scaling of
# (xi, eta, lam), so a dense grid over that 3-parameter domain at lam in
# {0, 1} calibrates them for every lam >= 0 and every dimension n >= 2.
# ---------------------------------------------------------------------------


def _pair_quantities(a, b, cos_t, p, lam):
    """Closed-form pair statistics on |xi| = a, |eta| = b, angle t.

    Returns (dist_sq, vp_diff_sq, hp2_diff_sq, pairing):
      dist_sq     |xi - eta|^2
      vp_diff_sq  | |xi|^((p-2)/2) xi - |eta|^((p-2)/2) eta |^2
      hp2_diff_sq | h_gamma(xi, p/2) - h_gamma(eta, p/2) |^2
      pairing     < h_gamma(xi, p-1) - h_gamma(eta, p-1), xi - eta >
    """
    dist_sq = a * a + b * b - 2.0 * a * b * cos_t
    vp_diff_sq = a**p + b**p - 2.0 * (a * b) ** (0.5 * p) * cos_t
    ga = np.maximum(a - lam, 0.0) ** (0.5 * p)
    gb = np.maximum(b - lam, 0.0) ** (0.5 * p)
    hp2_diff_sq = ga * ga + gb * gb - 2.0 * ga * gb * cos_t
    fa = np.where(a > lam, np.maximum(a - lam, 0.0) ** (p - 1.0), 0.0)
    fb = np.where(b > lam, np.maximum(b - lam, 0.0) ** (p - 1.0), 0.0)
    pairing = fa * a + fb * b - (fa * b + fb * a) * cos_t
    return dist_sq, vp_diff_sq, hp2_diff_sq, pairing


@dataclass(frozen=True)
class CalibratedConstants:
    """Empirical constants for the inequalities whose proofs do not name
    them, found by dense grid extremization.  ``margin`` is the safety
    factor applied when asserting (upper constants are inflated by it,
    lower ones deflated)."""

    n: int
    p: float
    lind_upper: float | None  # |xi-eta|^p <= C |Vp xi - Vp eta|^2   (p > 2)
    power_diff_lower: float  # two-sided comparison of |Vp xi - Vp eta|^2
    power_diff_upper: float  # ... with (|xi|^2+|eta|^2)^((p-2)/2) |xi-eta|^2
    monotonicity_lower: float  # pairing >= c |H_{p/2} xi - H_{p/2} eta|^2
    v_map_chain: float  # |V xi - V eta|^2 <= C * pairing, assembled below
    margin: float
    provenance: str

    def lind_assert(self) -> float:
        if self.lind_upper is None:
            raise ValueError("power-gap comparison is calibrated for p > 2 only")
        return self.lind_upper * (1.0 + self.margin)

    def power_diff_assert(self) -> tuple[float, float]:
        return (
            self.power_diff_lower * (1.0 - self.margin),
            self.power_diff_upper * (1.0 + self.margin),
        )

    def v_map_assert(self) -> float:
        return self.v_map_chain * (1.0 + self.margin)


def _angle_grid(k):
    # cluster near 0 and pi where the extremal pairs live
    u = np.linspace(0.0, 1.0, k)
    return np.pi * (0.5 - 0.5 * np.cos(np.pi * u))


def _radius_grid(k, lam):
    lin = np.linspace(0.0, 4.0 + 2.0 * lam, k)
    logs = np.geomspace(1e-4, 50.0, k)
    shells = lam + lam * 2.0 ** -np.arange(1.0, 30.0) if lam > 0 else np.array([])
    return np.unique(np.concatenate([lin, logs + lam, shells, [lam]]))


def calibrate_constants(n: int, p: float, margin: float = 0.10) -> CalibratedConstants:
    """Grid-extremize the pair ratios that carry unnamed constants.

    The ratios are functions of (|xi|, |eta|, angle, lam) only and are
    jointly scale invariant in (xi, eta, lam), so lam in {0, 1} with radii
    spanning several decades covers the whole parameter space.  Results
    are cached per (n, p).
    """
    return _calibrate_cached(int(n), float(p), float(margin))


@lru_cache(maxsize=None)
def _calibrate_cached(n: int, p: float, margin: float) -> CalibratedConstants:
    lind_max = 0.0 if p > 2.0 else None
    ratio23_min, ratio23_max = np.inf, 0.0
    mono_min = np.inf
    for lam in (0.0, 1.0):
        a = _radius_grid(120, lam)
        b = _radius_grid(121, lam)
        t = _angle_grid(96)
        A = a[:, None, None]
        B = b[None, :, None]
        C = np.cos(t)[None, None, :]
        dist_sq, vp_sq, hp2_sq, pairing = _pair_quantities(A, B, C, p, lam)
        tiny = 1e-300
        if lam == 0.0:
            # two-sided power-difference comparison (lam-free statement)
            with np.errstate(divide="ignore", invalid="ignore"):
                base = (A * A + B * B) ** (0.5 * (p - 2.0))
                ok = (dist_sq > 1e-12) & (base > tiny) & np.isfinite(base)
                r = np.where(ok, vp_sq / np.where(ok, dist_sq * base, 1.0), np.nan)
            ratio23_min = np.nanmin(np.where(ok, r, np.nan))
            ratio23_max = np.nanmax(np.where(ok, r, np.nan))
            if p > 2.0:
                ok2 = vp_sq > 1e-280
                lr = np.where(ok2, dist_sq ** (0.5 * p) / np.where(ok2, vp_sq, 1.0), np.nan)
                lind_max = float(np.nanmax(lr))
        ok3 = hp2_sq > 1e-280
        mr = np.where(ok3, pairing / np.where(ok3, hp2_sq, 1.0), np.nan)
        mono_min = min(mono_min, float(np.nanmin(np.where(ok3, mr, np.nan))))
    # chain constant: the proof pays 8/p^2 on the aligned-difference term
    # (via the monotonicity constant just calibrated) and 64/p^2 * 2^(p+1)
    # / min{1, p-1} on the cross term with its explicit constant.
    c_bra = mono_min * (1.0 - margin)
    v_chain = (8.0 / p**2) / c_bra + (64.0 / p**2) * 2.0 ** (p + 1.0) / min(1.0, p - 1.0)
    prov = (
        f"grid extremization: radii lin/log to 50 with degeneracy shells, "
        f"96 cosine-clustered angles, lam in {{0, 1}}, n={n}, p={p}, "
        f"margin={margin}"
    )
    return CalibratedConstants(
        n=n,
        p=p,
        lind_upper=lind_max,
        power_diff_lower=float(ratio23_min),
        power_diff_upper=float(ratio23_max),
        monotonicity_lower=float(mono_min),
        v_map_chain=float(v_chain),
        margin=margin,
        provenance=prov,
    )
