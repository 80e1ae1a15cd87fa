"""Difference-quotient machinery and smoothness seminorms on sampled
fields.

Two families live here.  The first is the finite-difference criterion for
first-order Sobolev membership: uniform L^2 control of shifted differences
over a ball, divided by the shift length.  The second is the difference
characterization of fractional smoothness: an integral over shift vectors
h of the shifted-difference L^p norm, weighted by |h|^(-s q - n), together
with the double-integral form it coincides with when the two integrability
indices agree.

Fields enter either as nodal scalars or as cell-centered vectors; both are
uniform lattices and are treated alike.  Shifted differences are only ever
evaluated where both endpoints carry samples, matching the inner-region
hypotheses of the estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, VectorField

__all__ = [
    "ShiftStencil",
    "SeminormReport",
    "tau_shift",
    "quotient_l2",
    "besov_seminorm",
    "gagliardo_seminorm",
    "nikolskii_check",
    "NikolskiiReport",
    "report_to_json",
    "report_rows_to_csv",
]

GAGLIARDO_NODE_GUARD = 128 * 128  # the double sum is quadratic in this


@dataclass(frozen=True)
class ShiftStencil:
    """Lattice shift: ``steps`` spacings along ``axis`` (0 or 1)."""

    axis: int
    steps: int

    def __post_init__(self):
        if self.axis not in (0, 1):
            raise ValueError("axis must be 0 or 1")
        if self.steps == 0:
            raise ValueError("steps must be nonzero")


@dataclass(frozen=True)
class SeminormReport:
    """One seminorm evaluation: indices, value, and the shifts used."""

    s: float
    p: float
    q: float
    value: float
    h_set: tuple[float, ...]
    per_h: tuple[float, ...] = field(default_factory=tuple)
    attaining_h: float | None = None

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("seminorm value must be >= 0")


def _samples(f):
    """(values (m, m, k), spacing, axis coordinates) for either field kind."""
    if isinstance(f, ScalarField):
        return f.values[..., None], f.grid.spacing, f.grid.node_axis()
    if isinstance(f, VectorField):
        return f.values, f.grid.spacing, f.grid.center_axis()
    raise TypeError("expected a ScalarField or VectorField")


def tau_shift(f, stencil: ShiftStencil) -> np.ndarray:
    """Shifted difference F(x + h e_j) - F(x) on the window where both
    points carry samples.

    Returns a plain array, shortened by |steps| along the shift axis; for
    positive steps the window starts at the low end of that axis, for
    negative steps at the high end.  Linear in F; zero for constants.
    """
    vals, spacing, ax = _samples(f)
    k = stencil.steps
    m = vals.shape[stencil.axis]
    if abs(k) >= m or abs(k) * spacing >= ax[-1] - ax[0] + spacing:
        raise ValueError("shift exceeds the sampled domain")
    sl_fw = [slice(None)] * vals.ndim
    sl_bk = [slice(None)] * vals.ndim
    if k > 0:
        sl_fw[stencil.axis] = slice(k, None)
        sl_bk[stencil.axis] = slice(None, -k)
    else:
        sl_fw[stencil.axis] = slice(None, k)
        sl_bk[stencil.axis] = slice(-k, None)
    out = vals[tuple(sl_fw)] - vals[tuple(sl_bk)]
    if isinstance(f, ScalarField):
        return out[..., 0]
    return out


def _window_coords(ax, axis, k):
    """Coordinates of the unshifted points kept by :func:`tau_shift`."""
    kept = ax[:-k] if k > 0 else ax[-k:]
    other = ax
    if axis == 0:
        return np.meshgrid(kept, other, indexing="ij")
    return np.meshgrid(other, kept, indexing="ij")


def quotient_l2(F, r_inner: float, h_set) -> SeminormReport:
    """Difference-quotient bound for first-order L^2 differentiability on
    the ball of radius ``r_inner``:

        max over h of ( sum_j integral_{B} |tau_{j,h} F|^2 dx )^(1/2) / |h|.

    ``h_set`` lists positive integer step counts; every step must satisfy
    |h| < (extent - r_inner)/2 so the shifted points stay well inside the
    sampled square.  On sampled gradients of smooth functions the per-h
    values stabilize as h shrinks; growth signals a genuine obstruction.
    """
    steps = [int(k) for k in h_set]
    if len(steps) == 0:
        raise ValueError("h_set must not be empty")
    if any(k <= 0 for k in steps):
        raise ValueError("h_set entries must be positive step counts")
    vals, spacing, ax = _samples(F)
    extent = F.grid.extent
    per_h = []
    for k in steps:
        h = k * spacing
        if h >= 0.5 * (extent - r_inner):
            raise ValueError(f"step {k} violates |h| < (R - rho)/2")
        total = 0.0
        for axis in (0, 1):
            diff = tau_shift(F, ShiftStencil(axis, k))
            if diff.ndim == 2:
                diff = diff[..., None]
            X, Y = _window_coords(ax, axis, k)
            ball = X * X + Y * Y < r_inner * r_inner
            total += float(np.sum(np.sum(diff * diff, axis=-1)[ball]) * spacing**2)
        per_h.append(np.sqrt(total) / h)
    value = max(per_h)
    hs = tuple(k * spacing for k in steps)
    return SeminormReport(
        s=1.0, p=2.0, q=2.0, value=float(value), h_set=hs, per_h=tuple(per_h),
        attaining_h=hs[int(np.argmax(per_h))],
    )


def _shift_window_sum_pows(vals, k1, k2, p):
    """sum over the valid window of |F(x + h) - F(x)|^p for lattice offset
    (k1, k2), where |.| is the Euclidean norm over components."""
    m0, m1 = vals.shape[0], vals.shape[1]
    if abs(k1) >= m0 or abs(k2) >= m1:
        return None
    s0 = slice(k1, None) if k1 >= 0 else slice(None, k1)
    t0 = slice(None, m0 - k1) if k1 >= 0 else slice(-k1, None)
    s1 = slice(k2, None) if k2 >= 0 else slice(None, k2)
    t1 = slice(None, m1 - k2) if k2 >= 0 else slice(-k2, None)
    d = vals[s0, s1] - vals[t0, t1]
    mag_sq = np.sum(d * d, axis=-1)
    if p == 2.0:
        return float(mag_sq.sum())
    return float(np.sum(mag_sq ** (0.5 * p)))


def besov_seminorm(v, s: float, p: float, q: float, r_cut: float | None = None) -> SeminormReport:
    """Difference-form fractional seminorm of order s in (0, 1):

        ( integral_{0 < |h| <= r_cut} ( integral |delta_h v|^p dx )^(q/p)
          |h|^(-s q - n) dh )^(1/q),

    with q = inf taking the sup of (integral |delta_h v|^p dx)^(1/p) /
    |h|^s over the sampled shifts instead.

    The h-integral is realized as a sum over the lattice offsets with
    0 < |h| <= r_cut, each carrying the cell weight spacing^n; the x
    integral runs over the window where both endpoints are sampled.
    ``r_cut=None`` means no truncation (every representable offset), which
    is the regime where the q = p case coincides with the double-sum form
    of :func:`gagliardo_seminorm`.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("smoothness order s must lie in (0, 1)")
    if p < 1.0 or (not np.isinf(q) and q < 1.0):
        raise ValueError("integrability indices must be >= 1 (q may be inf)")
    vals, spacing, ax = _samples(v)
    width = ax[-1] - ax[0]
    diameter = width * np.sqrt(2.0)
    if r_cut is None:
        r_cut = diameter
    if not 0.0 < r_cut <= diameter + spacing:
        raise ValueError("r_cut must lie in (0, diameter]")
    m = vals.shape[0]
    kmax = min(int(np.floor(r_cut / spacing)), m - 1)
    if kmax < 1:
        raise ValueError("r_cut resolves no lattice shift")

    # half-plane offsets; the opposite offsets contribute identically
    offsets = []
    for k1 in range(0, kmax + 1):
        lo = 1 if k1 == 0 else -kmax
        for k2 in range(lo, kmax + 1):
            if k1 == 0 and k2 <= 0:
                continue
            if (k1 * k1 + k2 * k2) * spacing**2 <= r_cut**2:
                offsets.append((k1, k2))

    if np.isinf(q):
        best, best_h = 0.0, None
        for k1, k2 in offsets:
            inner = _shift_window_sum_pows(vals, k1, k2, p)
            if inner is None:
                continue
            h = spacing * np.hypot(k1, k2)
            val = (inner * spacing**2) ** (1.0 / p) / h**s
            if val > best:
                best, best_h = val, h
        return SeminormReport(s=s, p=p, q=q, value=float(best), h_set=(spacing, r_cut),
                              attaining_h=best_h)

    acc = 0.0
    for k1, k2 in offsets:
        inner = _shift_window_sum_pows(vals, k1, k2, p)
        if inner is None:
            continue
        h = spacing * np.hypot(k1, k2)
        acc += 2.0 * (inner * spacing**2) ** (q / p) * h ** (-s * q - 2.0) * spacing**2
    return SeminormReport(s=s, p=p, q=q, value=float(acc ** (1.0 / q)), h_set=(spacing, r_cut))


def gagliardo_seminorm(v, s: float, q: float) -> float:
    """Double-sum fractional seminorm

        ( sum_{x != y} |v(x) - v(y)|^q / |x - y|^(n + s q) w_x w_y )^(1/q)

    over all ordered sample pairs, the brute-force oracle for the
    difference form.  Quadratic cost; guarded to small grids.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("smoothness order s must lie in (0, 1)")
    if q < 1.0:
        raise ValueError("q must be >= 1")
    vals, spacing, ax = _samples(v)
    m = vals.shape[0]
    if m * m > GAGLIARDO_NODE_GUARD:
        raise ValueError("grid too large for the double sum (guard at 128^2 points)")
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    flat = vals.reshape(m * m, -1)
    w = spacing**2
    total = 0.0
    chunk = max(1, (1 << 22) // (m * m))
    for lo in range(0, m * m, chunk):
        hi = min(lo + chunk, m * m)
        d = flat[lo:hi, None, :] - flat[None, :, :]
        num = np.sum(d * d, axis=-1) ** (0.5 * q)
        dx = pts[lo:hi, None, :] - pts[None, :, :]
        dist_sq = np.sum(dx * dx, axis=-1)
        mask = dist_sq > 0
        total += float(np.sum(num[mask] / dist_sq[mask] ** (0.5 * (2.0 + s * q))))
    return float((total * w * w) ** (1.0 / q))


@dataclass(frozen=True)
class NikolskiiReport:
    """Both sides of the fractional-smoothness implication for a field g:
    the difference-quotient bound of |g|^((p-2)/2) g and the q = inf
    fractional seminorm of g at order 2/p."""

    besov: SeminormReport
    quotient: SeminormReport

    @property
    def ratio(self) -> float:
        if self.quotient.value == 0.0:
            return np.inf if self.besov.value > 0 else 0.0
        return self.besov.value / self.quotient.value


def nikolskii_check(g, p: float, r_inner: float | None = None, h_set=(1, 2, 4)) -> NikolskiiReport:
    """For p > 2, report the q = inf fractional seminorm of g at order 2/p
    alongside the first-order difference-quotient bound of the power map
    |g|^((p-2)/2) g, so the implication's scaling can be inspected."""
    if not p > 2.0:
        raise ValueError("the implication concerns p > 2 only")
    vals, spacing, ax = _samples(g)
    mag = np.sqrt(np.sum(vals * vals, axis=-1))
    power = mag ** (0.5 * (p - 2.0))
    mapped_vals = power[..., None] * vals
    if isinstance(g, VectorField):
        mapped = VectorField(g.grid, mapped_vals)
    else:
        mapped = ScalarField(g.grid, mapped_vals[..., 0])
    if r_inner is None:
        r_inner = 0.5 * g.grid.extent
    quot = quotient_l2(mapped, r_inner, h_set)
    bes = besov_seminorm(g, s=2.0 / p, p=p, q=np.inf, r_cut=0.5 * g.grid.extent)
    return NikolskiiReport(besov=bes, quotient=quot)


def report_to_json(report: SeminormReport) -> str:
    d = {
        "s": report.s,
        "p": report.p,
        "q": None if np.isinf(report.q) else report.q,
        "value": report.value,
        "h_set": list(report.h_set),
    }
    if report.per_h:
        d["per_h"] = list(report.per_h)
    if report.attaining_h is not None:
        d["attaining_h"] = report.attaining_h
    return json.dumps(d)


def report_rows_to_csv(reports, path) -> None:
    """Long-format CSV (s, p, q, h, value) with one row per recorded h."""
    lines = ["s,p,q,h,value"]
    for r in reports:
        qtxt = "inf" if np.isinf(r.q) else f"{r.q:.17g}"
        if r.per_h:
            for h, val in zip(r.h_set, r.per_h):
                lines.append(f"{r.s:.17g},{r.p:.17g},{qtxt},{h:.17g},{val:.17g}")
        else:
            lines.append(f"{r.s:.17g},{r.p:.17g},{qtxt},,{r.value:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
