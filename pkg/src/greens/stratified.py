"""3D Green's functions for potentials stratified in one Cartesian coordinate.

A half-space problem whose potential depends only on the wall-normal
coordinate reduces exactly to a Bessel-weighted quadrature over 1D problems
at shifted spectral parameters.  The module provides that reduction, the
free/remainder split that isolates the potential-independent part, the
on-axis representation whose leading wall terms are universal, and the
one-point profile that obeys the 1D inverse relation unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
# (adaptive panels replace scipy.quad here: integrand evaluations are ODE solves)
from scipy.special import j0 as _j0

from .direct1d import build_green, halfline_green_logderiv
from .errors import ContourNearPole, NearEigenvalue, TailNotConverged
from .foundation import (DomainSpec, PotentialModel, as_energy, fit_expansion,
                         geometric_window, sqrt_upper)

__all__ = [
    "AxisUniversal",
    "free_halfline_green1d",
    "free_halfspace_green3d",
    "green3d_stratified",
    "split_remainder",
    "delta_green3d_diag",
    "green3d_axis",
    "axis_universal",
    "fit_axis_universal",
    "nu_stratified",
    "nu_stratified_residual",
    "wall_c2",
]

_HALF_LINE = DomainSpec.half_line()

#: |Im kappa| * range beyond which the Wronskian construction would overflow
#: and the log-derivative propagation takes over
_LOGDERIV_SWITCH = 250.0


def free_halfline_green1d(z, x: float, xp: float) -> complex:
    """Half-line Green's function of the free particle (hard wall at 0)."""
    kap = sqrt_upper(as_energy(z).z)
    return (np.exp(1j * kap * abs(x - xp)) - np.exp(1j * kap * (x + xp))) / (2j * kap)


def free_halfspace_green3d(z, x: float, xp: float, rho: float) -> complex:
    """Free half-space 3D Green's function (direct plus image term)."""
    kap = sqrt_upper(as_energy(z).z)
    d1 = np.hypot(x - xp, rho)
    d2 = np.hypot(x + xp, rho)
    if d1 == 0.0:
        raise ValueError("free half-space form is singular at coincident points")
    return (-1.0 / (4.0 * np.pi)) * (np.exp(1j * kap * d1) / d1
                                     - np.exp(1j * kap * d2) / d2)


def _free_pairs(s, pairs) -> np.ndarray:
    kap = sqrt_upper(s)
    out = np.empty(len(pairs), dtype=complex)
    for i, (a, b) in enumerate(pairs):
        out[i] = (np.exp(1j * kap * abs(a - b))
                  - np.exp(1j * kap * (a + b))) / (2j * kap)
    return out


class _HalflineEvaluator:
    """Half-line 1D Green's function across the deep-mode sweep.

    The perpendicular reductions need G_s(x, x') for s = z - k^2 with k
    running far into the evanescent regime.  Three regimes:

    * moderate |kappa| * range: the Wronskian construction (exact, adaptive);
    * deep modes where the potential is a relatively tiny perturbation
      (max|u| / |kappa|^2 below a threshold): free kernel plus a two-term
      Born correction on the potential support, with the relative error
      bounded by (max|u| / |kappa|^2)^3;
    * the rare gap in between: log-derivative (Riccati) propagation.

    ``delta`` returns G - G_free without subtraction cancellation in the
    Born regime (the Born series *is* the difference).
    """

    _BORN_THRESHOLD = 0.25

    def __init__(self, u: PotentialModel, tol: float = 1e-10, born_order: int = 24):
        self.tol = tol
        self.is_zero = u.kind == "zero" or u.name == "zero"
        # a constant plateau gauges into the spectral parameter, leaving a
        # base potential that decays to zero (what the Born split needs)
        self.shift = float(u.tail_value)
        self.u = u.shifted(-self.shift) if self.shift != 0.0 else u
        if not self.is_zero:
            probe = np.linspace(0.0, max(float(self.u.tail_start), 1.0), 400)
            self.u_max = float(np.max(np.abs(np.asarray(self.u(probe)))))
        self._gauss = leggauss(born_order)
        self._records: dict = {}

    def _record(self, s: complex, x_hi: float):
        """Cached Wronskian record at one spectral parameter (regime A)."""
        rec = self._records.get(s)
        if rec is None or rec.x_max < x_hi:
            rec = build_green(self.u, _HALF_LINE, s, tol=self.tol,
                              x_max=max(x_hi, 1.0))
            self._records[s] = rec
        return rec

    # -- Born machinery ------------------------------------------------------

    def _born_grid(self, kap: complex, x_lo: float, x_hi: float):
        decay = max(abs(kap.imag), 1.0)
        y_max = min(max(float(self.u.tail_start), x_hi),
                    x_hi + 40.0 / decay)
        cuts = {0.0, min(x_lo, y_max), min(x_hi, y_max), y_max}
        # resolve the exponential decay beyond the outer point
        step = 5.0 / decay
        t = min(x_hi, y_max) + step
        while t < y_max:
            cuts.add(t)
            t += step
        cuts = sorted(cuts)
        nodes, weights = self._gauss
        ys, ws = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a < 1e-14:
                continue
            ys.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * weights)
        return np.concatenate(ys), np.concatenate(ws)

    @staticmethod
    def _free_kernel(kap: complex, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return (np.exp(1j * kap * np.abs(a - b))
                - np.exp(1j * kap * (a + b))) / (2j * kap)

    def _born_delta(self, s: complex, pairs) -> np.ndarray:
        """Iterated scattering series off the free kernel, G = G_f + G_f u G.

        Terms are matrix-vector chains on the support quadrature grid; the
        ratio of consecutive terms (~ max|u| / |kappa|^2) certifies the
        truncation error.
        """
        kap = sqrt_upper(s)
        x_lo = min(min(p) for p in pairs)
        x_hi = max(max(p) for p in pairs)
        ys, ws = self._born_grid(kap, x_lo, x_hi)
        uy = np.asarray(self.u(ys), dtype=float)
        wy = ws * uy
        kmat = self._free_kernel(kap, ys[:, None], ys[None, :])
        out = np.empty(len(pairs), dtype=complex)
        for i, (a, b) in enumerate(pairs):
            ga_w = wy * self._free_kernel(kap, a, ys)
            vec = self._free_kernel(kap, ys, b)
            total = 0.0 + 0.0j
            prev = np.inf
            for _ in range(20):
                term = ga_w @ vec
                total += term
                if abs(term) <= 1e-13 * abs(total) or abs(term) <= 1e-300:
                    break
                if abs(term) > 0.5 * prev and prev != np.inf:
                    raise RuntimeError("scattering series not contracting")
                prev = abs(term)
                vec = kmat @ (wy * vec)
            else:
                raise RuntimeError("scattering series too slow to converge")
            out[i] = total
        return out

    # -- public evaluation ---------------------------------------------------

    def _delta_base(self, s: complex, pairs) -> np.ndarray:
        """G - G_free for the decayed base potential at base parameter s."""
        kap = sqrt_upper(s)
        x_hi = max(max(p) for p in pairs)
        span = max(float(self.u.tail_start), x_hi) + 0.25
        if self.u_max / max(abs(kap) ** 2, 1e-300) < self._BORN_THRESHOLD \
                and abs(kap) > 2.0:
            try:
                return self._born_delta(s, pairs)
            except RuntimeError:
                pass  # series not contracting here; use an exact path
        if abs(kap.imag) * span < _LOGDERIV_SWITCH:
            rec = self._record(s, x_hi)
            full = np.array([rec(a, b) for a, b in pairs], dtype=complex)
        else:
            full = halfline_green_logderiv(self.u, s, pairs, tol=self.tol)
        return full - _free_pairs(s, pairs)

    def full(self, s, pairs) -> np.ndarray:
        if self.is_zero:
            return _free_pairs(s, pairs)
        sb = complex(s) - self.shift
        return _free_pairs(sb, pairs) + self._delta_base(sb, pairs)

    def delta(self, s, pairs) -> np.ndarray:
        """G_s(x, x') minus the zero-potential part at the same parameter."""
        if self.is_zero:
            return np.zeros(len(pairs), dtype=complex)
        if self.shift == 0.0:
            return self._delta_base(complex(s), pairs)
        return self.full(s, pairs) - _free_pairs(s, pairs)

    def __call__(self, s, pairs) -> np.ndarray:
        return self.full(s, pairs)


def _g1d_factory(u: PotentialModel, tol: float = 1e-10) -> _HalflineEvaluator:
    return _HalflineEvaluator(u, tol=tol)


def _gauss_panels(fvec, breakpoints, order: int = 16) -> complex | np.ndarray:
    """Composite Gauss-Legendre quadrature over consecutive panels."""
    nodes, weights = leggauss(order)
    total = None
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        k = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = fvec(k)
        contrib = 0.5 * (b - a) * np.tensordot(weights, vals, axes=(0, 0))
        total = contrib if total is None else total + contrib
    return total


def _refining_panel_quad(fvec, breakpoints, rtol: float, max_refine: int = 2):
    """Panel quadrature with order-escalation error control.

    Compares order 12 against order 20 on the same panels; halves every
    panel (up to ``max_refine`` times) until the two agree to ``rtol``.
    """
    breaks = np.asarray(breakpoints, dtype=float)
    for _ in range(max_refine + 1):
        lo = _gauss_panels(fvec, breaks, order=8)
        hi = _gauss_panels(fvec, breaks, order=14)
        err = np.max(np.abs(hi - lo))
        if err <= rtol * max(np.max(np.abs(hi)), 1e-300) + 1e-15:
            return hi
        breaks = np.sort(np.concatenate([breaks, 0.5 * (breaks[:-1] + breaks[1:])]))
    return hi


def _k_breakpoints(k_ref: float, k_end: float, rho: float, decay: float) -> np.ndarray:
    """Panel layout on [0, k_end]: clustered near the 1D peak at k ~ k_ref,
    growing geometrically with k (the integrand varies on the scale of k
    itself), capped so each panel resolves the Bessel oscillation (period
    ~ 2 pi / rho) and the exponential decay scale 1/decay."""
    width_cap = np.inf
    if rho > 0.0:
        width_cap = min(width_cap, np.pi / rho)
    if decay > 0.0:
        width_cap = min(width_cap, 4.0 / decay)
    pts = [0.0]
    for f in (0.5, 1.0, 1.5, 2.0, 3.0, 4.0):
        if f * k_ref < k_end:
            pts.append(f * k_ref)
    k = pts[-1] if len(pts) > 1 else min(max(1.0, k_ref), k_end)
    while k < k_end:
        step = min(max(k, k_ref, 1.0), width_cap)
        k = min(k + step, k_end)
        pts.append(k)
    pts.append(k_end)
    return np.unique(np.asarray(pts))


def green3d_stratified(u: PotentialModel, z, x: float, xp: float, rho: float,
                       quad_tol: float = 1e-9, k_cap: float = 2e4) -> complex:
    """Perpendicular-mode reduction of the half-space 3D Green's function.

    Evaluates (1/2pi) int_0^inf k G^{1D}_{z-k^2}(x, x') J0(k rho) dk by
    adaptive quadrature, truncated once the 1D factor decays below 1e-14 of
    its peak.  Needs rho > 0, Im z > 0 and distinct wall distances (the 1D
    factor decays like exp(-k |x - x'|); on the diagonal the integral is
    only conditionally convergent and TailNotConverged is raised).
    """
    zc = as_energy(z).z
    if rho <= 0.0:
        raise ValueError("perpendicular separation must be positive")
    if zc.imag <= 0.0:
        raise ValueError("quadrature needs Im z > 0")
    if x <= 0.0 or xp <= 0.0:
        return 0.0 + 0.0j
    delta = abs(x - xp)
    g1 = _g1d_factory(u)
    peak = max(abs(g1(zc, [(x, xp)])[0]), 1e-300)

    # tail cut: |G| <~ exp(-k delta) / (2k) below 1e-14 of the peak
    if delta < 1e-9 * (x + xp):
        raise TailNotConverged(
            "coincident wall distances: 1D factor does not decay in k",
            achieved=None)
    k_ref = abs(sqrt_upper(zc))
    k_tail = (np.log(1.0 / (1e-14 * peak)) / delta) + 2.0 * k_ref
    if k_tail > k_cap:
        raise TailNotConverged(
            f"required tail cut {k_tail:.3g} exceeds cap {k_cap:.3g}",
            achieved=float(np.exp(-k_cap * delta)))

    def fvec(karr):
        return np.array([k * g1(zc - k * k, [(x, xp)])[0] * _j0(k * rho)
                         for k in karr])

    breaks = _k_breakpoints(k_ref, k_tail, rho, delta)
    val = _refining_panel_quad(fvec, breaks, rtol=quad_tol)
    return complex(val / (2.0 * np.pi))


def delta_green3d_diag(u: PotentialModel, z, xs, k_cut: float = 160.0,
                       panel_order: int = 16) -> np.ndarray:
    """Potential-induced remainder of the 3D function on the full diagonal.

    The free part carries the short-distance divergence, so the remainder
    is finite even at coincident points on the same perpendicular line; the
    integrand difference decays like k^-2 and the truncated tail is added
    in closed form from the bulk values of both diagonals.
    """
    zc = as_energy(z).z
    xs = np.asarray(xs, dtype=float)
    pairs = [(float(v), float(v)) for v in xs]
    ev = _g1d_factory(u)
    k_ref = abs(sqrt_upper(zc))
    k_cut = max(k_cut, 14.0 * k_ref)

    ratios = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 9.0])
    breaks = np.unique(np.concatenate([ratios * k_ref, [k_cut]]))
    breaks = breaks[breaks <= k_cut]
    if breaks[-1] < k_cut:
        breaks = np.append(breaks, k_cut)
    # geometric filler between the peak region and the cut
    extra = np.geomspace(max(breaks[-2], 1.0), k_cut, 8)
    breaks = np.unique(np.concatenate([breaks, extra]))

    def fvec(karr):
        return np.stack([k * ev.delta(zc - k * k, pairs) for k in karr])

    core = _gauss_panels(fvec, breaks, order=panel_order) / (2.0 * np.pi)
    uvals = np.asarray(u(xs), dtype=float)
    tail = (1j / (4.0 * np.pi)) * (sqrt_upper(zc - k_cut ** 2)
                                   - np.array([sqrt_upper(zc - uv - k_cut ** 2)
                                               for uv in uvals]))
    return core + tail


def split_remainder(u: PotentialModel, z, x: float, xp: float, rho: float,
                    quad_tol: float = 1e-9, k_cap: float = 4e3):
    """(free half-space part, potential-induced remainder).

    The free part is the closed two-image form; the remainder is the
    quadrature of the 1D difference (subtraction inside the integral, which
    is what makes it absolutely convergent).  Their sum equals the direct
    reduction.  The remainder scales like x x' at small wall distances; for
    the exactly coincident on-axis case use :func:`delta_green3d_diag`.
    """
    zc = as_energy(z).z
    free = free_halfspace_green3d(zc, x, xp, rho)
    if u.kind == "zero" or u.name == "zero":
        return free, 0.0 + 0.0j

    if rho <= 0.0:
        raise ValueError("use delta_green3d_diag for the on-axis remainder")
    ev = _g1d_factory(u)
    delta = abs(x - xp)
    k_ref = abs(sqrt_upper(zc))
    # the 1D difference decays like exp(-k |x - x'|) once k |x - x'| >> 1
    k_cut = np.log(1e13) / max(delta, 1e-12) + 14.0 * k_ref
    if k_cut > k_cap:
        raise TailNotConverged(
            "wall distances too close for the off-diagonal remainder "
            "quadrature; use delta_green3d_diag on the diagonal",
            achieved=float(np.exp(-k_cap * delta)))

    def fvec(karr):
        return np.array([k * ev.delta(zc - k * k, [(x, xp)])[0] * _j0(k * rho)
                         for k in karr])

    breaks = _k_breakpoints(k_ref, k_cut, rho, delta)
    val = _refining_panel_quad(fvec, breaks, rtol=quad_tol, max_refine=1)
    return free, complex(val / (2.0 * np.pi))


# ---------------------------------------------------------------------------
# On-axis representation and its universal wall terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisUniversal:
    """The two potential-independent wall terms of the on-axis 3D function."""

    leading: complex      # -x_< / (2 pi |x - x'| (x + x'))
    subleading: complex   # -z x_< / (4 pi)

    @staticmethod
    def at(z, x: float, xp: float) -> "AxisUniversal":
        zc = as_energy(z).z
        lo = min(x, xp)
        return AxisUniversal(
            leading=-lo / (2.0 * np.pi * abs(x - xp) * (x + xp)),
            subleading=-zc * lo / (4.0 * np.pi))


def axis_universal(z, x: float, xp: float) -> AxisUniversal:
    return AxisUniversal.at(z, x, xp)


def _axis_zero_energy(u: PotentialModel, x: float, xp: float,
                      quad_tol: float = 1e-10, ev=None) -> complex:
    """(1/2pi) int_0^inf k G_{-k^2}(x, x') dk, absolutely convergent for x != x'."""
    free = (-1.0 / (4.0 * np.pi)) * (1.0 / abs(x - xp) - 1.0 / (x + xp))
    if u.kind == "zero" or u.name == "zero":
        return free
    # the free part of the mode integral has the closed two-image value;
    # only the potential-induced difference needs quadrature, and it decays
    # like exp(-k |x - x'|) with an extra max|u|/k^2 suppression
    delta = abs(x - xp)
    if ev is None:
        ev = _g1d_factory(u, tol=min(1e-9, quad_tol))
    k_tail = np.log(1e15) / delta + 4.0

    def fvec(karr):
        return np.array([k * ev.delta(-k * k + 0j, [(x, xp)])[0] for k in karr])

    width = 4.0 / delta
    filler = np.arange(10.0, k_tail, width)
    breaks = np.unique(np.concatenate([[0.0, 2.0, 5.0, 10.0], filler, [k_tail]]))
    breaks = breaks[breaks <= k_tail]
    val = _refining_panel_quad(fvec, breaks, rtol=quad_tol, max_refine=1)
    return complex(free + val / (2.0 * np.pi))


def green3d_axis(u: PotentialModel, z, x: float, xp: float,
                 contour_nodes: int = 32, quad_tol: float = 1e-9,
                 ev=None) -> complex:
    """On-axis 3D value: zero-energy part plus a spectral-parameter contour.

    G(x, x'; 0) = G_0(x, x'; 0) + (1/4pi) int_0^z G_s^{1D}(x, x') ds with the
    contour a straight ray to z.  The substitution s = z t^2 removes the
    sqrt(s) endpoint non-analyticity, so plain Gauss nodes converge fast; 1D
    evaluations are cached per node.  Small wall distances expose the two
    universal terms of :func:`axis_universal`.
    """
    zc = as_energy(z).z
    if x == xp:
        raise ValueError("on-axis form needs distinct wall distances")
    if ev is None:
        ev = _g1d_factory(u, tol=min(1e-9, quad_tol))
    g0 = _axis_zero_energy(u, x, xp, quad_tol=quad_tol, ev=ev)

    t, wts = leggauss(contour_nodes)
    t = 0.5 * (t + 1.0)
    wts = 0.5 * wts
    g1 = ev
    acc = 0.0 + 0.0j
    for ti, wi in zip(t, wts):
        s = zc * ti * ti
        try:
            gs = g1(s, [(x, xp)])[0]
        except NearEigenvalue as exc:
            raise ContourNearPole(
                f"1D pole within 1e-3 |z| of the contour at s = {s:.6g}") from exc
        acc += wi * 2.0 * zc * ti * gs
    return complex(g0 + acc / (4.0 * np.pi))


def fit_axis_universal(u: PotentialModel, z, direction=(1.0, 2.0),
                       eps_list=(0.02, 0.028, 0.04, 0.055, 0.075, 0.1, 0.13, 0.17)):
    """Fit the 1/eps and eps prefactors of the on-axis form along a ray.

    Points are (x, x') = eps * direction; the on-axis value expands as
    P1/eps + P2 eps + O(eps^2) with P1, P2 the universal-term prefactors
    evaluated on the direction vector (no constant term arises).  Returns
    (fitted, predicted) pairs for the two prefactors.
    """
    zc = as_energy(z).z
    a, b = direction
    eps = np.asarray(eps_list, dtype=float)
    ev = _g1d_factory(u, tol=1e-9)
    vals = np.array([green3d_axis(u, zc, e * a, e * b, ev=ev) for e in eps])
    cols = np.column_stack([1.0 / eps, eps, eps ** 2, eps ** 3]).astype(complex)
    norms = np.linalg.norm(cols, axis=0)
    coef, *_ = np.linalg.lstsq(cols / norms, vals, rcond=None)
    coef = coef / norms
    lo = min(a, b)
    pred1 = -lo / (2.0 * np.pi * abs(a - b) * (a + b))
    pred2 = -zc * lo / (4.0 * np.pi)
    return (complex(coef[0]), complex(coef[1])), (complex(pred1), complex(pred2))


# ---------------------------------------------------------------------------
# One-point stratified profile
# ---------------------------------------------------------------------------

def nu_stratified(u: PotentialModel, z, xs, tol: float = 1e-11) -> np.ndarray:
    """One-point profile of the stratified half-space.

    Coincides with the 1D diagonal for the same wall-normal potential, so it
    obeys the 1D inverse relation and the universal wall series unchanged.
    """
    xs = np.asarray(xs, dtype=float)
    rec = build_green(u, _HALF_LINE, z, tol=tol, x_max=float(xs.max()))
    return rec.diagonal(xs)


def nu_stratified_residual(u: PotentialModel, z, xs, tol: float = 1e-11) -> np.ndarray:
    """Pointwise misfit of the inverse profile relation for nu_stratified."""
    from .inverse1d import relation_residual

    xs = np.asarray(xs, dtype=float)
    rec = build_green(u, _HALF_LINE, z, tol=tol, x_max=float(xs.max()))
    n, n1, n2 = rec.diagonal_derivatives(xs)
    return relation_residual(u, z, xs, n, n1, n2)


def wall_c2(u: PotentialModel, z, window=(1e-3, 0.07), count: int = 64,
            tol: float = 1e-11) -> complex:
    """Quadratic wall coefficient of the half-line diagonal, fitted."""
    zc = as_energy(z).z
    scale = min(1.0, 1.0 / abs(sqrt_upper(zc)))
    xs = geometric_window(window[0] * scale, window[1] * scale, count)
    rec = build_green(u, _HALF_LINE, zc, tol=tol, x_max=float(xs.max()))
    vals = rec.diagonal(xs)
    fit = fit_expansion((xs, vals), ["xi", "xi2", "xi3", "xi4", "xi5"])
    return fit["xi2"]
