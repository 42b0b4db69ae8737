"""Radially symmetric 3D systems in a ball with a hard wall.

Each angular-momentum channel is a 1D problem with the centrifugal barrier
added; the 3D function is the Legendre-weighted channel sum.  Near the
center the channel profiles carry their own universal coefficients; near
the wall the curvature of the boundary turns the flat-wall expansion into
one with a logarithmic term whose strength is the inverse radius.  The
curvature correction of the flat-wall reduction is evaluated from its
closed three-term quadrature form at zero potential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import NearEigenvalue, TailNotConverged
from .foundation import (ComplexEnergy, ExpansionFit, OdeSolution,
                         PotentialModel, as_energy, fit_expansion,
                         geometric_window, integrate_ode2, sqrt_upper)
from .stratified import free_halfspace_green3d

__all__ = [
    "RadialChannel",
    "build_radial_channel",
    "green_radial_l",
    "sum_partial_waves",
    "center_expansion",
    "nu_boundary_fit",
    "NuBoundaryResult",
    "curvature_correction",
]

#: seed-contamination budget: the decaying component of a wall-started deep
#: channel is suppressed by exp(-2 * _SEED_BUDGET) at the evaluation radius
_SEED_BUDGET = 16.0


@dataclass(frozen=True)
class RadialChannel:
    """Wronskian-built channel Green's function on (0, R).

    The regular solution grows like r^(l+1) from the origin (seeded by a
    short Frobenius series, or by its outgoing WKB ray near the wall when
    the centrifugal barrier makes the full range overflow); the right
    solution vanishes at the wall.  Valid for r in [r_min, R].  When built
    with quadrature states the record also carries running integrals of
    psi^2, which give the spectral-parameter derivative of the diagonal
    without differencing.
    """

    radius: float
    l: int
    energy: ComplexEnergy
    psi_l: OdeSolution
    psi_r: OdeSolution
    w: complex
    r_min: float
    j_l: object = None     # int psiL^2 from the origin (incl. seed closure)
    j_r: object = None     # int psiR^2 from the wall (negative orientation)

    def _check(self, r):
        if np.any(np.asarray(r) < self.r_min - 1e-12) or \
                np.any(np.asarray(r) > self.radius + 1e-12):
            raise ValueError(
                f"radius outside the built range [{self.r_min:.3g}, {self.radius:.3g}]")

    def __call__(self, r: float, rp: float) -> complex:
        self._check([r, rp])
        if r >= self.radius or rp >= self.radius:
            return 0.0 + 0.0j
        lo, hi = (r, rp) if r <= rp else (rp, r)
        return complex(self.psi_l.value(lo) * self.psi_r.value(hi) / self.w)

    def diagonal(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        self._check(r)
        return self.psi_l.value(r) * self.psi_r.value(r) / self.w

    def diagonal_derivatives(self, r):
        r = np.asarray(r, dtype=float)
        self._check(r)
        al, dl = self.psi_l.value(r), self.psi_l.derivative(r)
        ar, dr = self.psi_r.value(r), self.psi_r.derivative(r)
        q = self.psi_l.q(r)
        n = al * ar / self.w
        n1 = (dl * ar + al * dr) / self.w
        n2 = (2.0 * q * al * ar + 2.0 * dl * dr) / self.w
        return n, n1, n2

    def diagonal_dz(self, r) -> np.ndarray:
        """d/dz of the diagonal from the resolvent-square identity.

        d/dz n(r) = -int_0^R G(r, s)^2 ds, split at r into the running
        psi^2 integrals carried by the record (quadrature states required).
        """
        if self.j_l is None:
            raise ValueError("channel was built without quadrature states")
        r = np.asarray(r, dtype=float)
        self._check(r)
        al = self.psi_l.value(r)
        ar = self.psi_r.value(r)
        return -(ar * ar * self.j_l(r) - al * al * self.j_r(r)) / self.w ** 2


def _integrate_with_square(q, y0, dy0, j0, a, b, tol):
    """psi'' = q psi together with the running integral of psi^2."""
    from scipy.integrate import solve_ivp

    def rhs(r, y):
        return (y[1], q(r) * y[0], y[0] * y[0])

    sol = solve_ivp(rhs, (a, b), np.array([y0, dy0, j0], dtype=complex),
                    method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True)
    if not sol.success:
        from .errors import StepSizeUnderflow
        raise StepSizeUnderflow("channel integration stalled",
                                location=float(sol.t[-1]))
    dense = sol.sol
    ode = OdeSolution(x0=a, x1=b, _sol=dense, q=q)
    return ode, (lambda r, _d=dense: _d(r)[2])


def build_radial_channel(u: PotentialModel, radius: float, z, l: int,
                         r_min: float | None = None, tol: float = 1e-10,
                         with_dz: bool = False) -> RadialChannel:
    """Channel record valid on [r_min, R] (default: down to 1e-4 R).

    ``with_dz`` also integrates the running psi^2 quadrature states so the
    record can return the exact spectral derivative of its diagonal.
    """
    energy = as_energy(z)
    zc = energy.z
    leff = l + 0.5

    def q(r):
        return l * (l + 1) / (r * r) + u(r) - zc

    r_seed_floor = 1e-4 * radius
    r_min = r_seed_floor if r_min is None else max(min(r_min, radius), 0.0)

    # start radius: close enough to the origin that the evaluation window is
    # clean of seed contamination, but not so deep that r^(l+1) growth
    # overflows across the remaining range
    r0 = max(r_seed_floor, min(r_min, radius) * np.exp(-_SEED_BUDGET / leff))
    if (l + 1) * np.log(radius / r0) > 640.0:
        raise ValueError(
            f"channel l={l} spans too many decades; raise r_min")

    if r0 <= 3.0 * r_seed_floor:
        # Frobenius: psi ~ r^(l+1) (1 + a2 r^2 + a3 r^3), normalized to 1
        u_tay = u.taylor(0.0, 2)
        q0 = complex(u_tay[0]) - zc
        q1 = complex(u_tay[1]) if len(u_tay) > 1 else 0.0
        a2 = q0 / (2.0 * (2 * l + 3))
        a3 = q1 / (3.0 * (2 * l + 4))
        poly = 1.0 + a2 * r0 ** 2 + a3 * r0 ** 3
        dlog = (l + 1) / r0 + (2 * a2 * r0 + 3 * a3 * r0 ** 2) / poly
        j_seed = r0 / (2 * l + 3)        # int_0^{r0} (r/r0)^(2l+2) dr
    else:
        # deep centrifugal region: outgoing WKB ray
        kap = np.sqrt(complex(q(r0)))
        if kap.real < 0:
            kap = -kap
        dlog = kap
        j_seed = 1.0 / (2.0 * kap)       # int_{-inf}^{r0} e^{2 kap (r - r0)} dr

    r_stop = max(r_min, r0)
    if with_dz:
        psi_l, j_l = _integrate_with_square(q, 1.0 + 0.0j, complex(dlog),
                                            complex(j_seed), r0, radius, tol)
        psi_r, j_r = _integrate_with_square(q, 0.0 + 0.0j, -1.0 + 0.0j,
                                            0.0 + 0.0j, radius, r_stop, tol)
    else:
        psi_l = integrate_ode2(q, 1.0 + 0.0j, complex(dlog), r0, radius, tol=tol)
        psi_r = integrate_ode2(q, 0.0 + 0.0j, -1.0 + 0.0j, radius, r_stop, tol=tol)
        j_l = j_r = None

    r_w = 0.5 * (r_stop + radius)
    w = complex(psi_l.value(r_w) * psi_r.derivative(r_w)
                - psi_l.derivative(r_w) * psi_r.value(r_w))
    scale = max(abs(complex(psi_l.value(r_w))), abs(complex(psi_r.value(r_w))))
    if abs(w) < 1e-10 * max(scale, 1e-300):
        raise NearEigenvalue(f"channel l={l} at an eigenvalue of the ball")
    return RadialChannel(radius=radius, l=l, energy=energy, psi_l=psi_l,
                         psi_r=psi_r, w=w, r_min=r_stop, j_l=j_l, j_r=j_r)


def green_radial_l(u: PotentialModel, radius: float, z, l: int,
                   r: float, rp: float, tol: float = 1e-10) -> complex:
    """Channel Green's function at a single point pair."""
    chan = build_radial_channel(u, radius, z, l, r_min=min(r, rp), tol=tol)
    return chan(r, rp)


def partial_wave_table(u: PotentialModel, radius: float, z, points,
                       l_max: int = 2500, rtol: float = 1e-10,
                       tol: float = 1e-10) -> np.ndarray:
    """Channel sums for several (r, r', omega) triples sharing one channel set.

    Each channel is built once per order and evaluated at every requested
    pair, which amortizes the dominant ODE cost over point sweeps.  A point
    is done once its running term drops below rtol of its sum for four
    consecutive orders; the cap raises TailNotConverged.
    """
    points = [(float(r), float(rp), float(w)) for r, rp, w in points]
    for r, rp, _ in points:
        if not (0.0 < r < radius and 0.0 < rp < radius):
            raise ValueError("points must be interior")
    cos_w = np.array([np.cos(w) for _, _, w in points])
    totals = np.zeros(len(points), dtype=complex)
    streaks = np.zeros(len(points), dtype=int)
    p_prev = np.zeros_like(cos_w)
    p_curr = np.zeros_like(cos_w)
    r_min_eval = min(min(r, rp) for r, rp, _ in points)
    last_ratio = np.inf
    for l in range(l_max + 1):
        if l == 0:
            p_curr = np.ones_like(cos_w)
        elif l == 1:
            p_prev, p_curr = p_curr, cos_w.copy()
        else:
            p_prev, p_curr = p_curr, ((2 * l - 1) * cos_w * p_curr
                                      - (l - 1) * p_prev) / l
        chan = build_radial_channel(u, radius, z, l, r_min=r_min_eval, tol=tol)
        active = False
        ratios = []
        for i, (r, rp, _) in enumerate(points):
            if streaks[i] >= 4:
                continue
            term = (2 * l + 1) / (4.0 * np.pi * r * rp) * p_curr[i] * chan(r, rp)
            totals[i] += term
            ratio = abs(term) / max(abs(totals[i]), 1e-300)
            ratios.append(ratio)
            streaks[i] = streaks[i] + 1 if ratio <= rtol else 0
            active = True
        if not active:
            return totals
        last_ratio = max(ratios) if ratios else 0.0
    raise TailNotConverged(
        f"partial-wave sum not converged at l_max={l_max}",
        achieved=float(last_ratio))


def sum_partial_waves(u: PotentialModel, radius: float, z, r: float, rp: float,
                      omega: float, l_max: int = 2500, rtol: float = 1e-10,
                      tol: float = 1e-10) -> complex:
    """Channel sum for the full 3D function at angle omega.

    Converges geometrically for r != rp (ratio r_min/r_max per order, or the
    evanescent wall suppression for deep channels).  Raises TailNotConverged
    when the cap is hit before the running tail drops below rtol.
    """
    table = partial_wave_table(u, radius, z, [(r, rp, omega)],
                               l_max=l_max, rtol=rtol, tol=tol)
    return complex(table[0])


def center_expansion(u: PotentialModel, radius: float, z, l: int,
                     n_powers: int = 6, window=(1e-3, 0.1), count: int = 48,
                     tol: float = 1e-11):
    """Center coefficients of the channel diagonal and the relation residual.

    Fits n^(l)(r) on a geometric window near the origin with plain powers.
    The fitted linear and cubic coefficients are universal: -1/(2l+1) and
    -2z/((2l-1)(2l+1)(2l+3)); the quadratic one vanishes except for l = 0.
    Also evaluates the channel profile relation (centrifugal term included)
    pointwise on the window from the exact solution states.
    """
    zc = as_energy(z).z
    rs = geometric_window(window[0] * radius, window[1] * radius, count)
    chan = build_radial_channel(u, radius, zc, l, r_min=float(rs[0]), tol=tol)
    vals = chan.diagonal(rs)
    labels = ["xi"] + [f"xi{p}" for p in range(2, n_powers + 1)]
    fit = fit_expansion((rs, vals), labels)

    n, n1, n2 = chan.diagonal_derivatives(rs)
    lhs = zc - np.asarray(u(rs)) - l * (l + 1) / rs ** 2
    rhs = -0.25 / n ** 2 + 0.25 * (n1 / n) ** 2 - 0.5 * n2 / n
    residual = float(np.abs(lhs - rhs).max())
    return fit, residual


# ---------------------------------------------------------------------------
# Wall profile of the ball: the curvature-induced logarithm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuBoundaryResult:
    """Fitted wall expansion of the one-point profile of a ball."""

    fit: ExpansionFit
    x: np.ndarray          # wall distances of the samples
    values: np.ndarray     # assembled profile
    l_used: int

    @property
    def slope(self) -> complex:
        return self.fit["xi"]

    @property
    def log_coefficient(self) -> complex:
        return self.fit["xi2log"]


def nu_boundary_fit(u: PotentialModel, radius: float, z,
                    window=(0.012, 0.12), count: int = 36,
                    basis=("xi", "xi2log", "xi2", "xi3log", "xi3", "xi4"),
                    l_cap: int = 6000, tail_rtol: float = 1e-6,
                    method: str = "fd", dz_rel: float = 1e-4,
                    tol: float = 1e-8) -> NuBoundaryResult:
    """One-point profile near the ball wall, fitted with a log-carrying basis.

    The profile is assembled channel-wise as sum over l of
    (2l+1) d/dz n^(l)(r) / r^2 with x = R - r (the z-derivative regularizes
    the divergent equal-point sum; it is taken per channel and summed
    afterwards).  A deep channel is evanescent beyond x ~ 14 R / l, so each
    order is only integrated and accumulated over the window slice it can
    reach; the sum terminates once no sample is reachable.  The fitted
    linear slope is -1 and the coefficient of x^2 ln(x/x0) is -1/R with
    x0 = i/sqrt(z), independent of the potential.

    ``method`` selects the channel derivative: "fd" takes a central
    difference of the diagonal at z +- dz (two solves); "exact" integrates
    running psi^2 quadrature states and uses the resolvent-square identity
    (one solve, no differencing).
    """
    zc = as_energy(z).z
    xs = geometric_window(window[0] * radius, window[1] * radius, count)
    rs = radius - xs
    x_min = float(xs[0])
    dz = dz_rel * (1.0 + abs(zc))
    nu = np.zeros(len(xs), dtype=complex)
    l_last = np.full(len(xs), -1, dtype=int)   # deepest order summed per sample
    l_used = 0
    wall_u = float(u(radius))
    # a channel's wall part carries exp(-2 kap_l x); beyond that reach only
    # its l-smooth bulk part survives, handled in closed form below
    reach = 0.5 * np.log(1.0 / tail_rtol) + 4.0
    for l in range(l_cap + 1):
        kap_l = abs(sqrt_upper(l * (l + 1) / radius ** 2 + wall_u - zc))
        x_cut = min(float(xs[-1]), reach / max(kap_l, 1e-12))
        if x_cut < x_min:
            break
        mask = xs <= x_cut
        rs_m = rs[mask]
        r_min_l = radius - x_cut
        if method == "fd":
            hi = build_radial_channel(u, radius, zc + dz, l, r_min=r_min_l, tol=tol)
            lo = build_radial_channel(u, radius, zc - dz, l, r_min=r_min_l, tol=tol)
            dn = (hi.diagonal(rs_m) - lo.diagonal(rs_m)) / (2.0 * dz)
        elif method == "exact":
            chan = build_radial_channel(u, radius, zc, l, r_min=r_min_l,
                                        tol=tol, with_dz=True)
            dn = chan.diagonal_dz(rs_m)
        else:
            raise ValueError("method must be 'fd' or 'exact'")
        nu[mask] += (2 * l + 1) * dn / rs_m ** 2
        l_last[mask] = l
        l_used = l
    else:
        raise TailNotConverged(
            f"channel sum for the wall profile not converged by l={l_cap}",
            achieved=float(x_min))

    # deep-order bulk completion: beyond its evanescent reach a channel's
    # derivative tends to the local bulk value (i/4) (z - u - l(l+1)/r^2)^(-3/2),
    # whose order sum converges only like 1/l and must not be dropped.  A
    # buffer is summed explicitly; the remainder integrates in closed form
    # (midpoint rule in l(l+1)).
    buf = 4000
    for j, r in enumerate(rs):
        l0 = l_last[j] + 1
        ls = np.arange(l0, l0 + buf, dtype=float)
        zt = zc - float(u(r)) - ls * (ls + 1) / r ** 2     # Im zt = Im z > 0
        nu[j] += np.sum((2 * ls + 1) * 0.25j * np.sqrt(zt) ** -3) / r ** 2
        t0 = (l0 + buf - 0.5) * (l0 + buf + 0.5)
        nu[j] += -0.5j / np.sqrt(zc - float(u(r)) - t0 / r ** 2)

    xi0 = 1j / sqrt_upper(zc)
    fit = fit_expansion((xs, nu), basis, xi0=xi0)
    return NuBoundaryResult(fit=fit, x=xs, values=nu, l_used=l_used)


# ---------------------------------------------------------------------------
# Curvature correction of the flat-wall reduction (zero potential)
# ---------------------------------------------------------------------------

def _double_free_integral(kap, x: float, xp: float):
    """int_0^inf y G_f(x, y) G_f(y, xp) dy for the free half-line kernel.

    Closed form assembled from decaying exponentials only (every exponent
    has a non-negative wall distance for Im kappa > 0), vectorized over
    kappa; three regions split at the two wall distances.
    """
    kap = np.asarray(kap, dtype=complex)
    lo, hi = (x, xp) if x <= xp else (xp, x)
    delta = hi - lo
    sig = hi + lo

    def ex(t):
        return np.exp(1j * kap * t)

    k2 = kap * kap
    # region [0, lo]: e^{i k sig} int_0^lo y sin^2(k y) dy
    exp_sin = (ex(sig + 2 * lo) - ex(delta)) / 2j      # e^{i k sig} sin(2 k lo)
    exp_cos = (ex(sig + 2 * lo) + ex(delta)) / 2.0     # e^{i k sig} cos(2 k lo)
    i1 = (ex(sig) * (lo ** 2 / 4.0 + 1.0 / (8.0 * k2))
          - exp_sin * lo / (4.0 * kap) - exp_cos / (8.0 * k2))
    # region [lo, hi]: sin(k lo) e^{i k hi} int_lo^hi y sin(k y) e^{i k y} dy
    # with antiderivative (1/2i)[e^{2iky}(2iky - 1)/(-4 k^2) - y^2/2]
    def h_exp(y, base):
        # sin(k lo) e^{i k hi} e^{2 i k y} = [E(base+2y) pairs], kept decaying
        return (ex(sig + 2 * y) - ex(delta + 2 * y)) / 2j \
            * (2j * kap * y - 1.0) / (-4.0 * k2)

    g2 = (ex(sig) - ex(delta)) / 2j                    # sin(k lo) e^{i k hi}
    bracket = (h_exp(hi, None) - h_exp(lo, None)) - g2 * (hi ** 2 - lo ** 2) / 2.0
    i2 = bracket / 2j
    # region [hi, inf): sin(k lo) sin(k hi) e^{2 i k hi} (2 i k hi - 1)/(4 k^2)
    sin_sin_exp = (ex(sig) + ex(2 * hi + delta)
                   - ex(delta) - ex(2 * hi + sig)) / 4.0
    i3 = sin_sin_exp * (2j * kap * hi - 1.0) / (4.0 * k2)
    return (i1 + i2 + i3) / k2


def curvature_correction(z, x: float, xp: float, rho: float,
                         quad_tol: float = 1e-9) -> complex:
    """Leading inverse-radius wall-curvature correction at zero potential.

    Three contributions: the flat reduction reweighted by (x + x'), the
    first angular correction of the Legendre continualization (a J1-weighted
    transform, evaluated here as a perpendicular-distance derivative of the
    closed free form), and the second-order term built from the squared 1D
    kernel.  Small wall distances reproduce a modified-Bessel-K0 prefactor
    off axis and the squared-sum plus logarithmic pair on axis.
    """
    from .stratified import _k_breakpoints, _refining_panel_quad

    zc = as_energy(z).z
    if zc.imag <= 0:
        raise ValueError("needs Im z > 0")
    kap0 = sqrt_upper(zc)
    term_a = (x + xp) * free_halfspace_green3d(zc, x, xp, rho)

    if rho > 0.0:
        d1 = np.hypot(x - xp, rho)
        d2 = np.hypot(x + xp, rho)
        def dgd(d):
            return (1j * kap0 - 1.0 / d) * np.exp(1j * kap0 * d) / d * (rho / d)
        dg_drho = (-1.0 / (4.0 * np.pi)) * (dgd(d1) - dgd(d2))
        term_b = 0.5 * rho * (x + xp) * dg_drho
    else:
        term_b = 0.0 + 0.0j

    delta_eff = max(abs(x - xp), 0.3 * (x + xp))
    k_tail = np.log(1e16) / delta_eff + 4.0 * abs(kap0)
    from scipy.special import j0 as _j0

    def fvec(karr):
        kaps = np.array([sqrt_upper(zc - k * k) for k in karr])
        vals = _double_free_integral(kaps, x, xp)
        return karr ** 3 * _j0(karr * rho) * vals

    breaks = _k_breakpoints(abs(kap0), k_tail, rho, delta_eff)
    term_c = _refining_panel_quad(fvec, breaks, rtol=quad_tol) / np.pi
    return complex(term_a + term_b + term_c)
