"""Implicit-surface wall geometry and universal boundary coefficients.

The wall is a level set phi(r) = C0; interior points carry the level-gap
coordinate xi = C0 - phi(r) and reach their foot point along the trajectory
orthogonal to every intermediate level set.  The wall expansion of the
one-point profile in xi has a universal slope fixed by |grad phi| and a
log-term strength fixed by the sum of principal curvatures of the wall;
re-expressed in the metric distance tau both become parametrization free
(slope -1, log strength minus the mean curvature).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import GreensError
from .foundation import as_energy, sqrt_upper
from .stratified import free_halfspace_green3d

__all__ = [
    "ImplicitSurface",
    "FootPoint",
    "BoundaryPrediction",
    "foot_point",
    "expansion_vectors",
    "boundary_prediction",
    "curved_green_conjecture",
    "make_surface",
    "surface_names",
]


class FootPointNonConvergence(GreensError):
    """The orthogonal-trajectory flow left the tubular neighborhood."""


@dataclass(frozen=True)
class ImplicitSurface:
    """Level-set boundary descriptor with derivative evaluators.

    Catalog shapes carry analytic gradient/Hessian/third derivatives;
    anything built from a bare callable falls back to central differences.
    phi carries the dimension of length so that xi = C0 - phi is a length.
    """

    name: str
    c0: float
    phi: Callable
    grad: Callable = None
    hess: Callable = None
    third: Callable = None
    fd_step: float = 1e-5

    def value(self, r) -> float:
        return float(self.phi(np.asarray(r, dtype=float)))

    def gradient(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(r), dtype=float)
        h = self.fd_step
        out = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            out[i] = (self.phi(r + e) - self.phi(r - e)) / (2 * h)
        return out

    def hessian(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.hess is not None:
            return np.asarray(self.hess(r), dtype=float)
        h = self.fd_step * 10
        out = np.empty((3, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            out[:, j] = (self.gradient(r + e) - self.gradient(r - e)) / (2 * h)
        return 0.5 * (out + out.T)

    def third_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.third is not None:
            return np.asarray(self.third(r), dtype=float)
        h = self.fd_step * 30
        out = np.empty((3, 3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            out[:, :, k] = (self.hessian(r + e) - self.hessian(r - e)) / (2 * h)
        return out

    # -- catalog -------------------------------------------------------------

    @staticmethod
    def plane(normal=(0.0, 0.0, 1.0), c0: float = 0.0) -> "ImplicitSurface":
        n = np.asarray(normal, dtype=float)
        return ImplicitSurface(
            name="plane", c0=float(c0),
            phi=lambda r: float(np.dot(n, r)),
            grad=lambda r: n.copy(),
            hess=lambda r: np.zeros((3, 3)),
            third=lambda r: np.zeros((3, 3, 3)))

    @staticmethod
    def sphere(radius: float, center=(0.0, 0.0, 0.0)) -> "ImplicitSurface":
        c = np.asarray(center, dtype=float)

        def grad(r):
            d = r - c
            return d / np.linalg.norm(d)

        def hess(r):
            d = r - c
            rho = np.linalg.norm(d)
            n = d / rho
            return (np.eye(3) - np.outer(n, n)) / rho

        def third(r):
            d = r - c
            rho = np.linalg.norm(d)
            n = d / rho
            out = 3.0 * np.einsum("i,j,k->ijk", n, n, n)
            for i in range(3):
                for j in range(3):
                    for k in range(3):
                        if i == j:
                            out[i, j, k] -= n[k]
                        if i == k:
                            out[i, j, k] -= n[j]
                        if j == k:
                            out[i, j, k] -= n[i]
            return out / rho ** 2

        return ImplicitSurface(
            name="sphere", c0=float(radius),
            phi=lambda r: float(np.linalg.norm(np.asarray(r) - c)),
            grad=grad, hess=hess, third=third)

    @staticmethod
    def cylinder(radius: float) -> "ImplicitSurface":
        # axis along z; phi = sqrt(x^2 + y^2)
        def grad(r):
            rho = np.hypot(r[0], r[1])
            return np.array([r[0] / rho, r[1] / rho, 0.0])

        def hess(r):
            rho = np.hypot(r[0], r[1])
            m = np.array([r[0] / rho, r[1] / rho])
            out = np.zeros((3, 3))
            out[:2, :2] = (np.eye(2) - np.outer(m, m)) / rho
            return out

        def third(r):
            rho = np.hypot(r[0], r[1])
            m = np.array([r[0] / rho, r[1] / rho])
            out = np.zeros((3, 3, 3))
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        v = 3.0 * m[i] * m[j] * m[k]
                        if i == j:
                            v -= m[k]
                        if i == k:
                            v -= m[j]
                        if j == k:
                            v -= m[i]
                        out[i, j, k] = v / rho ** 2
            return out

        return ImplicitSurface(
            name="cylinder", c0=float(radius),
            phi=lambda r: float(np.hypot(r[0], r[1])),
            grad=grad, hess=hess, third=third)

    @staticmethod
    def quadric(a, b, c0: float) -> "ImplicitSurface":
        """phi = r.A r / 2 + b.r, analytic through the (vanishing) third order."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return ImplicitSurface(
            name="quadric", c0=float(c0),
            phi=lambda r: float(0.5 * r @ a @ r + b @ r),
            grad=lambda r: a @ r + b,
            hess=lambda r: a.copy(),
            third=lambda r: np.zeros((3, 3, 3)))

    def reparametrized(self, f, df, d2f, d3f, name: str = "") -> "ImplicitSurface":
        """Surface described by f(phi) = f(C0) with chain-rule derivatives."""
        base = self

        def grad(r):
            return df(base.value(r)) * base.gradient(r)

        def hess(r):
            p = base.value(r)
            g = base.gradient(r)
            return d2f(p) * np.outer(g, g) + df(p) * base.hessian(r)

        def third(r):
            p = base.value(r)
            g = base.gradient(r)
            h = base.hessian(r)
            t = base.third_derivative(r)
            out = d3f(p) * np.einsum("i,j,k->ijk", g, g, g) + df(p) * t
            out += d2f(p) * (np.einsum("ij,k->ijk", h, g)
                             + np.einsum("ik,j->ijk", h, g)
                             + np.einsum("jk,i->ijk", h, g))
            return out

        return ImplicitSurface(
            name=name or f"{base.name}-reparam", c0=float(f(base.c0)),
            phi=lambda r: float(f(base.phi(r))), grad=grad, hess=hess,
            third=third)


@dataclass(frozen=True)
class FootPoint:
    """Interior point, its wall foot point, and the two gap coordinates."""

    r: np.ndarray
    r0: np.ndarray
    xi: float        # level gap C0 - phi(r)
    tau: float       # metric distance |r - r0|
    u1: np.ndarray   # leading expansion vector of the return trajectory
    u2: np.ndarray


def foot_point(surface: ImplicitSurface, r, flow_tol: float = 1e-12) -> FootPoint:
    """Boundary point reached along the trajectory orthogonal to level sets.

    The flow is parametrized by the level value (d r / dC = grad phi /
    |grad phi|^2 raises phi at unit rate), integrated from phi(r) to C0 and
    polished by Newton steps along the local gradient.  This is not the
    metric closest-point projection; the two differ at second order in the
    gap, which is exactly where the expansion vectors matter.
    """
    r = np.asarray(r, dtype=float)
    c_start = surface.value(r)
    xi = surface.c0 - c_start

    def rhs(c, y):
        g = surface.gradient(y)
        gg = float(g @ g)
        if gg < 1e-20:
            raise FootPointNonConvergence("gradient vanished on the trajectory")
        return g / gg

    if abs(xi) < 1e-15:
        r0 = r.copy()
    else:
        sol = solve_ivp(rhs, (c_start, surface.c0), r, method="DOP853",
                        rtol=flow_tol, atol=flow_tol)
        if not sol.success:
            raise FootPointNonConvergence(
                "orthogonal-trajectory flow failed: " + sol.message)
        r0 = sol.y[:, -1]
    for _ in range(10):
        miss = surface.c0 - surface.value(r0)
        if abs(miss) <= 1e-13 * max(1.0, abs(surface.c0)):
            break
        g = surface.gradient(r0)
        r0 = r0 + g * (miss / float(g @ g))
    else:
        raise FootPointNonConvergence("Newton polish did not settle")
    u1, u2 = expansion_vectors(surface, r0)
    return FootPoint(r=r, r0=r0, xi=float(xi), tau=float(np.linalg.norm(r - r0)),
                     u1=u1, u2=u2)


def expansion_vectors(surface: ImplicitSurface, r0):
    """First two Taylor vectors of the return trajectory r(xi) from the wall.

    u1 = -grad phi / |grad phi|^2; u2 follows from differentiating the flow
    field along itself (half the directional derivative of u1 along u1).
    """
    r0 = np.asarray(r0, dtype=float)
    g = surface.gradient(r0)
    h = surface.hessian(r0)
    g2 = float(g @ g)
    u1 = -g / g2
    hg = h @ g
    u2 = hg / (2.0 * g2 ** 2) - g * float(g @ hg) / g2 ** 3
    return u1, u2


@dataclass(frozen=True)
class BoundaryPrediction:
    """Universal wall-expansion coefficients at one foot point.

    In the level-gap coordinate: profile ~ c1 xi + d2 xi^2 ln(xi/xi0) + ...
    (d1 = 0 always).  In the metric distance the slope is exactly -1 and
    the log strength is minus the mean curvature of the wall, independent
    of how the surface function is parametrized.
    """

    c1: complex
    d1: complex
    d2: complex
    xi0: complex
    tau_slope: complex
    tau_log_coeff: complex
    tau0: complex
    grad_norm: float
    curvature_sum: float     # kappa_1 + kappa_2 (twice the mean curvature)


def boundary_prediction(surface: ImplicitSurface, r0, z) -> BoundaryPrediction:
    """Predicted wall coefficients from the local surface derivatives.

    The log strength involves the curvature sum (lap phi minus the
    normal-normal Hessian component, over |grad phi|), which is what the
    order-by-order cancellation of the inverse relation produces in the
    orthogonal-trajectory coordinates; for the catalog shapes the
    normal-normal component vanishes and the bare Laplacian form applies.
    """
    r0 = np.asarray(r0, dtype=float)
    zc = as_energy(z).z
    g = surface.gradient(r0)
    gn = float(np.linalg.norm(g))
    if gn <= 0.0:
        raise ValueError("gradient must not vanish on the wall")
    h = surface.hessian(r0)
    lap = float(np.trace(h))
    nn = float(g @ h @ g) / gn ** 2
    curv = (lap - nn) / gn
    xi0 = 1j / sqrt_upper(zc)
    return BoundaryPrediction(
        c1=-1.0 / gn,
        d1=0.0,
        d2=-curv / (2.0 * gn ** 2),
        xi0=xi0,
        tau_slope=-1.0,
        tau_log_coeff=-curv / 2.0,
        tau0=xi0 / gn,
        grad_norm=gn,
        curvature_sum=curv)


def curved_green_conjecture(surface: ImplicitSurface, r0, z,
                            tau: float, taup: float) -> complex:
    """Wall-curvature form of the two-point function on a shared normal.

    Tangent half-space value at the two wall distances plus half the
    curvature sum times the universal bracket (the squared-sum term and the
    logarithm); the potential-dependent part starts at order tau tau' and
    is not modeled.  Matches the full ball computation up to O(tau tau')
    plus the next inverse-radius order.
    """
    zc = as_energy(z).z
    if tau == taup:
        raise ValueError("needs distinct wall distances (half-space value singular)")
    pred = boundary_prediction(surface, r0, zc)
    kap = sqrt_upper(zc)
    half = free_halfspace_green3d(zc, tau, taup, 0.0)
    s = tau + taup
    bracket = (tau * taup / (4.0 * np.pi * s ** 2)
               - tau * taup * zc / (4.0 * np.pi) * np.log(-1j * kap * s))
    return complex(half + 0.5 * pred.curvature_sum * bracket)


# ---------------------------------------------------------------------------
# Named catalog for scenario configs
# ---------------------------------------------------------------------------

def make_surface(name: str, **params) -> ImplicitSurface:
    factories = {
        "plane": ImplicitSurface.plane,
        "sphere": ImplicitSurface.sphere,
        "cylinder": ImplicitSurface.cylinder,
        "quadric": ImplicitSurface.quadric,
    }
    try:
        return factories[name](**params)
    except KeyError:
        raise KeyError(f"unknown surface {name!r}; known: {sorted(factories)}")


def surface_names():
    return ["cylinder", "plane", "quadric", "sphere"]
