"""Shared numerical kernels and model types.

Branch-fixed complex square root, the special functions needed by the
dimensional reductions, adaptive integration of complex second-order ODEs,
least-squares fitting on wall-expansion bases, and the potential / domain
model types consumed by every solver module.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import j0 as _sp_j0, j1 as _sp_j1

from .errors import RankDeficientBasis, StepSizeUnderflow

__all__ = [
    "ComplexEnergy",
    "PotentialModel",
    "DomainSpec",
    "ExpansionFit",
    "OdeSolution",
    "sqrt_upper",
    "as_energy",
    "special",
    "legendre_all",
    "integrate_ode2",
    "fit_expansion",
    "geometric_window",
    "gauge_shift",
]


def sqrt_upper(z: complex) -> complex:
    """Square root with the branch fixed by Im(w) >= 0.

    For real positive ``z`` this is the positive root (the limit taken from
    above the cut); the function is continuous on the upper half-plane and
    on the negative real axis approached from above.
    """
    w = cmath.sqrt(z)
    if w.imag < 0.0:
        w = -w
    return w


@dataclass(frozen=True)
class ComplexEnergy:
    """Spectral parameter with its branch-fixed square root cached."""

    z: complex
    sqrt_z: complex = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "sqrt_z", sqrt_upper(self.z))


def as_energy(z) -> ComplexEnergy:
    return z if isinstance(z, ComplexEnergy) else ComplexEnergy(complex(z))


# ---------------------------------------------------------------------------
# Potential and domain models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialModel:
    """Evaluable scalar potential with Taylor data at a reference point.

    ``kind`` is one of zero | polynomial | tabulated | radial | stratified |
    field3d.  For 1D-like kinds ``fn`` maps a coordinate (scalar or array)
    to a real value; for ``field3d`` it maps a length-3 point.  Half-line
    potentials carry ``tail_value``/``tail_start``: beyond ``tail_start`` the
    potential equals ``tail_value`` to negligible accuracy, which the
    half-line solvers use to seed the outgoing solution.
    """

    kind: str
    fn: Callable
    name: str = ""
    poly: tuple | None = None          # ascending coefficients, exact Taylor data
    taylor_fn: Callable | None = None  # optional analytic (x0, n) -> coefficients
    tail_value: float = 0.0
    tail_start: float = 0.0

    def __call__(self, x):
        return self.fn(x)

    def taylor(self, x0: float, n: int) -> np.ndarray:
        """First ``n`` Taylor coefficients u_k = u^(k)(x0)/k!, k = 0..n-1.

        Exact for polynomial kind; otherwise from the analytic override or a
        local polynomial fit (finite-difference grade accuracy).
        """
        if n <= 0:
            return np.zeros(0)
        if self.poly is not None:
            c = np.zeros(n)
            # binomial shift of the ascending coefficient list to x0
            for m, am in enumerate(self.poly):
                for k in range(min(m, n - 1) + 1):
                    c[k] += am * math.comb(m, k) * x0 ** (m - k)
            return c
        if self.taylor_fn is not None:
            return np.asarray(self.taylor_fn(x0, n), dtype=float)
        return _taylor_by_local_fit(self.fn, x0, n)

    def shifted(self, dc: float) -> "PotentialModel":
        """Potential with a constant added (used by the gauge shift)."""
        base = self
        new_poly = None
        if base.poly is not None:
            p = list(base.poly) or [0.0]
            p[0] += dc
            new_poly = tuple(p)
        new_taylor = None
        if base.taylor_fn is not None:
            def new_taylor(x0, n, _f=base.taylor_fn, _dc=dc):
                c = np.asarray(_f(x0, n), dtype=float).copy()
                if n > 0:
                    c[0] += _dc
                return c
        return replace(
            self,
            fn=lambda x, _f=base.fn, _dc=dc: _f(x) + _dc,
            poly=new_poly,
            taylor_fn=new_taylor,
            tail_value=base.tail_value + dc,
        )

    def scaled(self, s: float) -> "PotentialModel":
        """Potential multiplied by a constant (shooting continuation)."""
        base = self
        new_poly = tuple(s * a for a in base.poly) if base.poly is not None else None
        new_taylor = None
        if base.taylor_fn is not None:
            def new_taylor(x0, n, _f=base.taylor_fn, _s=s):
                return _s * np.asarray(_f(x0, n), dtype=float)
        return replace(
            self,
            fn=lambda x, _f=base.fn, _s=s: _s * _f(x),
            poly=new_poly,
            taylor_fn=new_taylor,
            tail_value=s * base.tail_value,
        )

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "PotentialModel":
        return PotentialModel("zero", lambda x: np.zeros_like(np.asarray(x, dtype=float)) + 0.0,
                              name="zero", poly=(0.0,))

    @staticmethod
    def polynomial(coeffs: Sequence[float], kind: str = "polynomial",
                   name: str = "") -> "PotentialModel":
        c = tuple(float(a) for a in coeffs)

        def fn(x, _c=c):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for a in reversed(_c):
                out = out * x + a
            return out if out.ndim else float(out)

        return PotentialModel(kind, fn, name=name or "polynomial", poly=c)

    @staticmethod
    def tabulated(xs: Sequence[float], us: Sequence[float], name: str = "tabulated"
                  ) -> "PotentialModel":
        from scipy.interpolate import CubicSpline
        spline = CubicSpline(np.asarray(xs, float), np.asarray(us, float))
        return PotentialModel("tabulated", lambda x: spline(x), name=name)

    @staticmethod
    def stratified(fn: Callable, name: str = "stratified", tail_value: float = 0.0,
                   tail_start: float = 0.0, taylor_fn: Callable | None = None
                   ) -> "PotentialModel":
        return PotentialModel("stratified", fn, name=name, taylor_fn=taylor_fn,
                              tail_value=tail_value, tail_start=tail_start)

    @staticmethod
    def radial(fn: Callable, name: str = "radial", taylor_fn: Callable | None = None
               ) -> "PotentialModel":
        return PotentialModel("radial", fn, name=name, taylor_fn=taylor_fn)

    @staticmethod
    def field3d(fn: Callable, name: str = "field3d") -> "PotentialModel":
        return PotentialModel("field3d", fn, name=name)


def _taylor_by_local_fit(fn, x0, n, half_width=0.05):
    """Taylor coefficients from a least-squares polynomial on a local window."""
    deg = n - 1
    m = max(4 * n, 16)
    t = np.cos(np.pi * (np.arange(m) + 0.5) / m) * half_width
    vals = np.asarray([fn(x0 + ti) for ti in t], dtype=float)
    series = np.polynomial.polynomial.Polynomial.fit(t, vals, deg).convert()
    c = np.zeros(n)
    c[: len(series.coef)] = series.coef[:n]
    return c


@dataclass(frozen=True)
class DomainSpec:
    """Confining domain with hard (Dirichlet) walls."""

    kind: str                 # interval | half_line | ball | half_space | cylinder | implicit
    length: float = 0.0       # interval (0, length)
    radius: float = 0.0       # ball / cylinder
    surface: object = None    # implicit kind only

    def __post_init__(self):
        if self.kind == "interval" and not self.length > 0.0:
            raise ValueError("interval domain needs length > 0")
        if self.kind in ("ball", "cylinder") and not self.radius > 0.0:
            raise ValueError(f"{self.kind} domain needs radius > 0")

    @staticmethod
    def interval(length: float) -> "DomainSpec":
        return DomainSpec("interval", length=float(length))

    @staticmethod
    def half_line() -> "DomainSpec":
        return DomainSpec("half_line")

    @staticmethod
    def ball(radius: float) -> "DomainSpec":
        return DomainSpec("ball", radius=float(radius))

    @staticmethod
    def half_space() -> "DomainSpec":
        return DomainSpec("half_space")


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _i0_complex(x: complex) -> complex:
    return complex(mpmath.besseli(0, mpmath.mpc(x)))


def _k0_complex(x: complex) -> complex:
    if x == 0:
        raise ValueError("K0 is singular at 0")
    return complex(mpmath.besselk(0, mpmath.mpc(x)))


def legendre_p(l: int, x: float) -> float:
    """Legendre polynomial P_l(x) by the three-term recurrence, |x| <= 1."""
    if l < 0 or int(l) != l:
        raise ValueError("degree must be a non-negative integer")
    if np.max(np.abs(x)) > 1.0 + 1e-12:
        raise ValueError("LegendreP argument must satisfy |x| <= 1")
    return legendre_all(l, x)[l]


def legendre_all(l_max: int, x) -> np.ndarray:
    """P_0(x) .. P_lmax(x) stacked along axis 0 (recurrence, stable for |x|<=1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((l_max + 1,) + x.shape)
    out[0] = 1.0
    if l_max >= 1:
        out[1] = x
    for l in range(1, l_max):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


_SPECIAL = {
    "J0": lambda x: float(_sp_j0(x)),
    "J1": lambda x: float(_sp_j1(x)),
    "I0": _i0_complex,
    "K0": _k0_complex,
}


def special(fn: str, arg, l: int | None = None):
    """Dispatch for the special functions used by the reductions.

    ``fn`` is one of J0, J1, I0, K0, LegendreP.  J0/J1 take real arguments;
    I0/K0 accept complex ones (K0 rejects 0); LegendreP needs ``l`` and
    |arg| <= 1.
    """
    if fn == "LegendreP":
        if l is None:
            raise ValueError("LegendreP needs the degree l")
        return legendre_p(l, arg)
    try:
        impl = _SPECIAL[fn]
    except KeyError:
        raise ValueError(f"unknown special function {fn!r}") from None
    return impl(arg)


# ---------------------------------------------------------------------------
# Complex second-order ODE integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OdeSolution:
    """Solution record for psi'' = q(x) psi with dense evaluation.

    ``value``/``derivative`` evaluate psi and psi' at scalars or arrays
    anywhere between ``x0`` and ``x1`` (dense output of the adaptive run).
    """

    x0: float
    x1: float
    _sol: object
    q: Callable

    def value(self, x):
        return self._sol(x)[0]

    def derivative(self, x):
        return self._sol(x)[1]

    def second_derivative(self, x):
        # psi'' = q psi, exact on the integrated trajectory
        return np.asarray(self.q(x)) * self._sol(x)[0]

    @property
    def mesh(self) -> np.ndarray:
        return self._sol.ts if hasattr(self._sol, "ts") else None


def integrate_ode2(q: Callable, y0: complex, dy0: complex, x0: float, x1: float,
                   tol: float = 1e-10, max_step: float = np.inf) -> OdeSolution:
    """Integrate psi'' = q(x) psi from x0 to x1 with local error control.

    ``q`` maps position to a complex value; backward runs (x1 < x0) are
    allowed.  Raises StepSizeUnderflow with the failing location if the
    integrator stalls.
    """

    def rhs(x, y):
        return (y[1], q(x) * y[0])

    sol = solve_ivp(rhs, (x0, x1), np.array([y0, dy0], dtype=complex),
                    method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True, max_step=max_step)
    if not sol.success:
        raise StepSizeUnderflow(
            f"integration stalled near x = {sol.t[-1]:.6g}: {sol.message}",
            location=float(sol.t[-1]))
    return OdeSolution(x0=x0, x1=x1, _sol=sol.sol, q=q)


# ---------------------------------------------------------------------------
# Wall-expansion least-squares fitting
# ---------------------------------------------------------------------------

#: basis labels understood by :func:`fit_expansion`; ``xi^p`` powers are
#: accepted for any small positive integer p, ``xi2log`` is xi^2 ln(xi/xi0).



def _basis_column(label: str, xi: np.ndarray, xi0: complex) -> np.ndarray:
    if label == "xi":
        return xi.astype(complex)
    if label.startswith("xi") and label.endswith("log"):
        p = int(label[2:-3])
        return xi ** p * np.log(xi / xi0)
    if label.startswith("xi^"):
        return xi.astype(complex) ** int(label[3:])
    if label.startswith("xi") and label[2:].isdigit():
        return xi.astype(complex) ** int(label[2:])
    raise ValueError(f"unknown basis label {label!r}")


@dataclass(frozen=True)
class ExpansionFit:
    """Least-squares wall expansion on a sampled window."""

    labels: tuple
    coefficients: np.ndarray
    residual: float            # RMS misfit over the window
    xi0: complex
    drift: dict | None = None  # per-label coefficient change on the half window

    def __getitem__(self, label: str) -> complex:
        return complex(self.coefficients[self.labels.index(label)])


def fit_expansion(samples, labels: Sequence[str], xi0: complex = 1.0,
                  check_drift: bool = False) -> ExpansionFit:
    """Fit sampled values to the wall basis by complex least squares.

    ``samples`` is a pair ``(xi, values)`` of equal-length arrays (all
    ``xi > 0``) or an iterable of ``(xi, value)`` pairs.  Needs at least
    twice as many samples as basis elements.  Raises RankDeficientBasis when
    the window cannot separate the requested elements (for instance xi^2
    from xi^2 ln xi on a too-narrow window).
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        xi, vals = samples
    else:
        pairs = list(samples)
        xi = np.array([p[0] for p in pairs], dtype=float)
        vals = np.array([p[1] for p in pairs], dtype=complex)
    xi = np.asarray(xi, dtype=float)
    vals = np.asarray(vals, dtype=complex)
    labels = tuple(labels)
    if len(xi) < 2 * len(labels):
        raise ValueError("need at least 2x as many samples as basis elements")
    if np.any(xi <= 0.0):
        raise ValueError("all xi must be positive")

    def solve(xi_w, vals_w):
        cols = [_basis_column(lb, xi_w, xi0) for lb in labels]
        a = np.column_stack(cols)
        norms = np.linalg.norm(a, axis=0)
        if np.any(norms == 0.0):
            raise RankDeficientBasis("basis column vanishes on the window")
        coef, _, rank, sv = np.linalg.lstsq(a / norms, vals_w, rcond=None)
        if rank < len(labels) or sv[-1] < 1e-13 * sv[0]:
            raise RankDeficientBasis(
                "window too narrow to separate the requested basis elements")
        coef = coef / norms
        res = vals_w - a @ coef
        return coef, float(np.sqrt(np.mean(np.abs(res) ** 2)))

    coef, rms = solve(xi, vals)
    drift = None
    if check_drift:
        half = xi <= np.sqrt(xi.min() * xi.max())
        if np.count_nonzero(half) >= 2 * len(labels):
            coef_h, _ = solve(xi[half], vals[half])
            drift = {lb: abs(coef_h[i] - coef[i]) for i, lb in enumerate(labels)}
    return ExpansionFit(labels=labels, coefficients=coef, residual=rms,
                        xi0=complex(xi0), drift=drift)


def geometric_window(lo: float, hi: float, count: int = 64) -> np.ndarray:
    """Geometrically spaced sample abscissas on [lo, hi]."""
    return np.geomspace(lo, hi, count)


def gauge_shift(u: PotentialModel, z: complex, x0: float = 0.0):
    """Remove the constant part of the potential at the wall reference point.

    Returns ``(u - u0, z - u0)``; Green's functions are invariant under the
    pair transformation.
    """
    u0 = float(u.taylor(x0, 1)[0])
    if u0 == 0.0:
        return u, complex(z)
    return u.shifted(-u0), complex(z) - u0
