"""Exact gradient-expansion engine for the 3D one-point profile.

The resolvent kernel, written against plane waves, generates an infinite
series of differential polynomials in the potential over powers of
(z - u - k^2).  This module builds those coefficients with exact Gaussian
rational arithmetic, reduces the wave-vector integrals to closed form on
the diagonal, assembles the direct series for the one-point profile, and
evaluates the inverse profile relation (with its first two multi-point
correction groups) on sampled 3D fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .foundation import as_energy

__all__ = [
    "DiffPolyTerm",
    "AlphaSeries",
    "NuField3D",
    "alpha_terms",
    "k_reduce_diagonal",
    "radial_k_integral",
    "gradient_coefficient_table",
    "nu_direct_series",
    "inverse_rhs",
    "phi_fields",
    "field_derivatives",
]

# coefficients are Gaussian rationals stored as (re, im) Fraction pairs
_ZERO = (Fraction(0), Fraction(0))
_ONE = (Fraction(1), Fraction(0))
_TWO_I = (Fraction(0), Fraction(2))


def _qc_add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _qc_mul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _qc_scale(a, s: Fraction):
    return (a[0] * s, a[1] * s)


def _qc_is_zero(a):
    return a[0] == 0 and a[1] == 0


@dataclass(frozen=True)
class DiffPolyTerm:
    """One monomial: coeff * prod of potential derivatives * k-monomial.

    ``factors`` is a sorted tuple of derivative multi-indices applied to the
    potential (e.g. (2, 0, 0) is the second derivative along the first
    axis); ``kmono`` holds the wave-vector exponents.  Coefficients are
    exact Gaussian rationals.
    """

    coeff: tuple           # (Fraction re, Fraction im)
    factors: tuple         # sorted tuple of (a, b, c)
    kmono: tuple           # (e1, e2, e3)

    @property
    def k_degree(self) -> int:
        return sum(self.kmono)

    def text(self) -> str:
        re, im = self.coeff
        coeff = f"({re}{'+' if im >= 0 else '-'}{abs(im)}i)"
        pieces = [coeff]
        for f in self.factors:
            pieces.append("u[" + ",".join(map(str, f)) + "]")
        for i, e in enumerate(self.kmono):
            if e:
                pieces.append(f"k{i + 1}^{e}")
        return " * ".join(pieces)


@dataclass(frozen=True)
class AlphaSeries:
    """All terms of one order of the plane-wave resolvent expansion."""

    n: int
    terms: tuple           # tuple of DiffPolyTerm, canonically ordered

    def to_text(self) -> str:
        lines = [f"order {self.n}: {len(self.terms)} terms"]
        lines += [t.text() for t in self.terms]
        return "\n".join(lines)

    def k_parity_ok(self) -> bool:
        """Structural parity of the recursion, checked per term.

        The wave-vector degree plus the total derivative order is even
        for every term (each recursion step changes both by one or
        neither); equivalently coefficients are real for even k-degree
        and imaginary for odd.
        """
        for t in self.terms:
            deriv_order = sum(sum(f) for f in t.factors)
            if (t.k_degree + deriv_order) % 2 != 0:
                return False
            re, im = t.coeff
            if t.k_degree % 2 == 0 and im != 0:
                return False
            if t.k_degree % 2 == 1 and re != 0:
                return False
        return True


def _canon(d: dict) -> tuple:
    terms = []
    for (factors, kmono), coeff in sorted(d.items()):
        if not _qc_is_zero(coeff):
            terms.append(DiffPolyTerm(coeff=coeff, factors=factors, kmono=kmono))
    return tuple(terms)


def _add(d: dict, factors, kmono, coeff):
    key = (tuple(sorted(factors)), tuple(kmono))
    d[key] = _qc_add(d.get(key, _ZERO), coeff)


def _derivative(d: dict, axis: int) -> dict:
    """Spatial derivative by the product rule on potential factors only."""
    out = {}
    for (factors, kmono), coeff in d.items():
        for i, f in enumerate(factors):
            nf = list(factors)
            mi = list(f)
            mi[axis] += 1
            nf[i] = tuple(mi)
            _add(out, nf, kmono, coeff)
    return out


def _laplacian(d: dict) -> dict:
    out = {}
    for ax in range(3):
        for key, coeff in _derivative(_derivative(d, ax), ax).items():
            out[key] = _qc_add(out.get(key, _ZERO), coeff)
    return out


def _k_dot_grad(d: dict) -> dict:
    out = {}
    for ax in range(3):
        for (factors, kmono), coeff in _derivative(d, ax).items():
            km = list(kmono)
            km[ax] += 1
            _add(out, factors, km, coeff)
    return out


def _times_factor(d: dict, factor, k_axis=None) -> dict:
    out = {}
    for (factors, kmono), coeff in d.items():
        nf = list(factors) + [tuple(factor)]
        km = list(kmono)
        if k_axis is not None:
            km[k_axis] += 1
        _add(out, nf, km, coeff)
    return out


def _scale_all(d: dict, s) -> dict:
    if isinstance(s, Fraction) or isinstance(s, int):
        s = (Fraction(s), Fraction(0))
    return {k: _qc_mul(v, s) for k, v in d.items()}


def _merge(*dicts) -> dict:
    out = {}
    for d in dicts:
        for k, v in d.items():
            out[k] = _qc_add(out.get(k, _ZERO), v)
    return out


@lru_cache(maxsize=None)
def _alpha_dict_cached(n: int):
    if n < 1:
        return {}
    if n == 1:
        return {((), (0, 0, 0)): _ONE}
    a1 = dict(_alpha_dict_cached(n - 1))
    a2 = dict(_alpha_dict_cached(n - 2))
    a3 = dict(_alpha_dict_cached(n - 3))

    out = _scale_all(_merge(_laplacian(a1), _scale_all(_k_dot_grad(a1), _TWO_I)),
                     Fraction(-1))
    c2 = Fraction(n - 2)
    if c2 != 0 and a2:
        # 2i alpha k.grad(u): one derivative-of-u factor paired with one k
        kgu = {}
        for ax, e in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
            for key, coeff in _times_factor(a2, e, k_axis=ax).items():
                kgu[key] = _qc_add(kgu.get(key, _ZERO), coeff)
        kgu = _scale_all(kgu, _TWO_I)
        # 2 grad(alpha).grad(u)
        gag = {}
        for ax, e in enumerate(((1, 0, 0), (0, 1, 0), (0, 0, 1))):
            for key, coeff in _times_factor(_derivative(a2, ax), e).items():
                gag[key] = _qc_add(gag.get(key, _ZERO), coeff)
        gag = _scale_all(gag, Fraction(2))
        # alpha lap(u)
        alu = {}
        for e in ((2, 0, 0), (0, 2, 0), (0, 0, 2)):
            for key, coeff in _times_factor(a2, e).items():
                alu[key] = _qc_add(alu.get(key, _ZERO), coeff)
        out = _merge(out, _scale_all(_merge(kgu, gag, alu), -c2))
    c3 = Fraction((n - 2) * (n - 3))
    if c3 != 0 and a3:
        gug = {}
        for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
            for key, coeff in _times_factor(_times_factor(a3, e), e).items():
                gug[key] = _qc_add(gug.get(key, _ZERO), coeff)
        out = _merge(out, _scale_all(gug, -c3))
    return {k: v for k, v in out.items() if not _qc_is_zero(v)}


def alpha_terms(n: int) -> AlphaSeries:
    """Exact expansion coefficients of order n from the three-step recursion."""
    if n < 1:
        raise ValueError("order must be >= 1")
    return AlphaSeries(n=n, terms=_canon(_alpha_dict_cached(n)))


# ---------------------------------------------------------------------------
# Wave-vector reduction on the diagonal
# ---------------------------------------------------------------------------

def _double_factorial(m: int) -> int:
    if m <= 0:
        return 1
    return math.prod(range(m, 0, -2))


def _angular_moment(kmono) -> Fraction:
    """Isotropic average of a unit-vector monomial; zero for odd exponents."""
    if any(e % 2 for e in kmono):
        return Fraction(0)
    num = math.prod(_double_factorial(e - 1) for e in kmono)
    den = _double_factorial(sum(kmono) + 1)
    return Fraction(num, den)


def radial_k_integral(q: int, n_pow: int, w: complex) -> complex:
    """int_0^inf k^(2q) / (w - k^2)^n dk in closed form.

    Reduces to a Beta-function integral after the k^2 substitution; requires
    n > q + 1/2 for convergence and w off the non-negative real axis (the
    integrand would hit a pole there).  a = sqrt(-w) uses the principal
    branch (Re a > 0 exactly when w is off that axis).
    """
    if n_pow < q + 1:
        raise ValueError("integral diverges: need n >= q + 1")
    w = complex(w)
    if w.imag == 0.0 and w.real >= 0.0:
        raise ValueError("branch point: w on the non-negative real axis")
    a = np.sqrt(-w)  # principal branch, Re a > 0
    # Gamma(q + 1/2) Gamma(n - q - 1/2) / (2 Gamma(n)), all half-integer
    num = (Fraction(_double_factorial(2 * q - 1), 2 ** q)
           * Fraction(_double_factorial(2 * (n_pow - q - 1) - 1), 2 ** (n_pow - q - 1)))
    rat = num / (2 * math.factorial(n_pow - 1))
    return (-1) ** n_pow * complex(a) ** (2 * q + 1 - 2 * n_pow) * float(rat) * np.pi


def _term_reduction(n: int, term: DiffPolyTerm):
    """Rational weight and root power of one term's diagonal contribution.

    Returns (rational, s2, factors) with the term contributing
        rational * prod(factors) * a^(-s2),    a = sqrt(u - z),
    to the profile (before the overall i of the direct-series convention),
    where s2 = 2 s is the odd integer twice the inverse-root power.
    The z-derivative rule sends 1/(w - k^2)^n to -n/(w - k^2)^(n+1) and the
    angular average plus the closed radial integral do the rest; the
    pi factors cancel against the measure.
    """
    moment = _angular_moment(term.kmono)
    if moment == 0:
        return None
    m = sum(term.kmono) // 2
    q = m + 1
    n_pow = n + 1
    if n_pow < q + 1:
        raise ValueError("divergent reduction after the z-derivative rule")
    # (2/pi) * (-n) * moment * (-1)^n_pow * G(q+1/2) G(n_pow-q-1/2) pi /(2 (n_pow-1)!)
    gam = (Fraction(_double_factorial(2 * q - 1), 2 ** q)
           * Fraction(_double_factorial(2 * (n_pow - q - 1) - 1), 2 ** (n_pow - q - 1)))
    rational = (Fraction(2) * Fraction(-n) * moment * (-1) ** n_pow * gam
                / (2 * math.factorial(n_pow - 1)))
    s2 = 2 * n_pow - 2 * q - 1         # a-power is -s2, s = s2 / 2
    coeff = _qc_scale(term.coeff, rational)
    return coeff, s2, term.factors


def k_reduce_diagonal(series, u_derivs: dict, z) -> complex:
    """Diagonal contribution of the given orders to i times the profile.

    ``series`` is an AlphaSeries or an iterable of them; ``u_derivs`` maps
    derivative multi-indices to numeric values at the point (the (0,0,0)
    entry is the potential value itself, default 0).  Odd wave-vector
    monomials average to zero; even ones reduce to closed-form radial
    integrals in a = sqrt(u - z).
    """
    if isinstance(series, AlphaSeries):
        series = [series]
    zc = as_energy(z).z
    u0 = complex(u_derivs.get((0, 0, 0), 0.0))
    w = zc - u0
    if w.imag == 0.0 and w.real >= 0.0:
        raise ValueError("branch point: z - u on the non-negative real axis")
    a = np.sqrt(-w)
    nu = 0.0 + 0.0j
    for s in series:
        for term in s.terms:
            red = _term_reduction(s.n, term)
            if red is None:
                continue
            coeff, s2, factors = red
            val = complex(float(coeff[0]), float(coeff[1]))
            for f in factors:
                val *= complex(u_derivs.get(f, 0.0))  # absent entries vanish
            nu += val * a ** (-s2)
    return 1j * nu


# ---------------------------------------------------------------------------
# Direct series: symbolic table and field evaluation
# ---------------------------------------------------------------------------

_INVARIANT_PATTERNS = {
    "one": {(): 1},
    "lap_u": {((2, 0, 0),): 1, ((0, 2, 0),): 1, ((0, 0, 2),): 1},
    "grad_u_sq": {((1, 0, 0), (1, 0, 0)): 1, ((0, 1, 0), (0, 1, 0)): 1,
                  ((0, 0, 1), (0, 0, 1)): 1},
    "bilap_u": {((4, 0, 0),): 1, ((0, 4, 0),): 1, ((0, 0, 4),): 1,
                ((2, 2, 0),): 2, ((2, 0, 2),): 2, ((0, 2, 2),): 2},
}


def gradient_coefficient_table(order: int = 7):
    """Exact rational coefficients of the direct profile series.

    Keys are (s2, invariant) with s2 twice the inverse-root power; the value
    multiplies invariant / (z - u)^(s2/2) in i times the profile, on the
    upper branch of the root.  Terms are grouped into rotational invariants
    and the grouping is checked member by member in exact arithmetic.
    """
    if order > 9:
        raise ValueError("orders beyond 9 blow up; not supported")
    raw = {}
    for n in range(1, order + 1):
        for term in alpha_terms(n).terms:
            red = _term_reduction(n, term)
            if red is None:
                continue
            coeff, s2, factors = red
            if s2 > order:
                continue
            # upper-branch rewrite a^(-s2) -> i (-1)^((s2-1)/2) w^(-s2/2),
            # times the overall i of the direct-series convention
            j = (s2 - 1) // 2
            sign = Fraction(-((-1) ** j))
            coeff = _qc_scale(coeff, sign)
            key = (s2, factors)
            raw[key] = _qc_add(raw.get(key, _ZERO), coeff)

    raw = {k: v for k, v in raw.items() if not _qc_is_zero(v)}
    grouped = {}
    leftover = dict(raw)
    for name, pattern in _INVARIANT_PATTERNS.items():
        s2_values = {s2 for (s2, f) in raw if f in pattern}
        for s2 in s2_values:
            base = None
            ok = True
            for f, mult in pattern.items():
                c = leftover.get((s2, f))
                if c is None:
                    ok = False
                    break
                unit = _qc_scale(c, Fraction(1, mult))
                if base is None:
                    base = unit
                elif unit != base:
                    raise AssertionError(
                        f"inconsistent isotropy for {name} at power {s2}/2")
            if ok and base is not None:
                if base[1] != 0:
                    raise AssertionError("table coefficient not real")
                grouped[(s2, name)] = base[0]
                for f in pattern:
                    leftover.pop((s2, f), None)
    if leftover:
        raise AssertionError(f"unrecognized invariants in table: {sorted(leftover)}")
    return grouped


def field_derivatives(u_callable, point, h: float = 1e-2, max_order: int = 4) -> dict:
    """Central-difference derivative table of a smooth 3D field at a point.

    Covers every multi-index with total order <= max_order via nested
    second-order stencils; accuracy O(h^2) per direction.
    """
    point = np.asarray(point, dtype=float)

    def d_axis(fn, axis, order):
        if order == 0:
            return fn
        if order == 1:
            def out(p):
                e = np.zeros(3)
                e[axis] = h
                return (d_axis(fn, axis, 0)(p + e) - d_axis(fn, axis, 0)(p - e)) / (2 * h)
        else:
            def out(p, _o=order):
                e = np.zeros(3)
                e[axis] = h
                inner = d_axis(fn, axis, _o - 2)
                return (inner(p + e) - 2 * inner(p) + inner(p - e)) / h ** 2
        return out

    table = {}
    for a in range(max_order + 1):
        for b in range(max_order + 1 - a):
            for c in range(max_order + 1 - a - b):
                fn = d_axis(d_axis(d_axis(u_callable, 0, a), 1, b), 2, c)
                table[(a, b, c)] = float(fn(point))
    return table


def nu_direct_series(u_derivs: dict, z, order: int = 7,
                     min_ratio: float | None = None):
    """Direct-series profile value and the exact coefficient table.

    ``u_derivs`` maps multi-indices to values (arrays allowed, broadcast
    elementwise); (0,0,0) is the potential itself.  The series converges
    only where |z - u| dominates the derivative scale (high-energy, slowly
    varying potentials); pass ``min_ratio`` to enforce that check.

    Returns (nu, table) with the table from gradient_coefficient_table.
    """
    zc = as_energy(z).z
    table = gradient_coefficient_table(order)
    u0 = np.asarray(u_derivs.get((0, 0, 0), 0.0))
    w = zc - u0
    if min_ratio is not None:
        scale = max(np.max(np.abs(np.asarray(v))) for k, v in u_derivs.items()
                    if sum(k) > 0) if len(u_derivs) > 1 else 0.0
        if np.min(np.abs(w)) < min_ratio * max(scale, 1e-300):
            raise ValueError(
                "outside the high-energy applicability window: "
                f"|z - u| < {min_ratio} x derivative scale")

    def invariant(name):
        if name == "one":
            return 1.0
        if name == "lap_u":
            return sum(np.asarray(u_derivs[f]) for f in
                       (((2, 0, 0)), ((0, 2, 0)), ((0, 0, 2))))
        if name == "grad_u_sq":
            return sum(np.asarray(u_derivs[f]) ** 2 for f in
                       (((1, 0, 0)), ((0, 1, 0)), ((0, 0, 1))))
        if name == "bilap_u":
            return (sum(np.asarray(u_derivs[f]) for f in
                        (((4, 0, 0)), ((0, 4, 0)), ((0, 0, 4))))
                    + 2.0 * sum(np.asarray(u_derivs[f]) for f in
                                (((2, 2, 0)), ((2, 0, 2)), ((0, 2, 2)))))
        raise KeyError(name)

    sqrt_w = np.vectorize(lambda t: _upper_root(t))(w) if np.ndim(w) else _upper_root(w)
    i_nu = 0.0
    for (s2, name), frac in table.items():
        i_nu = i_nu + float(frac) * invariant(name) * sqrt_w ** (-s2)
    return -1j * i_nu, table


def _upper_root(w: complex) -> complex:
    r = np.sqrt(complex(w))
    if r.imag < 0:
        r = -r
    return r


# ---------------------------------------------------------------------------
# Inverse relation on sampled 3D fields
# ---------------------------------------------------------------------------

@dataclass
class NuField3D:
    """Profile samples on a uniform 3D lattice with optional potential data."""

    values: np.ndarray     # complex, shape (nx, ny, nz)
    h: float
    u: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("field must be three-dimensional")
        self._cache = {}

    def derivative(self, mi) -> np.ndarray:
        """Mixed partial via composed central stencils, O(h^2) interior."""
        mi = tuple(mi)
        if mi in self._cache:
            return self._cache[mi]
        arr = self.values
        for axis, order in enumerate(mi):
            arr = _fd_axis(arr, axis, order, self.h)
        self._cache[mi] = arr
        return arr

    @property
    def halo(self) -> int:
        return 2  # supports derivatives through fourth order

    def interior(self) -> tuple:
        t = self.halo
        return (slice(t, -t), slice(t, -t), slice(t, -t))


def _fd_axis(arr: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    if order == 0:
        return arr
    if order == 1:
        out = (np.roll(arr, -1, axis) - np.roll(arr, 1, axis)) / (2 * h)
    elif order == 2:
        out = (np.roll(arr, -1, axis) - 2 * arr + np.roll(arr, 1, axis)) / h ** 2
    else:
        out = _fd_axis(_fd_axis(arr, axis, 2, h), axis, order - 2, h)
    return out


def _phi1(field: NuField3D) -> np.ndarray:
    lap = sum(field.derivative(_unit2(i)) for i in range(3))
    sq = sum(field.derivative(_pair(i, j)) ** 2
             for i in range(3) for j in range(3))
    return (lap ** 2 - sq) / 6.0


def _unit2(i):
    mi = [0, 0, 0]
    mi[i] = 2
    return tuple(mi)


def _unit1(i):
    mi = [0, 0, 0]
    mi[i] = 1
    return tuple(mi)


def _pair(i, j):
    mi = [0, 0, 0]
    mi[i] += 1
    mi[j] += 1
    return tuple(mi)


def _mi_sum(*mis):
    out = [0, 0, 0]
    for mi in mis:
        for ax in range(3):
            out[ax] += mi[ax]
    return tuple(out)


def _phi2(field: NuField3D) -> np.ndarray:
    nu = field.values
    d = field.derivative
    g1 = np.zeros_like(nu)
    g2 = np.zeros_like(nu)
    g3 = np.zeros_like(nu)
    for i in range(3):
        for j in range(3):
            for k in range(3):
                di, dj, dk = _unit1(i), _unit1(j), _unit1(k)
                dij, dik, djk = _pair(i, j), _pair(i, k), _pair(j, k)
                dii, djj, dkk = _unit2(i), _unit2(j), _unit2(k)
                g1 += (3.0 * d(dij) ** 2 * d(dk) ** 2
                       + 2.0 * d(dik) * d(djk) * d(di) * d(dj)
                       - 4.0 * d(dkk) * d(dij) * d(di) * d(dj)
                       - d(dii) * d(djj) * d(dk) ** 2)
                g2 += (4.0 * d(dkk) * d(_mi_sum(dii, dj)) * d(dj)
                       - 2.0 * d(_mi_sum(dii, dj)) * d(djk) * d(dk)
                       - 2.0 * d(_mi_sum(di, dj, dk)) * d(dij) * d(dk)
                       - 2.0 * d(dij) * d(djk) * d(dik)
                       + d(dij) ** 2 * d(dkk)
                       + d(dii) * d(djj) * d(dkk))
                g3 += (2.0 * d(_mi_sum(dii, djj)) * d(dkk)
                       - 2.0 * d(dij) * d(_mi_sum(dij, dkk))
                       + d(_mi_sum(dii, dk)) * d(_mi_sum(djj, dk))
                       - d(_mi_sum(di, dj, dk)) ** 2)
    return g1 / 6.0 + nu * g2 / 3.0 + nu ** 2 * g3 / 6.0


def inverse_rhs(field: NuField3D, z, nu_floor: float = 1e-3) -> np.ma.MaskedArray:
    """Residual of the 3D inverse profile relation on the interior lattice.

    Evaluates -(1/4 nu^2)[1 - |grad nu|^2 + 2 nu lap nu] - phi1 - phi2 and
    returns its deviation from z - u as a masked array (stencil halo and
    near-boundary points with |nu| below ``nu_floor`` of the field scale
    are masked).  For one-coordinate fields phi1 and phi2 cancel exactly
    and the relation collapses to its 1D form.
    """
    zc = as_energy(z).z
    nu = field.values
    grad_sq = sum(field.derivative(_unit1(i)) ** 2 for i in range(3))
    lap = sum(field.derivative(_unit2(i)) for i in range(3))
    main = -(1.0 - grad_sq + 2.0 * nu * lap) / (4.0 * nu ** 2)
    rhs = main - _phi1(field) - _phi2(field)
    u = field.u if field.u is not None else 0.0
    residual = rhs - (zc - u)

    mask = np.ones(nu.shape, dtype=bool)
    mask[field.interior()] = False
    mask |= np.abs(nu) < nu_floor * np.abs(nu).max()
    return np.ma.MaskedArray(residual, mask=mask)


def phi_fields(field: NuField3D):
    """(phi1, phi2) evaluated on the lattice (halo not masked)."""
    return _phi1(field), _phi2(field)
