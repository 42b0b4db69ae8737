"""Direct-format 1D Green's functions.

Wronskian construction from two homogeneous solutions (left solution pinned
at the wall, right solution pinned at the far boundary or decaying on the
half-line), plus a finite-difference spectral sum that serves as an
independent brute-force oracle on intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal

from .errors import NearEigenvalue, StepSizeUnderflow
from .foundation import (ComplexEnergy, DomainSpec, OdeSolution, PotentialModel,
                         as_energy, integrate_ode2, sqrt_upper)

__all__ = [
    "Green1D",
    "SpectralOracle",
    "homogeneous_pair",
    "build_green",
    "green_direct",
    "build_spectral_oracle",
    "spectral_oracle",
    "halfline_green_logderiv",
]

#: |W| below this times the midpoint solution scale flags an eigenvalue
WRONSKIAN_THRESHOLD = 1e-10

#: exponent budget before exp(Im kappa * X) overflows a double comfortably
_OVERFLOW_EXPONENT = 600.0


def _halfline_cutoff(u: PotentialModel, kappa_tail: complex, x_needed: float) -> float:
    """Right end of the integration range on the half-line.

    Beyond ``u.tail_start`` the potential is constant, so the outgoing
    solution is a pure exponential and can be seeded there; the range only
    has to cover the requested points.
    """
    return max(float(u.tail_start), x_needed) + 0.25


@dataclass(frozen=True)
class Green1D:
    """Wronskian-built Green's function record on an interval or half-line."""

    domain: DomainSpec
    energy: ComplexEnergy
    psi_l: OdeSolution
    psi_r: OdeSolution
    w: complex
    x_max: float                # right end of the built range
    kappa_tail: complex = 0j    # half-line only: outgoing wavenumber

    def _check_range(self, x):
        if np.any(np.asarray(x) < -1e-12) or np.any(np.asarray(x) > self.x_max + 1e-12):
            raise ValueError(f"point outside the built range [0, {self.x_max:.6g}]")

    def __call__(self, x: float, xp: float) -> complex:
        self._check_range([x, xp])
        if self._at_boundary(x) or self._at_boundary(xp):
            return 0.0 + 0.0j
        lo, hi = (x, xp) if x <= xp else (xp, x)
        return complex(self.psi_l.value(lo) * self.psi_r.value(hi) / self.w)

    def _at_boundary(self, x) -> bool:
        if x <= 0.0:
            return True
        return self.domain.kind == "interval" and x >= self.domain.length

    def dx_first(self, x: float, xp: float) -> complex:
        """Derivative with respect to the first argument (x != xp)."""
        if x < xp:
            return complex(self.psi_l.derivative(x) * self.psi_r.value(xp) / self.w)
        return complex(self.psi_l.value(xp) * self.psi_r.derivative(x) / self.w)

    def diagonal(self, x) -> np.ndarray:
        """Equal-argument profile n(x) = psiL(x) psiR(x) / W, vectorized."""
        x = np.asarray(x, dtype=float)
        self._check_range(x)
        return self.psi_l.value(x) * self.psi_r.value(x) / self.w

    def diagonal_derivatives(self, x):
        """(n, n', n'') on the diagonal from the exact solution states."""
        x = np.asarray(x, dtype=float)
        self._check_range(x)
        al, dl = self.psi_l.value(x), self.psi_l.derivative(x)
        ar, dr = self.psi_r.value(x), self.psi_r.derivative(x)
        q = self.psi_l.q(x)
        n = al * ar / self.w
        n1 = (dl * ar + al * dr) / self.w
        n2 = (2.0 * q * al * ar + 2.0 * dl * dr) / self.w
        return n, n1, n2


def homogeneous_pair(u: PotentialModel, domain: DomainSpec, z,
                     tol: float = 1e-11, x_max: float | None = None):
    """Left/right homogeneous solutions of psi'' = (u - z) psi and their Wronskian.

    The left solution vanishes at the wall (psi(0) = 0, psi'(0) = 1); the
    right one vanishes at the far end of an interval, or carries the
    outgoing exponential on the half-line.  Raises NearEigenvalue when the
    Wronskian is numerically zero relative to the midpoint solution scale.
    """
    energy = as_energy(z)
    zc = energy.z

    def q(x):
        return u(x) - zc

    if domain.kind == "interval":
        length = domain.length
        psi_l = integrate_ode2(q, 0.0 + 0.0j, 1.0 + 0.0j, 0.0, length, tol=tol)
        psi_r = integrate_ode2(q, 0.0 + 0.0j, -1.0 + 0.0j, length, 0.0, tol=tol)
        x_built = length
        kap = 0.0 + 0.0j
    elif domain.kind == "half_line":
        kap = sqrt_upper(zc - u.tail_value)
        x_need = x_max if x_max is not None else max(1.0, float(u.tail_start))
        xr = _halfline_cutoff(u, kap, x_need)
        if abs(kap.imag) * xr > _OVERFLOW_EXPONENT:
            raise StepSizeUnderflow(
                "solution range would overflow; use halfline_green_logderiv",
                location=xr)
        psi_l = integrate_ode2(q, 0.0 + 0.0j, 1.0 + 0.0j, 0.0, xr, tol=tol)
        psi_r = integrate_ode2(q, 1.0 + 0.0j, 1j * kap, xr, 0.0, tol=tol)
        x_built = xr
    else:
        raise ValueError(f"unsupported 1D domain kind {domain.kind!r}")

    w = -psi_r.value(0.0)  # psiL(0) = 0, psiL'(0) = 1 exactly
    mid = 0.5 * x_built
    scale = max(abs(complex(psi_l.value(mid))), abs(complex(psi_r.value(mid))))
    if abs(w) < WRONSKIAN_THRESHOLD * max(scale, 1e-300):
        raise NearEigenvalue(
            f"|W| = {abs(w):.3e} below threshold at z = {zc:.6g}")
    return Green1D(domain=domain, energy=energy, psi_l=psi_l, psi_r=psi_r,
                   w=complex(w), x_max=x_built, kappa_tail=kap)


def build_green(u: PotentialModel, domain: DomainSpec, z,
                tol: float = 1e-11, x_max: float | None = None) -> Green1D:
    """Green1D record for repeated evaluation (sweeps over point pairs)."""
    return homogeneous_pair(u, domain, z, tol=tol, x_max=x_max)


def green_direct(u: PotentialModel, domain: DomainSpec, z, x: float, xp: float,
                 tol: float = 1e-11) -> complex:
    """G_z(x, x') = psiL(x_<) psiR(x_>) / W for a single point pair."""
    rec = build_green(u, domain, z, tol=tol,
                      x_max=max(x, xp) if domain.kind == "half_line" else None)
    return rec(x, xp)


# ---------------------------------------------------------------------------
# Brute-force spectral sum on an interval
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralOracle:
    """Finite-difference eigenpairs of the confined operator on an interval.

    Second-order central differences with the Dirichlet rows removed; the
    eigenfunctions are orthonormal under the grid quadrature.  The truncated
    resolvent sum converges to the direct construction with an O(1/K) tail
    (and an O(h^2) discretization floor).
    """

    length: float
    x_grid: np.ndarray          # interior nodes, shape (m,)
    eigenvalues: np.ndarray     # ascending, shape (m,)
    eigenfunctions: np.ndarray  # shape (m, m), column k is psi_k on the grid
    h: float

    @property
    def available(self) -> int:
        return len(self.eigenvalues)

    def _psi_at(self, k: int, x) -> np.ndarray:
        xs = np.concatenate(([0.0], self.x_grid, [self.length]))
        vals = np.concatenate(([0.0], self.eigenfunctions[:, k], [0.0]))
        return np.interp(x, xs, vals)

    def green(self, z, x, xp, k_count: int | None = None) -> complex:
        """Truncated sum over the lowest ``k_count`` eigenpairs."""
        k_count = self.available if k_count is None else k_count
        if k_count > self.available:
            raise ValueError(
                f"requested {k_count} eigenpairs, only {self.available} available")
        zc = as_energy(z).z
        # evaluate all eigenfunctions at both points in one interpolation pass
        xs = np.concatenate(([0.0], self.x_grid, [self.length]))
        idx = np.searchsorted(xs, [x, xp], side="right") - 1
        idx = np.clip(idx, 0, len(xs) - 2)
        out = 0.0 + 0.0j
        padded = np.zeros((len(xs), k_count))
        padded[1:-1, :] = self.eigenfunctions[:, :k_count]
        t = [(v - xs[i]) / (xs[i + 1] - xs[i]) for v, i in zip((x, xp), idx)]
        px = padded[idx[0]] * (1 - t[0]) + padded[idx[0] + 1] * t[0]
        pxp = padded[idx[1]] * (1 - t[1]) + padded[idx[1] + 1] * t[1]
        out = np.sum(px * pxp / (zc - self.eigenvalues[:k_count]))
        return complex(out)

    def tail_estimate(self, k_count: int) -> float:
        """Crude bound on the dropped tail, ~ sum 1/lambda_k beyond K."""
        lam = self.eigenvalues[k_count - 1]
        return float(2.0 / (self.h * 0 + np.pi) / max(lam, 1.0) * self.length)


def build_spectral_oracle(u: PotentialModel, domain: DomainSpec,
                          grid_size: int = 2000) -> SpectralOracle:
    if domain.kind != "interval":
        raise ValueError("the spectral oracle is defined on intervals only")
    length = domain.length
    m = grid_size - 1
    h = length / grid_size
    x = np.linspace(h, length - h, m)
    diag = 2.0 / h ** 2 + np.asarray(u(x), dtype=float)
    off = np.full(m - 1, -1.0 / h ** 2)
    lam, vec = eigh_tridiagonal(diag, off)
    vec = vec / np.sqrt(h)  # orthonormal under the grid quadrature
    return SpectralOracle(length=length, x_grid=x, eigenvalues=lam,
                          eigenfunctions=vec, h=h)


def spectral_oracle(u: PotentialModel, domain: DomainSpec, z, x: float, xp: float,
                    k_count: int, grid_size: int = 2000) -> complex:
    """One-shot truncated spectral sum (builds the eigenbasis each call)."""
    if k_count > grid_size - 2:
        raise ValueError("k_count exceeds the available eigenpairs (grid_size - 2)")
    return build_spectral_oracle(u, domain, grid_size).green(z, x, xp, k_count)


# ---------------------------------------------------------------------------
# Overflow-safe half-line evaluation (log-derivative propagation)
# ---------------------------------------------------------------------------

def halfline_green_logderiv(u: PotentialModel, z, pairs, tol: float = 1e-10):
    """G_z(x, x') on the half-line via Riccati propagation of psi'/psi.

    Equivalent to the Wronskian construction but immune to the exponential
    overflow that direct propagation hits once |Im sqrt(z - u)| times the
    range exceeds the double budget (deep evanescent channels of the
    perpendicular reductions).  ``pairs`` is an iterable of (x, x') with
    x, x' > 0; returns a complex array.

        G(x, x') = exp( int_{x_<}^{x_>} mL ds ) / ( mR(x_>) - mL(x_>) )

    with mL = psiL'/psiL grown from the wall and mR = psiR'/psiR brought in
    from the constant-tail region.  Valid off the real spectrum, where the
    left solution is nodeless and both Riccati flows are attractive.
    """
    zc = as_energy(z).z
    pairs = [(float(a), float(b)) for a, b in pairs]
    if not pairs:
        return np.zeros(0, dtype=complex)
    x_hi = max(max(p) for p in pairs)
    x_lo = min(min(p) for p in pairs)
    if x_lo <= 0.0:
        raise ValueError("log-derivative evaluation needs interior points")
    kap_tail = sqrt_upper(zc - u.tail_value)
    xr = _halfline_cutoff(u, kap_tail, x_hi)

    def q(x):
        return u(x) - zc

    kap_mag = max(abs(kap_tail), 1.0)
    x_seed = min(1e-3, 0.25 / kap_mag, 0.5 * x_lo)
    q0 = complex(q(0.5 * x_seed))
    m_seed = 1.0 / x_seed + q0 * x_seed / 3.0  # psiL ~ x (1 + q0 x^2/6)

    def rhs(x, y):
        return (q(x) - y[0] * y[0], y[0])

    sol_l = solve_ivp(rhs, (x_seed, x_hi), np.array([m_seed, 0.0 + 0.0j]),
                      method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol_l.success:
        raise StepSizeUnderflow("left Riccati flow stalled", location=sol_l.t[-1])
    sol_r = solve_ivp(rhs, (xr, x_lo), np.array([1j * kap_tail, 0.0 + 0.0j]),
                      method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol_r.success:
        raise StepSizeUnderflow("right Riccati flow stalled", location=sol_r.t[-1])

    def m_left(x):
        return sol_l.sol(x)

    out = np.empty(len(pairs), dtype=complex)
    for i, (a, b) in enumerate(pairs):
        lo, hi = (a, b) if a <= b else (b, a)
        ml_lo = m_left(lo)
        ml_hi = m_left(hi)
        mr_hi = sol_r.sol(hi)[0] if hi < xr else 1j * kap_tail
        denom = mr_hi - ml_hi[0]
        if denom == 0:
            raise NearEigenvalue("log-derivatives coincide (eigenvalue hit)")
        out[i] = np.exp(ml_lo[1] - ml_hi[1]) / denom
    return out
