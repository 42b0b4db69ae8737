"""Named potentials and boundary surfaces addressable from scenario configs."""

from __future__ import annotations

import numpy as np

from .foundation import PotentialModel

__all__ = ["make_potential", "POTENTIALS", "potential_names"]


def _linear(slope: float = 1.0) -> PotentialModel:
    return PotentialModel.polynomial([0.0, slope], name="linear")


def _harmonic_well(strength: float = 25.0, center: float = 0.5) -> PotentialModel:
    # strength * (x - center)^2
    return PotentialModel.polynomial(
        [strength * center ** 2, -2.0 * strength * center, strength],
        name="harmonic-well")


def _bump(height: float = 1.0, center: float = 1.5, width: float = 0.5) -> PotentialModel:
    """Smooth stratified bump on the half-line, negligible beyond the tail."""
    def fn(x):
        x = np.asarray(x, dtype=float)
        return height * np.exp(-((x - center) / width) ** 2)

    def taylor(x0, n, _h=height, _c=center, _w=width):
        # derivatives of a Gaussian via the Hermite recursion
        t = (x0 - _c) / _w
        vals = np.zeros(n)
        herm = [1.0, -2.0 * t]
        for k in range(2, n + 1):
            herm.append(-2.0 * t * herm[k - 1] - 2.0 * (k - 1) * herm[k - 2])
        g = _h * np.exp(-t * t)
        fact = 1.0
        for k in range(n):
            if k > 0:
                fact *= k
            vals[k] = g * herm[k] / (_w ** k) / fact
        return vals

    tail = center + width * np.sqrt(np.log(max(height, 1.0) / 1e-15))
    return PotentialModel.stratified(fn, name="bump", tail_value=0.0,
                                     tail_start=float(tail), taylor_fn=taylor)


def _ramp(height: float = 0.8, center: float = 1.2, width: float = 0.4) -> PotentialModel:
    """Smooth step from 0 up to a constant plateau (half-line stratified)."""
    def fn(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * height * (1.0 + np.tanh((x - center) / width))

    # tanh(t) - 1 ~ -2 e^{-2t}: plateau reached to 1e-15 at t ~ 17
    tail = center + 17.5 * width
    return PotentialModel.stratified(fn, name="ramp", tail_value=height,
                                     tail_start=float(tail))


def _edge_slope(slope: float = 1.0, width: float = 0.6) -> PotentialModel:
    """Half-line potential with an O(1) slope right at the wall, fast decay."""
    def fn(x):
        x = np.asarray(x, dtype=float)
        return slope * x * np.exp(-((x / width) ** 2))

    tail = width * np.sqrt(np.log(1e16))
    return PotentialModel.stratified(fn, name="edge-slope", tail_value=0.0,
                                     tail_start=float(tail))


def _radial_harmonic(strength: float = 1.5) -> PotentialModel:
    def fn(r):
        r = np.asarray(r, dtype=float)
        return strength * r ** 2

    return PotentialModel.radial(fn, name="radial-harmonic",
                                 taylor_fn=lambda r0, n, _s=strength:
                                 np.array([_s * r0 ** 2, 2 * _s * r0, _s] + [0.0] * (n - 3))[:n])


def _gaussian3d(height: float = 1.0, width: float = 1.0) -> PotentialModel:
    def fn(p):
        p = np.asarray(p, dtype=float)
        r2 = np.sum(p * p, axis=-1)
        return height * np.exp(-r2 / width ** 2)

    return PotentialModel.field3d(fn, name="gaussian3d")


POTENTIALS = {
    "zero": lambda: PotentialModel.zero(),
    "linear": _linear,
    "harmonic-well": _harmonic_well,
    "bump": _bump,
    "ramp": _ramp,
    "edge-slope": _edge_slope,
    "radial-harmonic": _radial_harmonic,
    "gaussian3d": _gaussian3d,
}


def make_potential(name: str, **params) -> PotentialModel:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(POTENTIALS)}")
    return factory(**params)


def potential_names():
    return sorted(POTENTIALS)
