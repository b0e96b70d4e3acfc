"""Birkhoff averages along translations, invertible maps and time-changed flows."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument, ResonanceError
from .torusdyn import (
    FrequencyVector,
    OrbitQuadrature,
    TimeChangeSpec,
    time_change_map,
)
from .trigfun import TWO_PI, GridFunction, TrigPoly, evaluate, grid_points, hermitize

RESONANCE_THRESHOLD = 1e-14

# first-derivative central stencil of order 8 (offsets 1..4)
_FD8 = np.array([4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0])


def _yvec(y) -> np.ndarray:
    return y.vec if isinstance(y, FrequencyVector) else np.atleast_1d(np.asarray(y, dtype=float))


def _denominators(g: TrigPoly, y) -> dict:
    """``e^{-2 pi i k.y}`` per support frequency, with the resonance check."""
    yv = _yvec(y)
    out = {}
    for k in g.coeffs:
        if not any(k):
            continue
        t = float(np.dot(k, yv))
        t -= math.floor(t)
        z = complex(math.cos(TWO_PI * t), -math.sin(TWO_PI * t))
        if abs(1.0 - z) < RESONANCE_THRESHOLD:
            raise ResonanceError(f"k={k}: k.y is an integer to working precision; averages do not converge")
        out[k] = (t, z)
    return out


def birkhoff_exact(g: TrigPoly, y, n: int) -> TrigPoly:
    """``(1/n) sum_{l<n} g o F_{-l}`` for the translation by ``y``, coefficientwise."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    den = _denominators(g, y)
    out = {}
    for k, c in g.coeffs.items():
        if k in den:
            t, z = den[k]
            tn = (n * t) % 1.0
            zn = complex(math.cos(TWO_PI * tn), -math.sin(TWO_PI * tn))
            c = c * (1.0 - zn) / (n * (1.0 - z))
        out[k] = c
    res = TrigPoly(g.d, out)
    return hermitize(res) if g.is_real else res


def _as_evaluator(g) -> Callable:
    if isinstance(g, TrigPoly):
        return lambda x: evaluate(g, x).real if g.is_real else evaluate(g, x)
    return g


def _grid(grid, d: int):
    """Return ``(points, resolution or None)`` from an int/tuple resolution or raw points."""
    if isinstance(grid, np.ndarray) and grid.ndim == 2:
        return grid, None
    return grid_points(d, grid), grid


def birkhoff_map(g, inverse_map: Callable, grid, n: int, d: int | None = None):
    """Average ``(1/n) sum_{l<n} g(T^{-l} x)`` by iterating the explicit inverse map.

    ``grid`` is a resolution (int or per-axis tuple, requires ``d``) giving a
    :class:`GridFunction`, or an ``(P, d)`` array of points giving an array.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if d is None:
        d = g.d if isinstance(g, TrigPoly) else np.asarray(grid).shape[-1]
    ev = _as_evaluator(g)
    pts, res = _grid(grid, d)
    x = pts.copy()
    acc = np.zeros(len(pts), dtype=complex)
    for ell in range(n):
        acc += ev(x)
        if ell + 1 < n:
            x = inverse_map(x)
    acc /= n
    if np.all(acc.imag == 0):
        acc = acc.real
    return acc if res is None else GridFunction(d, res, acc)


# ---------------------------------------------------------------------------
# Continuous averages along the time-changed flow


def _quad(spec: TimeChangeSpec, g: TrigPoly, L: float, tol: float) -> OrbitQuadrature:
    if not isinstance(g, TrigPoly) or g.d != spec.d or not g.is_real:
        raise InvalidArgument("observable must be a real polynomial on the flow's torus")
    return OrbitQuadrature(spec, tol, extra=[g], span_hint=L * spec.f_sup)


def flow_average_gL(g: TrigPoly, spec: TimeChangeSpec, L: float, grid, tol: float = 1e-8):
    """``g_L(p) = (1/L) int_0^L g(F~_{-t} p) dt`` on a grid."""
    if L <= 0:
        raise InvalidArgument("L must be positive")
    pts, res = _grid(grid, spec.d)
    out = _quad(spec, g, L, tol).run(pts, L, -1.0, moments=True)["moments"][0] / L
    return out if res is None else GridFunction(spec.d, res, out)


def flow_birkhoff_average(phi: TrigPoly, spec: TimeChangeSpec, p, T: float, tol: float = 1e-10) -> np.ndarray:
    """Forward time average ``(1/T) int_0^T phi(F~_t p) dt`` at each point."""
    if T <= 0:
        raise InvalidArgument("T must be positive")
    P = np.atleast_2d(np.asarray(p, dtype=float))
    return _quad(spec, phi, T, tol).run(P, T, 1.0, moments=True)["moments"][0] / T


def invariant_mean(phi: TrigPoly, spec: TimeChangeSpec, resolution: int | None = None) -> float:
    """``int phi f^{-1} / int f^{-1}`` by grid quadrature (spectrally accurate for analytic f)."""
    R = resolution or {1: 4096, 2: 256}[spec.d]
    pts = grid_points(spec.d, R)
    w = 1.0 / evaluate(spec.f, pts).real
    return float(np.sum(evaluate(phi, pts).real * w) / np.sum(w))


@dataclass(frozen=True)
class DoubleAverage:
    """``g~_L`` on a grid together with the pieces of the flow-derivative identity.

    ``flow_derivative`` holds ``L_{f Y_1}(g~_L)`` from central differences in the
    flow time; ``g_L`` the single average; ``g`` the observable on the grid.
    """

    values: GridFunction
    flow_derivative: GridFunction | None
    g_L: GridFunction
    g: GridFunction
    step: float
    inner_tol: float

    def identity_residual(self) -> float:
        """``sup |L_{f Y_1}(g~_L) - (g - g_L)|``."""
        if self.flow_derivative is None:
            raise InvalidArgument("flow derivative was not computed")
        r = self.flow_derivative.samples - (self.g.samples - self.g_L.samples)
        return float(np.max(np.abs(r)))


def _fd_step(spec: TimeChangeSpec, g: TrigPoly) -> float:
    """Flow-time step for the difference stencil, scaled to the fastest oscillation."""
    yv = spec.y.vec
    rates = [abs(float(np.dot(k, yv))) for p in (g, spec.f) for k in p.coeffs if any(k)]
    rate = TWO_PI * max(rates, default=1.0) * spec.f_sup
    return min(0.05, 0.1 / rate)


def double_average_gtilde(
    g: TrigPoly, spec: TimeChangeSpec, L: float, grid, tol: float = 1e-6, derivative: bool = True
) -> DoubleAverage:
    """``g~_L(p) = (1/L) int_0^L dt int_0^t g(F~_{-s} p) ds = (1/L) int_0^L (L - s) g(F~_{-s} p) ds``.

    With ``derivative=True`` the flow derivative is taken by an eighth-order
    central stencil in flow time; the inner quadrature tolerance is tightened
    so the stencil's noise amplification stays below ``tol``.
    """
    if L <= 0:
        raise InvalidArgument("L must be positive")
    pts, res = _grid(grid, spec.d)
    if res is None:
        raise InvalidArgument("double_average_gtilde needs a grid resolution")
    delta = _fd_step(spec, g)
    inner = max(min(tol * delta / 10.0, tol), 1e-13) if derivative else tol
    quad = _quad(spec, g, L, inner)
    base = quad.run(pts, L, -1.0, moments=True, tilde=True)
    vals = base["tilde"][0] / L
    gl = base["moments"][0] / L
    deriv = None
    if derivative:
        acc = np.zeros(len(pts))
        for j, c in enumerate(_FD8, start=1):
            fwd = time_change_map(spec, pts, j * delta, inner)
            bwd = time_change_map(spec, pts, -j * delta, inner)
            tf = quad.run(fwd, L, -1.0, tilde=True)["tilde"][0] / L
            tb = quad.run(bwd, L, -1.0, tilde=True)["tilde"][0] / L
            acc += c * (tf - tb)
        deriv = GridFunction(spec.d, res, acc / delta)
    gv = evaluate(g, pts).real
    return DoubleAverage(
        values=GridFunction(spec.d, res, vals),
        flow_derivative=deriv,
        g_L=GridFunction(spec.d, res, gl),
        g=GridFunction(spec.d, res, gv),
        step=delta,
        inner_tol=inner,
    )


# ---------------------------------------------------------------------------
# Deviation curves


@dataclass(frozen=True)
class AverageCurve:
    """Sup-norm distance of Birkhoff averages from their limit along a schedule."""

    n_values: tuple
    sup_deviation: tuple
    limit_value: float

    def __post_init__(self):
        if len(self.n_values) != len(self.sup_deviation):
            raise InvalidArgument("n_values and sup_deviation differ in length")
        if any(v < 0 for v in self.sup_deviation):
            raise InvalidArgument("deviations must be nonnegative")

    def to_csv(self, tolerance: float = 0.0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "sup_deviation", "limit_value", "tolerance"])
        for n, dev in zip(self.n_values, self.sup_deviation):
            w.writerow([n, repr(float(dev)), repr(float(self.limit_value)), repr(float(tolerance))])
        return buf.getvalue()


def deviation_bound(g: TrigPoly, y, n: int) -> float:
    """``sum_{k != 0} |c_k| |sin(pi n k.y)| / (n |sin(pi k.y)|)``."""
    den = _denominators(g, y)
    total = 0.0
    for k, (t, _) in den.items():
        tn = (n * t) % 1.0
        total += abs(g.coeffs[k]) * abs(math.sin(math.pi * tn)) / (n * abs(math.sin(math.pi * t)))
    return total


def deviation_curve(g: TrigPoly, y, n_list: Sequence[int]) -> AverageCurve:
    """Exact deviation bound of translation averages at each ``n`` (equality for one harmonic pair)."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or (n_list and n_list[0] < 1):
        raise InvalidArgument("n_list must be increasing positive integers")
    devs = [deviation_bound(g, y, n) for n in n_list]
    return AverageCurve(tuple(n_list), tuple(devs), float(g.mean.real))

