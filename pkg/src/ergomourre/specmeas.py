"""Correlation sequences, Wiener statistics and smoothed spectral densities."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import opcalc
from .errors import InvalidArgument
from .torusdyn import FurstenbergSpec, SkewProductSpec
from .trigfun import TWO_PI, TrigPoly, evaluate, grid_points, unit_phase

DEFAULT_POINT_THRESHOLD = 0.05
DEFAULT_FLATNESS_THRESHOLD = 0.2
_MAX_QUAD_POINTS = 2**22


@dataclass(frozen=True)
class CorrelationSequence:
    """``c_k = <phi, U^k phi>`` for ``k = 0 .. N`` with an error budget per entry."""

    values: np.ndarray
    source: str
    budget: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        object.__setattr__(self, "values", v)
        b = np.zeros(len(v)) if self.budget is None else np.asarray(self.budget, dtype=float).reshape(-1)
        if len(b) != len(v):
            raise InvalidArgument("budget length differs from values")
        object.__setattr__(self, "budget", b)

    @property
    def c0(self) -> float:
        return float(self.values[0].real)

    @property
    def N(self) -> int:
        return len(self.values) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "re", "im", "budget"])
        for k, (c, b) in enumerate(zip(self.values, self.budget)):
            w.writerow([k, repr(float(c.real)), repr(float(c.imag)), repr(float(b))])
        return buf.getvalue()


def correlations_matrix(
    U: opcalc.OperatorMatrix, phi: opcalc.StateVector, N: int, accept_leakage: bool = False, fast: bool = True
) -> CorrelationSequence:
    """``c_k`` by repeated application of ``U``.

    Without ``accept_leakage`` the window must contain ``support(phi) + N band(U)``.
    With it, mass pushed out of the window is dropped and its norm added to
    the budget, together with ``k * residual_bound(U)`` for the truncated phase.
    """
    if N < 0:
        raise InvalidArgument("N must be >= 0")
    need = phi.support + N * U.band
    if need > U.window.M and not accept_leakage:
        raise InvalidArgument(
            f"window overflow: support {phi.support} + N*band {N * U.band} = {need} > M={U.window.M}; "
            "enlarge the window or accept leakage"
        )
    p0 = phi.coeffs.conj()
    nrm = phi.norm()
    vals = np.empty(N + 1, dtype=complex)
    budget = np.empty(N + 1)
    v = phi
    lost = 0.0
    for k in range(N + 1):
        vals[k] = p0 @ v.coeffs
        budget[k] = nrm * (lost + k * U.residual_bound * nrm)
        if k < N:
            leak = []
            v = opcalc.apply(U, v, fast=fast, leakage=leak)
            lost += leak[0] if leak else 0.0
    return CorrelationSequence(vals, "matrix-path", budget)


def _quad_resolution(shift: np.ndarray, phase: TrigPoly, N: int, tol: float) -> int:
    P, _ = unit_phase(phase, tol)
    # spread of exp(2 pi i sum phase) is bounded by the spread of the summed phase's exponential
    spread = 2 * P.degree + 16
    need = N * int(np.max(np.abs(shift))) + spread
    R = 1
    while R <= need:
        R *= 2
    return R


def correlations_quadrature(
    spec, N: int, grid: int | None = None, level=None, tol: float = 1e-14
) -> CorrelationSequence:
    """``c_k = int exp(2 pi i S_k(x)) dx`` for ``phi = 1`` in the active block.

    ``S_k`` is the cocycle phase summed along the base rotation; the grid mean
    is exact once the resolution exceeds the frequency content of the
    integrand, ``N |s|_inf`` plus the spread of the perturbation.
    """
    yv, s, q = _rotation_cocycle(spec, level)
    d = len(yv)
    R_min = _quad_resolution(s, q, N, tol)
    R = R_min if grid is None else int(grid)
    if R < R_min:
        raise InvalidArgument(f"resolution {R} aliases the phase sum at step {N}; use >= {R_min}")
    if R**d > _MAX_QUAD_POINTS:
        raise InvalidArgument(f"quadrature grid {R}^{d} too large; reduce N")
    x = grid_points(d, R)
    K, C = q.arrays
    E = np.exp(1j * TWO_PI * ((x @ K.T.astype(float)) % 1.0)) * C if len(C) else None
    lin_x = (x @ s.astype(float)) % 1.0
    sy = float(np.dot(s, yv))
    S = np.zeros(len(x))
    vals = np.empty(N + 1, dtype=complex)
    vals[0] = 1.0
    for k in range(1, N + 1):
        ell = k - 1
        # phase at x + ell y: s.x + ell s.y + q(x + ell y)
        inc = lin_x + (ell * sy) % 1.0
        if E is not None:
            rot = np.exp(1j * TWO_PI * ((ell * (K @ yv)) % 1.0))
            inc = inc + (E @ rot).real
        S = (S + inc) % 1.0
        vals[k] = np.mean(np.exp(1j * TWO_PI * S))
    alias = _alias_tail(S, lin_x, N, s, R, d)
    if alias > 1e-9:
        raise InvalidArgument(f"resolution {R} leaves aliasing mass {alias:.2e}; use >= {2 * R}")
    budget = np.full(N + 1, 1e-13 + alias)
    budget[0] = 0.0
    return CorrelationSequence(vals, "quadrature-path", budget)


def _alias_tail(S, lin_x, N, s, R, d) -> float:
    """Coefficient mass of the non-linear factor of ``exp(2 pi i S_N)`` that could alias.

    After removing ``e^{2 pi i N s.x}`` the remaining factor must be
    band-limited below ``R - N |s|_inf`` (and below the Nyquist radius ``R/2``
    for the check itself to be meaningful) for the grid mean to be exact.
    """
    Z = np.exp(1j * TWO_PI * ((S - N * lin_x) % 1.0)).reshape((R,) * d)
    C = np.abs(np.fft.fftn(Z)) / Z.size
    f = [np.abs(np.fft.fftfreq(R, 1.0 / R))] * d
    rad = np.maximum.reduce(np.meshgrid(*f, indexing="ij")) if d > 1 else f[0]
    limit = min(R / 2, R - N * int(np.max(np.abs(s))))
    return float(C[rad >= limit].sum()) if limit > 0 else float(C.sum())


def _rotation_cocycle(spec, level):
    """``(y, s, q)`` with ``U = e_s exp(2 pi i q) V_y`` for the block."""
    if isinstance(spec, SkewProductSpec):
        return spec.y.vec, spec.char_vector, spec.m_eta
    if isinstance(spec, FurstenbergSpec):
        j, k = opcalc._level(spec, level)
        if j != 2:
            raise InvalidArgument("the quadrature path covers level j = 2 (rotation base)")
        return np.array([spec.y]), spec.linear_row(2) * k, spec.h[0] * float(k)
    raise InvalidArgument(f"unsupported system {type(spec).__name__}")


def wiener_statistic(c: CorrelationSequence) -> np.ndarray:
    """``W_N = (1/N) sum_{k=1}^N |c_k|^2`` for ``N = 1 .. len - 1``."""
    a = np.abs(c.values[1:]) ** 2
    if not len(a):
        return np.zeros(0)
    return np.cumsum(a) / np.arange(1, len(a) + 1)


def spectral_density(c: CorrelationSequence, kernel: str = "fejer", n_grid: int | None = None):
    """Kernel-smoothed density on ``theta_j = 2 pi j / n_grid``.

    ``rho(theta) = Re(c_0 + 2 sum_{k=1}^{N} w_k c_k e^{-i k theta})`` with Fejer
    weights ``1 - k/(N+1)`` or Hann weights ``cos^2(pi k / (2(N+1)))``.  Its mean
    over the grid is ``c_0``.  Returns ``(angles, density)``.
    """
    N = c.N
    if N < 64:
        raise InvalidArgument("spectral density needs at least 64 correlation coefficients")
    k = np.arange(1, N + 1)
    if kernel == "fejer":
        w = 1.0 - k / (N + 1.0)
    elif kernel == "hann":
        w = np.cos(0.5 * math.pi * k / (N + 1.0)) ** 2
    else:
        raise InvalidArgument("kernel must be 'fejer' or 'hann'")
    G = n_grid or 1 << int(math.ceil(math.log2(2 * N + 2)))
    if G < 2 * N + 1:
        raise InvalidArgument("density grid must have at least 2N+1 points")
    coef = np.zeros(G, dtype=complex)
    coef[0] = c.values[0]
    coef[1:N + 1] = w * c.values[1:]
    # sum_k a_k e^{-i k theta_j} is the forward DFT
    dens = 2.0 * np.fft.fft(coef).real - c.values[0].real
    angles = TWO_PI * np.arange(G) / G
    return angles, dens


def density_csv(angles, dens) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle", "density"])
    for a, v in zip(angles, dens):
        w.writerow([repr(float(a)), repr(float(v))])
    return buf.getvalue()


@dataclass
class SpectralReport:
    """Indicators of spectral type for one vector; indicators, not proofs."""

    wiener: np.ndarray
    angles: np.ndarray
    density: np.ndarray
    point_detected: bool
    continuous_indicator: float
    lebesgue_flatness: float
    thresholds: dict
    label: str = "indicator, not proof"

    def summary(self) -> dict:
        return {
            "label": self.label,
            "point_detected": bool(self.point_detected),
            "continuous_indicator": float(self.continuous_indicator),
            "lebesgue_flatness": float(self.lebesgue_flatness),
            "flat_spectrum": bool(self.lebesgue_flatness <= self.thresholds["flatness"]),
            "wiener_final": float(self.wiener[-1]) if len(self.wiener) else 0.0,
            "thresholds": dict(self.thresholds),
        }


def classify(
    c: CorrelationSequence,
    point_threshold: float = DEFAULT_POINT_THRESHOLD,
    flatness_threshold: float = DEFAULT_FLATNESS_THRESHOLD,
    kernel: str = "fejer",
) -> SpectralReport:
    """Point detection from the final Wiener mean, flatness from the Fejer density.

    ``W_N`` is compared with ``point_threshold * c_0^2``; the continuous
    indicator is ``1 - W_N / c_0^2``; flatness is ``max |rho - c_0| / c_0``.
    """
    W = wiener_statistic(c)
    c0 = c.c0
    if c0 <= 0:
        raise InvalidArgument("zero vector has no spectral measure")
    wn = float(W[-1]) if len(W) else 0.0
    angles, dens = spectral_density(c, kernel)
    flat = float(np.max(np.abs(dens - c0)) / c0)
    return SpectralReport(
        wiener=W,
        angles=angles,
        density=dens,
        point_detected=wn > point_threshold * c0**2,
        continuous_indicator=1.0 - wn / c0**2,
        lebesgue_flatness=flat,
        thresholds={"point": point_threshold, "flatness": flatness_threshold, "kernel": kernel},
    )


def wiener_csv(W: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "W_N"])
    for n, v in enumerate(W, start=1):
        w.writerow([n, repr(float(v))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Full skew-product Koopman operator (block-reduction checks)


def full_skew_koopman(spec: SkewProductSpec, Mx: int, mz: int, tol: float = 1e-14) -> opcalc.OperatorMatrix:
    """Koopman operator of ``(x, z) -> (x + y, z + N x + eta(x))`` for ``d = d' = 1``.

    Acts on the window ``|k|, |m| <= (Mx, mz)`` embedded in a square window of
    half-width ``max(Mx, mz)``; ``e_(k, m) -> e^{2 pi i k y} exp(2 pi i m eta) e_(k + m N, m)``.
    Each fiber index ``m`` spans an invariant block equal to the character ``m`` block.
    """
    if spec.d != 1 or spec.dprime != 1:
        raise InvalidArgument("full Koopman assembly is implemented for d = d' = 1")
    M = max(Mx, mz)
    W = opcalc.FreqWindow(2, M)
    n = W.size
    E = np.zeros((n, n), dtype=complex)
    Nn = int(spec.N[0, 0])
    y = spec.y.y[0]
    res = 0.0
    for m in range(-mz, mz + 1):
        P, r = unit_phase(spec.eta[0] * float(m), tol)
        res = max(res, r)
        K, C = P.arrays
        for k in range(-Mx, Mx + 1):
            col = int(W.index([k, m]))
            rot = np.exp(1j * TWO_PI * ((k * y) % 1.0))
            for q, cq in zip(K[:, 0], C):
                tgt = [k + m * Nn + int(q), m]
                if abs(tgt[0]) <= Mx:
                    E[int(W.index(tgt)), col] = cq * rot
    rows, cols = np.nonzero(E)
    band = int(np.max(np.abs(W.freqs[rows] - W.freqs[cols]))) if len(rows) else 0
    return opcalc.OperatorMatrix(W, E, band, res, True, None, "full-skew")
