"""Commutator functions, positivity certificates and identity checks.

For each system class the commutator of the conjugate operator with the
Koopman unitary is a multiplication operator ``g U``.  Averaging the conjugate
operator along the dynamics replaces ``g`` by its Birkhoff average ``g_n``,
and a certified positive lower bound of ``g_n`` is a strict Mourre constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import opcalc
from .ergodic import (
    AverageCurve,
    birkhoff_exact,
    birkhoff_map,
    deviation_bound,
    double_average_gtilde,
    flow_average_gL,
)
from .errors import DegenerateSpec, EmptySelection, InvalidArgument
from .torusdyn import (
    FurstenbergSpec,
    SkewProductSpec,
    TimeChangeSpec,
    furstenberg_apply,
    furstenberg_inverse_jacobian_bound,
)
from .trigfun import (
    TWO_PI,
    TrigPoly,
    _default_resolution,
    certified_infimum,
    evaluate,
    hermitize,
    lie_derivative,
    log_positive,
    partial,
    grid_points,
)

DEFAULT_N_MAX = 2**14
DEFAULT_MIN_RATIO = 0.5


# ---------------------------------------------------------------------------
# Commutator functions


def g_skew(spec: SkewProductSpec) -> TrigPoly:
    """``(2 pi)^2 (m.Ny) [(m.Ny) + y . grad(m.eta)]``.

    With the true gradient, so for ``eta = (eps / 2 pi) sin(2 pi x)``
    the bracket is ``y (1 + eps cos(2 pi x))`` when ``N = m = 1``.
    """
    if spec.degenerate:
        raise DegenerateSpec(
            "N^T m = 0: the active character is trivial on the homomorphism part; "
            "the commutator method needs N^T m != 0"
        )
    mny = spec.m_Ny
    inner = TrigPoly.constant(mny, spec.d) + lie_derivative(spec.m_eta, spec.y.vec)
    return hermitize(inner * (TWO_PI**2 * mny))


def g_furstenberg(spec: FurstenbergSpec, j: int) -> TrigPoly:
    """``1 + d_{j-1} h_{j-1} / b_{j,j-1}`` on T^{j-1}."""
    if not 2 <= j <= spec.d:
        raise InvalidArgument(f"j must lie in [2, {spec.d}]")
    h = spec.h[j - 2]
    out = TrigPoly.constant(1.0, j - 1) + partial(h, j - 2) / spec.coef(j, j - 1)
    return hermitize(out)


def g_timechange(spec: TimeChangeSpec, tol: float = 1e-14) -> tuple[TrigPoly, float]:
    """``1/2 - (1/2) L_{Y_2}(ln f)`` with a residual bound for the truncated logarithm.

    The bound scales the logarithm's sup-norm residual by ``2 pi |y2|_1`` times
    a frequency cap; it is a heuristic derivative bound, not a proof.
    """
    lg, res = log_positive(spec.f, tol)
    g = TrigPoly.constant(0.5, spec.d) - lie_derivative(lg, spec.y2) * 0.5
    cap = 2 * lg.degree + 16
    return hermitize(g), 0.5 * TWO_PI * float(np.sum(np.abs(spec.y2))) * cap * res


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class MourreCertificate:
    """Outcome of the positivity search for one system."""

    system: dict
    status: str
    n_star: int | None
    a: float | None
    limit: float
    deviation_curve: AverageCurve
    table: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    message: str = ""

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def report(self) -> dict:
        return {
            "system": self.system,
            "status": self.status,
            "n_star": self.n_star,
            "a": self.a,
            "limit": self.limit,
            "parameters": self.parameters,
            "deviation_table": [dict(row) for row in self.table],
            "residuals": dict(self.residuals),
            "residual_tolerances": dict(self.tolerances),
            "message": self.message,
        }


def describe(system) -> dict:
    """JSON-ready parameter summary of a system spec."""
    if isinstance(system, SkewProductSpec):
        return {
            "class": "skew",
            "y": list(system.y.y),
            "N": system.N.tolist(),
            "m": list(system.m),
            "eta": [_poly_terms(e) for e in system.eta],
            "diophantine_note": system.y.diophantine_note,
        }
    if isinstance(system, FurstenbergSpec):
        return {
            "class": "furstenberg",
            "d": system.d,
            "y": system.y,
            "b": {f"{j},{k}": v for (j, k), v in sorted(system.b.items())},
            "h": [_poly_terms(h) for h in system.h],
            "diophantine_note": system.y_vector.diophantine_note,
        }
    if isinstance(system, TimeChangeSpec):
        return {
            "class": "timechange",
            "d": system.d,
            "y": list(system.y.y),
            "y2": list(system.y2),
            "f": _poly_terms(system.f),
            "f_inf_certified": system.f_inf,
        }
    raise InvalidArgument(f"unsupported system {type(system).__name__}")


def _poly_terms(p: TrigPoly) -> list:
    K, C = p.arrays
    return [[[int(v) for v in k], float(c.real), float(c.imag)] for k, c in zip(K, C)]


def _schedule(n_max: int) -> list[int]:
    if n_max < 1:
        raise InvalidArgument("n_max must be >= 1")
    out, n = [], 1
    while n <= n_max:
        out.append(n)
        n *= 2
    return out


def certify(
    system,
    n_max: int = DEFAULT_N_MAX,
    resolution=None,
    min_ratio: float = DEFAULT_MIN_RATIO,
    level=None,
    scale: float = 1.0,
    tol: float = 1e-8,
    check_window: int | None = 48,
) -> MourreCertificate:
    """Search ``n = 1, 2, 4, ..`` for a certified positive lower bound of ``g_n``.

    ``n_star`` is the first schedule point whose certified infimum is positive
    and at least ``min_ratio`` times the limit of ``g_n``; ``min_ratio = 0``
    accepts any positive bound.  Translation bases (skew products, level-2
    Furstenberg blocks) use exact averages and fill the whole schedule; other
    bases stop at the first certified point.  For time changes the schedule
    runs over the horizon ``L`` and the limit is ``1/2``.
    """
    if scale <= 0:
        raise InvalidArgument("scale must be positive")
    if not 0 <= min_ratio < 1:
        raise InvalidArgument("min_ratio must lie in [0, 1)")
    params = {"n_max": n_max, "min_ratio": min_ratio, "scale": scale}
    if isinstance(system, SkewProductSpec):
        desc = describe(system)
        if system.degenerate:
            return MourreCertificate(
                desc, "degenerate", None, None, 0.0, AverageCurve((), (), 0.0), parameters=params,
                message="N^T m = 0 violates the hypothesis N^T m != 0; no strict estimate is claimed",
            )
        g = g_skew(system) * scale
        limit = scale * (TWO_PI * system.m_Ny) ** 2
        cert = _certify_translation(g, system.y.vec, limit, n_max, resolution, min_ratio, desc, params)
        if check_window:
            _attach_residual(cert, system, None, check_window, scale)
        return cert
    if isinstance(system, FurstenbergSpec):
        j, k = opcalc._level(system, level)
        desc = describe(system)
        desc["level"] = [j, k]
        g = g_furstenberg(system, j) * scale
        if j == 2:
            cert = _certify_translation(g, np.array([system.y]), scale, n_max, resolution, min_ratio, desc, params)
            if check_window:
                _attach_residual(cert, system, (j, k), check_window, scale)
            return cert
        return _certify_map(system, g, j, scale, n_max, resolution, min_ratio, desc, params)
    if isinstance(system, TimeChangeSpec):
        return _certify_timechange(system, n_max, resolution, min_ratio, scale, tol, params)
    raise InvalidArgument(f"unsupported system {type(system).__name__}")


def _row(n, a, dev, gap) -> dict:
    return {"n": int(n), "a_n": float(a), "sup_deviation": float(dev), "gap": float(gap)}


def _certify_translation(g, yv, limit, n_max, resolution, min_ratio, desc, params) -> MourreCertificate:
    rows, devs, ns = [], [], []
    n_star = a_star = None
    for n in _schedule(n_max):
        gn = birkhoff_exact(g, yv, n)
        lower, _ = certified_infimum(gn, resolution)
        gap = gn.lipschitz_bound() * math.sqrt(g.d) / (2.0 * _res(gn, resolution))
        dev = deviation_bound(g, yv, n)
        rows.append(_row(n, lower, dev, gap))
        ns.append(n)
        devs.append(dev)
        if n_star is None and lower > 0 and lower >= min_ratio * limit:
            n_star, a_star = n, lower
    curve = AverageCurve(tuple(ns), tuple(devs), limit)
    residuals = {"mean_minus_limit": abs(float(g.mean.real) - limit)}
    status = "certified" if n_star is not None else "failed"
    return MourreCertificate(
        desc, status, n_star, a_star, limit, curve, rows, residuals, {"mean_minus_limit": 1e-12}, params,
        "" if n_star else f"no n <= {n_max} certified",
    )


def _res(p: TrigPoly, resolution) -> int:
    return _default_resolution(p) if resolution is None else int(resolution)


def _attach_residual(cert, system, level, M, scale):
    """Spot check ``[A_1, U] = g U`` on a small window; demotes the status on failure."""
    try:
        U, _ = opcalc.assemble_koopman(system, opcalc.FreqWindow(_window_d(system, level), M), level=level, dense=False)
        band = U.band
        g = g_skew(system) if isinstance(system, SkewProductSpec) else g_furstenberg(system, level[0])
        margin = band + g.degree
        if margin >= M:
            return
        r = commutator_residual(system, opcalc.FreqWindow(_window_d(system, level), M), 1, margin,
                                trials=5, level=level, scale=scale)
    except InvalidArgument:
        return
    tolr = _contract(U.residual_bound, 1, M, system, level, scale)
    cert.residuals["commutator_n1"] = r
    cert.tolerances["commutator_n1"] = tolr
    if r > tolr and cert.status == "certified":
        cert.status = "failed"
        cert.message = "commutator identity check exceeded its tolerance"


def _window_d(system, level) -> int:
    if isinstance(system, SkewProductSpec):
        return system.d
    return level[0] - 1


def _certify_map(system: FurstenbergSpec, g, j, limit, n_max, resolution, min_ratio, desc, params):
    d = j - 1
    R = resolution or {1: 4096, 2: 512}.get(d, 64)
    B = furstenberg_inverse_jacobian_bound(system, d)
    lip_g = g.lipschitz_bound()
    inv = lambda x: furstenberg_apply(system, x, "inverse", level=d)  # noqa: E731
    pts = grid_points(d, R)
    rows, ns, devs = [], [], []
    n_star = a_star = None
    for n in _schedule(n_max):
        vals = birkhoff_map(g, inv, pts, n, d=d)
        vals = np.real(vals)
        norms, P = [], np.eye(d)
        for _ in range(n):
            norms.append(np.linalg.norm(P, 2))
            P = P @ B
        lip_n = lip_g * float(np.mean(norms))
        gap = lip_n * math.sqrt(d) / (2.0 * R)
        lower = float(vals.min()) - gap
        dev = float(np.max(np.abs(vals - limit)))
        rows.append(_row(n, lower, dev, gap))
        ns.append(n)
        devs.append(dev)
        if lower > 0 and lower >= min_ratio * limit:
            n_star, a_star = n, lower
            break
    params = dict(params, resolution=R, lipschitz="inverse-Jacobian entrywise bound")
    status = "certified" if n_star is not None else "failed"
    return MourreCertificate(
        desc, status, n_star, a_star, limit, AverageCurve(tuple(ns), tuple(devs), limit), rows,
        {"mean_minus_limit": abs(float(g.mean.real) - limit)}, {"mean_minus_limit": 1e-12}, params,
        "" if n_star else f"no n <= {n_max} certified",
    )


def _certify_timechange(spec, L_max, resolution, min_ratio, scale, tol, params):
    g, gres = g_timechange(spec)
    g = g * scale
    limit = 0.5 * scale
    grid = resolution or ((64,) if spec.d == 1 else (4, 64))
    pts_shape = tuple(np.atleast_1d(grid)) if np.ndim(grid) else (int(grid),) * spec.d
    rows, ns, devs = [], [], []
    n_star = a_star = None
    for L in _schedule(int(L_max)):
        gl = flow_average_gL(g, spec, float(L), grid, tol).samples
        gap = _empirical_gap(gl, pts_shape) + tol + gres
        lower = float(gl.min()) - gap
        dev = float(np.max(np.abs(gl - limit)))
        rows.append(_row(L, lower, dev, gap))
        ns.append(L)
        devs.append(dev)
        if lower > 0 and lower >= min_ratio * limit:
            n_star, a_star = L, lower
            break
    params = dict(params, grid=list(pts_shape), schedule="horizon L", gap="empirical finite-difference Lipschitz")
    status = "certified" if n_star is not None else "failed"
    return MourreCertificate(
        describe(spec), status, n_star, a_star, limit, AverageCurve(tuple(ns), tuple(devs), limit), rows,
        {"g_truncation": gres}, {"g_truncation": tol}, params,
        "" if n_star else f"no L <= {L_max} certified",
    )


def _empirical_gap(samples: np.ndarray, shape) -> float:
    """Twice the largest grid slope times the covering radius (not rigorous)."""
    s = np.asarray(samples).reshape(shape)
    slope2 = 0.0
    for ax, R in enumerate(shape):
        diff = np.abs(np.diff(s, axis=ax, append=np.take(s, [0], axis=ax))) * R
        slope2 += float(diff.max()) ** 2
    cover = 0.5 * math.sqrt(sum(1.0 / R**2 for R in shape))
    return 2.0 * math.sqrt(slope2) * cover


# ---------------------------------------------------------------------------
# Identity checks


def _contract(res_bound, n, M, system, level, scale) -> float:
    """``n * residual_bound(U) * (1 + ||A||) + 1e-10`` with ``||A||`` over the window."""
    W = opcalc.FreqWindow(_window_d(system, level), M)
    A = opcalc.conjugate_diagonal(system, W, level=level, scale=scale)
    normA = float(np.max(np.abs(A.factored.diag)))
    return n * res_bound * (1.0 + normA) + 1e-10


def commutator_residual(
    system,
    window: opcalc.FreqWindow,
    n: int,
    margin: int | None = None,
    trials: int = 100,
    level=None,
    tol: float = 1e-14,
    seed: int = 0,
    scale: float = 1.0,
    return_contract: bool = False,
):
    """``max_v ||([A_n, U] - G_n U) v||`` over seeded random unit vectors on the interior.

    Vectors are supported on ``|k|_inf <= M - margin``.  The identity holds
    entrywise only where every truncated product is exact, which needs
    ``margin >= n band(U) + deg(g_n)``.
    """
    if n < 1 or trials < 1:
        raise InvalidArgument("n and trials must be >= 1")
    if isinstance(system, SkewProductSpec):
        g = g_skew(system)
        yv = system.y.vec
    elif isinstance(system, FurstenbergSpec):
        j, k = opcalc._level(system, level)
        level = (j, k)
        if j != 2:
            raise InvalidArgument("commutator checks are available for level j = 2 (translation base)")
        g = g_furstenberg(system, j)
        yv = np.array([system.y])
    else:
        raise InvalidArgument(f"unsupported system {type(system).__name__}")
    g = g * scale
    U, res = opcalc.assemble_koopman(system, window, tol=tol, level=level)
    gn = birkhoff_exact(g, yv, n)
    need = n * U.band + gn.degree
    margin = need if margin is None else int(margin)
    if margin < need:
        raise InvalidArgument(f"margin {margin} below required n*band(U) + deg(g_n) = {need}")
    if margin > window.M:
        raise InvalidArgument(f"margin {margin} exceeds window half-width {window.M}")
    A = opcalc.conjugate_diagonal(system, window, level=level, scale=scale)
    An = opcalc.average_conjugate(A, U, n)
    G = opcalc.multiplication_matrix(gn, window)
    Ue = U.entries
    D = An.entries @ Ue - Ue @ An.entries - G.entries @ Ue
    S = window.M - margin
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        v = opcalc.StateVector.random_interior(window, S, rng)
        worst = max(worst, float(np.linalg.norm(D @ v.coeffs)))
    if return_contract:
        normA = float(np.max(np.abs(A.factored.diag[window.radius <= S + U.band])))
        return worst, n * res * (1.0 + normA) + 1e-10
    return worst


def bridge_check(dim: int = 8, quad_order: int = 32, seed: int = 42, commuting: bool = False) -> float:
    """``|| U^*[A, U] - int_0^1 e^{isH} [iH, A] e^{-isH} ds ||_2`` with ``U = e^{-iH}``.

    The integral is Gauss-Legendre of order ``quad_order`` on ``[0, 1]``.
    """
    if not 1 <= dim <= 64:
        raise InvalidArgument("dim must lie in [1, 64]")
    if quad_order < 1:
        raise InvalidArgument("quad_order must be >= 1")
    rng = np.random.default_rng(seed)

    def herm():
        X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        return 0.5 * (X + X.conj().T)

    H = herm()
    lam, V = np.linalg.eigh(H)
    if commuting:
        A = (V * np.cos(lam)[None, :]) @ V.conj().T
    else:
        A = herm()
    U = (V * np.exp(-1j * lam)[None, :]) @ V.conj().T
    lhs = U.conj().T @ (A @ U - U @ A)
    C = 1j * (H @ A - A @ H)
    Ct = V.conj().T @ C @ V
    xi, wi = np.polynomial.legendre.leggauss(quad_order)
    s = 0.5 * (xi + 1.0)
    acc = np.zeros_like(Ct)
    for sk, wk in zip(s, wi):
        ph = np.exp(1j * sk * lam)
        acc += 0.5 * wk * (ph[:, None] * Ct * ph.conj()[None, :])
    rhs = V @ acc @ V.conj().T
    return float(np.linalg.norm(lhs - rhs, 2))


@dataclass(frozen=True)
class ConjugateField:
    """Samples of ``X = Y_2 + 2 g~_L f Y_1`` and its divergence check."""

    field: np.ndarray
    divergence: np.ndarray
    expected: np.ndarray
    residual: float


def conjugate_field(spec: TimeChangeSpec, L: float, grid, tol: float = 1e-6, g: TrigPoly | None = None):
    """Build ``X`` on the grid; return ``(X samples, sup |div X - (2 g~_L L_{Y_1} f + 2 (g - g_L))|)``.

    ``div X = 2 Y_1 . grad(g~_L f)`` is computed by FFT differentiation of the
    sampled product, independently of the flow-derivative identity; the grid
    must resolve ``g~_L f``.
    """
    if g is None:
        g, _ = g_timechange(spec)
    da = double_average_gtilde(g, spec, L, grid, tol=min(tol, 1e-6) * 1e-3, derivative=False)
    pts = grid_points(spec.d, grid)
    shape = da.values.shape
    fv = evaluate(spec.f, pts).real.reshape(shape)
    gt = da.values.samples.real
    prod = gt * fv
    coeff = np.fft.fftn(prod)
    freqs = np.meshgrid(*[np.fft.fftfreq(R, 1.0 / R) for R in shape], indexing="ij")
    ky = sum(fq * yi for fq, yi in zip(freqs, spec.y.vec))
    for fq, R in zip(freqs, shape):
        if R % 2 == 0:
            ky = np.where(np.abs(fq) == R // 2, 0.0, ky)
    div = 2.0 * np.fft.ifftn(coeff * (1j * TWO_PI * ky)).real
    LY1f = evaluate(lie_derivative(spec.f, spec.y.vec), pts).real.reshape(shape)
    expected = 2.0 * gt * LY1f + 2.0 * (da.g.samples - da.g_L.samples)
    X = np.asarray(spec.y2)[None, :] + 2.0 * (gt * fv).reshape(-1)[:, None] * spec.y.vec[None, :]
    resid = float(np.max(np.abs(div - expected)))
    return ConjugateField(X.reshape(shape + (spec.d,)), div, expected, resid)


def quadratic_form_diagnostic(H_diag, g: TrigPoly, window: opcalc.FreqWindow, J) -> float:
    """Smallest eigenvalue of ``P_J (H^2 G + 2 H G H + G H^2) P_J - 2 inf(J) inf(g) P_J``.

    ``P_J`` keeps interior frequencies (``|k|_inf <= M - deg g``) whose ``h_k^2``
    lies in ``J``.  Entry ``(r, c)`` of the form is ``G_rc (h_r + h_c)^2``.
    Reported as a number; no sign is asserted.
    """
    lo, hi = (float(v) for v in J)
    if not 0 < lo <= hi:
        raise InvalidArgument("J must be an interval inside (0, inf)")
    h = np.asarray(H_diag, dtype=float).reshape(-1)
    if h.shape[0] != window.size:
        raise InvalidArgument("H diagonal does not match window size")
    G = opcalc.multiplication_matrix(g, window).entries
    sel = (window.radius <= window.M - g.degree) & (h**2 >= lo) & (h**2 <= hi)
    idx = np.nonzero(sel)[0]
    if not len(idx):
        raise EmptySelection(f"no interior frequency has h^2 in [{lo}, {hi}]")
    hs = h[idx]
    Q = G[np.ix_(idx, idx)] * (hs[:, None] + hs[None, :]) ** 2
    inf_g, _ = certified_infimum(g)
    Q = 0.5 * (Q + Q.conj().T) - 2.0 * lo * inf_g * np.eye(len(idx))
    return float(np.linalg.eigvalsh(Q)[0])


def generator_diagonal(y, window: opcalc.FreqWindow) -> np.ndarray:
    """``h_k = 2 pi k.y``: the diagonal of the translation generator on the window."""
    yv = np.atleast_1d(np.asarray(getattr(y, "vec", y), dtype=float))
    return TWO_PI * (window.freqs @ yv)
