"""Dynamical systems on tori: translations, skew products, Furstenberg maps, time changes.

Points of T^d are float arrays of shape ``(..., d)`` with coordinates in [0, 1).
All maps are vectorized over the leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgument, NumericFailure
from .trigfun import TWO_PI, TrigPoly, certified_infimum, evaluate, partial

GL_NODES = 16


def wrap(x) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1)."""
    x = np.asarray(x, dtype=float)
    r = x - np.floor(x)
    return np.where(r >= 1.0, r - 1.0, r)


def circular_distance(a, b) -> np.ndarray:
    """Componentwise distance on R/Z."""
    t = np.abs(wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return np.minimum(t, 1.0 - t)


def _points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != d:
        raise InvalidArgument(f"point dimension {x.shape[-1]} does not match system dimension {d}")
    return x


# ---------------------------------------------------------------------------
# System descriptions


def _rational_relations(values: Sequence[float], max_den: int = 10**4, atol: float = 1e-12) -> list[str]:
    """Pairs ``(a, b)`` with ``a / b`` within ``atol`` of a fraction of denominator <= max_den."""
    # q <= 1e4 keeps badly approximable numbers clear: their error is about 1/(sqrt5 q^2) >> atol
    notes = []
    for i, a in enumerate(values):
        for j, b in enumerate(values):
            if j <= i or b == 0.0:
                continue
            r = a / b
            frac = Fraction(r).limit_denominator(max_den)
            if abs(r - float(frac)) <= atol * max(1.0, abs(r)):
                notes.append(f"v{i}/v{j} ~ {frac}")
    return notes


@dataclass(frozen=True)
class FrequencyVector:
    """Translation velocity ``y`` with a heuristic rational-independence note.

    For ``kind='map'`` the tested family is ``(y_1, .., y_d, 1)`` (ergodicity of
    the time-one translation); for ``kind='flow'`` it is ``(y_1, .., y_d)``.
    The check never proves irrationality; ``strict=True`` turns a detected
    relation into an error instead of a note.
    """

    y: tuple
    kind: str = "map"
    strict: bool = False
    diophantine_note: str = field(default="", compare=False)

    def __post_init__(self):
        y = tuple(float(v) for v in np.atleast_1d(np.asarray(self.y, dtype=float)))
        if not y:
            raise InvalidArgument("frequency vector must have dimension >= 1")
        object.__setattr__(self, "y", y)
        family = list(y) + ([1.0] if self.kind == "map" else [])
        if any(v == 0.0 for v in family) and self.kind == "map":
            rel = ["zero coordinate"]
        else:
            rel = []
        rel += _rational_relations(family)
        note = "heuristic: no rational relation detected" if not rel else "rational relation: " + "; ".join(rel)
        if rel and self.strict:
            raise InvalidArgument(f"y={y} fails the rational-independence heuristic ({note})")
        object.__setattr__(self, "diophantine_note", note)

    @property
    def d(self) -> int:
        return len(self.y)

    @property
    def vec(self) -> np.ndarray:
        return np.array(self.y)

    @property
    def rational_suspected(self) -> bool:
        return self.diophantine_note.startswith("rational")


def _fv(y, kind="map") -> FrequencyVector:
    return y if isinstance(y, FrequencyVector) else FrequencyVector(y, kind=kind)


@dataclass(frozen=True, eq=False)
class SkewProductSpec:
    """``T(x, z) = (x + y, z + N x + eta(x))`` on ``T^d x T^d'`` with active character ``m``."""

    y: FrequencyVector
    N: np.ndarray
    eta: tuple
    m: tuple
    allow_degenerate: bool = False

    def __post_init__(self):
        y = _fv(self.y)
        N = np.atleast_2d(np.asarray(self.N))
        if not np.all(np.equal(np.mod(N, 1), 0)):
            raise InvalidArgument("N must have integer entries")
        N = N.astype(np.int64)
        dp, d = N.shape
        if d != y.d:
            raise InvalidArgument(f"N has {d} columns but y has dimension {y.d}")
        eta = tuple(self.eta) if self.eta is not None else ()
        if not eta:
            eta = tuple(TrigPoly.zero(d) for _ in range(dp))
        if len(eta) != dp:
            raise InvalidArgument(f"need {dp} eta components, got {len(eta)}")
        for e in eta:
            if e.d != d or not e.is_real:
                raise InvalidArgument("eta components must be real polynomials on T^d")
        m = tuple(int(v) for v in np.atleast_1d(self.m))
        if len(m) != dp:
            raise InvalidArgument(f"character index m must have {dp} entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "m", m)
        if self.degenerate and not self.allow_degenerate:
            raise InvalidArgument("N^T m = 0 (degenerate character); pass allow_degenerate=True to build it")

    @property
    def d(self) -> int:
        return self.y.d

    @property
    def dprime(self) -> int:
        return self.N.shape[0]

    @property
    def char_vector(self) -> np.ndarray:
        """``N^T m``: the frequency shift of the homomorphism part."""
        return self.N.T @ np.array(self.m, dtype=np.int64)

    @property
    def degenerate(self) -> bool:
        return not np.any(self.char_vector)

    @property
    def m_eta(self) -> TrigPoly:
        """The real phase ``m . eta`` on T^d."""
        out = TrigPoly.zero(self.d)
        for mi, e in zip(self.m, self.eta):
            if mi:
                out = out + e * mi
        return out

    @property
    def m_Ny(self) -> float:
        """``m . N y = (N^T m) . y``."""
        return float(np.dot(self.char_vector, self.y.vec))


@dataclass(frozen=True, eq=False)
class FurstenbergSpec:
    """Furstenberg map ``T_d`` on ``T^d``.

    ``b`` maps 1-based pairs ``(j, k)`` with ``j > k`` to integers; ``h[j - 1]`` is
    the real polynomial ``h_j`` on ``T^j`` (``j = 1 .. d-1``).
    """

    d: int
    y: float
    b: Mapping
    h: tuple = ()

    def __post_init__(self):
        if self.d < 2:
            raise InvalidArgument("Furstenberg maps need d >= 2")
        b = {}
        for key, val in dict(self.b).items():
            if isinstance(key, str):
                key = tuple(int(v) for v in key.replace(" ", "").split(","))
            j, k = (int(v) for v in key)
            if not (1 <= k < j <= self.d):
                raise InvalidArgument(f"b index {(j, k)} must satisfy 1 <= k < j <= d")
            if float(val) != int(val):
                raise InvalidArgument("b coefficients must be integers")
            b[(j, k)] = int(val)
        for ell in range(2, self.d + 1):
            if b.get((ell, ell - 1), 0) == 0:
                raise InvalidArgument(f"b_({ell},{ell - 1}) must be nonzero")
        h = list(self.h) if self.h else []
        h += [None] * (self.d - 1 - len(h))
        if len(h) != self.d - 1:
            raise InvalidArgument(f"need {self.d - 1} functions h_1..h_(d-1)")
        hh = []
        for j, hj in enumerate(h, start=1):
            hj = TrigPoly.zero(j) if hj is None else hj
            if hj.d != j or not hj.is_real:
                raise InvalidArgument(f"h_{j} must be a real polynomial on T^{j}")
            hh.append(hj)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "h", tuple(hh))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "y_vector", FrequencyVector((float(self.y),)))

    def coef(self, j: int, k: int) -> int:
        return self.b.get((j, k), 0)

    def linear_row(self, j: int) -> np.ndarray:
        """``(b_{j,1}, .., b_{j,j-1})``."""
        return np.array([self.coef(j, k) for k in range(1, j)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class TimeChangeSpec:
    """Linear flow along ``y`` on T^d reparametrized by the speed ``f > 0``."""

    d: int
    y: FrequencyVector
    f: TrigPoly
    y2: tuple = ()

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidArgument("time-change testbed supports d = 1 or 2")
        y = _fv(self.y, kind="flow")
        if y.d != self.d or self.f.d != self.d:
            raise InvalidArgument("dimension mismatch in time-change spec")
        if not self.f.is_real:
            raise InvalidArgument("speed f must be real")
        y2 = tuple(float(v) for v in (self.y2 if len(self.y2) else ([1.0] if self.d == 1 else [0.0, 1.0])))
        if len(y2) != self.d:
            raise InvalidArgument("y2 must have dimension d")
        lower, _ = certified_infimum(self.f)
        if lower <= 0:
            raise InvalidArgument(f"speed f must have positive certified infimum (got {lower:g})")
        upper = -certified_infimum(-self.f)[0]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "f_inf", lower)
        object.__setattr__(self, "f_sup", upper)


# ---------------------------------------------------------------------------
# Maps


def translate_flow(y, x, t) -> np.ndarray:
    """``F_t(x) = x + t y (mod 1)``."""
    y = _fv(y)
    x = _points(x, y.d)
    return wrap(x + np.asarray(t, dtype=float)[..., None] * y.vec if np.ndim(t) else x + float(t) * y.vec)


def skew_apply(spec: SkewProductSpec, x, z) -> tuple[np.ndarray, np.ndarray]:
    """One step of the skew product in additive notation."""
    x = _points(x, spec.d)
    z = _points(z, spec.dprime)
    shift = x @ spec.N.T.astype(float)
    eta = np.stack([evaluate(e, x).real for e in spec.eta], axis=-1)
    return wrap(x + spec.y.vec), wrap(z + shift + eta)


def furstenberg_apply(spec: FurstenbergSpec, x, direction: str = "forward", level: int | None = None) -> np.ndarray:
    """Apply ``T_level`` (default ``T_d``) or its triangular inverse."""
    m = spec.d if level is None else int(level)
    if not 1 <= m <= spec.d:
        raise InvalidArgument("level must be between 1 and d")
    x = _points(x, m)
    out = np.empty_like(x)
    if direction == "forward":
        out[..., 0] = x[..., 0] + spec.y
        for r in range(2, m + 1):
            lin = x[..., : r - 1] @ spec.linear_row(r).astype(float)
            out[..., r - 1] = x[..., r - 1] + lin + evaluate(spec.h[r - 2], x[..., : r - 1]).real
    elif direction == "inverse":
        out[..., 0] = wrap(x[..., 0] - spec.y)
        for r in range(2, m + 1):
            prev = out[..., : r - 1]
            lin = prev @ spec.linear_row(r).astype(float)
            out[..., r - 1] = wrap(x[..., r - 1] - lin - evaluate(spec.h[r - 2], prev).real)
    else:
        raise InvalidArgument("direction must be 'forward' or 'inverse'")
    return wrap(out)


def furstenberg_inverse_jacobian_bound(spec: FurstenbergSpec, level: int) -> np.ndarray:
    """Entrywise bound ``B`` with ``|D(T_level^{-1})(x)| <= B`` for all x.

    The forward Jacobian is ``I + N(x)`` with ``N`` strictly lower triangular, so
    the inverse is ``sum_p (-N)^p`` and ``|D T^{-l}| <= B^l`` entrywise.
    """
    m = level
    Nb = np.zeros((m, m))
    for r in range(2, m + 1):
        for c in range(1, r):
            dh = partial(spec.h[r - 2], c - 1).l1_norm()
            Nb[r - 1, c - 1] = abs(spec.coef(r, c)) + dh
    B = np.eye(m)
    P = np.eye(m)
    for _ in range(1, m):
        P = P @ Nb
        B = B + P
    return B


def cocycle_phase_sum(spec: SkewProductSpec, x, n: int) -> np.ndarray:
    """``sum_{l<n} m.(N (x + l y) + eta(x + l y))`` along the lifted orbit (not reduced)."""
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    x = _points(x, spec.d)
    s = spec.char_vector.astype(float)
    lin = n * (x @ s) + 0.5 * n * (n - 1) * float(np.dot(s, spec.y.vec))
    q = spec.m_eta
    acc = np.zeros(x.shape[:-1])
    if q.coeffs:
        for ell in range(n):
            acc = acc + evaluate(q, wrap(x + ell * spec.y.vec)).real
    return lin + acc


# ---------------------------------------------------------------------------
# Time changes: quadrature along orbit lines


def _gl_rule(n: int = GL_NODES):
    xi, wi = np.polynomial.legendre.leggauss(n)
    # spectral integration matrix: Q[j, l] = int_{-1}^{xi_j} lagrange_l
    V = np.polynomial.legendre.legvander(xi, n - 1)
    Vint = np.zeros_like(V)
    for p in range(n):
        e = np.zeros(n)
        e[p] = 1.0
        Vint[:, p] = np.polynomial.legendre.legval(xi, np.polynomial.legendre.legint(e, lbnd=-1))
    Q = Vint @ np.linalg.inv(V)
    return xi, wi, Q


_XI, _WI, _QINT = _gl_rule()


class OrbitQuadrature:
    """Integrals along orbits of the time-changed flow for a batch of points.

    Orbit segments are parametrized by the arclength variable ``u`` of the
    straight line ``p + sign u y``; time and line parameter are related by
    ``t = int_0^u dv / f(p + sign v y)``.  Panels of width ``width`` start at
    ``u = 0`` and are shared across points, so polynomial values on full
    panels are computed with one matrix product per chunk.
    """

    def __init__(self, spec: TimeChangeSpec, tol: float = 1e-10, extra=(), span_hint: float = 16.0):
        if tol <= 0:
            raise InvalidArgument("tol must be positive")
        self.spec = spec
        self.tol = float(tol)
        self.polys = [spec.f] + list(extra)
        self.yv = spec.y.vec
        self.width = self._choose_width(span_hint)

    # -- polynomial values ----------------------------------------------------

    def _values_shared(self, P: np.ndarray, sign: float, u: np.ndarray) -> list[np.ndarray]:
        out = []
        for p in self.polys:
            K, C = p.arrays
            Kf = K.astype(float)
            tp = P @ Kf.T
            tp -= np.floor(tp)
            EP = np.exp(1j * TWO_PI * tp) * C
            tu = np.outer(sign * (Kf @ self.yv), u)
            tu -= np.floor(tu)
            Eu = np.exp(1j * TWO_PI * tu)
            out.append((EP @ Eu).real)
        return out

    def _values_at(self, X: np.ndarray) -> list[np.ndarray]:
        return [evaluate(p, X).real for p in self.polys]

    def _choose_width(self, span_hint: float) -> float:
        rng = np.random.default_rng(12345)
        P = rng.random((4, self.spec.d))
        span = float(max(1.0, min(math.ceil(span_hint), 64.0)))
        scale = max(1.0, span_hint / span)
        w = 1.0
        prev = self._line_integrals(P, +1.0, span, w)
        for _ in range(12):
            cur = self._line_integrals(P, +1.0, span, w / 2)
            if np.max(np.abs(cur - prev)) * scale < self.tol / 10:
                return w
            prev = cur
            w /= 2
        raise NumericFailure("time-change quadrature did not converge", {"width": w, "span": span})

    def _line_integrals(self, P, sign, span, w) -> np.ndarray:
        n_pan = int(round(span / w))
        u = (np.arange(n_pan)[:, None] * w + 0.5 * w * (1 + _XI)[None, :]).reshape(-1)
        vals = self._values_shared(P, sign, u)
        f = vals[0]
        integrands = [1.0 / f] + [v / f for v in vals[1:]]
        return np.array([0.5 * w * (q.reshape(len(P), n_pan, GL_NODES) @ _WI).sum(axis=1) for q in integrands])

    # -- core -----------------------------------------------------------------

    def _chunks(self, n_pts: int, n_nodes: int):
        step = max(1, int(4e6 // max(1, n_nodes * len(self.polys))))
        for lo in range(0, n_pts, step):
            yield slice(lo, min(n_pts, lo + step))

    def _solve_partial(self, P, sign, start, target, panel_int):
        """Find ``delta in [0, w]`` with ``int_start^{start+delta} 1/f = target`` per point."""
        w = self.width
        lo = np.zeros(len(P))
        hi = np.full(len(P), w)
        f0 = evaluate(self.spec.f, wrap(P + sign * start[:, None] * self.yv)).real
        delta = np.clip(target * f0, 0.0, w)
        for it in range(80):
            nodes = start[:, None] + 0.5 * delta[:, None] * (1 + _XI)[None, :]
            X = wrap(P[:, None, :] + sign * nodes[..., None] * self.yv)
            fv = evaluate(self.spec.f, X).real
            G = 0.5 * delta * ((1.0 / fv) @ _WI) - target
            if np.max(np.abs(G)) <= self.tol / 10:
                return delta
            lo = np.where(G < 0, delta, lo)
            hi = np.where(G > 0, delta, hi)
            fend = evaluate(self.spec.f, wrap(P + sign * (start + delta)[:, None] * self.yv)).real
            step = delta - G * fend
            bad = (step <= lo) | (step >= hi) | ~np.isfinite(step)
            delta = np.where(bad, 0.5 * (lo + hi), step)
        raise NumericFailure(
            "Newton iteration for h(p, t) did not converge",
            {"max_residual": float(np.max(np.abs(G))), "iterations": it + 1},
        )

    def run(self, P, T: float, sign: float, moments: bool = False, tilde: bool = False) -> dict:
        """Solve ``h`` for time ``T >= 0`` along direction ``sign`` and optionally integrate.

        Returns ``u`` (line parameter reached, >= 0) and, if requested, for each
        extra polynomial ``p`` the integrals ``int_0^T p dt`` (``moments``) and
        ``int_0^T (T - t) p dt`` (``tilde``) along the orbit.
        """
        P = wrap(np.atleast_2d(np.asarray(P, dtype=float)))
        n = len(P)
        n_extra = len(self.polys) - 1
        out = {"u": np.zeros(n)}
        if moments:
            out["moments"] = np.zeros((n_extra, n))
        if tilde:
            out["tilde"] = np.zeros((n_extra, n))
        if T == 0:
            return out
        w = self.width
        H_max = T * self.spec.f_sup * (1 + 1e-9) + w
        n_pan = int(math.ceil(H_max / w)) + 1
        u = (np.arange(n_pan)[:, None] * w + 0.5 * w * (1 + _XI)[None, :]).reshape(-1)
        for sl in self._chunks(n, len(u)):
            Pc = P[sl]
            m = len(Pc)
            vals = [v.reshape(m, n_pan, GL_NODES) for v in self._values_shared(Pc, sign, u)]
            invf = 1.0 / vals[0]
            pan = 0.5 * w * (invf @ _WI)
            cum = np.concatenate([np.zeros((m, 1)), np.cumsum(pan, axis=1)], axis=1)
            idx = np.array([np.searchsorted(cum[i], T, side="right") - 1 for i in range(m)])
            if np.any(idx >= n_pan):
                raise NumericFailure("orbit segment exceeded panel budget", {"T": T})
            rem = T - cum[np.arange(m), idx]
            start = idx * w
            delta = self._solve_partial(Pc, sign, start, rem, pan[np.arange(m), idx])
            out["u"][sl] = start + delta
            if not (moments or tilde):
                continue
            full = np.arange(n_pan)[None, :] < idx[:, None]
            nodes = start[:, None] + 0.5 * delta[:, None] * (1 + _XI)[None, :]
            Xp = wrap(Pc[:, None, :] + sign * nodes[..., None] * self.yv)
            pvals = self._values_at(Xp)
            invf_p = 1.0 / pvals[0]
            if tilde:
                tau_full = cum[:, :-1, None] + 0.5 * w * (invf @ _QINT.T)
                tau_part = rem[:, None] * 0 + cum[np.arange(m), idx][:, None] + 0.5 * delta[:, None] * (invf_p @ _QINT.T)
            for e in range(n_extra):
                q_full = vals[e + 1] * invf
                q_part = pvals[e + 1] * invf_p
                if moments:
                    a = (0.5 * w * (q_full @ _WI) * full).sum(axis=1)
                    b = 0.5 * delta * (q_part @ _WI)
                    out["moments"][e, sl] = a + b
                if tilde:
                    a = (0.5 * w * (((T - tau_full) * q_full) @ _WI) * full).sum(axis=1)
                    b = 0.5 * delta * (((T - tau_part) * q_part) @ _WI)
                    out["tilde"][e, sl] = a + b
        return out


def time_change_map(spec: TimeChangeSpec, p, t: float, tol: float = 1e-10, quad: OrbitQuadrature | None = None) -> np.ndarray:
    """Time-``t`` map of the flow of ``f Y_1``: ``p + h(p, t) y (mod 1)``.

    ``h`` solves ``t = int_0^h ds / f(p + s y)`` by safeguarded Newton iteration
    with composite Gauss-Legendre quadrature.
    """
    p = _points(p, spec.d)
    shape = p.shape
    P = p.reshape(-1, spec.d)
    h = time_change_h(spec, P, t, tol, quad)
    return wrap(P + h[:, None] * spec.y.vec).reshape(shape)


def time_change_h(spec: TimeChangeSpec, p, t: float, tol: float = 1e-10, quad: OrbitQuadrature | None = None) -> np.ndarray:
    """The reparametrization ``h(p, t)`` for a batch of points."""
    P = _points(p, spec.d).reshape(-1, spec.d)
    t = float(t)
    if t == 0.0:
        return np.zeros(len(P))
    quad = quad or OrbitQuadrature(spec, tol, span_hint=abs(t) * spec.f_sup)
    sign = 1.0 if t > 0 else -1.0
    return sign * quad.run(P, abs(t), sign)["u"]
