"""Operators on truncated Fourier windows of L^2(T^d).

A window holds the frequencies ``|k|_inf <= M``; vectors are flat arrays in C
order over the axes.  Koopman operators of the systems here factor as a
multiplication operator after a diagonal one, and :class:`OperatorMatrix`
keeps that factorization so vectors can be pushed through by FFT convolution
instead of a dense product.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateSpec, InvalidArgument
from .torusdyn import FrequencyVector, FurstenbergSpec, SkewProductSpec
from .trigfun import TWO_PI, TrigPoly, unit_phase

_DENSE_LIMIT = 6000


@dataclass(frozen=True)
class FreqWindow:
    """Frequencies ``k in Z^d`` with ``|k|_inf <= M``; ``margin`` marks the exact interior."""

    d: int
    M: int
    margin: int = 0

    def __post_init__(self):
        if self.d < 1 or self.M < 0:
            raise InvalidArgument("window needs d >= 1 and M >= 0")
        if not 0 <= self.margin <= self.M:
            raise InvalidArgument(f"margin {self.margin} must lie in [0, M={self.M}]")

    @property
    def side(self) -> int:
        return 2 * self.M + 1

    @property
    def size(self) -> int:
        return self.side**self.d

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @cached_property
    def freqs(self) -> np.ndarray:
        ax = np.arange(-self.M, self.M + 1)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        """``|k|_inf`` per index."""
        return np.max(np.abs(self.freqs), axis=1)

    def index(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if k.shape[-1] != self.d:
            raise InvalidArgument("frequency dimension mismatch")
        idx = np.zeros(k.shape[:-1], dtype=np.int64)
        for i in range(self.d):
            idx = idx * self.side + (k[..., i] + self.M)
        return idx

    def contains(self, k) -> np.ndarray:
        return np.max(np.abs(np.asarray(k)), axis=-1) <= self.M

    def interior_mask(self, margin: int | None = None) -> np.ndarray:
        m = self.margin if margin is None else margin
        return self.radius <= self.M - m

    def with_margin(self, margin: int) -> "FreqWindow":
        return FreqWindow(self.d, self.M, margin)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Coefficient vector on a window."""

    window: FreqWindow
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if c.shape[0] != self.window.size:
            raise InvalidArgument(f"vector length {c.shape[0]} does not match window size {self.window.size}")
        object.__setattr__(self, "coeffs", c)

    @property
    def support(self) -> int:
        """Largest ``|k|_inf`` carrying a nonzero coefficient (-1 for the zero vector)."""
        nz = self.coeffs != 0
        return int(self.window.radius[nz].max()) if nz.any() else -1

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def basis(cls, window: FreqWindow, k) -> "StateVector":
        c = np.zeros(window.size, dtype=complex)
        c[int(window.index(np.atleast_1d(k)))] = 1.0
        return cls(window, c)

    @classmethod
    def random_interior(cls, window: FreqWindow, support: int, rng) -> "StateVector":
        """Unit vector with Gaussian coefficients on ``|k|_inf <= support``."""
        mask = window.radius <= support
        c = np.zeros(window.size, dtype=complex)
        n = int(mask.sum())
        c[mask] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        c /= np.linalg.norm(c)
        return cls(window, c)

    @classmethod
    def from_poly(cls, window: FreqWindow, p: TrigPoly) -> "StateVector":
        if p.d != window.d or p.degree > window.M:
            raise InvalidArgument("polynomial does not fit the window")
        c = np.zeros(window.size, dtype=complex)
        K, C = p.arrays
        if len(C):
            c[window.index(K)] = C
        return cls(window, c)


@dataclass(frozen=True, eq=False)
class Factored:
    """``v -> Q * (D v)``: diagonal ``D`` then multiplication by the polynomial ``Q``."""

    diag: np.ndarray
    mult: TrigPoly


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Complex operator on a window with declared bandwidth.

    ``band`` bounds ``|r - c|_inf`` over nonzero entries; ``residual_bound`` is
    an operator-norm bound on the distance to the exact (untruncated-data)
    operator; ``factored`` enables the convolution fast path.
    """

    window: FreqWindow
    entries_: np.ndarray | None = None
    band: int = 0
    residual_bound: float = 0.0
    unitary: bool = False
    factored: Factored | None = None
    label: str = ""

    def __post_init__(self):
        if self.entries_ is None and self.factored is None:
            raise InvalidArgument("operator needs entries or a factored form")
        if self.entries_ is not None:
            e = np.asarray(self.entries_, dtype=complex)
            if e.shape != (self.window.size, self.window.size):
                raise InvalidArgument("entry matrix does not match window size")
            object.__setattr__(self, "entries_", e)

    @property
    def entries(self) -> np.ndarray:
        if self.entries_ is None:
            if self.window.size > _DENSE_LIMIT:
                raise InvalidArgument(f"window of size {self.window.size} too large for dense entries")
            dense = _dense_factored(self.window, self.factored)
            object.__setattr__(self, "entries_", dense)
        return self.entries_

    @property
    def is_diagonal(self) -> bool:
        return self.band == 0 and (self.factored is None or self.factored.mult.degree == 0)

    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()


def _dense_multiplication(window: FreqWindow, p: TrigPoly) -> np.ndarray:
    n = window.size
    out = np.zeros((n, n), dtype=complex)
    K, C = p.arrays
    F = window.freqs
    cols = np.arange(n)
    for q, c in zip(K, C):
        tgt = F + q
        ok = window.contains(tgt)
        out[window.index(tgt[ok]), cols[ok]] = c
    return out


def _dense_factored(window: FreqWindow, fac: Factored) -> np.ndarray:
    return _dense_multiplication(window, fac.mult) * fac.diag[None, :]


def _check_same(P: OperatorMatrix, Q: OperatorMatrix):
    if P.window.d != Q.window.d or P.window.M != Q.window.M:
        raise InvalidArgument("operators live on different windows")


# ---------------------------------------------------------------------------
# Constructors


def identity(window: FreqWindow) -> OperatorMatrix:
    return OperatorMatrix(window, np.eye(window.size, dtype=complex), band=0, unitary=True, label="identity")


def diagonal_operator(window: FreqWindow, values, label: str = "") -> OperatorMatrix:
    values = np.asarray(values)
    return OperatorMatrix(
        window,
        None if window.size > _DENSE_LIMIT else np.diag(values.astype(complex)),
        band=0,
        factored=Factored(values.astype(complex), TrigPoly.constant(1.0, window.d)),
        label=label,
    )


def translation_koopman(y, window: FreqWindow) -> OperatorMatrix:
    """``V e_k = e^{2 pi i k.y} e_k``."""
    yv = y.vec if isinstance(y, FrequencyVector) else np.atleast_1d(np.asarray(y, dtype=float))
    if yv.shape[0] != window.d:
        raise InvalidArgument("frequency vector dimension mismatch")
    t = window.freqs @ yv
    t -= np.floor(t)
    ph = np.exp(1j * TWO_PI * t)
    op = diagonal_operator(window, ph, label="translation")
    return OperatorMatrix(window, op.entries_, 0, 0.0, True, op.factored, "translation")


def multiplication_matrix(p: TrigPoly, window: FreqWindow) -> OperatorMatrix:
    """Multiplication by ``p``: entry ``[k, k']`` is the coefficient of ``p`` at ``k - k'``."""
    if p.d != window.d:
        raise InvalidArgument("polynomial dimension mismatch")
    if p.degree > window.M:
        raise InvalidArgument(f"degree {p.degree} exceeds window half-width {window.M}")
    dense = None if window.size > _DENSE_LIMIT else _dense_multiplication(window, p)
    return OperatorMatrix(
        window,
        dense,
        band=p.degree,
        factored=Factored(np.ones(window.size, dtype=complex), p),
        label="multiplication",
    )


def _rotation_cocycle_operator(window, y, shift, phase: TrigPoly, tol, dense, label):
    """``Q V`` with ``Q = e_shift * exp(2 pi i phase)`` and ``V`` the translation by ``y``."""
    P, res = unit_phase(phase, tol)
    Q = P.shift_frequencies(shift)
    band = Q.degree
    if band > window.M:
        raise InvalidArgument(f"window M={window.M} too small for operator band {band}; need M >= {band}")
    V = translation_koopman(y, window)
    fac = Factored(V.factored.diag, Q)
    entries = _dense_factored(window, fac) if dense and window.size <= _DENSE_LIMIT else None
    return OperatorMatrix(window, entries, band, res, True, fac, label)


def _furstenberg_w2(spec: FurstenbergSpec, window: FreqWindow, tol: float):
    """Dense Koopman matrix of ``T_2`` on T^2 (band grows with ``kappa_2``)."""
    if window.d != 2:
        raise InvalidArgument("level-2 base operator needs a 2-d window")
    n = window.size
    out = np.zeros((n, n), dtype=complex)
    b21 = spec.coef(2, 1)
    total_res = 0.0
    cache = {}
    F = window.freqs
    for col, (k1, k2) in enumerate(F):
        if k2 not in cache:
            cache[k2] = unit_phase(spec.h[0] * float(k2), tol)
        P, res = cache[k2]
        total_res = max(total_res, res)
        base = np.array([k1 + k2 * b21, k2])
        t = (k1 * spec.y) % 1.0
        rot = np.exp(1j * TWO_PI * t)
        K, C = P.arrays
        for q, c in zip(K[:, 0], C):
            tgt = base + np.array([q, 0])
            if window.contains(tgt):
                out[int(window.index(tgt)), col] = c * rot
    band = 0
    rows, cols = np.nonzero(out)
    if len(rows):
        band = int(np.max(np.abs(F[rows] - F[cols])))
    return out, band, total_res


def assemble_koopman(spec, window: FreqWindow, tol: float = 1e-14, level=None, dense: bool = True):
    """Koopman unitary of a skew product block or Furstenberg block ``U_{j,k}``.

    Skew: ``U e_k = (e_s * exp(2 pi i m.eta)) e^{2 pi i k.y} e_k`` with ``s = N^T m``.
    Furstenberg ``(j, k)``: ``exp(2 pi i k phi_j) W_{j-1}`` on T^{j-1}; ``j`` is
    limited to 2 and 3 (the level-2 base is assembled densely).

    Returns ``(operator, residual_bound)``.
    """
    if isinstance(spec, SkewProductSpec):
        if window.d != spec.d:
            raise InvalidArgument("window dimension must equal the base dimension")
        op = _rotation_cocycle_operator(window, spec.y, spec.char_vector, spec.m_eta, tol, dense, "skew")
        return op, op.residual_bound
    if isinstance(spec, FurstenbergSpec):
        j, k = _level(spec, level)
        if window.d != j - 1:
            raise InvalidArgument(f"U_({j},{k}) acts on T^{j - 1}; window has d={window.d}")
        row = spec.linear_row(j) * k
        phase = spec.h[j - 2] * float(k)
        if j == 2:
            op = _rotation_cocycle_operator(window, (spec.y,), row, phase, tol, dense, f"furstenberg({j},{k})")
            return op, op.residual_bound
        if j == 3:
            W, wband, wres = _furstenberg_w2(spec, window, tol)
            P, res = unit_phase(phase, tol)
            Q = P.shift_frequencies(row)
            if Q.degree > window.M:
                raise InvalidArgument(f"window M={window.M} too small for phase degree {Q.degree}")
            E = _dense_multiplication(window, Q) @ W
            op = OperatorMatrix(window, E, wband + Q.degree, res + wres, True, None, f"furstenberg({j},{k})")
            return op, op.residual_bound
        raise InvalidArgument("Furstenberg blocks are assembled for j = 2, 3 only")
    raise InvalidArgument(f"unsupported system {type(spec).__name__}")


def _level(spec: FurstenbergSpec, level) -> tuple[int, int]:
    if level is None:
        return 2, 1
    j, k = (int(v) for v in level)
    if not 2 <= j <= spec.d:
        raise InvalidArgument(f"level j={j} must be in [2, {spec.d}]")
    if k == 0:
        raise InvalidArgument("character index k must be nonzero")
    return j, k


def conjugate_diagonal(spec, window: FreqWindow, level=None, scale: float = 1.0) -> OperatorMatrix:
    """Real diagonal conjugate operator fixed by ``[A, U] = g U``.

    Skew: ``A e_k = (2 pi)^2 (m.Ny) (k.y) e_k``.  Furstenberg ``(j, k)``:
    ``A e_kappa = kappa_{j-1} / (k b_{j,j-1}) e_kappa``.
    """
    if isinstance(spec, SkewProductSpec):
        if spec.degenerate:
            raise DegenerateSpec("N^T m = 0: the character is trivial on the homomorphism part, no conjugate operator")
        vals = TWO_PI**2 * spec.m_Ny * (window.freqs @ spec.y.vec)
    elif isinstance(spec, FurstenbergSpec):
        j, k = _level(spec, level)
        vals = window.freqs[:, j - 2] / (k * spec.coef(j, j - 1))
    else:
        raise InvalidArgument(f"unsupported system {type(spec).__name__}")
    return diagonal_operator(window, scale * vals.astype(float), label="conjugate")


# ---------------------------------------------------------------------------
# Algebra


def adjoint(P: OperatorMatrix) -> OperatorMatrix:
    return OperatorMatrix(P.window, P.entries.conj().T, P.band, P.residual_bound, P.unitary, None, P.label + "*")


def matmul(P: OperatorMatrix, Q: OperatorMatrix) -> OperatorMatrix:
    _check_same(P, Q)
    return OperatorMatrix(P.window, P.entries @ Q.entries, P.band + Q.band, P.residual_bound + Q.residual_bound)


def commutator(P: OperatorMatrix, Q: OperatorMatrix) -> OperatorMatrix:
    """``PQ - QP``."""
    _check_same(P, Q)
    a = P.entries @ Q.entries
    b = Q.entries @ P.entries
    return OperatorMatrix(P.window, a - b, P.band + Q.band, P.residual_bound + Q.residual_bound)


def average_conjugate(A: OperatorMatrix, U: OperatorMatrix, n: int) -> OperatorMatrix:
    """``A_n = (1/n) sum_{l<n} U^{-l} A U^l`` with ``U^{-1} = U^*``.

    Entries ``(r, c)`` with ``|r|, |c| <= M - (n-1) band(U)`` are exact; the
    caller must keep test vectors inside that zone (see ``exact_zone``).
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    _check_same(A, U)
    if (n - 1) * U.band >= U.window.M:
        raise InvalidArgument(
            f"support overflow: need window half-width > (n-1)*band = {(n - 1) * U.band}, have M={U.window.M}"
        )
    Ue = U.entries
    Uh = Ue.conj().T
    term = A.entries.copy()
    acc = term.copy()
    for _ in range(1, n):
        term = Uh @ term @ Ue
        acc += term
    acc /= n
    return OperatorMatrix(
        A.window, acc, 2 * (n - 1) * U.band + A.band, n * U.residual_bound, label=f"A_{n}"
    )


def exact_zone(U: OperatorMatrix, n: int) -> int:
    """Radius on which :func:`average_conjugate` entries are exact."""
    return U.window.M - (n - 1) * U.band


def apply(op: OperatorMatrix, v: StateVector, fast: bool = False, leakage: list | None = None) -> StateVector:
    """Matrix-vector product; ``fast`` uses FFT convolution for factored operators.

    On the fast path, mass pushed outside the window is dropped and its norm
    appended to ``leakage`` when a list is supplied.
    """
    if v.window.d != op.window.d or v.window.M != op.window.M:
        raise InvalidArgument("vector and operator windows differ")
    if fast and op.factored is not None:
        w = op.factored.diag * v.coeffs
        Q = op.factored.mult
        if Q.degree == 0:
            out = w * Q.mean
            if leakage is not None:
                leakage.append(0.0)
            return StateVector(v.window, out)
        out, lost = _convolve(w.reshape(v.window.shape), Q)
        if leakage is not None:
            leakage.append(lost)
        return StateVector(v.window, out.reshape(-1))
    return StateVector(v.window, op.entries @ v.coeffs)


def _kernel(Q: TrigPoly) -> np.ndarray:
    D = Q.degree
    ker = np.zeros((2 * D + 1,) * Q.d, dtype=complex)
    K, C = Q.arrays
    ker[tuple((K + D).T)] = C
    return ker


def _convolve(arr: np.ndarray, Q: TrigPoly) -> tuple[np.ndarray, float]:
    D = Q.degree
    full = fftconvolve(arr, _kernel(Q), mode="full")
    sl = tuple(slice(D, D + n) for n in arr.shape)
    kept = full[sl]
    lost2 = max(0.0, float(np.sum(np.abs(full) ** 2) - np.sum(np.abs(kept) ** 2)))
    return kept, math.sqrt(lost2)


def operator_norm(op: OperatorMatrix, iterations: int = 30, seed: int = 0) -> float:
    """Power-iteration estimate of ``||op||_2`` with a deterministic start vector."""
    E = op.entries
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(E.shape[1]) + 1j * rng.standard_normal(E.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = E.conj().T @ (E @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        est = math.sqrt(nw)
        v = w / nw
    return float(est)


def frobenius_norm(op: OperatorMatrix) -> float:
    return float(np.linalg.norm(op.entries))


def dumps_operator(op: OperatorMatrix) -> str:
    """Header line then one row per line of ``re im`` pairs."""
    buf = io.StringIO()
    w = op.window
    buf.write(
        f"operator d={w.d} M={w.M} margin={w.margin} band={op.band} "
        f"residual_bound={op.residual_bound!r} size={w.size}\n"
    )
    for row in op.entries:
        buf.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
        buf.write("\n")
    return buf.getvalue()


def loads_operator(text: str) -> OperatorMatrix:
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != "operator":
        raise InvalidArgument("not an operator record")
    meta = dict(item.split("=") for item in head[1:])
    w = FreqWindow(int(meta["d"]), int(meta["M"]), int(meta["margin"]))
    rows = [np.array([float(t) for t in ln.split()]) for ln in lines[1:1 + w.size]]
    E = np.array([r[0::2] + 1j * r[1::2] for r in rows])
    return OperatorMatrix(w, E, int(meta["band"]), float(meta["residual_bound"]))
