"""Trigonometric polynomials on the torus T^d = R^d / Z^d.

A :class:`TrigPoly` is a finite map ``k -> c_k`` from integer frequency vectors to
complex coefficients, representing ``sum_k c_k exp(2 pi i k.x)``.  Linear
operations (Lie derivatives along constant fields, translations, products) are
exact coefficient manipulations.  Transcendental operations (``exp(2 pi i f)``,
``exp f``, ``log f``) leave the class and are re-truncated by alias-checked FFT
sampling, returning an explicit sup-norm residual bound alongside the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import DomainError, InvalidArgument, NumericFailure

TWO_PI = 2.0 * math.pi
DROP_THRESHOLD = 1e-300
_MAX_GRID_POINTS = 2**21
_EPS = np.finfo(float).eps


def _as_key(k, d: int) -> tuple:
    key = tuple(int(v) for v in np.atleast_1d(k))
    if len(key) != d:
        raise InvalidArgument(f"frequency {key} has dimension {len(key)}, expected {d}")
    return key


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Finite trigonometric polynomial on T^d with sparse coefficient storage."""

    d: int
    coeffs: Mapping[tuple, complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise InvalidArgument("dimension d must be >= 1")
        clean = {}
        for k, c in dict(self.coeffs).items():
            c = complex(c)
            if abs(c) > DROP_THRESHOLD:
                clean[_as_key(k, self.d)] = c
        object.__setattr__(self, "coeffs", clean)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, d: int = 1) -> "TrigPoly":
        return cls(d, {})

    @classmethod
    def constant(cls, value, d: int = 1) -> "TrigPoly":
        return cls(d, {(0,) * d: complex(value)})

    @classmethod
    def exponential(cls, k, d: int | None = None, amplitude=1.0) -> "TrigPoly":
        """``amplitude * exp(2 pi i k.x)``."""
        k = tuple(int(v) for v in np.atleast_1d(k))
        return cls(d or len(k), {k: complex(amplitude)})

    @classmethod
    def from_harmonics(cls, d: int, const: float = 0.0, terms: Iterable = ()) -> "TrigPoly":
        """Real polynomial ``const + sum a cos(2 pi k.x) + b sin(2 pi k.x)``.

        ``terms`` is an iterable of ``(k, a, b)`` triples with ``k`` nonzero.
        """
        coeffs: dict[tuple, complex] = {}
        if const:
            coeffs[(0,) * d] = complex(const)
        for k, a, b in terms:
            key = _as_key(k, d)
            if not any(key):
                coeffs[key] = coeffs.get(key, 0) + a
                continue
            neg = tuple(-v for v in key)
            c = complex(0.5 * a, -0.5 * b)
            coeffs[key] = coeffs.get(key, 0) + c
            coeffs[neg] = coeffs.get(neg, 0) + c.conjugate()
        return cls(d, coeffs)

    @classmethod
    def cos(cls, k, amplitude=1.0) -> "TrigPoly":
        k = np.atleast_1d(k)
        return cls.from_harmonics(len(k), 0.0, [(k, amplitude, 0.0)])

    @classmethod
    def sin(cls, k, amplitude=1.0) -> "TrigPoly":
        k = np.atleast_1d(k)
        return cls.from_harmonics(len(k), 0.0, [(k, 0.0, amplitude)])

    # -- basic properties ---------------------------------------------------

    @cached_property
    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return max(max(abs(v) for v in k) for k in self.coeffs)

    @cached_property
    def is_real(self) -> bool:
        for k, c in self.coeffs.items():
            partner = self.coeffs.get(tuple(-v for v in k), 0j)
            if partner != c.conjugate():
                return False
        return True

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Frequencies as an ``(T, d)`` int array and coefficients as ``(T,)``."""
        keys = sorted(self.coeffs)
        if not keys:
            return np.zeros((0, self.d), dtype=np.int64), np.zeros(0, dtype=complex)
        K = np.array(keys, dtype=np.int64).reshape(len(keys), self.d)
        C = np.array([self.coeffs[k] for k in keys], dtype=complex)
        return K, C

    @property
    def mean(self) -> complex:
        return self.coeffs.get((0,) * self.d, 0j)

    def coefficient(self, k) -> complex:
        return self.coeffs.get(_as_key(k, self.d), 0j)

    def l1_norm(self) -> float:
        """Sum of |c_k|; an upper bound for the sup norm."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def lipschitz_bound(self) -> float:
        """``2 pi sum |k|_2 |c_k|``, a Lipschitz constant in the Euclidean metric."""
        K, C = self.arrays
        if not len(C):
            return 0.0
        return float(TWO_PI * np.sum(np.linalg.norm(K, axis=1) * np.abs(C)))

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    # -- algebra --------------------------------------------------------------

    def _check(self, other: "TrigPoly"):
        if other.d != self.d:
            raise InvalidArgument(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            other = TrigPoly.constant(other, self.d)
        self._check(other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0j) + c
        return TrigPoly(self.d, out)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(self.d, {k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, TrigPoly) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return product(self, other)
        s = complex(other)
        if s.imag == 0.0:
            r = s.real
            return TrigPoly(self.d, {k: c * r for k, c in self.coeffs.items()})
        return TrigPoly(self.d, {k: c * s for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def conj(self) -> "TrigPoly":
        """Pointwise complex conjugate."""
        return TrigPoly(self.d, {tuple(-v for v in k): c.conjugate() for k, c in self.coeffs.items()})

    def real_part(self) -> "TrigPoly":
        return hermitize(self)

    def shift_frequencies(self, s) -> "TrigPoly":
        """Multiply by ``exp(2 pi i s.x)`` for an integer vector ``s``."""
        s = _as_key(s, self.d)
        return TrigPoly(self.d, {tuple(a + b for a, b in zip(k, s)): c for k, c in self.coeffs.items()})

    def embed(self, d: int, axes) -> "TrigPoly":
        """View a polynomial in the coordinates ``axes`` of T^d."""
        axes = list(axes)
        if len(axes) != self.d:
            raise InvalidArgument("one target axis per source dimension required")
        out = {}
        for k, c in self.coeffs.items():
            key = [0] * d
            for a, v in zip(axes, k):
                key[a] = v
            out[tuple(key)] = c
        return TrigPoly(d, out)

    def allclose(self, other: "TrigPoly", atol: float = 1e-12) -> bool:
        self._check(other)
        return max_coeff_diff(self, other) <= atol

    def __repr__(self):
        kind = "real" if self.is_real else "complex"
        return f"TrigPoly(d={self.d}, {kind}, terms={len(self.coeffs)}, degree={self.degree})"


def hermitize(f: TrigPoly) -> TrigPoly:
    """Project onto real-valued polynomials: ``(f + conj f) / 2``, symmetric exactly."""
    out = {}
    for k, c in f.coeffs.items():
        nk = tuple(-v for v in k)
        partner = f.coeffs.get(nk, 0j)
        out[k] = 0.5 * (c + partner.conjugate())
        out[nk] = 0.5 * (partner + c.conjugate())
    return TrigPoly(f.d, out)


def max_coeff_diff(f: TrigPoly, g: TrigPoly) -> float:
    keys = set(f.coeffs) | set(g.coeffs)
    return max((abs(f.coeffs.get(k, 0j) - g.coeffs.get(k, 0j)) for k in keys), default=0.0)


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(f: TrigPoly, x) -> np.ndarray:
    """Evaluate ``sum_k c_k exp(2 pi i k.x)`` at points ``x`` of shape ``(..., d)``.

    A one-dimensional polynomial also accepts a bare array of coordinates.
    """
    x = np.asarray(x, dtype=float)
    if f.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != f.d:
        raise InvalidArgument(f"points have dimension {x.shape[-1]}, polynomial has {f.d}")
    K, C = f.arrays
    lead = x.shape[:-1]
    pts = x.reshape(-1, f.d)
    out = np.zeros(pts.shape[0], dtype=complex)
    if len(C):
        step = max(1, 2**22 // max(1, len(C)))
        for lo in range(0, pts.shape[0], step):
            t = pts[lo:lo + step] @ K.T.astype(float)
            t -= np.floor(t)
            out[lo:lo + step] = np.exp(1j * TWO_PI * t) @ C
    return out.reshape(lead)


def lie_derivative(f: TrigPoly, v) -> TrigPoly:
    """Derivative along the constant vector field ``v``: ``c_k -> 2 pi i (k.v) c_k``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != f.d:
        raise InvalidArgument("vector field dimension mismatch")
    out = {k: c * complex(0.0, TWO_PI * float(np.dot(k, v))) for k, c in f.coeffs.items()}
    res = TrigPoly(f.d, out)
    return hermitize(res) if f.is_real else res


def partial(f: TrigPoly, axis: int) -> TrigPoly:
    """Partial derivative in coordinate ``axis`` (0-based)."""
    e = np.zeros(f.d)
    e[axis] = 1.0
    return lie_derivative(f, e)


def product(f: TrigPoly, g: TrigPoly) -> TrigPoly:
    """Exact product (convolution of coefficient maps)."""
    if f.d != g.d:
        raise InvalidArgument(f"dimension mismatch: {f.d} vs {g.d}")
    out: dict[tuple, complex] = {}
    for k1, c1 in f.coeffs.items():
        for k2, c2 in g.coeffs.items():
            k = tuple(a + b for a, b in zip(k1, k2))
            out[k] = out.get(k, 0j) + c1 * c2
    res = TrigPoly(f.d, out)
    return hermitize(res) if (f.is_real and g.is_real) else res


def translate_pullback(f: TrigPoly, v) -> TrigPoly:
    """``x -> f(x + v)``, i.e. ``c_k -> c_k exp(2 pi i k.v)``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != f.d:
        raise InvalidArgument("translation dimension mismatch")
    out = {}
    for k, c in f.coeffs.items():
        t = float(np.dot(k, v))
        t -= math.floor(t)
        out[k] = c * complex(math.cos(TWO_PI * t), math.sin(TWO_PI * t))
    res = TrigPoly(f.d, out)
    return hermitize(res) if f.is_real else res


# ---------------------------------------------------------------------------
# Grids


def grid_shape(d: int, resolution) -> tuple:
    """Per-axis grid sizes from an int (isotropic) or a length-``d`` sequence."""
    if np.ndim(resolution) == 0:
        shape = (int(resolution),) * d
    else:
        shape = tuple(int(r) for r in resolution)
    if len(shape) != d or min(shape) < 1:
        raise InvalidArgument(f"bad grid resolution {resolution!r} for d={d}")
    return shape


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on the uniform grid ``prod_i {j / R_i}``, axis order ``ij``.

    ``resolution`` is an int for isotropic grids or a per-axis tuple.
    """

    d: int
    resolution: object
    samples: np.ndarray

    def __post_init__(self):
        shape = grid_shape(self.d, self.resolution)
        s = np.asarray(self.samples)
        if s.shape != shape:
            s = s.reshape(shape)
        object.__setattr__(self, "samples", s)

    @property
    def shape(self) -> tuple:
        return self.samples.shape

    def points(self) -> np.ndarray:
        return grid_points(self.d, self.resolution)

    def sup(self) -> float:
        return float(np.max(np.abs(self.samples)))


def grid_points(d: int, resolution) -> np.ndarray:
    """All grid points as an ``(prod R_i, d)`` array in C order."""
    axes = [np.arange(r) / r for r in grid_shape(d, resolution)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def axis_degrees(f: TrigPoly) -> np.ndarray:
    """Per-coordinate degree ``max |k_i|`` over the support."""
    K, _ = f.arrays
    return np.max(np.abs(K), axis=0) if len(K) else np.zeros(f.d, dtype=np.int64)


def sample(f: TrigPoly, resolution) -> GridFunction:
    """Exact sampling via inverse FFT; requires ``R_i > 2 * degree_i`` on every axis."""
    shape = grid_shape(f.d, resolution)
    need = 2 * axis_degrees(f) + 1
    if any(r < n for r, n in zip(shape, need)):
        raise InvalidArgument(
            f"resolution {resolution} aliases a polynomial of axis degrees "
            f"{tuple(int(v) for v in axis_degrees(f))} (need >= {tuple(int(v) for v in need)})"
        )
    if math.prod(shape) > _MAX_GRID_POINTS * 4:
        raise InvalidArgument(f"grid {shape} too large")
    arr = np.zeros(shape, dtype=complex)
    K, C = f.arrays
    if len(C):
        idx = tuple((K % np.array(shape)).T)
        np.add.at(arr, idx, C)
    vals = np.fft.ifftn(arr) * math.prod(shape)
    return GridFunction(f.d, resolution, vals)


def _fft_coefficients(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourier coefficients of grid samples with signed frequency vectors."""
    C = np.fft.fftn(samples) / samples.size
    freqs = [np.fft.fftfreq(R, 1.0 / R).astype(np.int64) for R in samples.shape]
    mesh = np.meshgrid(*freqs, indexing="ij")
    K = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return K, C.reshape(-1)


def from_samples(gf: GridFunction, keep_radius: int | None = None, real: bool = False) -> TrigPoly:
    """Interpolating polynomial of grid samples (frequencies ``|k|_inf <= keep_radius``)."""
    K, C = _fft_coefficients(np.asarray(gf.samples))
    if keep_radius is None:
        mask = np.all(np.abs(K) <= (np.array(gf.shape) - 1) // 2, axis=1)
    else:
        mask = np.max(np.abs(K), axis=1) <= keep_radius
    poly = TrigPoly(gf.d, {tuple(k): c for k, c in zip(K[mask], C[mask])})
    return hermitize(poly) if real else poly


# ---------------------------------------------------------------------------
# Transcendental functions with residual bounds


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(1, n)))))


def _smooth_transform(
    f: TrigPoly,
    func: Callable[[np.ndarray], np.ndarray],
    tol: float,
    real_output: bool,
    name: str,
) -> tuple[TrigPoly, float]:
    """Truncated Fourier expansion of ``func(f)`` with a sup-norm residual bound.

    Resolution starts at ``max(8 deg, 16)`` and doubles until the coefficient
    mass beyond ``R/4`` falls below ``tol`` (or the FFT round-off floor).  The
    kept band is ``|k|_inf <= R/4``; the returned bound is the sum of dropped
    coefficients plus twice the out-of-band mass as an aliasing estimate.
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    d = f.d
    R = _next_pow2(max(8 * f.degree, 16))
    last_tail = math.inf
    while True:
        if R**d > _MAX_GRID_POINTS:
            raise NumericFailure(
                f"{name}: tol={tol:g} not reached at maximal resolution",
                {"resolution": R // 2, "tail": last_tail, "degree": f.degree},
            )
        vals = sample(f, R).samples
        if real_output or f.is_real:
            vals = vals.real
        out = func(vals)
        K, C = _fft_coefficients(out)
        radius = R // 4
        inband = np.max(np.abs(K), axis=1) <= radius
        absC = np.abs(C)
        tail = float(absC[~inband].sum())
        n_tail = int((~inband).sum())
        scale = float(np.max(np.abs(out)))
        noise = n_tail * 4.0 * _EPS * scale * math.log2(out.size + 1)
        if tail <= max(tol, noise):
            break
        if tail >= last_tail and tail <= 100 * noise:
            break
        last_tail = tail
        R *= 2
    keep = inband & (absC >= tol)
    dropped = float(absC[inband & ~keep].sum())
    poly = TrigPoly(d, {tuple(k): c for k, c in zip(K[keep], C[keep])})
    if real_output:
        poly = hermitize(poly)
    return poly, dropped + 3.0 * tail


def unit_phase(f: TrigPoly, tol: float = 1e-14) -> tuple[TrigPoly, float]:
    """Truncated expansion ``P`` of ``exp(2 pi i f)`` for real ``f``.

    Returns ``(P, residual_bound)`` with ``sup |exp(2 pi i f) - P| <= residual_bound``.
    """
    if not f.is_real:
        raise InvalidArgument("unit_phase needs a real-valued polynomial")
    if f.degree == 0:
        c = f.mean.real
        t = c - math.floor(c)
        return TrigPoly.constant(complex(math.cos(TWO_PI * t), math.sin(TWO_PI * t)), f.d), 0.0
    return _smooth_transform(f, lambda v: np.exp(1j * TWO_PI * v), tol, False, "unit_phase")


def exp_poly(f: TrigPoly, tol: float = 1e-14) -> tuple[TrigPoly, float]:
    """Truncated expansion of ``exp(f)`` for real ``f`` (a positive real polynomial)."""
    if not f.is_real:
        raise InvalidArgument("exp_poly needs a real-valued polynomial")
    if f.degree == 0:
        return TrigPoly.constant(math.exp(f.mean.real), f.d), 0.0
    return _smooth_transform(f, np.exp, tol, True, "exp_poly")


def log_positive(f: TrigPoly, tol: float = 1e-14) -> tuple[TrigPoly, float]:
    """Truncated expansion of ``log f`` for a real ``f`` with positive certified infimum."""
    if not f.is_real:
        raise InvalidArgument("log_positive needs a real-valued polynomial")
    lower, _ = certified_infimum(f, _default_resolution(f))
    if lower <= 0:
        raise DomainError(f"certified infimum {lower:g} is not positive; log undefined")
    if f.degree == 0:
        return TrigPoly.constant(math.log(f.mean.real), f.d), 0.0
    return _smooth_transform(f, np.log, tol, True, "log_positive")


def _default_resolution(f: TrigPoly) -> int:
    per_axis = {1: 4096, 2: 512}.get(f.d, 64)
    return max(per_axis, _next_pow2(2 * f.degree + 2))


def certified_infimum(f: TrigPoly, resolution: int | None = None) -> tuple[float, np.ndarray]:
    """Rigorous lower bound for ``inf f`` from grid samples and a Lipschitz bound.

    ``lower = min_grid f - Lip(f) * sqrt(d) / (2 R)``; every point of T^d lies within
    Euclidean distance ``sqrt(d) / (2R)`` of a grid point.
    """
    if not f.is_real:
        raise InvalidArgument("certified_infimum needs a real-valued polynomial")
    R = _default_resolution(f) if resolution is None else int(resolution)
    if R < 2 * f.degree + 2:
        raise InvalidArgument(f"resolution {R} below 2*degree+2 = {2 * f.degree + 2}")
    if f.degree == 0:
        return float(f.mean.real), np.zeros(f.d)
    vals = sample(f, R).samples.real
    flat = int(np.argmin(vals))
    idx = np.unravel_index(flat, vals.shape)
    argmin = np.array(idx, dtype=float) / R
    gap = f.lipschitz_bound() * math.sqrt(f.d) / (2.0 * R)
    return float(vals.reshape(-1)[flat] - gap), argmin


def sup_norm_grid(f: TrigPoly, resolution: int) -> float:
    return float(np.max(np.abs(sample(f, resolution).samples)))


# ---------------------------------------------------------------------------
# Serialization


def dumps(f: TrigPoly) -> str:
    """Text form: header line then one ``k_1 .. k_d re im`` line per coefficient."""
    K, C = f.arrays
    lines = [f"trigpoly d={f.d} real={int(f.is_real)} terms={len(C)}"]
    for k, c in zip(K, C):
        ks = " ".join(str(int(v)) for v in k)
        lines.append(f"{ks} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> TrigPoly:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "trigpoly":
        raise InvalidArgument("not a trigpoly record")
    meta = dict(item.split("=") for item in head[1:])
    d = int(meta["d"])
    n_terms = int(meta["terms"])
    coeffs = {}
    for ln in lines[1:1 + n_terms]:
        parts = ln.split()
        k = tuple(int(v) for v in parts[:d])
        coeffs[k] = complex(float(parts[d]), float(parts[d + 1]))
    poly = TrigPoly(d, coeffs)
    if int(meta.get("real", 0)) and not poly.is_real:
        raise InvalidArgument("record flagged real but coefficients are not Hermitian")
    return poly
