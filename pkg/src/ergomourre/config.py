"""Run configuration: YAML schema, defaults, validation and system construction.

Polynomials are written as ``{const: c, terms: [{k: [..], cos: a, sin: b}],
divide_by_2pi: bool}`` meaning ``c + sum a cos(2 pi k.x) + b sin(2 pi k.x)``,
with every amplitude divided by ``2 pi`` when ``divide_by_2pi`` is set.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import yaml

from .errors import InvalidArgument
from .torusdyn import FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec
from .trigfun import TrigPoly, exp_poly

SYSTEM_KEYS = {
    "skew": {"class", "y", "N", "m", "eta", "allow_degenerate"},
    "furstenberg": {"class", "d", "y", "b", "h", "level"},
    "timechange": {"class", "d", "y", "y2", "f", "f_exp"},
    "rotation": {"class", "y", "k"},
}

DEFAULTS = {
    "window": {"M": 64, "tol": 1e-14, "commutator_n": [1], "trials": 20},
    "mourre": {"n_max": 2**14, "resolution": None, "min_ratio": 0.5},
    "spectral": {
        "N": 1000,
        "kernel": "fejer",
        "point_threshold": 0.05,
        "flatness_threshold": 0.2,
        "path": "matrix",
        "accept_leakage": False,
        "phi": None,
    },
    "timechange": {
        "L_values": [10.0, 100.0],
        "L_identity": 10.0,
        "grid": None,
        "tol": 1e-6,
        "tol_gL": 1e-8,
        "gL_tolerance": 0.02,
        "phi": None,
        "horizon": 1000.0,
        "start": None,
        "birkhoff_tolerance": 1e-3,
    },
    "output": {"formats": ["json", "csv"]},
}

POLY_KEYS = {"const", "terms", "divide_by_2pi"}
TERM_KEYS = {"k", "cos", "sin"}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled in."""

    data: dict

    @property
    def system_class(self) -> str:
        return self.data["system"]["class"]

    def section(self, name: str) -> dict:
        return self.data[name]


def _reject_unknown(section: str, given: dict, allowed: set):
    extra = sorted(set(given) - allowed)
    if extra:
        raise InvalidArgument(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def parse_config(text: str) -> RunConfig:
    """Parse YAML text and validate it against the schema."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidArgument(f"malformed configuration: {exc}") from None
    return validate(raw)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidArgument(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text)


def validate(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise InvalidArgument("configuration must be a mapping of sections")
    _reject_unknown("top level", raw, {"system"} | set(DEFAULTS))
    system = raw.get("system")
    if not isinstance(system, dict) or "class" not in system:
        raise InvalidArgument("[system] section with a 'class' key is required")
    cls = system["class"]
    if cls not in SYSTEM_KEYS:
        raise InvalidArgument(f"unknown system class {cls!r}; expected one of {sorted(SYSTEM_KEYS)}")
    _reject_unknown("system", system, SYSTEM_KEYS[cls])
    data = {"system": copy.deepcopy(system)}
    for name, defaults in DEFAULTS.items():
        given = raw.get(name) or {}
        if not isinstance(given, dict):
            raise InvalidArgument(f"[{name}] must be a mapping")
        _reject_unknown(name, given, set(defaults))
        merged = copy.deepcopy(defaults)
        merged.update(copy.deepcopy(given))
        data[name] = merged
    _check_positive(data)
    cfg = RunConfig(data)
    build_system(cfg)
    return cfg


def _check_positive(data: dict):
    checks = [
        ("window", "tol"), ("window", "M"), ("window", "trials"), ("mourre", "n_max"),
        ("spectral", "N"), ("spectral", "point_threshold"), ("spectral", "flatness_threshold"),
        ("timechange", "tol"), ("timechange", "tol_gL"), ("timechange", "gL_tolerance"),
        ("timechange", "horizon"), ("timechange", "L_identity"), ("timechange", "birkhoff_tolerance"),
    ]
    for sec, key in checks:
        v = data[sec][key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
            raise InvalidArgument(f"[{sec}] {key} must be a positive number (got {v!r})")
    if any(not isinstance(L, (int, float)) or L <= 0 for L in data["timechange"]["L_values"]):
        raise InvalidArgument("[timechange] L_values must be positive numbers")
    if data["spectral"]["kernel"] not in ("fejer", "hann"):
        raise InvalidArgument("[spectral] kernel must be fejer or hann")
    if data["spectral"]["path"] not in ("matrix", "quadrature", "both"):
        raise InvalidArgument("[spectral] path must be matrix, quadrature or both")
    mr = data["mourre"]["min_ratio"]
    if not isinstance(mr, (int, float)) or not 0 <= mr < 1:
        raise InvalidArgument("[mourre] min_ratio must lie in [0, 1)")


def parse_poly(spec, d: int, where: str) -> TrigPoly:
    """Build a real polynomial from the harmonic-term mapping (or a bare constant)."""
    if spec is None:
        return TrigPoly.zero(d)
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return TrigPoly.constant(float(spec), d)
    if not isinstance(spec, dict):
        raise InvalidArgument(f"{where}: polynomial must be a mapping or a number")
    _reject_unknown(where, spec, POLY_KEYS)
    scale = 1.0 / (2.0 * math.pi) if spec.get("divide_by_2pi", False) else 1.0
    terms = []
    for t in spec.get("terms") or []:
        if not isinstance(t, dict):
            raise InvalidArgument(f"{where}: each term must be a mapping")
        _reject_unknown(f"{where} term", t, TERM_KEYS)
        k = t.get("k")
        if k is None:
            raise InvalidArgument(f"{where}: term needs a frequency 'k'")
        k = [int(v) for v in (k if isinstance(k, list) else [k])]
        if len(k) != d:
            raise InvalidArgument(f"{where}: frequency {k} must have {d} entries")
        terms.append((k, scale * float(t.get("cos", 0.0)), scale * float(t.get("sin", 0.0))))
    return TrigPoly.from_harmonics(d, float(spec.get("const", 0.0)), terms)


def _vector(v, where: str) -> list:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if not isinstance(v, list) or not v:
        raise InvalidArgument(f"{where} must be a number or a nonempty list")
    return [float(x) for x in v]


def build_system(cfg: RunConfig):
    """Instantiate the system described by the [system] section."""
    s = cfg.data["system"]
    cls = s["class"]
    try:
        if cls == "skew":
            y = _vector(s.get("y"), "system.y")
            N = s.get("N", [[1]])
            N = N if isinstance(N, list) else [[N]]
            N = [row if isinstance(row, list) else [row] for row in N]
            m = s.get("m", [1])
            m = m if isinstance(m, list) else [m]
            etas = s.get("eta") or []
            if isinstance(etas, dict):
                etas = [etas]
            eta = [parse_poly(e, len(y), f"system.eta[{i}]") for i, e in enumerate(etas)]
            return SkewProductSpec(FrequencyVector(tuple(y)), N, tuple(eta), tuple(m),
                                   allow_degenerate=bool(s.get("allow_degenerate", True)))
        if cls == "furstenberg":
            d = int(s.get("d", 2))
            hs = s.get("h") or []
            h = [parse_poly(hj, j + 1, f"system.h[{j}]") for j, hj in enumerate(hs)]
            b = {str(key): int(v) for key, v in (s.get("b") or {}).items()}
            return FurstenbergSpec(d, float(s["y"]), b, tuple(h))
        if cls == "timechange":
            d = int(s.get("d", 1))
            y = _vector(s.get("y"), "system.y")
            if "f" in s and "f_exp" in s:
                raise InvalidArgument("give either f or f_exp, not both")
            if "f_exp" in s:
                f, _ = exp_poly(parse_poly(s["f_exp"], d, "system.f_exp"))
            else:
                f = parse_poly(s.get("f", 1.0), d, "system.f")
            y2 = s.get("y2")
            return TimeChangeSpec(d, FrequencyVector(tuple(y), kind="flow"), f, tuple(y2) if y2 else ())
        if cls == "rotation":
            y = _vector(s.get("y"), "system.y")
            return FrequencyVector(tuple(y))
    except KeyError as exc:
        raise InvalidArgument(f"[system] missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise InvalidArgument(f"[system] {exc}") from None
    raise InvalidArgument(f"unknown system class {cls!r}")


def system_level(cfg: RunConfig):
    lvl = cfg.data["system"].get("level")
    return tuple(int(v) for v in lvl) if lvl else None
