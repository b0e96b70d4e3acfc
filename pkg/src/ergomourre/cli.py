"""Command line entry point: ``certify``, ``spectrum`` and ``timechange`` pipelines.

Exit codes: 0 success, 2 a check failed, 3 configuration or numerical
environment failure, 4 degenerate hypothesis.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import mourre, opcalc, specmeas
from .config import RunConfig, build_system, load_config, parse_poly, system_level
from .ergodic import double_average_gtilde, flow_average_gL, flow_birkhoff_average, invariant_mean
from .errors import DegenerateSpec, ErgoMourreError, InvalidArgument, NumericFailure
from .torusdyn import FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec
from .trigfun import TrigPoly

EXIT_OK = 0
EXIT_FAILED = 2
EXIT_CONFIG = 3
EXIT_DEGENERATE = 4


# ---------------------------------------------------------------------------
# Output helpers


def _clean(obj):
    """Convert numpy scalars/arrays and tuples to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_atomic(path: str, text: str):
    """Write via a temporary file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


class Outputs:
    def __init__(self, out_dir: str, formats):
        self.dir = out_dir
        self.formats = set(formats)
        self.written = []

    def json(self, name, obj):
        if "json" in self.formats:
            self._write(name, dump_json(obj))

    def csv(self, name, text):
        if "csv" in self.formats:
            self._write(name, text)

    def _write(self, name, text):
        write_atomic(os.path.join(self.dir, name), text)
        self.written.append(name)


def _envelope(cfg: RunConfig, seed: int, command: str) -> dict:
    return {"command": command, "seed": seed, "config": cfg.data}


# ---------------------------------------------------------------------------
# Commands


def cmd_certify(cfg: RunConfig, out: Outputs, seed: int) -> int:
    system = build_system(cfg)
    if isinstance(system, FrequencyVector):
        raise InvalidArgument("certify needs a skew, furstenberg or timechange system")
    mc = cfg.section("mourre")
    win = cfg.section("window")
    level = system_level(cfg)
    cert = mourre.certify(
        system, n_max=int(mc["n_max"]), resolution=mc["resolution"], min_ratio=float(mc["min_ratio"]),
        level=level, check_window=None,
    )
    checks = []
    if cert.status == "certified" and _has_window_check(system, level):
        W = opcalc.FreqWindow(_window_dim(system), int(win["M"]))
        for n in win["commutator_n"]:
            res, contract = mourre.commutator_residual(
                system, W, int(n), None, trials=int(win["trials"]), level=level, tol=float(win["tol"]),
                seed=seed, return_contract=True,
            )
            ok = res <= contract
            checks.append({"n": int(n), "residual": res, "tolerance": contract, "ok": ok})
            cert.residuals[f"commutator_n{n}"] = res
            cert.tolerances[f"commutator_n{n}"] = contract
        if not all(c["ok"] for c in checks):
            cert.status = "failed"
            cert.message = "commutator identity residual above its tolerance"
    report = _envelope(cfg, seed, "certify")
    report["certificate"] = cert.report()
    out.json("certificate.json", report)
    rows = [(r["n"], r["a_n"], r["sup_deviation"], r["gap"], cert.limit) for r in cert.table]
    out.csv("deviation.csv", _table(["n", "certified_lower_bound", "sup_deviation", "certification_gap", "limit"], rows))
    if checks:
        out.csv("residuals.csv", _table(["n", "residual", "tolerance", "ok"],
                                        [(c["n"], c["residual"], c["tolerance"], int(c["ok"])) for c in checks]))
    if cert.status == "degenerate":
        print(f"degenerate: {cert.message}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK if cert.status == "certified" else EXIT_FAILED


def _has_window_check(system, level) -> bool:
    if isinstance(system, SkewProductSpec):
        return True
    if isinstance(system, FurstenbergSpec):
        return (level or (2, 1))[0] == 2
    return False


def _window_dim(system) -> int:
    return system.d if isinstance(system, SkewProductSpec) else 1


def cmd_spectrum(cfg: RunConfig, out: Outputs, seed: int) -> int:
    system = build_system(cfg)
    sc = cfg.section("spectral")
    win = cfg.section("window")
    N = int(sc["N"])
    level = system_level(cfg)
    seqs = {}
    if isinstance(system, FrequencyVector):
        k = cfg.data["system"].get("k", [1] * system.d)
        k = k if isinstance(k, list) else [k]
        W = opcalc.FreqWindow(system.d, max(int(win["M"]), int(np.max(np.abs(k)))))
        V = opcalc.translation_koopman(system, W)
        seqs["matrix"] = specmeas.correlations_matrix(V, opcalc.StateVector.basis(W, k), N)
    else:
        if isinstance(system, TimeChangeSpec):
            raise InvalidArgument("spectrum needs a skew, furstenberg or rotation system")
        if isinstance(system, SkewProductSpec) and system.degenerate:
            print("degenerate: N^T m = 0 violates the hypothesis N^T m != 0", file=sys.stderr)
            return EXIT_DEGENERATE
        if sc["path"] in ("matrix", "both"):
            d = system.d if isinstance(system, SkewProductSpec) else (level or (2, 1))[0] - 1
            W = opcalc.FreqWindow(d, int(win["M"]))
            U, _ = opcalc.assemble_koopman(system, W, tol=float(win["tol"]), level=level, dense=False)
            phi = _phi(sc["phi"], W)
            seqs["matrix"] = specmeas.correlations_matrix(U, phi, N, accept_leakage=bool(sc["accept_leakage"]))
        if sc["path"] in ("quadrature", "both"):
            if sc["phi"] is not None:
                raise InvalidArgument("the quadrature path computes phi = 1 only")
            seqs["quadrature"] = specmeas.correlations_quadrature(system, N, level=level, tol=float(win["tol"]))
    primary = seqs.get("quadrature", seqs.get("matrix"))
    rep = specmeas.classify(primary, float(sc["point_threshold"]), float(sc["flatness_threshold"]), sc["kernel"])
    summary = rep.summary()
    summary["source"] = primary.source
    summary["N"] = N
    if len(seqs) == 2:
        diff = float(np.max(np.abs(seqs["matrix"].values - seqs["quadrature"].values)))
        budget = float(np.max(seqs["matrix"].budget + seqs["quadrature"].budget)) + 1e-12
        summary["path_difference"] = diff
        summary["path_budget"] = budget
        summary["paths_consistent"] = diff <= budget
    report = _envelope(cfg, seed, "spectrum")
    report["spectral_report"] = summary
    out.json("spectrum.json", report)
    for name, seq in seqs.items():
        out.csv(f"correlations_{name}.csv", seq.to_csv())
    out.csv("wiener.csv", specmeas.wiener_csv(rep.wiener))
    out.csv("density.csv", specmeas.density_csv(rep.angles, rep.density))
    return EXIT_OK


def _phi(spec, W: opcalc.FreqWindow) -> opcalc.StateVector:
    if spec is None:
        return opcalc.StateVector.basis(W, [0] * W.d)
    return opcalc.StateVector.from_poly(W, parse_poly(spec, W.d, "spectral.phi"))


def cmd_timechange(cfg: RunConfig, out: Outputs, seed: int) -> int:
    system = build_system(cfg)
    if not isinstance(system, TimeChangeSpec):
        raise InvalidArgument("timechange needs a timechange system")
    tc = cfg.section("timechange")
    tol = float(tc["tol"])
    grid = tc["grid"] or ([64] if system.d == 1 else [4, 64])
    grid = tuple(int(v) for v in (grid if isinstance(grid, list) else [grid] * system.d))
    g, gres = mourre.g_timechange(system)
    rows, checks = [], {}
    for L in tc["L_values"]:
        gl = flow_average_gL(g, system, float(L), grid, float(tc["tol_gL"])).samples
        rows.append((float(L), float(np.max(np.abs(gl - 0.5))), float(tc["tol_gL"])))
    final_dev = rows[-1][1] if rows else 0.0
    checks["gL_minus_half"] = {"value": final_dev, "tolerance": float(tc["gL_tolerance"])}
    da = double_average_gtilde(g, system, float(tc["L_identity"]), grid, tol)
    checks["flow_derivative_identity"] = {"value": da.identity_residual(), "tolerance": 10 * tol}
    cf = mourre.conjugate_field(system, float(tc["L_identity"]), grid, tol, g=g)
    checks["divergence_identity"] = {"value": cf.residual, "tolerance": 50 * tol}
    phi = parse_poly(tc["phi"], system.d, "timechange.phi") if tc["phi"] is not None else _default_phi(system.d)
    start = np.asarray(tc["start"] if tc["start"] is not None else [0.0] * system.d, dtype=float)
    avg = float(flow_birkhoff_average(phi, system, start[None, :], float(tc["horizon"]))[0])
    expected = invariant_mean(phi, system)
    checks["birkhoff_invariant_measure"] = {
        "value": abs(avg - expected), "tolerance": float(tc["birkhoff_tolerance"]),
        "time_average": avg, "expected": expected,
    }
    for c in checks.values():
        c["ok"] = bool(c["value"] <= c["tolerance"])
    report = _envelope(cfg, seed, "timechange")
    report["timechange_report"] = {
        "checks": checks,
        "g_truncation_bound": gres,
        "grid": list(grid),
        "gL_table": [{"L": L, "sup_abs_gL_minus_half": dv, "quadrature_tolerance": t} for L, dv, t in rows],
    }
    out.json("timechange.json", report)
    out.csv("gL_convergence.csv", _table(["L", "sup_abs_gL_minus_half", "quadrature_tolerance"], rows))
    out.csv("checks.csv", _table(["check", "value", "tolerance", "ok"],
                                 [(k, c["value"], c["tolerance"], int(c["ok"])) for k, c in sorted(checks.items())]))
    return EXIT_OK if all(c["ok"] for c in checks.values()) else EXIT_FAILED


def _default_phi(d: int) -> TrigPoly:
    return TrigPoly.cos([1] + [0] * (d - 1))


COMMANDS = {"certify": cmd_certify, "spectrum": cmd_spectrum, "timechange": cmd_timechange}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergomourre", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for random test vectors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out = Outputs(args.out, cfg.section("output")["formats"])
        return COMMANDS[args.command](cfg, out, args.seed)
    except DegenerateSpec as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NumericFailure as exc:
        print(f"numeric failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_CONFIG
    except (ErgoMourreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
