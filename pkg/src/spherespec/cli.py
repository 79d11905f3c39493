"""Command-line front end: ``spherespec <command> [options]``.

Options can also come from a ``key=value`` file (``--config``) or from a
previous run's manifest JSON; command-line flags win.  Exit codes: 0 pass,
1 usage, 2 check failure, 3 solver failure, 4 sweep failure.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .io import write_csv, write_json

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_SOLVER, EXIT_SWEEP = 0, 1, 2, 3, 4
COMMANDS = ("profile", "spectrum", "map", "distance", "holder", "split", "sweep")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Option:
    type: type
    default: object
    help: str
    commands: tuple = COMMANDS


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(";", ",").split(",") if x.strip()]


OPTIONS = {
    "n": Option(int, None, "dimension of the sphere (required)"),
    "kind": Option(str, "round", "profile kind: round, football or smoothed"),
    "c": Option(float, None, "football/smoothed cone parameter in (0,1]"),
    "xi": Option(float, None, "smoothing parameter xi"),
    "zeta": Option(float, None, "transition width (default kappa/20)"),
    "kappa": Option(float, None, "blend width (default xi/10)"),
    "rescale": Option(_bool, False, "shrink a smoothed metric to (1-xi) g"),
    "grid": Option(int, 2048, "profile grid size"),
    "cells": Option(int, 4096, "finite-volume cells per channel"),
    "fmm_grid": Option(int, 256, "fast-marching lattice size per axis"),
    "seed": Option(int, 0, "random seed"),
    "out": Option(str, "spherespec-out", "output directory"),
    "source_r": Option(float, None, "distance: source radius", ("distance",)),
    "source_pole": Option(_bool, False, "distance: put the source at r = 0", ("distance",)),
    "pairs": Option(int, 10000, "holder: number of sampled pairs", ("holder",)),
    "center_r": Option(float, None, "split: center radius (default R/2)", ("split",)),
    "radius": Option(float, None, "split: ball radius (default c_n * epsilon)", ("split",)),
    "depth": Option(int, 4, "split: number of dyadic halvings", ("split",)),
    "epsilon": Option(float, 0.1, "split: target epsilon", ("split",)),
    "etas": Option(_floats, [0.3, 0.2, 0.1], "sweep: decreasing eta list", ("sweep",)),
    "xi_rule": Option(str, None, "sweep: 'pole' (default) or 'square'", ("sweep",)),
    "sweep_pairs": Option(int, 2000, "sweep: sampled pairs per row", ("sweep",)),
}


# ---------------------------------------------------------------------------
# configuration

def read_config_file(path) -> dict:
    """key=value lines (``#`` comments) or a manifest JSON from an earlier run."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(text)
        cfg = data.get("config", data)
        return {k: v for k, v in cfg.items() if v is not None}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, flags: dict, file_cfg: dict) -> dict:
    unknown = sorted(set(file_cfg) - set(OPTIONS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for key, opt in OPTIONS.items():
        if command not in opt.commands:
            continue
        value = flags.get(key)
        if value is None and key in file_cfg:
            value = file_cfg[key]
        if value is None:
            value = opt.default
        if value is not None:
            try:
                value = opt.type(value)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
        cfg[key] = value
    validate(command, cfg)
    return cfg


def validate(command: str, cfg: dict) -> None:
    n = cfg.get("n")
    if n is None:
        raise UsageError("missing --n")
    if n < 2:
        raise UsageError("n must be >= 2")
    kind = cfg["kind"]
    if kind not in ("round", "football", "smoothed"):
        raise UsageError(f"unknown kind {kind!r}")
    if kind in ("football", "smoothed"):
        if cfg["c"] is None:
            raise UsageError(f"--c is required for kind {kind}")
        if not (0.0 < cfg["c"] <= 1.0):
            raise UsageError("c must lie in (0,1]")
    if kind == "smoothed" and command != "sweep":
        if cfg["xi"] is None:
            raise UsageError("--xi is required for kind smoothed")
        if cfg["kappa"] is None:
            cfg["kappa"] = cfg["xi"] / 10.0
        if cfg["zeta"] is None:
            cfg["zeta"] = cfg["kappa"] / 20.0
    for key in ("grid", "cells", "fmm_grid"):
        if cfg[key] is not None and cfg[key] < 16:
            raise UsageError(f"--{key.replace('_', '-')} too small")
    if command == "sweep":
        from .regularity import XI_RULES

        if cfg["xi"] is not None:
            raise UsageError("sweep derives xi from eta; --xi conflicts with --xi-rule")
        if cfg["xi_rule"] is None:
            cfg["xi_rule"] = "pole"
        if cfg["xi_rule"] not in XI_RULES:
            raise UsageError(f"unknown --xi-rule {cfg['xi_rule']!r}; expected one of {', '.join(XI_RULES)}")
        etas = cfg["etas"]
        if not etas:
            raise UsageError("eta list is empty")
        if any(e < 0.0 or e >= 1.0 for e in etas):
            raise UsageError("eta values must lie in [0,1)")
        if any(b >= a for a, b in zip(etas, etas[1:])):
            raise UsageError("eta list must be strictly decreasing")


def build_profile(cfg: dict):
    from .profiles import make_football, make_round, make_smoothed, rescale

    n, kind = cfg["n"], cfg["kind"]
    if kind == "round" or (kind == "football" and cfg["c"] == 1.0):
        return make_round(n, cfg["grid"])
    if kind == "football":
        return make_football(n, cfg["c"], cfg["grid"])
    prof = make_smoothed(n, cfg["c"], cfg["xi"], cfg["zeta"], cfg["kappa"], grid_size=cfg["grid"])
    return rescale(prof, cfg["xi"]) if cfg["rescale"] else prof


# ---------------------------------------------------------------------------
# commands

def cmd_profile(cfg, out: Path, log) -> int:
    from .profiles import check_claim_inequalities, check_smooth_joints, ricci_min, write_profile

    prof = build_profile(cfg)
    write_profile(prof, out / "profile.csv", out / "profile.json")
    checks = {"phi_positive": bool(np.all(prof.phi[prof.interior(1)] > 0.0))}
    rmin = ricci_min(prof)
    checks["ricci_min"] = rmin
    if prof.kind == "smoothed":
        if prof._glue is not None:
            joints = check_smooth_joints(prof)
            checks["joints"] = {k: joints[k] for k in ("passed", "max_mismatch", "mirror_error", "tol")}
            claim = check_claim_inequalities(prof, cfg["xi"])
            checks["claim"] = claim
            passed = joints["passed"] and claim["passed"] and checks["phi_positive"]
        else:
            checks["ricci_bound"] = bool(rmin >= prof.n - 1 - 1e-8)
            passed = checks["ricci_bound"] and checks["phi_positive"]
    else:
        checks["ricci_bound"] = bool(rmin >= prof.n - 1 - 1e-8)
        passed = checks["ricci_bound"] and checks["phi_positive"]
    checks["passed"] = bool(passed)
    write_json(out / "checks.json", checks)
    log(f"profile {prof.profile_id}: R={prof.R:.12g} phi(R/2)={prof.phi_at(0.5 * prof.R):.12g}")
    if "joints" in checks:
        log(f"joint check: {'pass' if checks['joints']['passed'] else 'FAIL'} "
            f"(max mismatch {checks['joints']['max_mismatch']:.3e})")
        c = checks["claim"]
        log(f"claim inequalities: {'pass' if c['passed'] else 'FAIL'} "
            f"(margins {c['concavity_margin']:.3e}, {c['gradient_margin']:.3e})")
    log(f"ricci_min: {rmin:.6g}")
    return EXIT_OK if passed else EXIT_CHECK


def _spectrum(cfg, prof):
    from .spectrum import first_eigs, normalize_eigenfunctions

    spec = first_eigs(prof, cfg["n"], cells=cfg["cells"])
    return normalize_eigenfunctions(spec, prof)


def cmd_spectrum(cfg, out: Path, log) -> int:
    from .spectrum import write_spectrum

    prof = build_profile(cfg)
    spec = _spectrum(cfg, prof)
    write_spectrum(spec, out / "spectrum.json", out / "eigenfunctions.csv")
    n = cfg["n"]
    for i, lam in enumerate(spec.lambda_sorted[: n + 2], 1):
        log(f"lambda_{i} = {lam:.10f}  ({spec.labels[i - 1]})")
    return EXIT_OK


def cmd_map(cfg, out: Path, log) -> int:
    from .eigenmap import build_map, map_diagnostics, write_diagnostics

    prof = build_profile(cfg)
    m = build_map(_spectrum(cfg, prof), prof)
    diag = map_diagnostics(m, seed=cfg["seed"])
    write_diagnostics(m, diag, out / "map.json", out / "jacobian.csv")
    log(f"sup | |f|^2 - 1 | = {diag.sup_norm_dev:.3e}")
    log(f"gradient_sup = {diag.sup_grad:.10f}")
    log(f"min_radial_jac = {diag.min_radial_jac:.10f} at r = {diag.argmin_r:.6e}")
    return EXIT_OK


def cmd_distance(cfg, out: Path, log) -> int:
    from .geodesy import fast_march, round_oracle_report, write_field

    prof = build_profile(cfg)
    if cfg["source_pole"]:
        src = 0.0
    elif cfg["source_r"] is not None:
        src = cfg["source_r"]
    else:
        raise UsageError("give --source-r or --source-pole")
    if not (0.0 <= src <= prof.R):
        raise UsageError("source radius outside [0, R]")
    fld = fast_march(prof, src, cfg["fmm_grid"], cfg["fmm_grid"])
    write_field(fld, out / "field.csv")
    report = {"source_r": src, "nr": cfg["fmm_grid"], "nt": cfg["fmm_grid"],
              "max_distance": float(np.max(fld.d)), "h": list(fld.h)}
    log(f"field {fld.d.shape[0]}x{fld.d.shape[1]}, h_r = {fld.h[0]:.4e}, farthest point at {np.max(fld.d):.10f}")
    if prof.kind == "round":
        sizes = (64, 128, 256, 512)
        own = round_oracle_report(src, sizes)
        generic = round_oracle_report(1.0, sizes)
        report.update({"max_err": own["max_err"], "order": own["order"], "oracle_h": own["h"],
                       "generic_source": generic})
        log(f"oracle max error (source r={src:g}): " + ", ".join(f"{e:.3e}" for e in own["max_err"]))
        log(f"order = {own['order']:.3f}" if math.isfinite(own["order"]) else "order = exact (roundoff)")
        log(f"generic source r=1: max error {generic['max_err'][-1]:.3e}, order = {generic['order']:.3f}")
    write_json(out / "distance.json", report)
    return EXIT_OK


def cmd_holder(cfg, out: Path, log) -> int:
    from .eigenmap import build_map
    from .regularity import SamplerSpec, distortion_scan, injectivity_scan, write_samples

    prof = build_profile(cfg)
    m = build_map(_spectrum(cfg, prof), prof)
    res = distortion_scan(prof, m, SamplerSpec(count=cfg["pairs"], fmm_grid=cfg["fmm_grid"]), cfg["seed"])
    inj = injectivity_scan(m)
    write_samples(res, out / "samples.csv")
    write_json(out / "holder.json", {"distortion": res.payload(), "injectivity": inj})
    log(f"pairs = {len(res.pairs)}")
    log(f"fitted epsilon = {res.epsilon:.3e}")
    log(f"inf dt/d = {res.inf_ratio:.10f}, max dt/d = {res.max_ratio:.10f}")
    log(f"injectivity scan: {'pass' if inj['passed'] else 'no pass'} "
        f"(min separation {inj['min_image_separation']:.3e}, coverage {inj['coverage']:.3f})")
    return EXIT_OK


def cmd_split(cfg, out: Path, log) -> int:
    from .eigenmap import build_map
    from .profiles import make_round
    from .spectrum import first_eigs
    from .splitting import calibrate_cn, chain_scan, default_direction, rotate_to_pole, splitting_defect

    prof = build_profile(cfg)
    m = build_map(_spectrum(cfg, prof), prof)
    n, eps = cfg["n"], cfg["epsilon"]
    radius = cfg["radius"]
    cn = None
    if radius is None:
        rp = make_round(n, 1024)
        cn = calibrate_cn(build_map(first_eigs(rp, n), rp), eps)
        radius = cn * eps
    center = 0.5 * prof.R if cfg["center_r"] is None else cfg["center_r"]
    if not (0.0 <= center <= prof.R):
        raise UsageError("center radius outside [0, R]")
    sm = rotate_to_pole(m, (center, default_direction(n)))
    rep = splitting_defect(sm, radius)
    chain = chain_scan(sm, radius, cfg["depth"])
    write_json(out / "split.json", {"report": rep.payload(), "chain": chain.payload(), "c_n": cn,
                                    "epsilon": eps})
    write_csv(out / "chain.csv", ["s", "dev"], np.column_stack([chain.scales[1:], chain.deviations]))
    log(f"center r = {center:.6g}, radius = {radius:.6g}")
    log(f"defects: grad {rep.defect_grad:.3e}, gram {rep.defect_gram:.3e}, hess {rep.defect_hess:.3e}")
    log(f"epsilon_achieved = {rep.epsilon_achieved:.6g}")
    for s, d in zip(chain.scales[1:], chain.deviations):
        log(f"  s = {s:.6e}  |T_s T_2s^-1 - I| = {d:.3e}")
    return EXIT_OK


def cmd_sweep(cfg, out: Path, log) -> int:
    from .regularity import SamplerSpec, sharpness_sweep, write_sweep

    res = sharpness_sweep(cfg["n"], cfg["etas"], cfg["xi_rule"],
                          SamplerSpec(count=cfg["sweep_pairs"], fmm_grid=cfg["fmm_grid"]),
                          cfg["seed"], cfg["cells"])
    rows = res["rows"]
    good = [r for r in rows if r.ok]
    write_sweep(good, out / "sweep.csv")
    payload = {"rows": [{k: v for k, v in r.payload().items() if k != "seconds"} for r in rows],
               "trends": res["trends"], "xi_rule": cfg["xi_rule"]}
    write_json(out / "sweep.json", payload)
    for r in rows:
        if r.ok:
            log(f"eta={r.eta:g} c={r.c:g} xi={r.xi:.3e} volume_ratio={r.volume_ratio:.6f} "
                f"lambda_gap={r.lambda_gap:.6f} min_radial_jac={r.min_radial_jac:.6f} "
                f"inf_ratio={r.inf_ratio:.6f}")
        else:
            log(f"eta={r.eta:g} FAILED: {r.error}")
    for k, v in res["trends"].items():
        log(f"{k}: {'yes' if v else 'NO'}")
    if not good:
        return EXIT_SWEEP
    return EXIT_OK if res["passed"] else EXIT_CHECK


HANDLERS = {
    "profile": cmd_profile,
    "spectrum": cmd_spectrum,
    "map": cmd_map,
    "distance": cmd_distance,
    "holder": cmd_holder,
    "split": cmd_split,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spherespec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spherespec {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="key=value file or manifest JSON")
        for key, opt in OPTIONS.items():
            if name not in opt.commands:
                continue
            flag = "--" + key.replace("_", "-")
            if opt.type is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=opt.help)
            else:
                p.add_argument(flag, dest=key, type=str, default=None, help=opt.help)
    return parser


def _versions() -> dict:
    import numba
    import scipy

    return {"spherespec": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _write_config(path: Path, cfg: dict) -> None:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        # the output location is left to the rerun
        if v is None or k == "out":
            continue
        if isinstance(v, list):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    def log(msg):
        print(msg, flush=True)

    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + " | ".join(COMMANDS))
        flags = {k: v for k, v in vars(args).items() if k in OPTIONS}
        file_cfg = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, flags, file_cfg)
    except UsageError as exc:
        print(f"spherespec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    from .spectrum import SolverError

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    t0 = time.perf_counter()
    try:
        code = HANDLERS[args.command](cfg, out, log)
    except UsageError as exc:
        print(f"spherespec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # parameter validation inside the modules
        print(f"spherespec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"spherespec: solver failure: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    _write_config(out / "run.cfg", cfg)
    write_json(out / "manifest.json", {
        "command": args.command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "versions": _versions(),
        "started_unix": started,
        "wall_seconds": time.perf_counter() - t0,
        "exit_code": code,
        "argv": argv,
    })
    return code


if __name__ == "__main__":
    sys.exit(main())
