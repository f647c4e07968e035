"""ergolab command line: build families, check conditions, run experiments."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from fractions import Fraction
from importlib import resources

import numpy as np

from . import conditions, cylinders, ergodicity, expansion, irreducibility, systems
from .errors import BoundaryHit, ErgolabError
from .symbolic import iid_uniform

SCHEMA_VERSION = 1
STAGES = ("conditions", "expansion", "cylinders", "irreducibility", "ergodicity")
BUILDERS = {
    "doubling": lambda p: systems.doubling_family(),
    "triangle": lambda p: systems.triangle_family(int(p.get("depth", 1))),
    "mostly_expanding": lambda p: systems.mostly_expanding_family(Fraction(str(p.get("beta", "1/3")))),
    "two_arc_control": lambda p: systems.two_arc_control(),
    "perturbed_doubling": lambda p: systems.perturbed_doubling_family(float(p.get("amplitude", 0.01))),
    "rotation": lambda p: systems.rotation_family(tuple(Fraction(str(a)) for a in p.get("angles", ["1/4", "1/2"]))),
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _clean(v):
    """Plain JSON values; floats at 15 significant digits."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.15g}")
    return v


def dumps(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True)


def _write(path, doc):
    text = dumps(doc) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _write_csv(path, header, rows):
    if not path:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.15g}" if isinstance(v, float) else v for v in r])


def _report(command, config, body, passed):
    return {"schema_version": SCHEMA_VERSION, "command": command, "config": config, "pass": passed, **body}


# --------------------------------------------------------------------------
# Families and configuration
# --------------------------------------------------------------------------

def load_family(source):
    """``source`` is a path to a family JSON file or a dict {"builder": name, "params": {...}} / {"file": path}."""
    if isinstance(source, str):
        source = {"file": source}
    if not isinstance(source, dict):
        raise UsageError("family: expected an object or a file path")
    if "file" in source:
        try:
            with open(source["file"]) as fh:
                return systems.MapFamily.from_dict(json.load(fh))
        except OSError as e:
            raise UsageError(f"family.file: {e}") from None
    name = source.get("builder")
    if name not in BUILDERS:
        raise UsageError(f"family.builder: unknown builder {name!r} (choose from {sorted(BUILDERS)})")
    return BUILDERS[name](source.get("params", {}))


def _require(d, key, kind, path):
    if key not in d:
        raise UsageError(f"{path}.{key}: required")
    if not isinstance(d[key], kind) or isinstance(d[key], bool) and kind is not bool:
        raise UsageError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}")
    return d[key]


def validate_config(cfg) -> dict:
    """Checks the experiment schema and fills defaults. Raises UsageError naming the offending field."""
    if not isinstance(cfg, dict):
        raise UsageError("config: expected an object")
    out = dict(cfg)
    out.setdefault("schema_version", SCHEMA_VERSION)
    if out["schema_version"] != SCHEMA_VERSION:
        raise UsageError(f"config.schema_version: unsupported {out['schema_version']!r}")
    _require(out, "seed", int, "config")
    if "family" not in out:
        raise UsageError("config.family: required")
    out.setdefault("constants", {})
    if not isinstance(out["constants"], dict):
        raise UsageError("config.constants: expected an object")
    for k in out["constants"]:
        if k not in ("c", "epsilon0"):
            raise UsageError(f"config.constants.{k}: unknown constant")
        if not isinstance(out["constants"][k], (int, float)):
            raise UsageError(f"config.constants.{k}: expected a number")
    exps = out.setdefault("experiments", [])
    if not isinstance(exps, list):
        raise UsageError("config.experiments: expected a list")
    for i, e in enumerate(exps):
        if not isinstance(e, dict) or e.get("stage") not in STAGES:
            raise UsageError(f"config.experiments[{i}].stage: expected one of {list(STAGES)}")
        for k, v in e.items():
            if k != "stage" and not isinstance(v, (int, float, str, list)):
                raise UsageError(f"config.experiments[{i}].{k}: bad value")
    out.setdefault("output", {})
    return out


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

def _c_for(F, constants):
    if "c" in constants:
        return float(constants["c"])
    if F.meta.get("c") is not None:
        return float(F.meta["c"])
    return conditions.default_c(F)[0]


def stage_conditions(F, e, constants, seed):
    rep = conditions.check_family(F, _c_for(F, constants), int(e.get("samples", 1000)))
    if "epsilon0" in constants and rep["A2"]["epsilon0"] is not None:
        # a configured epsilon0 must satisfy the (A2) inequality with the measured sigmas
        s1, s2, c = rep["A2"]["sigma1"], rep["A2"]["sigma2"], rep["A2"]["c"]
        e0 = float(constants["epsilon0"])
        ok = 0 < e0 < 1 and -e0 * math.log(s1) + (1 - e0) * math.log(s2) <= -c + 1e-12
        rep["A2"]["configured_epsilon0"] = e0
        rep["A2"]["pass"] = rep["A2"]["pass"] and ok
        rep["pass"] = rep["pass"] and ok
    return rep


def stage_expansion(F, e, constants, seed):
    c = _c_for(F, constants)
    eps0 = constants.get("epsilon0")
    if eps0 is None:
        s1, s2 = conditions.estimate_sigmas(F)
        eps0 = conditions.derive_epsilon0(s1, s2, c) if s1 > 1 and c > 0 else None
    if eps0 is None:
        return {"pass": False, "flag": "no-epsilon0", "c": c}
    res = expansion.hyperbolic_frequency_experiment(F, int(e.get("starts", 100)), int(e.get("steps", 10000)), c, seed)
    f = res["frequencies"]
    share = float(np.mean(f >= eps0)) if len(f) else 0.0
    need = float(e.get("min_share", 0.99))
    return {"c": c, "epsilon0": eps0, "horizon": res["horizon"], "starts": res["starts"],
            "boundary_hits": res["boundary_hits"], "share_at_or_above_epsilon0": share,
            "min_frequency": float(f.min()) if len(f) else None,
            "mean_expanding_fraction": float(res["expanding_fractions"].mean()) if len(f) else None,
            "pass": share >= need}


def stage_cylinders(F, e, constants, seed):
    sheet = conditions.constants_sheet(F, _c_for(F, constants))
    cyls = cylinders.random_hyperbolic_cylinders(F, int(e.get("count", 100)), int(e.get("max_length", 12)),
                                                 sheet.c, seed)
    bad = []
    for cyl in cyls:
        r = cylinders.diameter_decay_check(cyl, sheet.c, sheet.K2)
        if not r["pass"]:
            bad.append(list(cyl.word))
    dist = []
    pairs = int(e.get("pairs", 0))
    if pairs:
        for cyl in cyls[: int(e.get("distortion_cylinders", 5))]:
            dist.append(cylinders.distortion_check(F, cyl.word, pairs, sheet.L1, seed))
    ok = len(cyls) > 0 and not bad and all(d["pass"] for d in dist)
    return {"c": sheet.c, "K2": sheet.K2, "L1": sheet.L1, "cylinders": len(cyls), "violations": bad,
            "distortion": dist, "pass": ok}


def stage_irreducibility(F, e, constants, seed):
    B = irreducibility.default_test_set(F.space, float(e.get("measure", 0.1)))
    rep = irreducibility.weak_cycle_test(F, B, int(e.get("samples", 1000)), int(e.get("depth", 10)), seed)
    T = irreducibility.transitivity_matrix(F, depth=int(e.get("transitivity_depth", 4)), seed=seed)
    rep = {k: v for k, v in rep.items() if k != "hit_depths"}
    rep["transitivity"] = T.astype(int).tolist()
    rep["pass"] = not rep["flagged"]
    return rep


def stage_ergodicity(F, e, constants, seed):
    rep = ergodicity.ergodicity_experiment(F, starts=int(e.get("starts", 20)), n=int(e.get("steps", 10 ** 5)),
                                           stream=e.get("stream", "iid"), seed=seed).to_dict()
    out = {"experiment": rep, "pass": rep["pass"]}
    g = int(e.get("g", 0))
    if g:
        probe = ergodicity.invariant_set_probe(F, g, int(e.get("rounds", 1000)))
        out["invariant_set_probe"] = probe
        out["pass"] = out["pass"] and bool(probe["pass"])
    return out


STAGE_FUNCS = {"conditions": stage_conditions, "expansion": stage_expansion, "cylinders": stage_cylinders,
               "irreducibility": stage_irreducibility, "ergodicity": stage_ergodicity}


def run(config) -> tuple[int, dict]:
    """Runs the configured stages in pipeline order. Returns (exit status, report)."""
    cfg = validate_config(config)
    exps = sorted(cfg["experiments"], key=lambda e: STAGES.index(e["stage"]))
    if not exps:
        return 0, _report("run", cfg, {"stages": []}, True)
    F = load_family(cfg["family"])
    results = []
    for e in exps:
        body = STAGE_FUNCS[e["stage"]](F, e, cfg["constants"], cfg["seed"])
        results.append({"stage": e["stage"], "params": e, **body})
    passed = all(r["pass"] for r in results)
    return (0 if passed else 1), _report("run", cfg, {"family": F.name, "stages": results}, passed)


def quickstart_config() -> dict:
    return json.loads(resources.files("ergolab").joinpath("configs/quickstart.json").read_text())


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def _family_arg(args):
    if args.family:
        return load_family(args.family)
    if args.builder:
        return load_family({"builder": args.builder, "params": json.loads(args.params or "{}")})
    raise UsageError("--family or --builder is required")


SPACES = {"torus1": "doubling", "triangle": "triangle"}


def cmd_build(args):
    params = json.loads(args.params or "{}")
    builder = args.builder
    if builder is None:
        if args.space is None:
            raise UsageError("build: --builder or --space is required")
        builder = SPACES[args.space]
    if args.depth is not None:
        params["depth"] = args.depth
    if builder == "doubling" and params.get("depth", 1) != 1:
        F, _ = systems.build_expanding_family(systems.PhaseSpace.torus(1), int(params["depth"]),
                                              name=f"torus1(d={params['depth']})")
    else:
        F = load_family({"builder": builder, "params": params})
    doc = F.to_dict()
    _write(args.out, doc)
    return 0


def cmd_check(args):
    F = _family_arg(args)
    c = args.c if args.c is not None else _c_for(F, {})
    rep = conditions.check_family(F, c)
    cfg = {"family": args.family or args.builder, "c": c}
    _write(args.json, _report("check", cfg, {"family": F.name, "result": rep}, rep["pass"]))
    return 0 if rep["pass"] else 1


def cmd_orbit(args):
    F = _family_arg(args)
    x = np.array(args.x, dtype=float)
    s = iid_uniform(F.k, args.seed) if args.stream == "iid" else None
    rec = expansion.orbit(F, x, args.steps, None if s is None else s.symbols(0, args.steps))
    c = args.c if args.c is not None else _c_for(F, {})
    H = expansion.pliss_times(rec.a, c)
    body = {"family": F.name, "status": rec.status, "steps": rec.n,
            "symbols": list(rec.symbols.symbols), "a_mean": float(rec.a.mean()) if rec.n else None,
            "hyperbolic_times": H.times.tolist(), "hyperbolic_frequency":
                expansion.hyperbolic_frequency(H, rec.n) if rec.n else None}
    if args.steps <= 1000:
        body["points"] = np.asarray(rec.points).tolist()
    cfg = {"family": args.family or args.builder, "x": args.x, "steps": args.steps, "stream": args.stream,
           "seed": args.seed, "c": c}
    _write(args.json, _report("orbit", cfg, body, rec.status == "ok"))
    pts = np.asarray(rec.points)
    S = np.concatenate([[0.0], np.cumsum(rec.a)])
    hyp = set(H.times.tolist())
    _write_csv(args.csv, ["step", "symbol"] + [f"x{i}" for i in range(pts.shape[1])] + ["a", "S", "hyperbolic"],
               [[j, int(rec.symbols[j]) if j < rec.n else "", *map(float, pts[j]),
                 float(rec.a[j]) if j < rec.n else "", float(S[j]), int(j in hyp)] for j in range(len(pts))])
    return 0 if rec.status == "ok" else 1


def cmd_cylinder(args):
    F = _family_arg(args)
    word = [int(w) for w in args.word.split(",") if w.strip()]
    cyl = cylinders.cylinder(F, word, seed=args.seed)
    c = args.c if args.c is not None else _c_for(F, {})
    body = {"family": F.name, "word": word, "method": cyl.method, "empty": cyl.empty,
            "pieces": [p.domain.to_list() for p in cyl.pieces]}
    if cyl.volume is not None:
        body["volume"] = float(cyl.volume) / F.space.total_volume
    passed = not cyl.empty
    checks = [k.strip() for k in args.check.split(",") if k.strip()]
    for k in checks:
        if k not in ("diameter", "distortion"):
            raise UsageError(f"--check: unknown check {k!r}")
    if not cyl.empty:
        hyp = cylinders.is_hyperbolic_cylinder(cyl, c)
        body["hyperbolic"] = hyp["status"]
        sheet = conditions.constants_sheet(F, c)
        if "diameter" in checks and hyp["status"] != "no":
            dec = cylinders.diameter_decay_check(cyl, c, sheet.K2)
            body["diameter_decay"] = dec
            passed = passed and dec["pass"]
        if "distortion" in checks:
            dist = cylinders.distortion_check(F, word, args.pairs, sheet.L1, args.seed)
            body["distortion"] = dist
            passed = passed and dist["pass"]
    _write(args.json, _report("cylinder", {"family": args.family or args.builder, "word": word, "c": c,
                                          "checks": checks, "seed": args.seed}, body, passed))
    return 0 if passed else 1


def cmd_transitivity(args):
    F = _family_arg(args)
    T = irreducibility.transitivity_matrix(F, depth=args.depth, seed=args.seed)
    x = F.space.sample(1, np.random.default_rng(args.seed))[0]
    tree = irreducibility.orbit_tree(F, x, "backward", args.depth)
    cov = irreducibility.eps_density(tree, args.eps, seed=args.seed, space=F.space)
    body = {"family": F.name, "matrix": T.astype(int).tolist(), "transitive": bool(T.all()),
            "backward_tree": {"root": x.tolist(), "nodes": len(tree), "truncated": tree.truncated,
                              "eps": args.eps, "coverage": cov}}
    cfg = {"family": args.family or args.builder, "depth": args.depth, "eps": args.eps, "seed": args.seed}
    _write(args.json, _report("transitivity", cfg, body, bool(T.all())))
    return 0 if T.all() else 1


def cmd_ergodicity(args):
    F = _family_arg(args)
    rep = ergodicity.ergodicity_experiment(F, starts=args.starts, n=args.steps, stream=args.stream,
                                           seed=args.seed)
    d = rep.to_dict()
    cfg = {"family": args.family or args.builder, "starts": args.starts, "steps": args.steps,
           "stream": args.stream, "seed": args.seed}
    _write(args.json, _report("ergodicity", cfg, {"result": d}, rep.passed))
    _write_csv(args.csv, ["start"] + rep.observables,
               [[i, *map(float, row)] for i, row in enumerate(rep.averages)])
    return 0 if rep.passed else 1


def cmd_run(args):
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as e:
            raise UsageError(f"--config: {e}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"--config: invalid JSON ({e})") from None
    else:
        cfg = quickstart_config()
    status, report = run(cfg)
    out = args.json or report["config"]["output"].get("json")
    _write(out, report)
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="ergolab", description="Semigroup actions of expanding maps: experiments.")
    ap.add_argument("--threads", type=int, default=None, help="worker count (overrides ERGOLAB_THREADS)")
    sub = ap.add_subparsers(dest="command", required=True)

    def fam(p):
        p.add_argument("--family", help="family JSON file")
        p.add_argument("--builder", choices=sorted(BUILDERS), help="named builder instead of a file")
        p.add_argument("--params", help="builder parameters as JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", help="report path (default stdout)")

    p = sub.add_parser("build", help="write a family JSON file")
    p.add_argument("--builder", choices=sorted(BUILDERS))
    p.add_argument("--space", choices=sorted(SPACES), help="expanding builder on this space")
    p.add_argument("--depth", type=int, help="subdivision depth")
    p.add_argument("--params", help="builder parameters as JSON")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("check", help="check conditions A0-A3")
    fam(p)
    p.add_argument("--c", type=float)
    p.add_argument("--report", dest="json", help="same as --json")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("orbit", help="orbit, itinerary and hyperbolic times")
    fam(p)
    p.add_argument("--x", "--start", dest="x", type=float, nargs="+", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--stream", choices=["itinerary", "iid"], default="itinerary")
    p.add_argument("--c", type=float)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("cylinder", help="cylinder of a word and its diameter decay")
    fam(p)
    p.add_argument("--word", required=True, help="comma separated 0-based symbols")
    p.add_argument("--check", default="diameter", help="comma separated: diameter, distortion")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--c", type=float)
    p.set_defaults(func=cmd_cylinder)

    p = sub.add_parser("transitivity", help="transitivity matrix and backward-tree density")
    fam(p)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.05)
    p.set_defaults(func=cmd_transitivity)

    p = sub.add_parser("ergodicity", help="Birkhoff averages across starts")
    fam(p)
    p.add_argument("--starts", type=int, default=20)
    p.add_argument("--steps", type=int, default=10 ** 6)
    p.add_argument("--stream", choices=["iid", "itinerary"], default="iid")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_ergodicity)

    p = sub.add_parser("run", help="run a configured pipeline (default: bundled quickstart)")
    p.add_argument("--config")
    p.add_argument("--json")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and 2
    if args.threads is not None:
        os.environ["ERGOLAB_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"ergolab: usage error: {e}", file=sys.stderr)
        return 2
    except (ErgolabError, BoundaryHit) as e:
        print(f"ergolab: {getattr(e, 'code', 'error')}: {e}", file=sys.stderr)
        return 2 if getattr(e, "code", "") in ("bad-parameter", "bad-symbol", "empty-word") else 1
    except json.JSONDecodeError as e:
        print(f"ergolab: usage error: invalid JSON ({e})", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
