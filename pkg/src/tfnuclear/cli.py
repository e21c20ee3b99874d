"""Batch command-line front end.

Usage::

    tfnuclear <group> <command> --config run.json --out results/ [--seed 0]

Every command writes ``report.json`` (plus CSV tables) into ``--out`` and
exits with 0 on success, 1 on a failed condition, 2 on a configuration
error, 3 on an inconclusive verdict and 4 on an internal inconsistency.
A config may carry an ``"expect"`` block; the command then exits 0 iff the
computed verdicts match it.
"""

import argparse
import datetime
import json
import os
import sys
import warnings

import numpy as np

from tfnuclear import gabor, grid, koethe, komatsu, weights
from tfnuclear.errors import (CGFailure, ConditionFailure, ConfigError, DomainError,
                              GridMismatch)
from tfnuclear.lattice import LatticeSpec
from tfnuclear.serialize import write_json

OK, FAILED, CONFIG, INCONCLUSIVE, INCONSISTENT = 0, 1, 2, 3, 4


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _weight(doc):
    if doc is None:
        raise ConfigError("a 'weight' definition is required")
    return weights.WeightFunction.from_json(doc)


def _grid_params(cfg):
    g = cfg.get("grid", {})
    return float(g.get("R", 12.0)), float(g.get("h", 2.0 ** -6))


def make_function(spec, template):
    """Test functions by name: ``hermite:j``, ``gaussian``, ``gaussian_shift:a``,
    ``gaussian_cos:w``, ``zero`` or ``file:<path>``."""
    name, _, arg = str(spec).partition(":")
    x = template.axis()
    if template.d != 1 and name not in ("file", "gaussian", "zero"):
        raise ConfigError(f"function {spec!r} is only defined for d = 1")
    if name == "hermite":
        return komatsu.hermite_function(int(arg or 0), template)
    if name == "gaussian":
        return gabor.gaussian_window(template.d, template.R, template.h)
    if name == "gaussian_shift":
        return template.like(np.exp(-(x - float(arg)) ** 2))
    if name == "gaussian_cos":
        return template.like(np.exp(-x ** 2) * np.cos(float(arg) * x))
    if name == "zero":
        return grid.SampledFunction.zeros_like(template)
    if name == "file":
        if not os.path.exists(arg):
            raise ConfigError(f"function file not found: {arg}")
        f = grid.SampledFunction.load(arg)
        template.check_grid(f)
        return f
    raise ConfigError(f"unknown test function {spec!r}")


def _system(cfg):
    gcfg = dict(cfg.get("gabor", {}))
    R, h = _grid_params(cfg)
    gcfg.setdefault("R", R)
    gcfg.setdefault("h", h)
    window = None
    if "window_file" in gcfg:
        path = gcfg["window_file"]
        if not os.path.exists(path):
            raise ConfigError(f"window file not found: {path}")
        window = grid.SampledFunction.load(path)
    return gabor.GaborSystem.from_config(gcfg, window)


def _dual(sys_, out, log):
    """Canonical dual, cached under ``out/cache`` by the system's content hash."""
    cache = os.path.join(out, "cache")
    os.makedirs(cache, exist_ok=True)
    path = os.path.join(cache, f"dual-{sys_.key()}.tfsf")
    if os.path.exists(path):
        sys_.dual = grid.SampledFunction.load(path)
        log("dual window loaded from cache")
    else:
        gabor.canonical_dual(sys_)
        sys_.dual.save(path)
        log(f"dual window computed in {len(sys_.cg_history) - 1} CG iterations")
    return sys_.dual


def _expect(result_verdicts, cfg):
    exp = cfg.get("expect")
    if exp is None:
        return None
    mismatches = {k: {"expected": v, "got": result_verdicts.get(k)}
                  for k, v in exp.items() if result_verdicts.get(k) != v}
    return mismatches


def cmd_weights_check(cfg, out, seed, log):
    w = _weight(cfg.get("weight"))
    report, failures, inconclusive = {}, [], []
    try:
        report["alpha"] = {"L": weights.certify_alpha(w), **w.certificates["alpha"]}
    except ConditionFailure as exc:
        report["alpha"] = {"error": str(exc), **exc.report}
        failures.append("alpha")
    try:
        weights.certify_gamma(w)
        report["gamma"] = dict(w.certificates["gamma"])
    except ConditionFailure as exc:
        report["gamma"] = {"error": str(exc), **exc.report}
        failures.append("gamma")
    tail = weights.check_little_o(w)
    report["beta"] = tail.to_dict()
    if tail.verdict == "fail":
        failures.append("beta")
    elif tail.verdict == "inconclusive":
        inconclusive.append("beta")
    s_cfg = cfg.get("s_grid", {"start": 0.0, "stop": 50.0, "num": 501})
    s = np.linspace(s_cfg["start"], s_cfg["stop"], int(s_cfg["num"]))
    table = weights.young_conjugate(w, s)
    table.to_csv(os.path.join(out, "conjugate.csv"))
    err, _ = weights.biconjugate_error(w, table)
    report["young"] = {"convexity_defect": table.convexity_defect(),
                       "cap_limited": int(table.cap_limited.sum()),
                       "biconjugate_error": err}
    report["failures"], report["inconclusive"] = failures, inconclusive
    report["weight"] = w.to_dict()
    verdicts = {"alpha": "fail" if "alpha" in failures else "pass",
                "gamma": "fail" if "gamma" in failures else "pass",
                "beta": tail.verdict}
    code = FAILED if failures else (INCONCLUSIVE if inconclusive else OK)
    return report, verdicts, code


def cmd_gabor_roundtrip(cfg, out, seed, log):
    sys_ = _system(cfg)
    A, B = gabor.frame_bounds(sys_, trials=int(cfg.get("trials", 10)), seed=seed)
    report = {"lattice": sys_.lattice.to_dict(), "frame_box": list(sys_.frame_box),
              "frame_bounds": {"A": A, "B": B}, "flags": list(sys_.flags)}
    if gabor.frame_failure_suspected(sys_, A):
        report["error"] = "frame failure suspected"
        return report, {"frame": "fail"}, FAILED
    try:
        _dual(sys_, out, log)
    except CGFailure as exc:
        report["error"] = str(exc)
        report["cg_residuals"] = exc.residuals
        return report, {"frame": "fail"}, FAILED
    report["dual_residual"] = gabor.dual_residual(sys_)
    tol = float(cfg.get("tolerance", 1e-4))
    fns = cfg.get("functions", ["hermite:3"])
    results, verdicts = [], {}
    decay_cfg = cfg.get("decay")
    for i, spec in enumerate(fns):
        f = make_function(spec, sys_.window)
        rt = gabor.roundtrip(f, sys_)
        row = {"function": spec, "rel_error": rt["rel_error"],
               "pass": rt["rel_error"] <= tol}
        if decay_cfg is not None:
            prof = gabor.decay_profile(rt["coefficients"], _weight(decay_cfg.get("weight")),
                                       decay_cfg.get("lambdas", list(range(1, 21))))
            row["decay"] = prof
        if i == 0:
            wt = _weight(decay_cfg["weight"]) if decay_cfg else None
            rt["coefficients"].to_csv(os.path.join(out, "coefficients.csv"), wt)
        results.append(row)
        verdicts[spec] = "pass" if row["pass"] else "fail"
    report["roundtrip"] = results
    return report, verdicts, OK if all(r["pass"] for r in results) else FAILED


def cmd_gabor_decay(cfg, out, seed, log):
    sys_ = _system(cfg)
    w = _weight(cfg.get("weight"))
    f = make_function(cfg.get("function", "hermite:0"), sys_.window)
    c = gabor.analysis(f, sys_)
    c.to_csv(os.path.join(out, "coefficients.csv"), w)
    prof = gabor.decay_profile(c, w, cfg.get("lambdas", list(range(1, 21))))
    verdicts = {str(r.lam): ("divergent" if r.divergent else "pass") for r in prof["rows"]}
    code = FAILED if any(r.divergent for r in prof["rows"]) else OK
    return {"lattice": sys_.lattice.to_dict(), "profile": prof}, verdicts, code


def _mixture(rng, R, h, n_terms=2):
    centers = rng.uniform(-1.5, 1.5, (n_terms, 2))
    widths = rng.uniform(0.6, 1.4, n_terms)
    amps = rng.uniform(0.5, 1.5, n_terms)

    def fn(x, xi):
        out = 0.0
        for (cx, cxi), s, a in zip(centers, widths, amps):
            out = out + a * np.exp(-((x - cx) ** 2 + (xi - cxi) ** 2) / (2 * s * s))
        return out
    return grid.PhasePlaneFunction.from_callable(fn, 1, R, h)


def gaussian_mixture_pairs(n, seed, R=8.0, h=0.125):
    """Seeded pairs of phase-plane Gaussian mixtures."""
    rng = np.random.default_rng(seed)
    return [(_mixture(rng, R, h), _mixture(rng, R, h)) for _ in range(n)]


def cmd_grid_young(cfg, out, seed, log):
    w = _weight(cfg.get("weight", {"family": "log_power", "beta": 1.0}))
    weights.certify_alpha(w)
    R, h = float(cfg.get("R", 8.0)), float(cfg.get("h", 0.125))
    pairs = gaussian_mixture_pairs(int(cfg.get("pairs", 20)), seed, R, h)
    rows, ok = [], True
    for i, (F, G) in enumerate(pairs):
        for lam in cfg.get("lambdas", [-1.0, 0.0, 1.0]):
            spec = grid.MixedNormSpec(float(cfg.get("p", 1)), float(cfg.get("q", 1)),
                                      float(lam), w)
            rep = grid.verify_young(F, G, spec)
            rows.append({"pair": i, "lambda": lam, **rep.to_dict()})
            ok &= rep.passed
    return {"L": w.L, "reports": rows}, {"young": "pass" if ok else "fail"}, OK if ok else FAILED


def _lattice(cfg):
    lc = cfg.get("lattice", {})
    return LatticeSpec(float(lc.get("alpha0", 1.0)), float(lc.get("beta0", 1.0)),
                       int(lc.get("d", 1)), int(lc.get("K", 16)), int(lc.get("N", 16)))


def cmd_koethe_gp(cfg, out, seed, log):
    lat = _lattice(cfg)
    name = cfg.get("matrix", "weight")
    w = _weight(cfg["weight"]) if name == "weight" else None
    A = koethe.named_matrix(name, lat, lat.d, w)
    radii = cfg.get("radii", list(koethe.DEFAULT_RADII))
    span = int(cfg.get("m_max_offset", 10))
    reports, verdicts = [], {}
    for k in cfg.get("ks", [1, 2, 3]):
        rep = koethe.gp_test(A, k, range(k + 1, k + span + 1), radii)
        reports.append(rep)
        verdicts[str(k)] = rep.verdict
        if rep.m_found is not None:
            verdicts[f"m{k}"] = rep.m_found
    vs = [r.verdict for r in reports]
    if all(v == "convergent" for v in vs):
        code = OK
    elif any(v == "inconclusive" for v in vs):
        code = INCONCLUSIVE
    else:
        code = FAILED
    return {"matrix": A.name, "lattice": lat.to_dict(), "reports": reports}, verdicts, code


def cmd_komatsu_verdict(cfg, out, seed, log):
    Mp = komatsu.MpSequence.from_json(cfg.get("sequence"))
    res = komatsu.nuclearity_verdict(Mp, cfg.get("P"))
    if "Cond43" in res["reports"]:
        komatsu.associated_function(Mp).to_csv(os.path.join(out, "associated.csv"))
    code = {"ok": OK, "inapplicable": FAILED, "inconclusive": INCONCLUSIVE,
            "inconsistent": INCONSISTENT}[res["status"]]
    verdicts = {"status": res["status"], "nuclear": res["nuclear"]}
    return {"sequence": Mp.to_dict(), **res}, verdicts, code


def cmd_komatsu_hermite(cfg, out, seed, log):
    R, h = _grid_params(cfg)
    template = grid.SampledFunction(1, h, R, np.zeros(int(round(2 * R / h))))
    f = make_function(cfg.get("function", "gaussian"), template)
    Gamma = int(cfg.get("Gamma", 40))
    xi = komatsu.hermite_coefficients(f, Gamma)
    xi.to_csv(os.path.join(out, "coefficients.csv"))
    rec = komatsu.hermite_synthesis(xi, template)
    fn = f.norm()
    err = (rec - f).norm() / fn if fn else 0.0
    Mp = komatsu.MpSequence.from_json(cfg.get("sequence", {"family": "factorial_power",
                                                           "s": 2.0}))
    rows = komatsu.hermite_decay_check(xi, Mp, cfg.get("ks", [1, 2, 3]))
    verdicts = {str(r["k"]): r["verdict"] for r in rows}
    ok = all(r["verdict"] == "pass" for r in rows)
    return ({"Gamma": Gamma, "reconstruction_error": err, "decay": rows},
            verdicts, OK if ok else FAILED)


COMMANDS = {
    ("weights", "check"): cmd_weights_check,
    ("gabor", "roundtrip"): cmd_gabor_roundtrip,
    ("gabor", "decay"): cmd_gabor_decay,
    ("grid", "young"): cmd_grid_young,
    ("koethe", "gp"): cmd_koethe_gp,
    ("komatsu", "verdict"): cmd_komatsu_verdict,
    ("komatsu", "hermite"): cmd_komatsu_hermite,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="tfnuclear", description=__doc__.split("\n")[0])
    groups = parser.add_subparsers(dest="group", required=True)
    by_group = {}
    for g, c in COMMANDS:
        by_group.setdefault(g, []).append(c)
    for g, cmds in by_group.items():
        gp = groups.add_parser(g)
        sub = gp.add_subparsers(dest="command", required=True)
        for c in cmds:
            p = sub.add_parser(c)
            p.add_argument("--config", required=True)
            p.add_argument("--out", default=".")
            p.add_argument("--seed", type=int, default=None)
    return parser


def run(group, command, config_path, out, seed=None):
    """Run one command; returns the exit code."""
    def log(msg):
        print(f"[{group} {command}] {msg}", file=sys.stderr)

    try:
        cfg = _load_config(config_path)
        os.makedirs(out, exist_ok=True)
        seed = int(cfg.get("seed", 0)) if seed is None else seed
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result, verdicts, code = COMMANDS[(group, command)](cfg, out, seed, log)
    except (ConfigError, DomainError, GridMismatch, KeyError) as exc:
        log(f"configuration error: {exc}")
        return CONFIG
    mismatches = _expect(verdicts, cfg)
    if mismatches is not None:
        code = OK if not mismatches else FAILED
    report = {"command": f"{group} {command}", "config": cfg, "seed": seed,
              "exit_code": code, "verdicts": verdicts, "result": result,
              "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    if mismatches:
        report["expect_mismatches"] = mismatches
    write_json(os.path.join(out, "report.json"), report)
    log(f"exit {code}")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args.group, args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
