"""Command-line entry point.

Parameters come from three layers, later ones winning: built-in defaults,
a JSON document given with --config, then explicit flags.  Exit codes:
0 pass, 1 statistical or identity failure, 2 configuration or input error,
3 degenerate statistics, 4 too many diverged trajectories.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bridge, change_of_measure, dynamics, functionals, gauge, io, measures
from .spectral import SpectralField

log = logging.getLogger("dnlsgauge")

PASS, FAIL, CONFIG, DEGENERATE, DIVERGED = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


COMMON = {"seed": 0, "modes": None, "samples": None, "steps": None, "dt": None, "horizon": None,
          "mass_cutoff": None, "out": "out", "threads": 1}

DEFAULTS = {
    "identities": {"modes": 64, "samples": 200, "normalization": "coefficient", "sign_flip": False},
    "girsanov": {"samples": 20000, "steps": "256,512,1024", "gauged_fraction": 0.5, "sign_flip": False,
                 "ess_floor": 0.0},
    "cm-verify": {"steps": 256, "samples": 20},
    "bridge-verify": {"steps": 1024, "samples": 10000, "cov_samples": 100000, "conformal_steps": 8192},
    "sample": {"modes": 32, "samples": 2000, "measure": "rho", "normalization": "unitary", "method": "mcmc",
               "chains": 50},
    "evolve": {"dt": 1e-4, "horizon": 1.0, "equation": "dnls", "input": None},
    "invariance": {"modes": 32, "samples": 2000, "horizon": 1.0, "dt": None, "mass_cutoff": 2.0,
                   "case": "nu+dnls", "normalization": "unitary", "chains": 50},
    "transport": {"modes": "32,64", "samples": 20000, "mass_cutoff": 2.0, "normalization": "unitary",
                  "chains": 50},
    "report": {"input": None},
}

DEFAULT_DT = {"dnls": 1e-4, "gdnls_plus": 2e-4, "gdnls_v": 2e-4}


def _ints(v) -> list:
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def resolve(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = set(doc) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    cfg["command"] = command
    return cfg


def _require_positive(cfg, *keys):
    for k in keys:
        v = cfg.get(k)
        try:
            ok = v is not None and float(v) > 0
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise ConfigError(f"{k} must be a positive number, got {v!r}")


def _out(cfg) -> Path:
    p = Path(cfg["out"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(cfg, name: str, report: dict, rows: list | None = None, estimates: list | None = None):
    out = _out(cfg)
    body = dict(report)
    body.update(io.provenance(cfg, cfg["seed"]))
    body["kind"] = cfg["command"]
    if estimates is not None:
        body["estimates"] = estimates
    io.write_json(out / f"{name}.json", body)
    if rows:
        io.write_csv(out / f"{name}.csv", rows)


# identities ----------------------------------------------------------------

def cmd_identities(cfg) -> int:
    _require_positive(cfg, "modes", "samples")
    N, count = int(cfg["modes"]), int(cfg["samples"])
    mc = measures.MeasureConfig(N, normalization=cfg["normalization"])
    u = measures.sample_rho(mc, int(cfg["seed"]), count).samples
    # the sign-flip fixture gauges in the wrong direction, which must break the identities
    apply = gauge.gauge_inverse if cfg["sign_flip"] else gauge.gauge
    rows, chunk = {}, 100

    def note(name, vals, tol):
        r = rows.setdefault(name, {"identity": name, "max_residual": 0.0, "tolerance": tol})
        r["max_residual"] = max(r["max_residual"], float(np.max(vals)))

    for s in range(0, count, chunk):
        f = u[s:s + chunk]
        # the gauged field is not band-limited; keep enough modes that truncation is below round-off
        w = apply(f, n_out=max(8 * N, 128))
        E, H = functionals.energy(f), functionals.hamiltonian(f)
        note("energy", np.abs(E - functionals.gauged_energy(w)) / (1 + np.abs(E)), 1e-8)
        note("hamiltonian", np.abs(H - functionals.gauged_hamiltonian(w)) / (1 + np.abs(H)), 1e-8)
        wn = apply(f)
        m = functionals.mass(wn)
        lhs = functionals.gauged_energy(wn)
        rhs = functionals.script_energy(wn) + 2 * m * functionals.gauged_hamiltonian(wn) - 2 * np.pi * m**3
        note("energy_split", np.abs(lhs - rhs) / (1 + np.abs(lhs)), 1e-9)
        r3, r2 = functionals.pointwise_identity_oo3(wn)
        note("pointwise_cubic", r3, 1e-8)
        note("pointwise_gradient", r2, 1e-8)
        note("density_chain", np.abs(change_of_measure.verify_density_algebra(wn, relative=True)), 1e-8)
        back = gauge.gauge_inverse(w, n_out=N)
        note("round_trip", np.max(np.abs(back.coeffs - f.coeffs), axis=-1), 1e-10)
    table = []
    for r in rows.values():
        r["pass"] = r["max_residual"] <= r["tolerance"]
        table.append(r)
    _write(cfg, "identities", {"rows": table}, table)
    for r in table:
        print(f"{r['identity']:20s} {r['max_residual']:.3e}  tol {r['tolerance']:.0e}  {'PASS' if r['pass'] else 'FAIL'}")
    return PASS if all(r["pass"] for r in table) else FAIL


# girsanov ------------------------------------------------------------------

def cmd_girsanov(cfg) -> int:
    count = int(cfg["samples"])
    steps = _ints(cfg["steps"])
    if count < change_of_measure.MIN_COUNT:
        raise measures.DegenerateStatistics(f"samples = {count} is too few")
    seed = int(cfg["seed"])
    B = cfg["mass_cutoff"]
    if B is None:
        B = change_of_measure.tune_cutoff(float(cfg["gauged_fraction"]), max(steps), seed)
    spec = gauge.GaugeSpec(float(B), "cutoff")
    sign = -1 if cfg["sign_flip"] else 1
    reports = [change_of_measure.verify_transport(count, n, spec, seed, sign=sign) for n in steps]
    final = reports[-1]
    if final.novikov.ess < float(cfg["ess_floor"]) * count:
        raise measures.DegenerateStatistics(f"Novikov ESS {final.novikov.ess:.1f} below floor")
    trend = reports[-1].rms_gap() <= reports[0].rms_gap() + 1.0
    ok = final.passed() and trend
    rows = []
    for r in reports:
        rows.append({"n_steps": r.n_steps, "name": "novikov", "lhs": 1.0, "rhs": r.novikov.value,
                     "rhs_stderr": r.novikov.stderr, "sigma_gap": r.novikov_gap})
        rows += [{"n_steps": r.n_steps, "name": o.name, "lhs": o.lhs.value, "lhs_stderr": o.lhs.stderr,
                  "rhs": o.rhs.value, "rhs_stderr": o.rhs.stderr, "sigma_gap": o.sigma_gap} for o in r.observables]
    est = [{"name": f"n{r.n_steps}:{o.name}:gap", "value": o.lhs.value - o.rhs.value,
            "stderr": float(np.hypot(o.lhs.stderr, o.rhs.stderr)), "count": count}
           for r in reports for o in r.observables]
    _write(cfg, "girsanov", {"B": B, "reports": [r.as_dict() for r in reports], "trend_ok": trend, "passed": ok},
           rows, est)
    for r in reports:
        print(f"n={r.n_steps:5d} novikov {r.novikov.value:.4f} +- {r.novikov.stderr:.4f}  max gap {r.max_gap:.2f}")
    print("PASS" if ok else "FAIL")
    return PASS if ok else FAIL


# exact discrete checks -----------------------------------------------------

def cmd_cm_verify(cfg) -> int:
    n, pairs = int(cfg["steps"]), int(cfg["samples"])
    if n < 4 or pairs < 1:
        raise ConfigError("need steps >= 4 and samples >= 1")
    rng = np.random.default_rng(int(cfg["seed"]))
    worst = 0.0
    for _ in range(pairs):
        s = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 1.5, n))]) / n
        X = np.concatenate([[0.0], rng.normal(size=n - 1), [0.0]])
        peak = rng.uniform(0.2, 0.8) * s[-1]
        k = rng.normal() * np.where(s < peak, s / peak, (s[-1] - s) / (s[-1] - peak))
        worst = max(worst, abs(bridge.cameron_martin_log_density(X, k, s) - bridge.cameron_martin_oracle(X, k, s)))
    paths = bridge.sample_bridge(complex(rng.normal(), rng.normal()), n, int(cfg["seed"]), 20)
    rb = bridge.rho_bridge_identity_residual(paths)
    rows = [{"identity": "cameron_martin", "max_residual": worst, "tolerance": 1e-10},
            {"identity": "rho_bridge", "max_residual": rb, "tolerance": 1e-9}]
    for r in rows:
        r["pass"] = r["max_residual"] <= r["tolerance"]
        print(f"{r['identity']:16s} {r['max_residual']:.3e}  {'PASS' if r['pass'] else 'FAIL'}")
    _write(cfg, "cm_verify", {"rows": rows}, rows)
    return PASS if all(r["pass"] for r in rows) else FAIL


def cmd_bridge_verify(cfg) -> int:
    seed, n = int(cfg["seed"]), int(cfg["steps"])
    if n % 4:
        raise ConfigError("steps must be divisible by 4")
    cov_n = int(cfg["cov_samples"])
    if cov_n < 1000 or int(cfg["samples"]) < 1000:
        raise measures.DegenerateStatistics("need at least 1000 paths")
    rows = []
    vals = {"pi/2": [], "pi": []}
    for s in range(0, cov_n, 5000):
        p = bridge.sample_bridge(0.0, n, seed, min(5000, cov_n - s), s)
        vals["pi/2"].append(p.values[:, n // 4].real)
        vals["pi"].append(p.values[:, n // 2].real)
    a, b = np.concatenate(vals["pi/2"]), np.concatenate(vals["pi"])
    for name, x, y, exact in (("var(pi/2)", a, a, np.pi / 2 - np.pi / 8), ("var(pi)", b, b, np.pi / 2),
                              ("cov(pi/2,pi)", a, b, np.pi / 4)):
        prod = x * y
        se = prod.std(ddof=1) / np.sqrt(len(prod))
        rows.append({"check": name, "value": float(prod.mean()), "exact": exact, "stderr": float(se),
                     "z": float(abs(prod.mean() - exact) / se)})
    rep = bridge.conformal_gaussianity_check(int(cfg["samples"]), int(cfg["conformal_steps"]), seed)
    for k in ("mean1", "mean2", "corr"):
        rows.append({"check": k, "value": rep[k], "exact": 0.0, "stderr": rep[f"{k}_se"],
                     "z": abs(rep[k]) / rep[f"{k}_se"]})
    for k in ("var_ratio1", "var_ratio2"):
        rows.append({"check": k, "value": rep[k], "exact": 1.0, "stderr": rep[f"{k}_se"],
                     "z": abs(rep[k] - 1) / rep[f"{k}_se"]})
    ok = all(r["z"] <= 4 for r in rows) and rep["ks_p1"] >= 0.01 and rep["ks_p2"] >= 0.01
    _write(cfg, "bridge_verify", {"rows": rows, "conformal": rep, "passed": ok}, rows)
    for r in rows:
        print(f"{r['check']:14s} {r['value']:+.5f} (exact {r['exact']:.5f}) z = {r['z']:.2f}")
    print(f"KS p-values {rep['ks_p1']:.3f} {rep['ks_p2']:.3f}; excluded paths {rep['excluded']}")
    print("PASS" if ok else "FAIL")
    return PASS if ok else FAIL


# plumbing ------------------------------------------------------------------

def cmd_sample(cfg) -> int:
    _require_positive(cfg, "modes", "samples")
    B = np.inf if cfg["mass_cutoff"] is None else float(cfg["mass_cutoff"])
    try:
        mc = measures.MeasureConfig(int(cfg["modes"]), B, which=cfg["measure"], normalization=cfg["normalization"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    seed, count = int(cfg["seed"]), int(cfg["samples"])
    lw = None
    if cfg["measure"] == "rho" or cfg["method"] == "is":
        ens = measures.sample_weighted(mc, seed, count)
        coeffs, lw = ens.samples.coeffs, ens.log_weights
    elif cfg["method"] == "mcmc":
        coeffs = measures.mcmc_sample_nu(mc, seed, count, chains=int(cfg["chains"])).ensemble.samples.coeffs
    else:
        raise ConfigError(f"unknown method {cfg['method']!r}")
    meta = {"N": mc.N, "count": count, "measure": mc.as_dict()}
    meta.update(io.provenance(cfg, seed))
    stem = io.save_array(_out(cfg) / "ensemble", coeffs, meta, lw)
    print(f"wrote {stem.with_suffix('.bin')}")
    return PASS


def cmd_evolve(cfg) -> int:
    if not cfg["input"]:
        raise ConfigError("--input is required")
    try:
        coeffs, meta, lw = io.load_array(cfg["input"])
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot load {cfg['input']}: {e}") from e
    try:
        sc = dynamics.SolverConfig(int(meta["N"]), float(cfg["dt"]), float(cfg["horizon"]), cfg["equation"])
        sc.n_steps
    except ValueError as e:
        raise ConfigError(str(e)) from e
    uT, rep = dynamics.evolve(SpectralField(coeffs), sc)
    out_meta = dict(meta)
    out_meta["evolve"] = {"config": cfg, "dt": sc.dt, "T": sc.T, "equation": sc.equation}
    stem = io.save_array(_out(cfg) / "evolved", uT.coeffs, out_meta, lw)
    _write(cfg, "trajectory", rep.as_dict())
    print(f"wrote {stem.with_suffix('.bin')}; diverged {int(rep.diverged.sum())}")
    return DIVERGED if rep.diverged.mean() > 0.01 else PASS


def cmd_invariance(cfg) -> int:
    _require_positive(cfg, "modes", "samples")
    case = cfg["case"]
    if case not in dynamics.CASES:
        raise ConfigError(f"unknown case {case!r}")
    eq = dynamics.CASES[case][1]
    dt = float(cfg["dt"] or DEFAULT_DT[eq])
    try:
        sc = dynamics.SolverConfig(int(cfg["modes"]), dt, float(cfg["horizon"]), eq)
        sc.n_steps
        mc = measures.MeasureConfig(int(cfg["modes"]), float(cfg["mass_cutoff"]), normalization=cfg["normalization"])
    except ValueError as e:
        raise ConfigError(str(e)) from e
    count, chains = int(cfg["samples"]), int(cfg["chains"])
    if count % chains:
        raise ConfigError("samples must be a multiple of chains")
    rep = dynamics.invariance_experiment(case, count, sc, mc, int(cfg["seed"]), chains=chains)
    est = []
    for r in rep.rows:
        est.append({"name": f"{r['name']}:t0", "value": r["mean0"], "stderr": r["stderr0"], "count": count})
        est.append({"name": f"{r['name']}:tT", "value": r["meanT"], "stderr": r["stderrT"], "count": count})
    _write(cfg, "invariance", rep.as_dict(), rep.rows, est)
    for r in rep.rows:
        print(f"{r['name']:12s} {r['mean0']:+.5f} -> {r['meanT']:+.5f}  gap {r['sigma_gap']:.2f}")
    print("drift " + " ".join(f"{k}={v:.2e}" for k, v in rep.drift.items()))
    if not rep.valid:
        print("INVALID: divergence rate above 1%")
        return DIVERGED
    print("PASS" if rep.passed else "FAIL")
    return PASS if rep.passed else FAIL


def cmd_transport(cfg) -> int:
    count, chains = int(cfg["samples"]), int(cfg["chains"])
    if count < change_of_measure.MIN_COUNT:
        raise measures.DegenerateStatistics(f"samples = {count} is too few")
    if count % chains:
        raise ConfigError("samples must be a multiple of chains")
    reports = []
    for N in _ints(cfg["modes"]):
        mc = measures.MeasureConfig(N, float(cfg["mass_cutoff"]), normalization=cfg["normalization"])
        reports.append(change_of_measure.verify_gauged_measure(mc, int(cfg["seed"]), count, chains=chains))
    trend = reports[-1].rms_gap() <= reports[0].rms_gap() + 1.0
    ok = all(r.passed() for r in reports) and trend
    rows = [dict(r0, N=r.N) for r in reports for r0 in r.rows]
    est = [{"name": f"N{r.N}:{x['name']}:gap", "value": x["nu_gauged"] - x["mu"],
            "stderr": float(np.hypot(x["nu_stderr"], x["mu_stderr"])), "count": count}
           for r in reports for x in r.rows]
    _write(cfg, "transport", {"reports": [r.as_dict() for r in reports], "trend_ok": trend, "passed": ok}, rows, est)
    for x in rows:
        print(f"N={x['N']:3d} {x['name']:10s} {x['nu_gauged']:+.5f} vs {x['mu']:+.5f}  gap {x['sigma_gap']:.2f}")
    print("PASS" if ok else "FAIL")
    return PASS if ok else FAIL


def merge_estimates(groups: list) -> list:
    """Pool equally-named estimates from several runs: count-weighted mean, propagated stderr."""
    pooled = {}
    for est in groups:
        for e in est:
            pooled.setdefault(e["name"], []).append(e)
    out = []
    for name, es in pooled.items():
        n = np.array([e["count"] for e in es], dtype=float)
        v = np.array([e["value"] for e in es], dtype=float)
        se = np.array([e["stderr"] for e in es], dtype=float)
        total = n.sum()
        out.append({"name": name, "value": float(np.sum(n * v) / total),
                    "stderr": float(np.sqrt(np.sum((n * se) ** 2)) / total), "count": int(total), "runs": len(es)})
    return out


def cmd_report(cfg) -> int:
    if not cfg["input"]:
        raise ConfigError("--input is required")
    src = Path(cfg["input"])
    files = sorted(src.rglob("*.json")) if src.is_dir() else []
    docs = []
    for f in files:
        try:
            d = json.loads(f.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(d, dict) and "estimates" in d:
            docs.append(d)
    if not docs:
        raise ConfigError(f"no reports found in {src}")
    rows = merge_estimates([d["estimates"] for d in docs])
    kinds = sorted({d.get("kind", "?") for d in docs})
    _write(cfg, "summary", {"sources": [str(f) for f in files], "kinds": kinds, "rows": rows}, rows)
    for r in rows:
        print(f"{r['name']:32s} {r['value']:+.6f} +- {r['stderr']:.6f}  (n={r['count']}, runs={r['runs']})")
    return PASS


COMMANDS = {
    "identities": cmd_identities, "girsanov": cmd_girsanov, "cm-verify": cmd_cm_verify,
    "bridge-verify": cmd_bridge_verify, "sample": cmd_sample, "evolve": cmd_evolve,
    "invariance": cmd_invariance, "transport": cmd_transport, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--modes")
    common.add_argument("--samples", type=int)
    common.add_argument("--steps")
    common.add_argument("--dt", type=float)
    common.add_argument("--horizon", type=float)
    common.add_argument("--mass-cutoff", dest="mass_cutoff", type=float)
    common.add_argument("--out")
    common.add_argument("--threads", type=int, help="accepted for compatibility; runs are single-process")
    common.add_argument("--config", help="JSON document with parameter values")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dnlsgauge", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("identities", parents=[common])
    s.add_argument("--normalization")
    s.add_argument("--sign-flip", dest="sign_flip", action="store_true", help="inject a wrong-direction gauge")
    s = sub.add_parser("girsanov", parents=[common])
    s.add_argument("--gauged-fraction", dest="gauged_fraction", type=float)
    s.add_argument("--sign-flip", dest="sign_flip", action="store_true")
    s.add_argument("--ess-floor", dest="ess_floor", type=float)
    sub.add_parser("cm-verify", parents=[common])
    s = sub.add_parser("bridge-verify", parents=[common])
    s.add_argument("--cov-samples", dest="cov_samples", type=int)
    s.add_argument("--conformal-steps", dest="conformal_steps", type=int)
    s = sub.add_parser("sample", parents=[common])
    s.add_argument("--measure", choices=["rho", "nu", "mu"])
    s.add_argument("--normalization", choices=sorted(measures.NORMALIZATIONS))
    s.add_argument("--method", choices=["is", "mcmc"])
    s.add_argument("--chains", type=int)
    s = sub.add_parser("evolve", parents=[common])
    s.add_argument("--input")
    s.add_argument("--equation", choices=list(dynamics.EQUATIONS))
    s = sub.add_parser("invariance", parents=[common])
    s.add_argument("--case", choices=list(dynamics.CASES))
    s.add_argument("--normalization", choices=sorted(measures.NORMALIZATIONS))
    s.add_argument("--chains", type=int)
    s = sub.add_parser("transport", parents=[common])
    s.add_argument("--normalization", choices=sorted(measures.NORMALIZATIONS))
    s.add_argument("--chains", type=int)
    s = sub.add_parser("report", parents=[common])
    s.add_argument("--input")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return CONFIG if e.code else PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    t0 = time.time()
    try:
        cfg = resolve(args.command, args)
        code = COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG
    except measures.DegenerateStatistics as e:
        print(f"degenerate statistics: {e}", file=sys.stderr)
        return DEGENERATE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return CONFIG
    except (TypeError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return CONFIG
    log.info("%s finished in %.1f s", args.command, time.time() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
