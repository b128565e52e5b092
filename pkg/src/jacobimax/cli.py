"""Command line driver.

    jacobimax <command> --config run.toml [--seed N] [--threads N] [--out path]

The config is a flat TOML table.  Unknown keys are rejected by name.  Tabular
output is CSV with the resolved config as leading ``#`` comment lines; nested
reports are JSON with a ``config`` entry.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import extremes as ex
from . import oracle
from .ensemble import (EnsembleSpec, ParameterError, SamplingError, SeedSpec, sample,
                       zero_noise)
from .recursion import log_abs_charpoly_many, raw_charpoly
from .regimes import (DEFAULT_KAPPA, basis_arrays, build_schedule, conjugated_trajectory,
                      deterministic_tail_product, good_block_flags)
from .variance import ELLIPTIC_FORMS, build_profile

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("sample", "eval", "trajectory", "profile", "verify", "extremes",
            "barrier", "diagnose")

COMMON = {"command", "seed", "threads", "out", "ensemble", "beta", "v", "family",
          "truncate", "truncation_exponent", "eta"}
KEYS = {
    "sample": {"n"},
    "eval": {"n", "z", "net", "net_size"},
    "trajectory": {"n", "z", "kappa", "delta", "stride"},
    "profile": {"n", "z", "kappa", "delta", "elliptic_form"},
    "verify": {"n", "replicas"},
    "extremes": {"n", "replicas", "net", "net_size"},
    "barrier": {"n", "z", "net_size", "replicas", "C", "q", "kappa"},
    "diagnose": {"n", "z", "replicas", "kappa", "delta", "epsilon", "s", "t", "q",
                 "tail_delta", "anti_delta"},
}
DEFAULTS = {
    "seed": 0, "ensemble": "gbe", "beta": 2.0, "v": 1.0, "family": "uniform",
    "truncate": False, "truncation_exponent": 2.0, "eta": 0.1, "kappa": DEFAULT_KAPPA,
    "delta": None, "net": "chebyshev", "net_size": 64, "replicas": 10, "stride": 1,
    "elliptic_form": "averaged", "C": 10.0, "q": 8.0, "epsilon": 1.0, "s": 5, "t": 10,
    "tail_delta": 0.01, "anti_delta": 0.05,
}


class ConfigError(ValueError):
    pass


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _int(cfg, key, lo=None):
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key}: expected an integer, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {val}")
    return val


def _num(cfg, key):
    val = cfg[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {val!r}")
    return float(val)


def parse_config(command, raw, overrides=None):
    """Validate a raw mapping for `command`; returns a resolved dict."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    allowed = COMMON | KEYS[command]
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for command {command!r}")
    if raw.get("command", command) != command:
        raise ConfigError(f"command: config is for {raw['command']!r}, not {command!r}")
    cfg = {k: v for k, v in DEFAULTS.items() if k in allowed}
    cfg.update(raw)
    cfg["command"] = command
    cfg["threads"] = raw.get("threads", os.cpu_count() or 1)
    _int(cfg, "threads", 1)
    _int(cfg, "seed", 0)
    if "n" not in cfg:
        if command == "verify":
            cfg["n"] = [64, 256, 1024]
        else:
            raise ConfigError("n: required")
    ns = _as_list(cfg["n"])
    for n in ns:
        _int({"n": n}, "n", 1)
    if command == "extremes":
        cfg["n"] = ns
        if len(set(ns)) < 3:
            raise ConfigError("n: the regression needs at least three distinct values")
    elif command == "verify":
        cfg["n"] = ns
    elif len(ns) != 1:
        raise ConfigError(f"n: command {command!r} takes a single n")
    else:
        cfg["n"] = ns[0]
    eta = _num(cfg, "eta")
    if not 0 < eta < 1:
        raise ConfigError(f"eta: must lie in (0, 1), got {eta}")
    try:
        cfg["spec"] = _ensemble(cfg)
    except ParameterError as exc:
        raise ConfigError(f"ensemble: {exc}") from None
    for key in ("replicas", "stride", "net_size", "s", "t"):
        if key in cfg:
            _int(cfg, key, 0 if key == "replicas" else 1)
    for key in ("kappa", "C", "q", "epsilon", "tail_delta", "anti_delta"):
        if key in cfg:
            _num(cfg, key)
    if "kappa" in cfg and not cfg["kappa"] >= 1:
        raise ConfigError(f"kappa: must be >= 1, got {cfg['kappa']}")
    if cfg.get("delta") is not None and not _num(cfg, "delta") > 0:
        raise ConfigError("delta: must be positive")
    if "net" in cfg and cfg["net"] not in ("chebyshev", "chebyshev-full", "uniform"):
        raise ConfigError(f"net: unknown kind {cfg['net']!r}")
    if "elliptic_form" in cfg and cfg["elliptic_form"] not in ELLIPTIC_FORMS:
        raise ConfigError(f"elliptic_form: must be one of {ELLIPTIC_FORMS}")
    if "z" in cfg:
        zs = [float(z) for z in _as_list(cfg["z"])]
        for z in zs:
            if not eta <= abs(z) <= 2 - eta:
                raise ConfigError(f"z: {z} outside the bulk [eta, 2 - eta]")
        cfg["z"] = zs
    elif command in ("trajectory", "profile", "diagnose"):
        raise ConfigError("z: required")
    if command == "barrier" and "z" not in cfg:
        cfg["z"] = [float(z) for z in ex.uniform_net(cfg["net_size"], eta).points]
    if command in ("trajectory", "profile", "diagnose", "barrier"):
        for z in cfg["z"]:
            try:
                build_schedule(z, cfg["n"], cfg["kappa"], cfg.get("delta"), eta)
            except ParameterError as exc:
                raise ConfigError(f"delta/kappa: {exc}") from None
    return cfg


def _ensemble(cfg):
    kw = dict(truncate=bool(cfg["truncate"]),
              truncation_exponent=float(cfg["truncation_exponent"]))
    if cfg["ensemble"] == "gbe":
        return EnsembleSpec.gbe(_num(cfg, "beta"), **kw)
    if cfg["ensemble"] == "generic":
        return EnsembleSpec.generic(_num(cfg, "v"), str(cfg["family"]), **kw)
    raise ParameterError(f"unknown ensemble {cfg['ensemble']!r}")


def _public(cfg):
    return {k: v for k, v in sorted(cfg.items()) if k != "spec"}


def _draw(cfg, n, stream):
    # sample() applies the truncation itself when the ensemble asks for it
    return sample(cfg["spec"], n, SeedSpec(cfg["seed"], stream))


def _csv(cfg, header, rows, extra=None):
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_public(cfg), sort_keys=True) + "\n")
    for line in extra or ():
        buf.write("# " + line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                    for x in row])
    return buf.getvalue()


def _json(cfg, report):
    return json.dumps({"config": _public(cfg), **report}, indent=2, sort_keys=True,
                      default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def cmd_sample(cfg):
    c = _draw(cfg, cfg["n"], 0)
    rows = ((k, c.b[k - 1], c.a[k - 1] if k < c.n else "", c.a2[k - 1] if k < c.n else "")
            for k in range(1, c.n + 1))
    return EXIT_OK, _csv(cfg, ["k", "b", "a", "a2"], rows,
                         [f"resampled: {c.resampled}"])


def cmd_eval(cfg):
    n = cfg["n"]
    c = _draw(cfg, n, 0)
    if "z" in cfg:
        zs = np.array(sorted(cfg["z"]))
    elif cfg["net"] == "uniform":
        zs = ex.uniform_net(cfg["net_size"], cfg["eta"]).points
    elif cfg["net"] == "chebyshev-full":
        zs = ex.chebyshev_net(n, cfg["eta"]).points
    else:
        zs = ex.default_net(n, cfg["eta"]).points
    lp, sign, centered, flagged = log_abs_charpoly_many(c, zs)
    rows = zip(zs, lp, sign, centered, flagged.astype(int))
    return EXIT_OK, _csv(cfg, ["z", "log_abs_p", "sign", "centered", "flagged"], rows)


def cmd_trajectory(cfg):
    n = cfg["n"]
    c = _draw(cfg, n, 0)
    parts = []
    for z in cfg["z"]:
        sch = build_schedule(z, n, cfg["kappa"], cfg["delta"], cfg["eta"])
        tr = conjugated_trajectory(c, z, sch, stride=cfg["stride"])
        if tr.flagged:
            raise oracle.NumericalError(f"trajectory hit an exact zero at z={z}")
        parts.append([(z, k, p, w, zt, lg, m) for k, p, w, zt, lg, m
                      in zip(tr.k, tr.psi, tr.W, tr.zeta, tr.log_norm_Y, tr.M)])
    rows = [r for p in parts for r in p]
    return EXIT_OK, _csv(cfg, ["z", "k", "psi", "W", "zeta", "log_norm_Y", "M"], rows)


def cmd_profile(cfg):
    n = cfg["n"]
    rows, trows = [], []
    for z in cfg["z"]:
        pr = build_profile(z, n, cfg["spec"], cfg["kappa"], cfg["delta"], cfg["eta"],
                           elliptic_form=cfg["elliptic_form"])
        for k in range(1, n + 1):
            rows.append((z, k, pr.sigma2[k - 1], pr.Sigma2[k - 1],
                         pr.hat_sigma2[k - 1], pr.hat_Sigma2[k - 1]))
        trows += [f"time_change z={z!r} t={t} n_t={int(nt)}"
                  for t, nt in enumerate(pr.time_change, 1)]
        trows.append(f"T_z z={z!r} {pr.T_z}")
    return EXIT_OK, _csv(cfg, ["z", "k", "sigma2", "Sigma2", "hat_sigma2", "hat_Sigma2"],
                         rows, trows)


def verify_report(seed=0, ns=(64, 256, 1024)):
    """Identity checks with their maximum errors and pass flags."""
    checks = []
    # determinant identity
    err = 0.0
    for n in range(2, 13):
        for r in range(10):
            c = sample(EnsembleSpec.gbe(2.0), n, SeedSpec(seed, 100 * n + r))
            for z in np.linspace(-1.8, 1.8, 5):
                d = oracle.dense_det(c, z, n)
                err = max(err, abs(raw_charpoly(c, z, n) - d) / max(1.0, abs(d)))
    checks.append(("determinant_identity", err, err <= 1e-9))
    # Hermite polynomials
    err = 0.0
    for n in (3, 4):
        for z in np.linspace(-1.9, 1.9, 20):
            x = z * math.sqrt(n)
            h = oracle.hermite_value(n, x)
            err = max(err, abs(raw_charpoly(zero_noise(n), z, n) - h) / max(1.0, abs(h)))
    checks.append(("hermite_polynomials", err, err <= 1e-12))
    roots = oracle.hermite_roots(20)
    eig = oracle.eigen_tridiag(zero_noise(20)).eigenvalues
    err = float(np.max(np.abs(roots - eig)))
    checks.append(("hermite_roots_n20", err, err <= 1e-10))
    # eigenvalues vs polynomial
    err = 0.0
    for n in ns:
        for beta in (1.0, 2.0, 4.0):
            c = sample(EnsembleSpec.gbe(beta), n, SeedSpec(seed, 7 * n + int(beta)))
            sp = oracle.eigen_tridiag(c)
            zs = np.linspace(-1.7, 1.7, 7)
            lp, _, _, _ = log_abs_charpoly_many(c, zs)
            for z, val in zip(zs, lp):
                ref = oracle.log_potential(sp, z)
                err = max(err, abs(val - ref) / (abs(ref) + 1.0))
    checks.append(("log_potential_identity", err, err <= 1e-8))
    return [{"check": name, "max_error": e, "ok": bool(ok)} for name, e, ok in checks]


def cmd_verify(cfg):
    report = verify_report(cfg["seed"], tuple(cfg["n"]))
    code = EXIT_OK if all(r["ok"] for r in report) else EXIT_VERIFY
    return code, _json(cfg, {"checks": report, "ok": code == EXIT_OK})


def cmd_extremes(cfg):
    spec = ex.ExperimentSpec(tuple(cfg["n"]), cfg["replicas"], cfg["spec"], cfg["net"],
                             cfg["net_size"], cfg["eta"], cfg["seed"], cfg["threads"],
                             timing=False)
    recs = ex.run_experiment(spec)
    failed = [r for r in recs if not r.ok]
    lines = [f"failed_replicas: {len(failed)}"]
    try:
        fit = ex.fit_leading(recs)
        lines += [f"slope_logn: {fit.slope_logn!r}", f"slope_loglogn: {fit.slope_loglogn!r}",
                  f"intercept: {fit.intercept!r}", f"stderr: {list(fit.stderr)!r}"]
    except (ParameterError, oracle.NumericalError) as exc:
        lines.append(f"regression: {exc}")
    rows = ((r.n, r.beta, r.stream_id, r.max_centered, r.argmax_z, r.runtime_ms)
            for r in recs)
    return EXIT_OK, _csv(cfg, ["n", "beta", "stream_id", "max_centered", "argmax_z",
                               "runtime_ms"], rows, lines)


def barrier_fields(spec, n, zs, replicas, seed, kappa=DEFAULT_KAPPA, eta=0.1):
    setups = []
    for z in zs:
        pr = build_profile(z, n, spec, kappa=kappa, eta=eta)
        setups.append((z, pr, basis_arrays(pr.schedule, spec.v)))
    fields = {z: np.empty((replicas, pr.T_z)) for z, pr, _ in setups}
    for r in range(replicas):
        c = sample(spec, n, SeedSpec(seed, r))
        for z, pr, bas in setups:
            fields[z][r] = ex.time_changed_field(c, z, pr, bas)
    return fields


def cmd_barrier(cfg):
    n = cfg["n"]
    fields = barrier_fields(cfg["spec"], n, cfg["z"], cfg["replicas"], cfg["seed"],
                            cfg["kappa"], cfg["eta"])
    offsets = {}
    for z in cfg["z"]:
        pr = build_profile(z, n, cfg["spec"], kappa=cfg["kappa"], eta=cfg["eta"])
        offsets[z] = ex.deterministic_field(z, pr)
    rep = ex.barrier_scan(fields, n, cfg["spec"].v, cfg["C"], cfg["q"], offsets)
    return EXIT_OK, _json(cfg, {
        "C": rep.C, "q": rep.q, "crossing_fraction": rep.crossing_fraction,
        "crossed": rep.crossed.astype(int),
        "excluded_window": ex.excluded_window(n, rep.q),
        "C_star_window": _finite(rep.C_star), "C_star_full": _finite(rep.C_star_full),
        "C_star_centered": _finite(rep.C_star_centered),
        "worst_excess": {repr(z): [_finite(x) for x in v]
                         for z, v in rep.worst_excess.items()},
    })


def cmd_diagnose(cfg):
    n, spec = cfg["n"], cfg["spec"]
    out = {}
    for z in cfg["z"]:
        sch = build_schedule(z, n, cfg["kappa"], cfg["delta"], cfg["eta"])
        bas = basis_arrays(sch, spec.v)
        pr = build_profile(z, n, spec, schedule=sch)
        good_h, good_e, maxW, psis, coeffs = [], [], [], [], []
        for r in range(cfg["replicas"]):
            c = _draw(cfg, n, r)
            coeffs.append(c)
            tr = conjugated_trajectory(c, z, sch, basis=bas)
            fl = good_block_flags(tr, sch, basis=bas)
            good_h += list(fl.hyper_good)
            good_e += list(fl.ell_good)
            maxW.append(float(np.max(tr.W[: sch.k_delta])) if sch.k_delta > 0 else 0.0)
            psis.append([tr.psi[pr.n_t(t) - 1] for t in (cfg["s"], cfg["t"])])
        entry = {
            "hyperbolic_good_fraction": _finite(np.mean(good_h)) if good_h else None,
            "elliptic_good_fraction": _finite(np.mean(good_e)) if good_e else None,
            "max_W_below_k_delta": maxW,
            "anticoncentration": ex.anticoncentration_check(coeffs, z, cfg["anti_delta"]),
        }
        P = np.array(psis)
        if P.shape[0] >= 2:
            S = np.zeros((P.shape[0], max(cfg["s"], cfg["t"])))
            S[:, cfg["s"] - 1], S[:, cfg["t"] - 1] = P[:, 0], P[:, 1]
            entry["covariance_s_t"] = ex.field_covariance(S, cfg["s"], cfg["t"])
        try:
            norm, err = deterministic_tail_product(z, n, cfg["tail_delta"])
            entry["tail_product"] = {"norm": norm, "entry_error": err}
        except ParameterError as exc:
            entry["tail_product"] = str(exc)
        out[repr(z)] = entry
    return EXIT_OK, _json(cfg, {"diagnostics": out})


HANDLERS = {
    "sample": cmd_sample, "eval": cmd_eval, "trajectory": cmd_trajectory,
    "profile": cmd_profile, "verify": cmd_verify, "extremes": cmd_extremes,
    "barrier": cmd_barrier, "diagnose": cmd_diagnose,
}


def load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="jacobimax",
                                 description="Extremes of log-characteristic polynomials "
                                             "of random Jacobi matrices.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="TOML file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", help="output file (default stdout)")
    args = ap.parse_args(argv)
    try:
        raw = load_config(args.config)
        cfg = parse_config(args.command, raw, {"seed": args.seed, "threads": args.threads,
                                               "out": args.out})
    except (OSError, tomllib.TOMLDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, text = HANDLERS[args.command](cfg)
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (oracle.NumericalError, SamplingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = cfg.get("out")
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
