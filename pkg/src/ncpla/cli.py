"""Command-line driver: every experiment is a JSON config in, CSV/JSON out.

Each run writes its artifacts plus ``manifest.json`` to ``--out``.  Passing a
manifest back through ``--config`` repeats the run with the same settings and
seed, which reproduces the artifacts byte for byte.
"""

import argparse
import csv
import datetime as dt
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import message_ser, message_ser_upper_bound, tag_ser, tag_ser_message_based
from .auth import HASH_ID, run_auth_experiment
from .config import ConfigError, SystemConfig, db_to_linear, linear_to_db
from .constellation import InfeasibleError, design_constellation
from .embedding import build_message_based, build_uniform
from .optimizer import scheme_from_solution, solve_power_allocation, tradeoff_curve
from .simulator import simulate_ser
from .special_math import DomainError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
MANIFEST_VERSION = 1


def _grid(spec, name):
    """A list of numbers, or ``{"start", "stop", "num"}`` for a linear grid."""
    if isinstance(spec, dict):
        try:
            return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except KeyError as exc:
            raise ConfigError(f"{name}: missing {exc.args[0]!r}") from None
    if isinstance(spec, (int, float)):
        return np.array([float(spec)])
    if not isinstance(spec, list) or not spec:
        raise ConfigError(f"{name} must be a non-empty list or a start/stop/num grid")
    return np.asarray(spec, dtype=float)


def _db_list(raw, key, default):
    """Sweep values for ``key`` from ``<key>_db_list``, ``<key>_list`` or the scalar."""
    if f"{key}_db_list" in raw:
        return [db_to_linear(x) for x in _grid(raw[f"{key}_db_list"], f"{key}_db_list")]
    if f"{key}_list" in raw:
        return list(_grid(raw[f"{key}_list"], f"{key}_list"))
    if f"{key}_db" in raw:
        return [db_to_linear(x) for x in _grid(raw[f"{key}_db"], f"{key}_db")]
    if key in raw:
        return list(_grid(raw[key], key))
    return [default]


def _write_csv(path, rows):
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _build_scheme(cfg, raw):
    spec = raw.get("scheme")
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError('config needs a "scheme" object with a "kind"')
    kind = spec["kind"]
    if kind == "optimized":
        sol = solve_power_allocation(cfg, float(spec.get("delta", 1e-6)))
        return scheme_from_solution(cfg, sol)
    con = design_constellation(cfg)
    if kind == "uniform":
        return build_uniform(con, cfg.L_t, float(spec["beta"]))
    if kind == "message_based":
        return build_message_based(con, cfg.L_t, spec["r"])
    raise ConfigError(f"unknown scheme kind {kind!r}")


def cmd_design(cfg, raw, args, out):
    con = design_constellation(cfg)
    d = con.to_dict()
    d.update(L_m=cfg.L_m, gamma_m_db=linear_to_db(cfg.gamma_m))
    _write_json(out / "constellation.json", d)
    return ["constellation.json"]


def _mc_columns(scheme, cfg, trials, seed, raw):
    res = simulate_ser(scheme, cfg.N, trials, seed=seed, workers=int(raw.get("workers", 1)),
                       method=raw.get("method", "channel"))
    (lo, hi), (tlo, thi) = res.p_em_ci, res.p_et_known_row_ci
    return {
        "mc_frames": res.frames, "mc_p_em": res.p_em, "mc_p_em_lo": lo, "mc_p_em_hi": hi,
        "mc_p_et": res.p_et_known_row, "mc_p_et_lo": tlo, "mc_p_et_hi": thi,
        "mc_p_et_given_msg_ok": res.p_et,
    }


def cmd_uniform_sweep(cfg, raw, args, out):
    betas = _grid(raw.get("beta_grid", {"start": 0.005, "stop": 1.0, "num": 200}), "beta_grid")
    if np.any(betas <= 0) or np.any(betas > 1):
        raise ConfigError("beta values must lie in (0, 1]")
    con = design_constellation(cfg)
    trials = args.trials if args.trials is not None else int(raw.get("trials", 0))
    rows = []
    for n, beta in enumerate(betas):
        s = build_uniform(con, cfg.L_t, float(beta))
        p_et, per = tag_ser(s, cfg.N)
        row = {"beta": float(beta), "p_em": message_ser(s, cfg.N), "p_et": p_et}
        row.update({f"p_et_{i + 1}": float(p) for i, p in enumerate(per)})
        if trials:
            row.update(_mc_columns(s, cfg, trials, args.seed + n, raw))
        rows.append(row)
    _write_csv(out / "uniform_sweep.csv", rows)
    return ["uniform_sweep.csv"]


def cmd_mbased_sweep(cfg, raw, args, out):
    rmax = design_constellation(cfg).R ** (1.0 / (cfg.L_t - 1))
    rs = _grid(raw.get("r_grid", {"start": 1.05, "stop": 0.5 * (1 + rmax), "num": 20}), "r_grid")
    trials = args.trials if args.trials is not None else int(raw.get("trials", 0))
    rows = []
    for gm in _db_list(raw, "gamma_m", cfg.gamma_m):
        c = cfg.replace(gamma_m=gm, gamma_tot=max(gm, cfg.gamma_tot))
        con = design_constellation(c)
        for n, r in enumerate(rs):
            s = build_message_based(con, c.L_t, float(r))
            row = {
                "gamma_m_db": linear_to_db(gm), "r": float(r),
                "p_em": message_ser(s, c.N),
                "p_em_upper": message_ser_upper_bound(s.r, con.R, c.L_t, c.L_m, c.N),
                "p_et": tag_ser_message_based(s.r, c.L_t, c.N),
            }
            if trials:
                row.update(_mc_columns(s, c, trials, args.seed + n, raw))
            rows.append(row)
    _write_csv(out / "mbased_sweep.csv", rows)
    return ["mbased_sweep.csv"]


def cmd_optimize(cfg, raw, args, out):
    delta = float(raw.get("delta", 1e-6))
    sol = solve_power_allocation(cfg, delta, n_grid=int(raw.get("n_grid", 64)))
    d = sol.to_dict()
    d["power_slack"] = sol.power_slack
    _write_json(out / "optimize.json", d)
    _write_csv(out / "optimize.csv", [_solution_row(cfg, delta, sol.status, sol)])
    return ["optimize.json", "optimize.csv"]


def _solution_row(cfg, delta, status, sol):
    row = {"delta": delta, "gamma_tot_db": linear_to_db(cfg.gamma_tot), "N": cfg.N,
           "L_m": cfg.L_m, "L_t": cfg.L_t, "status": status,
           "alpha_star": "", "p_et_opt": "", "p_em_upper": "", "kkt_residual": ""}
    if sol is not None:
        row.update(alpha_star=sol.alpha_star, p_et_opt=sol.p_et_opt,
                   p_em_upper=sol.p_em_upper_at_opt, kkt_residual=sol.kkt_residual)
        row.update({f"r_{i + 1}": float(r) for i, r in enumerate(sol.r)})
    else:
        row.update({f"r_{i + 1}": "" for i in range(cfg.L_m)})
    return row


def cmd_tradeoff(cfg, raw, args, out):
    deltas = _grid(raw.get("delta_list", [1e-8, 1e-7, 1e-6, 1e-5, 1e-4]), "delta_list")
    Ns = [int(n) for n in raw.get("N_list", [cfg.N])]
    rows = []
    for N in Ns:
        for gt in _db_list(raw, "gamma_tot", cfg.gamma_tot):
            c = cfg.replace(N=N, gamma_tot=gt, gamma_m=min(cfg.gamma_m, gt))
            for pt in tradeoff_curve(c, list(deltas), n_grid=int(raw.get("n_grid", 64))):
                rows.append(_solution_row(c, pt.delta, pt.status, pt.solution))
    _write_csv(out / "tradeoff.csv", rows)
    return ["tradeoff.csv"]


def cmd_simulate(cfg, raw, args, out):
    scheme = _build_scheme(cfg, raw)
    trials = args.trials if args.trials is not None else int(raw.get("trials", 100_000))
    res = simulate_ser(scheme, cfg.N, trials, seed=args.seed, workers=int(raw.get("workers", 1)),
                       method=raw.get("method", "channel"))
    p_et, per = tag_ser(scheme, cfg.N)
    row = {"kind": scheme.kind, "N": cfg.N, "L_m": scheme.L_m, "L_t": scheme.L_t,
           "theory_p_em": message_ser(scheme, cfg.N), "theory_p_et": p_et}
    row.update(res.as_row())
    _write_csv(out / "simulate.csv", [row])
    _write_json(out / "scheme.json", scheme.to_dict())
    return ["simulate.csv", "scheme.json"]


def cmd_auth(cfg, raw, args, out):
    scheme = _build_scheme(cfg, raw)
    frames = args.trials if args.trials is not None else int(raw.get("frames", 10_000))
    key = bytes.fromhex(raw.get("key_hex", b"ncpla-demo-key".hex()))
    attackers = raw.get("attackers", ["legit", "forger"])
    rows = []
    for n, att in enumerate(attackers):
        rep = run_auth_experiment(cfg, scheme, frames, attacker=att, seed=args.seed + n, key=key,
                                  method=raw.get("method", "channel"))
        rows.append(rep.as_row())
    _write_csv(out / "auth.csv", rows)
    return ["auth.csv"]


COMMANDS = {
    "design": cmd_design,
    "uniform-sweep": cmd_uniform_sweep,
    "mbased-sweep": cmd_mbased_sweep,
    "optimize": cmd_optimize,
    "tradeoff": cmd_tradeoff,
    "simulate": cmd_simulate,
    "auth": cmd_auth,
}


def _load_config(path):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def build_parser():
    p = argparse.ArgumentParser(prog="ncpla", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config or a previous manifest")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--trials", type=int, default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        raw = _load_config(args.config)
        if raw.get("manifest_version") is not None:
            if raw.get("command") != args.command:
                raise ConfigError(f"manifest was written by {raw.get('command')!r}")
            if args.seed is None:
                args.seed = raw["seed"]
            if args.trials is None:
                args.trials = raw.get("trials")
            raw = raw["config"]
        if args.seed is None:
            args.seed = int(raw.get("seed", 0))
        if args.seed < 0 or args.trials is not None and args.trials < 1:
            raise ConfigError("seed must be >= 0 and trials >= 1")
        cfg = SystemConfig.from_dict(raw)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, raw, args, out)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, DomainError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "ncpla",
        "version": __version__,
        "command": args.command,
        "config": raw,
        "seed": args.seed,
        "trials": args.trials,
        "hash_id": HASH_ID,
        "outputs": [
            {"path": f, "sha256": hashlib.sha256((out / f).read_bytes()).hexdigest()}
            for f in files
        ],
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    }
    _write_json(out / "manifest.json", manifest)
    for f in files:
        print(out / f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
