"""Command line entry point: runs, sweeps, verifications, oracle checks.

Exit codes: 0 success, 1 verification or acceptance failure, 2 usage
error. Every artifact starts with a provenance header (full effective
configuration, seed, package version) sufficient to reproduce it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, analysis, constructions, oracle, rng
from .dynamics import Simulation, save_checkpoint, window_bounds, \
    window_count
from .geometry import SlabGeometry
from .state import Pattern, SpinConfig, embed_pattern

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _provenance(command: str, config: dict) -> dict:
    return {"tool": "slabglauber", "version": __version__,
            "command": command, "config": config}


def _load_config_file(path):
    with open(path) as fh:
        return json.load(fh)


def _merge_config(args: argparse.Namespace, keys: list[str]) -> dict:
    """Flags override config-file entries; both override defaults."""
    file_cfg = _load_config_file(args.config) if args.config else {}
    unknown = set(file_cfg) - set(keys)
    if unknown:
        raise UsageError(f"unknown config file keys: {sorted(unknown)}")
    merged = {}
    for key in keys:
        cli_val = getattr(args, key, None)
        merged[key] = cli_val if cli_val is not None else file_cfg.get(key)
    return merged


def _geometry(cfg) -> SlabGeometry:
    for name in ("k", "lx", "ly"):
        if cfg[name] is None:
            raise UsageError(f"--{name} is required")
    g = SlabGeometry(cfg["lx"], cfg["ly"], cfg["k"], cfg["bc"])
    if g.lx < 4 or g.ly < 4:
        raise UsageError("production runs need lx, ly >= 4 "
                         "(the oracle command handles tiny systems)")
    return g


def _resolve_pattern(spec: str) -> tuple[Pattern, dict | None]:
    """A pattern file path, or the name 'figure7' for the shipped asset.

    Returns the pattern plus the designated-site sidecar when present.
    """
    if spec == "figure7":
        fp = constructions.build_figure7()
        sidecar = {"flipping": [list(s) for s in fp.flipping],
                   "fixed": [list(s) for s in fp.fixed]}
        return fp.pattern, sidecar
    pattern = Pattern.load(spec)
    sidecar_path = os.path.splitext(spec)[0] + "_sites.json"
    sidecar = None
    if os.path.exists(sidecar_path):
        with open(sidecar_path) as fh:
            raw = json.load(fh)
        sidecar = {"flipping": raw.get("flipping", []),
                   "fixed": raw.get("fixed", [])}
    return pattern, sidecar


# --- single replica ------------------------------------------------------------


def run_replica(cfg: dict, replica: int):
    """One seeded run: returns (per-window rows, replica summary)."""
    g = SlabGeometry(cfg["lx"], cfg["ly"], cfg["k"], cfg["bc"])
    seed = rng.derive_seed(cfg["seed"], replica)
    config = SpinConfig.from_product(g, cfg["p"], seed)
    if cfg.get("pattern_spec"):
        pattern, _ = _resolve_pattern(cfg["pattern_spec"])
        pattern.anchor = tuple(cfg.get("pattern_anchor") or (0, 0))
        config = embed_pattern(config, pattern)
    t_max = cfg["t_max"]
    sim = Simulation(config, seed, t_max, mode=cfg["engine"])
    base = cfg.get("snapshot_base") or 2
    snap_times = []
    t = float(base)
    while t <= t_max:
        snap_times.append(t)
        t *= base
    if not snap_times or snap_times[-1] < t_max:
        snap_times.append(float(t_max))
    checkpoint_at = sorted(cfg.get("checkpoint_at") or [])
    marks = sorted(set(snap_times) | set(checkpoint_at))
    snapshots = []
    events = flips = 0
    quiescent = False
    for mark in marks:
        summary = sim.run_until(mark)
        events += summary.events
        flips += summary.flips
        quiescent = summary.quiescent
        if mark in snap_times:
            snapshots.append((mark, sim.snapshot()))
        if mark in checkpoint_at and cfg.get("out"):
            path = os.path.join(cfg["out"],
                                f"checkpoint_r{replica}_t{mark:g}.npz")
            save_checkpoint(sim, path)
    census = analysis.fixation_census(sim.log, snapshots, g)
    rows = []
    for j in range(census.n_windows):
        lo, hi = window_bounds(j)
        mask = sim.log.window_total[:, j] > 0
        col_mask = mask.reshape(g.n_columns, g.k).any(axis=1)
        stats = analysis.column_cluster_stats(col_mask.reshape(g.lx, g.ly))
        rows.append({
            "replica": replica, "replica_seed": seed,
            "k": g.k, "bc": g.vertical_bc, "p": cfg["p"],
            "window_j": j, "t_lo": lo, "t_hi": hi,
            "active_fraction": census.window_active_fraction[j],
            "mono_fraction": census.mono_fraction[j],
            "el_flips": int(census.window_el_total[j]),
            "largest_active_cluster": (stats.sizes[0] if stats.sizes
                                       else 0),
        })
    el = census.window_el_total
    nonzero = np.flatnonzero(el)
    el_sat_window = int(nonzero[-1]) + 1 if len(nonzero) else 0
    summary = {
        "replica": replica, "replica_seed": seed,
        "quiescent": quiescent, "events": events, "flips": flips,
        "final_active_fraction": float(census.window_active_fraction[-1]),
        "el_saturation_window": el_sat_window,
        "central_fixated": analysis.central_site_fixated(sim.log, g, t_max),
    }
    if cfg.get("pattern_spec"):
        _, sidecar = _resolve_pattern(cfg["pattern_spec"])
        if sidecar:
            summary["designated"] = _designated_flips(sim, g, sidecar,
                                                      cfg)
    return rows, summary


def _designated_flips(sim, g, sidecar, cfg):
    ax, ay = tuple(cfg.get("pattern_anchor") or (0, 0))
    def flips_of(sites):
        return {f"{ax + x},{ay + y},{z}":
                int(sim.log.total[g.site_index(ax + x, ay + y, z)])
                for x, y, z in sites}
    return {"flipping": flips_of(sidecar["flipping"]),
            "fixed_total_flips": int(sum(
                sim.log.total[g.site_index(ax + x, ay + y, z)]
                for x, y, z in sidecar["fixed"])),
            "fixed_sites": len(sidecar["fixed"])}


def _run_replicas(cfg: dict) -> tuple[list, list]:
    replicas = range(cfg["replicas"])
    workers = cfg.get("workers") or os.cpu_count() or 1
    all_rows, summaries = [], []
    if workers > 1 and cfg["replicas"] > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replica_star,
                                    [(cfg, r) for r in replicas]))
    else:
        results = [run_replica(cfg, r) for r in replicas]
    for rows, summary in results:
        all_rows.extend(rows)
        summaries.append(summary)
    return all_rows, summaries


def _replica_star(pair):
    return run_replica(*pair)


def _write_census_csv(path, rows, provenance):
    fields = ["replica", "replica_seed", "k", "bc", "p", "window_j",
              "t_lo", "t_hi", "active_fraction", "mono_fraction",
              "el_flips", "largest_active_cluster"]
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(provenance) + "\n")
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


# --- commands --------------------------------------------------------------------


_RUN_KEYS = ["k", "bc", "lx", "ly", "p", "seed", "t_max", "replicas",
             "engine", "pattern_spec", "pattern_anchor", "out",
             "snapshot_base", "checkpoint_at", "workers"]


def cmd_run(args) -> int:
    cfg = _merge_config(args, _RUN_KEYS)
    for key, default in (("bc", "periodic"), ("lx", 64), ("ly", 64),
                         ("p", 0.5), ("seed", 0), ("t_max", 1024.0),
                         ("replicas", 1), ("engine", "thinned"),
                         ("snapshot_base", 2)):
        if cfg[key] is None:
            cfg[key] = default
    _geometry(cfg)  # validates
    if not 0 < cfg["p"] < 1:
        raise UsageError("--p must lie in (0, 1)")
    if cfg["out"]:
        os.makedirs(cfg["out"], exist_ok=True)
    rows, summaries = _run_replicas(cfg)
    provenance = _provenance("run", cfg)
    out = cfg["out"] or "."
    os.makedirs(out, exist_ok=True)
    _write_census_csv(os.path.join(out, "census.csv"), rows, provenance)
    aggregate = {
        "provenance": provenance,
        "replicas": summaries,
        "mean_window_activity": _mean_profile(rows),
        "quiescent_fraction": float(np.mean([s["quiescent"]
                                             for s in summaries])),
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(aggregate, fh, indent=1, default=_json_default)
    print(f"wrote {out}/census.csv and {out}/summary.json "
          f"({len(summaries)} replicas)")
    return EXIT_OK


def _mean_profile(rows):
    nw = 1 + max(r["window_j"] for r in rows)
    acc = np.zeros(nw)
    cnt = np.zeros(nw)
    for r in rows:
        acc[r["window_j"]] += r["active_fraction"]
        cnt[r["window_j"]] += 1
    return (acc / np.maximum(cnt, 1)).tolist()


def _parse_list(text, conv):
    try:
        return [conv(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}: {exc}")


def cmd_sweep(args) -> int:
    cfg = _merge_config(args, _RUN_KEYS + ["k_list", "p_list"])
    for key, default in (("bc", "periodic"), ("lx", 64), ("ly", 64),
                         ("p", 0.5), ("seed", 0), ("t_max", 1024.0),
                         ("replicas", 10), ("engine", "thinned"),
                         ("snapshot_base", 2)):
        if cfg[key] is None:
            cfg[key] = default
    k_values = (_parse_list(cfg["k_list"], int) if cfg["k_list"]
                else ([cfg["k"]] if cfg["k"] else []))
    p_values = (_parse_list(cfg["p_list"], float) if cfg["p_list"]
                else [cfg["p"]])
    if not k_values:
        raise UsageError("empty k list: pass --k or --k-list")
    if not p_values:
        raise UsageError("empty p list")
    cells = []
    for cell_i, (k, p) in enumerate((k, p) for k in k_values
                                    for p in p_values):
        cell_cfg = dict(cfg)
        cell_cfg.update(k=k, p=p, out=None, checkpoint_at=None,
                        seed=rng.derive_seed(cfg["seed"], 1000 + cell_i))
        _geometry(cell_cfg)
        rows, summaries = _run_replicas(cell_cfg)
        central = analysis.central_site_fixation_probability(
            [s["central_fixated"] for s in summaries])
        cells.append({
            "k": k, "p": p, "bc": cfg["bc"],
            "replicas": len(summaries),
            "mean_window_activity": _mean_profile(rows),
            "final_activity_mean": float(np.mean(
                [s["final_active_fraction"] for s in summaries])),
            "quiescent_fraction": float(np.mean(
                [s["quiescent"] for s in summaries])),
            "central_site_fixation": central,
        })
    report = {"provenance": _provenance("sweep", cfg), "cells": cells}
    out_path = os.path.join(cfg["out"] or ".", "sweep.json")
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=1, default=_json_default)
    print(f"wrote {out_path} ({len(cells)} cells)")
    return EXIT_OK


VERIFY_NAMES = ("absorbing-block", "figure7-fixed", "figure7-cycle")


def cmd_verify(args) -> int:
    name = args.construction
    report = {"construction": name}
    if name == "absorbing-block":
        ks = [args.k] if args.k else list(range(2, 9))
        bcs = [args.bc] if args.bc else ["free", "periodic"]
        cases = []
        passed = True
        for k in ks:
            for bc in bcs:
                for sign in (1, -1):
                    g = SlabGeometry(max(4, k), max(4, k), k, bc)
                    block = constructions.build_absorbing_block(g, (0, 0),
                                                                sign)
                    rep = constructions.verify_absorbing(g, block)
                    cases.append({"k": k, "bc": bc, "sign": sign,
                                  "passed": rep.passed,
                                  "worst_energy": rep.worst_energy})
                    passed &= rep.passed
        report.update(passed=passed, cases=cases)
    elif name == "figure7-fixed":
        fp = constructions.build_figure7()
        rep = constructions.verify_figure7_fixed(fp)
        report.update(passed=rep.passed, worst_energy=rep.worst_energy,
                      violations=[[list(s), i, e]
                                  for s, i, e in rep.violations])
    elif name == "figure7-cycle":
        fp = constructions.build_figure7()
        rep = constructions.verify_figure7_cycle(fp)
        mirrored = constructions.verify_figure7_cycle(fp, inverted=True)
        report.update(
            passed=bool(rep) and rep.all_ties and bool(mirrored),
            flips=[[list(s), d, e] for s, d, e in rep.flips],
            returns_to_start=rep.returns_to_start,
            all_ties=rep.all_ties, legal=rep.legal,
            mirrored_passed=bool(mirrored))
    else:
        raise UsageError(f"unknown construction {name!r}; choose from "
                         f"{VERIFY_NAMES}")
    print(json.dumps(report, indent=1, default=_json_default))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_oracle(args) -> int:
    lx, ly, k = args.lx or 2, args.ly or 2, args.k or 2
    try:
        g = SlabGeometry(lx, ly, k, "periodic")
        tiny = oracle.TinySystem(g)
    except ValueError as exc:
        raise UsageError(str(exc))
    p = args.p if args.p is not None else 0.5
    replicas = args.replicas or 100_000
    seed = args.seed or 0
    threshold = args.tv_threshold if args.tv_threshold is not None else 0.02
    exact = oracle.absorption_analysis(tiny,
                                       oracle.product_distribution(tiny, p))
    counts = oracle.mc_absorption(tiny, p, replicas, seed)
    tv = oracle.total_variation(exact, counts)
    report = {
        "provenance": _provenance("oracle", {
            "lx": lx, "ly": ly, "k": k, "p": p, "replicas": replicas,
            "seed": seed, "tv_threshold": threshold}),
        "absorption_certain": exact.certain,
        "exact": {str(int(s)): float(pr)
                  for s, pr in zip(exact.absorbing, exact.probs)},
        "expected_absorption_time": exact.expected_time,
        "monte_carlo": {str(s): c / replicas for s, c in counts.items()},
        "replicas": replicas,
        "tv_distance": tv,
        "passed": bool(tv <= threshold),
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1, default=_json_default)
    print(json.dumps({k: v for k, v in report.items()
                      if k not in ("exact", "monte_carlo")}, indent=1))
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# --- argument parsing ---------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slabglauber",
        description="Zero-temperature Glauber dynamics on 2D slabs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config file; flags override")
        sp.add_argument("--k", type=int)
        sp.add_argument("--bc", choices=("free", "periodic"))
        sp.add_argument("--lx", type=int)
        sp.add_argument("--ly", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--t-max", dest="t_max", type=float)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--engine", dest="engine",
                        choices=("thinned", "full_clock", "full"))
        sp.add_argument("--pattern", dest="pattern_spec",
                        help="pattern file, or 'figure7' for the shipped "
                             "asset")
        sp.add_argument("--pattern-anchor", dest="pattern_anchor",
                        type=lambda s: [int(v) for v in s.split(",")])
        sp.add_argument("--out")
        sp.add_argument("--snapshot-base", dest="snapshot_base", type=int)
        sp.add_argument("--checkpoint-at", dest="checkpoint_at",
                        type=lambda s: [float(v) for v in s.split(",")])
        sp.add_argument("--workers", type=int)

    run_p = sub.add_parser("run", help="simulate replicas, emit census")
    add_common(run_p)
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="k/p sweep with aggregates")
    add_common(sweep_p)
    sweep_p.add_argument("--k-list", dest="k_list")
    sweep_p.add_argument("--p-list", dest="p_list")
    sweep_p.set_defaults(func=cmd_sweep)

    verify_p = sub.add_parser("verify", help="deterministic certificates")
    verify_p.add_argument("construction")
    verify_p.add_argument("--k", type=int)
    verify_p.add_argument("--bc", choices=("free", "periodic"))
    verify_p.set_defaults(func=cmd_verify)

    oracle_p = sub.add_parser("oracle", help="exact vs Monte Carlo check")
    oracle_p.add_argument("--lx", type=int)
    oracle_p.add_argument("--ly", type=int)
    oracle_p.add_argument("--k", type=int)
    oracle_p.add_argument("--p", type=float)
    oracle_p.add_argument("--replicas", type=int)
    oracle_p.add_argument("--seed", type=int)
    oracle_p.add_argument("--tv-threshold", dest="tv_threshold", type=float)
    oracle_p.add_argument("--out")
    oracle_p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    if getattr(args, "engine", None) == "full":
        args.engine = "full_clock"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
