"""Command-line front end: ``seaplace genmap | place | eval | plot``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 infeasible die.
Every file written carries the config hash and seed; nothing time-dependent is
recorded, so rerunning a configuration reproduces its outputs byte for byte.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from .config import MODES, STAGES, ConfigError, RunConfig, load_config
from .detailedplace import DetailedConfig, run_detailed
from .evalkit import StrikeModel, evaluate, reduction_svg
from .globalplace import GlobalConfig, run_global, wirelength_placement
from .netlist import NetlistError, load_library, read_netlist
from .placement import Die, InfeasiblePlacementError, read_placement, write_placement
from .sermodel import SerModel
from .variation import (VariationError, VariationParams, build_rmap, classify_regions,
                        filter_blocks, gen_map, read_map, read_rmap, write_map, write_rmap)

log = logging.getLogger("seaplace")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4
LOCK_NAME = ".seaplace.lock"


def demo_netlist_path() -> Path:
    return Path(str(resources.files("seaplace") / "data" / "demo_netlist.json"))


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=MODES, help="sensitive-cell selection rule")
    common.add_argument("-v", "--verbose", action="store_true")

    design = argparse.ArgumentParser(add_help=False)
    design.add_argument("--netlist", help="netlist JSON ('demo' for the bundled circuit)")
    design.add_argument("--library", help="gate library JSON")
    design.add_argument("--map", help="threshold-voltage map file")
    design.add_argument("--rmap", help="region map file (default: derived from --map)")
    design.add_argument("--placement", help="input placement CSV")
    design.add_argument("--trials", type=int, help="Monte Carlo strikes for evaluation")

    ap = argparse.ArgumentParser(prog="seaplace", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    g = sub.add_parser("genmap", parents=[common], help="generate a variation map")
    g.add_argument("--grid-n", dest="grid_n", type=int, help="map resolution N")
    p = sub.add_parser("place", parents=[common, design], help="run placement stages")
    p.add_argument("--stage", choices=STAGES)
    sub.add_parser("eval", parents=[common, design], help="evaluate a placement")
    pl = sub.add_parser("plot", parents=[common], help="bar chart of a report's reductions")
    pl.add_argument("--report", help="report JSON holding reduction_percent")
    return ap


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("seed", "out", "mode", "netlist", "library", "map", "rmap", "placement", "trials",
            "stage", "grid_n", "report")
    over = {k: getattr(args, k, None) for k in keys}
    if over.get("netlist") == "demo":
        over["netlist"] = str(demo_netlist_path())
    return over


def _outdir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("an output directory is required (--out)")
    out = Path(cfg.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


# -- subcommands ----------------------------------------------------------

def cmd_genmap(cfg: RunConfig, out: Path) -> int:
    meta = cfg.provenance("genmap")
    params = VariationParams(mu=cfg.mu, sigma=cfg.sigma, phi=cfg.phi, grid_n=cfg.grid_n,
                             seed=cfg.seed)
    grid = gen_map(params)
    rmap = filter_blocks(build_rmap(classify_regions(grid)), cfg.min_area, cfg.bridge_area)
    write_map(out / "map.csv", grid, meta)
    write_rmap(out / "rmap.csv", rmap, meta)
    return EXIT_OK


def _load_design(cfg: RunConfig):
    if cfg.netlist is None:
        raise ConfigError("a netlist is required (--netlist)")
    if cfg.map is None:
        raise ConfigError("a variation map is required (--map)")
    lib = load_library(cfg.library) if cfg.library else None
    n = read_netlist(cfg.netlist, lib)
    grid = read_map(cfg.map)
    rmap = read_rmap(cfg.rmap) if cfg.rmap else build_rmap(classify_regions(grid))
    env = SerModel(n, w0=cfg.w0, jfp_trials=cfg.jfp_trials, seed=cfg.seed)
    die = Die.for_netlist(n, cfg.utilization)
    return n, grid, rmap, env, die


def _global_config(cfg: RunConfig) -> GlobalConfig:
    return GlobalConfig(K=cfg.K, penalty_iters=cfg.penalty_iters, min_area=cfg.min_area,
                        bridge_area=cfg.bridge_area, seed=cfg.seed, penalty_scale=cfg.penalty_scale,
                        penalty_start_level=cfg.penalty_start_level)


def _detailed_config(cfg: RunConfig) -> DetailedConfig:
    return DetailedConfig(dser_max=cfg.dser_max, dwl_max=cfg.dwl_max,
                          masking_distance_x=cfg.masking_distance_x, oval_ax=cfg.oval_ax,
                          oval_ay=cfg.oval_ay, max_iters=cfg.max_iters, retry_limit=cfg.retry_limit,
                          jfp_trials=cfg.jfp_trials, seed=cfg.seed, mcks_mode=cfg.mcks_mode)


def cmd_place(cfg: RunConfig, out: Path) -> int:
    if cfg.stage == "detailed" and cfg.placement is None:
        raise ConfigError("stage 'detailed' needs an input placement (--placement)")
    n, grid, rmap, env, die = _load_design(cfg)
    meta = cfg.provenance("place")
    report = env.circuit_ser(None, cfg.mode)
    sm = StrikeModel(cfg.trials, cfg.oval_ax, cfg.oval_ay, cfg.seed)

    if cfg.stage == "detailed":
        before = read_placement(cfg.placement, n, die)
        if not before.is_legal():
            raise ConfigError("input placement is not legal")
        current = before
    else:
        log.info("wirelength-only baseline")
        before = wirelength_placement(n, report, rmap, die, _global_config(cfg)).placement
        log.info("global placement")
        current = run_global(n, report, rmap, die, _global_config(cfg)).placement
        write_placement(out / "global_placement.csv", current, meta)

    if cfg.stage in ("detailed", "both"):
        log.info("detailed placement")
        res = run_detailed(n, current, env, grid, report.sensitive, _detailed_config(cfg))
        current = res.placement
        _write(out / "moves.csv", "# " + json.dumps(meta, sort_keys=True) + "\n" + res.log_csv())

    write_placement(out / "placement.csv", current, meta)
    r0 = evaluate(n, before, env, sm, grid, dict(meta, placement="before"))
    r1 = evaluate(n, current, env, sm, grid, dict(meta, placement="after"))
    _write(out / "report_before.json", r0.to_json())
    _write(out / "report.json", r1.to_json(baseline=r0))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, out: Path) -> int:
    if cfg.placement is None:
        raise ConfigError("eval needs a placement (--placement)")
    n, grid, _, env, die = _load_design(cfg)
    p = read_placement(cfg.placement, n, die)
    if not p.is_legal():
        raise ConfigError("placement is not legal")
    sm = StrikeModel(cfg.trials, cfg.oval_ax, cfg.oval_ay, cfg.seed)
    r = evaluate(n, p, env, sm, grid, cfg.provenance("eval"))
    _write(out / "eval.json", r.to_json())
    return EXIT_OK


def cmd_plot(cfg: RunConfig, out: Path) -> int:
    if cfg.report is None:
        raise ConfigError("plot needs a report (--report)")
    doc = json.loads(Path(cfg.report).read_text())
    if "reduction_percent" not in doc:
        raise ConfigError("report has no baseline comparison to plot")
    meta = doc.get("provenance", {})
    svg = reduction_svg(doc["reduction_percent"])
    comment = f"<!-- config_hash={meta.get('config_hash')} seed={meta.get('seed')} -->\n"
    _write(out / "reduction.svg", comment + svg)
    return EXIT_OK


COMMANDS = {"genmap": cmd_genmap, "place": cmd_place, "eval": cmd_eval, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        out = _outdir(cfg)
        with FileLock(str(out / LOCK_NAME), timeout=0):
            return COMMANDS[args.command](cfg, out)
    except Timeout:
        log.error("another run holds the lock on %s", cfg.out)
        return EXIT_CONFIG
    except (ConfigError, NetlistError, OSError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except InfeasiblePlacementError as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except (VariationError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
