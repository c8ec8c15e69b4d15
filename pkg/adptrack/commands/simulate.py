"""`adptrack simulate`: run one closed loop (or a sweep) and write its artifacts."""
from __future__ import annotations

import logging
import pathlib
from concurrent.futures import ProcessPoolExecutor

import yaml

from adptrack import log_buffer, serialize
from adptrack.commands import (EXIT_DIVERGED, EXIT_OK, add_config_arguments,
                               load_raw_with_overrides)
from adptrack.config import ScenarioConfig, parse_dict, set_by_path, write_effective_config
from adptrack.errors import ConfigError
from adptrack.scenarios import build_scenario
from adptrack.sim import Simulation, metrics

log = logging.getLogger("adptrack.commands.simulate")


def register(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="Run a closed-loop simulation.")
    add_config_arguments(p)
    p.add_argument("--out", help="Output directory (default: config 'out' or out/<scenario>).")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...",
                   help="Run once per value of a dotted config field, each into its own subdirectory.")
    p.add_argument("--jobs", type=int, default=1, help="Parallel runs for --sweep.")
    p.set_defaults(handler=run)


def output_dir(cfg: ScenarioConfig, out: str | None) -> pathlib.Path:
    return pathlib.Path(out or cfg.out or f"out/{cfg.scenario}")


def simulate_once(raw: dict, out_dir: str) -> tuple[int, dict]:
    """Validate raw, run it, write every artifact into out_dir; returns (exit code, metrics)."""
    log_buffer.install_log_handler()
    log_buffer.clear()
    cfg = parse_dict(raw)
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out / "effective_config.json")

    scenario = build_scenario(cfg)
    sim = Simulation(scenario, cfg)
    trace = sim.run()
    serialize.write_trace(trace, out / "trace.csv")
    serialize.write_stack(sim.stack, out / "stack.csv")

    summary = {"scenario": scenario.name, "seed": cfg.sim.seed}
    if len(trace):
        summary.update(metrics(trace, true_theta=scenario.true_theta, W_ideal=sim.W_ideal,
                               threshold=cfg.identifier.stack.threshold))
    else:
        summary.update({"rows": 0, "diverged": trace.diverged, "divergence": trace.divergence})
    summary["stack_size"] = len(sim.stack)
    summary["stack_replacements"] = sim.stack.replacements
    if scenario.true_theta is not None:
        summary["derivative_error_max"] = sim.derivative_error_max()
    summary["notices"] = sim.notices.to_list()
    serialize.write_json(summary, out / "metrics.json")
    log_buffer.write_run_log(out / "run.log")
    return (EXIT_DIVERGED if trace.diverged else EXIT_OK), summary


def _sweep_values(text: str) -> tuple[str, list]:
    """'adp.gains.nu=0.05,0.1' -> ('adp.gains.nu', [0.05, 0.1])."""
    key, sep, values = text.partition("=")
    if not sep or not key:
        raise ConfigError("--sweep", f"expected key=v1,v2,..., got {text!r}")
    try:
        parsed = [yaml.safe_load(v) for v in values.split(",") if v.strip()]
    except yaml.YAMLError:
        raise ConfigError("--sweep", f"cannot parse values in {text!r}")
    if not parsed:
        raise ConfigError("--sweep", "needs at least one value")
    return key.strip(), parsed


def run(args) -> int:
    raw = load_raw_with_overrides(args.config, args.set)
    base = parse_dict(raw)
    out = output_dir(base, args.out)

    if not args.sweep:
        code, summary = simulate_once(raw, str(out))
        _print_summary(out, summary)
        return code

    key, values = _sweep_values(args.sweep)
    leaf = key.split(".")[-1]
    jobs = []
    for value in values:
        variant = set_by_path(raw, key, value)
        parse_dict(variant)
        jobs.append((variant, str(out / f"{leaf}={value}")))
    log.info("Sweeping %s over %d values with %d worker(s)", key, len(jobs), args.jobs)

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(simulate_once, *zip(*jobs)))
    else:
        results = [simulate_once(variant, path) for variant, path in jobs]

    for (_, path), (_, summary) in zip(jobs, results):
        _print_summary(pathlib.Path(path), summary)
    return max(code for code, _ in results)


def _print_summary(out: pathlib.Path, summary: dict) -> None:
    status = "DIVERGED" if summary.get("diverged") else "ok"
    rms = summary.get("tail_rms_e")
    rms_text = f"{rms:.6g}" if rms is not None else "-"
    print(f"{out}: {status} rows={summary.get('rows', 0)} tail_rms_e={rms_text}")
