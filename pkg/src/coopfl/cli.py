"""Command-line front end: single runs, attacker-count sweeps, staged seesaws.

Exit codes: 0 success, 2 configuration problems (bad file, unknown key),
1 runtime failures. The COOPFL_WORKERS environment variable overrides the
configured worker count.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, apply_overrides, load_config
from .engine import run_experiment


def _worker_override() -> int | None:
    raw = os.environ.get("COOPFL_WORKERS")
    if raw is None:
        return None
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"COOPFL_WORKERS must be an integer, got {raw!r}")
    if workers < 1:
        raise ConfigError(f"COOPFL_WORKERS must be >= 1, got {workers}")
    return workers


def _load(args) -> tuple[ScenarioConfig, list[str]]:
    config, defaulted = load_config(args.config)
    config = apply_overrides(
        config,
        strategy=getattr(args, "strategy", None),
        attack_kind=getattr(args, "attack_kind", None),
        attackers=getattr(args, "attackers_count", None),
        gamma=getattr(args, "gamma", None),
        seed=getattr(args, "seed", None),
        out_dir=getattr(args, "out", None),
        workers=_worker_override(),
    )
    return config, defaulted


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_run(args) -> int:
    config, defaulted = _load(args)
    out_dir = Path(config.run.out_dir)
    result = run_experiment(config, out_dir=out_dir, defaulted_keys=defaulted)
    print(f"wrote {out_dir / 'metrics.csv'} ({len(result.records)} rounds)")
    print(
        "converged: throughput_bps="
        + _fmt(result.converged["throughput_bps"])
        + " energy_efficiency=" + _fmt(result.converged["energy_efficiency"])
        + " mean_benign_reward=" + _fmt(result.converged["mean_benign_reward"])
    )
    return 0


def _parse_attacker_range(raw: str) -> int:
    if ".." in raw:
        lo, hi = raw.split("..", 1)
        if lo.strip() != "0":
            raise ConfigError(f"attacker sweeps start at 0, got {raw!r}")
        raw = hi
    try:
        top = int(raw)
    except ValueError:
        raise ConfigError(f"--attackers must be an int or 0..N range, got {raw!r}")
    if top < 0:
        raise ConfigError(f"attacker count must be >= 0, got {top}")
    return top


def cmd_sweep(args) -> int:
    config, defaulted = _load(args)
    top = _parse_attacker_range(args.attackers)
    if top >= config.env.n_sbs:
        raise ConfigError(
            f"sweep needs attackers < clients ({config.env.n_sbs}), got up to {top}"
        )
    replicas = args.replicas
    if replicas < 1:
        raise ConfigError(f"--replicas must be >= 1, got {replicas}")
    choice = config.strategy.kind
    if choice == "fedavg":
        choice = "meme_distillation"
    out_root = Path(config.run.out_dir)
    base_seed = config.run.seed

    rows = []
    for framework in ("fedavg", choice):
        for count in range(top + 1):
            tput, eff, reward = [], [], []
            for rep in range(replicas):
                name = f"{framework}_a{count}_r{rep}"
                cfg = apply_overrides(
                    config,
                    strategy=framework,
                    attackers=count,
                    seed=base_seed + rep,
                    out_dir=str(out_root / name),
                )
                result = run_experiment(cfg, out_dir=out_root / name, defaulted_keys=defaulted)
                tput.append(result.converged["throughput_bps"])
                eff.append(result.converged["energy_efficiency"])
                reward.append(result.converged["mean_benign_reward"])
            rows.append(
                (
                    framework,
                    count,
                    float(np.mean(tput)),
                    float(np.std(tput)),
                    float(np.mean(eff)),
                    float(np.std(eff)),
                    float(np.mean(reward)),
                    float(np.std(reward)),
                )
            )
    out_root.mkdir(parents=True, exist_ok=True)
    lines = [
        "framework,attackers,throughput_mean,throughput_std,"
        "energy_efficiency_mean,energy_efficiency_std,reward_mean,reward_std"
    ]
    for row in rows:
        lines.append(
            f"{row[0]},{row[1]}," + ",".join(f"{v:.12g}" for v in row[2:])
        )
    summary = out_root / "sweep_summary.csv"
    summary.write_text("\n".join(lines) + "\n", newline="\n")
    print(f"wrote {summary} ({len(rows)} rows)")
    return 0


def cmd_seesaw(args) -> int:
    config, defaulted = _load(args)
    try:
        schedule = tuple(int(x) for x in args.schedule.split(","))
    except ValueError:
        raise ConfigError(f"--schedule must be comma-separated ints, got {args.schedule!r}")
    if not schedule:
        raise ConfigError("--schedule must not be empty")
    if any(k >= config.env.n_sbs for k in schedule):
        raise ConfigError(
            f"schedule counts must be < clients ({config.env.n_sbs}), got {schedule}"
        )
    attack_kind = config.attack.kind if config.attack.kind != "none" else "model_poison"
    per_stage = config.attack.rounds_per_stage
    # warm the system up to steady state before the first stage begins
    warmup = config.attack.activation_round or per_stage
    if config.attack.activation_round != warmup:
        import dataclasses

        config = dataclasses.replace(
            config, attack=dataclasses.replace(config.attack, activation_round=warmup)
        )
    rounds = warmup + len(schedule) * per_stage
    config = apply_overrides(
        config, attack_kind=attack_kind, schedule=schedule, rounds=rounds
    )
    out_dir = Path(config.run.out_dir)
    result = run_experiment(config, out_dir=out_dir, defaulted_keys=defaulted)

    lines = ["stage,attackers,mean_risk_level,mean_cooperation_level"]
    for stage, count in enumerate(schedule):
        start = warmup + stage * per_stage
        chunk = result.records[start : start + per_stage]
        risk = float(np.mean([r.risk_level for r in chunk]))
        level = float(np.mean([r.cooperation_level for r in chunk]))
        lines.append(f"{stage},{count},{risk:.12g},{level:.12g}")
    stages_csv = out_dir / "seesaw_stages.csv"
    stages_csv.write_text("\n".join(lines) + "\n", newline="\n")
    print(f"wrote {out_dir / 'metrics.csv'} and {stages_csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopfl",
        description="Tunable-cooperation FL experiments on a cell sleep control testbed",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    sweep_p = sub.add_parser("sweep", help="sweep attacker counts for FedAvg vs choice-based")
    seesaw_p = sub.add_parser("seesaw", help="staged attacker schedule (risk/cooperation)")

    for p in (run_p, sweep_p, seesaw_p):
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.out_dir")

    run_p.add_argument("--strategy", default=None, help="override strategy.kind")
    run_p.add_argument("--attack-kind", dest="attack_kind", default=None)
    run_p.add_argument(
        "--attackers", dest="attackers_count", type=int, default=None,
        help="override attack.attackers",
    )
    run_p.add_argument("--gamma", type=float, default=None, help="model-poison intensity")
    run_p.set_defaults(func=cmd_run)

    sweep_p.add_argument("--attackers", required=True, help="attacker range, e.g. 0..4")
    sweep_p.add_argument("--replicas", type=int, default=1, help="seeds per cell")
    sweep_p.add_argument("--attack-kind", dest="attack_kind", default=None)
    sweep_p.set_defaults(func=cmd_sweep)

    seesaw_p.add_argument("--schedule", required=True, help="attacker counts, e.g. 4,3,2,1,0")
    seesaw_p.set_defaults(func=cmd_seesaw)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: surface with context, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
