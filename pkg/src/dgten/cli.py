"""Command-line entry point wiring ingestion, attacks, training, and exports."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .adversarial import AttackKind, AttackSpec, run_attack
from .errors import ConfigError, DgtenError
from .gradcheck_fixtures import FIXTURES, GRADCHECK_TOLERANCE, run_fixture
from .graphs import discretize, load_edge_list, load_sequence, num_nodes, save_sequence
from .model import TrustModel
from .numerics import derive_seed
from .training import EvalReport, TrainConfig, evaluate, round_t_ends, train
from .uncertainty import fingerprints, watchlist, watchlist_total

MODEL_FORMAT_VERSION = 1


def _config_field_types() -> dict[str, type]:
    return {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(name: str, raw: str):
    target = {
        "learning_rate": float, "weight_decay": float, "tau_cos": float,
        "dropout": float, "sigma_min": float, "epsilon": float,
        "epochs": int, "layers": int, "heads": int, "cheb_order": int,
        "d_prime": int, "d_head": int, "ode_steps": int, "delta": int,
        "t_initial": int, "seed": int,
        "raeca": bool, "dtype": str,
    }
    if name not in target:
        raise ConfigError(f"unknown config key {name!r}")
    kind = target[name]
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {name!r} expects a boolean, got {raw!r}")
    return kind(raw)


def load_train_config(path: str | None, overrides: dict | None = None) -> TrainConfig:
    """Config from a JSON or key=value file, then explicit overrides."""
    values: dict = {}
    if path:
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            loaded = json.loads(text)
            known = set(_config_field_types())
            values = {k: v for k, v in loaded.items() if k in known}
            unknown = set(loaded) - known - {"seeds_used"}
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        else:
            for lineno, line in enumerate(text.splitlines(), start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"config line {lineno} is not key=value: {line!r}")
                key, _, raw = line.partition("=")
                values[key.strip()] = _coerce(key.strip(), raw.strip())
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig(**values)
    config.validate()
    return config


def save_model(model: TrustModel, config: TrainConfig, path: str | Path) -> None:
    torch.save(
        {
            "format": "dgten-model",
            "version": MODEL_FORMAT_VERSION,
            "config": dataclasses.asdict(config),
            "num_nodes": model.num_nodes,
            "horizon": model.horizon,
            "seed": model.seed,
            "params": model.registry.state_dict(),
        },
        path,
    )


def load_model(path: str | Path) -> tuple[TrustModel, TrainConfig]:
    payload = torch.load(path, weights_only=True)
    if payload.get("format") != "dgten-model":
        raise ConfigError(f"{path} is not a model file")
    config = TrainConfig(**payload["config"])
    model = TrustModel(payload["num_nodes"], payload["horizon"], config, payload["seed"])
    model.registry.load_state_dict(payload["params"])
    return model, config


def _parse_seeds(text: str | None, config: TrainConfig) -> tuple[int, ...]:
    if not text:
        return (config.seed,)
    return tuple(int(s) for s in text.split(",") if s.strip())


def _max_workers() -> int:
    raw = os.environ.get("DGTEN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_ingest(args) -> int:
    records = load_edge_list(args.input, has_header=args.header)
    distrust = sum(1 for r in records if r.rating < 0)
    sequence = discretize(records, args.snapshots)
    save_sequence(sequence, args.out)
    print(
        f"{num_nodes(records)} nodes / {len(records)} edges / {distrust} distrust edges "
        f"-> {sequence.num_snapshots} snapshots ({args.out})"
    )
    return 0


def cmd_attack(args) -> int:
    sequence = load_sequence(args.infile)
    spec = AttackSpec(
        kind=AttackKind(args.kind),
        victim_fraction=args.fraction,
        seed=args.seed,
        phase_origin=args.phase_origin,
        window_end=args.window_end,
    )
    result = run_attack(sequence, spec)
    save_sequence(result.sequence, args.out)
    sidecar = Path(str(args.out) + ".provenance.json")
    sidecar.write_text(json.dumps(result.provenance(), indent=2), encoding="utf-8")
    print(f"{len(result.injected)} edges injected -> {args.out} (+{sidecar.name})")
    return 0


def cmd_train(args) -> int:
    sequence = load_sequence(args.infile)
    config = load_train_config(args.config, {"seed": args.seed})
    seeds = _parse_seeds(args.seeds, config)
    report = evaluate(sequence, args.task, config, seeds=seeds, max_workers=_max_workers())
    report.save(args.out + ".report.json")
    final_t_end = round_t_ends(args.task, sequence.num_snapshots, config.t_initial, config.delta)[-1]
    result = train(sequence, final_t_end, config, seed=derive_seed(seeds[0], "round", final_t_end))
    save_model(result.model, config, args.out + ".model.pt")
    _print_aggregate(report)
    print(f"report -> {args.out}.report.json / model -> {args.out}.model.pt")
    return 0


def cmd_evaluate(args) -> int:
    sequence = load_sequence(args.infile)
    if args.model:
        model, config = load_model(args.model)
        if args.config:
            config = load_train_config(args.config, {"seed": args.seed})
        report = evaluate(sequence, args.task, config, frozen=model)
    else:
        config = load_train_config(args.config, {"seed": args.seed})
        seeds = _parse_seeds(args.seeds, config)
        report = evaluate(sequence, args.task, config, seeds=seeds, max_workers=_max_workers())
    report.save(args.report)
    _print_aggregate(report)
    print(f"report -> {args.report}")
    return 0


def _print_aggregate(report: EvalReport) -> None:
    print(f"task {report.task}: {len(report.rounds)} rounds, {len(report.skipped)} skipped")
    for name, stats in report.aggregate.items():
        if stats["mean"] is None:
            print(f"  {name:10s} n/a")
        else:
            print(f"  {name:10s} {stats['mean']:.4f} +/- {stats['sd']:.4f}")


def cmd_gradcheck(args) -> int:
    names = list(FIXTURES) if args.fixture == "all" else [args.fixture]
    failed = False
    for name in names:
        error = run_fixture(name)
        status = "ok" if error <= GRADCHECK_TOLERANCE else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"{name:12s} max relative error {error:.3e}  [{status}]")
    return 1 if failed else 0


def cmd_export_uncertainty(args) -> int:
    sequence = load_sequence(args.infile)
    model, _config = load_model(args.model)
    horizon = min(model.horizon, sequence.num_snapshots)
    with torch.no_grad():
        result = model.forward(sequence.snapshots[:horizon], training=False)
    sigma_stack = result.sigma_stack.numpy()

    active = np.zeros((sequence.global_node_count, horizon), dtype=bool)
    for slot in range(horizon):
        active[sequence.snapshots[slot].active_nodes(), slot] = True

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    table = fingerprints(sigma_stack, active)
    table.to_csv(outdir / "fingerprints.csv")
    listing = watchlist(sigma_stack, args.threshold, active)
    (outdir / "watchlist.json").write_text(
        json.dumps(
            {
                "threshold": args.threshold,
                "per_snapshot": {str(k): v for k, v in listing.items()},
                "total_flagged_appearances": watchlist_total(listing),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    _plot_uncertainty(sigma_stack, active, args.threshold, table, outdir)
    print(
        f"{table.num_rows} fingerprint rows, {watchlist_total(listing)} flagged appearances "
        f"-> {outdir}"
    )
    return 0


def _plot_uncertainty(sigma_stack, active, threshold, table, outdir: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = sigma_stack.mean(axis=2)[active]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(means, bins=40, color="steelblue", edgecolor="black")
    ax.axvline(threshold, color="red", linestyle="--", label=f"threshold {threshold}")
    ax.set_xlabel("mean node uncertainty")
    ax.set_ylabel("appearances")
    ax.legend()
    fig.tight_layout()
    fig.savefig(outdir / "uncertainty_histogram.png", dpi=120)
    plt.close(fig)

    top = table.top_nodes(20)
    if top:
        rows = []
        for node in top:
            member = table.node_ids == node
            rows.append(table.sigma[member].mean(axis=0))
        fig, ax = plt.subplots(figsize=(8, 5))
        im = ax.imshow(np.array(rows), aspect="auto", cmap="viridis")
        ax.set_yticks(range(len(top)))
        ax.set_yticklabels([str(n) for n in top])
        ax.set_xlabel("feature")
        ax.set_ylabel("node id")
        fig.colorbar(im, ax=ax, label="sigma")
        fig.tight_layout()
        fig.savefig(outdir / "uncertainty_fingerprints.png", dpi=120)
        plt.close(fig)


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = EvalReport.load(args.report)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    seeds = sorted({row["seed"] for row in report.rounds})
    metrics = ("mcc", "auc", "ba", "ap", "f1_micro", "f1_macro")
    for name in metrics:
        fig, ax = plt.subplots(figsize=(7, 4))
        for seed in seeds:
            rows = sorted(
                (r for r in report.rounds if r["seed"] == seed), key=lambda r: r["t_end"]
            )
            ax.plot(
                [r["t_end"] for r in rows],
                [r[name] for r in rows],
                marker="o",
                label=f"seed {seed}",
            )
        ax.set_xlabel("last trained snapshot")
        ax.set_ylabel(name)
        ax.set_title(f"task {report.task}: {name} per round")
        if len(seeds) > 1:
            ax.legend()
        fig.tight_layout()
        fig.savefig(outdir / f"{name}.png", dpi=120)
        plt.close(fig)
    print(f"{len(metrics)} plots -> {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgten",
        description="Uncertainty-aware dynamic trust evaluation on signed trust graphs",
    )
    parser.add_argument("--version", action="version", version=f"dgten {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a SOURCE,TARGET,RATING,TIME csv into snapshots")
    p.add_argument("--input", required=True)
    p.add_argument("--snapshots", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--header", action="store_true", help="skip a header row")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("attack", help="inject an adversarial edge attack")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--kind", choices=[k.value for k in AttackKind], required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phase-origin", type=int, default=0)
    p.add_argument("--window-end", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("train", help="run the task protocol and save model + report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--task", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="expanding-window evaluation report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--task", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--model", default=None, help="frozen model replay instead of retraining")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--fixture", default="all", choices=["all"] + list(FIXTURES))
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-uncertainty", help="sigma fingerprints, watchlist, plots")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_uncertainty)

    p = sub.add_parser("plot", help="render static metric plots from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DgtenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
