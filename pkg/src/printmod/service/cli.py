"""Command-line entry points for the moderation pipeline."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..classifier import save_model
from ..simulation import standard_run
from .api import create_app
from .system import ModerationSystem


def _data_dir_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument(
        "--data-dir",
        default=os.environ.get("MOD_DATA_DIR", "mod_data"),
        help="state directory (env MOD_DATA_DIR, default ./mod_data)",
    )
    return parent


def _system(args: argparse.Namespace) -> ModerationSystem:
    return ModerationSystem(data_dir=Path(args.data_dir))


def cmd_ingest(args: argparse.Namespace) -> int:
    system = _system(args)
    count = system.ingest_corpus(Path(args.corpus))
    print(f"ingested {count} documents into {args.data_dir}")
    return 0


def cmd_seed_train(args: argparse.Namespace) -> int:
    system = _system(args)
    model = system.seed_train(args.pos, args.neg, rng_seed=args.seed, epochs=args.epochs)
    snapshot = Path(args.data_dir) / "model.json"
    save_model(model, snapshot)
    print(f"trained model version {model.version} on {args.pos}+{args.neg} things; snapshot at {snapshot}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    system = _system(args)
    moderators = Path(args.data_dir) / "moderators.json"
    if moderators.exists():
        count = system.load_moderators_file(moderators)
        print(f"registered {count} moderators from {moderators}")
    uvicorn.run(create_app(system), host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    # The simulation is a self-contained experiment on a fresh in-memory
    # system; it never touches the data directory's stores.
    out_dir = Path(args.out) if args.out else Path(args.data_dir) / "sim"
    system, metrics = standard_run(
        rounds=args.rounds,
        rng_seed=args.seed,
        n_pos=args.pos,
        n_neg=args.neg,
        population=args.population,
        out_dir=out_dir,
    )
    print(
        json.dumps(
            {
                "rounds": metrics["rounds"],
                "accuracy": metrics["accuracy"],
                "disagreements_total": metrics["disagreements_total"],
                "final_thresholds": metrics["final_thresholds"],
                "audit_events": len(system.audit),
                "out_dir": str(out_dir),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def cmd_export_audit(args: argparse.Namespace) -> int:
    system = _system(args)
    count = system.export_audit(Path(args.out))
    print(f"exported {count} audit events to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parent = _data_dir_parent()
    parser = argparse.ArgumentParser(prog="printmod", description="shared-3D-print moderation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[parent], help="bulk-load a JSONL corpus")
    p.add_argument("--corpus", required=True, help="path to corpus .jsonl")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("seed-train", parents=[parent], help="train the initial model from platform labels")
    p.add_argument("--pos", type=int, default=1077)
    p.add_argument("--neg", type=int, default=1077)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=5)
    p.set_defaults(func=cmd_seed_train)

    p = sub.add_parser("serve", parents=[parent], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", parents=[parent], help="run a deterministic end-to-end simulation")
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pos", type=int, default=40)
    p.add_argument("--neg", type=int, default=40)
    p.add_argument("--population", choices=("mixed", "homogeneous"), default="mixed")
    p.add_argument("--out", default=None, help="metrics directory (default <data-dir>/sim)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-audit", parents=[parent], help="dump the audit log as JSON-lines")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_audit)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
