"""cell-trainer command line: serve the wire protocol or run one-shot jobs."""

from __future__ import annotations

import argparse
import json
import sys

from .build import build_model, parameter_count
from .config import TrainerConfig, load_config
from .descriptor import load_descriptor
from .protocol import serve
from .training import run_request


def _config_from_args(args) -> TrainerConfig:
    config = load_config(args.config) if args.config else TrainerConfig()
    for name in ("dataset", "data_dir", "mode", "subset_fraction", "device"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(config, name, value)
    return config


def cmd_serve(args) -> int:
    return serve(_config_from_args(args))


def cmd_eval(args) -> int:
    descriptor = load_descriptor(args.descriptor)
    result = run_request(
        descriptor, _config_from_args(args),
        epochs_to_train=args.epochs, cumulative_epochs=args.epochs,
        weight_dir=args.weight_dir, seed=args.seed,
    )
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    descriptor = load_descriptor(args.descriptor)
    model = build_model(descriptor)
    print(json.dumps({
        "declared_params": descriptor.total_params,
        "built_params": parameter_count(model),
        "cells": len(descriptor.cells),
        "profile": descriptor.profile,
        "classes": descriptor.classes,
    }, sort_keys=True))
    return 0 if parameter_count(model) == descriptor.total_params else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cell-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="trainer YAML config")
        p.add_argument("--dataset", default=None, choices=("cifar10", "cifar100", "synthetic"))
        p.add_argument("--data-dir", default=None)
        p.add_argument("--mode", default=None, choices=("search", "full"))
        p.add_argument("--subset-fraction", type=float, default=None)
        p.add_argument("--device", default=None)

    p = sub.add_parser("serve", help="speak the eval protocol on stdio")
    common(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="train and score one descriptor")
    p.add_argument("descriptor")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--weight-dir", default="weights")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="build a descriptor and report parameter counts")
    p.add_argument("descriptor")
    common(p)
    p.set_defaults(func=cmd_inspect)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
