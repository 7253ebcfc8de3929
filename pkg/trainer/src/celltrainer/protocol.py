"""The stdio wire protocol: read eval_request lines, reply eval_result or error.

One request in flight per process. Every failure becomes an error message on
stdout, never a silent exit; logs go to stderr so stdout stays clean JSON.
"""

from __future__ import annotations

import json
import sys
import traceback

from .config import TrainerConfig
from .data import dataset_available
from .descriptor import DescriptorError, parse_descriptor
from .training import run_request


def handle_request(message: dict, config: TrainerConfig) -> dict:
    cid = message.get("candidate_id")
    if message.get("type") != "eval_request":
        return {"type": "error", "candidate_id": cid,
                "message": f"unsupported message type {message.get('type')!r}"}
    try:
        descriptor = parse_descriptor(message["descriptor"])
    except (DescriptorError, KeyError, TypeError) as exc:
        return {"type": "error", "candidate_id": cid, "message": f"bad descriptor: {exc}"}
    if not dataset_available(config):
        return {"type": "error", "candidate_id": cid,
                "message": f"dataset {config.dataset} not found under {config.data_dir}"}
    try:
        result = run_request(
            descriptor, config,
            epochs_to_train=int(message.get("epochs_to_train", 1)),
            cumulative_epochs=int(message.get("cumulative_epochs", 1)),
            weight_dir=message.get("weight_dir", "weights"),
            seed=int(message.get("seed", 0)),
        )
    except torch_oom_errors() as exc:
        return {"type": "error", "candidate_id": cid, "message": f"out of memory: {exc}"}
    except Exception as exc:  # noqa: BLE001 - protocol boundary
        traceback.print_exc(file=sys.stderr)
        return {"type": "error", "candidate_id": cid, "message": f"{type(exc).__name__}: {exc}"}
    return {
        "type": "eval_result",
        "candidate_id": cid,
        "accuracy": result["accuracy"],
        "updated_keys": result["updated_keys"],
        "wall_time": result["wall_time"],
    }


def torch_oom_errors():
    import torch

    return (torch.cuda.OutOfMemoryError, MemoryError) if hasattr(torch.cuda, "OutOfMemoryError") else (MemoryError,)


def serve(config: TrainerConfig, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = {"type": "error", "candidate_id": None, "message": f"unparseable request: {exc}"}
        else:
            reply = handle_request(message, config)
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
    return 0
