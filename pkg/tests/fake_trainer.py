"""Scriptable stand-in for a trainer process, for exercising the wire protocol.

Behavior comes from argv[1]:
    ok          accuracy rises with cumulative epochs
    error       replies with an error message
    out_of_range  accuracy 1.2 (protocol violation)
    malformed   non-JSON output
    wrong_type  an unexpected message type
    crash       exits immediately
    silent      reads the request then closes stdout
"""

import json
import sys


def main():
    behavior = sys.argv[1] if len(sys.argv) > 1 else "ok"
    if behavior == "crash":
        return 3
    for line in sys.stdin:
        req = json.loads(line)
        cid = req.get("candidate_id")
        if behavior == "ok":
            acc = min(0.35 + 0.05 * req.get("cumulative_epochs", 0), 0.95)
            reply = {
                "type": "eval_result", "candidate_id": cid, "accuracy": acc,
                "updated_keys": {k: acc for k in ("blk:fc:64x10",)}, "wall_time": 0.01,
            }
        elif behavior == "error":
            reply = {"type": "error", "candidate_id": cid, "message": "dataset missing"}
        elif behavior == "out_of_range":
            reply = {"type": "eval_result", "candidate_id": cid, "accuracy": 1.2, "updated_keys": {}}
        elif behavior == "wrong_type":
            reply = {"type": "banana", "candidate_id": cid}
        elif behavior == "malformed":
            print("this is not json", flush=True)
            continue
        elif behavior == "silent":
            return 0
        else:
            raise SystemExit(f"unknown behavior {behavior}")
        print(json.dumps(reply), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
