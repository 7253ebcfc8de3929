"""Evaluator contract, the deterministic surrogate, the trainer bridge,
weight-store bookkeeping, and the relative-improvement statistic.

The surrogate stands in for GPU training at desk scale: each candidate gets
a stable base score hashed from its descriptor (plus a small bonus for
using a diverse set of convolution kinds), approached along a saturating
epoch curve. Same descriptor, seed, and epoch count always give the same
number, which is what the determinism and resume guarantees lean on.
"""

from __future__ import annotations

import hashlib
import json
import math
import subprocess
from dataclasses import dataclass, field

from .compiler import ModelDescriptor
from .persistence import descriptor_to_dict
from .search_space import _CONV_NAME_SET

SURROGATE_EPOCH_SCALE = 3.0  # ~96% of base by epoch 10


class EvaluationFailure(Exception):
    """The evaluator could not score a candidate; the search assigns fitness 0."""


class ProtocolError(Exception):
    """The trainer replied with something outside the wire contract."""


@dataclass(frozen=True)
class EvaluationRequest:
    descriptor: ModelDescriptor
    candidate_id: int
    epochs_to_train: int          # epochs to run now
    cumulative_epochs: int        # total epochs through this request
    weight_keys: tuple[str, ...]

    def __post_init__(self):
        if self.epochs_to_train < 1:
            raise ValueError("epochs_to_train must be >= 1")


@dataclass(frozen=True)
class FitnessRecord:
    candidate_id: int
    fitness: float
    epochs: int
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fitness <= 1.0:
            raise ValueError(f"fitness {self.fitness} outside [0, 1]")


def descriptor_weight_keys(descriptor: ModelDescriptor) -> tuple[str, ...]:
    """Every weight-store key the descriptor's blocks resolve against."""
    keys = {blk.weight_key for blk in descriptor.stem}
    for stage in descriptor.stages:
        for graph in filter(None, (stage.normal_cell, stage.reduction_cell)):
            keys.update(n.weight_key for n in graph.nodes if n.weight_key)
    for inst in descriptor.cells:
        if inst.prevprev_projection is not None:
            keys.add(inst.prevprev_projection.weight_key)
    keys.add(descriptor.head.bn_weight_key)
    keys.add(descriptor.head.fc_weight_key)
    return tuple(sorted(keys))


def build_request(descriptor: ModelDescriptor, candidate_id: int, epochs_to_train: int, cumulative_epochs: int) -> EvaluationRequest:
    return EvaluationRequest(
        descriptor=descriptor,
        candidate_id=candidate_id,
        epochs_to_train=epochs_to_train,
        cumulative_epochs=cumulative_epochs,
        weight_keys=descriptor_weight_keys(descriptor),
    )


def _op_diversity(descriptor: ModelDescriptor) -> float:
    """Fraction of the conv catalog the cell templates actually use."""
    used = set()
    for stage in descriptor.stages:
        for graph in filter(None, (stage.normal_cell, stage.reduction_cell)):
            for node in graph.nodes:
                if node.op in ("pw", "dw", "sep", "inv"):
                    kh, kw = node.kernel
                    used.add(f"{node.op}{kh}x{kw}" if node.op != "pw" else "pw")
    return len(used) / len(_CONV_NAME_SET)


def surrogate_base(descriptor: ModelDescriptor, seed: int) -> float:
    """Stable per-candidate score in [0.4, 0.9]."""
    canonical = json.dumps(descriptor_to_dict(descriptor), sort_keys=True)
    digest = hashlib.sha256(canonical.encode() + seed.to_bytes(8, "little", signed=True)).digest()
    u = int.from_bytes(digest[:8], "little") / 2**64
    return 0.4 + 0.42 * u + 0.08 * _op_diversity(descriptor)


def surrogate_eval(request: EvaluationRequest, seed: int) -> FitnessRecord:
    base = surrogate_base(request.descriptor, seed)
    factor = 1.0 - math.exp(-request.cumulative_epochs / SURROGATE_EPOCH_SCALE)
    return FitnessRecord(
        candidate_id=request.candidate_id,
        fitness=base * factor,
        epochs=request.cumulative_epochs,
    )


class SurrogateEvaluator:
    """Evaluator-protocol wrapper around surrogate_eval."""

    def __init__(self, seed: int):
        self.seed = seed

    def evaluate(self, request: EvaluationRequest) -> FitnessRecord:
        return surrogate_eval(request, self.seed)

    def close(self) -> None:
        pass


# --------------------------------------------------------------------------
# weight store (metadata only; blobs belong to the trainer)


@dataclass
class WeightStoreEntry:
    key: str
    best_fitness: float
    blob_path: str
    updated_at: int = 0


@dataclass
class WeightStore:
    entries: dict[str, WeightStoreEntry] = field(default_factory=dict)

    def register(self, key: str) -> None:
        if key not in self.entries:
            self.entries[key] = WeightStoreEntry(key=key, best_fitness=float("-inf"), blob_path="")

    def update(self, key: str, fitness: float, blob_path: str, generation: int = 0) -> bool:
        """Replace-if-greater; returns whether the entry changed."""
        if key not in self.entries:
            raise KeyError(f"weight key {key!r} was never registered")
        entry = self.entries[key]
        if fitness > entry.best_fitness:
            entry.best_fitness = fitness
            entry.blob_path = blob_path
            entry.updated_at = generation
            return True
        return False

    def to_dict(self) -> dict:
        return {
            k: {"best_fitness": e.best_fitness, "blob_path": e.blob_path, "updated_at": e.updated_at}
            for k, e in self.entries.items()
            if e.blob_path
        }

    @staticmethod
    def from_dict(d: dict) -> "WeightStore":
        store = WeightStore()
        for k, e in d.items():
            store.entries[k] = WeightStoreEntry(
                key=k, best_fitness=e["best_fitness"], blob_path=e["blob_path"], updated_at=e["updated_at"]
            )
        return store


def update_weight_store(store: WeightStore, key: str, fitness: float, blob_path: str, generation: int = 0) -> bool:
    return store.update(key, fitness, blob_path, generation)


# --------------------------------------------------------------------------
# external trainer bridge


class TrainerClient:
    """One spawned trainer process speaking line-delimited JSON on its stdio.

    One request in flight at a time. Trainer crashes and timeouts surface as
    EvaluationFailure (the search scores the candidate 0 and moves on);
    malformed or out-of-contract replies are ProtocolError.
    """

    def __init__(self, command: list[str], *, weight_dir: str, seed: int, timeout: float | None = None):
        self.command = command
        self.weight_dir = weight_dir
        self.seed = seed
        self.timeout = timeout
        self.proc: subprocess.Popen | None = None
        self.last_updated_keys: dict[str, float] = {}

    def _ensure_proc(self) -> subprocess.Popen:
        if self.proc is None or self.proc.poll() is not None:
            try:
                self.proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise EvaluationFailure(f"trainer unreachable: {exc}") from exc
        return self.proc

    def evaluate(self, request: EvaluationRequest) -> FitnessRecord:
        proc = self._ensure_proc()
        message = {
            "type": "eval_request",
            "candidate_id": request.candidate_id,
            "descriptor": descriptor_to_dict(request.descriptor),
            "epochs_to_train": request.epochs_to_train,
            "cumulative_epochs": request.cumulative_epochs,
            "weight_dir": self.weight_dir,
            "dataset_profile": request.descriptor.profile,
            "seed": self.seed,
        }
        try:
            proc.stdin.write(json.dumps(message) + "\n")
            proc.stdin.flush()
            if self.timeout is not None:
                import select

                ready, _, _ = select.select([proc.stdout], [], [], self.timeout)
                if not ready:
                    self.close()
                    raise EvaluationFailure(f"trainer timed out after {self.timeout}s")
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluationFailure(f"trainer pipe failed: {exc}") from exc
        if not line:
            raise EvaluationFailure("trainer closed its output stream")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable trainer reply: {line!r}") from exc
        return self._interpret(reply, request)

    def _interpret(self, reply: dict, request: EvaluationRequest) -> FitnessRecord:
        kind = reply.get("type")
        if kind == "error":
            raise EvaluationFailure(f"trainer error: {reply.get('message', '?')}")
        if kind != "eval_result":
            raise ProtocolError(f"unexpected message type {kind!r} (payload: {reply!r})")
        if reply.get("candidate_id") != request.candidate_id:
            raise ProtocolError(
                f"candidate mismatch: asked {request.candidate_id}, got {reply.get('candidate_id')!r}"
            )
        acc = reply.get("accuracy")
        if not isinstance(acc, (int, float)) or not 0.0 <= acc <= 1.0:
            raise ProtocolError(f"accuracy out of range: {acc!r} (payload: {reply!r})")
        updated = reply.get("updated_keys", {})
        if not isinstance(updated, dict):
            raise ProtocolError(f"updated_keys must be a mapping (payload: {reply!r})")
        self.last_updated_keys = dict(updated)
        return FitnessRecord(
            candidate_id=request.candidate_id,
            fitness=float(acc),
            epochs=request.cumulative_epochs,
            wall_time=float(reply.get("wall_time", 0.0)),
        )

    def close(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()
        self.proc = None


def external_eval(request: EvaluationRequest, trainer: TrainerClient) -> FitnessRecord:
    """Score a candidate through a trainer process; see TrainerClient."""
    return trainer.evaluate(request)


# --------------------------------------------------------------------------
# statistics


def relative_improvement(acc_m: float, acc_r: float) -> float:
    """Percentage improvement of a searched model's accuracy over a random one."""
    if acc_r <= 0:
        raise ValueError("reference accuracy must be positive")
    return 100.0 * (acc_m - acc_r) / acc_r
