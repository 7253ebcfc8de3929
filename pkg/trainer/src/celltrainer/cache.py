"""Per-key weight cache: one file per weight key in a shared directory.

Each blob stores the owning module's state dict together with the best
validation accuracy that produced it; writes replace-if-greater and go
through an atomic rename so concurrent trainer processes never see a torn
file.
"""

from __future__ import annotations

import hashlib
import os
import re
from pathlib import Path

import torch


def _key_filename(key: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9._-]", "_", key)[:48]
    digest = hashlib.sha1(key.encode()).hexdigest()[:10]
    return f"{slug}-{digest}.pt"


class WeightCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.directory / _key_filename(key)

    def best_fitness(self, key: str) -> float | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            return torch.load(path, map_location="cpu", weights_only=True)["fitness"]
        except Exception:
            return None  # torn/corrupt blob; treat as absent

    def load_into(self, key: str, module: torch.nn.Module) -> bool:
        path = self.path_for(key)
        if not path.exists():
            return False
        try:
            blob = torch.load(path, map_location="cpu", weights_only=True)
            module.load_state_dict(blob["state"])
            return True
        except Exception:
            return False

    def store(self, key: str, module: torch.nn.Module, fitness: float) -> bool:
        """Save iff this fitness beats the cached one. Returns whether it wrote."""
        previous = self.best_fitness(key)
        if previous is not None and fitness <= previous:
            return False
        state = {k: v.detach().cpu() for k, v in module.state_dict().items()}
        path = self.path_for(key)
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        torch.save({"fitness": fitness, "state": state}, tmp)
        os.replace(tmp, path)
        return True
