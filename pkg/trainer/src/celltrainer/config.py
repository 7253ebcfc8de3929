"""Trainer configuration with search-phase and full-training operating points."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class TrainerConfig:
    dataset: str = "cifar10"          # cifar10 | cifar100 | synthetic
    data_dir: str = "./data"
    mode: str = "search"              # search | full
    val_split_size: int = 5000        # held out from the training split
    batch_size: int | None = None     # defaults: 512 search / 128 full
    lr: float | None = None           # defaults: 0.1 search / 0.025 full
    momentum: float = 0.9
    weight_decay: float = 0.0005
    scheduler: str = "cosine"
    scheduler_horizon: int | None = None  # defaults: 10 search / 300 full
    cutout_length: int = 16
    autoaugment: bool = False
    drop_path_rate: float = 0.0       # 0.1 in full training when enabled
    subset_fraction: float = 1.0      # desk-scale shrink of train and val
    num_workers: int = 0
    device: str = "auto"
    download: bool = False

    def __post_init__(self):
        if self.mode not in ("search", "full"):
            raise ValueError(f"mode must be search or full, got {self.mode!r}")
        if self.dataset not in ("cifar10", "cifar100", "synthetic"):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if not 0.0 < self.subset_fraction <= 1.0:
            raise ValueError("subset_fraction must be in (0, 1]")
        if self.batch_size is None:
            self.batch_size = 512 if self.mode == "search" else 128
        if self.lr is None:
            self.lr = 0.1 if self.mode == "search" else 0.025
        if self.scheduler_horizon is None:
            self.scheduler_horizon = 10 if self.mode == "search" else 300

    @property
    def classes(self) -> int:
        return {"cifar10": 10, "cifar100": 100, "synthetic": 10}[self.dataset]


def config_from_dict(data: dict) -> TrainerConfig:
    known = {f.name for f in fields(TrainerConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown trainer config keys: {sorted(unknown)}")
    return TrainerConfig(**data)


def load_config(path) -> TrainerConfig:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)
