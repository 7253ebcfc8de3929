"""The per-request training loop: build, warm-start, train, validate, cache.

Each request trains an already-built model for a handful of epochs with SGD
and a cosine-annealed learning rate positioned at the candidate's cumulative
epoch, evaluates on the held-out split, and writes improved weights back to
the per-key cache so future candidates sharing genes or block shapes start
warm instead of from scratch.
"""

from __future__ import annotations

import math
import time

import torch
from torch import nn

from .build import build_model, parameter_count
from .cache import WeightCache
from .config import TrainerConfig
from .data import build_loaders
from .descriptor import Descriptor


def cosine_lr(base_lr: float, epoch: int, horizon: int, eta_min: float = 0.0) -> float:
    t = min(epoch, horizon)
    return eta_min + (base_lr - eta_min) * (1 + math.cos(math.pi * t / horizon)) / 2


def pick_device(config: TrainerConfig) -> torch.device:
    if config.device != "auto":
        return torch.device(config.device)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


def evaluate_accuracy(model: nn.Module, loader, device) -> float:
    model.eval()
    correct = total = 0
    with torch.no_grad():
        for images, labels in loader:
            images, labels = images.to(device), labels.to(device)
            predictions = model(images).argmax(dim=1)
            correct += (predictions == labels).sum().item()
            total += labels.numel()
    return correct / max(total, 1)


def train_epochs(model, loaders, config: TrainerConfig, *, epochs: int, start_epoch: int, device) -> None:
    train_loader, _ = loaders
    criterion = nn.CrossEntropyLoss()
    optimizer = torch.optim.SGD(
        model.parameters(), lr=config.lr,
        momentum=config.momentum, weight_decay=config.weight_decay,
    )
    model.train()
    for k in range(epochs):
        lr = cosine_lr(config.lr, start_epoch + k, config.scheduler_horizon)
        for group in optimizer.param_groups:
            group["lr"] = lr
        for images, labels in train_loader:
            images, labels = images.to(device), labels.to(device)
            optimizer.zero_grad()
            loss = criterion(model(images), labels)
            loss.backward()
            optimizer.step()


def run_request(descriptor: Descriptor, config: TrainerConfig, *,
                epochs_to_train: int, cumulative_epochs: int,
                weight_dir: str, seed: int) -> dict:
    """Execute one evaluation request; returns the eval_result payload fields."""
    started = time.perf_counter()
    torch.manual_seed(seed + cumulative_epochs)
    device = pick_device(config)

    model = build_model(descriptor, drop_path_rate=config.drop_path_rate)
    model.to(device)

    cache = WeightCache(weight_dir)
    keyed = list(model.weight_keyed_modules())
    loaded = 0
    seen = set()
    for key, module in keyed:
        if cache.load_into(key, module):
            loaded += 1
        seen.add(key)

    loaders = build_loaders(config, seed=seed)
    start_epoch = cumulative_epochs - epochs_to_train
    train_epochs(model, loaders, config, epochs=epochs_to_train, start_epoch=start_epoch, device=device)
    accuracy = evaluate_accuracy(model, loaders[1], device)

    updated = {}
    stored = set()
    for key, module in keyed:
        if key in stored:
            continue  # instances share keys; the first occurrence owns the blob
        stored.add(key)
        if cache.store(key, module, accuracy):
            updated[key] = accuracy

    return {
        "accuracy": accuracy,
        "updated_keys": updated,
        "wall_time": time.perf_counter() - started,
        "params": parameter_count(model),
        "loaded_keys": loaded,
    }
