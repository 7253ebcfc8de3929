"""Dataset pipelines: CIFAR with standard augmentation, plus a synthetic
class-blob dataset for exercising the training loop without any files."""

from __future__ import annotations

import torch
from torch.utils.data import DataLoader, Dataset, Subset

CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)


class Cutout:
    """Zero a random square patch (applied after normalization)."""

    def __init__(self, length: int):
        self.length = length

    def __call__(self, img: torch.Tensor) -> torch.Tensor:
        if self.length <= 0:
            return img
        _, h, w = img.shape
        cy = torch.randint(h, (1,)).item()
        cx = torch.randint(w, (1,)).item()
        y0, y1 = max(cy - self.length // 2, 0), min(cy + self.length // 2, h)
        x0, x1 = max(cx - self.length // 2, 0), min(cx + self.length // 2, w)
        img = img.clone()
        img[:, y0:y1, x0:x1] = 0.0
        return img


class SyntheticBlobs(Dataset):
    """Learnable stand-in: each class is a fixed random 32x32 pattern plus noise.

    Prototypes depend only on prototype_seed so train and validation splits
    share the same class structure.
    """

    def __init__(self, n: int, classes: int = 10, seed: int = 0, noise: float = 0.3,
                 prototype_seed: int = 1234):
        proto_g = torch.Generator().manual_seed(prototype_seed)
        self.prototypes = torch.randn(classes, 3, 32, 32, generator=proto_g)
        g = torch.Generator().manual_seed(seed)
        self.labels = torch.randint(classes, (n,), generator=g)
        self.noise = torch.randn(n, 3, 32, 32, generator=g) * noise
        self.classes = classes

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, idx):
        label = self.labels[idx].item()
        return self.prototypes[label] + self.noise[idx], label


def _cifar_transforms(config, train: bool):
    from torchvision import transforms

    if not train:
        return transforms.Compose([
            transforms.ToTensor(),
            transforms.Normalize(CIFAR_MEAN, CIFAR_STD),
        ])
    steps = [
        transforms.RandomCrop(32, padding=4),
        transforms.RandomHorizontalFlip(),
    ]
    if config.autoaugment:
        steps.append(transforms.AutoAugment(transforms.AutoAugmentPolicy.CIFAR10))
    steps += [
        transforms.ToTensor(),
        transforms.Normalize(CIFAR_MEAN, CIFAR_STD),
    ]
    if config.cutout_length > 0:
        steps.append(Cutout(config.cutout_length))
    return transforms.Compose(steps)


def dataset_available(config) -> bool:
    if config.dataset == "synthetic":
        return True
    try:
        _cifar_class(config)(root=config.data_dir, train=True, download=False)
        return True
    except (RuntimeError, FileNotFoundError):
        return False


def _cifar_class(config):
    from torchvision import datasets

    return datasets.CIFAR10 if config.dataset == "cifar10" else datasets.CIFAR100


def build_loaders(config, seed: int = 0) -> tuple[DataLoader, DataLoader]:
    """Training and validation loaders; validation is split off the training set."""
    if config.dataset == "synthetic":
        n_train = int(4000 * config.subset_fraction)
        n_val = int(1000 * config.subset_fraction)
        train_set = SyntheticBlobs(n_train, seed=seed)
        val_set = SyntheticBlobs(n_val, seed=seed + 1)
    else:
        cls = _cifar_class(config)
        train_full = cls(root=config.data_dir, train=True, download=config.download,
                         transform=_cifar_transforms(config, train=True))
        val_full = cls(root=config.data_dir, train=True, download=False,
                       transform=_cifar_transforms(config, train=False))
        n = len(train_full)
        split = n - config.val_split_size
        train_idx = list(range(0, int(split * config.subset_fraction)))
        val_idx = list(range(split, split + int(config.val_split_size * config.subset_fraction)))
        train_set = Subset(train_full, train_idx)
        val_set = Subset(val_full, val_idx)

    generator = torch.Generator().manual_seed(seed)
    train_loader = DataLoader(
        train_set, batch_size=config.batch_size, shuffle=True,
        num_workers=config.num_workers, generator=generator, drop_last=False,
    )
    val_loader = DataLoader(
        val_set, batch_size=config.batch_size, shuffle=False,
        num_workers=config.num_workers,
    )
    return train_loader, val_loader
