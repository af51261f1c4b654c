"""Discriminator training.

Transformer models follow a two-phase protocol: head-only updates first,
then full-network updates. Embedding models train as classifiers for a fixed
number of steps with a staircase learning-rate decay, after which per-brand
exemplar embeddings are extracted from the training logos.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn as nn

from ..dataset import LogoImage, labels_tensor, to_tensor
from ..errors import TrainingDivergedError
from .base import Discriminator
from .siamese import mean_brand_embeddings

CLIP_GRAD_NORM = "grad_norm"
CLIP_GRAD_VALUE = "grad_value"


@dataclass(frozen=True)
class DiscTrainConfig:
    arch: str
    seed: int
    scale_profile: str = "mini"
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 0.0
    learning_rate: float = 0.01
    epochs: int = 0
    head_finetune_epochs: int = 0
    steps: int | None = None  # step-based training (embedding models)
    lr_decay_milestones: tuple[float, float] = (0.6, 0.8)
    value_clip: float | None = None
    clip_mode: str = CLIP_GRAD_NORM

    def __post_init__(self):
        if self.epochs > 0 and not self.head_finetune_epochs < self.epochs:
            raise ValueError("head_finetune_epochs must be < epochs")
        if self.clip_mode not in (CLIP_GRAD_NORM, CLIP_GRAD_VALUE):
            raise ValueError(f"unknown clip_mode {self.clip_mode!r}")

    @classmethod
    def defaults(cls, arch: str, profile: str, seed: int, **overrides) -> "DiscTrainConfig":
        if arch in ("vit", "swin"):
            base = dict(weight_decay=5e-4, learning_rate=0.01, value_clip=2.5)
            if profile == "paper":
                base.update(epochs=200, head_finetune_epochs=50)
            elif arch == "swin":
                base.update(epochs=24, head_finetune_epochs=3)
            else:
                base.update(epochs=15, head_finetune_epochs=3)
        elif arch in ("siamese", "siamese_pp"):
            base = dict(weight_decay=0.0, learning_rate=0.003)
            base.update(steps=10000 if profile == "paper" else 700)
        else:
            raise ValueError(f"unknown arch {arch!r}")
        base.update(overrides)
        return cls(arch=arch, seed=seed, scale_profile=profile, **base)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def _clip_gradients(params, config: DiscTrainConfig) -> None:
    if config.value_clip is None:
        return
    if config.clip_mode == CLIP_GRAD_NORM:
        nn.utils.clip_grad_norm_(params, config.value_clip)
    else:
        nn.utils.clip_grad_value_(params, config.value_clip)


def _diagnostic_checkpoint(disc: Discriminator, config: DiscTrainConfig, step: int) -> str:
    path = Path(tempfile.mkdtemp(prefix="diverged_")) / "diagnostic.pt"
    torch.save({"state_dict": disc.model.state_dict(),
                "config": asdict(config), "step": step}, path)
    return str(path)


def train_discriminator(disc: Discriminator, train_set: list[LogoImage] | tuple[LogoImage, ...],
                        config: DiscTrainConfig) -> Discriminator:
    """Train a discriminator in place and return it.

    Zero epochs (or zero steps) is a no-op. A non-finite loss aborts with a
    diagnostic checkpoint. Deterministic for a fixed seed and thread count.
    """
    if config.arch != disc.arch:
        raise ValueError(f"config arch {config.arch!r} does not match discriminator {disc.arch!r}")
    if len(train_set) == 0:
        raise ValueError("train_set is empty")
    labels = labels_tensor(train_set)
    if labels.min() < 0 or labels.max() >= disc.k:
        raise ValueError(f"labels must lie in [0, {disc.k})")
    step_based = config.steps is not None
    if (config.steps or 0) == 0 and step_based:
        return disc
    if not step_based and config.epochs == 0:
        return disc

    torch.manual_seed(config.seed)
    g = torch.Generator().manual_seed(config.seed)
    x_all = to_tensor(train_set)
    n = x_all.shape[0]
    loss_fn = nn.CrossEntropyLoss()
    model = disc.model
    model.train()
    losses: list[float] = []

    def run_epoch(optimizer, params) -> float:
        perm = torch.randperm(n, generator=g)
        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            optimizer.zero_grad()
            out = model(x_all[idx])
            loss = loss_fn(out, labels[idx])
            if not torch.isfinite(loss):
                path = _diagnostic_checkpoint(disc, config, len(losses))
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {len(losses)}", checkpoint_path=path)
            loss.backward()
            _clip_gradients(params, config)
            optimizer.step()
            total += float(loss.detach())
            count += 1
        return total / count

    if step_based:
        _train_steps(disc, model, x_all, labels, config, g, losses)
    else:
        head_params = list(model.head.parameters())
        if config.head_finetune_epochs > 0:
            for p in model.parameters():
                p.requires_grad_(False)
            for p in head_params:
                p.requires_grad_(True)
            opt = torch.optim.SGD(head_params, lr=config.learning_rate,
                                  momentum=config.momentum, weight_decay=config.weight_decay)
            for _ in range(config.head_finetune_epochs):
                losses.append(run_epoch(opt, head_params))
        for p in model.parameters():
            p.requires_grad_(True)
        all_params = list(model.parameters())
        opt = torch.optim.SGD(all_params, lr=config.learning_rate,
                              momentum=config.momentum, weight_decay=config.weight_decay)
        for _ in range(config.epochs - config.head_finetune_epochs):
            losses.append(run_epoch(opt, all_params))

    model.eval()
    if disc.kind == "similarity":
        by_brand = {b: x_all[labels == b] for b in range(disc.k)}
        if any(v.shape[0] == 0 for v in by_brand.values()):
            raise ValueError("every brand needs at least one training logo for exemplars")
        disc.exemplar_embeddings = mean_brand_embeddings(model, by_brand)
    disc.metadata.update({
        "trained": True,
        "seed": config.seed,
        "config_hash": config.hash(),
        "loss_history": losses,
    })
    return disc


def _train_steps(disc: Discriminator, model, x_all, labels, config: DiscTrainConfig,
                 g: torch.Generator, losses: list[float]) -> None:
    n = x_all.shape[0]
    params = list(model.parameters())
    opt = torch.optim.SGD(params, lr=config.learning_rate, momentum=config.momentum,
                          weight_decay=config.weight_decay)
    loss_fn = nn.CrossEntropyLoss()
    total_steps = int(config.steps)
    m1, m2 = (int(total_steps * f) for f in config.lr_decay_milestones)
    step = 0
    while step < total_steps:
        perm = torch.randperm(n, generator=g)
        for start in range(0, n, config.batch_size):
            if step >= total_steps:
                break
            lr = config.learning_rate
            if step >= m2:
                lr *= 0.01
            elif step >= m1:
                lr *= 0.1
            for group in opt.param_groups:
                group["lr"] = lr
            idx = perm[start:start + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x_all[idx]), labels[idx])
            if not torch.isfinite(loss):
                path = _diagnostic_checkpoint(disc, config, step)
                raise TrainingDivergedError(f"non-finite loss at step {step}",
                                            checkpoint_path=path)
            loss.backward()
            _clip_gradients(params, config)
            opt.step()
            losses.append(float(loss.detach()))
            step += 1


def training_accuracy(disc: Discriminator, images: list[LogoImage] | tuple[LogoImage, ...]
                      ) -> float:
    """Top-1 accuracy of the argmax brand over a labeled image set."""
    vectors = disc.predict_batch(images)
    correct = sum(1 for img, v in zip(images, vectors) if v.top()[0] == img.brand_id)
    return correct / len(images)
