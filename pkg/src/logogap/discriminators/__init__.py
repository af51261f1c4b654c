"""The four logo-identification models behind one prediction interface."""

from __future__ import annotations

import torch

from .base import (
    ARCHS,
    PROFILES,
    ConfidenceVector,
    Discriminator,
    KIND_PROBABILITY,
    KIND_SIMILARITY,
    as_probability,
    discriminator_hash,
    import_backbone_weights,
    load_discriminator,
    predict,
    save_discriminator,
    weights_checksum,
)
from .siamese import EmbeddingBackbone, SIAMESE_PROFILES, StepReLU, step_relu
from .swin import SWIN_PROFILES, SwinBlock, WindowTransformerClassifier
from .training import DiscTrainConfig, train_discriminator, training_accuracy
from .vit import PatchTransformerClassifier, VIT_PROFILES

__all__ = [
    "ARCHS", "PROFILES", "ConfidenceVector", "Discriminator",
    "KIND_PROBABILITY", "KIND_SIMILARITY", "as_probability",
    "build_discriminator", "build_siamese", "build_swin", "build_vit",
    "discriminator_hash", "import_backbone_weights", "load_discriminator",
    "predict", "save_discriminator", "step_relu", "StepReLU",
    "DiscTrainConfig", "train_discriminator", "training_accuracy", "weights_checksum",
]


def _maybe_seed(seed: int | None) -> None:
    if seed is not None:
        torch.manual_seed(seed)


def build_vit(k: int, profile: str = "mini", seed: int | None = None) -> Discriminator:
    """Untrained patch-transformer discriminator with a k-brand softmax head."""
    _maybe_seed(seed)
    model = PatchTransformerClassifier(k=k, **VIT_PROFILES[profile])
    return Discriminator("vit", model, k=k, profile=profile)


def build_swin(k: int, profile: str = "mini", seed: int | None = None) -> Discriminator:
    """Untrained windowed-transformer discriminator with a k-brand softmax head."""
    _maybe_seed(seed)
    model = WindowTransformerClassifier(k=k, **SWIN_PROFILES[profile])
    return Discriminator("swin", model, k=k, profile=profile)


def build_siamese(k: int, profile: str = "mini", hardened: bool = False,
                  step_alpha: float = 0.1, seed: int | None = None) -> Discriminator:
    """Untrained embedding discriminator; hardened=True quantizes every rectifier."""
    _maybe_seed(seed)
    model = EmbeddingBackbone(k=k, hardened=hardened, step_alpha=step_alpha,
                              **SIAMESE_PROFILES[profile])
    return Discriminator("siamese_pp" if hardened else "siamese", model, k=k, profile=profile)


def build_discriminator(arch: str, k: int, profile: str = "mini",
                        seed: int | None = None) -> Discriminator:
    if arch == "vit":
        return build_vit(k, profile, seed)
    if arch == "swin":
        return build_swin(k, profile, seed)
    if arch == "siamese":
        return build_siamese(k, profile, hardened=False, seed=seed)
    if arch == "siamese_pp":
        return build_siamese(k, profile, hardened=True, seed=seed)
    raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
