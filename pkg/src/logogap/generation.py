"""Residual perturbation generator and the scaling/clipping stage.

The generator is an image-to-image residual network with six residual
blocks between a stride-2 downsampling and upsampling pair. Its raw output
is rescaled so the largest absolute entry equals the pixel budget
epsilon/255, added to the source logo, and the sum clipped back to [0, 1].
Crafted logos therefore never differ from their originals by more than
epsilon/255 per channel per pixel.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .dataset import (
    IMAGE_SIZE,
    LogoImage,
    PROVENANCE_ADVERSARIAL,
    to_tensor,
)

CRAFT_BATCH = 32


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3),
            nn.InstanceNorm2d(ch),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.block(x)


class ResidualGeneratorNet(nn.Module):
    """Six-residual-block image-to-image network; tanh output in [-1, 1]."""

    def __init__(self, ngf: int = 64, n_blocks: int = 6):
        super().__init__()
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(3, ngf, 7),
            nn.InstanceNorm2d(ngf),
            nn.ReLU(inplace=True),
        ]
        ch = ngf
        for _ in range(2):  # downsampling pair
            layers += [nn.Conv2d(ch, ch * 2, 3, stride=2, padding=1),
                       nn.InstanceNorm2d(ch * 2), nn.ReLU(inplace=True)]
            ch *= 2
        layers += [ResidualBlock(ch) for _ in range(n_blocks)]
        for _ in range(2):  # matching upsampling pair
            layers += [nn.ConvTranspose2d(ch, ch // 2, 3, stride=2, padding=1,
                                          output_padding=1),
                       nn.InstanceNorm2d(ch // 2), nn.ReLU(inplace=True)]
            ch //= 2
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(ch, 3, 7), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x * 2.0 - 1.0)


GENERATOR_PROFILES = {
    "paper": dict(ngf=64, n_blocks=6),
    "mini": dict(ngf=8, n_blocks=6),
}


@dataclass(frozen=True)
class PerturbationField:
    """A signed perturbation bounded by epsilon/255 in normalized pixel units."""

    values: np.ndarray
    epsilon: float

    def __post_init__(self):
        v = self.values
        if v.shape != (3, IMAGE_SIZE, IMAGE_SIZE) or v.dtype != np.float32:
            raise ValueError("values must be float32 of shape (3, 224, 224)")
        bound = np.float32(self.epsilon) / np.float32(255.0)
        if np.abs(v).max() > bound:
            raise ValueError(f"perturbation exceeds budget {self.epsilon}/255")
        v.setflags(write=False)


class PerturbationGenerator:
    """A trained generator plus the metadata linking it to its target model."""

    def __init__(self, core: ResidualGeneratorNet, epsilon: float,
                 trained_against: str | None = None, config=None,
                 metadata: dict | None = None):
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.core = core.eval()
        self.epsilon = float(epsilon)
        self.trained_against = trained_against
        self.config = config
        self.metadata = dict(metadata or {})


def scale_and_clip_tensor(raw: torch.Tensor, epsilon: float, base: torch.Tensor
                          ) -> tuple[torch.Tensor, torch.Tensor]:
    """Differentiable scaling/clipping on (B, 3, H, W) tensors.

    Each sample's field is rescaled by epsilon/255 over its own largest
    absolute entry (the scale factor is treated as a constant for gradients),
    clamped to the budget, added to the base image, and clipped to [0, 1].
    """
    bound = float(epsilon) / 255.0
    peak = raw.detach().abs().amax(dim=(1, 2, 3), keepdim=True).clamp_min(1e-12)
    scaled = (raw * (bound / peak)).clamp(-bound, bound)
    adversarial = (base + scaled).clamp(0.0, 1.0)
    return scaled, adversarial


def _snap_to_budget(base: np.ndarray, adv: np.ndarray, bound: float) -> np.ndarray:
    """Nudge float32 pixels toward the base until the budget holds exactly.

    float32 rounding of base + delta can overshoot the budget by an ulp;
    stepping the offending pixels toward the base restores the bound without
    changing the attack.
    """
    adv = adv.copy()
    for _ in range(4):
        diff = adv.astype(np.float64) - base.astype(np.float64)
        over = np.abs(diff) > bound
        if not over.any():
            return adv
        adv[over] = np.nextafter(adv[over], base[over].astype(np.float32))
    return adv


def scale_and_clip(raw: np.ndarray, epsilon: float, base: LogoImage
                   ) -> tuple[PerturbationField, LogoImage]:
    """Scale a raw field to the budget and apply it to a logo.

    Returns the bounded perturbation and the adversarial logo; the logo keeps
    the base image's brand id but carries adversarial provenance.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    raw_t = torch.from_numpy(np.ascontiguousarray(raw, dtype=np.float32)).unsqueeze(0)
    base_t = torch.from_numpy(base.pixels).unsqueeze(0)
    if raw_t.shape != base_t.shape:
        raise ValueError(f"raw shape {tuple(raw_t.shape)} does not match base")
    scaled, adv = scale_and_clip_tensor(raw_t, epsilon, base_t)
    bound = np.float32(epsilon) / np.float32(255.0)
    adv_np = _snap_to_budget(base.pixels, adv.squeeze(0).numpy(), float(bound))
    field = PerturbationField(np.ascontiguousarray(scaled.squeeze(0).numpy()), epsilon)
    logo = LogoImage(np.ascontiguousarray(adv_np), brand_id=base.brand_id,
                     provenance=PROVENANCE_ADVERSARIAL, source_path=base.source_path)
    return field, logo


def craft_batch(gen: PerturbationGenerator, logos: list[LogoImage] | tuple[LogoImage, ...]
                ) -> list[LogoImage]:
    """Craft adversarial variants of a batch of logos (pure, deterministic)."""
    out: list[LogoImage] = []
    gen.core.eval()
    bound = float(np.float32(gen.epsilon) / np.float32(255.0))
    with torch.no_grad():
        for start in range(0, len(logos), CRAFT_BATCH):
            chunk = logos[start:start + CRAFT_BATCH]
            base = to_tensor(chunk)
            raw = gen.core(base)
            _, adv = scale_and_clip_tensor(raw, gen.epsilon, base)
            adv_np = adv.numpy()
            for i, logo in enumerate(chunk):
                pixels = _snap_to_budget(logo.pixels, adv_np[i], bound)
                out.append(LogoImage(np.ascontiguousarray(pixels), brand_id=logo.brand_id,
                                     provenance=PROVENANCE_ADVERSARIAL,
                                     source_path=logo.source_path))
    return out


def craft(gen: PerturbationGenerator, logo: LogoImage) -> LogoImage:
    """Adversarial variant of one logo; brand id unchanged, budget enforced."""
    return craft_batch(gen, [logo])[0]


def generator_checksum(net: nn.Module) -> str:
    h = hashlib.sha256()
    state = net.state_dict()
    for name in sorted(state):
        t = state[name]
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def save_generator(gen: PerturbationGenerator, directory: str | Path) -> Path:
    from dataclasses import asdict, is_dataclass

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": gen.core.state_dict()}, d / "gen.pt")
    sidecar = {
        "epsilon": gen.epsilon,
        "trained_against": gen.trained_against,
        "hash": generator_checksum(gen.core),
        "profile": gen.metadata.get("profile", "mini"),
    }
    if gen.config is not None and is_dataclass(gen.config):
        sidecar["config"] = asdict(gen.config)
    for key in sorted(gen.metadata):
        if key not in sidecar:
            try:
                json.dumps(gen.metadata[key])
                sidecar[key] = gen.metadata[key]
            except (TypeError, ValueError):
                pass
    with open(d / "gen.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return d / "gen.pt"


def load_generator(directory: str | Path) -> PerturbationGenerator:
    d = Path(directory)
    with open(d / "gen.json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    profile = sidecar.get("profile", "mini")
    net = ResidualGeneratorNet(**GENERATOR_PROFILES[profile])
    payload = torch.load(d / "gen.pt", map_location="cpu", weights_only=True)
    net.load_state_dict(payload["state_dict"])
    metadata = {key: val for key, val in sidecar.items()
                if key not in ("epsilon", "trained_against", "hash", "config")}
    gen = PerturbationGenerator(net, epsilon=sidecar["epsilon"],
                                trained_against=sidecar.get("trained_against"),
                                metadata=metadata)
    stored = sidecar.get("hash")
    if stored is not None and stored != generator_checksum(net):
        from .errors import ContractError
        raise ContractError(f"generator checkpoint hash mismatch in {d}")
    return gen
