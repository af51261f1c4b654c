"""Training the perturbation generator against a frozen discriminator.

The attack caps every brand confidence at a target probability: given the
clean prediction V_true, the target vector takes the elementwise minimum of
V_true and p_adversarial. The generator is optimized to pull the prediction
on the perturbed logo toward that capped target, which drives every
protected-brand confidence below the detector's decision threshold.
"""

from __future__ import annotations

import hashlib
import json
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import LogoImage, to_tensor
from .discriminators.base import (
    ConfidenceVector,
    DEFAULT_SIMILARITY_TEMPERATURE,
    Discriminator,
    KIND_PROBABILITY,
    discriminator_hash,
    weights_checksum,
)
from .errors import ContractError, TrainingDivergedError
from .generation import (
    GENERATOR_PROFILES,
    PerturbationGenerator,
    ResidualGeneratorNet,
    scale_and_clip_tensor,
)

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TargetVector:
    """Elementwise cap of a clean probability vector at p_adversarial."""

    values: np.ndarray
    p_adversarial: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if not 0.0 < self.p_adversarial < 1.0:
            raise ValueError(f"p_adversarial must be in (0, 1), got {self.p_adversarial}")
        if v.max() > self.p_adversarial + 1e-7:
            raise ValueError("target values must not exceed p_adversarial")
        v.setflags(write=False)


def make_target_vector(v_true: ConfidenceVector, p_adversarial: float) -> TargetVector:
    """values[i] = min(v_true[i], p_adversarial); the result need not sum to 1."""
    if v_true.kind != KIND_PROBABILITY:
        raise ValueError("target vectors are built from probability vectors")
    if not 0.0 < p_adversarial < 1.0:
        raise ValueError(f"p_adversarial must be in (0, 1), got {p_adversarial}")
    return TargetVector(np.minimum(v_true.values, np.float32(p_adversarial)), p_adversarial)


def gap_loss(v_true, v_target):
    """log of the cross entropy between the prediction and the capped target.

    H(v_true, v_target) = -sum_i v_target[i] * log(v_true[i]), with v_true
    floored at 1e-12 before the log and H floored at 1e-12 before the outer
    log. No gradient flows through v_target. Accepts 1-D vectors (returns a
    scalar) or batched 2-D tensors (returns per-sample losses).
    """
    if isinstance(v_target, TargetVector):
        v_target = v_target.values
    to_numpy = not isinstance(v_true, torch.Tensor)
    vt = torch.as_tensor(v_true, dtype=torch.float32) if to_numpy else v_true
    tgt = torch.as_tensor(np.asarray(v_target), dtype=torch.float32).detach()
    if not torch.isfinite(vt).all() or not torch.isfinite(tgt).all():
        raise ValueError("gap_loss requires finite inputs")
    h = -(tgt * torch.log(vt.clamp_min(PROB_FLOOR))).sum(dim=-1)
    loss = torch.log(h.clamp_min(PROB_FLOOR))
    if to_numpy:
        return float(loss) if loss.ndim == 0 else loss.numpy()
    return loss


@dataclass(frozen=True)
class GenTrainConfig:
    seed: int
    scale_profile: str = "mini"
    batch_size: int = 32
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 10.0
    epochs: int = 200
    learning_rate: float = 2e-4
    p_adversarial: float = 0.5
    similarity_temperature: float = DEFAULT_SIMILARITY_TEMPERATURE
    negate_loss: bool = False
    target_fooling: float | None = None  # early stop once this train fraction is capped

    def __post_init__(self):
        if not 0.0 < self.p_adversarial < 1.0:
            raise ValueError(f"p_adversarial must be in (0, 1), got {self.p_adversarial}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def defaults(cls, target_arch: str, profile: str, seed: int, **overrides
                 ) -> "GenTrainConfig":
        base = dict(batch_size=16 if target_arch == "swin" else 32)
        if profile == "paper":
            base.update(epochs=100 if target_arch in ("siamese", "siamese_pp") else 200)
        else:
            base.update(epochs=40, target_fooling=0.95)
        base.update(overrides)
        return cls(seed=seed, scale_profile=profile, **base)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def probability_tensor(disc: Discriminator, batch: torch.Tensor,
                       temperature: float = DEFAULT_SIMILARITY_TEMPERATURE) -> torch.Tensor:
    """Differentiable (B, k) probability vectors for any discriminator kind."""
    if disc.kind == KIND_PROBABILITY:
        return torch.softmax(disc.model(batch), dim=1)
    if disc.exemplar_embeddings is None:
        raise ContractError("similarity discriminator has no exemplar embeddings")
    emb = F.normalize(disc.model.embed(batch), dim=1, eps=1e-12)
    exemplars = F.normalize(torch.from_numpy(disc.exemplar_embeddings), dim=1, eps=1e-12)
    sims = emb @ exemplars.T
    return torch.softmax(sims / temperature, dim=1)


def train_generator(disc: Discriminator, train_set: list[LogoImage] | tuple[LogoImage, ...],
                    config: GenTrainConfig) -> PerturbationGenerator:
    """Train a perturbation generator against a frozen discriminator.

    The discriminator is used as a black box: its parameters are verified
    bit-identical before and after training. Returns a generator whose
    metadata records the discriminator hash it was trained against.
    """
    if not disc.is_trained:
        raise ValueError("discriminator must be trained before attacking it")
    if len(train_set) == 0:
        raise ValueError("train_set is empty")

    checksum_before = weights_checksum(disc.model)
    disc_hash = discriminator_hash(disc)
    frozen_flags = [p.requires_grad for p in disc.model.parameters()]
    for p in disc.model.parameters():
        p.requires_grad_(False)
    disc.model.eval()

    torch.manual_seed(config.seed)
    net = ResidualGeneratorNet(**GENERATOR_PROFILES[config.scale_profile])
    net.train()
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate,
                           betas=(config.beta1, config.beta2))
    g = torch.Generator().manual_seed(config.seed)
    x_all = to_tensor(train_set)
    n = x_all.shape[0]
    p_adv = config.p_adversarial
    sign = -1.0 if config.negate_loss else 1.0

    loss_history: list[float] = []
    fool_history: list[float] = []
    epochs_run = 0
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=g)
        epoch_loss, capped, seen = 0.0, 0, 0
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            x = x_all[idx]
            with torch.no_grad():
                v_clean = probability_tensor(disc, x, config.similarity_temperature)
            v_target = torch.minimum(v_clean, torch.tensor(p_adv))
            opt.zero_grad()
            raw = net(x)
            _, adv = scale_and_clip_tensor(raw, config.epsilon, x)
            v_adv = probability_tensor(disc, adv, config.similarity_temperature)
            loss = sign * gap_loss(v_adv, v_target).mean()
            if not torch.isfinite(loss):
                path = Path(tempfile.mkdtemp(prefix="diverged_gen_")) / "diagnostic.pt"
                torch.save({"state_dict": net.state_dict(), "epoch": epoch}, path)
                raise TrainingDivergedError(f"non-finite generator loss at epoch {epoch}",
                                            checkpoint_path=str(path))
            loss.backward()
            opt.step()
            epoch_loss += float(loss.detach())
            batches += 1
            with torch.no_grad():
                capped += int((v_adv.detach().max(dim=1).values < p_adv).sum())
                seen += x.shape[0]
        epochs_run = epoch + 1
        loss_history.append(epoch_loss / batches)
        fool_history.append(capped / seen)
        if config.target_fooling is not None and fool_history[-1] >= config.target_fooling:
            break

    for p, flag in zip(disc.model.parameters(), frozen_flags):
        p.requires_grad_(flag)
    checksum_after = weights_checksum(disc.model)
    if checksum_after != checksum_before:
        raise ContractError("discriminator weights changed during generator training")

    net.eval()
    return PerturbationGenerator(
        net, epsilon=config.epsilon, trained_against=disc_hash, config=config,
        metadata={
            "profile": config.scale_profile,
            "seed": config.seed,
            "epochs_run": epochs_run,
            "p_adversarial": p_adv,
            "config_hash": config.hash(),
            "loss_history": loss_history,
            "capped_fraction_history": fool_history,
            "target_arch": disc.arch,
        })
