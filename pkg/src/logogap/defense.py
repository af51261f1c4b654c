"""Adversarial training and the attacker/defender game loop.

A robust discriminator is trained after replacing a fraction of the training
logos with their crafted adversarial variants (labels unchanged, corpus size
constant). An adaptive generator then attacks the robust model with the
standard generator-training procedure. The game loop alternates the two,
recrafting the replacement set from the latest generator each round.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .attack import GenTrainConfig, train_generator
from .dataset import LogoImage
from .discriminators import build_discriminator
from .discriminators.base import Discriminator, discriminator_hash
from .discriminators.training import DiscTrainConfig, train_discriminator
from .generation import PerturbationGenerator, craft_batch, generator_checksum


@dataclass(frozen=True)
class MixConfig:
    mix_ratio: float
    source_generator: str
    seed: int

    def __post_init__(self):
        if not 0.0 < self.mix_ratio < 1.0:
            raise ValueError(f"mix_ratio must be in (0, 1), got {self.mix_ratio}")


def select_replacement_indices(train_set: list[LogoImage] | tuple[LogoImage, ...],
                               mix_ratio: float, seed: int) -> list[int]:
    """Seeded choice of indices to replace; per-brand balanced within one item.

    Per-brand counts are apportioned by largest remainder so the global count
    equals round(mix_ratio * N).
    """
    by_brand: dict[int, list[int]] = {}
    for i, img in enumerate(train_set):
        by_brand.setdefault(img.brand_id, []).append(i)
    total_target = int(round(mix_ratio * len(train_set)))
    brand_ids = sorted(by_brand)
    base = {b: int(mix_ratio * len(by_brand[b])) for b in brand_ids}
    remainder = total_target - sum(base.values())
    order = sorted(brand_ids, key=lambda b: (-(mix_ratio * len(by_brand[b]) - base[b]), b))
    idx = 0
    while remainder > 0 and idx < 2 * len(brand_ids):
        b = order[idx % len(brand_ids)]
        if base[b] < len(by_brand[b]):
            base[b] += 1
            remainder -= 1
        idx += 1
    rng = random.Random(seed)
    chosen: list[int] = []
    for b in brand_ids:
        members = sorted(by_brand[b])
        rng.shuffle(members)
        chosen.extend(members[:base[b]])
    return sorted(chosen)


def mix_training_set(train_set: list[LogoImage] | tuple[LogoImage, ...],
                     gen: PerturbationGenerator, mix: MixConfig) -> list[LogoImage]:
    """Replace a mix_ratio fraction of logos with crafted variants in place.

    Labels and corpus size are preserved exactly; only provenance and pixels
    of the replaced logos change.
    """
    indices = select_replacement_indices(train_set, mix.mix_ratio, mix.seed)
    replacements = craft_batch(gen, [train_set[i] for i in indices])
    mixed = list(train_set)
    for i, adv in zip(indices, replacements):
        mixed[i] = adv
    return mixed


def adversarial_train(disc_config: DiscTrainConfig, train_set: list[LogoImage],
                      gen: PerturbationGenerator, mix: MixConfig, k: int,
                      base_disc: Discriminator | None = None) -> Discriminator:
    """Train a robust discriminator on an adversarially mixed corpus.

    Trains from scratch by default; pass base_disc to fine-tune an existing
    model instead. Metadata records the mix provenance.
    """
    if not gen.metadata.get("epochs_run"):
        raise ValueError("generator must be trained before adversarial training")
    mixed = mix_training_set(train_set, gen, mix)
    disc = base_disc if base_disc is not None else build_discriminator(
        disc_config.arch, k=k, profile=disc_config.scale_profile, seed=disc_config.seed)
    disc = train_discriminator(disc, mixed, disc_config)
    disc.metadata["adversarial_mix"] = {
        "ratio": mix.mix_ratio,
        "source_generator": mix.source_generator,
        "seed": mix.seed,
        "replaced": len(select_replacement_indices(train_set, mix.mix_ratio, mix.seed)),
        "fine_tuned": base_disc is not None,
    }
    return disc


def adaptive_generator(robust_disc: Discriminator, train_set: list[LogoImage],
                       config: GenTrainConfig) -> PerturbationGenerator:
    """Attack a robust discriminator with the standard generator training."""
    if "adversarial_mix" not in robust_disc.metadata:
        raise ValueError("adaptive generators target adversarially trained discriminators")
    gen = train_generator(robust_disc, train_set, config)
    gen.metadata["adaptive_against_mix"] = robust_disc.metadata["adversarial_mix"]["ratio"]
    return gen


def game_rounds(n: int, base_disc_config: DiscTrainConfig, base_gen_config: GenTrainConfig,
                mix: MixConfig, train_set: list[LogoImage], k: int,
                initial_generator: PerturbationGenerator | None = None,
                out_dir: str | Path | None = None,
                ) -> list[tuple[Discriminator, PerturbationGenerator]]:
    """Alternate adversarial training and adaptive attack for n rounds.

    Each round retrains the discriminator on replacements crafted by the
    latest generator, then trains an adaptive generator against it. When an
    initial generator is not supplied, a vanilla discriminator/generator pair
    is trained first to bootstrap round 1. Round artifacts are checkpointed
    under out_dir/rounds/<i>/ when requested.
    """
    if n < 1:
        raise ValueError(f"need at least one round, got {n}")
    gen = initial_generator
    if gen is None:
        vanilla = build_discriminator(base_disc_config.arch, k=k,
                                      profile=base_disc_config.scale_profile,
                                      seed=base_disc_config.seed)
        vanilla = train_discriminator(vanilla, train_set, base_disc_config)
        gen = train_generator(vanilla, train_set, base_gen_config)

    rounds: list[tuple[Discriminator, PerturbationGenerator]] = []
    for i in range(1, n + 1):
        round_mix = MixConfig(mix_ratio=mix.mix_ratio,
                              source_generator=generator_checksum(gen.core),
                              seed=mix.seed + i)
        disc = adversarial_train(base_disc_config, train_set, gen, round_mix, k=k)
        disc.metadata["round"] = i
        gen = adaptive_generator(disc, train_set, base_gen_config)
        gen.metadata["round"] = i
        rounds.append((disc, gen))
        if out_dir is not None:
            _checkpoint_round(Path(out_dir), i, disc, gen)
    return rounds


def _checkpoint_round(out_dir: Path, round_idx: int,
                      disc: Discriminator, gen: PerturbationGenerator) -> None:
    from .discriminators.base import save_discriminator
    from .generation import save_generator

    rdir = out_dir / "rounds" / str(round_idx)
    save_discriminator(disc, rdir / "disc")
    save_generator(gen, rdir / "gen")
    manifest = {
        "round": round_idx,
        "discriminator": discriminator_hash(disc),
        "generator": generator_checksum(gen.core),
        "generator_trained_against": gen.trained_against,
        "mix": disc.metadata.get("adversarial_mix"),
    }
    with open(rdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
