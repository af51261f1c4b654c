"""Shared discriminator surface: confidence vectors, prediction, checkpoints.

All four architectures sit behind one interface: `predict` maps a LogoImage
to a length-k confidence vector. Transformer heads emit softmax probabilities
(kind="probability"); the embedding models emit cosine similarities against
per-brand exemplar embeddings (kind="similarity").
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..dataset import LogoImage, to_tensor
from ..errors import ContractError

KIND_PROBABILITY = "probability"
KIND_SIMILARITY = "similarity"

ARCHS = ("vit", "swin", "siamese", "siamese_pp")
PROFILES = ("paper", "mini")

#: temperature used when similarity vectors are mapped to probabilities
DEFAULT_SIMILARITY_TEMPERATURE = 0.1

PREDICT_BATCH = 32


@dataclass(frozen=True)
class ConfidenceVector:
    """Per-brand confidences; probabilities sum to 1, similarities lie in [-1, 1]."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError(f"values must be a nonempty 1-D array, got shape {v.shape}")
        if self.kind == KIND_PROBABILITY:
            if v.min() < 0.0 or v.max() > 1.0 or abs(float(v.sum()) - 1.0) > 1e-5:
                raise ValueError("probability vector must lie in [0,1] and sum to 1")
        elif self.kind == KIND_SIMILARITY:
            if v.min() < -1.0 - 1e-6 or v.max() > 1.0 + 1e-6:
                raise ValueError("similarity values must lie in [-1, 1]")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def k(self) -> int:
        return int(self.values.size)

    def top(self) -> tuple[int, float]:
        """(argmax brand, confidence); ties break to the lowest brand id."""
        idx = int(np.argmax(self.values))
        return idx, float(self.values[idx])


def as_probability(v: ConfidenceVector, temperature: float = DEFAULT_SIMILARITY_TEMPERATURE
                   ) -> ConfidenceVector:
    """Map a confidence vector to kind=probability.

    Probability inputs pass through unchanged; similarity inputs go through a
    softmax at the given temperature. The argmax brand is preserved for every
    temperature > 0.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if v.kind == KIND_PROBABILITY:
        return v
    z = v.values.astype(np.float64) / temperature
    z -= z.max()
    e = np.exp(z)
    p = (e / e.sum()).astype(np.float32)
    # renormalize in float32 so the sum invariant holds after rounding
    p = p / p.sum()
    return ConfidenceVector(p, KIND_PROBABILITY)


class Discriminator:
    """A logo-identification model plus the metadata needed to reuse it.

    `predict` is pure: the underlying module stays in eval mode and identical
    inputs produce identical outputs.
    """

    def __init__(self, arch: str, model: nn.Module, k: int, profile: str,
                 exemplar_embeddings: np.ndarray | None = None,
                 metadata: dict | None = None):
        if arch not in ARCHS:
            raise ValueError(f"arch must be one of {ARCHS}, got {arch!r}")
        if profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {profile!r}")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.arch = arch
        self.model = model.eval()
        self.k = k
        self.profile = profile
        self.exemplar_embeddings = exemplar_embeddings
        self.metadata = dict(metadata or {})

    @property
    def kind(self) -> str:
        return KIND_SIMILARITY if self.arch in ("siamese", "siamese_pp") else KIND_PROBABILITY

    @property
    def is_trained(self) -> bool:
        return bool(self.metadata.get("trained", False))

    def _logits_or_embeddings(self, batch: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            if self.kind == KIND_SIMILARITY:
                return self.model.embed(batch)
            return self.model(batch)

    def predict_batch(self, images: list[LogoImage] | tuple[LogoImage, ...]
                      ) -> list[ConfidenceVector]:
        """Confidence vectors for a batch of images, in input order."""
        out: list[ConfidenceVector] = []
        self.model.eval()
        for start in range(0, len(images), PREDICT_BATCH):
            chunk = images[start:start + PREDICT_BATCH]
            batch = to_tensor(chunk)
            raw = self._logits_or_embeddings(batch)
            if self.kind == KIND_PROBABILITY:
                if raw.shape[1] != self.k:
                    raise ContractError(f"model emits {raw.shape[1]} classes, expected {self.k}")
                probs = torch.softmax(raw, dim=1).numpy()
                for row in probs:
                    row = row.astype(np.float32)
                    out.append(ConfidenceVector(row / row.sum(), KIND_PROBABILITY))
            else:
                if self.exemplar_embeddings is None:
                    raise ContractError("similarity model has no exemplar embeddings; train first")
                if self.exemplar_embeddings.shape[0] != self.k:
                    raise ContractError("exemplar embedding count does not match k")
                sims = _cosine_matrix(raw.numpy(), self.exemplar_embeddings)
                for row in sims:
                    out.append(ConfidenceVector(np.clip(row, -1.0, 1.0), KIND_SIMILARITY))
        return out

    def predict(self, image: LogoImage) -> ConfidenceVector:
        return self.predict_batch([image])[0]


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = a / np.maximum(np.linalg.norm(a, axis=1, keepdims=True), 1e-12)
    bn = b / np.maximum(np.linalg.norm(b, axis=1, keepdims=True), 1e-12)
    return (an @ bn.T).astype(np.float32)


def predict(disc: Discriminator, image: LogoImage) -> ConfidenceVector:
    """Functional alias for Discriminator.predict."""
    return disc.predict(image)


def weights_checksum(model: nn.Module) -> str:
    """SHA-256 over all parameters and buffers in state-dict order."""
    h = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        t = state[name]
        h.update(name.encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def discriminator_hash(disc: Discriminator) -> str:
    h = hashlib.sha256()
    h.update(f"{disc.arch}:{disc.k}:{disc.profile}:".encode())
    h.update(weights_checksum(disc.model).encode())
    if disc.exemplar_embeddings is not None:
        h.update(np.ascontiguousarray(disc.exemplar_embeddings).tobytes())
    return h.hexdigest()


def save_discriminator(disc: Discriminator, directory: str | Path) -> Path:
    """Write <dir>/disc.pt (weights) and <dir>/disc.json (sidecar)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    payload = {"state_dict": disc.model.state_dict()}
    if disc.exemplar_embeddings is not None:
        payload["exemplar_embeddings"] = torch.from_numpy(
            np.ascontiguousarray(disc.exemplar_embeddings))
    torch.save(payload, d / "disc.pt")
    sidecar = {
        "arch": disc.arch,
        "k": disc.k,
        "profile": disc.profile,
        "hash": discriminator_hash(disc),
        **{key: disc.metadata[key] for key in sorted(disc.metadata)
           if _json_safe(disc.metadata[key])},
    }
    with open(d / "disc.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return d / "disc.pt"


def load_discriminator(directory: str | Path) -> Discriminator:
    from . import build_discriminator  # cycle: builders live in the package root

    d = Path(directory)
    with open(d / "disc.json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    disc = build_discriminator(sidecar["arch"], k=sidecar["k"], profile=sidecar["profile"])
    payload = torch.load(d / "disc.pt", map_location="cpu", weights_only=True)
    disc.model.load_state_dict(payload["state_dict"])
    if "exemplar_embeddings" in payload:
        disc.exemplar_embeddings = payload["exemplar_embeddings"].numpy()
    disc.metadata = {key: val for key, val in sidecar.items()
                     if key not in ("arch", "k", "profile", "hash")}
    stored = sidecar.get("hash")
    actual = discriminator_hash(disc)
    if stored is not None and stored != actual:
        raise ContractError(f"checkpoint hash mismatch in {d}: {stored} != {actual}")
    return disc


def import_backbone_weights(disc: Discriminator, archive_path: str | Path,
                            strict: bool = False) -> int:
    """Load pretrained weights from a flat name->array .npz archive.

    Arrays whose names and shapes match entries of the model state dict are
    copied in; the return value is the number of tensors imported.
    """
    arrays = np.load(archive_path)
    state = disc.model.state_dict()
    imported = 0
    missing = []
    for name in arrays.files:
        if name in state and tuple(state[name].shape) == arrays[name].shape:
            state[name] = torch.from_numpy(np.ascontiguousarray(arrays[name]))
            imported += 1
        else:
            missing.append(name)
    if strict and missing:
        raise ValueError(f"unmatched arrays in {archive_path}: {missing[:5]}")
    disc.model.load_state_dict(state)
    return imported


def _json_safe(value) -> bool:
    try:
        json.dumps(value)
        return True
    except (TypeError, ValueError):
        return False
