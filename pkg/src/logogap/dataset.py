"""Logo corpora: loading, preprocessing, brand registry, train/test splits.

Images are stored as float32 CHW arrays of shape (3, 224, 224) with values
in [0, 1]. Preprocessing (alpha compositing over white, channel replication,
bilinear resize) is fixed so that results are bit-reproducible across runs.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

#: Brand id used for logos outside the protected set.
UNKNOWN_BRAND = -1

IMAGE_SIZE = 224
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}

PROVENANCE_ORIGINAL = "original"
PROVENANCE_ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class LogoImage:
    """A preprocessed logo: float32 pixels (3, 224, 224) in [0, 1]."""

    pixels: np.ndarray
    brand_id: int = UNKNOWN_BRAND
    provenance: str = PROVENANCE_ORIGINAL
    source_path: str = ""

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.shape != (3, IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"pixels must have shape (3, {IMAGE_SIZE}, {IMAGE_SIZE}), got "
                             f"{getattr(p, 'shape', type(p))}")
        if p.dtype != np.float32:
            raise ValueError(f"pixels must be float32, got {p.dtype}")
        lo, hi = float(p.min()), float(p.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel values must lie in [0, 1], got [{lo}, {hi}]")
        if self.provenance not in (PROVENANCE_ORIGINAL, PROVENANCE_ADVERSARIAL):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        p.setflags(write=False)


@dataclass(frozen=True)
class Brand:
    brand_id: int
    name: str
    dirname: str
    domains: tuple[str, ...]


@dataclass(frozen=True)
class BrandRegistry:
    """The protected brand set: contiguous ids 0..k-1, each with >=1 domain."""

    brands: tuple[Brand, ...]

    def __post_init__(self):
        ids = [b.brand_id for b in self.brands]
        if ids != list(range(len(ids))):
            raise ValueError(f"brand ids must be contiguous 0..k-1, got {ids}")
        for b in self.brands:
            if not b.domains:
                raise ValueError(f"brand {b.name!r} has no domains")

    @property
    def k(self) -> int:
        return len(self.brands)

    def domains_of(self, brand_id: int) -> tuple[str, ...]:
        return self.brands[brand_id].domains

    @classmethod
    def from_json(cls, path: str | Path) -> "BrandRegistry":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        entries = sorted(doc["brands"], key=lambda e: e["id"])
        brands = tuple(
            Brand(brand_id=e["id"], name=e["name"], dirname=e["dirname"],
                  domains=tuple(e["domains"]))
            for e in entries
        )
        return cls(brands)

    def to_json(self, path: str | Path) -> None:
        doc = {"brands": [
            {"id": b.brand_id, "name": b.name, "dirname": b.dirname,
             "domains": list(b.domains)}
            for b in self.brands
        ]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class LoadSummary:
    per_brand: dict[int, int]
    unprotected: int
    skipped: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"per_brand": {str(k): v for k, v in sorted(self.per_brand.items())},
                "unprotected": self.unprotected,
                "skipped": list(self.skipped)}


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[LogoImage, ...]
    test: tuple[LogoImage, ...]
    seed: int
    ratio: float

    def __post_init__(self):
        overlap = {i.source_path for i in self.train} & {i.source_path for i in self.test}
        if overlap:
            raise ValueError(f"train/test overlap on {sorted(overlap)[:3]}...")


def preprocess(raw, brand_id: int = UNKNOWN_BRAND, provenance: str = PROVENANCE_ORIGINAL,
               source_path: str = "") -> LogoImage:
    """Normalize an arbitrary decoded image into a LogoImage.

    Accepts HW, HWC or CHW arrays (uint8/uint16/float, 1-4 channels) or an
    existing LogoImage. Alpha is composited over white, grayscale replicated
    to three channels, and the result bilinearly resized to 224x224. Already
    conforming inputs pass through bit-exactly.
    """
    if isinstance(raw, LogoImage):
        return LogoImage(raw.pixels, brand_id=brand_id, provenance=provenance,
                         source_path=source_path or raw.source_path)
    arr = np.asarray(raw)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[2] not in (1, 2, 3, 4):
        if arr.shape[0] in (1, 2, 3, 4):
            arr = np.transpose(arr, (1, 2, 0))  # CHW -> HWC
        else:
            raise ValueError(f"cannot infer channel layout of shape {arr.shape}")
    elif arr.ndim != 3:
        raise ValueError(f"expected a 2D or 3D image array, got ndim={arr.ndim}")
    h, w, c = arr.shape
    if h == 0 or w == 0:
        raise ValueError("zero-area image")
    if c not in (1, 2, 3, 4):
        raise ValueError(f"expected 1-4 channels, got {c}")

    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / np.float32(255.0)
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float32) / np.float32(65535.0)
    else:
        arr = np.clip(arr.astype(np.float32), 0.0, 1.0)

    # split off alpha (2 channels = gray+alpha, 4 = rgb+alpha)
    if c in (2, 4):
        alpha = arr[:, :, -1:]
        arr = arr[:, :, :-1] * alpha + (1.0 - alpha)
        c = arr.shape[2]
    if c == 1:
        arr = np.repeat(arr, 3, axis=2)

    chw = np.ascontiguousarray(np.transpose(arr, (2, 0, 1)))
    if chw.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE):
        t = torch.from_numpy(chw).unsqueeze(0)
        t = F.interpolate(t, size=(IMAGE_SIZE, IMAGE_SIZE), mode="bilinear",
                          align_corners=False)
        chw = t.squeeze(0).numpy()
    pixels = np.clip(np.ascontiguousarray(chw, dtype=np.float32), 0.0, 1.0)
    return LogoImage(pixels, brand_id=brand_id, provenance=provenance,
                     source_path=source_path)


def _decode_file(path: Path) -> np.ndarray | None:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "LA", "RGB", "RGBA"):
                im = im.convert("RGBA" if "A" in im.mode or im.mode == "P" else "RGB")
            return np.asarray(im)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        log.warning("skipping unreadable image %s: %s", path, exc)
        return None


def load_corpus(root_path: str | Path, registry_path: str | Path,
                summary_path: str | Path | None = None,
                ) -> tuple[BrandRegistry, list[LogoImage]]:
    """Load every logo under root_path.

    Directories named in the registry yield protected-brand images; any other
    directory's images are loaded with brand_id = UNKNOWN_BRAND and form the
    unprotected pool. Unreadable images are skipped with a warning and counted
    in the load summary (written to summary_path as JSON when given). A
    registry entry whose directory is missing is a hard error.
    """
    root = Path(root_path)
    registry = BrandRegistry.from_json(registry_path)
    by_dirname = {b.dirname: b.brand_id for b in registry.brands}
    for b in registry.brands:
        if not (root / b.dirname).is_dir():
            raise FileNotFoundError(f"registry brand {b.name!r} expects directory "
                                    f"{root / b.dirname}")

    images: list[LogoImage] = []
    per_brand = {b.brand_id: 0 for b in registry.brands}
    unprotected = 0
    skipped: list[str] = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        brand_id = by_dirname.get(sub.name, UNKNOWN_BRAND)
        for f in sorted(sub.iterdir()):
            if f.suffix.lower() not in IMAGE_EXTENSIONS or not f.is_file():
                continue
            arr = _decode_file(f)
            if arr is None:
                skipped.append(str(f))
                continue
            images.append(preprocess(arr, brand_id=brand_id, source_path=str(f)))
            if brand_id == UNKNOWN_BRAND:
                unprotected += 1
            else:
                per_brand[brand_id] += 1

    summary = LoadSummary(per_brand=per_brand, unprotected=unprotected, skipped=skipped)
    if skipped:
        log.warning("skipped %d unreadable images", len(skipped))
    if summary_path is not None:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary.to_dict(), fh, indent=2)
            fh.write("\n")
    return registry, images


def protected_unprotected(images: list[LogoImage]) -> tuple[list[LogoImage], list[LogoImage]]:
    """Partition a loaded corpus into (protected, unprotected) by brand id."""
    prot = [i for i in images if i.brand_id != UNKNOWN_BRAND]
    unprot = [i for i in images if i.brand_id == UNKNOWN_BRAND]
    return prot, unprot


def split(images: list[LogoImage], ratio: float, seed: int) -> DatasetSplit:
    """Deterministic stratified train/test split of protected-brand images.

    Train counts are apportioned per brand by largest remainder so the global
    train fraction matches `ratio` within one item, while every brand keeps at
    least one test image. Membership depends only on (images, ratio, seed).
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    by_brand: dict[int, list[LogoImage]] = {}
    for img in images:
        if img.brand_id == UNKNOWN_BRAND:
            raise ValueError(f"cannot split image without a brand: {img.source_path}")
        by_brand.setdefault(img.brand_id, []).append(img)
    for bid, members in by_brand.items():
        if len(members) < 2:
            raise ValueError(f"brand {bid} has {len(members)} image(s); need >=2 to stratify")

    total = len(images)
    target_train = int(np.floor(ratio * total + 0.5))
    brand_ids = sorted(by_brand)
    base = {b: int(np.floor(ratio * len(by_brand[b]))) for b in brand_ids}
    # keep >=1 test image per brand
    for b in brand_ids:
        base[b] = min(base[b], len(by_brand[b]) - 1)
    remainder = target_train - sum(base.values())
    frac = sorted(brand_ids,
                  key=lambda b: (-(ratio * len(by_brand[b]) - base[b]), b))
    idx = 0
    while remainder > 0 and idx < 2 * len(brand_ids):
        b = frac[idx % len(brand_ids)]
        if base[b] < len(by_brand[b]) - 1:
            base[b] += 1
            remainder -= 1
        idx += 1

    rng = random.Random(seed)
    train: list[LogoImage] = []
    test: list[LogoImage] = []
    for b in brand_ids:
        members = sorted(by_brand[b], key=lambda i: i.source_path)
        rng.shuffle(members)
        n_train = base[b]
        train.extend(members[:n_train])
        test.extend(members[n_train:])
    return DatasetSplit(train=tuple(train), test=tuple(test), seed=seed, ratio=ratio)


def to_tensor(images: list[LogoImage] | tuple[LogoImage, ...]) -> torch.Tensor:
    """Stack LogoImages into a float32 (N, 3, 224, 224) tensor."""
    if len(images) == 0:
        return torch.zeros((0, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=torch.float32)
    return torch.from_numpy(np.stack([i.pixels for i in images]))


def labels_tensor(images: list[LogoImage] | tuple[LogoImage, ...]) -> torch.Tensor:
    return torch.tensor([i.brand_id for i in images], dtype=torch.long)
