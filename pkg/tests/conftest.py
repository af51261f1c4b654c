"""Shared fixtures: tiny corpora for unit tests, cached artifacts for the
acceptance suite.

Trained artifacts are cached under tests/_cache (override with
LOGOGAP_TEST_CACHE) keyed by the training config hash, so reruns skip
retraining; delete the directory for a cold run.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest

from logogap.dataset import LogoImage, load_corpus, protected_unprotected, split
from logogap.fixtures import build_fixture_corpus

CACHE_ROOT = Path(os.environ.get("LOGOGAP_TEST_CACHE",
                                 Path(__file__).parent / "_cache"))


def make_logo(value: float | None = None, brand_id: int = 0, seed: int = 0,
              source_path: str = "") -> LogoImage:
    if value is not None:
        pixels = np.full((3, 224, 224), value, dtype=np.float32)
    else:
        rng = np.random.default_rng(seed)
        pixels = rng.random((3, 224, 224), dtype=np.float32)
    return LogoImage(pixels, brand_id=brand_id, source_path=source_path)


def _corpus_dir(name: str, **kwargs) -> Path:
    out = CACHE_ROOT / name
    marker = out / "registry.json"
    if not marker.exists():
        build_fixture_corpus(out, force=True, **kwargs)
    return out


@pytest.fixture(scope="session")
def tiny_corpus():
    """4 brands x 8 images + 30 unprotected; enough for plumbing tests."""
    root = _corpus_dir("tiny_corpus", brands=4, images_per_brand=8,
                       unprotected=30, seed=7)
    registry, images = load_corpus(root, root / "registry.json")
    protected, unprotected = protected_unprotected(images)
    ds = split(protected, ratio=0.75, seed=7)
    return {"root": root, "registry": registry, "split": ds,
            "protected": protected, "unprotected": unprotected}


@pytest.fixture(scope="session")
def mini_corpus():
    """The desk-scale corpus: 12 brands x 40 images + 300 unprotected."""
    root = _corpus_dir("mini_corpus", brands=12, images_per_brand=40,
                       unprotected=300, seed=1)
    registry, images = load_corpus(root, root / "registry.json")
    protected, unprotected = protected_unprotected(images)
    ds = split(protected, ratio=0.85, seed=1)
    return {"root": root, "registry": registry, "split": ds,
            "protected": protected, "unprotected": unprotected}


def cache_config_matches(directory: Path, config_hash: str) -> bool:
    sidecar = None
    for name in ("disc.json", "gen.json"):
        if (directory / name).exists():
            sidecar = directory / name
            break
    if sidecar is None:
        return False
    with open(sidecar, encoding="utf-8") as fh:
        doc = json.load(fh)
    return doc.get("config_hash") == config_hash
