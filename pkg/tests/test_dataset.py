import json

import numpy as np
import pytest
from PIL import Image

from logogap.dataset import (
    Brand,
    BrandRegistry,
    LogoImage,
    UNKNOWN_BRAND,
    load_corpus,
    preprocess,
    protected_unprotected,
    split,
)

from conftest import make_logo


class TestPreprocess:
    def test_constant_white_resizes_to_ones(self):
        raw = np.full((448, 448, 3), 255, dtype=np.uint8)
        logo = preprocess(raw)
        assert logo.pixels.shape == (3, 224, 224)
        assert np.all(logo.pixels == 1.0)

    def test_grayscale_replicated(self):
        raw = (np.arange(224 * 224, dtype=np.uint64) % 256).astype(np.uint8).reshape(224, 224)
        logo = preprocess(raw)
        assert np.array_equal(logo.pixels[0], logo.pixels[1])
        assert np.array_equal(logo.pixels[0], logo.pixels[2])

    def test_fully_transparent_composites_to_white(self):
        raw = np.zeros((100, 300, 4), dtype=np.uint8)
        raw[:, :, :3] = 17  # arbitrary hidden color
        logo = preprocess(raw)
        assert np.all(logo.pixels == 1.0)

    def test_idempotent_bit_exact(self):
        rng = np.random.default_rng(3)
        first = preprocess(rng.random((180, 260, 3)).astype(np.float32))
        second = preprocess(first)
        assert np.array_equal(first.pixels, second.pixels)

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError):
            preprocess(np.zeros((0, 10, 3), dtype=np.uint8))

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ValueError):
            preprocess(np.zeros((10, 10, 5), dtype=np.uint8))

    def test_chw_float_passthrough(self):
        rng = np.random.default_rng(4)
        pixels = rng.random((3, 224, 224)).astype(np.float32)
        logo = preprocess(pixels)
        assert np.array_equal(logo.pixels, pixels)

    def test_pixel_range_enforced_on_logo(self):
        bad = np.full((3, 224, 224), 1.5, dtype=np.float32)
        with pytest.raises(ValueError):
            LogoImage(bad)


class TestRegistry:
    def test_noncontiguous_ids_rejected(self):
        with pytest.raises(ValueError):
            BrandRegistry((Brand(0, "a", "a", ("a.com",)), Brand(2, "b", "b", ("b.com",))))

    def test_missing_domain_rejected(self):
        with pytest.raises(ValueError):
            BrandRegistry((Brand(0, "a", "a", ()),))

    def test_json_roundtrip(self, tmp_path):
        reg = BrandRegistry((Brand(0, "alpha", "alpha_dir", ("alpha.com", "alpha.org")),
                             Brand(1, "beta", "beta_dir", ("beta.io",))))
        reg.to_json(tmp_path / "reg.json")
        loaded = BrandRegistry.from_json(tmp_path / "reg.json")
        assert loaded == reg
        assert loaded.k == 2


class TestLoadCorpus:
    @pytest.fixture()
    def corpus_root(self, tmp_path):
        root = tmp_path / "corpus"
        for b, dirname in enumerate(["acme", "globex"]):
            d = root / dirname
            d.mkdir(parents=True)
            for i in range(3):
                arr = np.full((40, 40, 3), 50 * b + 10 * i, dtype=np.uint8)
                Image.fromarray(arr).save(d / f"img_{i}.png")
        stray = root / "others"
        stray.mkdir()
        Image.fromarray(np.zeros((30, 30, 3), dtype=np.uint8)).save(stray / "x.jpg")
        reg = {"brands": [
            {"id": 0, "name": "acme", "dirname": "acme", "domains": ["acme.com"]},
            {"id": 1, "name": "globex", "dirname": "globex", "domains": ["globex.com"]},
        ]}
        (root / "registry.json").write_text(json.dumps(reg))
        return root

    def test_counts_and_unknown_assignment(self, corpus_root):
        registry, images = load_corpus(corpus_root, corpus_root / "registry.json")
        assert registry.k == 2
        protected, unprotected = protected_unprotected(images)
        assert len(protected) == 6
        assert len(unprotected) == 1
        assert all(i.brand_id == UNKNOWN_BRAND for i in unprotected)

    def test_no_unregistered_images_is_fine(self, tmp_path):
        root = tmp_path / "c"
        (root / "only").mkdir(parents=True)
        Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(root / "only" / "a.png")
        (root / "registry.json").write_text(json.dumps({"brands": [
            {"id": 0, "name": "only", "dirname": "only", "domains": ["only.com"]}]}))
        _, images = load_corpus(root, root / "registry.json")
        assert len(protected_unprotected(images)[1]) == 0

    def test_missing_registered_dir_is_hard_error(self, corpus_root):
        reg = json.loads((corpus_root / "registry.json").read_text())
        reg["brands"].append({"id": 2, "name": "ghost", "dirname": "ghost",
                              "domains": ["ghost.com"]})
        (corpus_root / "registry.json").write_text(json.dumps(reg))
        with pytest.raises(FileNotFoundError):
            load_corpus(corpus_root, corpus_root / "registry.json")

    def test_unreadable_image_skipped_and_counted(self, corpus_root, tmp_path):
        (corpus_root / "acme" / "broken.png").write_bytes(b"not a png")
        summary_path = tmp_path / "summary.json"
        _, images = load_corpus(corpus_root, corpus_root / "registry.json",
                                summary_path=summary_path)
        assert len(images) == 7
        summary = json.loads(summary_path.read_text())
        assert len(summary["skipped"]) == 1
        assert summary["per_brand"]["0"] == 3
        assert summary["unprotected"] == 1


class TestSplit:
    def _images(self, counts: dict[int, int]):
        out = []
        for brand, n in counts.items():
            for i in range(n):
                out.append(make_logo(value=0.5, brand_id=brand,
                                     source_path=f"b{brand}/i{i}.png"))
        return out

    def test_single_brand_exact_ratio(self):
        ds = split(self._images({0: 100}), ratio=0.85, seed=7)
        assert len(ds.train) == 85 and len(ds.test) == 15

    def test_deterministic_membership(self):
        images = self._images({0: 20, 1: 31, 2: 17})
        a = split(images, ratio=0.85, seed=3)
        b = split(images, ratio=0.85, seed=3)
        assert [i.source_path for i in a.train] == [i.source_path for i in b.train]
        assert [i.source_path for i in a.test] == [i.source_path for i in b.test]
        c = split(images, ratio=0.85, seed=4)
        assert [i.source_path for i in a.train] != [i.source_path for i in c.train]

    def test_mini_profile_per_brand_34_6(self):
        images = self._images({b: 40 for b in range(12)})
        ds = split(images, ratio=0.85, seed=1)
        for b in range(12):
            assert sum(1 for i in ds.train if i.brand_id == b) == 34
            assert sum(1 for i in ds.test if i.brand_id == b) == 6

    def test_global_count_within_one_item(self):
        for counts in ({0: 7, 1: 9, 2: 13}, {0: 5, 1: 6}, {0: 11, 1: 11, 2: 3, 3: 29}):
            total = sum(counts.values())
            for ratio in (0.5, 0.7, 0.85):
                ds = split(self._images(counts), ratio=ratio, seed=2)
                assert abs(len(ds.train) - ratio * total) <= 1

    def test_every_brand_keeps_a_test_image(self):
        ds = split(self._images({0: 2, 1: 40}), ratio=0.85, seed=5)
        assert any(i.brand_id == 0 for i in ds.test)
        assert any(i.brand_id == 1 for i in ds.test)

    def test_disjoint_by_source_path(self):
        ds = split(self._images({0: 9, 1: 14}), ratio=0.6, seed=1)
        assert not ({i.source_path for i in ds.train} & {i.source_path for i in ds.test})

    def test_too_few_images_rejected(self):
        with pytest.raises(ValueError):
            split(self._images({0: 1, 1: 10}), ratio=0.85, seed=1)

    def test_unknown_brand_rejected(self):
        images = [make_logo(value=0.2, brand_id=UNKNOWN_BRAND, source_path="u.png")]
        with pytest.raises(ValueError):
            split(images, ratio=0.5, seed=1)

    def test_bad_ratio_rejected(self):
        for ratio in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                split(self._images({0: 4}), ratio=ratio, seed=1)
