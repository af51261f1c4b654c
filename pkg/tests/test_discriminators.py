import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from logogap.dataset import LogoImage
from logogap.discriminators import (
    ConfidenceVector,
    DiscTrainConfig,
    as_probability,
    build_discriminator,
    build_siamese,
    build_swin,
    build_vit,
    discriminator_hash,
    import_backbone_weights,
    load_discriminator,
    save_discriminator,
    step_relu,
    train_discriminator,
    weights_checksum,
)
from logogap.discriminators.siamese import StepReLU
from logogap.discriminators.swin import SwinBlock
from logogap.errors import ContractError

from conftest import make_logo


def oracle_step_relu(x: float, alpha: float) -> float:
    # independent re-implementation of the step activation
    return max(0.0, alpha * math.ceil(x / alpha))


class TestStepRelu:
    def test_positive_example(self):
        assert step_relu(0.3, 0.5) == pytest.approx(0.5)

    def test_negative_example(self):
        assert step_relu(-0.2, 0.5) == 0.0

    def test_matches_oracle_on_grid(self):
        xs = np.round(np.arange(-2.0, 2.0 + 1e-9, 0.01), 10)
        assert len(xs) == 401
        for alpha in (0.25, 0.5, 1.0):
            got = step_relu(xs, alpha)
            want = np.array([oracle_step_relu(float(x), alpha) for x in xs])
            assert np.array_equal(got, want), f"mismatch at alpha={alpha}"

    def test_nonpositive_alpha_rejected(self):
        for alpha in (0.0, -1.0):
            with pytest.raises(ValueError):
                step_relu(1.0, alpha)
            with pytest.raises(ValueError):
                StepReLU(alpha)

    @given(st.floats(-50, 50), st.sampled_from([0.1, 0.25, 0.5, 1.0, 2.0]))
    def test_lattice_and_bounds(self, x, alpha):
        y = step_relu(x, alpha)
        if x <= 0:
            assert y == 0.0
        else:
            assert max(0.0, x) <= y < x + alpha + 1e-9
        # output sits on the lattice {0, alpha, 2 alpha, ...}
        q = y / alpha
        assert abs(q - round(q)) < 1e-6

    def test_torch_tensor_path_matches_scalar_path(self):
        xs = torch.linspace(-3, 3, 101)
        got = step_relu(xs, 0.25).numpy()
        want = np.array([oracle_step_relu(float(x), 0.25) for x in xs])
        assert np.allclose(got, want, atol=1e-6)

    def test_straight_through_gradient_is_rectifier_mask(self):
        x = torch.tensor([-1.0, -0.1, 0.2, 1.7], requires_grad=True)
        StepReLU(0.5)(x).sum().backward()
        assert x.grad.tolist() == [0.0, 0.0, 1.0, 1.0]


class TestConfidenceVector:
    def test_probability_validation(self):
        with pytest.raises(ValueError):
            ConfidenceVector(np.array([0.7, 0.7], dtype=np.float32), "probability")
        v = ConfidenceVector(np.array([0.25, 0.75], dtype=np.float32), "probability")
        assert v.k == 2

    def test_similarity_validation(self):
        with pytest.raises(ValueError):
            ConfidenceVector(np.array([1.5], dtype=np.float32), "similarity")

    def test_top_breaks_ties_to_lowest_brand(self):
        v = ConfidenceVector(np.array([0.4, 0.4, 0.2], dtype=np.float32), "probability")
        assert v.top() == (0, pytest.approx(0.4))


class TestAsProbability:
    def test_probability_identity(self):
        v = ConfidenceVector(np.array([0.2, 0.8], dtype=np.float32), "probability")
        assert as_probability(v, temperature=0.3) is v

    def test_equal_similarities_become_uniform(self):
        v = ConfidenceVector(np.ones(5, dtype=np.float32), "similarity")
        out = as_probability(v)
        assert np.allclose(out.values, 0.2, atol=1e-6)

    def test_hand_computed_softmax(self):
        v = ConfidenceVector(np.array([1.0, -1.0], dtype=np.float32), "similarity")
        out = as_probability(v, temperature=0.5)
        z = np.exp([2.0, -2.0])
        assert np.allclose(out.values, z / z.sum(), atol=1e-6)
        assert out.values[0] == pytest.approx(0.982, abs=1e-3)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=8),
           st.sampled_from([0.05, 0.1, 0.5, 1.0, 10.0]))
    @settings(max_examples=60)
    def test_argmax_preserved_for_any_temperature(self, sims, temperature):
        v = ConfidenceVector(np.array(sims, dtype=np.float32), "similarity")
        out = as_probability(v, temperature)
        assert int(np.argmax(out.values)) == int(np.argmax(v.values))

    def test_nonpositive_temperature_rejected(self):
        v = ConfidenceVector(np.zeros(3, dtype=np.float32), "similarity")
        with pytest.raises(ValueError):
            as_probability(v, temperature=0.0)


class TestArchitectures:
    def test_vit_patch_arithmetic(self):
        disc = build_vit(k=5, profile="mini", seed=0)
        assert disc.model.num_patches == 196
        assert disc.model.seq_len == 197

    def test_vit_single_class_always_certain(self):
        disc = build_vit(k=1, profile="mini", seed=0)
        vec = disc.predict(make_logo(seed=1))
        assert vec.values.shape == (1,)
        assert vec.values[0] == pytest.approx(1.0)

    def test_vit_indivisible_input_rejected(self):
        from logogap.discriminators.vit import PatchTransformerClassifier
        with pytest.raises(ValueError):
            PatchTransformerClassifier(k=3, image_size=224, patch_size=15)

    def test_vit_parameter_counts(self):
        mini = build_vit(k=181, profile="mini", seed=0)
        paper = build_vit(k=181, profile="paper", seed=0)
        n_mini = sum(p.numel() for p in mini.model.parameters())
        n_paper = sum(p.numel() for p in paper.model.parameters())
        assert n_mini < n_paper
        assert abs(n_paper - 85.9e6) / 85.9e6 < 0.05

    def test_swin_spatial_trajectory(self):
        disc = build_swin(k=3, profile="mini", seed=0)
        resolutions = []
        from logogap.discriminators.swin import PatchMerging
        for stage in disc.model.stages:
            if isinstance(stage, PatchMerging):
                resolutions.append(stage.resolution)
        assert resolutions == [56, 28, 14]
        assert disc.model.final_resolution == 7

    def test_swin_zero_shift_equals_unshifted(self):
        torch.manual_seed(0)
        shifted = SwinBlock(dim=16, heads=2, resolution=14, window=7, shift_size=3)
        plain = SwinBlock(dim=16, heads=2, resolution=14, window=7, shift_size=0)
        plain.load_state_dict(shifted.state_dict())
        x = torch.randn(2, 14 * 14, 16)
        # neutralize the shift on a block built with one: no roll, no mask
        shifted.shift_size = 0
        shifted.attn_mask = None
        with torch.no_grad():
            assert torch.equal(shifted(x), plain(x))

    def test_swin_probabilities_normalized(self):
        disc = build_swin(k=6, profile="mini", seed=0)
        vec = disc.predict(make_logo(seed=2))
        assert vec.kind == "probability"
        assert vec.values.sum() == pytest.approx(1.0, abs=1e-5)

    def test_siamese_paper_backbone_size(self):
        disc = build_siamese(k=181, profile="paper", seed=0)
        backbone = sum(p.numel() for n, p in disc.model.named_parameters()
                       if not n.startswith("head."))
        assert abs(backbone - 23.9e6) / 23.9e6 < 0.1

    def test_siamese_hardened_differs_only_by_activation(self):
        plain = build_siamese(k=3, profile="mini", hardened=False, seed=0)
        hard = build_siamese(k=3, profile="mini", hardened=True, seed=1)
        hard.model.load_state_dict(plain.model.state_dict())  # same parameter names
        assert weights_checksum(hard.model) == weights_checksum(plain.model)
        acts = [m for m in hard.model.modules() if isinstance(m, StepReLU)]
        assert acts and not any(isinstance(m, StepReLU) for m in plain.model.modules())

    def test_siamese_self_similarity_is_one(self, tiny_corpus):
        disc = build_siamese(k=2, profile="mini", seed=0)
        a, b = make_logo(seed=5, brand_id=0), make_logo(seed=6, brand_id=1)
        config = DiscTrainConfig.defaults("siamese", "mini", seed=0, steps=1)
        train_discriminator(disc, [a, b], config)
        # one training logo per brand: the exemplar is that logo's embedding
        vec = disc.predict(a)
        assert vec.kind == "similarity"
        assert vec.values[0] == pytest.approx(1.0, abs=1e-5)

    def test_predict_is_pure(self):
        disc = build_vit(k=4, profile="mini", seed=0)
        logo = make_logo(seed=3)
        v1, v2 = disc.predict(logo), disc.predict(logo)
        assert np.array_equal(v1.values, v2.values)

    def test_unknown_arch_rejected(self):
        with pytest.raises(ValueError):
            build_discriminator("mlp", k=3)


class TestTraining:
    def _tiny_set(self, k=2, per_brand=4):
        return [make_logo(seed=10 * b + i, brand_id=b)
                for b in range(k) for i in range(per_brand)]

    def test_zero_epochs_is_identity(self):
        disc = build_vit(k=2, profile="mini", seed=0)
        before = weights_checksum(disc.model)
        config = DiscTrainConfig.defaults("vit", "mini", seed=0, epochs=0,
                                          head_finetune_epochs=0)
        out = train_discriminator(disc, self._tiny_set(), config)
        assert out is disc
        assert weights_checksum(disc.model) == before

    def test_zero_steps_is_identity(self):
        disc = build_siamese(k=2, profile="mini", seed=0)
        before = weights_checksum(disc.model)
        config = DiscTrainConfig.defaults("siamese", "mini", seed=0, steps=0)
        train_discriminator(disc, self._tiny_set(), config)
        assert weights_checksum(disc.model) == before

    def test_labels_out_of_range_rejected(self):
        disc = build_vit(k=2, profile="mini", seed=0)
        bad = [make_logo(seed=1, brand_id=5)]
        config = DiscTrainConfig.defaults("vit", "mini", seed=0, epochs=2)
        with pytest.raises(ValueError):
            train_discriminator(disc, bad, config)

    def test_empty_train_set_rejected(self):
        disc = build_vit(k=2, profile="mini", seed=0)
        config = DiscTrainConfig.defaults("vit", "mini", seed=0)
        with pytest.raises(ValueError):
            train_discriminator(disc, [], config)

    def test_arch_mismatch_rejected(self):
        disc = build_vit(k=2, profile="mini", seed=0)
        config = DiscTrainConfig.defaults("swin", "mini", seed=0)
        with pytest.raises(ValueError):
            train_discriminator(disc, self._tiny_set(), config)

    def test_head_finetune_must_be_shorter(self):
        with pytest.raises(ValueError):
            DiscTrainConfig.defaults("vit", "mini", seed=0, epochs=3,
                                     head_finetune_epochs=3)

    def test_paper_defaults_match_training_table(self):
        for arch in ("vit", "swin"):
            cfg = DiscTrainConfig.defaults(arch, "paper", seed=0)
            assert cfg.batch_size == 32
            assert cfg.momentum == 0.9
            assert cfg.learning_rate == 0.01
            assert cfg.weight_decay == 5e-4
            assert cfg.epochs == 200
            assert cfg.head_finetune_epochs == 50
            assert cfg.value_clip == 2.5
        cfg = DiscTrainConfig.defaults("siamese", "paper", seed=0)
        assert cfg.steps == 10000
        assert cfg.learning_rate == 0.003
        assert cfg.weight_decay == 0.0

    def test_short_training_runs_and_logs_losses(self):
        disc = build_vit(k=2, profile="mini", seed=0)
        config = DiscTrainConfig.defaults("vit", "mini", seed=0, epochs=2,
                                          head_finetune_epochs=1)
        train_discriminator(disc, self._tiny_set(), config)
        assert disc.is_trained
        assert len(disc.metadata["loss_history"]) == 2


class TestCheckpoint:
    def test_roundtrip_preserves_predictions(self, tmp_path):
        disc = build_siamese(k=2, profile="mini", seed=0)
        config = DiscTrainConfig.defaults("siamese", "mini", seed=0, steps=2)
        train_discriminator(disc, [make_logo(seed=1, brand_id=0),
                                   make_logo(seed=2, brand_id=1)], config)
        save_discriminator(disc, tmp_path / "ckpt")
        loaded = load_discriminator(tmp_path / "ckpt")
        logo = make_logo(seed=9)
        assert np.array_equal(disc.predict(logo).values, loaded.predict(logo).values)
        assert discriminator_hash(disc) == discriminator_hash(loaded)

    def test_tampered_checkpoint_rejected(self, tmp_path):
        disc = build_vit(k=2, profile="mini", seed=0)
        disc.metadata["trained"] = True
        save_discriminator(disc, tmp_path / "ckpt")
        other = build_vit(k=2, profile="mini", seed=99)
        import torch as _torch
        _torch.save({"state_dict": other.model.state_dict()}, tmp_path / "ckpt" / "disc.pt")
        with pytest.raises(ContractError):
            load_discriminator(tmp_path / "ckpt")

    def test_backbone_weight_import(self, tmp_path):
        src = build_vit(k=3, profile="mini", seed=1)
        arrays = {name: t.numpy() for name, t in src.model.state_dict().items()}
        np.savez(tmp_path / "weights.npz", **arrays)
        dst = build_vit(k=3, profile="mini", seed=2)
        n = import_backbone_weights(dst, tmp_path / "weights.npz")
        assert n == len(arrays)
        logo = make_logo(seed=4)
        assert np.array_equal(src.predict(logo).values, dst.predict(logo).values)
