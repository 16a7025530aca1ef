"""Toy backbones: determinism, group locality, inversion quality, and parsing."""

import numpy as np
import pytest
import torch

from fashiontex.backbones import (
    CATEGORY_COLORS,
    BackbonesConfig,
    Embedding,
    FeaturePyramid,
    ParsingMask,
    load_backbones,
)
from fashiontex.latent import LatentOffset, apply_offsets

from conftest import make_image, make_latent


class TestLoading:
    def test_seeded_reload_gives_identical_generator(self, backbones):
        other = load_backbones(BackbonesConfig())
        w = make_latent(backbones, seed=11)
        assert torch.equal(backbones.generator.generate(w), other.generator.generate(w))

    def test_unknown_kind_rejected(self):
        from fashiontex.backbones import BackboneError, BackboneSpec

        with pytest.raises(BackboneError):
            load_backbones(BackbonesConfig(generator=BackboneSpec(kind="imaginary")))


class TestGenerator:
    def test_output_is_image_shaped_and_bounded(self, backbones):
        img = backbones.generator.generate(make_latent(backbones))
        size = backbones.generator.image_size
        assert img.shape == (size, size, 3)
        assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0

    def test_same_latent_same_image(self, backbones):
        w = make_latent(backbones, seed=2)
        assert torch.equal(backbones.generator.generate(w), backbones.generator.generate(w))

    def test_wrong_shape_latent_rejected(self, backbones):
        w = make_latent(backbones)
        bad = type(w)(torch.cat([w.layers, w.layers], dim=1), w.bounds)
        with pytest.raises(ValueError):
            backbones.generator.generate(bad)

    def test_medium_and_fine_rows_only_touch_cloth_band(self, backbones):
        """Style rows steer only the garment rows; head and feet rows stay fixed."""
        g = backbones.generator
        w = make_latent(backbones, seed=3)
        lo = int(g.image_size * 1 / 4)
        hi = int(g.image_size * 7 / 8)
        base = g.generate(w)
        for group in ("medium", "fine"):
            bumped = w.clone()
            a, b = w.bounds.group(group)
            bumped.layers[a:b] += 0.5
            diff = (g.generate(bumped) - base).abs().sum(dim=(1, 2))
            assert float(diff[:lo].sum()) == 0.0
            assert float(diff[hi:].sum()) == 0.0
            assert float(diff[lo:hi].sum()) > 0.0

    def test_coarse_rows_reach_outside_cloth_band(self, backbones):
        g = backbones.generator
        w = make_latent(backbones, seed=4)
        bumped = w.clone()
        a, b = w.bounds.group("coarse")
        bumped.layers[a:b] += 0.5
        diff = (g.generate(bumped) - g.generate(w)).abs().sum(dim=(1, 2))
        assert float(diff[: int(g.image_size / 4)].sum()) > 0.0


class TestInverter:
    def test_inversion_recovers_generated_image(self, backbones):
        w = make_latent(backbones, seed=5)
        img = backbones.generator.generate(w)
        w_hat = backbones.inverter.invert(img)
        img_hat = backbones.generator.generate(w_hat)
        assert float((img_hat - img).abs().max()) < 1e-4

    def test_inversion_of_arbitrary_image_is_finite(self, backbones):
        w_hat = backbones.inverter.invert(make_image(6))
        assert torch.isfinite(w_hat.layers).all()


class TestJointEmbedder:
    def test_text_embedding_is_token_additive(self, backbones):
        e = backbones.joint_embedder
        joint = e.embed_text("shirt skirt").values
        parts = e.embed_text("shirt").values + e.embed_text("skirt").values
        assert torch.allclose(joint, parts, atol=1e-6)

    def test_text_and_image_embeddings_share_a_space(self, backbones):
        e = backbones.joint_embedder
        assert e.embed_text("dress").space == e.embed_image(make_image(7)).space

    def test_deterministic(self, backbones):
        e = backbones.joint_embedder
        assert torch.equal(e.embed_text("pants").values, e.embed_text("pants").values)


class TestParser:
    def test_background_complements_cloth(self, backbones):
        masks = backbones.parser.parse(make_image(8))
        assert torch.equal(masks.background_noncloth, 1.0 - masks.cloth)

    def test_bands_cover_expected_rows(self, backbones):
        masks = backbones.parser.parse(torch.zeros(64, 64, 3))
        assert masks.face[4:16].all() and not masks.face[16:].any()
        assert masks.upper_cloth[16:36].all()
        assert masks.lower_cloth[36:56].all()
        assert masks.skin[56:60].all()

    def test_region_lookup(self, backbones):
        masks = backbones.parser.parse(make_image(9))
        assert torch.equal(masks.region("upper"), masks.upper_cloth)
        assert torch.equal(masks.region("lower"), masks.lower_cloth)
        with pytest.raises(ValueError):
            masks.region("sleeve")

    def test_solid_anchor_colors_classify_to_their_category(self, backbones):
        for name, color in CATEGORY_COLORS.items():
            img = torch.ones(64, 64, 3) * torch.tensor(color)
            cats = backbones.parser.category_masks(img)
            cloth = backbones.parser.parse(img).cloth
            assert torch.equal(cats[name], cloth), name
            for other, mask in cats.items():
                if other != name:
                    assert float(mask.sum()) == 0.0

    def test_non_binary_mask_rejected(self):
        half = torch.full((4, 4), 0.5)
        zero = torch.zeros(4, 4)
        with pytest.raises(ValueError):
            ParsingMask(half, zero, zero, zero, 1.0 - half)

    def test_background_must_be_exact_complement(self):
        ones = torch.ones(4, 4)
        zero = torch.zeros(4, 4)
        with pytest.raises(ValueError):
            ParsingMask(ones, zero, zero, zero, ones)


class TestFeatureExtractors:
    def test_texture_pyramid_has_four_levels_with_fixed_channels(self, backbones):
        pyr = backbones.texture_extractor.features(make_image(10))
        assert isinstance(pyr, FeaturePyramid)
        dim = backbones.texture_extractor.texture_dim
        sizes = [lvl.shape for lvl in pyr]
        assert all(c == dim for c, _ in sizes)
        assert [n for _, n in sizes] == sorted([n for _, n in sizes], reverse=True)

    def test_identity_embedding_ignores_cloth_rows(self, backbones):
        img = make_image(11)
        altered = img.clone()
        altered[20:50] = 0.0
        e = backbones.identity_embedder
        assert torch.equal(e.embed(img).values, e.embed(altered).values)

    def test_identity_embedding_changes_with_face_rows(self, backbones):
        img = make_image(12)
        altered = img.clone()
        altered[6:10] = 1.0 - altered[6:10]
        e = backbones.identity_embedder
        assert not torch.equal(e.embed(img).values, e.embed(altered).values)

    def test_perceptual_distance_is_zero_on_identical_and_symmetric(self, backbones):
        a, b = make_image(13), make_image(14)
        p = backbones.perceptual
        assert float(p.distance(a, a)) == 0.0
        assert float(p.distance(a, b)) == pytest.approx(float(p.distance(b, a)), rel=1e-6)
        assert float(p.distance(a, b)) > 0.0


class TestEmbedding:
    def test_flattens_and_rejects_non_finite(self):
        e = Embedding(torch.ones(2, 3), "texture")
        assert e.values.shape == (6,)
        with pytest.raises(ValueError):
            Embedding(torch.tensor([float("inf")]), "texture")
