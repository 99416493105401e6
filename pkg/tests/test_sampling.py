import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contextscan.data import AnnotatedImage, jaccard
from contextscan.network import DESK_CONFIG, FULLY_CONV, build
from contextscan.sampling import (SampleSkipped, SamplingError, epoch_stream,
                                  extract_negative, extract_positive,
                                  flip_pair, mine_hard_negatives, normalize)
from contextscan.world import WorldConfig, generate_dataset

rects = st.tuples(st.integers(0, 50), st.integers(0, 50),
                  st.integers(1, 30), st.integers(1, 30))


def flat_image(width=600, height=600, value=0.5, boxes=(), missing=()):
    rng = np.random.default_rng(0)
    pixels = (value + 0.1 * rng.random((height, width, 1))).astype(np.float32)
    return AnnotatedImage(pixels=pixels, object_boxes=list(boxes),
                          missing_boxes=list(missing), id="img")


class TestJaccard:
    def test_identical(self):
        assert jaccard((3, 4, 10, 12), (3, 4, 10, 12)) == 1.0

    def test_disjoint(self):
        assert jaccard((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0

    def test_half_overlap(self):
        assert jaccard((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)

    @given(a=rects, b=rects)
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        j = jaccard(a, b)
        assert 0.0 <= j <= 1.0
        assert j == jaccard(b, a)


class TestNormalize:
    def test_zero_mean_unit_std(self):
        img = np.random.default_rng(1).random((40, 40, 3)).astype(np.float32)
        out = normalize(img)
        assert np.abs(out.mean(axis=(0, 1))).max() < 1e-6
        np.testing.assert_allclose(out.std(axis=(0, 1)), 1.0, atol=1e-5)

    def test_idempotent_up_to_clamp(self):
        img = np.random.default_rng(2).random((20, 20, 1)).astype(np.float32)
        once = normalize(img)
        twice = normalize(once)
        assert np.abs(once - twice).max() < 1e-5

    def test_constant_channel_warns(self):
        img = np.full((8, 8, 1), 0.3, dtype=np.float32)
        with pytest.warns(UserWarning):
            out = normalize(img)
        assert np.all(np.isfinite(out))


class TestExtractPositive:
    def test_rescale_targets_55_of_224(self):
        # a 110px object lands at ~55px in a 224px crop (scale 0.5)
        img = flat_image(boxes=[(245, 245, 110, 110)])
        pair = extract_positive(img, normalize(img.pixels), 0, 224)
        assert pair.raw.shape == (224, 224, 1)
        _, _, mw, mh = pair.mask_rect
        assert abs(mw - 55) <= 1 and abs(mh - 55) <= 1
        assert pair.source[1][2] == 448  # source crop side at scale 0.5

    def test_mask_centered_within_one_pixel(self):
        img = flat_image(boxes=[(284, 284, 32, 32)])  # centered at (300, 300)
        pair = extract_positive(img, normalize(img.pixels), 0, 224)
        x, y, w, h = pair.mask_rect
        assert abs((x + w / 2) - 112) <= 1
        assert abs((y + h / 2) - 112) <= 1

    def test_adjacent_object_stays_visible(self):
        boxes = [(280, 280, 16, 16), (300, 280, 16, 16)]
        img = flat_image(boxes=boxes)
        norm = normalize(img.pixels)
        pair = extract_positive(img, norm, 0, 64)
        x, y, w, h = pair.mask_rect
        assert np.all(pair.masked[y:y + h, x:x + w] == 0.0)
        # the neighbour's pixels are untouched (masked == raw there)
        outside = pair.masked.copy()
        outside[y:y + h, x:x + w] = pair.raw[y:y + h, x:x + w]
        np.testing.assert_array_equal(outside, pair.raw)
        assert not np.all(pair.masked == 0.0)

    def test_border_object_skipped(self):
        img = flat_image(boxes=[(2, 2, 16, 16)])
        with pytest.raises(SampleSkipped):
            extract_positive(img, normalize(img.pixels), 0, 64)


class TestExtractNegative:
    def test_empty_image_accepts_first_draw(self):
        img = flat_image(width=200, height=200)
        rng = np.random.default_rng(3)
        pair = extract_negative(img, normalize(img.pixels), (16, 16), 64, 64,
                                rng)
        assert pair.label == 2
        assert pair.mask_rect == (24, 24, 16, 16)

    def test_fully_tiled_image_exhausts(self):
        # any 20x20 mask over a 10px tiling fully contains some tile,
        # so Jaccard >= 0.25 everywhere and rejection sampling gives up
        boxes = [(x, y, 10, 10) for x in range(0, 100, 10)
                 for y in range(0, 100, 10)]
        img = flat_image(width=100, height=100, boxes=boxes)
        with pytest.raises(SamplingError):
            extract_negative(img, normalize(img.pixels), (20, 20), 64, 64,
                             np.random.default_rng(4), max_attempts=100)

    def test_accepted_negative_respects_jaccard(self):
        img = flat_image(width=300, height=300,
                         boxes=[(100, 100, 30, 30), (200, 60, 30, 30)])
        norm = normalize(img.pixels)
        rng = np.random.default_rng(5)
        for _ in range(20):
            pair = extract_negative(img, norm, (24, 24), 96, 64, rng)
            left, top, side = pair.source[1]
            s = 64 / side
            x, y, w, h = pair.mask_rect
            mask_src = (left + x / s, top + y / s, w / s, h / s)
            assert all(jaccard(mask_src, b) <= 0.2 for b in img.object_boxes)


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(WorldConfig(seed=11), 8)


@pytest.fixture(scope="module")
def mining_setup():
    data = generate_dataset(WorldConfig(seed=12), 4)
    net = build(DESK_CONFIG, FULLY_CONV, seed=0)
    return net, data


class TestEpochStream:
    def test_interleaved_half_and_half(self, dataset):
        pairs = epoch_stream(dataset, 20, 64, np.random.default_rng(6))
        assert len(pairs) == 20
        assert [p.label for p in pairs] == [1, 2] * 10

    def test_flip_is_involution(self, dataset):
        pairs = epoch_stream(dataset, 4, 64, np.random.default_rng(7))
        pair = pairs[0]
        back = flip_pair(flip_pair(pair))
        np.testing.assert_array_equal(back.raw, pair.raw)
        np.testing.assert_array_equal(back.masked, pair.masked)
        assert back.mask_rect == pair.mask_rect
        assert back.source == pair.source

    def test_negative_mask_widths_match_positives(self, dataset):
        pairs = epoch_stream(dataset, 30, 64, np.random.default_rng(8))
        pos = sorted(p.mask_rect[2:] for p in pairs if p.label == 1)
        neg = sorted(p.mask_rect[2:] for p in pairs if p.label == 2)
        assert pos == neg

    def test_mask_fidelity_bitwise(self, dataset):
        for pair in epoch_stream(dataset, 10, 64, np.random.default_rng(9)):
            x, y, w, h = pair.mask_rect
            assert np.all(pair.masked[y:y + h, x:x + w] == 0.0)
            patched = pair.masked.copy()
            patched[y:y + h, x:x + w] = pair.raw[y:y + h, x:x + w]
            np.testing.assert_array_equal(patched, pair.raw)

    def test_stream_deterministic(self, dataset):
        a = epoch_stream(dataset, 12, 64, np.random.default_rng(10))
        b = epoch_stream(dataset, 12, 64, np.random.default_rng(10))
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.raw, pb.raw)
            assert pa.source == pb.source

    def test_empty_dataset_rejected(self):
        with pytest.raises(SamplingError):
            epoch_stream([flat_image()], 4, 64, np.random.default_rng(11))


class TestMining:
    def test_top_k_zero_is_empty(self, mining_setup):
        net, dataset = mining_setup
        assert mine_hard_negatives(net, dataset, 0, 64) == []

    def test_mined_specs_respect_jaccard(self, mining_setup):
        net, dataset = mining_setup
        by_id = {img.id: img for img in dataset}
        specs = mine_hard_negatives(net, dataset, 8, 64)
        assert 0 < len(specs) <= 8
        for spec in specs:
            img = by_id[spec.image_id]
            mw, mh = spec.mask_dims
            cx, cy = spec.center
            mask = (cx - mw / 2, cy - mh / 2, mw, mh)
            assert all(jaccard(mask, b) <= 0.2 for b in img.object_boxes)

    def test_mined_scores_sorted_descending(self, mining_setup):
        net, dataset = mining_setup
        specs = mine_hard_negatives(net, dataset, 8, 64)
        scores = [s.score for s in specs]
        assert scores == sorted(scores, reverse=True)

    def test_mined_specs_feed_epoch_stream(self, mining_setup):
        net, dataset = mining_setup
        specs = mine_hard_negatives(net, dataset, 5, 64)
        pairs = epoch_stream(dataset, 10, 64, np.random.default_rng(13),
                             extra_negatives=specs)
        assert len(pairs) == 10 + len(specs)
        assert all(p.label == 2 for p in pairs[10:])
