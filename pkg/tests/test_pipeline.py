import numpy as np
import pytest

from contextscan.heatmaps import HeatMap
from contextscan.pipeline import (MISSING, OUT_OF_CONTEXT, combine,
                                  detection_binary_map, evaluate_recall_at_k,
                                  find_regions, gaussian_kernel,
                                  image_map_as_heatmap, match_regions,
                                  random_score_map, recall_curve, select_peaks,
                                  spatial_prior_map)
from contextscan.world import WorldConfig, generate_dataset


def grid_map(scores, stride=4.0, patch=64.0, image_id="img"):
    return HeatMap(scores=np.asarray(scores, dtype=np.float32), stride=stride,
                   patch_side=patch, scale=1.0, image_id=image_id)


class TestBinaryMap:
    def test_no_detections_all_free(self):
        b = detection_binary_map([], (20, 30), MISSING)
        assert b.shape == (20, 30)
        assert np.all(b == 1)

    def test_detected_box_zeroed(self):
        b = detection_binary_map([((2, 3, 4, 5), 0.9)], (20, 20), MISSING)
        assert np.all(b[3:8, 2:6] == 0)
        assert b.sum() == 400 - 20

    def test_low_score_detection_ignored(self):
        b = detection_binary_map([((2, 3, 4, 5), 0.4)], (20, 20), MISSING)
        assert np.all(b == 1)

    def test_modes_are_complements(self):
        dets = [((1, 1, 5, 5), 0.8), ((10, 10, 4, 4), 0.6)]
        m = detection_binary_map(dets, (20, 20), MISSING)
        o = detection_binary_map(dets, (20, 20), OUT_OF_CONTEXT)
        assert np.all(m + o == 1)


class TestCombine:
    def test_all_ones_binary_is_identity(self):
        hm = grid_map(np.random.default_rng(0).random((5, 5)))
        out = combine(hm, np.ones((100, 100), dtype=np.uint8))
        np.testing.assert_array_equal(out, hm.scores)

    def test_all_zero_binary_annihilates(self):
        hm = grid_map(np.random.default_rng(1).random((5, 5)))
        out = combine(hm, np.zeros((100, 100), dtype=np.uint8))
        assert np.all(out == 0.0)

    def test_binary_sampled_at_cell_centers(self):
        hm = grid_map(np.ones((3, 3)), stride=10.0, patch=20.0)
        binary = np.ones((60, 60), dtype=np.uint8)
        binary[:, :16] = 0  # covers center x=10 of column 0 only
        out = combine(hm, binary)
        assert np.all(out[:, 0] == 0.0)
        assert np.all(out[:, 1:] == 1.0)


class TestSelectPeaks:
    def test_single_peak(self):
        scores = np.zeros((5, 5), np.float32)
        scores[2, 3] = 0.9
        hm = grid_map(scores, stride=10.0, patch=20.0)
        peaks = select_peaks(scores, hm, scores > 0.4, d=8)
        assert peaks == [((40.0, 30.0), pytest.approx(0.9))]

    def test_nearby_peak_suppressed(self):
        scores = np.zeros((5, 5), np.float32)
        scores[2, 2] = 0.9
        scores[2, 3] = 0.8  # 10px away, within radius 20/2... no: d=48
        hm = grid_map(scores, stride=10.0, patch=20.0)
        peaks = select_peaks(scores, hm, scores > 0.4, d=48)
        assert len(peaks) == 1
        assert peaks[0][1] == pytest.approx(0.9)

    def test_distant_peaks_both_kept(self):
        scores = np.zeros((8, 8), np.float32)
        scores[0, 0] = 0.9
        scores[7, 7] = 0.8  # 70px apart, radius 24
        hm = grid_map(scores, stride=10.0, patch=20.0)
        peaks = select_peaks(scores, hm, scores > 0.4, d=48)
        assert [p[1] for p in peaks] == [pytest.approx(0.9), pytest.approx(0.8)]

    def test_ascending_order_prefers_low_scores(self):
        scores = np.array([[0.1, 0.0], [0.0, 0.9]], np.float32)
        hm = grid_map(scores, stride=100.0, patch=20.0)
        peaks = select_peaks(scores, hm, np.ones_like(scores, bool), d=8,
                             ascending=True)
        assert [p[1] for p in peaks][:2] == [0.0, 0.0]

    def test_empty_mask_gives_no_peaks(self):
        scores = np.ones((3, 3), np.float32)
        hm = grid_map(scores)
        assert select_peaks(scores, hm, np.zeros((3, 3), bool), d=8) == []

    def test_bad_region_side_rejected(self):
        hm = grid_map(np.ones((2, 2)))
        with pytest.raises(ValueError):
            select_peaks(hm.scores, hm, np.ones((2, 2), bool), d=0)

    def test_deterministic_tie_break(self):
        scores = np.full((4, 4), 0.5, np.float32)
        hm = grid_map(scores, stride=100.0, patch=10.0)
        a = select_peaks(scores, hm, np.ones((4, 4), bool), d=8)
        b = select_peaks(scores, hm, np.ones((4, 4), bool), d=8)
        assert a == b
        # row-major within equal scores
        assert a[0][0] == (5.0, 5.0)


class TestFindRegions:
    def test_missing_mode_ranks_descending(self):
        scores = np.zeros((5, 5), np.float32)
        scores[0, 0] = 0.6
        scores[4, 4] = 0.9
        hms = {"a": grid_map(scores, stride=20.0, patch=40.0)}
        regions = find_regions(hms, {"a": []}, (160, 160), mode=MISSING,
                               threshold=0.4, d=16)
        assert [r.score for r in regions] == [pytest.approx(0.9),
                                              pytest.approx(0.6)]
        assert [r.rank for r in regions] == [1, 2]

    def test_threshold_filters_weak_cells(self):
        scores = np.full((3, 3), 0.3, np.float32)
        hms = {"a": grid_map(scores)}
        assert find_regions(hms, {}, (100, 100), threshold=0.4) == []

    def test_detected_cells_excluded_in_missing_mode(self):
        scores = np.full((3, 3), 0.9, np.float32)
        hms = {"a": grid_map(scores, stride=20.0, patch=40.0)}
        dets = {"a": [((0, 0, 100, 100), 0.9)]}
        assert find_regions(hms, dets, (100, 100), mode=MISSING, d=8) == []

    def test_out_of_context_only_looks_at_detected_cells(self):
        scores = np.array([[0.1, 0.2], [0.3, 0.4]], np.float32)
        hms = {"a": grid_map(scores, stride=40.0, patch=40.0)}
        dets = {"a": [((50, 10, 30, 30), 0.9)]}  # covers cell (0, 1) center
        regions = find_regions(hms, dets, (120, 120), mode=OUT_OF_CONTEXT,
                               d=8)
        assert len(regions) == 1
        assert regions[0].score == pytest.approx(0.2)

    def test_max_count_truncates_global_list(self):
        scores = np.random.default_rng(2).random((6, 6)).astype(np.float32)
        hms = {f"im{i}": grid_map(scores, stride=50.0, patch=40.0)
               for i in range(3)}
        regions = find_regions(hms, {}, (400, 400), threshold=0.0, d=8,
                               max_count=7)
        assert len(regions) == 7
        assert [r.rank for r in regions] == list(range(1, 8))

    def test_region_boxes_clamped_inside_image(self):
        scores = np.zeros((5, 5), np.float32)
        scores[0, 0] = 0.9
        hms = {"a": grid_map(scores, stride=20.0, patch=20.0)}
        regions = find_regions(hms, {}, (110, 110), d=48)
        x, y, w, h = regions[0].box
        assert x >= 0 and y >= 0 and x + w <= 110 and y + h <= 110


class TestRecall:
    def test_match_requires_center_containment(self):
        from contextscan.pipeline import CandidateRegion
        regions = [CandidateRegion(box=(10, 10, 20, 20), score=0.9, rank=1,
                                   image_id="a"),
                   CandidateRegion(box=(50, 50, 20, 20), score=0.8, rank=2,
                                   image_id="a")]
        gt = {"a": [(15, 15, 10, 10)]}  # center (20, 20) inside region 1
        assert match_regions(regions, gt) == [True, False]

    def test_one_to_one_matching(self):
        from contextscan.pipeline import CandidateRegion
        regions = [CandidateRegion(box=(0, 0, 40, 40), score=0.9, rank=1,
                                   image_id="a"),
                   CandidateRegion(box=(0, 0, 40, 40), score=0.8, rank=2,
                                   image_id="a")]
        gt = {"a": [(10, 10, 10, 10)]}
        assert match_regions(regions, gt) == [True, False]

    def test_recall_curve_values(self):
        curve = recall_curve([True, False, True, False], 4, [1, 2, 3, 10])
        assert curve == [(1, 0.25), (2, 0.25), (3, 0.5), (10, 0.5)]

    def test_recall_monotone_in_k(self):
        rng = np.random.default_rng(3)
        flags = list(rng.random(50) < 0.3)
        curve = recall_curve(flags, 20, range(1, 60))
        vals = [r for _, r in curve]
        assert vals == sorted(vals)

    def test_no_ground_truth_returns_none(self):
        assert recall_curve([], 0, [1, 5]) is None

    def test_evaluate_end_to_end(self):
        from contextscan.pipeline import CandidateRegion
        regions = [CandidateRegion(box=(0, 0, 30, 30), score=0.9, rank=1,
                                   image_id="a")]
        gt = {"a": [(5, 5, 10, 10)], "b": [(0, 0, 10, 10)]}
        curve = evaluate_recall_at_k(regions, gt, [1])
        assert curve == [(1, 0.5)]


class TestBaselines:
    def test_gaussian_kernel_sums_to_one(self):
        k = gaussian_kernel(30, 10.0)
        assert k.shape == (30, 30)
        assert k.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(k > 0)

    def test_prior_peaks_where_objects_cluster(self):
        imgs = generate_dataset(WorldConfig(placement_prob=1.0,
                                            junction_jitter=4, seed=30), 40)
        prior = spatial_prior_map(imgs, (160, 160))
        assert prior.prior.shape == (160, 160)
        assert prior.prior.max() == pytest.approx(1.0, abs=1e-6)
        py, px = np.unravel_index(prior.prior.argmax(), prior.prior.shape)
        assert abs(px - 80) < 30 and abs(py - 80) < 30
        assert prior.prior[5, 5] < 0.05

    def test_prior_requires_training_images(self):
        with pytest.raises(ValueError):
            spatial_prior_map([], (100, 100))

    def test_random_map_statistics(self):
        m = random_score_map((200, 300), seed=4)
        assert m.shape == (200, 300)
        assert 0.0 <= m.min() and m.max() <= 1.0
        assert abs(m.mean() - 0.5) < 0.01
        np.testing.assert_array_equal(m, random_score_map((200, 300), seed=4))

    def test_image_map_as_heatmap_grid(self):
        like = grid_map(np.zeros((5, 5)), stride=10.0, patch=20.0)
        prior = np.zeros((70, 70), dtype=np.float32)
        prior[30, 40] = 1.0  # cell center (40, 30) -> (i=2, j=3)
        hm = image_map_as_heatmap(prior, like, image_id="x")
        assert hm.scores.shape == (5, 5)
        assert hm.scores[2, 3] == 1.0
        assert hm.scores.sum() == 1.0
        assert hm.image_id == "x"
