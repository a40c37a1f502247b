"""Scorer and score-normalization tests.

The worked normalization example ([2, 4, 10] -> [0.5, 0.4, 0.1]) was frozen
by hand: shifted fitness is max - d + min = [10, 8, 2], total 20.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonarloc.geomap import (
    STRUCTURE,
    Pose2D,
    SonarFootprint,
    crop_from_pose,
)
from sonarloc.matcher import (
    DimensionMismatch,
    EmptyInput,
    MissingGroundTruth,
    baseline_scorer,
    normalize_scores,
    oracle_scorer,
)
from sonarloc.simulator import render_sonar
from sonarloc.sonar import AcousticImage

finite_distances = st.lists(
    st.floats(min_value=0.0, max_value=1e6, allow_nan=False,
              allow_infinity=False),
    min_size=1, max_size=40)


class TestNormalizeScores:
    def test_worked_example(self):
        weights = normalize_scores(np.array([2.0, 4.0, 10.0]))
        np.testing.assert_allclose(weights, [0.5, 0.4, 0.1], atol=1e-12)

    def test_equal_distances_give_uniform_weights(self):
        weights = normalize_scores(np.array([5.0, 5.0, 5.0]))
        np.testing.assert_allclose(weights, [1.0 / 3.0] * 3, atol=1e-12)

    def test_all_zero_distances_give_uniform_weights(self):
        weights = normalize_scores(np.zeros(4))
        np.testing.assert_allclose(weights, [0.25] * 4, atol=1e-12)

    def test_single_distance(self):
        np.testing.assert_allclose(normalize_scores(np.array([7.0])), [1.0])

    def test_empty_input_raises(self):
        with pytest.raises(EmptyInput):
            normalize_scores(np.array([]))

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            normalize_scores(np.array([1.0, -0.5]))
        with pytest.raises(ValueError):
            normalize_scores(np.array([1.0, float("nan")]))
        with pytest.raises(ValueError):
            normalize_scores(np.array([1.0, float("inf")]))

    @settings(max_examples=200, deadline=None)
    @given(finite_distances)
    def test_weights_form_a_distribution(self, values):
        weights = normalize_scores(np.array(values))
        assert np.all(weights >= 0.0)
        assert abs(float(np.sum(weights)) - 1.0) <= 1e-9

    @settings(max_examples=200, deadline=None)
    @given(finite_distances)
    def test_best_distance_gets_top_weight(self, values):
        distances = np.array(values)
        weights = normalize_scores(distances)
        assert weights[int(np.argmin(distances))] == np.max(weights)

    @settings(max_examples=200, deadline=None)
    @given(finite_distances)
    def test_order_reversal(self, values):
        distances = np.array(values)
        weights = normalize_scores(distances)
        order = np.argsort(distances)
        ranked = weights[order]
        assert np.all(ranked[:-1] >= ranked[1:] - 1e-15)

    @settings(max_examples=100, deadline=None)
    @given(finite_distances, st.randoms(use_true_random=False))
    def test_permutation_consistency(self, values, rnd):
        distances = np.array(values)
        perm = np.arange(len(distances))
        rnd.shuffle(perm)
        direct = normalize_scores(distances)
        shuffled = normalize_scores(distances[perm])
        np.testing.assert_allclose(shuffled, direct[perm], atol=1e-12)

    def test_randomized_ranking_bulk(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            distances = rng.uniform(0.0, 50.0, size=int(rng.integers(2, 64)))
            weights = normalize_scores(distances)
            assert abs(float(np.sum(weights)) - 1.0) <= 1e-9
            assert int(np.argmin(distances)) == int(np.argmax(weights))


def frame_with_mask(mask, fp):
    pixels = np.where(mask, 0.8, 0.0)
    return AcousticImage(pixels=pixels, footprint=fp)


class TestBaselineScorer:
    def test_perfect_overlap_scores_zero(self, wall_map, small_fp):
        pose = Pose2D(34.0, 40.0, 0.0)
        crop = crop_from_pose(wall_map, pose, small_fp)
        frame = frame_with_mask(crop.cells == STRUCTURE, small_fp)
        assert baseline_scorer(frame, crop) == 0.0

    def test_disjoint_masks_score_one(self, wall_map, small_fp):
        pose = Pose2D(34.0, 40.0, 0.0)
        crop = crop_from_pose(wall_map, pose, small_fp)
        frame = frame_with_mask(crop.cells != STRUCTURE, small_fp)
        assert baseline_scorer(frame, crop) == 1.0

    def test_both_empty_score_one(self, water_map, small_fp):
        pose = Pose2D(20.0, 20.0, 0.0)
        crop = crop_from_pose(water_map, pose, small_fp)
        frame = frame_with_mask(np.zeros(small_fp.shape, dtype=bool), small_fp)
        assert baseline_scorer(frame, crop) == 1.0

    def test_half_overlap_worked_value(self, wall_map, small_fp):
        """Frame covers the top half of the crop's structure block: the IoU is
        |half| / |whole| = 0.5, so the distance is 0.5."""
        pose = Pose2D(34.0, 40.0, 0.0)
        crop = crop_from_pose(wall_map, pose, small_fp)
        structure = crop.cells == STRUCTURE
        half = structure.copy()
        half[:, small_fp.bearing_bins // 2:] = False
        kept = int(half.sum())
        total = int(structure.sum())
        frame = frame_with_mask(half, small_fp)
        assert baseline_scorer(frame, crop) == pytest.approx(1.0 - kept / total)

    def test_intensity_scale_invariance(self, wall_map, small_fp):
        pose = Pose2D(32.0, 40.0, 0.2)
        crop = crop_from_pose(wall_map, pose, small_fp)
        rng = np.random.default_rng(8)
        mask = rng.random(small_fp.shape) < 0.2
        bright = AcousticImage(pixels=np.where(mask, 0.9, 0.0),
                               footprint=small_fp)
        dim = AcousticImage(pixels=np.where(mask, 0.05, 0.0),
                            footprint=small_fp)
        assert baseline_scorer(bright, crop) == baseline_scorer(dim, crop)

    def test_dimension_mismatch(self, wall_map, small_fp):
        crop = crop_from_pose(wall_map, Pose2D(34.0, 40.0, 0.0), small_fp)
        other = SonarFootprint(max_range=10.0, fov=small_fp.fov,
                               range_bins=16, bearing_bins=48)
        frame = AcousticImage(pixels=np.zeros(other.shape), footprint=other)
        with pytest.raises(DimensionMismatch):
            baseline_scorer(frame, crop)

    def test_true_pose_beats_displaced_pose(self, wall_map):
        """A noiseless sim frame scored against the crop at the true pose must
        beat the crop at a pose displaced 10 m away from the wall in at least
        90 percent of seeded trials."""
        fp = SonarFootprint()
        wins = 0
        seeds = 20
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            pose = Pose2D(rng.uniform(15.0, 25.0), rng.uniform(20.0, 60.0),
                          rng.uniform(-0.5, 0.5))
            frame = render_sonar(wall_map, pose, fp)
            near = baseline_scorer(frame, crop_from_pose(wall_map, pose, fp))
            displaced = Pose2D(pose.x - 10.0, pose.y, pose.theta)
            far = baseline_scorer(frame,
                                  crop_from_pose(wall_map, displaced, fp))
            if near < far:
                wins += 1
        assert wins >= 0.9 * seeds


class TestOracleScorer:
    def make_frame(self, small_fp, true_pose):
        return AcousticImage(pixels=np.zeros(small_fp.shape),
                             footprint=small_fp, true_pose=true_pose)

    def test_zero_at_true_pose(self, water_map, small_fp):
        pose = Pose2D(12.0, 9.0, 0.4)
        frame = self.make_frame(small_fp, pose)
        crop = crop_from_pose(water_map, pose, small_fp)
        assert oracle_scorer(frame, crop) == 0.0

    def test_pure_position_offset(self, water_map, small_fp):
        frame = self.make_frame(small_fp, Pose2D(10.0, 10.0, 0.0))
        crop = crop_from_pose(water_map, Pose2D(10.0, 13.0, 0.0), small_fp)
        assert oracle_scorer(frame, crop) == pytest.approx(3.0)

    def test_heading_term_wraps(self, water_map, small_fp):
        frame = self.make_frame(small_fp, Pose2D(10.0, 10.0,
                                                 math.radians(175.0)))
        crop = crop_from_pose(water_map,
                              Pose2D(10.0, 10.0, math.radians(-175.0)),
                              small_fp)
        assert oracle_scorer(frame, crop) == pytest.approx(math.radians(10.0))

    def test_ranks_by_pose_error(self, water_map, small_fp):
        true_pose = Pose2D(20.0, 20.0, 0.0)
        frame = self.make_frame(small_fp, true_pose)
        offsets = [0.5, 1.5, 4.0, 7.5]
        scores = [oracle_scorer(frame,
                                crop_from_pose(water_map,
                                               Pose2D(20.0 + d, 20.0, 0.0),
                                               small_fp))
                  for d in offsets]
        assert scores == sorted(scores)

    def test_missing_ground_truth_raises(self, water_map, small_fp):
        frame = AcousticImage(pixels=np.zeros(small_fp.shape),
                              footprint=small_fp)
        crop = crop_from_pose(water_map, Pose2D(10.0, 10.0, 0.0), small_fp)
        with pytest.raises(MissingGroundTruth):
            oracle_scorer(frame, crop)

    def test_dimension_mismatch(self, water_map, small_fp):
        other = SonarFootprint(max_range=10.0, fov=small_fp.fov,
                               range_bins=16, bearing_bins=48)
        frame = AcousticImage(pixels=np.zeros(other.shape), footprint=other,
                              true_pose=Pose2D(10.0, 10.0, 0.0))
        crop = crop_from_pose(water_map, Pose2D(10.0, 10.0, 0.0), small_fp)
        with pytest.raises(DimensionMismatch):
            oracle_scorer(frame, crop)
