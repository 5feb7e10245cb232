"""Tests for point-cloud enhancement, random raydrop and the evaluation metrics."""

import numpy as np
import pytest

from lidarenhance import (
    DataError,
    DenseIntensityMask,
    DimensionMismatchError,
    EnhanceMode,
    EnhanceOptions,
    NoiseModel,
    OutOfFrustum,
    PointCloud,
    PredictorOutput,
    apply_random_raydrop,
    enhance_pointcloud,
    enhance_range_image,
    evaluate,
    intensity_mae,
    mask_iou,
    noise_sweep,
    range_image_to_pointcloud,
    render_clean_range_image,
    render_frame,
    render_oracle_prediction,
)
from lidarenhance._geometry import inside_image, project_points
from tests.helpers import constant_range_image, desk_camera, small_sensor, wall_scene

IN_VIEW = [(5.0, 0.0, 0.0, 0.9), (5.0, 2.0, -1.0, 0.1), (8.0, -3.0, 1.0, 0.4)]
OUT_OF_VIEW = [(-5.0, 0.0, 0.0, 0.7), (5.0, 10.0, 0.0, 0.2)]


def _camera():
    return desk_camera(width=32, height=16, fx=24.0, fy=24.0)


def _prediction(raydrop, intensity, shape=(16, 32)):
    return PredictorOutput(np.full(shape, raydrop), np.full(shape, intensity))


def _random_cloud(count, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud.from_arrays(rng.normal(size=(count, 3)), rng.random(count))


class TestEnhancePointcloud:
    def test_full_gate_keeps_points_and_resamples_intensity(self):
        pc = PointCloud.from_points(IN_VIEW)
        out = enhance_pointcloud(pc, _prediction(1.0, 0.3), _camera())
        np.testing.assert_array_equal(out.xyz, pc.xyz)
        np.testing.assert_allclose(out.intensity, 0.3, rtol=1e-12)

    def test_zero_gate_drops_every_projected_point(self):
        out = enhance_pointcloud(PointCloud.from_points(IN_VIEW), _prediction(0.0, 0.3), _camera())
        assert len(out) == 0

    def test_gate_is_strict(self):
        out = enhance_pointcloud(PointCloud.from_points(IN_VIEW), _prediction(0.5, 0.3), _camera())
        assert len(out) == 0

    def test_out_of_frustum_points_kept_with_zero_intensity(self):
        pc = PointCloud.from_points(IN_VIEW + OUT_OF_VIEW)
        out = enhance_pointcloud(pc, _prediction(0.0, 0.3), _camera())
        np.testing.assert_array_equal(out.xyz, pc.xyz[3:])
        np.testing.assert_array_equal(out.intensity, [0.0, 0.0])

    def test_out_of_frustum_points_dropped_on_request(self):
        pc = PointCloud.from_points(IN_VIEW + OUT_OF_VIEW)
        opts = EnhanceOptions(out_of_frustum=OutOfFrustum.DROP)
        out = enhance_pointcloud(pc, _prediction(1.0, 0.3), _camera(), opts)
        np.testing.assert_array_equal(out.xyz, pc.xyz[:3])

    def test_gate_reads_nearest_pixel(self):
        raydrop = np.zeros((16, 32))
        # (5, 0, 0) projects onto the center (15.5, 7.5) and rounds to pixel (8, 16).
        raydrop[8, 16] = 1.0
        pred = PredictorOutput(raydrop, np.full((16, 32), 0.6))
        out = enhance_pointcloud(PointCloud.from_points(IN_VIEW[:1]), pred, _camera())
        assert len(out) == 1
        raydrop[8, 16] = 0.0
        raydrop[7, 15] = 1.0
        pred = PredictorOutput(raydrop, np.full((16, 32), 0.6))
        assert len(enhance_pointcloud(PointCloud.from_points(IN_VIEW[:1]), pred, _camera())) == 0

    def test_intensity_is_bilinear(self):
        intensity = np.tile(np.linspace(0.0, 1.0, 32), (16, 1))
        pred = PredictorOutput(np.ones((16, 32)), intensity)
        out = enhance_pointcloud(PointCloud.from_points(IN_VIEW[:1]), pred, _camera())
        assert out.intensity[0] == pytest.approx(0.5)

    def test_empty_cloud(self):
        out = enhance_pointcloud(PointCloud(), _prediction(1.0, 0.3), _camera())
        assert len(out) == 0

    def test_rejects_prediction_of_wrong_size(self):
        with pytest.raises(DimensionMismatchError):
            enhance_pointcloud(
                PointCloud.from_points(IN_VIEW), _prediction(1.0, 0.3, (8, 8)), _camera()
            )

    def test_options_reject_bad_threshold(self):
        with pytest.raises(DataError):
            EnhanceOptions(threshold=1.5)


class TestRandomRaydrop:
    def test_binomial_count(self):
        kept = apply_random_raydrop(_random_cloud(10_000), NoiseModel(p=0.45, seed=0))
        assert abs(len(kept) - 5500) <= 149

    @pytest.mark.parametrize("p", [0.1, 0.45, 0.5])
    def test_counts_within_three_sigma_across_seeds(self, p):
        n = 10_000
        sigma = np.sqrt(n * p * (1 - p))
        pc = _random_cloud(n)
        inside = sum(
            abs(len(apply_random_raydrop(pc, NoiseModel(p, seed))) - n * (1 - p)) <= 3 * sigma
            for seed in range(100)
        )
        assert inside >= 95

    @pytest.mark.parametrize("p", [0.2, 0.45])
    def test_drop_rate_is_independent_of_intensity(self, p):
        pc = _random_cloud(20_000, seed=6)
        kept = np.isin(pc.intensity, apply_random_raydrop(pc, NoiseModel(p, seed=2)).intensity)
        for subset in (pc.intensity < 0.25, pc.intensity > 0.75, pc.xyz[:, 0] > 0.0):
            n = int(subset.sum())
            sigma = np.sqrt(p * (1 - p) / n)
            dropped = 1.0 - kept[subset].mean()
            assert abs(dropped - p) <= 4 * sigma

    def test_zero_probability_is_identity(self):
        pc = _random_cloud(100)
        assert apply_random_raydrop(pc, NoiseModel(p=0.0)).same_as(pc)

    def test_probability_one_drops_everything(self):
        assert len(apply_random_raydrop(_random_cloud(100), NoiseModel(p=1.0))) == 0

    def test_order_is_preserved(self):
        pc = PointCloud.from_arrays(np.zeros((500, 3)), np.linspace(0.0, 1.0, 500))
        kept = apply_random_raydrop(pc, NoiseModel(p=0.3, seed=4)).intensity
        assert np.all(np.diff(kept) > 0)

    def test_same_seed_same_survivors(self):
        pc = _random_cloud(1000)
        first = apply_random_raydrop(pc, NoiseModel(p=0.45, seed=9))
        assert first.same_as(apply_random_raydrop(pc, NoiseModel(p=0.45, seed=9)))

    def test_rejects_probability_outside_unit_interval(self):
        with pytest.raises(DataError):
            NoiseModel(p=1.5)

    def test_sweep_counts_fall_with_probability(self):
        pc = _random_cloud(2000)
        sweep = noise_sweep(pc)
        assert [point.p for point in sweep] == pytest.approx([0.05 * k for k in range(11)])
        counts = [point.kept for point in sweep]
        assert counts[0] == 2000
        assert all(a >= b for a, b in zip(counts, counts[1:]))


class TestEnhanceRangeImage:
    CFG = small_sensor(full_turn=False)

    def test_vanilla_returns_input(self):
        ri = constant_range_image(4, 8)
        opts = EnhanceOptions(mode=EnhanceMode.VANILLA)
        assert enhance_range_image(ri, self.CFG, None, _camera(), opts=opts) is ri

    def test_noise_only_without_noise_keeps_returns(self):
        ri = constant_range_image(4, 8)
        opts = EnhanceOptions(mode=EnhanceMode.NOISE_ONLY)
        out = enhance_range_image(ri, self.CFG, None, _camera(), NoiseModel(p=0.0), opts)
        np.testing.assert_array_equal(out.returns, ri.returns)
        np.testing.assert_allclose(out.depth, ri.depth, rtol=1e-9)
        np.testing.assert_allclose(out.intensity, ri.intensity, rtol=1e-9)

    def test_full_mode_with_certain_drop_is_empty(self):
        ri = constant_range_image(4, 8)
        out = enhance_range_image(
            ri, self.CFG, _prediction(1.0, 0.3), _camera(), NoiseModel(p=1.0)
        )
        assert not out.returns.any()

    def test_full_gate_with_stored_intensity_is_identity_in_view(self):
        ri = constant_range_image(4, 8, intensity=0.5)
        out = enhance_range_image(
            ri, self.CFG, _prediction(1.0, 0.5), _camera(), NoiseModel(p=0.0)
        )
        pc = range_image_to_pointcloud(ri, self.CFG)
        u, v, _, in_front = project_points(pc.xyz, _camera())
        seen = (in_front & inside_image(u, v, _camera())).reshape(ri.depth.shape)
        np.testing.assert_array_equal(out.returns, ri.returns)
        np.testing.assert_allclose(out.depth, ri.depth, rtol=1e-9)
        np.testing.assert_allclose(out.intensity[seen], 0.5, rtol=1e-12)
        assert not out.intensity[~seen].any()

    def test_learned_mode_with_zero_gate_keeps_only_unseen_cells(self):
        ri = constant_range_image(4, 8)
        opts = EnhanceOptions(mode=EnhanceMode.LEARNED)
        out = enhance_range_image(ri, self.CFG, _prediction(0.0, 0.3), _camera(), opts=opts)
        pc = range_image_to_pointcloud(ri, self.CFG)
        u, v, _, in_front = project_points(pc.xyz, _camera())
        seen = in_front & inside_image(u, v, _camera())
        assert 0 < int(seen.sum()) < len(pc)
        assert int(out.returns.sum()) == len(pc) - int(seen.sum())
        assert not out.intensity.any()

    def test_prediction_required_for_learned_modes(self):
        with pytest.raises(DataError):
            enhance_range_image(constant_range_image(4, 8), self.CFG, None, _camera())

    def test_oracle_prediction_reproduces_traced_returns(self):
        """Gating a clean scan with the exact prediction removes the see-through returns."""
        cfg = small_sensor(rows=8, cols=16, full_turn=False)
        cam = desk_camera()
        scene = wall_scene(5.0, window=(-1.0, 1.0, 1.0, 3.0))
        clean = render_clean_range_image(scene, cfg)
        _, traced = render_frame(scene, cfg, cam)
        pred = render_oracle_prediction(scene, cfg, cam)
        opts = EnhanceOptions(mode=EnhanceMode.LEARNED)

        out = enhance_range_image(clean, cfg, pred, cam, opts=opts)

        assert clean.returns.all()
        assert not traced.returns.all()
        np.testing.assert_array_equal(out.returns, traced.returns)
        np.testing.assert_allclose(out.depth, traced.depth, rtol=1e-9)
        pc = range_image_to_pointcloud(out, cfg)
        u, v, _, in_front = project_points(pc.xyz, cam)
        seen = in_front & inside_image(u, v, cam)
        assert seen.any()
        expected = range_image_to_pointcloud(traced, cfg).intensity
        np.testing.assert_allclose(pc.intensity[seen], expected[seen], atol=0.02)


class TestMetrics:
    def test_iou_identical(self):
        mask = np.array([[True, False], [True, True]])
        assert mask_iou(mask, mask) == 1.0

    def test_iou_disjoint(self):
        assert mask_iou(np.array([[True, False]]), np.array([[False, True]])) == 0.0

    def test_iou_partial(self):
        a = np.array([[True, True, False]])
        b = np.array([[False, True, True]])
        assert mask_iou(a, b) == pytest.approx(1 / 3)

    def test_iou_both_empty(self):
        assert mask_iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0

    def test_iou_rejects_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mask_iou(np.zeros((2, 2), bool), np.zeros((2, 3), bool))

    def test_mae_exact(self):
        truth = DenseIntensityMask(np.array([[0.4, 0.0], [0.2, 0.0]]))
        assert intensity_mae(truth.values, truth) == 0.0

    def test_mae_ignores_masked_pixels(self):
        truth = DenseIntensityMask(np.array([[0.4, 0.0], [0.2, 0.0]]))
        pred = np.array([[0.5, 0.9], [0.1, 0.7]])
        assert intensity_mae(pred, truth) == pytest.approx(0.1)

    def test_mae_fully_masked(self):
        assert intensity_mae(np.ones((2, 2)), DenseIntensityMask(np.zeros((2, 2)))) == 0.0

    def test_evaluate_perfect_prediction(self):
        truth = DenseIntensityMask(np.array([[0.4, 0.0], [0.2, 0.0]]))
        report = evaluate(PredictorOutput.from_mask(truth), truth)
        assert (report.iou, report.mae) == (1.0, 0.0)

    def test_evaluate_uses_threshold(self):
        truth = DenseIntensityMask(np.array([[0.4, 0.0]]))
        pred = PredictorOutput(np.array([[0.6, 0.4]]), np.array([[0.4, 0.0]]))
        assert evaluate(pred, truth).iou == 1.0
        assert evaluate(pred, truth, threshold=0.3).iou == 0.5
