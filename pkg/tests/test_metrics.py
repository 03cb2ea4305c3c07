import numpy as np
import pytest

from stereosynth import metrics
from stereosynth.imgio import DisparityMap, write_disparity_png16, write_pfm


def _full_mask(shape):
    return np.ones(shape, dtype=bool)


# ---------------------------------------------------------------------------
# epe / threshold


def test_epe_perfect_prediction():
    gt = np.array([[1.0, 2.0, 3.0]])
    assert metrics.epe(gt, gt, _full_mask(gt.shape)) == 0.0


def test_epe_constant_offset():
    gt = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert metrics.epe(gt + 1.0, gt, _full_mask(gt.shape)) == 1.0


def test_epe_hand_computed_mean():
    gt = np.zeros((1, 3))
    pred = np.array([[0.0, 2.0, 4.0]])
    assert metrics.epe(pred, gt, _full_mask(gt.shape)) == 2.0


def test_threshold_error_hand_computed():
    gt = np.zeros((1, 4))
    pred = np.array([[0.0, 2.0, 4.0, 5.0]])
    assert metrics.threshold_error(pred, gt, _full_mask(gt.shape), 3.0) == 50.0


def test_threshold_error_boundary_strict():
    gt = np.zeros((1, 2))
    pred = np.array([[3.0, 3.0000001]])
    assert metrics.threshold_error(pred, gt, _full_mask(gt.shape), 3.0) == 50.0


def test_threshold_error_perfect():
    gt = np.ones((2, 2))
    assert metrics.threshold_error(gt, gt, _full_mask(gt.shape), 1.0) == 0.0


def test_empty_mask_raises():
    gt = np.zeros((2, 2))
    with pytest.raises(ValueError):
        metrics.epe(gt, gt, np.zeros((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        metrics.threshold_error(gt, gt, np.zeros((2, 2), dtype=bool), 3.0)


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(0)
    gt = rng.random((6, 7)) * 50
    pred = gt + rng.normal(0, 2, gt.shape)
    perm = rng.permutation(42)
    mask = _full_mask(gt.shape)
    assert metrics.epe(pred, gt, mask) == pytest.approx(
        metrics.epe(pred.ravel()[perm].reshape(6, 7),
                    gt.ravel()[perm].reshape(6, 7), mask))


def test_metrics_monotone_in_error():
    rng = np.random.default_rng(1)
    gt = rng.random((5, 5)) * 20
    pred = gt + rng.normal(0, 1, gt.shape)
    mask = _full_mask(gt.shape)
    base_epe = metrics.epe(pred, gt, mask)
    base_thr = metrics.threshold_error(pred, gt, mask, 1.0)
    worse = pred + np.sign(pred - gt + 1e-12) * 2.0
    assert metrics.epe(worse, gt, mask) >= base_epe
    assert metrics.threshold_error(worse, gt, mask, 1.0) >= base_thr


def test_threshold_error_non_increasing_in_tau():
    rng = np.random.default_rng(2)
    gt = rng.random((8, 8)) * 30
    pred = gt + rng.normal(0, 3, gt.shape)
    mask = _full_mask(gt.shape)
    errors = [metrics.threshold_error(pred, gt, mask, tau)
              for tau in (0.5, 1.0, 2.0, 3.0, 5.0)]
    assert all(a >= b for a, b in zip(errors, errors[1:]))


def test_invalid_pixels_never_influence_metrics():
    rng = np.random.default_rng(3)
    gt = rng.random((10, 10)) * 40
    pred = gt + rng.normal(0, 1, gt.shape)
    mask = rng.random((10, 10)) < 0.7
    base = (metrics.epe(pred, gt, mask),
            metrics.threshold_error(pred, gt, mask, 2.0))
    for _ in range(50):
        fuzzed = pred.copy()
        fuzzed[~mask] = rng.normal(0, 1000, (~mask).sum())
        assert metrics.epe(fuzzed, gt, mask) == base[0]
        assert metrics.threshold_error(fuzzed, gt, mask, 2.0) == base[1]


# ---------------------------------------------------------------------------
# resize


def test_resize_prediction_identity():
    pred = np.random.default_rng(4).random((6, 8)) * 10
    out = metrics.resize_prediction(pred, (6, 8))
    assert np.allclose(out, pred, atol=1e-6)


def test_resize_prediction_scales_values_with_width():
    pred = np.full((4, 5), 10.0)
    out = metrics.resize_prediction(pred, (8, 10))
    assert out.shape == (8, 10)
    assert np.allclose(out, 20.0, atol=1e-5)


def test_resize_prediction_constant_map():
    pred = np.full((3, 6), 7.0)
    out = metrics.resize_prediction(pred, (5, 9))
    assert np.allclose(out, 7.0 * 9 / 6, atol=1e-5)


# ---------------------------------------------------------------------------
# directory evaluation


def _write_gt_pred(tmp_path, stems, gt_maker, pred_maker, fmt="pfm"):
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir(exist_ok=True)
    pred_dir.mkdir(exist_ok=True)
    for stem in stems:
        gt = gt_maker(stem)
        pred = pred_maker(stem)
        if fmt == "pfm":
            write_pfm(gt, gt_dir / f"{stem}.pfm")
            write_pfm(DisparityMap.dense(pred), pred_dir / f"{stem}.pfm")
        else:
            write_disparity_png16(gt, gt_dir / f"{stem}.png")
            write_disparity_png16(DisparityMap.dense(pred), pred_dir / f"{stem}.png")
    return pred_dir, gt_dir


def test_evaluate_directory_perfect(tmp_path):
    values = np.random.default_rng(5).random((6, 7)).astype(np.float32) * 30
    pred_dir, gt_dir = _write_gt_pred(
        tmp_path, ["a", "b"],
        lambda s: DisparityMap.dense(values),
        lambda s: values)
    result = metrics.evaluate_directory(pred_dir, gt_dir, taus=(3.0, 1.0))
    assert result.aggregate.epe == 0.0
    assert result.aggregate.threshold_errors[3.0] == 0.0
    assert len(result.per_image) == 2
    assert not result.skipped


def test_evaluate_directory_unweighted_mean(tmp_path):
    gt = np.zeros((4, 4), dtype=np.float32)
    offsets = {"a": 1.0, "b": 3.0}
    pred_dir, gt_dir = _write_gt_pred(
        tmp_path, ["a", "b"],
        lambda s: DisparityMap.dense(gt),
        lambda s: gt + offsets[s])
    result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert result.aggregate.epe == pytest.approx(2.0)


def test_evaluate_directory_missing_pred_skipped(tmp_path):
    gt = DisparityMap.dense(np.ones((3, 3), dtype=np.float32))
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir()
    pred_dir.mkdir()
    write_pfm(gt, gt_dir / "a.pfm")
    write_pfm(gt, gt_dir / "b.pfm")
    write_pfm(gt, pred_dir / "a.pfm")
    with pytest.warns(UserWarning):
        result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert result.skipped == ["b"]
    assert len(result.per_image) == 1


def test_evaluate_directory_invalid_gt_excluded(tmp_path):
    values = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    valid = np.array([[True, False], [True, True]])
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir()
    pred_dir.mkdir()
    write_pfm(DisparityMap(values, valid), gt_dir / "x.pfm")
    pred = values.copy()
    pred[0, 1] = 999.0  # junk at the invalid pixel must not matter
    write_pfm(DisparityMap.dense(pred), pred_dir / "x.pfm")
    result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert result.per_image[0].epe == 0.0
    assert result.per_image[0].pixel_count == 3


def test_evaluate_directory_png16_inputs(tmp_path):
    values = (np.random.default_rng(6).random((5, 5)) * 50 + 1).astype(np.float32)
    quantized = np.rint(values * 256) / 256  # what PNG16 will store
    pred_dir, gt_dir = _write_gt_pred(
        tmp_path, ["k"],
        lambda s: DisparityMap.dense(quantized.astype(np.float32)),
        lambda s: quantized.astype(np.float32), fmt="png")
    result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert result.aggregate.epe == 0.0


def test_evaluate_directory_noc_mask(tmp_path):
    from PIL import Image as PILImage

    gt = np.zeros((4, 4), dtype=np.float32)
    pred = gt.copy()
    pred[:, 2:] = 10.0  # errors only in the occluded half
    pred_dir, gt_dir = _write_gt_pred(
        tmp_path, ["m"],
        lambda s: DisparityMap.dense(gt),
        lambda s: pred)
    noc_dir = tmp_path / "noc"
    noc_dir.mkdir()
    noc = np.zeros((4, 4), dtype=np.uint8)
    noc[:, :2] = 255
    PILImage.fromarray(noc, mode="L").save(noc_dir / "m.png")
    result = metrics.evaluate_directory(pred_dir, gt_dir, mask_kind="noc", noc_dir=noc_dir)
    assert result.per_image[0].epe == 0.0
    assert result.per_image[0].pixel_count == 8
    full = metrics.evaluate_directory(pred_dir, gt_dir)
    assert full.per_image[0].epe == 5.0


def test_evaluate_directory_dedupes_dual_format_stems(tmp_path):
    values = np.full((4, 4), 3.0, dtype=np.float32)
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir()
    pred_dir.mkdir()
    write_pfm(DisparityMap.dense(values), gt_dir / "a.pfm")
    write_disparity_png16(DisparityMap.dense(values), gt_dir / "a.png")
    write_pfm(DisparityMap.dense(values), pred_dir / "a.pfm")
    result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert len(result.per_image) == 1
    assert result.per_image[0].epe == 0.0


def test_evaluate_directory_resizes_prediction(tmp_path):
    gt = np.full((6, 8), 16.0, dtype=np.float32)
    pred = np.full((3, 4), 8.0, dtype=np.float32)  # half resolution, half disparity
    gt_dir = tmp_path / "gt"
    pred_dir = tmp_path / "pred"
    gt_dir.mkdir()
    pred_dir.mkdir()
    write_pfm(DisparityMap.dense(gt), gt_dir / "r.pfm")
    write_pfm(DisparityMap.dense(pred), pred_dir / "r.pfm")
    result = metrics.evaluate_directory(pred_dir, gt_dir)
    assert result.per_image[0].epe == pytest.approx(0.0, abs=1e-5)
