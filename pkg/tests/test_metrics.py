import numpy as np
import pytest

from vsodkit.metrics import (
    BETA2,
    NUM_THRESHOLDS,
    THRESHOLDS,
    MetricReport,
    evaluate_dataset,
    f_beta,
    mae,
    max_f_measure,
    precision_recall_curve,
    s_measure,
)


def _random_frames(n, size, seed):
    rng = np.random.default_rng(seed)
    preds = [rng.random((size, size)) for _ in range(n)]
    gts = [(rng.random((size, size)) > 0.5).astype(np.float64) for _ in range(n)]
    return preds, gts


# --- brute-force counting oracles -------------------------------------------


def _pr_oracle(pred, gt):
    """Per-pixel scalar counting, one threshold at a time."""
    precision = np.zeros(NUM_THRESHOLDS)
    recall = np.zeros(NUM_THRESHOLDS)
    n_gt = int((gt > 0.5).sum())
    for k in range(NUM_THRESHOLDS):
        t = THRESHOLDS[k]
        tp = n_pred = 0
        for v, g in zip(pred.ravel(), gt.ravel()):
            if v > t:
                n_pred += 1
                if g > 0.5:
                    tp += 1
        if n_pred > 0:
            precision[k] = tp / n_pred
        if n_gt > 0:
            recall[k] = tp / n_gt
    return precision, recall


def _max_f_oracle(preds, gts):
    prec = np.zeros(NUM_THRESHOLDS)
    rec = np.zeros(NUM_THRESHOLDS)
    for p, g in zip(preds, gts):
        pr, rc = _pr_oracle(p, g)
        prec += pr
        rec += rc
    prec /= len(preds)
    rec /= len(preds)
    f = np.zeros(NUM_THRESHOLDS)
    for k in range(NUM_THRESHOLDS):
        den = BETA2 * prec[k] + rec[k]
        if den > 0:
            f[k] = (1.0 + BETA2) * prec[k] * rec[k] / den
    return float(f.max()), f


def test_threshold_grid_covers_unit_interval():
    assert len(THRESHOLDS) == 256
    assert THRESHOLDS[0] == 0.0 and THRESHOLDS[-1] == 1.0
    assert np.all(np.diff(THRESHOLDS) > 0)


def test_precision_recall_matches_counting_oracle_exactly():
    preds, gts = _random_frames(4, 8, seed=0)
    for p, g in zip(preds, gts):
        precision, recall = precision_recall_curve(p, g)
        o_precision, o_recall = _pr_oracle(p, g)
        assert np.array_equal(precision, o_precision)
        assert np.array_equal(recall, o_recall)


def test_max_f_matches_counting_oracle_exactly():
    preds, gts = _random_frames(5, 10, seed=1)
    got, curve = max_f_measure(np.stack(preds), np.stack(gts))
    want, want_curve = _max_f_oracle(preds, gts)
    assert got == want
    assert np.array_equal(curve, want_curve)


def test_max_f_zero_prediction_is_zero():
    gt = np.zeros((16, 16))
    gt[4:12, 4:12] = 1.0
    value, _ = max_f_measure(np.zeros((16, 16)), gt)
    assert value == 0.0


def test_max_f_perfect_binary_prediction_is_one():
    gt = np.zeros((16, 16))
    gt[2:9, 3:11] = 1.0
    value, _ = max_f_measure(gt.copy(), gt)
    assert value == 1.0


def test_max_f_duplication_invariance():
    preds, gts = _random_frames(1, 12, seed=2)
    single, _ = max_f_measure(preds[0], gts[0])
    tripled, _ = max_f_measure(np.stack(preds * 3), np.stack(gts * 3))
    assert single == pytest.approx(tripled, rel=1e-12)  # up to accumulation rounding


def test_max_f_rejects_non_binary_gt():
    with pytest.raises(ValueError, match="binary"):
        max_f_measure(np.zeros((8, 8)), np.full((8, 8), 0.5))


def test_f_beta_zero_denominator_is_zero():
    assert np.all(f_beta(np.zeros(4), np.zeros(4)) == 0.0)


def test_mae_known_values():
    gt = np.zeros((8, 8))
    gt[:4] = 1.0
    assert mae(gt.copy(), gt) == 0.0
    assert mae(1.0 - gt, gt) == 1.0
    assert mae(np.full((8, 8), 0.5), gt) == 0.5


def test_mae_averages_over_frames():
    g0 = np.zeros((4, 4))
    g1 = np.ones((4, 4))
    preds = np.stack([np.full((4, 4), 0.25), np.ones((4, 4))])
    gts = np.stack([g0, g1])
    assert mae(preds, gts) == pytest.approx((0.25 + 0.0) / 2, abs=1e-15)


# --- structure measure -------------------------------------------------------


def _s_oracle(pred, gt):
    """Direct transcription with explicit slicing, kept separate from the
    library implementation."""
    eps = np.finfo(np.float64).eps
    y_mean = gt.mean()
    if y_mean == 0.0:
        return 1.0 - pred.mean()
    if y_mean == 1.0:
        return float(pred.mean())

    def obj(vals):
        if vals.size == 0:
            return 0.0
        x = vals.mean()
        s = vals.std(ddof=1) if vals.size > 1 else 0.0
        return 2.0 * x / (x * x + 1.0 + s + eps)

    fg = gt > 0.5
    s_o = y_mean * obj(pred[fg]) + (1 - y_mean) * obj((1.0 - pred)[~fg])

    rows, cols = gt.shape
    total = gt.sum()
    i = np.arange(1, cols + 1)
    j = np.arange(1, rows + 1)
    cx = int(np.floor((gt.sum(axis=0) * i).sum() / total + 0.5))
    cy = int(np.floor((gt.sum(axis=1) * j).sum() / total + 0.5))

    def region(p, g):
        n = p.size
        x, y = p.mean(), g.mean()
        sx = ((p - x) ** 2).sum() / (n - 1 + eps)
        sy = ((g - y) ** 2).sum() / (n - 1 + eps)
        sxy = ((p - x) * (g - y)).sum() / (n - 1 + eps)
        alpha = 4 * x * y * sxy
        beta = (x * x + y * y) * (sx + sy)
        if alpha != 0:
            return alpha / (beta + eps)
        return 1.0 if beta == 0 else 0.0

    s_r = 0.0
    quads = (
        (pred[:cy, :cx], gt[:cy, :cx]),
        (pred[:cy, cx:], gt[:cy, cx:]),
        (pred[cy:, :cx], gt[cy:, :cx]),
        (pred[cy:, cx:], gt[cy:, cx:]),
    )
    for p_q, g_q in quads:
        if p_q.size == 0:
            continue
        s_r += (p_q.size / gt.size) * region(p_q, g_q)
    return max(0.5 * s_o + 0.5 * s_r, 0.0)


def test_s_measure_matches_dual_implementation():
    rng = np.random.default_rng(3)
    for _ in range(30):
        pred = rng.random((16, 16))
        gt = (rng.random((16, 16)) > rng.uniform(0.2, 0.8)).astype(np.float64)
        assert s_measure(pred, gt) == pytest.approx(_s_oracle(pred, gt), abs=1e-12)


def test_s_measure_perfect_prediction_is_one():
    gt = np.zeros((16, 16))
    gt[4:10, 2:12] = 1.0
    assert s_measure(gt.copy(), gt) == pytest.approx(1.0, abs=1e-9)


def test_s_measure_degenerate_masks_use_mean_fallbacks():
    pred = np.full((8, 8), 0.3)
    assert s_measure(pred, np.zeros((8, 8))) == pytest.approx(0.7, abs=1e-12)
    assert s_measure(pred, np.ones((8, 8))) == pytest.approx(0.3, abs=1e-12)


def test_s_measure_anticorrelated_prediction_clamps_to_zero():
    gt = np.zeros((16, 16))
    gt[:, :8] = 1.0
    assert s_measure(1.0 - gt, gt) == 0.0


def test_s_measure_orders_good_above_bad():
    rng = np.random.default_rng(4)
    gt = np.zeros((16, 16))
    gt[3:12, 5:13] = 1.0
    noisy_good = np.clip(gt + rng.normal(0, 0.1, gt.shape), 0, 1)
    assert s_measure(noisy_good, gt) > s_measure(rng.random((16, 16)), gt)


# --- dataset-level aggregation ----------------------------------------------


def test_evaluate_dataset_matches_per_frame_oracle_exactly():
    preds, gts = _random_frames(6, 8, seed=5)
    report = evaluate_dataset(preds, gts)
    want_max_f, want_curve = _max_f_oracle(preds, gts)
    assert report.max_f_beta == want_max_f
    assert np.array_equal(np.array(report.per_threshold_f), want_curve)
    assert report.mae == pytest.approx(
        np.mean([np.abs(p - g).mean() for p, g in zip(preds, gts)]), abs=1e-15
    )
    assert report.s_measure == pytest.approx(
        np.mean([s_measure(p, g) for p, g in zip(preds, gts)]), abs=1e-12
    )
    assert report.frame_count == 6


def test_evaluate_dataset_ground_truth_is_perfect():
    _, gts = _random_frames(3, 12, seed=6)
    report = evaluate_dataset([g.copy() for g in gts], gts)
    assert report.max_f_beta == 1.0
    assert report.s_measure == pytest.approx(1.0, abs=1e-9)
    assert report.mae == 0.0


def test_evaluate_dataset_constant_half_has_half_mae():
    _, gts = _random_frames(2, 8, seed=7)
    report = evaluate_dataset([np.full((8, 8), 0.5)] * 2, gts)
    assert report.mae == 0.5


def test_evaluate_dataset_errors():
    preds, gts = _random_frames(2, 8, seed=8)
    with pytest.raises(ValueError, match="length"):
        evaluate_dataset(preds, gts[:1])
    with pytest.raises(ValueError, match="empty"):
        evaluate_dataset([], [])
    with pytest.raises(ValueError, match="mismatch"):
        evaluate_dataset([np.zeros((4, 4))], [np.zeros((8, 8))])


def test_report_fields_in_range_and_json_roundtrip():
    preds, gts = _random_frames(3, 8, seed=9)
    report = evaluate_dataset(preds, gts)
    assert 0.0 <= report.max_f_beta <= 1.0
    assert 0.0 <= report.s_measure <= 1.0
    assert 0.0 <= report.mae <= 1.0
    back = MetricReport.from_json(report.to_json())
    assert back == report
