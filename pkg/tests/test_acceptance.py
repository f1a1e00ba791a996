"""Acceptance criteria 1-9, one summary line per criterion.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they are produced; a normal run prints them in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

import gradcheck
import oracles
from acceptance_log import report
from salitrack import NonRigidTracker, SaliencyNetwork
from salitrack.fusion import (
    domain_transform,
    normalize,
    optimize_weights,
    region_saliency,
    scale_fuse,
    weighted_entropy,
    weighted_fuse,
)
from salitrack.imaging import box_center, mask_bbox
from salitrack.metrics import (
    evaluate_masks,
    evaluate_saliency,
    f_measure,
    iou_bbox,
    iou_mask,
    pr_curve,
    records_to_csv,
)
from salitrack.regions import RegionSpec
from salitrack.saliency_net.model import Topology, forward, init_params
from salitrack.synthetic import blob_dataset, drifting_blob_sequence
from salitrack.tracker import stcsm_update, stcsm_weights

SEED = 0


def run_training(seed=SEED):
    """Criterion 6 experiment: returns the net, its training-set F and the CSV."""
    start = time.perf_counter()
    pairs = blob_dataset(10, seed=seed)
    images, masks = [p[0] for p in pairs], [p[1] for p in pairs]
    net = SaliencyNetwork(n_iterations=500, random_state=seed).fit(images, masks)
    records = [
        evaluate_saliency(f"train_{i:02d}", net.predict_proba(img), m)
        for i, (img, m) in enumerate(zip(images, masks))
    ]
    f = float(np.mean([r.f_measure for r in records]))
    return net, f, records_to_csv(records).encode(), time.perf_counter() - start


def run_tracking(net, seed=SEED):
    """Criterion 7 experiment on the 50-frame drifting blob."""
    start = time.perf_counter()
    frames, masks, box = drifting_blob_sequence(50, radius=8, velocity=(2.0, 0.0), seed=seed)
    tracker = NonRigidTracker(net, seed=seed)
    outs = tracker.track_sequence(frames, box)
    records = [evaluate_masks(f"frame_{t:03d}", o.mask, m) for t, (o, m) in enumerate(zip(outs, masks[1:]), 2)]
    errors = [math.hypot(*np.subtract(o.center, box_center(mask_bbox(m)))) for o, m in zip(outs, masks[1:])]
    stats = {
        "mean_iou": float(np.mean([r.iou_mask for r in records])),
        "within5": float(np.mean(np.array(errors) <= 5.0)),
        "lost": len(tracker.lost_frames_),
    }
    return stats, records_to_csv(records).encode(), time.perf_counter() - start


@pytest.fixture(scope="module")
def first_run():
    net, f, train_csv, t_train = run_training()
    stats, track_csv, t_track = run_tracking(net)
    return dict(f=f, train_csv=train_csv, t_train=t_train, stats=stats, track_csv=track_csv, t_track=t_track)


def test_criterion_1_gradient_suite():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    results = [gradcheck.compare(*gradcheck.random_instance(rng)) for _ in range(24)]
    elapsed = time.perf_counter() - start
    ok = all(r[0] for r in results) and elapsed < 60
    worst = max(r[1] for r in results)
    assert report(1, "finite-difference gradient agreement", ok,
                  f"{len(results)} nets, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_fusion_optimizer_oracle():
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    gaps, simplex_ok = [], True
    for i in range(50):
        n = i % 3 + 1
        pixels = int(rng.integers(1, 17))
        raw = rng.random((n, pixels)) ** rng.uniform(0.3, 3)
        maps = np.array([normalize(m[None])[0] for m in raw])
        w = optimize_weights(maps)
        simplex_ok &= bool(np.all(w >= -1e-9) and abs(w.sum() - 1) <= 1e-9)
        h_grid, _ = oracles.grid_min_entropy(maps)
        gaps.append(abs(weighted_entropy(w, maps) - h_grid))
    elapsed = time.perf_counter() - start
    ok = max(gaps) <= 1e-4 and simplex_ok and elapsed < 60
    assert report(2, "entropy weights vs simplex grid search", ok,
                  f"50 instances, max |H - H_grid| {max(gaps):.2e}, simplex ok {simplex_ok}, {elapsed:.1f}s")


def test_criterion_3_fusion_algebra():
    rng = np.random.default_rng(3)
    errs = []
    for seed in range(10):
        topo = Topology(widths=(3, 4, 5), input_size=16)
        out = forward(rng.normal(size=(3, 16, 16)), init_params(topo, seed=seed))
        spec = RegionSpec("whole", 1, (0, 0, 16, 16), (0, 0, 16, 16))
        s = region_saliency(out, spec, (16, 16))
        errs.append(np.max(np.abs(s - (2 * out.exaction - 1))))
    maps = rng.normal(size=(7, 6, 6))
    clamp_ok = bool(np.all(scale_fuse(maps) >= 0))
    fuse_maps = rng.random((3, 6, 6))
    errs.append(np.max(np.abs(weighted_fuse(fuse_maps, [0, 0, 1]) - fuse_maps[2])))
    errs.append(np.max(np.abs(weighted_fuse(np.stack([fuse_maps[0]] * 3), [0.2, 0.3, 0.5]) - fuse_maps[0])))
    errs.append(np.max(np.abs(weighted_fuse(fuse_maps[:2], [0.5, 0.5]) - fuse_maps[:2].mean(axis=0))))
    contrib = [np.full((1, 1), v) for v in (0.5, -0.2, 0.1, 0, 0, 0, 0)]
    errs.append(abs(scale_fuse(contrib)[0, 0] - 0.4))
    ok = max(errs) <= 1e-6 and clamp_ok
    assert report(3, "softmax, clamp and convexity identities", ok,
                  f"max err {max(errs):.1e}, clamp nonnegative {clamp_ok}")


def test_criterion_4_stcsm():
    rng = np.random.default_rng(4)
    cur = rng.random((5, 5))
    identity = np.array_equal(stcsm_update(cur, [], 1.1, 2), cur)
    fixed = all(
        np.allclose(stcsm_update(np.ones((4, 4)), [np.ones((4, 4))] * 5, c, tau), 1.0, atol=1e-12)
        for c in (1.05, 1.1, 2.0) for tau in (0, 1, 2, 4)
    )
    value = float(stcsm_update(np.zeros((2, 2)), [np.ones((2, 2))] * 3, 1.1, 2)[0, 0])
    monotone = all(np.all(np.diff(stcsm_weights(6, c)) < 0) for c in (1.01, 1.1, 3.0))
    ok = identity and fixed and abs(value - 0.71321) <= 1e-5 and monotone
    assert report(4, "accumulated saliency recurrence", ok,
                  f"identity {identity}, fixed point {fixed}, worked value {value:.5f}, monotone {monotone}")


def test_criterion_5_domain_transform():
    rng = np.random.default_rng(5)
    guide = rng.random((20, 24))
    const_err = np.max(np.abs(domain_transform(np.full((20, 24), 0.37), guide) - 0.37))
    sal = rng.random((20, 24))
    ident_err = np.max(np.abs(domain_transform(sal, guide, sigma_s=1e-9) - sal))
    range_ok = True
    for _ in range(100):
        h, w = rng.integers(2, 20, size=2)
        m = rng.normal(size=(h, w))
        out = domain_transform(m, rng.random((h, w)), rng.uniform(1, 30), rng.uniform(0.02, 1))
        range_ok &= bool(out.min() >= m.min() - 1e-9 and out.max() <= m.max() + 1e-9)
    step = np.zeros((1, 48))
    step[0, 24:] = 1.0
    row = domain_transform(step, step, 10.0, 0.1, 3)[0]
    leak = max(row[:24].max(), 1 - row[24:].min())
    ok = const_err <= 1e-9 and ident_err <= 1e-6 and range_ok and leak <= 0.05
    assert report(5, "edge-preserving recursive filter", ok,
                  f"const err {const_err:.1e}, identity err {ident_err:.1e}, range ok {range_ok}, leak {leak:.1e}")


def test_criterion_6_training(first_run):
    ok = first_run["f"] >= 0.95 and first_run["t_train"] < 300
    assert report(6, "toy training on 10 synthetic blobs", ok,
                  f"training-set F {first_run['f']:.4f}, {first_run['t_train']:.1f}s")


def test_criterion_7_tracking(first_run):
    s = first_run["stats"]
    ok = s["mean_iou"] >= 0.7 and s["within5"] >= 0.9 and s["lost"] == 0 and first_run["t_track"] < 300
    assert report(7, "50-frame drifting blob tracking", ok,
                  f"mean IoU {s['mean_iou']:.3f}, centre err <= 5px on {s['within5']:.0%}, "
                  f"lost {s['lost']}, {first_run['t_track']:.1f}s")


def test_criterion_8_metric_identities():
    rng = np.random.default_rng(8)
    checks = {
        "F(1,1)": f_measure(1.0, 1.0) == 1.0,
        "F(0.8,0.5)": abs(f_measure(0.8, 0.5) - 0.70270) < 5e-6,
        "box IoU": abs(iou_bbox((0, 0, 2, 2), (1, 0, 2, 2)) - 1 / 3) < 1e-15,
    }
    a = (rng.random((8, 8)) > 0.5).astype(np.uint8)
    checks["mask IoU"] = iou_mask(a, a) == 1.0 and iou_mask(a, 1 - a) == 0.0
    pr_ok = True
    for _ in range(50):
        sal = rng.random((8, 8))
        gt = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        points, _ = pr_curve(sal, gt)
        pr_ok &= [(p.threshold, p.precision, p.recall) for p in points] == oracles.pr_recount(sal, gt)
    checks["PR recount"] = pr_ok
    failed = [k for k, v in checks.items() if not v]
    assert report(8, "metric identities", not failed, f"failed: {failed or 'none'}")


def test_criterion_9_determinism(first_run):
    net, _, train_csv, _ = run_training()
    _, track_csv, _ = run_tracking(net)
    same_train = train_csv == first_run["train_csv"]
    same_track = track_csv == first_run["track_csv"]
    assert report(9, "byte-identical CSVs across runs", same_train and same_track,
                  f"training CSV {same_train}, tracking CSV {same_track}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
