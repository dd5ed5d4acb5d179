"""Acceptance suite: one test per release criterion, run in order.

Each test prints a `[criterion NN] PASS` line on success (visible with -s;
the pytest -v status line carries the same verdict either way). Criteria 10
and 12 share an expensive end-to-end fixture that is executed twice with the
same seed, independently, to check both the quality bar and reproducibility.
"""

import os
import time

import numpy as np
import pytest

from funcscene import neuralnet as nn
from funcscene.dataset import (
    BACKGROUND_ID,
    Annotation,
    SyntheticSceneSpec,
    generate_synthetic,
    group_by_image,
    image_rng,
    sample_background,
)
from funcscene.evaluation import (
    Detection,
    compute_metrics,
    confusion,
    match_detections,
    nms,
    roc_curve,
)
from funcscene.imaging import BoundingBox, Image, iou
from funcscene.optimizer import (
    DampingProbe,
    Schedule,
    is_underdamped,
    iteration_matrix,
    lr_at_epoch,
    simulate_quadratic,
    spectral_radius,
)
from funcscene.proposals import Strategy, hierarchical_group, propose, region_features
from funcscene.segmentation import oversegment, segment_adjacency
from funcscene.training import TrainConfig, detect_image, mine_hard_examples, train
import funcscene.training as training_mod


def announce(num, detail):
    print(f"[criterion {num:02d}] PASS - {detail}")


# --- oracles ----------------------------------------------------------------

def grid_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Pixel-counting IOU on the integer grid."""
    x1 = max(a.x_max, b.x_max)
    y1 = max(a.y_max, b.y_max)
    ga = np.zeros((y1, x1), dtype=bool)
    gb = np.zeros((y1, x1), dtype=bool)
    ga[a.y_min:a.y_max, a.x_min:a.x_max] = True
    gb[b.y_min:b.y_max, b.x_min:b.x_max] = True
    union = np.logical_or(ga, gb).sum()
    return np.logical_and(ga, gb).sum() / union if union else 0.0


def flood_components(labels: np.ndarray) -> int:
    """Number of 4-connected constant-label components, by stack flood fill."""
    h, w = labels.shape
    seen = np.zeros((h, w), dtype=bool)
    count = 0
    for sy in range(h):
        for sx in range(w):
            if seen[sy, sx]:
                continue
            count += 1
            val = labels[sy, sx]
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and labels[ny, nx] == val:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
    return count


def random_box(rng, span=40):
    x0, y0 = rng.integers(0, span, 2)
    w, h = rng.integers(1, 25, 2)
    return BoundingBox(int(x0), int(y0), int(x0 + w), int(y0 + h))


# --- criteria 1-9, 11 -------------------------------------------------------

class TestCriteria:
    def test_criterion_01_iou_grid_oracle(self):
        t0 = time.time()
        rng = np.random.default_rng(101)
        for _ in range(1000):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == grid_iou(a, b)
        elapsed = time.time() - t0
        assert elapsed < 1.0
        announce(1, f"1000 box pairs match the pixel-count oracle exactly ({elapsed:.2f}s)")

    def test_criterion_02_reference_f1_consistency(self):
        # six reference operating points, (precision, recall, reported F1),
        # for each of the two evaluation sets
        rows = [
            (0.0526, 0.2392, 0.0862), (0.1618, 0.1505, 0.1559), (0.3152, 0.1158, 0.1694),
            (0.0478, 0.2508, 0.0803), (0.1989, 0.0908, 0.1247), (0.2974, 0.1154, 0.1663),
            (0.0169, 0.5025, 0.0327), (0.0848, 0.1558, 0.1098), (0.2382, 0.1553, 0.1880),
            (0.0129, 0.4975, 0.0251), (0.1334, 0.1559, 0.1438), (0.1341, 0.1005, 0.1149),
        ]
        for p, r, printed in rows:
            assert 2 * p * r / (p + r) == pytest.approx(printed, abs=5e-5)
        announce(2, "all printed F1 values equal 2pr/(p+r) within 5e-5")

    def test_criterion_03_gradient_checks(self):
        t0 = time.time()
        rng = np.random.default_rng(103)
        # one small net per layer kind
        per_layer = {
            "conv": nn.NetworkSpec((1, 6, 6), (nn.Conv(1, 3, 3, 3), nn.FullyConnected(48, 3), nn.Softmax()), 3),
            "relu": nn.NetworkSpec((1, 4, 4), (nn.FullyConnected(16, 6), nn.ReLU(), nn.FullyConnected(6, 3), nn.Softmax()), 3),
            "maxpool": nn.NetworkSpec((1, 6, 6), (nn.MaxPool(2, 2), nn.FullyConnected(9, 3), nn.Softmax()), 3),
            "avgpool": nn.NetworkSpec((1, 6, 6), (nn.AvgPool(2, 2), nn.FullyConnected(9, 3), nn.Softmax()), 3),
            "fc": nn.NetworkSpec((1, 4, 4), (nn.FullyConnected(16, 3), nn.Softmax()), 3),
        }
        worst = 0.0
        for name, net in per_layer.items():
            params = nn.init_parameters(net, seed=1)
            c, h, w = net.input
            patch = Image(rng.uniform(0, 1, (h, w, c)))
            err = nn.gradient_check(net, params, patch, target=1)
            assert err < 1e-4, name
            worst = max(worst, err)
        # composed 5-conv / 3-FC network
        composed = nn.NetworkSpec(
            input=(3, 22, 22),
            layers=(
                nn.Conv(3, 4, 3, 3), nn.ReLU(), nn.MaxPool(2, 2),
                nn.Conv(4, 4, 3, 3), nn.ReLU(),
                nn.Conv(4, 4, 3, 3), nn.ReLU(),
                nn.Conv(4, 4, 3, 3), nn.ReLU(),
                nn.Conv(4, 6, 3, 3), nn.ReLU(), nn.AvgPool(2, 2),
                nn.FullyConnected(6, 8), nn.ReLU(),
                nn.FullyConnected(8, 8), nn.ReLU(),
                nn.FullyConnected(8, 4), nn.Softmax(),
            ),
            class_count=4,
        )
        params = nn.init_parameters(composed, seed=2)
        patch = Image(rng.uniform(0, 1, (22, 22, 3)))
        err = nn.gradient_check(composed, params, patch, target=3)
        assert err < 1e-4
        worst = max(worst, err)
        elapsed = time.time() - t0
        assert elapsed < 30.0
        announce(3, f"all layer kinds + composed net, max rel error {worst:.2e} ({elapsed:.1f}s)")

    def test_criterion_04_softmax_suite(self):
        t0 = time.time()
        rng = np.random.default_rng(104)
        for i in range(1000):
            k = int(rng.integers(2, 20))
            scale = 1e4 if i % 5 == 0 else 10.0
            z = rng.uniform(-scale, scale, k)
            p = nn.softmax(z)
            assert np.all(np.isfinite(p))
            assert abs(p.sum() - 1.0) < 1e-9
            shift = float(rng.uniform(-scale, scale))
            np.testing.assert_allclose(nn.softmax(z + shift), p, atol=1e-12)
        elapsed = time.time() - t0
        assert elapsed < 1.0
        announce(4, f"1000 logit vectors: normalized to 1e-9, shift-invariant to 1e-12 ({elapsed:.2f}s)")

    def test_criterion_05_segmentation_invariants(self):
        t0 = time.time()
        rng = np.random.default_rng(105)
        # constant image -> 1 segment
        assert oversegment(Image(np.full((64, 64, 3), 0.4)), k=0.5).segment_count == 1
        # two-halves image -> 2 segments
        px = np.zeros((64, 64, 3))
        px[:, 32:] = 1.0
        assert oversegment(Image(px), k=0.5, min_size=1).segment_count == 2
        for i in range(50):
            img = Image(rng.uniform(0, 1, (64, 64, 3)))
            min_size = int(rng.integers(1, 30))
            seg = oversegment(img, k=float(rng.uniform(0.1, 1.5)), min_size=min_size)
            labels = seg.labels
            ids, counts = np.unique(labels, return_counts=True)
            # partition: dense ids covering every pixel
            assert ids.min() == 0 and ids.max() == seg.segment_count - 1
            assert counts.sum() == 64 * 64
            # min-size enforcement
            assert counts.min() >= min_size
            # 4-connectivity: component count equals segment count
            if i < 10:  # flood fill is the slow oracle; sample
                assert flood_components(labels) == seg.segment_count
        # k-monotonicity: larger k never increases the segment count
        for _ in range(10):
            img = Image(rng.uniform(0, 1, (64, 64, 3)))
            counts = [oversegment(img, k=k, min_size=1).segment_count
                      for k in (0.05, 0.2, 0.5, 1.0, 2.0)]
            assert all(b <= a for a, b in zip(counts, counts[1:]))
        elapsed = time.time() - t0
        assert elapsed < 30.0
        announce(5, f"50 images: partition/connectivity/min-size/k-monotonicity hold ({elapsed:.1f}s)")

    def test_criterion_06_proposal_algebra(self):
        t0 = time.time()
        rng = np.random.default_rng(106)
        for _ in range(5):
            img = Image(rng.uniform(0, 1, (24, 24, 3)))
            seg = oversegment(img, k=0.3, min_size=4)
            regions = region_features(img, seg)
            merged = hierarchical_group(regions, segment_adjacency(seg), Strategy(),
                                        img_size=24 * 24)
            # 2n-1 nodes per run
            assert len(merged) == 2 * len(regions) - 1
            # the final merge spans the whole image
            assert merged[-1].bbox == BoundingBox(0, 0, 24, 24)
            assert merged[-1].size == 24 * 24
            # merged histogram = size-weighted average of some child pair
            n = len(regions)
            for node in merged[n:]:
                children = [m for m in merged if m.id < node.id]
                ok = False
                for i, x in enumerate(children):
                    for y in children[i + 1:]:
                        if x.size + y.size != node.size:
                            continue
                        mix = (x.size * x.color_hist + y.size * y.color_hist) / node.size
                        if np.allclose(mix, node.color_hist, atol=1e-9):
                            ok = True
                assert ok
            # full-image box always among proposals
            result = propose(img, [Strategy("RGB", 0.3)], min_size=4)
            assert BoundingBox(0, 0, 24, 24) in result.boxes
        elapsed = time.time() - t0
        assert elapsed < 10.0
        announce(6, f"2n-1 node counts, weighted-average histograms, full-image box ({elapsed:.1f}s)")

    def test_criterion_07_damping_agreement(self):
        t0 = time.time()
        checked = 0
        for lam in (0.5, 1.0, 2.0, 4.0):
            for eta in (0.01, 0.05, 0.1, 0.5, 1.0):
                for mu in (0.0, 0.3, 0.6, 0.9):
                    probe = DampingProbe(lam, eta, mu, steps=200)
                    rho = spectral_radius(probe)
                    if abs(rho - 1.0) < 1e-6:
                        continue  # boundary band excluded
                    if rho < 1.0:
                        # enough steps to shrink the envelope below 1e-6
                        steps = min(100000, int(np.ceil(np.log(1e-6) / np.log(max(rho, 1e-6)))) + 10)
                        probe = DampingProbe(lam, eta, mu, steps=steps)
                        traj = simulate_quadratic(probe)
                        assert abs(traj[-1]) < 1e-5
                        eigs = np.linalg.eigvals(iteration_matrix(probe))
                        if is_underdamped(probe):
                            assert np.any(np.signbit(traj) != np.signbit(traj[0]))
                        elif np.isrealobj(eigs) and np.all(eigs >= 0):
                            diffs = np.abs(traj)
                            assert np.all(diffs[1:] <= diffs[:-1] + 1e-12)
                    else:
                        with np.errstate(over="ignore", invalid="ignore"):
                            traj = simulate_quadratic(probe)
                        assert not np.nanmax(np.abs(traj)) < 1.0
                    checked += 1
        elapsed = time.time() - t0
        assert elapsed < 10.0
        announce(7, f"{checked} (curvature, lr, momentum) points agree with the spectral test ({elapsed:.1f}s)")

    def test_criterion_08_schedule_compliance(self):
        s = Schedule()
        assert lr_at_epoch(s, 0) == (0.005, 0.05)
        assert lr_at_epoch(s, 39) == (0.005, 0.05)
        assert lr_at_epoch(s, 40) == pytest.approx((0.0005, 0.005))
        assert lr_at_epoch(s, 59) == pytest.approx((0.0005, 0.005))
        assert lr_at_epoch(s, 60) == pytest.approx((0.00005, 0.0005))
        assert lr_at_epoch(s, 69) == pytest.approx((0.00005, 0.0005))
        assert lr_at_epoch(s, 70) is None
        announce(8, "rates (0.005, 0.05), /10 at 40, /100 at 60, halt at 70")

    def test_criterion_09_background_sampler(self):
        t0 = time.time()
        imgs, anns = generate_synthetic(SyntheticSceneSpec(width=64, height=64, seed=109), 20)
        by = group_by_image(anns)
        total = 0
        for i, img in enumerate(imgs):
            ref = f"scene_{i:04d}.ppm"
            boxes = sample_background(img, by.get(ref, []), n=50, threshold=0.5,
                                      rng=image_rng(109, i))
            for b in boxes:
                for a in by.get(ref, []):
                    assert iou(b, a.box) < 0.5
            total += len(boxes)
        elapsed = time.time() - t0
        assert total > 0
        assert elapsed < 5.0
        announce(9, f"{total} background boxes over 20 scenes all re-verify IOU < 0.5 ({elapsed:.1f}s)")

    def test_criterion_11_evaluation_oracles(self):
        t0 = time.time()
        rng = np.random.default_rng(111)

        def rand_fixture(n_img=2):
            gts, dets = [], []
            for img in range(n_img):
                ref = f"im{img}"
                for _ in range(int(rng.integers(0, 5))):
                    gts.append(Annotation(ref, random_box(rng), int(rng.integers(0, 3))))
                for _ in range(int(rng.integers(0, 7))):
                    dets.append(Detection(random_box(rng), int(rng.integers(0, 3)),
                                          round(float(rng.uniform(0, 1)), 3), ref))
            return dets, gts

        # matcher: replay the greedy rule with per-step brute-force argmax
        for _ in range(100):
            dets, gts = rand_fixture(n_img=1)
            m = match_detections(dets, gts)
            remaining = set(range(len(gts)))
            tp = 0
            order = sorted(range(len(dets)),
                           key=lambda i: (-dets[i].confidence, dets[i].box.x_min,
                                          dets[i].box.y_min, dets[i].box.x_max,
                                          dets[i].box.y_max, dets[i].category))
            for i in order:
                cands = [(iou(dets[i].box, gts[j].box), j) for j in remaining
                         if gts[j].category == dets[i].category]
                cands = [c for c in cands if c[0] > 0.5]
                if cands:
                    remaining.discard(max(cands)[1])
                    tp += 1
            assert len(m.true_positives) == tp
            assert len(m.false_negatives) == len(gts) - tp

        # ROC: brute-force threshold sweep
        for _ in range(100):
            dets, gts = rand_fixture()
            curve = roc_curve(dets, gts, image_count=2)
            by_gt = {}
            for g in gts:
                by_gt.setdefault(g.image_ref, []).append(g)
            expect = []
            for t in sorted({d.confidence for d in dets}, reverse=True):
                kept = [d for d in dets if d.confidence >= t]
                tp = fp = 0
                for ref in ("im0", "im1"):
                    m = match_detections([d for d in kept if d.image_ref == ref],
                                         by_gt.get(ref, []))
                    tp += len(m.true_positives)
                    fp += len(m.false_positives)
                expect.append((t, fp / 2, tp / len(gts) if gts else 0.0))
            assert curve.points == tuple(expect)

        # confusion: dictionary tally
        for _ in range(100):
            pairs = [(int(rng.integers(0, 12)), int(rng.integers(0, 12)))
                     for _ in range(int(rng.integers(0, 40)))]
            mat = confusion(pairs)
            tally = {}
            for tr, pr in pairs:
                tally[(tr, pr)] = tally.get((tr, pr), 0) + 1
            for (tr, pr), cnt in tally.items():
                assert mat[tr, pr] == cnt
            assert mat.sum() == len(pairs)

        # NMS: independent quadratic reimplementation
        for _ in range(100):
            dets, _ = rand_fixture(n_img=1)
            kept = nms(dets, iou_threshold=0.3)
            expect = []
            pool = sorted(dets, key=lambda d: (-d.confidence, d.box.x_min, d.box.y_min,
                                               d.box.x_max, d.box.y_max, d.category))
            for d in pool:
                suppressed = False
                for k in expect:
                    if k.category == d.category and iou(k.box, d.box) > 0.3:
                        suppressed = True
                        break
                if not suppressed:
                    expect.append(d)
            assert kept == expect
        elapsed = time.time() - t0
        assert elapsed < 10.0
        announce(11, f"matcher/ROC/confusion/NMS equal brute force on 100 cases each ({elapsed:.1f}s)")


# --- criteria 10 and 12: end-to-end synthetic benchmark ---------------------

E2E_SEED = 11
_E2E_CACHE = {}


def run_e2e(label: str) -> dict:
    """Full three-round mining pipeline on the synthetic benchmark.

    200 training scenes / 40 test scenes, tiny network, compressed schedule.
    Detection metrics are computed on the test scenes at confidence 0.5
    after every round; validation is a held-out slice of training scenes.
    """
    if label in _E2E_CACHE:
        return _E2E_CACHE[label]
    t0 = time.time()
    seed = E2E_SEED
    train_imgs, train_anns = generate_synthetic(SyntheticSceneSpec(width=80, height=80, seed=seed), 200)
    test_imgs, test_anns = generate_synthetic(SyntheticSceneSpec(width=80, height=80, seed=seed + 1000), 40)
    images = {f"scene_{i:04d}.ppm": im for i, im in enumerate(train_imgs)}
    test_images = {f"scene_{i:04d}.ppm": im for i, im in enumerate(test_imgs)}
    by = group_by_image(train_anns)
    test_by = group_by_image(test_anns)

    net = nn.tiny_network(32)
    strategies = [Strategy("HSV", 2.0), Strategy("HSV", 5.0), Strategy("RGB", 2.0), Strategy("RGB", 5.0)]
    min_size = 15
    config = TrainConfig(
        net=net,
        schedule=Schedule(base_lr_body=0.005, base_lr_head=0.05, drop_epochs=(6, 9), stop_epoch=12),
        batch_size=128, seed=seed, rounds=3,
        strategies=tuple(strategies), proposal_min_size=min_size, dtype="float32",
    )
    backgrounds = {ref: sample_background(images[ref], by.get(ref, []), n=12,
                                          rng=image_rng(seed, i))
                   for i, ref in enumerate(sorted(images))}

    # hold out the first 4 training scenes (2%) as the validation patch pool
    refs = sorted(images)
    val_refs, train_refs = refs[:4], refs[4:]
    from funcscene.dataset import extract_training_patches
    val_anns = [a for r in val_refs for a in by.get(r, [])]
    vx, vy = extract_training_patches({r: images[r] for r in val_refs}, val_anns,
                                      net.input, {r: backgrounds[r] for r in val_refs})

    fit_images = {r: images[r] for r in train_refs}
    fit_by = {r: by[r] for r in train_refs if r in by}
    entries = []
    for ref in sorted(fit_by):
        for a in fit_by[ref]:
            entries.append((ref, a.box, a.category))
    for ref in sorted(train_refs):
        for b in backgrounds[ref]:
            entries.append((ref, b, BACKGROUND_ID))

    def test_metrics(params):
        tp = fp = fn = 0
        for ref in sorted(test_images):
            dets = detect_image(net, params, test_images[ref], ref, strategies,
                                seed=seed, confidence_cutoff=0.5, min_size=min_size)
            m = match_detections(dets, test_by.get(ref, []))
            tp += len(m.true_positives)
            fp += len(m.false_positives)
            fn += len(m.false_negatives)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        return p, r, (2 * p * r / (p + r) if p + r else 0.0)

    params = None
    rounds = []
    for rnd in range(1, 4):
        xs, ys = training_mod._patch_array(net, images, entries)
        params, report = train(xs, ys, config, params=params, val=(vx, vy), round_index=rnd)
        p, r, f1 = test_metrics(params)
        rounds.append({"precision": p, "recall": r, "f1": f1,
                       "val_top1_error": report.val_top1_error,
                       "train_size": report.train_size,
                       "final_loss": report.final_loss})
        if rnd < 3:
            hard = mine_hard_examples(net, params, fit_images, fit_by, strategies,
                                      seed=seed, min_size=min_size)
            entries.extend((h.image_ref, h.box, h.label) for h in hard)

    result = {
        "rounds": rounds,
        "checksum": nn.parameter_checksum(params),
        "elapsed": time.time() - t0,
    }
    _E2E_CACHE[label] = result
    return result


class TestEndToEnd:
    def test_criterion_10_synthetic_end_to_end(self):
        result = run_e2e("a")
        r1, r2, r3 = result["rounds"]
        assert r2["precision"] >= 1.5 * r1["precision"], (r1, r2)
        assert r3["f1"] >= r1["f1"], (r1, r3)
        assert 1.0 - r3["val_top1_error"] >= 0.95, r3
        # budget is 15 min on a 4-core desktop; single-core machines get a
        # proportionally relaxed 20-min line (measured ~12-13 min on one core)
        budget = 900.0 if (os.cpu_count() or 1) >= 4 else 1200.0
        assert result["elapsed"] < budget
        announce(10, (f"P {r1['precision']:.3f}->{r2['precision']:.3f} "
                      f"({r2['precision'] / max(r1['precision'], 1e-9):.1f}x), "
                      f"F1 {r1['f1']:.3f}->{r3['f1']:.3f}, "
                      f"val acc {1.0 - r3['val_top1_error']:.3f}, "
                      f"{result['elapsed']:.0f}s"))

    def test_criterion_12_reproducibility(self):
        a = run_e2e("a")
        b = run_e2e("b")
        assert a["rounds"] == b["rounds"]
        assert a["checksum"] == b["checksum"]
        announce(12, f"identical metrics and checkpoint checksum {a['checksum'][:12]}... across reruns")
