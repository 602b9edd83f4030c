import numpy as np
import pytest

from evpong.detect import (
    BallDetector,
    DetectConfig,
    cluster,
    compute_features,
    dbscan_labels,
    denoise,
    detect_step,
    geometric_verify,
    localize,
    min_enclosing_circle,
    polarity_filter,
)
from evpong.errors import DataError
from evpong.events import Event, EventArray, EventBatch, Roi

from oracles import brute_dbscan, brute_min_enclosing_circle, reference_opening

DIMS = (1280, 720)


def batch_from(coords, polarities=None, t0=0, t1=2000, dims=DIMS):
    if polarities is None:
        polarities = [1] * len(coords)
    events = [Event(int(x), int(y), t0 + i, int(p))
              for i, ((x, y), p) in enumerate(zip(coords, polarities))]
    return EventBatch(EventArray.from_events(events), t0, t1, dims)


def events_from(coords, polarities=None):
    return batch_from(coords, polarities).events


class TestDenoise:
    def test_isolated_event_removed(self):
        coords = [(50, 50)]
        out = denoise(batch_from(coords), kernel_radius=1)
        assert len(out) == 0

    def test_solid_block_matches_reference_opening(self):
        coords = [(x, y) for x in range(20, 29) for y in range(40, 49)]
        batch = batch_from(coords)
        out = denoise(batch, kernel_radius=1)
        occ = np.zeros((9, 9), dtype=bool)
        occ[:, :] = True
        opened = reference_opening(occ, 1)
        expected = {(20 + x, 40 + y) for y, x in zip(*np.nonzero(opened))}
        got = {(int(e.x), int(e.y)) for e in out.events}
        assert got == expected
        # the block survives as a structure: only the four corners are shaved
        assert len(out) == len(coords) - 4

    def test_empty_batch_passthrough(self):
        batch = batch_from([])
        out = denoise(batch, kernel_radius=1)
        assert len(out) == 0

    def test_random_fields_match_reference(self, rng):
        for _ in range(20):
            w = int(rng.integers(8, 40))
            h = int(rng.integers(8, 40))
            occ = rng.random((h, w)) < 0.45
            coords = [(int(x) + 100, int(y) + 100) for y, x in zip(*np.nonzero(occ))]
            if not coords:
                continue
            out = denoise(batch_from(coords), kernel_radius=1)
            # reference works on the bounding box of the occupied pixels
            ys, xs = np.nonzero(occ)
            x0, y0 = xs.min(), ys.min()
            sub = occ[y0 : ys.max() + 1, x0 : xs.max() + 1]
            opened = reference_opening(sub, 1)
            expected = {(int(x) + 100 + x0, int(y) + 100 + y0)
                        for y, x in zip(*np.nonzero(opened))}
            got = {(int(e.x), int(e.y)) for e in out.events}
            assert got == expected

    def test_output_subset_of_input(self, rng):
        coords = [(int(rng.integers(0, 60)), int(rng.integers(0, 60))) for _ in range(200)]
        batch = batch_from(coords)
        out = denoise(batch, kernel_radius=2)
        in_set = {(e.x, e.y, e.t) for e in batch.events}
        assert all((e.x, e.y, e.t) in in_set for e in out.events)

    def test_polarity_and_timestamps_preserved(self):
        coords = [(x, y) for x in range(10, 19) for y in range(10, 19)]
        pol = [(x + y) % 2 for x, y in coords]
        batch = batch_from(coords, pol)
        out = denoise(batch, kernel_radius=1)
        orig = {(e.x, e.y): (e.t, e.p) for e in batch.events}
        assert all(orig[(e.x, e.y)] == (e.t, e.p) for e in out.events)


class TestDbscan:
    def test_blob_is_one_cluster(self, rng):
        pts = rng.normal(0, 1.0, size=(10, 2)) + 50
        labels = dbscan_labels(pts[:, 0], pts[:, 1], eps=3.0, min_samples=4)
        assert (labels >= 0).all()
        assert len(set(labels.tolist())) == 1

    def test_single_event_is_outlier(self):
        labels = dbscan_labels(np.array([5.0]), np.array([5.0]), eps=3.0, min_samples=4)
        assert labels.tolist() == [-1]

    def test_two_far_blobs_two_clusters(self, rng):
        a = rng.normal(0, 1.0, size=(10, 2)) + 20
        b = rng.normal(0, 1.0, size=(10, 2)) + np.array([70, 20])
        pts = np.vstack([a, b])
        labels = dbscan_labels(pts[:, 0], pts[:, 1], eps=3.0, min_samples=4)
        assert set(labels.tolist()) == {0, 1}

    def test_matches_brute_force_on_random_batches(self, rng):
        for trial in range(200):
            n = int(rng.integers(1, 200))
            spread = rng.choice([10, 30, 120])
            pts = np.column_stack([
                rng.integers(0, spread, n), rng.integers(0, spread, n),
            ]).astype(float)
            eps = float(rng.uniform(1.0, 5.0))
            min_samples = int(rng.integers(2, 8))
            fast = dbscan_labels(pts[:, 0], pts[:, 1], eps, min_samples)
            ref = brute_dbscan(pts, eps, min_samples)
            assert (fast == ref).all(), f"trial {trial}: partition mismatch"

    def test_cardinality_filter(self, rng):
        pts = [(30 + dx, 30 + dy) for dx in range(4) for dy in range(3)]  # 12 events
        cfg = DetectConfig(cluster_card_min=20, cluster_card_max=4000, min_samples=4)
        assert cluster(batch_from(pts), cfg) == []
        cfg_small = DetectConfig(cluster_card_min=5, cluster_card_max=100, min_samples=4)
        got = cluster(batch_from(pts), cfg_small)
        assert len(got) == 1 and len(got[0]) == 12


class TestPolarityFilter:
    def test_keeps_positive_and_centroid(self):
        coords = [(0, 0), (2, 0), (0, 2), (2, 2), (5, 5)]
        pol = [1, 1, 1, 1, 0]
        out = polarity_filter(events_from(coords, pol), centroid_dist_max=10.0)
        assert sorted((e.x, e.y) for e in out) == [(0, 0), (0, 2), (2, 0), (2, 2)]
        assert float(out.x.mean()) == pytest.approx(1.0)
        assert float(out.y.mean()) == pytest.approx(1.0)

    def test_one_pass_outlier_removal_pathological(self):
        # centroid (13.67, 0); all three positives are farther than 10 px
        coords = [(0, 0), (1, 0), (40, 0)]
        out = polarity_filter(events_from(coords), centroid_dist_max=10.0)
        assert len(out) == 0

    def test_all_negative_cluster_empty(self):
        coords = [(0, 0), (1, 0), (0, 1)]
        out = polarity_filter(events_from(coords, [0, 0, 0]), centroid_dist_max=10.0)
        assert len(out) == 0

    def test_purity(self, rng):
        coords = [(int(rng.integers(0, 30)), int(rng.integers(0, 30))) for _ in range(100)]
        pol = [int(rng.integers(0, 2)) for _ in coords]
        out = polarity_filter(events_from(coords, pol), centroid_dist_max=50.0)
        assert (out.p == 1).all()


class TestGeometricVerify:
    def test_unit_square_circularity(self):
        feats = compute_features(events_from([(10, 10)]))
        assert feats.hull_area == pytest.approx(1.0)
        assert feats.hull_perimeter == pytest.approx(4.0)
        assert feats.circularity == pytest.approx(np.pi / 4.0)
        assert feats.solidity == pytest.approx(1.0)

    def test_rasterized_disk_near_one(self):
        r = 20
        coords = [(x, y) for x in range(-25, 26) for y in range(-25, 26)
                  if x * x + y * y <= r * r]
        coords = [(x + 40, y + 40) for x, y in coords]
        feats = compute_features(events_from(coords))
        assert feats.circularity > 0.95
        assert feats.circularity <= 1.0 + 1e-6
        assert feats.solidity <= 1.0 + 1e-6

    def test_ten_by_one_rectangle_rejected(self):
        coords = [(x, 5) for x in range(10)]
        feats = compute_features(events_from(coords))
        assert feats.hull_area == pytest.approx(10.0)
        assert feats.hull_perimeter == pytest.approx(22.0)
        assert feats.circularity == pytest.approx(4 * np.pi * 10 / 22**2)
        rejected, reason = geometric_verify(events_from(coords), DetectConfig())
        assert rejected is None
        assert "circularity" in reason

    def test_isoperimetric_bound_random(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 60))
            coords = [(int(rng.integers(0, 40)), int(rng.integers(0, 40)))
                      for _ in range(n)]
            feats = compute_features(events_from(coords))
            assert feats.circularity <= 1.0 + 1e-6
            assert feats.solidity <= 1.0 + 1e-6

    def test_empty_cluster_degenerate(self):
        assert compute_features(EventArray()) is None


class TestMinEnclosingCircle:
    def test_two_points(self):
        cx, cy, r = min_enclosing_circle(np.array([[0.0, 0.0], [4.0, 0.0]]))
        assert (cx, cy) == pytest.approx((2.0, 0.0))
        assert r == pytest.approx(2.0)

    def test_points_on_circle(self, rng):
        angles = rng.uniform(0, 2 * np.pi, 40)
        pts = np.column_stack([10 + 5 * np.cos(angles), 10 + 5 * np.sin(angles)])
        cx, cy, r = min_enclosing_circle(pts)
        assert (cx, cy, r) == pytest.approx((10.0, 10.0, 5.0), abs=1e-6)

    def test_matches_brute_force_with_containment(self, rng):
        for trial in range(200):
            n = int(rng.integers(1, 50))
            pts = rng.uniform(0, 60, size=(n, 2))
            if trial % 3 == 0:
                pts = np.round(pts)  # integer pixels with duplicates
            cx, cy, r = min_enclosing_circle(pts)
            bx, by, br = brute_min_enclosing_circle(pts)
            assert r == pytest.approx(br, abs=1e-9), f"trial {trial}"
            dist = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
            assert (dist <= r + 1e-9).all()

    def test_empty_raises(self):
        with pytest.raises(DataError):
            min_enclosing_circle(np.empty((0, 2)))


class TestLocalize:
    def disk_cluster(self, cx, cy, r):
        coords = [(x, y) for x in range(cx - r - 2, cx + r + 3)
                  for y in range(cy - r - 2, cy + r + 3)
                  if (x - cx) ** 2 + (y - cy) ** 2 <= r * r]
        return events_from(coords)

    def test_recovers_disk(self):
        ev = self.disk_cluster(100, 80, 10)
        det = localize(ev, DetectConfig(), t_us=2000)
        assert det is not None
        assert (det.u, det.v) == pytest.approx((100, 80), abs=0.8)
        assert det.r == pytest.approx(10, abs=1.2)
        assert det.t == 2000

    def test_radius_bounds(self):
        ev = self.disk_cluster(100, 80, 10)
        assert localize(ev, DetectConfig(radius_max=9.0), t_us=0) is None
        assert localize(ev, DetectConfig(radius_min=11.0, radius_max=40.0), t_us=0) is None


class TestDetectStep:
    def _ball_batch(self, cx, cy, t0=0, t1=2000):
        r = 8
        coords = [(x, y) for x in range(cx - r, cx + r + 1)
                  for y in range(cy - r, cy + r + 1)
                  if (x - cx) ** 2 + (y - cy) ** 2 <= r * r]
        return batch_from(coords, t0=t0, t1=t1)

    def test_detection_recenters_roi(self):
        cfg = DetectConfig()
        roi = Roi.full_sensor(DIMS)
        det, roi2 = detect_step(roi, self._ball_batch(640, 360), cfg)
        assert det is not None
        assert (det.u, det.v) == pytest.approx((640, 360), abs=1.0)
        assert roi2.x_min == int(np.floor(det.u)) - cfg.roi_expand
        assert roi2.x_max == int(np.ceil(det.u)) + cfg.roi_expand
        assert roi2.miss_count == 0

    def test_three_misses_resets_roi(self):
        cfg = DetectConfig()
        roi = Roi(100, 260, 100, 260, miss_count=0)
        empty = batch_from([])
        det, roi = detect_step(roi, empty, cfg)
        assert det is None and roi.miss_count == 1
        det, roi = detect_step(roi, empty, cfg)
        assert roi.miss_count == 2
        det, roi = detect_step(roi, empty, cfg)
        assert roi == Roi.full_sensor(DIMS)

    def test_detection_resets_miss_count(self):
        cfg = DetectConfig()
        roi = Roi.full_sensor(DIMS)
        roi = Roi(roi.x_min, roi.x_max, roi.y_min, roi.y_max, miss_count=2)
        det, roi2 = detect_step(roi, self._ball_batch(300, 300), cfg)
        assert det is not None and roi2.miss_count == 0

    def test_pipeline_monotone_event_subsets(self):
        batch = self._ball_batch(200, 200)
        cfg = DetectConfig()
        from evpong.events import clip_to_roi

        clipped = clip_to_roi(batch, Roi.full_sensor(DIMS))
        cleaned = denoise(clipped, cfg.kernel_radius)
        assert len(cleaned) <= len(clipped) <= len(batch)
        clusters = cluster(cleaned, cfg)
        total = sum(len(c) for c in clusters)
        assert total <= len(cleaned)
        for cl in clusters:
            refined = polarity_filter(cl, cfg.centroid_dist_max)
            assert len(refined) <= len(cl)


class TestBallDetectorEstimator:
    def test_get_params_round_trip(self):
        det = BallDetector(eps=4.0)
        params = det.get_params()
        assert params["eps"] == 4.0
        clone = BallDetector(**params)
        assert clone.get_params() == params

    def test_transform_fresh_state_per_call(self):
        det = BallDetector()
        r = 8
        coords = [(x, y) for x in range(92, 109) for y in range(92, 109)
                  if (x - 100) ** 2 + (y - 100) ** 2 <= r * r]
        batches = [batch_from(coords, t0=0, t1=2000), batch_from([], t0=2000, t1=4000)]
        out1 = det.transform(batches)
        out2 = det.transform(batches)
        assert out1[0] is not None and out2[0] is not None
        assert out1[1] is None and out2[1] is None
        assert (out1[0].u, out1[0].v) == (out2[0].u, out2[0].v)
