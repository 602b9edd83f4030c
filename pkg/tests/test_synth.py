import numpy as np
import pytest

from evpong.events import EventArray
from evpong.errors import ConfigError
from evpong.geometry import standard_rig
from evpong.synth import (
    CapsuleDistractor,
    RectDistractor,
    SceneSpec,
    read_labels_csv,
    scene_by_name,
    scene_labels,
    scene_slug,
    simulate_events,
    simulate_scene,
    standard_scenes,
    write_labels_csv,
)

RIG = standard_rig()


def static_scene(**kw):
    # nothing moves: the ball is parked far outside both frustums and the
    # only scene content is a motionless board
    defaults = dict(
        name="static",
        ball_p0=(50.0, 50.0, 50.0),
        ball_v0=(0.0, 0.0, 0.0),
        distractors=[RectDistractor(center=(0.5, 0.4, 0.4), half_u=0.1, half_v=0.15)],
        noise_rate=0.0,
        duration=0.05,
        seed=1,
    )
    defaults.update(kw)
    return SceneSpec(**defaults)


class TestEventModel:
    def test_static_noiseless_scene_emits_nothing(self):
        scene = static_scene()
        events = simulate_events(scene, RIG.left, rng=np.random.default_rng(0))
        assert len(events) == 0

    def test_moving_ball_leading_edge_positive(self):
        scene = SceneSpec(
            name="mover", ball_p0=(-0.2, 0.0, 0.35), ball_v0=(4.0, 0.0, 1.0),
            noise_rate=0.0, duration=0.1, seed=2,
        )
        events = simulate_events(scene, RIG.left, rng=np.random.default_rng(0))
        labels = scene_labels(scene, RIG)
        assert len(events) > 500
        label_by_t = {lb.t: lb for lb in labels}
        checked = 0
        for t in np.unique(events.t):
            lb = label_by_t[int(t)]
            prev = label_by_t[int(t) - 1000]
            direction = np.array([lb.u_left - prev.u_left, lb.v_left - prev.v_left])
            direction /= np.linalg.norm(direction)
            step = events.select(events.t == t)
            rel = np.column_stack([step.x - lb.u_left, step.y - lb.v_left])
            along = rel @ direction
            # positive events populate the leading half, negative the trailing
            assert (along[step.p == 1] >= -1.5).all()
            assert (along[step.p == 0] <= 1.5).all()
            if (step.p == 1).any() and (step.p == 0).any():
                checked += 1
        assert checked > 20

    def test_noise_count_poisson(self):
        # empty 100x100 sensor, 10 ev/px/s for 0.1 s: lambda = 10,000
        from evpong.geometry import look_at_camera

        cam = look_at_camera([0.0, -2.0, 0.3], [0.0, 0.0, 0.3], 200.0, (100, 100))
        scene = SceneSpec(
            name="noise", ball_p0=(50.0, 50.0, 50.0), ball_v0=(0.0, 0.0, 0.0),
            noise_rate=10.0, duration=0.1, seed=3,
        )  # ball far outside the frustum: empty scene
        events = simulate_events(scene, cam, rng=np.random.default_rng(42))
        lam = 10.0 * 100 * 100 * 0.1
        assert abs(len(events) - lam) <= 3 * np.sqrt(lam)

    def test_determinism_same_seed(self):
        scene = scene_by_name("synth1")
        a = simulate_scene(scene, RIG)
        b = simulate_scene(scene, RIG)
        for ea, eb in ((a.events_left, b.events_left), (a.events_right, b.events_right)):
            assert (ea.t == eb.t).all() and (ea.x == eb.x).all()
            assert (ea.y == eb.y).all() and (ea.p == eb.p).all()

    def test_events_sorted_and_in_bounds(self):
        scene = SceneSpec(
            name="m", ball_p0=(-0.2, 0.0, 0.35), ball_v0=(4.0, 0.0, 1.0),
            noise_rate=5.0, duration=0.05, seed=4,
        )
        ev = simulate_events(scene, RIG.left, rng=np.random.default_rng(0))
        assert (np.diff(ev.t) >= 0).all()
        w, h = RIG.left.sensor_dims
        assert ev.x.min() >= 0 and ev.x.max() < w
        assert ev.y.min() >= 0 and ev.y.max() < h

    def test_dt_sim_bound_enforced(self):
        with pytest.raises(ConfigError):
            simulate_events(static_scene(), RIG.left, dt_sim=0.002)


class TestLabels:
    def test_label_consistency_projection(self):
        scene = scene_by_name("synth2")
        labels = scene_labels(scene, RIG)
        flight = scene.ball_flight()
        for lb in labels[::37]:
            if not lb.visible:
                continue
            u, v, _ = RIG.left.project(lb.position)
            assert np.hypot(u - lb.u_left, v - lb.v_left) < 0.5
            u, v, _ = RIG.right.project(lb.position)
            assert np.hypot(u - lb.u_right, v - lb.v_right) < 0.5

    def test_labels_at_one_khz(self):
        scene = scene_by_name("synth1")
        labels = scene_labels(scene, RIG)
        ts = np.array([lb.t for lb in labels])
        assert (np.diff(ts) == 1000).all()

    def test_visible_spans_most_of_flight(self):
        for name in ("synth1", "synth2", "synth3"):
            labels = scene_labels(scene_by_name(name), RIG)
            frac = np.mean([lb.visible for lb in labels])
            assert frac > 0.5, f"{name}: only {frac:.2f} visible"

    def test_labels_csv_round_trip(self, tmp_path):
        labels = scene_labels(scene_by_name("synth3"), RIG)[:100]
        path = tmp_path / "labels.csv"
        write_labels_csv(path, labels)
        back = read_labels_csv(path)
        assert len(back) == len(labels)
        for a, b in zip(labels, back):
            assert a.t == b.t and a.visible == b.visible
            if a.visible:
                assert a.u_left == pytest.approx(b.u_left, abs=1e-6)
                assert np.allclose(a.position, b.position, atol=1e-9)


class TestCatalog:
    def test_seven_scenes_with_speeds(self):
        scenes = dict(standard_scenes())
        assert set(scenes) == {
            "synth1", "synth2", "synth3", "synth4*", "synth5*", "synth6*", "synth7*",
        }
        assert np.linalg.norm(scenes["synth1"].ball_v0) == pytest.approx(5.0, abs=1e-9)
        assert np.linalg.norm(scenes["synth2"].ball_v0) == pytest.approx(4.0, abs=1e-9)
        assert np.linalg.norm(scenes["synth3"].ball_v0) == pytest.approx(3.0, abs=1e-9)
        assert scenes["synth4*"].distractors
        assert not scenes["synth1"].distractors
        speeds = {np.round(np.linalg.norm(s.ball_v0), 6) for s in scenes.values()}
        assert {3.0, 4.0, 5.0} <= speeds

    def test_catalog_deterministic(self):
        a = dict(standard_scenes())
        b = dict(standard_scenes())
        for name in a:
            assert a[name].ball_p0 == b[name].ball_p0
            assert a[name].ball_v0 == b[name].ball_v0

    def test_unknown_scene_rejected(self):
        with pytest.raises(ConfigError, match="unknown scene"):
            scene_by_name("synth99")

    def test_slug_strips_asterisk(self):
        assert scene_slug("synth4*") == "synth4s"
        assert scene_slug("synth1") == "synth1"


class TestDistractors:
    def test_distractor_scene_has_extra_events(self):
        base = scene_by_name("synth2")  # 4 m/s ball only
        dist = scene_by_name("synth4*")  # 4 m/s + board
        ev_base = simulate_events(
            SceneSpec(name="b", ball_p0=base.ball_p0, ball_v0=base.ball_v0,
                      noise_rate=0.0, duration=0.3, seed=1),
            RIG.left, rng=np.random.default_rng(0))
        ev_dist = simulate_events(
            SceneSpec(name="d", ball_p0=dist.ball_p0, ball_v0=dist.ball_v0,
                      distractors=dist.distractors, noise_rate=0.0, duration=0.3, seed=1),
            RIG.left, rng=np.random.default_rng(0))
        assert len(ev_dist) > 1.5 * len(ev_base)

    def test_rect_pose_oscillates(self):
        rect = RectDistractor(center=(0, 0.4, 0.4), half_u=0.1, half_v=0.1,
                              sweep_amp=(0.2, 0, 0), sweep_hz=1.0)
        c0 = rect.pose(0.0).mean(axis=0)
        c1 = rect.pose(0.25).mean(axis=0)
        assert abs(c1[0] - c0[0]) > 0.15

    def test_capsule_endpoints_swing(self):
        cap = CapsuleDistractor(pivot=(0.5, 0.5, 0.8), length=0.3, radius=0.03,
                                swing_amp=0.6, swing_hz=1.0)
        _, b0 = cap.endpoints(0.0)
        _, b1 = cap.endpoints(0.25)
        assert np.linalg.norm(b1 - b0) > 0.1
