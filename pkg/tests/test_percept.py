import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import obj
from moma.percept import (MAX_MARKERS, Candidate, MarkerOverflow, Observation, PerceptionNoiseConfig, SceneImage,
                          annotate_markers, candidate_from_detection, detector_query, observe)
from moma.skills import SkillContext, default_registry


def _three(make_world):
    return make_world(objects=[obj("a", "mug", cell=(5, 8)), obj("b", "apple", cell=(4, 10)),
                               obj("c", "book", cell=(6, 12))])


def test_zero_noise_exact_distances(make_world):
    ws = _three(make_world)
    o = observe(ws)
    objs = [d for d in o.detections if d.kind == "object"]
    assert sorted(d.entity_id for d in objs) == ["a", "b", "c"]
    rx, ry = ws.robot_position()
    for d in objs:
        x, y = ws.object_position(ws.objects[d.entity_id])
        assert abs(d.distance - math.hypot(x - rx, y - ry)) < 1e-9


def test_nan_depth_rate_one(make_world):
    o = observe(_three(make_world), PerceptionNoiseConfig(nan_depth_rate=1.0))
    assert all(math.isnan(d.distance) for d in o.detections if d.kind == "object")


def test_behind_wall_hidden(make_world):
    walls = {(r, 9) for r in range(1, 9)}
    ws = make_world(walls=walls, objects=[obj("a", "mug", cell=(5, 11))])
    assert observe(ws).by_id("a") is None


def test_outside_cone_hidden(make_world):
    ws = make_world(objects=[obj("a", "mug", cell=(5, 2))])  # behind the east-facing robot
    assert observe(ws).by_id("a") is None


def test_rate_bounds():
    with pytest.raises(ValueError):
        PerceptionNoiseConfig(false_negative_rate=1.5)


def test_observe_deterministic(make_world):
    ws = _three(make_world)
    noise = PerceptionNoiseConfig(0.3, 0.5, 0.3, 0.3, seed=4)
    assert observe(ws, noise, 3).to_dict() == observe(ws, noise, 3).to_dict()


def test_false_positive_labels_from_vocab(make_world):
    o = observe(_three(make_world), PerceptionNoiseConfig(false_positive_rate=1.0))
    fps = [d for d in o.detections if d.kind == "false_positive"]
    assert len(fps) == 3 and all(d.entity_id.startswith("fp:") for d in fps)


def test_nan_viewpoint(make_world):
    ws = _three(make_world)
    noise = PerceptionNoiseConfig(nan_depth_viewpoints=((1, 5, 5),))
    assert all(math.isnan(d.distance) for d in observe(ws, noise).detections if d.kind == "object")
    ws.robot.cell = (5, 6)
    assert not any(math.isnan(d.distance) for d in observe(ws, noise).detections)


def test_query_buttons_near_panel(make_world):
    ws = make_world(n_floors=3, robot={"floor": 2, "cell": [4, 13], "heading": "E"})
    hits = detector_query(observe(ws), "buttons")
    assert sorted(d.label for d in hits) == ["down button", "up button"]


def test_query_all_objects(make_world):
    ws = make_world(objects=[obj("a", "mug", cell=(5, 8)), obj("b", "box", cell=(3, 9))])
    o = observe(ws)
    assert sorted(d.entity_id for d in detector_query(o, "all objects")) == ["a", "b"]


def test_query_is_instance_blind(make_world):
    ws = make_world(objects=[obj("diet", "soda can", cell=(5, 8), attributes={"brand": "dr pepper", "diet": "true"}),
                             obj("reg", "soda can", cell=(4, 9), attributes={"brand": "dr pepper", "diet": "false"})])
    hits = detector_query(observe(ws), "Diet Dr. Pepper")
    assert sorted(d.entity_id for d in hits) == ["diet", "reg"]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["diet", "red", "blue", "zero", "large", "classic"]), max_size=4),
       st.sampled_from(["soda can", "marker", "mug", "all objects"]))
def test_attribute_words_never_narrow(attrs, category):
    from moma.world import load_world
    from conftest import small_config
    ws = load_world(small_config(objects=[obj("s", "soda can", cell=(5, 8)), obj("m", "marker", cell=(4, 9)),
                                          obj("u", "mug", cell=(6, 10))]))
    o = observe(ws)
    plain = [d.entity_id for d in detector_query(o, category)]
    assert [d.entity_id for d in detector_query(o, " ".join(attrs + [category]))] == plain


def test_query_requires_text(make_world):
    with pytest.raises(ValueError):
        detector_query(observe(make_world()), "  ")


def _obs():
    return Observation(0, 1, (0, 0), "N", [])


def test_markers_sorted_by_distance():
    cands = [Candidate("c3", "can", 2.0), Candidate("c1", "can", 1.2), Candidate("c2", "can", 1.5)]
    markers, _ = annotate_markers(_obs(), cands)
    assert [(m.marker_id, m.candidate.value) for m in markers.markers] == [(1, "c1"), (2, "c2"), (3, "c3")]
    assert markers.markers[0].text == "can - 1.2 m"


def test_nan_annotation_text():
    markers, _ = annotate_markers(_obs(), [Candidate("x", "can")])
    assert "distance: unknown (sensor fault)" in markers.table()


def test_move_base_four_markers(make_world):
    ws = make_world()
    reg = default_registry()
    o = observe(ws)
    cands = reg.get("move_base").candidate_generator(SkillContext(ws, o), 0, ())
    markers, image = annotate_markers(o, cands)
    assert sorted(m.candidate.value for m in markers.markers) == ["backward", "forward", "left", "right"]
    assert image.array().ndim == 3


def test_marker_overflow():
    with pytest.raises(MarkerOverflow, match="marker overflow"):
        annotate_markers(_obs(), [Candidate(i, "x", float(i)) for i in range(60)])
    annotate_markers(_obs(), [Candidate(i, "x", float(i)) for i in range(MAX_MARKERS)])


def test_marker_determinism_and_roundtrip(make_world):
    ws = _three(make_world)
    o = observe(ws)
    cands = [candidate_from_detection(d) for d in o.detections]
    m1, img1 = annotate_markers(o, cands)
    m2, img2 = annotate_markers(o, list(reversed(cands)))
    assert m1.table() == m2.table() and img1.digest == img2.digest
    for m in m1.markers:
        assert m1.resolve(m.marker_id) is m.candidate
        assert m1.id_for(m.candidate.value) == m.marker_id


def test_scene_render_regenerates(make_world):
    ws = _three(make_world)
    a, b = SceneImage(observe(ws)), SceneImage(observe(ws))
    assert a.png() == b.png()
    assert a.png()[:8] == b"\x89PNG\r\n\x1a\n"
