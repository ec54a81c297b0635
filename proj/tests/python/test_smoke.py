# SPDX-License-Identifier: Apache-2.0
import itertools

import numpy as np
import pytest

import langfield as lf


@pytest.fixture(scope="module")
def scene():
    return lf.Scene.synthetic(seed=2, n_primitives=900, k=6, c=12, regions=4)


def test_scene_shape(scene, tmp_path):
    assert (scene.k, scene.c, scene.n_primitives) == (6, 12, 900)
    assert scene.terms == ["chair", "table", "sofa", "lamp"]
    assert scene.validate() == []
    assert np.allclose(np.linalg.norm(scene.atoms, axis=1), 1.0, atol=1e-6)
    assert np.allclose(scene.weights.sum(axis=1), 1.0, atol=1e-5)
    path = tmp_path / "s.lfs"
    scene.save(path)
    back = lf.Scene.load(path)
    assert np.array_equal(back.weights, scene.weights)


def test_camera_json_round_trip():
    cam = lf.Camera.synthetic(40, 30, azimuth=15.0)
    assert lf.Camera.from_json(cam.to_json()) == cam
    with pytest.raises(ValueError):
        lf.Camera.from_json('{"fx": 1}')


def test_render_and_factorization(scene):
    cam = lf.Camera.synthetic(48, 32)
    out = lf.render(scene, cam, threads=1)
    assert out["rgb"].shape == (32, 48, 3)
    assert out["alpha"].shape == (32, 48)
    assert out["weight_maps"].shape == (32, 48, 6)
    assert out["rgb"].dtype == np.float32
    # weight maps carry the compositing mass
    assert np.abs(out["weight_maps"].sum(axis=2) - out["alpha"]).max() < 1e-5

    feats = lf.assemble_features(out["weight_maps"], scene)
    direct = lf.render_features_direct(scene, cam, threads=1)
    assert feats.shape == (32, 48, 12)
    assert np.abs(feats - direct).max() < 1e-5
    # same product in numpy
    assert np.allclose(feats, out["weight_maps"] @ scene.atoms, atol=1e-6)

    d = lf.render(scene, cam, double=True)
    assert d["alpha"].dtype == np.float64
    assert np.abs(lf.assemble_features(d["weight_maps"], scene) - lf.render_features_direct(scene, cam, double=True)).max() < 1e-12

    again = lf.render(scene, cam, threads=4)
    assert np.array_equal(again["weight_maps"], out["weight_maps"])


def test_query_and_metrics(scene):
    cam = lf.Camera.synthetic(64, 64)
    out = lf.render(scene, cam)
    feats = lf.assemble_features(out["weight_maps"], scene)
    labels = lf.open_vocab_segment(feats, scene, out["alpha"])
    assert labels.shape == (64, 64)
    assert set(np.unique(labels)) <= {-1, 0, 1, 2, 3}
    heat = lf.similarity_heatmap(feats, scene.embedding("sofa"), out["alpha"])
    assert heat.max() <= 1.0 and heat.max() > 0.99
    # the segmentation is the argmax over per-term heatmaps
    stack = np.stack([lf.similarity_heatmap(feats, scene.embedding(t), out["alpha"]) for t in scene.terms])
    valid = labels >= 0
    assert np.array_equal(stack.argmax(axis=0)[valid], labels[valid])

    report = lf.miou_accuracy(labels, labels, scene.terms)
    assert report["miou"] == 1.0 and report["accuracy"] == 1.0
    with pytest.raises(ValueError):
        scene.embedding("zebra")


def test_hungarian_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, m = (int(v) for v in rng.integers(1, 6, size=2))
        cost = rng.integers(-9, 10, size=(n, m)).astype(float)
        pairs, total = lf.hungarian_match(cost)
        if n <= m:
            best = min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
        else:
            best = min(sum(cost[p[j], j] for j in range(m)) for p in itertools.permutations(range(n), m))
        assert total == best
        assert len(pairs) == min(n, m)


def test_gradcheck_and_control():
    ok, rows = lf.gradcheck(instances=5)
    assert ok and len(rows) == 10
    bad, _ = lf.gradcheck(instances=2, sign_flip=True, suites=["focal"])
    assert not bad
    with pytest.raises(ValueError):
        lf.gradcheck(suites=["nope"])


def test_small_toy_run():
    r = lf.run_toy(seed=0, primitives=64, view=16, steps=30)
    assert 0.0 <= r["segment_accuracy"] <= 1.0
    assert r["factorization_deviation"] < 1e-5
    assert r["field"].n_primitives == 64
