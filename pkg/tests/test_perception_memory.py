import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_temporal
from omtnav.env import Detection, EnvConfig, GenConfig, GridWorld, Pose, generate_layout
from omtnav.memory import ObjectSceneMemory, fuse_all, soft_time_code, temporal_code, temporal_encode
from omtnav.numeric.tensor import Tensor
from omtnav.perception import (
    EmbeddingTable,
    Perception,
    SceneEncoder,
    build_context_grid,
    class_embedding,
    cosine_similarity,
    encode_scene,
    grid_cell,
)

# -- embeddings and cosine ------------------------------------------------------------


def test_embeddings_unit_norm_and_deterministic():
    a = EmbeddingTable(4, 3, 32, seed=5)
    b = EmbeddingTable(4, 3, 32, seed=5)
    assert np.array_equal(a.vectors, b.vectors)
    for c in range(a.num_classes):
        assert abs(np.linalg.norm(class_embedding(c, a)) - 1.0) <= 1e-6
        assert cosine_similarity(a[c], a[c]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(KeyError):
        class_embedding(12, a)


def test_same_category_more_similar():
    same, cross = [], []
    for seed in range(100):
        t = EmbeddingTable(2, 3, 32, seed=seed)
        C = t.cosines
        for i in range(6):
            for j in range(i + 1, 6):
                (same if t.category_of(i) == t.category_of(j) else cross).append(C[i, j])
    assert np.mean(same) > np.mean(cross)


def test_cosine_examples():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 3.0])) == 0.0
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros(3), np.ones(3))


def test_embedding_csv(tmp_path):
    t = EmbeddingTable(1, 2, 4, seed=0)
    t.dump_csv(tmp_path / "e.csv")
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "class,v0,v1,v2,v3"
    assert np.allclose([float(v) for v in rows[1].split(",")[1:]], t[0], atol=0)


# -- context grid -------------------------------------------------------------------


def _det(cls, bearing, dist):
    return Detection(cls, bearing, dist, 1, 0.1)


def test_grid_empty():
    t = EmbeddingTable(1, 3)
    assert not build_context_grid([], 0, t).any()


def test_grid_single_target_detection():
    t = EmbeddingTable(1, 3)
    g = build_context_grid([_det(1, 0.0, 1.0)], 1, t)
    assert np.count_nonzero(g) == 1
    assert g[6, 8] == pytest.approx(1.0, abs=1e-12)  # row floor(1/2.5*16)=6, column floor(45/90*16)=8


def test_grid_two_detections_pairwise_cosines():
    t = EmbeddingTable(2, 3, seed=3)
    dets = [_det(4, -30.0, 0.5), _det(2, 20.0, 2.0)]
    g = build_context_grid(dets, 0, t)
    assert np.count_nonzero(g) == 2
    for d in dets:
        r, c = grid_cell(d, 2.5)
        v0, vd = t[0], t[d.cls]
        assert g[r, c] == pytest.approx(float(v0 @ vd / (np.linalg.norm(v0) * np.linalg.norm(vd))), abs=1e-12)


def test_grid_nearest_wins_contested_cell():
    t = EmbeddingTable(1, 3, seed=1)
    g = build_context_grid([_det(2, 1.0, 1.01), _det(0, 1.5, 1.0)], 0, t)
    assert np.count_nonzero(g) == 1 and g[grid_cell(_det(0, 1.5, 1.0), 2.5)] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-400, 400), st.floats(0, 50))
def test_grid_projection_total(bearing, dist):
    r, c = grid_cell(_det(0, bearing, dist), 2.5)
    assert 0 <= r <= 15 and 0 <= c <= 15


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.tuples(st.integers(0, 5), st.floats(-45, 45), st.floats(0, 3)), max_size=8))
def test_grid_values_in_range(seed, dets):
    t = EmbeddingTable(2, 3, seed=seed % 97)
    g = build_context_grid([_det(*d) for d in dets], seed % 6, t)
    assert g.shape == (16, 16)
    assert (g >= -1).all() and (g <= 1).all()
    assert np.count_nonzero(g) <= len(dets)


# -- scene encoder ----------------------------------------------------------------------


def test_scene_encoder_linear_and_deterministic():
    enc = SceneEncoder((11, 11, 6), 128, seed=2)
    assert not encode_scene(np.zeros((11, 11, 6), np.uint8), enc).any()
    r = np.random.default_rng(0).integers(0, 2, (11, 11, 6)).astype(np.uint8)
    assert np.array_equal(encode_scene(r, enc), encode_scene(r, enc))
    with pytest.raises(ValueError):
        encode_scene(np.zeros((9, 9, 6)), enc)


def test_scene_encoder_separates_poses():
    env = GridWorld(EnvConfig(gen=GenConfig(width=9, height=9, obstacle_density=0.15, n_objects=5)))
    collisions = 0
    for seed in range(1000):
        lay = generate_layout(seed % 100, env.cfg.gen)
        walk = np.argwhere(lay.walkable)
        rng = np.random.default_rng(seed)
        (y0, x0), (y1, x1) = walk[rng.choice(len(walk), 2, replace=False)]
        r0 = env.raster(lay, Pose(int(x0), int(y0), 45 * int(rng.integers(8))))
        r1 = env.raster(lay, Pose(int(x1), int(y1), 45 * int(rng.integers(8))))
        if np.array_equal(r0, r1):
            continue
        enc = SceneEncoder(r0.shape, 128, seed=seed)
        collisions += np.array_equal(enc(r0), enc(r1))
    assert collisions <= 1


# -- ring buffer ------------------------------------------------------------------------


def _frame(i, d=3):
    return np.full(d, float(i)), np.full(256, float(i))


def test_push_fewer_than_capacity():
    m = ObjectSceneMemory(4, 3)
    for i in range(1, 3):
        m.push(*_frame(i))
    s, g, mask = m.read()
    assert m.occupancy == 2
    assert mask.tolist() == [False, False, True, True]
    assert s[2:, 0].tolist() == [1.0, 2.0]


def test_push_evicts_oldest():
    m = ObjectSceneMemory(4, 3)
    for i in range(1, 6):
        m.push(*_frame(i))
    s, g, mask = m.read()
    assert mask.all() and s[:, 0].tolist() == [2.0, 3.0, 4.0, 5.0] and g[:, 0].tolist() == [2.0, 3.0, 4.0, 5.0]


def test_push_2t_keeps_second_half():
    T = 5
    m = ObjectSceneMemory(T, 3)
    for i in range(1, 2 * T + 1):
        m.push(*_frame(i))
    assert m.read()[0][:, 0].tolist() == [float(i) for i in range(T + 1, 2 * T + 1)]


def test_push_dim_mismatch():
    m = ObjectSceneMemory(4, 3)
    with pytest.raises(ValueError):
        m.push(np.zeros(4), np.zeros(256))
    with pytest.raises(ValueError):
        m.push(np.zeros(3), np.zeros(255))


def test_clear():
    m = ObjectSceneMemory(3, 3)
    m.push(*_frame(1))
    m.clear()
    s, g, mask = m.read()
    assert m.occupancy == 0 and not mask.any() and not s.any() and not g.any()


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.lists(st.integers(-1000, 1000), max_size=40))
def test_ring_buffer_matches_list(T, items):
    m = ObjectSceneMemory(T, 2)
    ref = []
    for v in items:
        m.push(np.array([v, -v], float), np.full(256, float(v)))
        ref.append(v)
        keep = ref[-T:]
        s, g, mask = m.read()
        assert mask.tolist() == [False] * (T - len(keep)) + [True] * len(keep)
        assert s[mask, 0].tolist() == keep and g[mask, 0].tolist() == keep
        assert m.occupancy == min(len(ref), T)


# -- temporal code ----------------------------------------------------------------------


def test_temporal_pos0():
    c = temporal_code(4, 10)
    assert c[0].tolist() == [0.0, 1.0] * 5


def test_temporal_pos1_first_pair():
    M = temporal_encode(np.zeros((4, 6)), 4)
    assert M[1, 0] == pytest.approx(0.84147098, abs=1e-8)
    assert M[1, 1] == pytest.approx(0.54030231, abs=1e-8)


@pytest.mark.parametrize("T", [4, 16, 32])
@pytest.mark.parametrize("d", [2, 6, 20, 60])
def test_temporal_matches_direct_evaluation(T, d):
    assert np.max(np.abs(temporal_code(T, d) - np.array(naive_temporal(T, d)))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_temporal_is_additive(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((8, 12)), rng.standard_normal((8, 12))
    assert np.allclose(temporal_encode(A, 8) - A, temporal_encode(B, 8) - B, atol=1e-12)


def test_temporal_odd_dim_rejected():
    with pytest.raises(ValueError):
        temporal_code(4, 7)


def test_model_dim_denominator_switch():
    assert np.array_equal(temporal_code(4, 8, 8), np.array(naive_temporal(8, 8))[:4])


def test_soft_code_starts_at_one():
    c = soft_time_code(4)
    assert c[0] == 1.0 and np.all(np.diff(c) < 0)


# -- fusion -------------------------------------------------------------------------------


def _fusion_params(rng, d_v=5, d_m=6):
    return {
        "fuse.v.W": rng.standard_normal((d_v, d_m)),
        "fuse.v.b": rng.standard_normal(d_m),
        "fuse.o.W": rng.standard_normal((256, d_m)) * 0.1,
        "fuse.o.b": rng.standard_normal(d_m),
        "fuse.m.W": rng.standard_normal((2 * d_m, d_m)),
        "fuse.m.b": rng.standard_normal(d_m),
    }


def test_fuse_matches_direct_formula(rng):
    p = _fusion_params(rng)
    P = {k: Tensor(v) for k, v in p.items()}
    scenes, grids = rng.standard_normal((2, 3, 5)), rng.standard_normal((2, 3, 256))
    mask = np.array([[False, True, True], [True, True, True]])
    out = fuse_all(P, scenes, grids, mask).data.reshape(2, 3, 6)
    relu = lambda z: np.maximum(z, 0)
    for b in range(2):
        for t in range(3):
            fv = relu(scenes[b, t] @ p["fuse.v.W"] + p["fuse.v.b"])
            fo = relu(grids[b, t] @ p["fuse.o.W"] + p["fuse.o.b"])
            want = np.concatenate([fv, fo]) @ p["fuse.m.W"] + p["fuse.m.b"]
            if mask[b, t]:
                assert np.allclose(out[b, t], want, atol=1e-12)
            else:
                assert not out[b, t].any()


def test_fuse_single_frame_mask(rng):
    P = {k: Tensor(v) for k, v in _fusion_params(rng).items()}
    m = ObjectSceneMemory(4, 5)
    m.push(rng.standard_normal(5), rng.standard_normal(256))
    s, g, mask = m.read()
    assert mask.tolist() == [False, False, False, True]
    out = fuse_all(P, s[None], g[None], mask[None]).data
    assert not out[:3].any() and out[3].any()


def test_perception_bundle_shapes():
    env_cfg = EnvConfig()
    p = Perception(env_cfg, 32, 128, seed=0)
    env = GridWorld(env_cfg)
    task = env.generate_task(0, 0)
    _, obs = env.reset(task)
    assert p.scene(obs.raster).shape == (128,)
    assert p.scene(obs.raster) is p.scene(obs.raster)
    assert p.grid(obs.detections, task.target).shape == (16, 16)
    assert p.target(task.target).shape == (32,)
