import numpy as np
import pytest

from gnncca.errors import ArgumentError, ConfigError
from gnncca.featurize import CameraCalibration, DescriptorStore
from gnncca.graph import (
    Clustering,
    Detection,
    FrameGraph,
    bridges_of,
    components_of,
    degree_counts,
)
from gnncca.inference import (
    ProbGraph,
    associate,
    binarize,
    cluster_prob_graph,
    prune,
    split,
)
from gnncca.mpn import init_model_params
from gnncca.numeric import TrainSchedule


def det(camera, det_id, frame=0, identity=None, bbox=None):
    return Detection(
        frame=frame,
        camera=camera,
        det_id=det_id,
        bbox=bbox or (3.0 * det_id, 1.0, 4.0, 8.0),
        descriptor_index=det_id,
        identity=identity,
    )


def graph_with(cameras, edges):
    dets = [det(c, i) for i, c in enumerate(cameras)]
    return FrameGraph(dets, sorted(tuple(sorted(e)) for e in edges))


def prob_graph(cameras, edges, probs, n_cameras):
    graph = graph_with(cameras, edges)
    order = {e: k for k, e in enumerate(sorted(tuple(sorted(x)) for x in edges))}
    arr = np.zeros(len(edges))
    for e, p in probs.items():
        arr[order[tuple(sorted(e))]] = p
    return ProbGraph(graph, arr, arr >= 0.5, n_cameras)


def two_cliques_bridge_probs():
    """Fig-style pruning input: two 4-cliques over 4 cameras joined by one
    bridge; both bridge endpoints have flow 4 > M-1 = 3."""
    cameras = [0, 1, 2, 3, 0, 1, 2, 3]
    edges = []
    for group in ((0, 1, 2, 3), (4, 5, 6, 7)):
        for a in range(4):
            for b in range(a + 1, 4):
                edges.append((group[a], group[b]))
    edges.append((3, 4))
    probs = {e: 0.9 for e in edges}
    probs[(3, 4)] = 0.8
    return prob_graph(cameras, edges, probs, 4)


def chain_of_triangles_probs(bridge_probs):
    """Fig-style splitting input: triangle - bridge - middle pair - bridge -
    triangle, a single 8-node component whose only bridges are (1, 3),
    (3, 4), (4, 6)."""
    cameras = [0, 1, 2, 3, 0, 1, 2, 3]
    edges = [
        (0, 1), (0, 2), (1, 2),          # triangle 0-1-2
        (1, 3),                          # bridge
        (3, 4),                          # bridge
        (4, 6),                          # bridge
        (5, 6), (5, 7), (6, 7),          # triangle 5-6-7
    ]
    probs = {e: 0.9 for e in edges}
    probs.update(bridge_probs)
    return prob_graph(cameras, edges, probs, 4)


class TestBinarize:
    def test_below_threshold_inactive(self):
        assert binarize(np.array([0.49]))[0] == False  # noqa: E712

    def test_exactly_half_active(self):
        assert binarize(np.array([0.5]))[0] == True  # noqa: E712

    def test_above_threshold_active(self):
        assert binarize(np.array([0.51]))[0] == True  # noqa: E712

    def test_range_check(self):
        with pytest.raises(ArgumentError):
            binarize(np.array([1.2]))


class TestProbGraph:
    def test_length_mismatch(self):
        graph = graph_with([0, 1], [(0, 1)])
        with pytest.raises(ArgumentError):
            ProbGraph(graph, np.array([0.5, 0.5]), np.array([True]), 2)

    def test_camera_count_floor(self):
        graph = graph_with([0, 1], [(0, 1)])
        with pytest.raises(ArgumentError):
            ProbGraph(graph, np.array([0.5]), np.array([True]), 1)


class TestPrune:
    def test_removes_the_single_bridge(self):
        pg = two_cliques_bridge_probs()
        out = prune(pg)
        assert out.removal_log == [(3, 4)]
        flows = degree_counts(8, out.active_edges())
        assert max(flows) <= 3
        labels = components_of(8, out.active_edges())
        assert labels == [0, 0, 0, 0, 1, 1, 1, 1]

    def test_noop_when_satisfied(self):
        pg = prob_graph([0, 1, 2], [(0, 1), (1, 2), (0, 2)], {}, 4)
        pg.probs[:] = 0.9
        pg.active[:] = True
        out = prune(pg)
        assert out.removal_log == []
        assert np.array_equal(out.active, pg.active)

    def test_star_removes_two_lowest(self):
        # center sees 5 leaves with M=4: all edges are bridges, the two
        # lowest-probability ones go
        cameras = [0, 1, 1, 2, 2, 3]
        edges = [(0, k) for k in range(1, 6)]
        probs = {(0, 1): 0.9, (0, 2): 0.55, (0, 3): 0.8, (0, 4): 0.52, (0, 5): 0.7}
        pg = prob_graph(cameras, edges, probs, 4)
        out = prune(pg)
        assert out.removal_log == [(0, 4), (0, 2)]
        assert degree_counts(6, out.active_edges())[0] == 3

    def test_tie_breaks_on_canonical_order(self):
        cameras = [0, 1, 1, 2, 2]
        edges = [(0, k) for k in range(1, 5)]
        probs = {e: 0.6 for e in edges}
        pg = prob_graph(cameras, edges, probs, 4)
        out = prune(pg)
        assert out.removal_log == [(0, 1)]

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pg = _random_prob_graph(rng)
            once = prune(pg)
            twice = prune(once)
            assert np.array_equal(once.active, twice.active)


class TestSplit:
    def test_removes_minimum_probability_bridge(self):
        pg = chain_of_triangles_probs({(1, 3): 0.8, (3, 4): 0.6, (4, 6): 0.9})
        out = split(pg)
        assert out.removal_log == [(3, 4)]
        labels = components_of(8, out.active_edges())
        sizes = [labels.count(c) for c in sorted(set(labels))]
        assert sizes == [4, 4]

    def test_noop_when_small(self):
        pg = prob_graph([0, 1, 2, 3], [(0, 1), (1, 2), (2, 3)], {}, 4)
        pg.probs[:] = 0.9
        pg.active[:] = True
        out = split(pg)
        assert out.removal_log == []

    def test_cycle_first_removal_makes_path(self):
        # 6-cycle with M=3: no bridges, so the global minimum edge goes
        # first, after which every surviving edge is a bridge
        cameras = [0, 1, 0, 1, 0, 1]
        edges = [(i, (i + 1) % 6) for i in range(6)]
        probs = {e: 0.5 + 0.05 * k for k, e in enumerate(edges)}
        pg = prob_graph(cameras, edges, probs, 3)
        first_removed = min(
            (tuple(sorted(e)) for e in edges),
            key=lambda e: probs.get(e, probs.get((e[1], e[0]))),
        )
        out = split(pg)
        assert out.removal_log[0] == first_removed
        after_first = [
            e for e in pg.graph.edges if e != first_removed
        ]
        assert bridges_of(6, after_first) == set(after_first)
        labels = components_of(6, out.active_edges())
        assert max(labels.count(c) for c in set(labels)) <= 3

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            pg = _random_prob_graph(rng)
            once = split(pg)
            twice = split(once)
            assert np.array_equal(once.active, twice.active)


def _random_prob_graph(rng):
    n = int(rng.integers(2, 14))
    m = int(rng.integers(2, 7))
    cameras = [int(rng.integers(0, m)) for _ in range(n)]
    dets = [det(cameras[i], i) for i in range(n)]
    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if cameras[i] != cameras[j]
    ]
    probs = rng.uniform(0.0, 1.0, size=len(edges))
    graph = FrameGraph(dets, edges)
    return ProbGraph(graph, probs, probs >= 0.5, m)


class TestConstraints:
    def test_flow_and_size_bounds_on_random_graphs(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            pg = _random_prob_graph(rng)
            clustering, final = cluster_prob_graph(pg)
            m = pg.n_cameras
            flows = degree_counts(pg.graph.n_nodes, final.active_edges())
            assert max(flows, default=0) <= m - 1
            sizes = [
                clustering.assignment.count(c)
                for c in range(clustering.n_clusters)
            ]
            assert max(sizes, default=0) <= m

    def test_stages_only_remove_edges(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            pg = _random_prob_graph(rng)
            pruned = prune(pg)
            assert np.all(pruned.active <= pg.active)
            final = split(pruned)
            assert np.all(final.active <= pruned.active)
            assert len(final.removal_log) <= len(pg.graph.edges)


class TestAssociate:
    def _scene(self):
        from gnncca import synthgen

        spec = synthgen.SceneSpec(
            cameras=4,
            identities=3,
            frames=30,
            descriptor_dim=16,
            appearance_noise_sigma=0.0,
            camera_bias_sigma=0.0,
            miss_prob=0.0,
            walk_step_sigma=0.08,
            seed=5,
        )
        scene = synthgen.generate_scene(spec)
        by_frame = {}
        for d in scene.detections:
            by_frame.setdefault(d.frame, []).append(d)
        from gnncca.graph import build_frame_graph

        graphs = [build_frame_graph(by_frame[f]) for f in sorted(by_frame)]
        return scene, graphs

    def test_single_detection_is_singleton(self):
        store = DescriptorStore(np.random.default_rng(0).standard_normal((1, 8)))
        calibs = {c: CameraCalibration(c, np.eye(3)) for c in (0, 1)}
        params = init_model_params(8, seed=0)
        graph = FrameGraph([det(0, 0)], [])
        assert associate(graph, params, store, calibs).assignment == [0]

    def test_empty_frame_is_empty_clustering(self):
        store = DescriptorStore(np.zeros((1, 8)))
        calibs = {c: CameraCalibration(c, np.eye(3)) for c in (0, 1)}
        params = init_model_params(8, seed=0)
        assert associate(FrameGraph([], []), params, store, calibs).assignment == []

    def test_needs_two_cameras(self):
        store = DescriptorStore(np.zeros((1, 8)))
        params = init_model_params(8, seed=0)
        with pytest.raises(ConfigError):
            associate(
                FrameGraph([det(0, 0)], []),
                params,
                store,
                {0: CameraCalibration(0, np.eye(3))},
            )

    def test_noiseless_scene_recovers_identities(self):
        # a trained model on a zero-noise scene must reproduce the
        # generator's assignment exactly
        from gnncca import metrics
        from gnncca.mpn import prepare_training_set, train

        scene, graphs = self._scene()
        prep = prepare_training_set(graphs[:20], scene.store, scene.calibs)
        schedule = TrainSchedule(
            warmup_epochs=2, total_epochs=12, batch_size=8, momentum=0.9
        )
        params, _ = train(
            prep, 1, schedule, steps=2, node_aggregation="mean", positive_weight=3.0
        )
        truth, pred = [], []
        for g in graphs[20:]:
            truth.append(Clustering.from_labels([d.identity for d in g.detections]))
            pred.append(associate(g, params, scene.store, scene.calibs))
        report = metrics.evaluate_sequence(truth, pred)
        assert report.mean["v_measure"] == pytest.approx(1.0)
