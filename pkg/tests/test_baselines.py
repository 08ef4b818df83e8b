import numpy as np
import pytest

from gnncca.baselines import (
    SWEEP_THRESHOLDS,
    BaselineConfig,
    _normalized,
    sweep_thresholds,
    threshold_assoc,
    top1_assoc,
)
from gnncca.errors import ArgumentError, ConfigError, DataError
from gnncca.featurize import CameraCalibration, DescriptorStore
from gnncca.graph import Detection, build_frame_graph


def det(camera, det_id, frame=0, identity=None, x=0.0):
    return Detection(
        frame=frame,
        camera=camera,
        det_id=det_id,
        bbox=(x, 1.0, 4.0, 8.0),
        descriptor_index=det_id,
        identity=identity,
    )


def identity_calibs(cameras):
    return {c: CameraCalibration(c, np.eye(3)) for c in cameras}


def partition_refines(fine, coarse):
    """Every fine cluster sits inside one coarse cluster."""
    blocks = {}
    for node, cid in enumerate(fine.assignment):
        blocks.setdefault(cid, set()).add(coarse.assignment[node])
    return all(len(owners) == 1 for owners in blocks.values())


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            BaselineConfig("nearest")

    def test_threshold_required(self):
        with pytest.raises(ConfigError):
            BaselineConfig("l2_th")
        with pytest.raises(ConfigError):
            BaselineConfig("geo")
        with pytest.raises(ConfigError):
            BaselineConfig("geo_app", appearance_threshold=0.5)

    def test_threshold_range(self):
        with pytest.raises(ConfigError):
            BaselineConfig("l2_th", appearance_threshold=1.5)


class TestThresholdAssoc:
    def _frames(self, seed=0, n_frames=3):
        rng = np.random.default_rng(seed)
        frames = []
        rows = []
        for f in range(n_frames):
            dets = []
            for i, cam in enumerate([0, 0, 1, 1, 2]):
                dets.append(
                    Detection(f, cam, i, (5.0 * i, 1.0, 4.0, 8.0), len(rows), i % 2)
                )
                rows.append(rng.standard_normal(8))
            frames.append(build_frame_graph(dets))
        return frames, DescriptorStore(np.array(rows))

    def test_zero_threshold_all_singletons(self):
        frames, store = self._frames()
        cfg = BaselineConfig("l2_th", appearance_threshold=0.0)
        for clustering, graph in zip(
            threshold_assoc(frames, store, {}, cfg), frames
        ):
            assert clustering.n_clusters == graph.n_nodes

    def test_normalized_max_pair_sits_at_one(self):
        # strict below: everything except the set-wide max pair connects
        # at threshold 1.0
        frames, store = self._frames(seed=1, n_frames=2)
        cfg = BaselineConfig("l2_th", appearance_threshold=1.0)
        from gnncca.baselines import _appearance_distances

        dists = [_appearance_distances(g, store, "l2") for g in frames]
        top = max(d.max() for d in dists)
        clusterings = threshold_assoc(frames, store, {}, cfg)
        for graph, clustering, d in zip(frames, clusterings, dists):
            for k, (i, j) in enumerate(graph.edges):
                linked = clustering.assignment[i] == clustering.assignment[j]
                if d[k] < top:
                    assert linked
        # the argmax pair itself stays unconnected at exactly 1.0
        flat = np.concatenate(dists)
        assert flat.max() / top == 1.0

    def test_identical_descriptors_one_cluster_per_frame(self):
        frames, _ = self._frames()
        store = DescriptorStore(np.tile(np.ones(8), (15, 1)))
        cfg = BaselineConfig("l2_th", appearance_threshold=0.4)
        for clustering in threshold_assoc(frames, store, {}, cfg):
            assert clustering.n_clusters == 1

    def test_monotone_refinement_in_threshold(self):
        frames, store = self._frames(seed=2)
        previous = None
        for th in (0.2, 0.5, 0.8):
            cfg = BaselineConfig("l2_th", appearance_threshold=th)
            clusterings = threshold_assoc(frames, store, {}, cfg)
            if previous is not None:
                for fine, coarse in zip(previous, clusterings):
                    assert partition_refines(fine, coarse)
            previous = clusterings

    def test_geo_uses_ground_distance(self):
        dets = [det(0, 0, x=0.0), det(1, 1, x=0.0), det(2, 2, x=100.0)]
        frames = [build_frame_graph(dets)]
        store = DescriptorStore(np.zeros((3, 4)))
        cfg = BaselineConfig("geo", spatial_threshold=10.0)
        clustering = threshold_assoc(
            frames, store, identity_calibs([0, 1, 2]), cfg
        )[0]
        assert clustering.assignment[0] == clustering.assignment[1]
        assert clustering.assignment[0] != clustering.assignment[2]

    def test_geo_requires_calibs(self):
        frames, store = self._frames()
        cfg = BaselineConfig("geo", spatial_threshold=1.0)
        with pytest.raises(ConfigError):
            threshold_assoc(frames, store, {}, cfg)

    def test_geo_app_requires_both_conditions(self):
        # same spot but different appearance, and same appearance but far
        dets = [det(0, 0, x=0.0), det(1, 1, x=0.0), det(2, 2, x=100.0)]
        frames = [build_frame_graph(dets)]
        desc = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        store = DescriptorStore(desc)
        cfg = BaselineConfig(
            "geo_app",
            appearance_threshold=0.5,
            spatial_threshold=10.0,
            normalize=False,
        )
        clustering = threshold_assoc(
            frames, store, identity_calibs([0, 1, 2]), cfg
        )[0]
        # node 1 close but different-looking; node 2 similar but far away
        assert clustering.n_clusters == 3


class TestNormalization:
    def test_unit_maximum(self):
        d = np.array([0.5, 2.0, 1.0])
        out = _normalized(d)
        assert out.max() == 1.0
        assert out.tolist() == [0.25, 1.0, 0.5]

    def test_zero_distances_guard(self):
        assert not _normalized(np.zeros(3)).any()


class TestTop1:
    def test_two_nodes_always_cluster(self):
        frames = [build_frame_graph([det(0, 0), det(1, 1)])]
        store = DescriptorStore(np.random.default_rng(0).standard_normal((2, 4)))
        assert top1_assoc(frames, store)[0].n_clusters == 1

    def test_single_camera_all_singletons(self):
        frames = [build_frame_graph([det(0, i) for i in range(3)])]
        store = DescriptorStore(np.zeros((3, 4)))
        assert top1_assoc(frames, store)[0].n_clusters == 3

    def test_non_mutual_nearest_chain(self):
        # descriptors on a line at 0, 1, 1.9: nearest(0)=1, nearest(1)=2,
        # nearest(2)=1 -> a single 3-node chain
        dets = [det(0, 0), det(1, 1), det(0, 2)]
        frames = [build_frame_graph(dets)]
        store = DescriptorStore(np.array([[0.0], [1.0], [1.9]]))
        clustering = top1_assoc(frames, store)[0]
        assert clustering.assignment == [0, 0, 0]

    def test_edge_budget(self):
        rng = np.random.default_rng(1)
        dets = [det(i % 3, i) for i in range(9)]
        frames = [build_frame_graph(dets)]
        store = DescriptorStore(rng.standard_normal((9, 4)))
        clustering = top1_assoc(frames, store)[0]
        # at most |V| edges means at least n - |V| = 0 clusters; sanity only
        assert clustering.n_clusters >= 1


class TestSweep:
    def _labeled_frames(self, separable, n_frames=4):
        rng = np.random.default_rng(3)
        frames = []
        rows = []
        for f in range(n_frames):
            dets = []
            # degenerate variant: identical descriptors, one identity
            pairs = (
                [(0, 0), (1, 0), (0, 1), (1, 1)]
                if separable
                else [(0, 0), (1, 0), (0, 0), (1, 0)]
            )
            for i, (cam, ident) in enumerate(pairs):
                dets.append(
                    Detection(f, cam, i, (9.0 * i, 1.0, 4.0, 8.0), len(rows), ident)
                )
                if separable:
                    base = np.zeros(6)
                    base[ident] = 1.0
                    rows.append(base + 0.01 * rng.standard_normal(6))
                else:
                    rows.append(np.ones(6))
            frames.append(build_frame_graph(dets))
        return frames, DescriptorStore(np.array(rows))

    def test_exactly_eleven_thresholds(self):
        frames, store = self._labeled_frames(separable=True)
        result = sweep_thresholds(frames, store, {}, "l2_th")
        assert len(result.entries) == 11
        assert [e.threshold for e in result.entries] == list(SWEEP_THRESHOLDS)

    def test_separable_reaches_perfect_v(self):
        frames, store = self._labeled_frames(separable=True)
        result = sweep_thresholds(frames, store, {}, "l2_th")
        best = result.best_entry()
        assert best.report.mean["v_measure"] == pytest.approx(1.0)
        assert 0.0 < result.best_threshold < 1.0

    def test_identical_descriptors_tie_breaks_low(self):
        frames, store = self._labeled_frames(separable=False)
        result = sweep_thresholds(frames, store, {}, "l2_th")
        scores = [e.report.mean["v_measure"] for e in result.entries]
        assert len({round(s, 12) for s in scores[1:]}) == 1
        assert result.best_threshold == 0.1

    def test_requires_identities(self):
        frames = [build_frame_graph([det(0, 0), det(1, 1)])]
        store = DescriptorStore(np.zeros((2, 4)))
        with pytest.raises(DataError):
            sweep_thresholds(frames, store, {}, "l2_th")

    def test_rejects_non_appearance_methods(self):
        frames, store = self._labeled_frames(separable=True)
        with pytest.raises(ArgumentError):
            sweep_thresholds(frames, store, {}, "geo")
