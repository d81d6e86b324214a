import numpy as np
import pytest

import printct as pc
from printct.errors import SegmentationError
from printct.grid import BACKGROUND, MATERIAL, VOID, LabelVolume, VoxelGrid
from printct.segment import (extract_voids, otsu_threshold, score_detectability,
                             segment)


def grid_of(values, spacing=0.1, origin=(0, 0, 0)):
    return VoxelGrid(np.asarray(values, dtype=np.float32), spacing, origin)


class TestOtsu:
    def test_bimodal_split(self):
        vals = np.zeros((10, 10, 10), np.float32)
        vals[5:] = 0.1
        thr = otsu_threshold(grid_of(vals))
        assert 0.0 < thr < 0.1

    def test_exhaustive_between_class_variance(self):
        rng = np.random.default_rng(0)
        vals = np.concatenate([rng.normal(0.02, 0.01, 4000),
                               rng.normal(0.11, 0.02, 4000)])
        vals = np.clip(vals, 0, None).astype(np.float32).reshape(20, 20, 20)
        thr = otsu_threshold(grid_of(vals))

        # brute force: recompute sigma_b^2 for every candidate bin split
        counts, edges = np.histogram(vals, bins=256, range=(vals.min(), vals.max()))
        centers = (edges[:-1] + edges[1:]) / 2
        best, best_k = -1.0, None
        for k in range(255):
            w0, w1 = counts[:k + 1].sum(), counts[k + 1:].sum()
            if w0 == 0 or w1 == 0:
                continue
            mu0 = (counts[:k + 1] * centers[:k + 1]).sum() / w0
            mu1 = (counts[k + 1:] * centers[k + 1:]).sum() / w1
            sb = w0 * w1 * (mu0 - mu1) ** 2
            if sb > best:
                best, best_k = sb, k
        assert thr == pytest.approx(edges[best_k + 1])

    def test_scale_equivariance(self):
        rng = np.random.default_rng(1)
        vals = rng.random((12, 12, 12)).astype(np.float32)
        t1 = otsu_threshold(grid_of(vals))
        t2 = otsu_threshold(grid_of(vals * 3.5))
        assert t2 == pytest.approx(3.5 * t1, rel=1e-6)

    def test_constant_grid_rejected(self):
        with pytest.raises(SegmentationError):
            otsu_threshold(grid_of(np.full((4, 4, 4), 0.3)))


class TestSegment:
    def test_ground_truth_recovery_within_boundary_band(self, sample2):
        import scipy.ndimage as ndi
        grid, truth = pc.voxelize(sample2, 0.1, margin_mm=0.3)
        seg = segment(grid, otsu_threshold(grid))
        mismatch = seg.labels != truth.labels
        # all mismatches within one voxel of a label boundary in the truth
        edge = np.zeros(truth.dims, bool)
        lab = truth.labels
        for ax in range(3):
            d = np.diff(lab, axis=ax) != 0
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            edge[tuple(lo)] |= d
            edge[tuple(hi)] |= d
        band = ndi.binary_dilation(edge, ndi.generate_binary_structure(3, 3))
        assert not np.any(mismatch & ~band)

    def test_all_background(self):
        seg = segment(grid_of(np.zeros((6, 6, 6))), threshold=0.5)
        assert np.all(seg.labels == BACKGROUND)

    def test_solid_cube_has_no_voids(self):
        spec = pc.PhantomSpec((1.5, 1.5, 1.5))
        grid, _ = pc.voxelize(spec, 0.1, margin_mm=0.3)
        seg = segment(grid, otsu_threshold(grid))
        assert np.count_nonzero(seg.labels == VOID) == 0
        assert np.count_nonzero(seg.labels == MATERIAL) > 0

    def test_enclosed_pocket_is_void_open_pocket_is_background(self):
        # pockets must be > the median kernel (3^3) to survive smoothing
        vals = np.zeros((18, 18, 18), np.float32)
        vals[1:17, 1:17, 1:17] = 0.1
        vals[8:12, 8:12, 8:12] = 0.0       # enclosed pocket
        vals[2:5, 2:5, 0:8] = 0.0          # channel reaching the boundary
        seg = segment(grid_of(vals), threshold=0.05)
        assert seg.labels[9, 9, 9] == VOID
        assert seg.labels[3, 3, 3] == BACKGROUND

    def test_idempotent_on_binary_grid(self, sample2):
        grid, _ = pc.voxelize(sample2, 0.1, margin_mm=0.3)
        seg1 = segment(grid, otsu_threshold(grid))
        regrid = pc.grid_from_labels(seg1, sample2.material_mu)
        seg2 = segment(regrid, otsu_threshold(regrid))
        assert np.array_equal(seg1.labels, seg2.labels)

    def test_label_partition(self):
        rng = np.random.default_rng(4)
        vals = rng.random((10, 10, 10)).astype(np.float32)
        seg = segment(grid_of(vals), threshold=0.6)
        nb, nm, nv = seg.counts()
        assert nb + nm + nv == 1000


class TestExtractVoids:
    def _labels_with_cube(self, size_vox=5, spacing=0.1):
        lab = np.full((20, 20, 20), MATERIAL, np.uint8)
        lab[7:7 + size_vox, 7:7 + size_vox, 7:7 + size_vox] = VOID
        return LabelVolume(lab, spacing)

    def test_cube_void_metrics(self):
        labels = self._labels_with_cube()
        voids = extract_voids(labels)
        assert len(voids) == 1
        v = voids[0]
        assert v.voxel_count == 125
        assert v.volume_mm3 == pytest.approx(0.125)
        assert v.equivalent_size_mm == pytest.approx(0.5)
        assert v.centroid_mm == pytest.approx((0.95, 0.95, 0.95))

    def test_edge_sharing_voids_stay_separate(self):
        lab = np.full((8, 8, 8), MATERIAL, np.uint8)
        lab[2, 2, 2] = VOID
        lab[3, 3, 2] = VOID  # shares an edge, not a face
        voids = extract_voids(LabelVolume(lab, 0.1))
        assert len(voids) == 2

    def test_face_sharing_voids_merge(self):
        lab = np.full((8, 8, 8), MATERIAL, np.uint8)
        lab[2, 2, 2] = VOID
        lab[3, 2, 2] = VOID
        assert len(extract_voids(LabelVolume(lab, 0.1))) == 1

    def test_no_voids(self):
        lab = np.full((5, 5, 5), MATERIAL, np.uint8)
        assert extract_voids(LabelVolume(lab, 0.1)) == []

    def test_volumes_sum_to_void_count(self):
        rng = np.random.default_rng(7)
        lab = np.where(rng.random((16, 16, 16)) < 0.2, VOID, MATERIAL).astype(np.uint8)
        labels = LabelVolume(lab, 0.05)
        voids = extract_voids(labels)
        total = sum(v.volume_mm3 for v in voids)
        assert total == pytest.approx(np.count_nonzero(lab == VOID) * 0.05 ** 3)

    def test_respects_origin(self):
        lab = np.full((6, 6, 6), MATERIAL, np.uint8)
        lab[0, 0, 0] = VOID
        labels = LabelVolume(lab, 0.1, origin_mm=(-0.3, -0.3, -0.3))
        v = extract_voids(labels)[0]
        assert v.centroid_mm == pytest.approx((-0.25, -0.25, -0.25))


class TestDetectability:
    def _truth(self):
        return pc.PhantomSpec((10, 10, 10), (
            pc.VoidSpec("cube", 1.0, (2, 2, 2)),
            pc.VoidSpec("cube", 0.5, (5, 5, 5)),
            pc.VoidSpec("sphere", 0.3, (8, 8, 8)),
        ))

    @staticmethod
    def _detections(truth, jitter=0.0):
        out = []
        for i, v in enumerate(truth.voids):
            c = np.asarray(v.center_mm) + jitter * (1 if i % 2 else -1)
            out.append(pc.VoidDetection(tuple(c), v.volume_mm3,
                                        v.volume_mm3 ** (1 / 3), 10))
        return out

    def test_exact_centroids_all_detected(self):
        truth = self._truth()
        rep = score_detectability(self._detections(truth), truth, 0.2)
        assert rep.detection_rate == 1.0
        assert all(b.detection_rate == 1.0 for b in rep.bins)
        assert rep.min_fully_detected_size_mm == pytest.approx(0.3)
        assert rep.size_at_full_rate_mm == pytest.approx(0.3)

    def test_empty_detections(self):
        truth = self._truth()
        rep = score_detectability([], truth, 0.2)
        assert rep.detection_rate == 0.0
        assert all(b.detection_rate == 0.0 for b in rep.bins)
        assert rep.min_fully_detected_size_mm is None

    def test_rate_monotone_in_match_radius(self):
        truth = self._truth()
        found = self._detections(truth, jitter=0.08)  # |offset| ~ 0.14 mm
        rates = [score_detectability(found, truth, r).detection_rate
                 for r in (0.5, 0.2, 0.1, 0.05)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_each_detection_claimed_once(self):
        truth = pc.PhantomSpec((10, 10, 10), (
            pc.VoidSpec("cube", 1.0, (2, 2, 2)),
            pc.VoidSpec("cube", 0.5, (2.9, 2, 2)),
        ))
        # one detection between the two truth voids: largest claims it
        d = pc.VoidDetection((2.4, 2.0, 2.0), 1.0, 1.0, 100)
        rep = score_detectability([d], truth, 0.5)
        assert rep.matches[0].detected
        assert not rep.matches[1].detected

    def test_volume_ratio_reported(self):
        truth = pc.PhantomSpec((10, 10, 10), (pc.VoidSpec("cube", 1.0, (5, 5, 5)),))
        d = pc.VoidDetection((5, 5, 5), 0.5, 0.5 ** (1 / 3), 10)
        rep = score_detectability([d], truth, 0.2)
        assert rep.matches[0].volume_ratio == pytest.approx(0.5)
        assert rep.bins[0].mean_volume_ratio == pytest.approx(0.5)

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            score_detectability([], self._truth(), 0.0)
