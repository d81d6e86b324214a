"""Segmentation of reconstructed volumes and void detectability scoring.

The segmenter is deliberately boring: Otsu's threshold on a 256-bin
histogram, one pass of 3x3x3 median smoothing, then an enclosure rule.
Sub-threshold voxels connected to the volume boundary by a 6-connected
sub-threshold path are background; every other sub-threshold voxel is an
enclosed void.  Deterministic, and exactly reproducible against the
ground-truth labels it is tested on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .errors import SegmentationError
from .grid import BACKGROUND, MATERIAL, VOID, LabelVolume, VoxelGrid
from .phantom import PhantomSpec, VoidSpec

# 6-connectivity in 3D: faces only, so diagonal neighbours stay separate.
_CONN6 = ndi.generate_binary_structure(3, 1)

_MEDIAN_CHUNK = 48

DEFAULT_SIZE_BIN_MM = 0.1


def otsu_threshold(grid: VoxelGrid) -> float:
    """Threshold maximizing between-class variance over a 256-bin histogram.

    Returns the lower edge of the first bin of the upper class, so
    ``values >= threshold`` selects the bright class.  Ties pick the
    smallest threshold.
    """
    v = grid.values
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        raise SegmentationError("degenerate histogram: grid has a single value")
    counts, edges = np.histogram(v, bins=256, range=(lo, hi))
    w = counts.astype(np.float64)
    total = w.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    cw = np.cumsum(w)
    cm = np.cumsum(w * centers)
    w0 = cw[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.where(w0 > 0, cm[:-1] / np.maximum(w0, 1), 0.0)
    mu1 = np.where(w1 > 0, (cm[-1] - cm[:-1]) / np.maximum(w1, 1), 0.0)
    sigma_b = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    k = int(np.argmax(sigma_b))
    if not np.isfinite(sigma_b[k]):
        raise SegmentationError("degenerate histogram: all mass in one bin")
    return float(edges[k + 1])


def _median3(values: np.ndarray) -> np.ndarray:
    """3x3x3 median with edge replication, chunked along z to bound memory."""
    v = np.pad(values, 1, mode="edge")
    nx, ny, nz = values.shape
    out = np.empty_like(values)
    for z0 in range(0, nz, _MEDIAN_CHUNK):
        z1 = min(nz, z0 + _MEDIAN_CHUNK)
        stack = [v[dx:dx + nx, dy:dy + ny, z0 + dz:z1 + dz]
                 for dx in range(3) for dy in range(3) for dz in range(3)]
        out[:, :, z0:z1] = np.median(np.stack(stack), axis=0)
    return out


def segment(grid: VoxelGrid, threshold: float) -> LabelVolume:
    """Classify voxels as material / enclosed void / background.

    Median-smooths the attenuation first, thresholds at ``threshold``, then
    labels sub-threshold regions: 6-connected components touching any
    volume face are background, the rest are voids.
    """
    smoothed = _median3(grid.values)
    mat = smoothed >= threshold
    lab = np.full(grid.dims, BACKGROUND, dtype=np.uint8)
    lab[mat] = MATERIAL
    comp, n = ndi.label(~mat, structure=_CONN6)
    if n:
        edge = np.unique(np.concatenate([
            comp[0].ravel(), comp[-1].ravel(),
            comp[:, 0].ravel(), comp[:, -1].ravel(),
            comp[:, :, 0].ravel(), comp[:, :, -1].ravel()]))
        on_edge = np.zeros(n + 1, dtype=bool)
        on_edge[edge] = True
        enclosed = (comp > 0) & ~on_edge[comp]
        lab[enclosed] = VOID
    return LabelVolume(lab, grid.spacing_mm, grid.origin_mm)


@dataclass(frozen=True)
class VoidDetection:
    """One connected void component found in a label volume."""

    centroid_mm: tuple[float, float, float]
    volume_mm3: float
    equivalent_size_mm: float  # edge of the equal-volume cube
    voxel_count: int
    matched_truth: VoidSpec | None = None

    def __post_init__(self):
        if not self.volume_mm3 > 0:
            raise ValueError("volume_mm3 must be > 0")


def extract_voids(labels: LabelVolume) -> list[VoidDetection]:
    """6-connected void components with centroid, volume and size."""
    void = labels.labels == VOID
    comp, n = ndi.label(void, structure=_CONN6)
    if n == 0:
        return []
    flat = comp.ravel()
    counts = np.bincount(flat, minlength=n + 1)[1:]
    idx = np.nonzero(void)
    h = labels.spacing_mm
    out = []
    sums = [np.bincount(comp[idx], weights=coords, minlength=n + 1)[1:]
            for coords in idx]
    for i in range(n):
        cnt = int(counts[i])
        cen = tuple(labels.origin_mm[a] + (sums[a][i] / cnt + 0.5) * h for a in range(3))
        vol = cnt * h ** 3
        out.append(VoidDetection(cen, vol, vol ** (1.0 / 3.0), cnt))
    out.sort(key=lambda d: -d.volume_mm3)
    return out


@dataclass(frozen=True)
class TruthMatch:
    truth: VoidSpec
    detected: bool
    centroid_error_mm: float | None = None
    volume_ratio: float | None = None
    detection_index: int | None = None  # index into the found list


@dataclass(frozen=True)
class SizeBin:
    lo_mm: float
    hi_mm: float
    n_truth: int
    n_detected: int
    mean_volume_ratio: float | None

    @property
    def detection_rate(self) -> float:
        return self.n_detected / self.n_truth


@dataclass(frozen=True)
class DetectabilityReport:
    """Greedy truth-to-detection matching plus per-size-bin rates."""

    matches: tuple[TruthMatch, ...]
    bins: tuple[SizeBin, ...]
    min_fully_detected_size_mm: float | None
    size_at_full_rate_mm: float | None   # all bins at/above this start: rate 1.0
    size_at_half_rate_mm: float | None   # ... rate >= 0.5

    @property
    def detection_rate(self) -> float:
        if not self.matches:
            return 0.0
        return sum(m.detected for m in self.matches) / len(self.matches)


def _rate_threshold(bins: list[SizeBin], rate: float) -> float | None:
    best = None
    for b in sorted(bins, key=lambda b: -b.lo_mm):
        if b.detection_rate >= rate:
            best = b.lo_mm
        else:
            break
    return best


def score_detectability(found: list[VoidDetection], truth: PhantomSpec,
                        match_radius_mm: float,
                        size_bin_mm: float = DEFAULT_SIZE_BIN_MM) -> DetectabilityReport:
    """Match detections to designed voids, largest truth first.

    A truth void is detected when an unclaimed detection centroid lies
    within match_radius_mm of its center; each detection may be claimed
    once.  Rates are reported in size bins of size_bin_mm, along with the
    mean recovered-volume ratio per bin.
    """
    if not match_radius_mm > 0:
        raise ValueError("match_radius_mm must be > 0")
    order = sorted(range(len(truth.voids)), key=lambda i: -truth.voids[i].size_mm)
    centroids = np.array([d.centroid_mm for d in found]).reshape(-1, 3)
    claimed = np.zeros(len(found), dtype=bool)
    matches: list[TruthMatch | None] = [None] * len(truth.voids)
    for i in order:
        tv = truth.voids[i]
        j = None
        if len(found):
            d = np.linalg.norm(centroids - np.asarray(tv.center_mm), axis=1)
            d[claimed] = np.inf
            j = int(np.argmin(d))
            if not d[j] <= match_radius_mm:
                j = None
        if j is None:
            matches[i] = TruthMatch(tv, False)
        else:
            claimed[j] = True
            matches[i] = TruthMatch(tv, True, float(d[j]),
                                    found[j].volume_mm3 / tv.volume_mm3, j)

    bins: list[SizeBin] = []
    if truth.voids:
        kmin = int(np.floor(min(v.size_mm for v in truth.voids) / size_bin_mm + 1e-9))
        kmax = int(np.floor(max(v.size_mm for v in truth.voids) / size_bin_mm + 1e-9))
        for k in range(kmin, kmax + 1):
            lo, hi = k * size_bin_mm, (k + 1) * size_bin_mm
            sel = [m for m in matches if lo <= m.truth.size_mm < hi - 1e-12
                   or abs(m.truth.size_mm - lo) < 1e-12]
            if not sel:
                continue
            det = [m for m in sel if m.detected]
            ratios = [m.volume_ratio for m in det]
            bins.append(SizeBin(lo, hi, len(sel), len(det),
                                float(np.mean(ratios)) if ratios else None))

    min_full = None
    for size in sorted({m.truth.size_mm for m in matches}, reverse=True):
        if all(m.detected for m in matches if m.truth.size_mm == size):
            min_full = size
        else:
            break
    return DetectabilityReport(
        tuple(matches), tuple(bins), min_full,
        _rate_threshold(bins, 1.0), _rate_threshold(bins, 0.5))
