"""Print-quality metrics over label volumes.

Cusp density compares each slice's material mask with a morphologically
smoothed reference (open-then-close with a digital disk); the symmetric
difference is the "cusp" volume, reported as a percentage of total
material.  Roughness counts per-slice disagreement against a registered
reference volume, skipping an exclusion shell around the designed
cavities.  Both are computed separately for the two slice families (XY:
one slice per z; XZ: one slice per y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndi

from .errors import RegistrationError, SegmentationError
from .grid import BACKGROUND, MATERIAL, VOID, LabelVolume

XY = "XY"
XZ = "XZ"
PLANES = (XY, XZ)

CUSP_DENSITY = "cusp_density"
ROUGHNESS = "roughness"
POROSITY = "porosity"
METRICS = (CUSP_DENSITY, ROUGHNESS, POROSITY)


@dataclass(frozen=True)
class SmoothingSpec:
    structuring_radius_vox: int = 3
    void_exclusion_radius_mm: float = 0.25

    def __post_init__(self):
        if self.structuring_radius_vox < 1:
            raise ValueError("structuring_radius_vox must be >= 1")
        if self.void_exclusion_radius_mm < 0:
            raise ValueError("void_exclusion_radius_mm must be >= 0")


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one (printer, setting) analysis."""

    printer_id: str
    setting_id: str
    cusp_density_xy: float = 0.0
    cusp_density_xz: float = 0.0
    roughness_xy: float = 0.0
    roughness_xz: float = 0.0
    porosity_pct: float = 0.0
    void_histogram: tuple[tuple[float, int], ...] = ()  # (bin_lo_mm, count)

    def __post_init__(self):
        for name in ("cusp_density_xy", "cusp_density_xz", "porosity_pct"):
            if not 0.0 <= getattr(self, name) <= 100.0:
                raise ValueError(f"{name} must be within [0, 100]")
        if self.roughness_xy < 0 or self.roughness_xz < 0:
            raise ValueError("roughness must be >= 0")

    def metric(self, metric: str, plane: str = XY) -> float:
        if metric == POROSITY:
            return self.porosity_pct
        if metric not in (CUSP_DENSITY, ROUGHNESS):
            raise ValueError(f"unknown metric {metric!r}")
        if plane not in PLANES:
            raise ValueError(f"unknown plane {plane!r}")
        return getattr(self, f"{metric}_{plane.lower()}")


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return (x * x + y * y) <= r * r


def _slices(mask: np.ndarray, plane: str):
    if plane == XY:
        for k in range(mask.shape[2]):
            yield mask[:, :, k]
    elif plane == XZ:
        for j in range(mask.shape[1]):
            yield mask[:, j, :]
    else:
        raise ValueError(f"unknown plane {plane!r}")


def _open_close(m: np.ndarray, disk: np.ndarray) -> np.ndarray:
    # border_value choices make both operators the identity on a slab that
    # fills the slice, so an ideal cuboid scores zero cusp volume.
    opened = ndi.binary_dilation(
        ndi.binary_erosion(m, disk, border_value=1), disk, border_value=0)
    return ndi.binary_erosion(
        ndi.binary_dilation(opened, disk, border_value=0), disk, border_value=1)


def cusp_density(labels: LabelVolume, plane: str,
                 spec: SmoothingSpec = SmoothingSpec()) -> float:
    """Percent of material volume deviating from its smoothed surface."""
    mat = labels.material_mask
    total = int(np.count_nonzero(mat))
    if total == 0:
        raise SegmentationError("cusp density of an empty sample")
    disk = _disk(spec.structuring_radius_vox)
    cusp = 0
    for m in _slices(mat, plane):
        if not m.any():
            continue
        cusp += int(np.count_nonzero(m ^ _open_close(m, disk)))
    return 100.0 * cusp / total


def _exclusion_2d(void2d: np.ndarray, radius_vox: float) -> np.ndarray:
    if not void2d.any():
        return np.zeros_like(void2d)
    return ndi.distance_transform_edt(~void2d) <= radius_vox


def roughness(labels: LabelVolume, reference: LabelVolume, plane: str,
              spec: SmoothingSpec = SmoothingSpec()) -> int:
    """Per-slice material disagreement count against a registered reference.

    Voxels within the exclusion radius (in-plane distance) of a designed
    void in the reference are skipped, mirroring how surface metrics keep
    clear of intentional cavities.
    """
    if labels.dims != reference.dims:
        raise RegistrationError(
            f"dim mismatch {labels.dims} vs {reference.dims}; align() first")
    mat_a = labels.material_mask
    mat_b = reference.material_mask
    voids = reference.void_mask
    r_vox = spec.void_exclusion_radius_mm / reference.spacing_mm
    total = 0
    for ma, mb, vd in zip(_slices(mat_a, plane), _slices(mat_b, plane),
                          _slices(voids, plane)):
        diff = ma ^ mb
        if r_vox > 0:
            diff &= ~_exclusion_2d(vd, r_vox)
        total += int(np.count_nonzero(diff))
    return total


def align(moving: LabelVolume, reference: LabelVolume,
          search_radius_vox: int = 2) -> tuple[LabelVolume, tuple[int, int, int]]:
    """Integer-shift registration maximizing material overlap.

    Searches a (2k+1)^3 window around the centroid-difference shift; ties
    break to the smallest shift magnitude, then lexicographic order.
    Returns the shifted volume (background fill) and the applied shift.
    """
    if moving.dims != reference.dims:
        raise RegistrationError(f"dim mismatch {moving.dims} vs {reference.dims}")
    mov = moving.material_mask
    ref = reference.material_mask
    if not mov.any() or not ref.any():
        raise RegistrationError("cannot align empty material masks")
    base = np.round(np.array(ndi.center_of_mass(ref)) -
                    np.array(ndi.center_of_mass(mov))).astype(int)
    k = int(search_radius_vox)
    best = None
    for dx in range(-k, k + 1):
        for dy in range(-k, k + 1):
            for dz in range(-k, k + 1):
                shift = base + (dx, dy, dz)
                ov = _overlap(mov, ref, shift)
                key = (-ov, int(np.dot(shift, shift)), tuple(shift))
                if best is None or key < best[0]:
                    best = (key, tuple(int(s) for s in shift))
    if best[0][0] == 0:
        raise RegistrationError("no shift in the search window produces overlap")
    shift = best[1]
    out = np.full(moving.dims, BACKGROUND, dtype=np.uint8)
    src, dst = _shift_slices(moving.dims, shift)
    out[dst] = moving.labels[src]
    return moving.with_labels(out), shift


def _shift_slices(dims, shift):
    src, dst = [], []
    for n, s in zip(dims, shift):
        src.append(slice(max(0, -s), min(n, n - s)))
        dst.append(slice(max(0, s), min(n, n + s)))
    return tuple(src), tuple(dst)


def _overlap(mov: np.ndarray, ref: np.ndarray, shift) -> int:
    src, dst = _shift_slices(mov.shape, shift)
    for s in src:
        if s.start >= s.stop:
            return 0
    return int(np.count_nonzero(mov[src] & ref[dst]))


def porosity(labels: LabelVolume) -> float:
    """Percent void fraction of the sample body (voids / (material+voids)).

    Designed cavities and defect pores both count as void, so a defective
    print measures above its designed porosity.
    """
    _, n_mat, n_void = labels.counts()
    if n_mat + n_void == 0:
        raise SegmentationError("porosity of an empty sample")
    return 100.0 * n_void / (n_mat + n_void)


def rank_settings(reports: list[MetricsReport], metric: str,
                  plane: str = XY) -> list[tuple[str, str, float]]:
    """Per printer, the setting minimizing the chosen metric.

    Printers keep their first-appearance order; ties keep the earliest
    report, so input order doubles as the setting index.
    """
    if not reports:
        raise ValueError("rank_settings needs at least one report")
    best: dict[str, tuple[str, float]] = {}
    for r in reports:
        value = r.metric(metric, plane)
        cur = best.get(r.printer_id)
        if cur is None or value < cur[1]:
            best[r.printer_id] = (r.setting_id, value)
    return [(printer, s, v) for printer, (s, v) in best.items()]
