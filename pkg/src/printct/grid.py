"""Dense voxel carriers: attenuation grids and per-voxel label volumes.

Arrays are indexed ``[x, y, z]`` so ``values.shape == dims == (nx, ny, nz)``.
Voxels are isotropic; voxel ``(i, j, k)`` has its center at
``origin_mm + (i + 0.5, j + 0.5, k + 0.5) * spacing_mm``.

Both carriers are immutable after construction (the backing array is
marked read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Label codes used throughout the toolkit.
BACKGROUND = 0
MATERIAL = 1
VOID = 2


def _as_point(p) -> tuple[float, float, float]:
    x, y, z = p
    return (float(x), float(y), float(z))


@dataclass(frozen=True)
class VoxelGrid:
    """3D scalar field of linear attenuation values (1/mm) with physical pitch."""

    values: np.ndarray
    spacing_mm: float
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"values must be a non-empty 3D array, got shape {v.shape}")
        if not self.spacing_mm > 0:
            raise ValueError(f"spacing_mm must be > 0, got {self.spacing_mm}")
        if v.min() < 0:
            raise ValueError("attenuation values must be >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "spacing_mm", float(self.spacing_mm))
        object.__setattr__(self, "origin_mm", _as_point(self.origin_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def extent_mm(self) -> tuple[float, float, float]:
        """Physical extent = dims * spacing."""
        return tuple(n * self.spacing_mm for n in self.dims)

    def axis_centers_mm(self, axis: int) -> np.ndarray:
        """Voxel-center coordinates along one axis."""
        n = self.dims[axis]
        return self.origin_mm[axis] + (np.arange(n) + 0.5) * self.spacing_mm

    @property
    def center_mm(self) -> tuple[float, float, float]:
        return tuple(o + e / 2.0 for o, e in zip(self.origin_mm, self.extent_mm))


@dataclass(frozen=True)
class LabelVolume:
    """Per-voxel classification {background, material, void} paired to a grid."""

    labels: np.ndarray
    spacing_mm: float
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.uint8)
        if lab.ndim != 3 or min(lab.shape) < 1:
            raise ValueError(f"labels must be a non-empty 3D array, got shape {lab.shape}")
        if not self.spacing_mm > 0:
            raise ValueError(f"spacing_mm must be > 0, got {self.spacing_mm}")
        if lab.max(initial=0) > VOID:
            raise ValueError("labels must be in {background, material, void}")
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "spacing_mm", float(self.spacing_mm))
        object.__setattr__(self, "origin_mm", _as_point(self.origin_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def material_mask(self) -> np.ndarray:
        return self.labels == MATERIAL

    @property
    def void_mask(self) -> np.ndarray:
        return self.labels == VOID

    @property
    def body_mask(self) -> np.ndarray:
        """Solid region: material plus designed/defect voids."""
        return self.labels != BACKGROUND

    def counts(self) -> tuple[int, int, int]:
        """(background, material, void) voxel counts; always sums to the total."""
        c = np.bincount(self.labels.ravel(), minlength=3)
        return int(c[BACKGROUND]), int(c[MATERIAL]), int(c[VOID])

    def with_labels(self, labels: np.ndarray) -> "LabelVolume":
        """Same spacing/origin, new label array."""
        return LabelVolume(labels, self.spacing_mm, self.origin_mm)


def grid_from_labels(labels: LabelVolume, material_mu: float) -> VoxelGrid:
    """Attenuation grid implied by a label volume: mu on material, 0 elsewhere."""
    if not material_mu > 0:
        raise ValueError("material_mu must be > 0")
    values = np.where(labels.labels == MATERIAL, np.float32(material_mu), np.float32(0.0))
    return VoxelGrid(values, labels.spacing_mm, labels.origin_mm)
