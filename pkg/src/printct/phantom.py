"""Ground-truth voxel phantoms: void-laden test bodies and their rasterization.

Two built-in bodies mirror the benchmark samples used throughout the
toolkit: an 8 x 8 x 26 mm cuboid with alternating large/small cubic
cavities, and a 6 x 6 x 17.5 mm cuboid alternating spheres and cubes.
Cavity sizes follow fixed, linearly interpolated schedules; the number of
cavities per level is tuned so the designed porosity matches a requested
target.  Everything here is deterministic and analytic, so these phantoms
serve as the oracle for every downstream measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError, ScheduleError
from .grid import BACKGROUND, MATERIAL, VOID, LabelVolume, VoxelGrid

CUBE = "cube"
SPHERE = "sphere"

# Benchmark sample bodies (mm).
SAMPLE1_DIMS = (8.0, 8.0, 26.0)
SAMPLE2_DIMS = (6.0, 6.0, 17.5)

# Void size schedules (mm): largest/smallest cavity of each family.
SIZE_MIN = 0.20
S1_LARGE_MAX = 1.40
S1_SMALL_PEAK = 0.80     # mid-body peak of the small-cube rise/fall schedule
S2_SPHERE_MAX = 1.20
S2_CUBE_MAX = 0.70

# Clearance kept between any two voids and between voids and body walls.
CLEARANCE_MM = 0.20

# Porosity matching tolerance (absolute fraction = 0.5 percentage points).
POROSITY_TOL = 0.005

# Default linear attenuation for the printed polymer, 1/mm.
DEFAULT_MATERIAL_MU = 0.1


@dataclass(frozen=True)
class VoidSpec:
    """One designed cavity: an axis-aligned cube or a sphere.

    size_mm is the cube edge length or the sphere diameter; center_mm is
    given in body coordinates (origin at one corner of the body).
    """

    shape: str
    size_mm: float
    center_mm: tuple[float, float, float]

    def __post_init__(self):
        if self.shape not in (CUBE, SPHERE):
            raise ValueError(f"unknown void shape {self.shape!r}")
        if not self.size_mm > 0:
            raise ValueError("void size_mm must be > 0")
        object.__setattr__(self, "size_mm", float(self.size_mm))
        object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center_mm)
        h = self.size_mm / 2.0
        return c - h, c + h

    @property
    def volume_mm3(self) -> float:
        if self.shape == CUBE:
            return self.size_mm ** 3
        return math.pi * self.size_mm ** 3 / 6.0


@dataclass(frozen=True)
class PhantomSpec:
    """A cuboid body with an ordered list of non-overlapping cavities."""

    outer_dims_mm: tuple[float, float, float]
    voids: tuple[VoidSpec, ...] = ()
    material_mu: float = DEFAULT_MATERIAL_MU
    label: str = ""

    def __post_init__(self):
        dims = tuple(float(d) for d in self.outer_dims_mm)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"outer_dims_mm must be 3 positive lengths, got {dims}")
        if not self.material_mu > 0:
            raise ValueError("material_mu must be > 0")
        voids = tuple(self.voids)
        object.__setattr__(self, "outer_dims_mm", dims)
        object.__setattr__(self, "voids", voids)
        self._validate_voids()

    def _validate_voids(self):
        dims = np.asarray(self.outer_dims_mm)
        boxes = []
        for v in self.voids:
            lo, hi = v.bbox
            if not (np.all(lo > 0) and np.all(hi < dims)):
                raise ValueError(
                    f"void {v.shape} size {v.size_mm} at {v.center_mm} is not "
                    f"strictly inside the {tuple(dims)} body")
            boxes.append((lo, hi))
        # Pairwise bounding-shape intersection test.
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                lo = np.maximum(boxes[i][0], boxes[j][0])
                hi = np.minimum(boxes[i][1], boxes[j][1])
                if np.all(lo < hi):
                    raise ValueError(f"voids {i} and {j} overlap")

    @property
    def body_volume_mm3(self) -> float:
        a, b, c = self.outer_dims_mm
        return a * b * c


def designed_porosity(spec: PhantomSpec) -> float:
    """Analytic void fraction: sum of cavity volumes over body volume."""
    return sum(v.volume_mm3 for v in spec.voids) / spec.body_volume_mm3


# ---------------------------------------------------------------------------
# Built-in sample schedules

def _rise_fall(n: int, lo: float, peak: float) -> list[float]:
    """n sizes rising linearly from lo to peak and back down."""
    if n == 1:
        return [peak]
    mid = (n - 1) / 2.0
    return [lo + (peak - lo) * (1.0 - abs(k - mid) / mid) for k in range(n)]


def _interleave(primary: list, secondary: list) -> list:
    out = []
    for i, p in enumerate(primary):
        out.append(p)
        if i < len(secondary):
            out.append(secondary[i])
    return out


def _sample1_levels(n_large: int) -> list[tuple[str, float]]:
    large = np.linspace(S1_LARGE_MAX, SIZE_MIN, n_large)
    small = _rise_fall(n_large - 1, SIZE_MIN, S1_SMALL_PEAK) if n_large > 1 else []
    return _interleave([(CUBE, s) for s in large], [(CUBE, s) for s in small])


def _sample2_levels(n_pairs: int) -> list[tuple[str, float]]:
    spheres = np.linspace(S2_SPHERE_MAX, SIZE_MIN, n_pairs)
    cubes = np.linspace(S2_CUBE_MAX, SIZE_MIN, n_pairs)
    return _interleave([(SPHERE, s) for s in spheres], [(CUBE, s) for s in cubes])


def _axial_centers(levels, height: float) -> list[float] | None:
    """Top-to-bottom level centers with uniform inter-void clearance.

    Returns None when the stack does not fit inside the body height.
    """
    used = sum(s for _, s in levels) + CLEARANCE_MM * (len(levels) - 1) + 2 * CLEARANCE_MM
    if used > height:
        return None
    z = height - CLEARANCE_MM
    centers = []
    for _, size in levels:
        centers.append(z - size / 2.0)
        z -= size + CLEARANCE_MM
    return centers


def _grid_positions(size: float, width: float) -> np.ndarray:
    """Centers of the largest clearance-respecting square grid of voids."""
    m = int((width - 2 * CLEARANCE_MM + CLEARANCE_MM) // (size + CLEARANCE_MM))
    m = max(m, 0)
    if m == 0:
        return np.empty(0)
    span = m * size + (m - 1) * CLEARANCE_MM
    start = (width - span) / 2.0 + size / 2.0
    return start + np.arange(m) * (size + CLEARANCE_MM)


def _select_counts(vols: np.ndarray, cmax: np.ndarray, target: float,
                   body_volume: float) -> np.ndarray:
    """Per-level void counts whose total volume matches the target porosity.

    Every level keeps at least one void so the alternating schedule stays
    visible; the remaining volume budget is filled largest void first
    (small cavities are the hardest to measure downstream, so they are the
    last resort).  A final greedy pass adds/removes single voids while that
    reduces the porosity error.  Raises ScheduleError when no count vector
    lands within POROSITY_TOL.
    """
    vmax = float(np.sum(cmax * vols))
    want = target * body_volume
    counts = np.ones(len(vols), dtype=int)
    remaining = want - float(np.sum(counts * vols))
    for i in sorted(range(len(vols)), key=lambda i: -vols[i]):
        extra = min(int(cmax[i]) - 1, int(remaining // vols[i]))
        if extra > 0:
            counts[i] += extra
            remaining -= extra * vols[i]

    def err(c):
        return float(np.sum(c * vols)) / body_volume - target

    e = err(counts)
    while True:
        best_delta, best_level = None, None
        for i in range(len(vols)):
            dv = vols[i] / body_volume
            if counts[i] < cmax[i] and abs(e + dv) < abs(e):
                cand = e + dv
                if best_delta is None or abs(cand) < abs(best_delta):
                    best_delta, best_level = cand, (i, +1)
            if counts[i] > 1 and abs(e - dv) < abs(e):
                cand = e - dv
                if best_delta is None or abs(cand) < abs(best_delta):
                    best_delta, best_level = cand, (i, -1)
        if best_level is None:
            break
        counts[best_level[0]] += best_level[1]
        e = best_delta
    if abs(e) > POROSITY_TOL:
        raise ScheduleError(
            f"cannot reach porosity {target:.4f}: best achievable differs by "
            f"{e:+.4f} (capacity {vmax / body_volume:.4f})")
    return counts


def _build_schedule(dims, levels_fn, target: float, label: str,
                    material_mu: float) -> PhantomSpec:
    if not 0 < target < 0.5:
        raise ValueError(f"target porosity must be in (0, 0.5), got {target}")
    length, width, height = dims

    # Largest level count whose axial stack still fits the body.
    n = None
    for cand in range(60, 0, -1):
        levels = levels_fn(cand)
        if _axial_centers(levels, height) is not None:
            n = cand
            break
    if n is None:
        raise ScheduleError(f"no void schedule fits a {dims} body")
    levels = levels_fn(n)
    zc = _axial_centers(levels, height)

    xs = [_grid_positions(s, length) for _, s in levels]
    ys = [_grid_positions(s, width) for _, s in levels]
    cmax = np.array([len(x) * len(y) for x, y in zip(xs, ys)], dtype=int)
    if np.any(cmax == 0):
        raise ScheduleError(f"a scheduled void does not fit the {dims} cross-section")
    vols = np.array([VoidSpec(sh, sz, (1e3, 1e3, 1e3)).volume_mm3 for sh, sz in levels])
    counts = _select_counts(vols, cmax, target, length * width * height)

    voids = []
    for (shape, size), z, lx, ly, cnt in zip(levels, zc, xs, ys, counts):
        gx, gy = np.meshgrid(lx, ly, indexing="ij")
        for x, y in list(zip(gx.ravel(), gy.ravel()))[:cnt]:
            voids.append(VoidSpec(shape, size, (x, y, z)))
    return PhantomSpec(dims, tuple(voids), material_mu=material_mu, label=label)


def sample1_spec(target_porosity: float,
                 material_mu: float = DEFAULT_MATERIAL_MU) -> PhantomSpec:
    """8 x 8 x 26 mm body with alternating large/small cubic cavities.

    Large cube edges fall linearly from 1.40 mm at the top to 0.20 mm at the
    bottom; the interleaved small cubes rise from 0.20 mm to 0.80 mm at
    mid-height and fall back.  Per-level void counts are tuned so the
    designed porosity matches ``target_porosity`` within 0.5 points.
    """
    return _build_schedule(SAMPLE1_DIMS, _sample1_levels, target_porosity,
                           f"sample1(p={target_porosity:g})", material_mu)


def sample2_spec(target_porosity: float,
                 material_mu: float = DEFAULT_MATERIAL_MU) -> PhantomSpec:
    """6 x 6 x 17.5 mm body alternating spheres (1.20 -> 0.20 mm diameter)
    and cubes (0.70 -> 0.20 mm edge), both shrinking top to bottom."""
    return _build_schedule(SAMPLE2_DIMS, _sample2_levels, target_porosity,
                           f"sample2(p={target_porosity:g})", material_mu)


# ---------------------------------------------------------------------------
# Rasterization

def _axis_count(extent: float, spacing: float) -> int:
    return max(1, math.ceil(extent / spacing - 1e-9))


def voxelize(spec: PhantomSpec, spacing_mm: float,
             margin_mm: float = 0.0) -> tuple[VoxelGrid, LabelVolume]:
    """Rasterize a phantom on an isotropic grid by voxel-center membership.

    A voxel is ``void`` iff its center lies inside a cavity (half-open
    [lo, hi) box test for cubes, strict interior for spheres), ``material``
    iff inside the body and not void, ``background`` otherwise.  margin_mm
    adds background padding around the body (origin shifts to -margin).
    """
    if not spacing_mm > 0:
        raise ValueError("spacing_mm must be > 0")
    if margin_mm < 0:
        raise ValueError("margin_mm must be >= 0")
    if spec.voids:
        smallest = min(v.size_mm for v in spec.voids)
        if spacing_mm > smallest / 2.0:
            raise ResolutionError(
                f"spacing {spacing_mm} mm too coarse for smallest void "
                f"{smallest} mm (need <= {smallest / 2.0} mm)")

    dims_mm = np.asarray(spec.outer_dims_mm)
    n = tuple(_axis_count(d + 2 * margin_mm, spacing_mm) for d in dims_mm)
    origin = (-margin_mm, -margin_mm, -margin_mm)
    axes = [origin[a] + (np.arange(n[a]) + 0.5) * spacing_mm for a in range(3)]

    labels = np.full(n, BACKGROUND, dtype=np.uint8)
    inside = [(ax >= 0) & (ax < dims_mm[a]) for a, ax in enumerate(axes)]
    labels[np.ix_(*inside)] = MATERIAL

    for v in spec.voids:
        lo, hi = v.bbox
        sl = []
        for a in range(3):
            i0 = int(np.searchsorted(axes[a], lo[a], side="left"))
            i1 = int(np.searchsorted(axes[a], hi[a], side="right"))
            sl.append(slice(max(i0 - 1, 0), min(i1 + 1, n[a])))
        local = [axes[a][sl[a]] for a in range(3)]
        if v.shape == CUBE:
            m = ((local[0] >= lo[0]) & (local[0] < hi[0]))[:, None, None] \
                & ((local[1] >= lo[1]) & (local[1] < hi[1]))[None, :, None] \
                & ((local[2] >= lo[2]) & (local[2] < hi[2]))[None, None, :]
        else:
            r2 = (v.size_mm / 2.0) ** 2
            dx2 = (local[0] - v.center_mm[0]) ** 2
            dy2 = (local[1] - v.center_mm[1]) ** 2
            dz2 = (local[2] - v.center_mm[2]) ** 2
            m = (dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]) < r2
        region = labels[sl[0], sl[1], sl[2]]
        region[m] = VOID
        labels[sl[0], sl[1], sl[2]] = region

    values = np.where(labels == MATERIAL, np.float32(spec.material_mu), np.float32(0.0))
    grid = VoxelGrid(values, spacing_mm, origin)
    return grid, LabelVolume(labels, spacing_mm, origin)
