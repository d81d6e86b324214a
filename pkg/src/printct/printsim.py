"""Degrade a ground-truth phantom into an "as printed" volume.

Printer settings map to defect magnitudes through a small affine profile
(configuration data, not physics): surface amplitude grows with layer
height, under-extrusion pore rate grows with nozzle speed.  Three defect
stages compose, in an order that keeps the designed cavities intact:

  voxelize -> layer quantization -> surface noise -> under-extrusion pores

Every stage is a deterministic function of (input, seed) and is the
identity when its magnitude parameter is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.ndimage as ndi

from .errors import ConfigError, GeometryError, ResolutionError
from .grid import BACKGROUND, MATERIAL, VOID, LabelVolume, VoxelGrid, grid_from_labels
from .phantom import PhantomSpec, voxelize

GRID_PATTERN = "grid"


@dataclass(frozen=True)
class PrinterSettings:
    layer_height_um: float
    nozzle_speed_mm_s: float
    infill_density_pct: float = 100.0
    infill_pattern: str = GRID_PATTERN
    seed: int = 0

    def __post_init__(self):
        if not self.layer_height_um > 0:
            raise ValueError("layer_height_um must be > 0")
        if not self.nozzle_speed_mm_s > 0:
            raise ValueError("nozzle_speed_mm_s must be > 0")
        if not 0 < self.infill_density_pct <= 100:
            raise ValueError("infill_density_pct must be in (0, 100]")
        if self.infill_pattern != GRID_PATTERN:
            raise ValueError(f"unsupported infill pattern {self.infill_pattern!r}")


def settings_table() -> list[PrinterSettings]:
    """The six benchmark settings: layer heights 50..70 um at 30 mm/s,
    plus 50 um at 35 mm/s, all 100% grid infill."""
    rows = [(50, 30), (55, 30), (60, 30), (65, 30), (70, 30), (50, 35)]
    return [PrinterSettings(lh, sp) for lh, sp in rows]


@dataclass(frozen=True)
class DefectModel:
    underextrusion_rate: float = 0.0   # pore events per mm of raster path
    pore_radius_mm: float = 0.0        # mean pore radius
    surface_amplitude_mm: float = 0.0  # RMS boundary perturbation
    surface_correlation_mm: float = 0.0

    def __post_init__(self):
        for name in ("underextrusion_rate", "pore_radius_mm",
                     "surface_amplitude_mm", "surface_correlation_mm"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PrinterProfile:
    """Named affine coefficient set mapping settings to defect magnitudes.

    surface_amplitude = amplitude_base + amplitude_per_mm_layer * layer_height
    underextrusion    = max(0, rate_base + rate_per_speed * nozzle_speed)
    """

    name: str
    amplitude_base_mm: float = 0.0
    amplitude_per_mm_layer: float = 0.0
    correlation_mm: float = 0.0
    rate_base_per_mm: float = 0.0
    rate_per_speed: float = 0.0
    pore_radius_mm: float = 0.0

    def __post_init__(self):
        for f_ in ("amplitude_base_mm", "amplitude_per_mm_layer", "correlation_mm",
                   "pore_radius_mm"):
            if getattr(self, f_) < 0:
                raise ValueError(f"{f_} must be >= 0")


# Built-in profiles. "zero" is the perfect reference printer; the others are
# calibrated so defect severity orders the way coarser settings should.  The
# surface correlation length sits near the cusp structuring scale (~0.1 mm)
# so rougher settings register as rougher surfaces.
BUILTIN_PROFILES = {
    "zero": PrinterProfile("zero"),
    "default": PrinterProfile(
        "default",
        amplitude_per_mm_layer=1.5, correlation_mm=0.1,
        rate_base_per_mm=0.002, rate_per_speed=0.0002, pore_radius_mm=0.12),
    "rough": PrinterProfile(
        "rough",
        amplitude_base_mm=0.02, amplitude_per_mm_layer=2.0, correlation_mm=0.12,
        rate_base_per_mm=0.006, rate_per_speed=0.0006, pore_radius_mm=0.14),
    "degraded": PrinterProfile(
        "degraded",
        amplitude_base_mm=0.04, amplitude_per_mm_layer=2.0, correlation_mm=0.1,
        rate_base_per_mm=0.03, rate_per_speed=0.001, pore_radius_mm=0.12),
}


def get_profile(name: str, extra: dict[str, PrinterProfile] | None = None) -> PrinterProfile:
    table = dict(BUILTIN_PROFILES)
    if extra:
        table.update(extra)
    try:
        return table[name]
    except KeyError:
        raise ConfigError(f"unknown printer profile {name!r}; "
                          f"available: {sorted(table)}") from None


def defect_model_for(settings: PrinterSettings, profile: PrinterProfile) -> DefectModel:
    """Evaluate the profile's affine map at one settings row."""
    lh_mm = settings.layer_height_um * 1e-3
    return DefectModel(
        underextrusion_rate=max(
            0.0, profile.rate_base_per_mm + profile.rate_per_speed * settings.nozzle_speed_mm_s),
        pore_radius_mm=profile.pore_radius_mm,
        surface_amplitude_mm=profile.amplitude_base_mm + profile.amplitude_per_mm_layer * lh_mm,
        surface_correlation_mm=profile.correlation_mm,
    )


# ---------------------------------------------------------------------------
# Stage 1: layer quantization (stair-stepping)

def apply_layer_quantization(grid: VoxelGrid, labels: LabelVolume,
                             layer_height_um: float) -> LabelVolume:
    """Re-sample the body so each band of z-slices shares one XY section.

    Bands are ceil(layer_height / pitch) slices tall; a band's section is
    the per-column majority of the body mask (ties go to material).  Labels
    inside the retained body are unchanged, so designed voids survive.
    """
    h_um = grid.spacing_mm * 1e3
    if layer_height_um < h_um - 1e-9:
        raise ResolutionError(
            f"layer height {layer_height_um} um below voxel pitch {h_um} um")
    band = math.ceil(layer_height_um / h_um - 1e-9)
    if band <= 1:
        return labels
    lab = labels.labels
    nz = lab.shape[2]
    body = lab != BACKGROUND
    starts = np.arange(0, nz, band)
    counts = np.add.reduceat(body, starts, axis=2)
    lens = np.diff(np.append(starts, nz))
    maj = counts * 2 >= lens  # >= half of the band is body
    body_new = np.repeat(maj, lens, axis=2)

    out = np.where(body_new, np.where(body, lab, MATERIAL), BACKGROUND)
    return labels.with_labels(out.astype(np.uint8))


# ---------------------------------------------------------------------------
# Stage 2: correlated surface noise

def apply_surface_noise(labels: LabelVolume, model: DefectModel, seed: int) -> LabelVolume:
    """Displace the outer body boundary along its normal by a correlated
    zero-mean field with the model's RMS amplitude and correlation length.

    Implemented as a level-set perturbation: the signed distance to the
    body boundary is thresholded at a smooth noise field (clipped at three
    sigma, which bounds growth to 3x the amplitude).  Designed voids are
    never relabelled.
    """
    a = model.surface_amplitude_mm
    if a == 0.0:
        return labels
    lab = labels.labels
    body = lab != BACKGROUND
    if not body.any():
        return labels
    h = labels.spacing_mm
    idx = np.nonzero(body)
    bbox_mm = [(i.max() - i.min() + 1) * h for i in idx]
    if a > min(bbox_mm) / 2.0:
        raise GeometryError(
            f"surface amplitude {a} mm exceeds half the body's min dimension "
            f"{min(bbox_mm):.3f} mm")

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(lab.shape).astype(np.float32)
    sigma_vox = model.surface_correlation_mm / h
    if sigma_vox > 0:
        noise = ndi.gaussian_filter(noise, sigma_vox)
    noise /= noise.std()
    np.clip(noise, -3.0, 3.0, out=noise)
    noise *= a

    d_in = ndi.distance_transform_edt(body).astype(np.float32)
    d_out = ndi.distance_transform_edt(~body).astype(np.float32)
    signed = (d_in - d_out) * h
    body_new = (signed + noise) > 0.0

    out = np.where(body_new, MATERIAL, BACKGROUND).astype(np.uint8)
    out[lab == VOID] = VOID
    return labels.with_labels(out)


# ---------------------------------------------------------------------------
# Stage 3: under-extrusion pores along the raster path

def _material_runs(mat: np.ndarray):
    """Contiguous material spans along x for every (y, z) raster row.

    Returns (row_start_flat_index, run_start_x, run_length) arrays over the
    (nz*ny, nx) row-major layout used by the serpentine raster.
    """
    nx = mat.shape[0]
    rows = np.ascontiguousarray(mat.transpose(2, 1, 0)).reshape(-1, nx)
    padded = np.zeros((rows.shape[0], nx + 2), dtype=bool)
    padded[:, 1:-1] = rows
    d = np.diff(padded.astype(np.int8), axis=1)
    r0, x0 = np.nonzero(d == 1)
    r1, x1 = np.nonzero(d == -1)
    return r0, x0, x1 - x0


def apply_underextrusion(labels: LabelVolume, model: DefectModel, seed: int) -> LabelVolume:
    """Insert spherical pores along the serpentine raster through material.

    Pore events arrive as a Poisson process with the model's rate per mm of
    path; radii are uniform in [0.5, 1.5] x the mean pore radius.  Only
    material voxels are relabelled, so the void fraction never decreases.
    """
    rate = model.underextrusion_rate
    if rate == 0.0:
        return labels
    lab = np.array(labels.labels)  # writable copy
    h = labels.spacing_mm
    mat = lab == MATERIAL
    rows, starts, lengths = _material_runs(mat)
    if len(rows) == 0:
        return labels
    rng = np.random.default_rng(seed)
    events = rng.poisson(rate * lengths * h)
    total = int(events.sum())
    if total == 0:
        return labels

    run_of_event = np.repeat(np.arange(len(rows)), events)
    frac = rng.uniform(0.0, 1.0, total)
    radii = model.pore_radius_mm * rng.uniform(0.5, 1.5, total)

    nx, ny, nz = lab.shape
    ex = starts[run_of_event] + frac * lengths[run_of_event]
    row = rows[run_of_event]
    ez = row // ny
    ey = row % ny
    for x, y, z, r in zip(ex, ey, ez, radii):
        rv = r / h
        # x is continuous along the run (voxel centers at i + 0.5); y, z are
        # integer row coordinates.
        i0, i1 = int(max(0, math.floor(x - rv - 0.5))), int(min(nx, math.ceil(x + rv + 0.5) + 1))
        j0, j1 = int(max(0, math.floor(y - rv))), int(min(ny, math.ceil(y + rv) + 1))
        k0, k1 = int(max(0, math.floor(z - rv))), int(min(nz, math.ceil(z + rv) + 1))
        if i0 >= i1 or j0 >= j1 or k0 >= k1:
            continue
        li = (np.arange(i0, i1) + 0.5 - x) ** 2
        lj = (np.arange(j0, j1).astype(float) - y) ** 2
        lk = (np.arange(k0, k1).astype(float) - z) ** 2
        inside = (li[:, None, None] + lj[None, :, None] + lk[None, None, :]) < rv * rv
        region = lab[i0:i1, j0:j1, k0:k1]
        region[inside & (region == MATERIAL)] = VOID
    return labels.with_labels(lab)


# ---------------------------------------------------------------------------
# Composition

def simulate_print(spec: PhantomSpec, settings: PrinterSettings,
                   profile: PrinterProfile, spacing_mm: float,
                   margin_mm: float | None = None) -> tuple[VoxelGrid, LabelVolume]:
    """Voxelize a phantom and run the defect stages for one settings row.

    margin_mm defaults to just enough background padding for the surface
    stage's 3-sigma growth (zero when the profile is defect-free, so a
    zero profile reproduces the voxelize output bit for bit).
    """
    model = defect_model_for(settings, profile)
    if margin_mm is None:
        margin_mm = 3.0 * model.surface_amplitude_mm
        margin_mm = math.ceil(margin_mm / spacing_mm) * spacing_mm
    grid, labels = voxelize(spec, spacing_mm, margin_mm=margin_mm)
    ss = np.random.SeedSequence(settings.seed)
    seed_surface, seed_pores = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    labels = apply_layer_quantization(grid, labels, settings.layer_height_um)
    labels = apply_surface_noise(labels, model, seed_surface)
    labels = apply_underextrusion(labels, model, seed_pores)
    return grid_from_labels(labels, spec.material_mu), labels
