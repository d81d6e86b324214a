"""File formats: raw volumes with text sidecars, phantom/profile files,
slice stacks, and CSV exports.

Volumes are little-endian raw streams (float32 attenuation, uint8 labels)
in x-fastest order, accompanied by a ``<name>.meta`` sidecar of
``key = value`` lines (dims, spacing, origin, units).  Slice stacks are
directories of binary PGM (8/16-bit) or per-slice raw float32 images with
one ``stack.meta`` sidecar; filenames sort into z order.
"""

from __future__ import annotations

import configparser
import csv
import io as _io
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestError
from .grid import LabelVolume, VoxelGrid
from .phantom import CUBE, SPHERE, PhantomSpec, VoidSpec
from .printsim import PrinterProfile
from .segment import DetectabilityReport, VoidDetection
from .xray import ScanGeometry, Sinogram


# ---------------------------------------------------------------------------
# key = value sidecars

def _write_meta(path: Path, entries: dict):
    lines = [f"{k} = {v}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n")


def _read_meta(path: Path) -> dict[str, str]:
    if not path.exists():
        raise IngestError(f"missing sidecar {path}")
    out = {}
    for ln, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise IngestError(f"{path}:{ln}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _triple(text: str, cast=float):
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise IngestError(f"expected 3 values, got {text!r}")
    return tuple(cast(p) for p in parts)


def _fmt_triple(t) -> str:
    return " ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in t)


# ---------------------------------------------------------------------------
# Volumes and label volumes

def write_volume(path: str | Path, grid: VoxelGrid) -> Path:
    """Raw little-endian float32 stream plus a .meta sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid.values.astype("<f4").tofile(path)
    _write_meta(path.with_suffix(path.suffix + ".meta"), {
        "kind": "volume",
        "dtype": "float32_le",
        "dims": _fmt_triple(grid.dims),
        "spacing_mm": repr(grid.spacing_mm),
        "origin_mm": _fmt_triple(grid.origin_mm),
        "value_units": "1/mm",
    })
    return path


def read_volume(path: str | Path) -> VoxelGrid:
    path = Path(path)
    meta = _read_meta(path.with_suffix(path.suffix + ".meta"))
    if meta.get("kind") != "volume":
        raise IngestError(f"{path}: sidecar kind {meta.get('kind')!r} is not 'volume'")
    dims = _triple(meta["dims"], int)
    data = np.fromfile(path, dtype="<f4")
    if data.size != np.prod(dims):
        raise IngestError(f"{path}: {data.size} values, sidecar says {dims}")
    return VoxelGrid(data.reshape(dims), float(meta["spacing_mm"]),
                     _triple(meta["origin_mm"]))


def write_labels(path: str | Path, labels: LabelVolume) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels.labels.astype(np.uint8).tofile(path)
    _write_meta(path.with_suffix(path.suffix + ".meta"), {
        "kind": "labels",
        "dtype": "uint8",
        "dims": _fmt_triple(labels.dims),
        "spacing_mm": repr(labels.spacing_mm),
        "origin_mm": _fmt_triple(labels.origin_mm),
        "codes": "0=background 1=material 2=void",
    })
    return path


def read_labels(path: str | Path) -> LabelVolume:
    path = Path(path)
    meta = _read_meta(path.with_suffix(path.suffix + ".meta"))
    if meta.get("kind") != "labels":
        raise IngestError(f"{path}: sidecar kind {meta.get('kind')!r} is not 'labels'")
    dims = _triple(meta["dims"], int)
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != np.prod(dims):
        raise IngestError(f"{path}: {data.size} values, sidecar says {dims}")
    return LabelVolume(data.reshape(dims), float(meta["spacing_mm"]),
                       _triple(meta["origin_mm"]))


# ---------------------------------------------------------------------------
# Sinograms

def write_sinogram(path: str | Path, sino: Sinogram) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sino.data.astype("<f4").tofile(path)
    entries = {
        "kind": "sinogram",
        "dtype": "float32_le",
        "n_slices": sino.n_slices,
        "n_angles": sino.geometry.n_angles,
        "detector_bins": sino.geometry.detector_bins,
        "detector_pitch_mm": repr(sino.geometry.detector_pitch_mm),
        "beam": sino.geometry.beam,
        "i0_photons": repr(sino.i0_photons),
    }
    if sino.source_dims is not None:
        entries["source_dims"] = _fmt_triple(sino.source_dims)
    if sino.source_origin is not None:
        entries["source_origin_mm"] = _fmt_triple(sino.source_origin)
    _write_meta(path.with_suffix(path.suffix + ".meta"), entries)
    return path


def read_sinogram(path: str | Path) -> Sinogram:
    path = Path(path)
    meta = _read_meta(path.with_suffix(path.suffix + ".meta"))
    if meta.get("kind") != "sinogram":
        raise IngestError(f"{path}: sidecar kind {meta.get('kind')!r} is not 'sinogram'")
    geom = ScanGeometry(int(meta["n_angles"]), int(meta["detector_bins"]),
                        float(meta["detector_pitch_mm"]), meta.get("beam", "parallel"))
    shape = (int(meta["n_slices"]), geom.n_angles, geom.detector_bins)
    data = np.fromfile(path, dtype="<f4")
    if data.size != np.prod(shape):
        raise IngestError(f"{path}: {data.size} values, sidecar says {shape}")
    src_dims = _triple(meta["source_dims"], int) if "source_dims" in meta else None
    src_orig = _triple(meta["source_origin_mm"]) if "source_origin_mm" in meta else None
    return Sinogram(data.reshape(shape), geom, float(meta.get("i0_photons", 0.0)),
                    src_dims, src_orig)


# ---------------------------------------------------------------------------
# Phantom spec files: header keys + one void per line

def write_phantom_spec(path: str | Path, spec: PhantomSpec) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    buf.write("# printct phantom\n")
    buf.write(f"outer_dims_mm = {_fmt_triple(spec.outer_dims_mm)}\n")
    buf.write(f"material_mu = {spec.material_mu!r}\n")
    if spec.label:
        buf.write(f"label = {spec.label}\n")
    for v in spec.voids:
        buf.write(f"void {v.shape} {v.size_mm!r} {_fmt_triple(v.center_mm)}\n")
    path.write_text(buf.getvalue())
    return path


def read_phantom_spec(path: str | Path) -> PhantomSpec:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"missing phantom file {path}")
    dims = mu = None
    label = ""
    voids = []
    for ln, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("void "):
            parts = line.split()
            if len(parts) != 6 or parts[1] not in (CUBE, SPHERE):
                raise IngestError(f"{path}:{ln}: bad void record {raw!r}")
            voids.append(VoidSpec(parts[1], float(parts[2]),
                                  tuple(float(p) for p in parts[3:6])))
        elif "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            if k == "outer_dims_mm":
                dims = _triple(v)
            elif k == "material_mu":
                mu = float(v)
            elif k == "label":
                label = v
            else:
                raise IngestError(f"{path}:{ln}: unknown key {k!r}")
        else:
            raise IngestError(f"{path}:{ln}: cannot parse {raw!r}")
    if dims is None or mu is None:
        raise IngestError(f"{path}: outer_dims_mm and material_mu are required")
    return PhantomSpec(dims, tuple(voids), material_mu=mu, label=label)


# ---------------------------------------------------------------------------
# Printer profile files (INI, one section per profile)

_PROFILE_FIELDS = ("amplitude_base_mm", "amplitude_per_mm_layer", "correlation_mm",
                   "rate_base_per_mm", "rate_per_speed", "pore_radius_mm")


def read_profiles(path: str | Path) -> dict[str, PrinterProfile]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"missing profile file {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    out = {}
    for name in cp.sections():
        kwargs = {}
        for key, val in cp[name].items():
            if key not in _PROFILE_FIELDS:
                raise ConfigError(f"{path}: profile {name!r} has unknown key {key!r}")
            kwargs[key] = float(val)
        out[name] = PrinterProfile(name, **kwargs)
    return out


def write_profiles(path: str | Path, profiles: dict[str, PrinterProfile]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cp = configparser.ConfigParser()
    for name, p in profiles.items():
        cp[name] = {f: repr(getattr(p, f)) for f in _PROFILE_FIELDS}
    with path.open("w") as fh:
        cp.write(fh)
    return path


# ---------------------------------------------------------------------------
# Slice stacks (PGM 8/16-bit or raw float32 slices + one sidecar)

_PGM_HEADER = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s", re.S)


def _write_pgm(path: Path, img: np.ndarray, maxval: int):
    ny, nx = img.shape  # PGM stores width x height = nx x ny
    dtype = ">u2" if maxval > 255 else "u1"
    with path.open("wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n{maxval}\n".encode())
        fh.write(np.ascontiguousarray(img.astype(dtype)).tobytes())


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    blob = path.read_bytes()
    m = _PGM_HEADER.match(blob)
    if not m:
        raise IngestError(f"{path}: not a binary PGM (P5) file")
    nx, ny, maxval = (int(m.group(i)) for i in (1, 2, 3))
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(blob[m.end():], dtype=dtype)
    if data.size != nx * ny:
        raise IngestError(f"{path}: truncated pixel data")
    return data.reshape(ny, nx).astype(np.uint16), maxval


def export_stack(grid: VoxelGrid, outdir: str | Path, fmt: str = "pgm16") -> Path:
    """Write one image per z-slice plus a stack.meta sidecar.

    fmt: pgm8 | pgm16 (gray values quantized, scale recorded in the
    sidecar) or raw32 (exact float32 round-trip).
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    nx, ny, nz = grid.dims
    vmax = float(grid.values.max())
    if fmt in ("pgm8", "pgm16"):
        maxval = 255 if fmt == "pgm8" else 65535
        scale = vmax / maxval if vmax > 0 else 1.0
        for k in range(nz):
            # slice stored row-major as (ny, nx)
            img = np.round(grid.values[:, :, k].T / scale if vmax > 0
                           else np.zeros((ny, nx))).astype(np.uint16)
            _write_pgm(outdir / f"slice_{k:05d}.pgm", img, maxval)
        depth = 8 if fmt == "pgm8" else 16
        ext = "pgm"
    elif fmt == "raw32":
        scale = 1.0
        depth = 32
        ext = "raw"
        for k in range(nz):
            grid.values[:, :, k].T.astype("<f4").tofile(outdir / f"slice_{k:05d}.raw")
    else:
        raise ConfigError(f"unknown stack format {fmt!r}")
    _write_meta(outdir / "stack.meta", {
        "kind": "stack",
        "format": ext,
        "bit_depth": depth,
        "nx": nx, "ny": ny, "n_slices": nz,
        "spacing_mm": repr(grid.spacing_mm),
        "origin_mm": _fmt_triple(grid.origin_mm),
        "mu_per_unit": repr(scale),
    })
    return outdir


def ingest_stack(path: str | Path, sidecar: str | Path | None = None) -> VoxelGrid:
    """Read a slice stack directory into a grid (1/mm via the sidecar scale).

    Slices are taken in ascending filename order; every slice must share
    dims and bit depth or the offending file is named.
    """
    root = Path(path)
    if not root.is_dir():
        raise IngestError(f"{root} is not a directory")
    meta = _read_meta(Path(sidecar) if sidecar else root / "stack.meta")
    fmt = meta.get("format", "pgm")
    scale = float(meta.get("mu_per_unit", 1.0))
    spacing = float(meta["spacing_mm"])
    origin = _triple(meta.get("origin_mm", "0 0 0"))
    files = sorted(p for p in root.iterdir()
                   if p.suffix.lstrip(".") == fmt and p.name != "stack.meta")
    if not files:
        raise IngestError(f"{root}: no .{fmt} slices found")
    n_meta = meta.get("n_slices")
    if n_meta is not None and int(n_meta) != len(files):
        raise IngestError(f"{root}: sidecar lists {n_meta} slices, found {len(files)}")

    slices = []
    shape0 = depth0 = None
    for f in files:
        if fmt == "pgm":
            img, maxval = _read_pgm(f)
            depth = 8 if maxval <= 255 else 16
            if maxval not in (255, 65535):
                raise IngestError(f"{f}: unsupported bit depth (maxval {maxval})")
        elif fmt == "raw":
            nx, ny = int(meta["nx"]), int(meta["ny"])
            img = np.fromfile(f, dtype="<f4")
            if img.size != nx * ny:
                raise IngestError(f"{f}: expected {nx * ny} float32 values, got {img.size}")
            img = img.reshape(ny, nx)
            depth = 32
        else:
            raise IngestError(f"{root}: unsupported stack format {fmt!r}")
        if shape0 is None:
            shape0, depth0 = img.shape, depth
        elif img.shape != shape0:
            raise IngestError(
                f"{f}: slice dims {img.shape[::-1]} differ from first slice {shape0[::-1]}")
        elif depth != depth0:
            raise IngestError(f"{f}: bit depth {depth} differs from first slice {depth0}")
        slices.append(img)
    vol = np.stack(slices, axis=-1).transpose(1, 0, 2).astype(np.float32) * scale
    return VoxelGrid(vol, spacing, origin)


# ---------------------------------------------------------------------------
# CSV exports

def write_voids_csv(path: str | Path, found: list[VoidDetection],
                    report: DetectabilityReport | None = None) -> Path:
    """One row per detected void; truth columns filled when a report is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matched = {}
    if report is not None:
        for m in report.matches:
            if m.detection_index is not None:
                matched[m.detection_index] = m
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cx_mm", "cy_mm", "cz_mm", "volume_mm3", "equivalent_size_mm",
                    "voxels", "matched_truth_shape", "matched_truth_size_mm",
                    "centroid_error_mm"])
        for i, d in enumerate(found):
            m = matched.get(i)
            w.writerow([f"{c:.6g}" for c in d.centroid_mm]
                       + [f"{d.volume_mm3:.6g}", f"{d.equivalent_size_mm:.6g}",
                          d.voxel_count]
                       + ([m.truth.shape, f"{m.truth.size_mm:.6g}",
                           f"{m.centroid_error_mm:.6g}"] if m else ["", "", ""]))
    return path
