"""Command-line interface.

Exit codes: 0 success, 2 configuration/usage errors, 3 stage failures
inside a run, 4 file I/O problems.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import io as pio
from .errors import ConfigError, IngestError, PrintCTError, StageError
from .fbp import FilterSpec, reconstruct_volume
from .metrology import METRICS, PLANES, MetricsReport, SmoothingSpec, rank_settings
from .pipeline import (DEFAULT_MATCH_RADIUS_MM, DEFAULT_TARGETS, PipelineConfig,
                       analyze_labels, emit_report, load_config, rankings_for,
                       run_pipeline, sample_spec)
from .phantom import designed_porosity, voxelize
from .printsim import get_profile, settings_table, simulate_print
from .segment import otsu_threshold, segment
from .xray import ScanGeometry, add_photon_noise, geometry_for, project_volume

EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_IO = 4


def _spec_from_args(args):
    if args.spec:
        return pio.read_phantom_spec(args.spec)
    target = args.target_porosity
    if target is None:
        target = DEFAULT_TARGETS[args.sample]
    return sample_spec(args.sample, target)


def cmd_phantom(args) -> int:
    spec = _spec_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pio.write_phantom_spec(out / "phantom.txt", spec)
    print(f"{spec.label or 'phantom'}: {len(spec.voids)} voids, "
          f"designed porosity {100 * designed_porosity(spec):.2f}%")
    if args.voxelize:
        grid, labels = voxelize(spec, args.spacing, margin_mm=args.margin)
        pio.write_volume(out / "truth.raw", grid)
        pio.write_labels(out / "truth_labels.raw", labels)
        print(f"voxelized {grid.dims} at {args.spacing} mm -> {out}")
    return 0


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    profiles = pio.read_profiles(args.profile_file) if args.profile_file else None
    profile = get_profile(args.profile, profiles)
    table = settings_table()
    if not 1 <= args.setting <= len(table):
        raise ConfigError(f"--setting must be 1..{len(table)}")
    settings = replace(table[args.setting - 1], seed=args.seed)
    grid, labels = simulate_print(spec, settings, profile, args.spacing,
                                  margin_mm=args.margin)
    out = Path(args.out)
    pio.write_volume(out / "printed.raw", grid)
    pio.write_labels(out / "printed_labels.raw", labels)
    pio.write_phantom_spec(out / "phantom.txt", spec)
    print(f"simulated print {grid.dims} -> {out}")
    return 0


def cmd_scan(args) -> int:
    grid = pio.read_volume(args.volume)
    geometry = geometry_for(grid, args.views, args.pitch)
    sino = project_volume(grid, geometry)
    if args.i0 > 0:
        sino = add_photon_noise(sino, args.i0, args.seed)
    pio.write_sinogram(Path(args.out), sino)
    print(f"scanned {sino.n_slices} slices x {geometry.n_angles} views "
          f"x {geometry.detector_bins} bins -> {args.out}")
    return 0


def cmd_recon(args) -> int:
    sino = pio.read_sinogram(args.sino)
    spec = FilterSpec(args.filter, args.cutoff)
    dims = tuple(args.dims) if args.dims else None
    grid = reconstruct_volume(sino, spec, dims)
    pio.write_volume(Path(args.out), grid)
    print(f"reconstructed {grid.dims} -> {args.out}")
    return 0


def cmd_analyze(args) -> int:
    grid = pio.read_volume(args.volume)
    spec = pio.read_phantom_spec(args.truth)
    margin = -grid.origin_mm[0]
    _, reference = voxelize(spec, grid.spacing_mm, margin_mm=margin)
    seg = segment(grid, otsu_threshold(grid))
    smoothing = SmoothingSpec(args.radius, args.exclusion)
    report, detect, found, _ = analyze_labels(
        seg, reference, spec, smoothing, args.printer, args.setting,
        args.match_radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report([report], rankings_for([report]), out)
    pio.write_voids_csv(out / "voids.csv", found, detect)
    print(f"porosity {report.porosity_pct:.2f}% (designed "
          f"{100 * designed_porosity(spec):.2f}%), "
          f"cusp XY {report.cusp_density_xy:.3f}%, detection rate "
          f"{100 * detect.detection_rate:.0f}% -> {out}")
    return 0


def cmd_rank(args) -> int:
    import csv
    rows = []
    with open(args.metrics, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    wanted = [r for r in rows if r["metric"] == args.metric
              and (not r["plane"] or r["plane"] == args.plane)]
    if not wanted:
        raise ConfigError(f"no rows for metric {args.metric!r} in {args.metrics}")
    reports = []
    for r in wanted:
        kwargs = {"printer_id": r["printer"], "setting_id": r["setting"]}
        if args.metric == "porosity":
            kwargs["porosity_pct"] = float(r["value"])
        else:
            kwargs[f"{args.metric}_{args.plane.lower()}"] = float(r["value"])
        reports.append(MetricsReport(**kwargs))
    best = rank_settings(reports, args.metric, args.plane)
    for printer, setting, value in best:
        print(f"{printer}: {setting} ({value:.6g})")
    return 0


def cmd_report(args) -> int:
    import csv
    by_key: dict[tuple, dict] = {}
    with open(args.metrics, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["printer"], row["setting"])
            entry = by_key.setdefault(key, {})
            metric = row["metric"]
            if metric in ("cusp_density", "roughness"):
                entry[f"{metric}_{row['plane'].lower()}"] = float(row["value"])
            elif metric == "porosity":
                entry["porosity_pct"] = float(row["value"])
    if not by_key:
        raise ConfigError(f"no metric rows in {args.metrics}")
    reports = [MetricsReport(printer_id=k[0], setting_id=k[1], **v)
               for k, v in by_key.items()]
    files = emit_report(reports, rankings_for(reports), Path(args.out))
    print(f"wrote {len(files)} report files -> {args.out}")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.out:
        config = replace(config, outdir=args.out)
    if args.jobs:
        config = replace(config, jobs=args.jobs)
    manifest = run_pipeline(config)
    print(f"{len(manifest['analyses'])} analyses -> {config.outdir} "
          f"({len(manifest['files'])} files in manifest)")
    return 0


def _add_spec_args(p):
    p.add_argument("--sample", type=int, choices=(1, 2), default=1)
    p.add_argument("--spec", help="phantom spec file (overrides --sample)")
    p.add_argument("--target-porosity", type=float, default=None)
    p.add_argument("--spacing", type=float, default=0.05, help="voxel pitch, mm")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="printct",
        description="Synthetic CT metrology pipeline for 3D-print quality")
    ap.add_argument("--version", action="version", version=f"printct {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="build a phantom spec (and optionally voxelize)")
    _add_spec_args(p)
    p.add_argument("--margin", type=float, default=0.0, help="background pad, mm")
    p.add_argument("--voxelize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("simulate", help="simulate an as-printed volume")
    _add_spec_args(p)
    p.add_argument("--setting", type=int, default=1, help="settings row, 1-based")
    p.add_argument("--profile", default="default")
    p.add_argument("--profile-file")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("scan", help="forward-project a volume into a sinogram")
    p.add_argument("--volume", required=True)
    p.add_argument("--views", type=int, default=720)
    p.add_argument("--pitch", type=float, default=None)
    p.add_argument("--i0", type=float, default=0.0, help="photons/ray; 0 = noise-free")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_scan)

    p = sub.add_parser("recon", help="filtered back projection")
    p.add_argument("--sino", required=True)
    p.add_argument("--filter", choices=("ramp", "ramp_hann"), default="ramp")
    p.add_argument("--cutoff", type=float, default=1.0)
    p.add_argument("--dims", type=int, nargs=2, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_recon)

    p = sub.add_parser("analyze", help="segment a volume and measure it")
    p.add_argument("--volume", required=True)
    p.add_argument("--truth", required=True, help="phantom spec file")
    p.add_argument("--printer", default="printer")
    p.add_argument("--setting", default="setting1")
    p.add_argument("--radius", type=int, default=3, help="cusp structuring radius, vox")
    p.add_argument("--exclusion", type=float, default=0.25,
                   help="void exclusion radius, mm")
    p.add_argument("--match-radius", type=float, default=DEFAULT_MATCH_RADIUS_MM)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("rank", help="best setting per printer from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--metric", choices=METRICS, default="cusp_density")
    p.add_argument("--plane", choices=PLANES, default="XY")
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("report", help="CSV + charts from a metrics CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (IngestError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PrintCTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
