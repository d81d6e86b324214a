"""End-to-end orchestration: configs, synthetic runs, ingest runs, reports.

A synthetic run walks phantom -> print simulation -> projection ->
(optional noise) -> FBP -> segmentation -> metrics for every
(sample, printer, setting, seed) combination, writes per-analysis
artifacts into their own subdirectories, and finishes with a manifest
listing every output file with a content hash.  Identical configs and
seeds produce byte-identical CSV outputs.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from .errors import ConfigError, StageError
from .fbp import FilterSpec, reconstruct_volume
from .grid import LabelVolume, VoxelGrid
from .metrology import (CUSP_DENSITY, PLANES, POROSITY, ROUGHNESS, XY, XZ,
                        MetricsReport, SmoothingSpec, align, cusp_density,
                        porosity, rank_settings, roughness)
from .phantom import PhantomSpec, designed_porosity, sample1_spec, sample2_spec, voxelize
from .printsim import (BUILTIN_PROFILES, PrinterProfile, PrinterSettings,
                       get_profile, settings_table, simulate_print)
from .segment import (extract_voids, otsu_threshold, score_detectability,
                      segment)
from .xray import add_photon_noise, geometry_for, project_volume

SYNTHETIC = "synthetic"
INGEST = "ingest"

DEFAULT_TARGETS = {1: 0.145, 2: 0.148}
DEFAULT_MATCH_RADIUS_MM = 0.2


@dataclass(frozen=True)
class PrinterPlan:
    """One simulated printer: a defect profile plus the settings it runs."""
    printer_id: str
    profile: str
    settings: tuple[int, ...]  # 1-based indices into settings_table()


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = SYNTHETIC
    samples: tuple[int | str, ...] = (1, 2)  # built-in 1|2 or phantom file path
    printers: tuple[PrinterPlan, ...] = ()
    seeds: tuple[int, ...] = (1,)
    spacing_mm: float = 0.05
    margin_mm: float | None = None      # None: auto per printer profile
    n_angles: int = 720
    noise_i0: float = 0.0               # 0 disables photon noise
    filter_spec: FilterSpec = FilterSpec()
    smoothing: SmoothingSpec = SmoothingSpec()
    match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM
    outdir: str = "printct_run"
    save_volumes: bool = False
    jobs: int = 1
    profile_file: str | None = None
    # ingest mode
    stack_dir: str | None = None
    reference_phantom: str | None = None
    targets: tuple[tuple[int, float], ...] = tuple(DEFAULT_TARGETS.items())

    def target_for(self, sample: int) -> float:
        for s, t in self.targets:
            if s == sample:
                return t
        raise ConfigError(f"no porosity target for sample {sample}")


def load_config(path: str | Path) -> PipelineConfig:
    """Read the documented INI config (see README for the schema)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing config file {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    try:
        run = cp["run"]
        kwargs: dict = {
            "mode": run.get("mode", SYNTHETIC),
            "outdir": run.get("out", "printct_run"),
            "spacing_mm": run.getfloat("spacing_mm", 0.05),
            "jobs": run.getint("jobs", 1),
            "save_volumes": run.getboolean("save_volumes", False),
        }
        if kwargs["mode"] not in (SYNTHETIC, INGEST):
            raise ConfigError(f"unknown mode {kwargs['mode']!r}")
        if "samples" in run:
            kwargs["samples"] = tuple(
                int(s) if s.isdigit() else s for s in run["samples"].split())
        if "seeds" in run:
            kwargs["seeds"] = tuple(int(s) for s in run["seeds"].split())
        if "margin_mm" in run:
            kwargs["margin_mm"] = run.getfloat("margin_mm")
        if "profile_file" in run:
            kwargs["profile_file"] = run["profile_file"]
        if "stack_dir" in run:
            kwargs["stack_dir"] = run["stack_dir"]
        if "reference_phantom" in run:
            kwargs["reference_phantom"] = run["reference_phantom"]
        if "match_radius_mm" in run:
            kwargs["match_radius_mm"] = run.getfloat("match_radius_mm")
        if cp.has_section("scan"):
            kwargs["n_angles"] = cp["scan"].getint("n_angles", 720)
            kwargs["noise_i0"] = cp["scan"].getfloat("noise_i0", 0.0)
        if cp.has_section("filter"):
            kwargs["filter_spec"] = FilterSpec(
                cp["filter"].get("kind", "ramp"),
                cp["filter"].getfloat("cutoff", 1.0))
        if cp.has_section("smoothing"):
            kwargs["smoothing"] = SmoothingSpec(
                cp["smoothing"].getint("structuring_radius_vox", 3),
                cp["smoothing"].getfloat("void_exclusion_mm", 0.25))
        printers = []
        for sec in cp.sections():
            m = re.fullmatch(r"printer:(.+)", sec)
            if not m:
                continue
            printers.append(PrinterPlan(
                m.group(1),
                cp[sec].get("profile", m.group(1)),
                tuple(int(s) for s in cp[sec].get("settings", "1").split())))
        if printers:
            kwargs["printers"] = tuple(printers)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return PipelineConfig(**kwargs)


def sample_spec(sample: int | str, target: float | None = None) -> PhantomSpec:
    """Built-in sample (1 or 2) at its porosity target, or a phantom file."""
    if sample == 1:
        return sample1_spec(DEFAULT_TARGETS[1] if target is None else target)
    if sample == 2:
        return sample2_spec(DEFAULT_TARGETS[2] if target is None else target)
    if isinstance(sample, str):
        return pio.read_phantom_spec(sample)
    raise ConfigError(f"sample must be 1, 2 or a phantom file, got {sample!r}")


@dataclass(frozen=True)
class AnalysisResult:
    analysis_id: str
    sample: int | str
    printer_id: str
    setting_id: str
    seed: int
    designed_porosity_pct: float
    report: MetricsReport
    detect_rate: float
    files: tuple[str, ...]


def _profiles(config: PipelineConfig) -> dict[str, PrinterProfile]:
    table = dict(BUILTIN_PROFILES)
    if config.profile_file:
        table.update(pio.read_profiles(config.profile_file))
    return table


def _stage(name: str, analysis: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, analysis, exc) from exc


def analyze_labels(labels: LabelVolume, reference: LabelVolume,
                   truth: PhantomSpec, smoothing: SmoothingSpec,
                   printer_id: str, setting_id: str,
                   match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM):
    """Metrics + detectability of a segmented volume against its truth."""
    registered, _ = align(labels, reference)
    found = extract_voids(registered)
    detect = score_detectability(found, truth, match_radius_mm)
    hist = tuple((b.lo_mm, b.n_detected) for b in detect.bins)
    report_kwargs = dict(
        printer_id=printer_id, setting_id=setting_id,
        cusp_density_xy=cusp_density(registered, XY, smoothing),
        cusp_density_xz=cusp_density(registered, XZ, smoothing),
        roughness_xy=roughness(registered, reference, XY, smoothing),
        roughness_xz=roughness(registered, reference, XZ, smoothing),
        porosity_pct=porosity(registered),
        void_histogram=hist,
    )
    return MetricsReport(**report_kwargs), detect, found, registered


def run_analysis(config: PipelineConfig, sample: int | str, plan: PrinterPlan,
                 setting_index: int, seed: int) -> AnalysisResult:
    """One synthetic (sample, printer, setting, seed) analysis."""
    name = f"sample{sample}" if isinstance(sample, int) else Path(sample).stem
    aid = f"{name}_{plan.printer_id}_set{setting_index}_seed{seed}"
    profiles = _profiles(config)
    profile = get_profile(plan.profile, profiles)
    table = settings_table()
    if not 1 <= setting_index <= len(table):
        raise ConfigError(f"setting index {setting_index} outside 1..{len(table)}")
    settings = replace(table[setting_index - 1], seed=seed)

    target = config.target_for(sample) if isinstance(sample, int) else None
    spec = _stage("phantom", aid, sample_spec, sample, target)
    margin = config.margin_mm
    if margin is None:
        # room for surface growth plus a background ring for segmentation
        margin = 4 * config.spacing_mm + 3 * profile.amplitude_base_mm \
            + 3 * profile.amplitude_per_mm_layer * 0.07
    grid, printed = _stage("simulate", aid, simulate_print, spec, settings,
                           profile, config.spacing_mm, margin_mm=margin)
    _, reference = _stage("voxelize-reference", aid, voxelize, spec,
                          config.spacing_mm, margin)

    geometry = geometry_for(grid, config.n_angles)
    sino = _stage("scan", aid, project_volume, grid, geometry)
    if config.noise_i0 > 0:
        sino = _stage("noise", aid, add_photon_noise, sino, config.noise_i0, seed)
    recon = _stage("recon", aid, reconstruct_volume, sino, config.filter_spec)
    thr = _stage("segment", aid, otsu_threshold, recon)
    seg = _stage("segment", aid, segment, recon, thr)
    report, detect, found, registered = _stage(
        "metrics", aid, analyze_labels, seg, reference, spec,
        config.smoothing, plan.printer_id, f"setting{setting_index}",
        config.match_radius_mm)

    outdir = Path(config.outdir) / aid
    outdir.mkdir(parents=True, exist_ok=True)
    files = [pio.write_voids_csv(outdir / "voids.csv", found, detect)]
    if config.save_volumes:
        files.append(pio.write_volume(outdir / "printed.raw", grid))
        files.append(pio.write_labels(outdir / "printed_labels.raw", printed))
        files.append(pio.write_sinogram(outdir / "scan.raw", sino))
        files.append(pio.write_volume(outdir / "recon.raw", recon))
        files.append(pio.write_labels(outdir / "segmented.raw", registered))
    rel = tuple(str(f.relative_to(config.outdir)) for f in files)
    return AnalysisResult(aid, sample, plan.printer_id, f"setting{setting_index}",
                          seed, 100.0 * designed_porosity(spec), report,
                          detect.detection_rate, rel)


def _run_task(args):
    config, sample, plan, setting, seed = args
    return run_analysis(config, sample, plan, setting, seed)


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute every configured analysis and write reports plus a manifest."""
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if config.mode == SYNTHETIC:
        printers = config.printers or (
            PrinterPlan("printer", "default", tuple(range(1, 7))),)
        tasks = [(config, s, plan, idx, seed)
                 for s in config.samples
                 for plan in printers
                 for idx in plan.settings
                 for seed in config.seeds]
        if config.jobs > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                results = list(pool.map(_run_task, tasks))
        else:
            results = [_run_task(t) for t in tasks]
    elif config.mode == INGEST:
        results = [run_ingest_analysis(config)]
    else:
        raise ConfigError(f"unknown mode {config.mode!r}")

    reports = [r.report for r in results]
    files = [str(f) for r in results for f in r.files]
    files += [str(p.relative_to(outdir)) for p in
              emit_report(reports, rankings_for(reports), outdir,
                          extra_rows=results)]
    manifest = {
        "tool": {"name": "printct", "version": __version__},
        "config": _config_echo(config),
        "analyses": [r.analysis_id for r in results],
        "files": {f: _sha256(outdir / f) for f in sorted(files)},
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def run_ingest_analysis(config: PipelineConfig) -> AnalysisResult:
    """Ingest a scanned slice stack and measure it (reference optional)."""
    if not config.stack_dir:
        raise ConfigError("ingest mode requires stack_dir")
    aid = "ingest_" + Path(config.stack_dir).name
    grid = _stage("ingest", aid, pio.ingest_stack, config.stack_dir)
    thr = _stage("segment", aid, otsu_threshold, grid)
    seg = _stage("segment", aid, segment, grid, thr)
    found = extract_voids(seg)
    outdir = Path(config.outdir) / aid
    outdir.mkdir(parents=True, exist_ok=True)
    designed = 0.0
    if config.reference_phantom:
        spec = pio.read_phantom_spec(config.reference_phantom)
        _, reference = voxelize(spec, grid.spacing_mm,
                                margin_mm=-float(grid.origin_mm[0]))
        if reference.dims != seg.dims:
            raise ConfigError(
                f"reference phantom rasterizes to {reference.dims}, stack is {seg.dims}; "
                "check spacing/margin")
        report, detect, found, _ = _stage(
            "metrics", aid, analyze_labels, seg, reference, spec,
            config.smoothing, aid, "scan", config.match_radius_mm)
        designed = 100.0 * designed_porosity(spec)
        rate = detect.detection_rate
        files = [pio.write_voids_csv(outdir / "voids.csv", found, detect)]
    else:
        report = MetricsReport(printer_id=aid, setting_id="scan",
                               porosity_pct=porosity(seg))
        rate = 0.0
        files = [pio.write_voids_csv(outdir / "voids.csv", found)]
    rel = tuple(str(f.relative_to(config.outdir)) for f in files)
    return AnalysisResult(aid, 0, aid, "scan", 0, designed, report, rate, rel)


def rankings_for(reports: list[MetricsReport]):
    """(metric, plane) -> rank_settings rows, for every ranked table."""
    out = {}
    for metric in (CUSP_DENSITY, ROUGHNESS):
        for plane in PLANES:
            out[(metric, plane)] = rank_settings(reports, metric, plane)
    out[(POROSITY, XY)] = rank_settings(reports, POROSITY, XY)
    return out


def emit_report(reports: list[MetricsReport], rankings, outdir: str | Path,
                extra_rows=None) -> list[Path]:
    """Write the metrics CSV, ranking CSVs and charts; refuses empty input."""
    if not reports:
        raise ValueError("emit_report called with no reports")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    import csv

    files = []
    metrics_csv = outdir / "metrics.csv"
    by_result = {id(r.report): r for r in (extra_rows or [])}
    with metrics_csv.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["printer", "setting", "plane", "metric", "value"])
        for r in reports:
            for metric, plane in ((CUSP_DENSITY, XY), (CUSP_DENSITY, XZ),
                                  (ROUGHNESS, XY), (ROUGHNESS, XZ)):
                w.writerow([r.printer_id, r.setting_id, plane, metric,
                            f"{r.metric(metric, plane):.6g}"])
            w.writerow([r.printer_id, r.setting_id, "", POROSITY,
                        f"{r.porosity_pct:.6g}"])
            res = by_result.get(id(r))
            if res is not None:
                w.writerow([r.printer_id, r.setting_id, "", "designed_porosity",
                            f"{res.designed_porosity_pct:.6g}"])
                w.writerow([r.printer_id, r.setting_id, "", "detection_rate",
                            f"{res.detect_rate:.6g}"])
    files.append(metrics_csv)

    rank_csv = outdir / "rankings.csv"
    with rank_csv.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "plane", "printer", "best_setting", "value"])
        for (metric, plane), rows in rankings.items():
            for printer, setting, value in rows:
                w.writerow([metric, plane, printer, setting, f"{value:.6g}"])
    files.append(rank_csv)
    files += _charts(reports, outdir)
    return files


def _charts(reports: list[MetricsReport], outdir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    # deterministic SVG output: stable element ids, no embedded date
    matplotlib.rcParams["svg.hashsalt"] = "printct"
    import matplotlib.pyplot as plt

    files = []
    labels = [f"{r.printer_id}\n{r.setting_id}" for r in reports]
    x = np.arange(len(reports))

    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(reports)), 4))
    ax.bar(x, [r.porosity_pct for r in reports], color="#4878a8")
    ax.set_xticks(x, labels, rotation=90, fontsize=7)
    ax.set_ylabel("porosity [%]")
    ax.set_title("Measured porosity per printer / setting")
    fig.tight_layout()
    p = outdir / "porosity.svg"
    fig.savefig(p, metadata={"Date": None})
    plt.close(fig)
    files.append(p)

    for metric in (CUSP_DENSITY, ROUGHNESS):
        fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(reports)), 4))
        for plane, marker in ((XY, "o"), (XZ, "s")):
            ax.plot(x, [r.metric(metric, plane) for r in reports],
                    marker=marker, label=plane)
        ax.set_xticks(x, labels, rotation=90, fontsize=7)
        ax.set_ylabel(metric)
        ax.legend()
        ax.set_title(f"{metric} per printer / setting")
        fig.tight_layout()
        p = outdir / f"{metric}.svg"
        fig.savefig(p, metadata={"Date": None})
        plt.close(fig)
        files.append(p)
    return files


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _config_echo(config: PipelineConfig) -> dict:
    def enc(v):
        if isinstance(v, (FilterSpec, SmoothingSpec, PrinterPlan)):
            return vars(v).copy()
        if isinstance(v, tuple):
            return [enc(x) for x in v]
        return v
    return {k: enc(v) for k, v in vars(config).items()}
