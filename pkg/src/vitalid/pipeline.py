"""End-to-end orchestration: load records, extract features, evaluate.

The feature CSV layout (version 1) is frozen: seven metadata columns, then
the feature columns named by vector element.  Changing names or order is a
breaking format change and must bump FEATURE_CSV_VERSION.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .classifiers import LabeledDataset, default_grid, grid_search, method_spec
from .config import PipelineConfig, reproducibility_header
from .errors import ExtractionError, InputError, VitalidError
from .evaluation import EvalReport, cross_validate, write_report_files
from .heartbeat import build_mel_bank, hb_feature, mel_energies, mfcc
from .io import ComplexSeries, SegmentMeta, load_cw_record, load_fmcw_cube, resample
from .io import save_cw_record, segment
from .respiration import resp_statistics, window_fits
from .signals import beamform, phase_demodulate, range_fft, second_difference
from .signals import select_target_bin, stft
from .synth import synth_population, write_dataset

log = logging.getLogger("vitalid")

FEATURE_CSV_VERSION = 1
META_COLUMNS = (
    "subject_id",
    "session_id",
    "day_index",
    "segment_index",
    "start_time",
    "duration",
    "source",
)

FAILURE_RATE_LIMIT = 0.10  # above this fraction the run is considered failed

_RESP_COLUMNS = tuple(
    "q%d_%s" % (i + 1, s) for i in range(6) for s in ("mean", "std", "skew", "kurt")
)
_HB_COLUMNS = tuple("cm%02d" % k for k in range(23, -1, -1)) + tuple(
    "cp%02d" % k for k in range(24)
)
FEATURE_COLUMNS = {
    "resp": _RESP_COLUMNS,
    "hb": _HB_COLUMNS,
    "prop": _RESP_COLUMNS + _HB_COLUMNS,
}
FEATURE_DIMS = {"resp": 24, "hb": 48, "prop": 72}


# ---------------------------------------------------------------- loading


def _read_manifest(path: str, cfg: PipelineConfig) -> list[dict]:
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "file" not in reader.fieldnames:
            raise InputError("manifest %s needs at least a 'file' column" % path)
        for i, raw in enumerate(reader):
            name = raw["file"].strip()
            rows.append(
                {
                    "path": os.path.join(base, name),
                    "subject_id": (raw.get("subject_id") or "unknown").strip(),
                    "session_id": (raw.get("session_id") or "s0").strip(),
                    "day_index": int(raw.get("day_index") or 0),
                    "segment_index": int(raw.get("segment_index") or i),
                    "rate_hz": float(raw.get("rate_hz") or cfg.record_rate_hz),
                }
            )
    if not rows:
        raise InputError("manifest %s lists no records" % path)
    return rows


def _cube_to_series(path: str, cfg: PipelineConfig) -> tuple[ComplexSeries, float]:
    """FMCW cube file -> target-bin slow-time series and its wavelength."""
    cube = load_fmcw_cube(path)
    profiles = range_fft(cube)
    target = select_target_bin(profiles, cube.params)
    _, bin_series = beamform(profiles, cube.params)
    samples = bin_series(target.range_index, target.angle_index)
    series = ComplexSeries(samples=samples, rate=cube.params.slow_time_rate)
    log.info(
        "%s: target bin range=%.2f m angle=%.1f deg",
        os.path.basename(path),
        target.range_m,
        target.angle_deg,
    )
    return series, cube.params.wavelength


def load_records(cfg: PipelineConfig):
    """Resolve the configured source into labeled full-length records.

    Returns (records, wavelength) where records is a list of
    (ComplexSeries, SegmentMeta); synth records are segment-length already.
    """
    wavelength = cfg.wavelength_m
    records: list[tuple[ComplexSeries, SegmentMeta]] = []
    if cfg.source == "synth":
        segs = synth_population(
            cfg.synth_subjects,
            cfg.synth_segments,
            cfg.synth_duration,
            fs=cfg.synth_rate_hz,
            snr_db=cfg.synth_snr_db,
            seed=cfg.synth_seed,
        )
        records = [(s.series, s.meta) for s in segs]
    elif cfg.source == "cw":
        for row in _iter_source_rows(cfg):
            series = load_cw_record(row["path"], row["rate_hz"])
            records.append((series, _row_meta(row, series)))
    else:  # fmcw
        for row in _iter_source_rows(cfg):
            series, wavelength = _cube_to_series(row["path"], cfg)
            records.append((series, _row_meta(row, series)))
    if cfg.target_rate_hz > 0:
        records = [
            (resample(series, cfg.target_rate_hz), meta) for series, meta in records
        ]
    return records, wavelength


def _iter_source_rows(cfg: PipelineConfig) -> list[dict]:
    path = cfg.data_path
    if not path:
        raise InputError("data_path is required for source %r" % cfg.source)
    if os.path.isdir(path):
        manifest = os.path.join(path, "manifest.csv")
        if not os.path.isfile(manifest):
            raise InputError("directory %s has no manifest.csv" % path)
        return _read_manifest(manifest, cfg)
    if path.endswith("manifest.csv") or path.endswith(".manifest"):
        return _read_manifest(path, cfg)
    if not os.path.isfile(path):
        raise InputError("no such record: %s" % path)
    stem = os.path.splitext(os.path.basename(path))[0]
    return [
        {
            "path": path,
            "subject_id": stem,
            "session_id": "s0",
            "day_index": 0,
            "segment_index": 0,
            "rate_hz": cfg.record_rate_hz,
        }
    ]


def _row_meta(row: dict, series: ComplexSeries) -> SegmentMeta:
    return SegmentMeta(
        subject_id=row["subject_id"],
        session_id=row["session_id"],
        day_index=row["day_index"],
        segment_index=row["segment_index"],
        duration=series.duration,
        start_time=series.t0,
        source=os.path.basename(row["path"]),
    )


# ------------------------------------------------------------- extraction


@dataclass
class ExtractResult:
    feature: str
    rows: list  # (SegmentMeta, float64 vector) per successful segment
    failures: list  # (SegmentMeta, reason string)

    @property
    def n_total(self) -> int:
        return len(self.rows) + len(self.failures)

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / self.n_total if self.n_total else 0.0

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(feature matrix, subject labels) over the successful rows."""
        if not self.rows:
            raise ExtractionError("no segments were extracted")
        x = np.stack([vec for _, vec in self.rows])
        y = np.array([meta.subject_id for meta, _ in self.rows])
        return x, y


def extract_segment(
    series: ComplexSeries, meta: SegmentMeta, feature: str, cfg: PipelineConfig,
    wavelength: float,
) -> np.ndarray:
    """One segment -> feature vector (24 / 48 / 72 dims)."""
    parts = []
    if feature in ("resp", "prop"):
        d = phase_demodulate(series, wavelength)
        fits, rejected = window_fits(
            d, hop=cfg.resp_hop, w_length=cfg.resp_window, eps=cfg.plateau_eps
        )
        if not fits:
            raise ExtractionError("all %d fit windows rejected" % rejected)
        parts.append(resp_statistics([w.feature for w in fits], meta).r)
    if feature in ("hb", "prop"):
        hb = hb_feature(
            series,
            meta,
            stft_window=cfg.stft_window,
            stft_hop=cfg.stft_hop,
            f_tilde=cfg.mel_f_tilde,
            f_prime=cfg.mel_f_prime,
            n_filters=cfg.mel_filters,
            keep=cfg.mel_keep,
        )
        parts.append(hb.r)
    return np.concatenate(parts)


def extract_features(
    records, cfg: PipelineConfig, feature: str | None = None,
    wavelength: float | None = None,
) -> ExtractResult:
    """Segment every record and extract per-segment features.

    Per-segment failures are logged and collected; the run continues.  The
    caller decides what failure rate is acceptable (the CLI exits nonzero
    above FAILURE_RATE_LIMIT).
    """
    feature = feature or cfg.feature
    if feature not in FEATURE_DIMS:
        raise InputError("feature must be one of %s" % (sorted(FEATURE_DIMS),))
    wavelength = cfg.wavelength_m if wavelength is None else wavelength
    jobs: list[tuple[ComplexSeries, SegmentMeta]] = []
    for series, meta in records:
        jobs.extend(segment(series, cfg.t0, cfg.segment_hop, base_meta=meta))
    if not jobs:
        raise InputError("no segments: records shorter than t0 = %g s" % cfg.t0)

    def run_one(job):
        series, meta = job
        try:
            return extract_segment(series, meta, feature, cfg, wavelength), None
        except VitalidError as exc:
            return None, str(exc)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(run_one, jobs))
    else:
        outcomes = [run_one(j) for j in jobs]

    rows, failures = [], []
    for (series, meta), (vec, err) in zip(jobs, outcomes):
        if err is None:
            rows.append((meta, vec))
        else:
            failures.append((meta, err))
            log.warning(
                "segment %s/%s#%d failed: %s",
                meta.subject_id,
                meta.session_id,
                meta.segment_index,
                err,
            )
    return ExtractResult(feature=feature, rows=rows, failures=failures)


# ------------------------------------------------------------ feature CSV


def feature_csv_path(cfg: PipelineConfig, feature: str | None = None) -> str:
    return os.path.join(cfg.out_dir, "features_%s.csv" % (feature or cfg.feature))


def write_feature_csv(path: str, result: ExtractResult, cfg: PipelineConfig) -> str:
    cols = FEATURE_COLUMNS[result.feature]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    header = reproducibility_header(
        cfg,
        format="feature-csv v%d" % FEATURE_CSV_VERSION,
        feature=result.feature,
        dim=len(cols),
        n_rows=len(result.rows),
        n_failed=len(result.failures),
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write("# %s\n" % line)
        fh.write(",".join(META_COLUMNS + cols) + "\n")
        for meta, vec in result.rows:
            meta_part = [
                meta.subject_id,
                meta.session_id,
                str(meta.day_index),
                str(meta.segment_index),
                repr(float(meta.start_time)),
                repr(float(meta.duration)),
                meta.source,
            ]
            fh.write(",".join(meta_part + [repr(float(v)) for v in vec]) + "\n")
    return path


def read_feature_csv(path: str):
    """Returns (x, labels, metas, info) from a version-1 feature CSV."""
    if not os.path.isfile(path):
        raise InputError("feature file not found: %s" % path)
    info: dict[str, str] = {}
    metas: list[SegmentMeta] = []
    vectors: list[np.ndarray] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_cols = None
        for line in fh:
            if line.startswith("#"):
                for token in line[1:].strip().split():
                    if "=" in token:
                        key, _, val = token.partition("=")
                        info[key] = val
                continue
            if header_cols is None:
                header_cols = line.rstrip("\n").split(",")
                if tuple(header_cols[: len(META_COLUMNS)]) != META_COLUMNS:
                    raise InputError("unrecognized feature CSV header in %s" % path)
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(header_cols):
                raise InputError("ragged row in %s" % path)
            m = len(META_COLUMNS)
            metas.append(
                SegmentMeta(
                    subject_id=parts[0],
                    session_id=parts[1],
                    day_index=int(parts[2]),
                    segment_index=int(parts[3]),
                    start_time=float(parts[4]),
                    duration=float(parts[5]),
                    source=parts[6],
                )
            )
            vectors.append(np.array([float(v) for v in parts[m:]]))
    if header_cols is None or not vectors:
        raise InputError("feature file %s has no data rows" % path)
    x = np.stack(vectors)
    labels = np.array([m.subject_id for m in metas])
    return x, labels, metas, info


# -------------------------------------------------------------- evaluate


def evaluate_features(
    x: np.ndarray,
    y: np.ndarray,
    cfg: PipelineConfig,
    metas=None,
) -> tuple[EvalReport, list]:
    """Cross-validate the configured method; optional grid search first.

    Returns (report, grid_table); grid_table is empty when grid is off.
    """
    _, spec = method_spec(cfg.method)
    table: list = []
    if cfg.grid:
        data = LabeledDataset(x=x, y=y)
        spec, table = grid_search(
            data, spec.kind, default_grid(spec.kind), cv_folds=3, seed=cfg.seed
        )
    report = cross_validate(x, y, spec, k=cfg.folds, seed=cfg.seed, meta=metas)
    return report, table


# ------------------------------------------------------------ run fronts


def run_synth(cfg: PipelineConfig) -> str:
    """Synthesize the configured population and write it as a CW dataset."""
    segs = synth_population(
        cfg.synth_subjects,
        cfg.synth_segments,
        cfg.synth_duration,
        fs=cfg.synth_rate_hz,
        snr_db=cfg.synth_snr_db,
        seed=cfg.synth_seed,
    )
    manifest = write_dataset(segs, cfg.out_dir)
    log.info("wrote %d records to %s", len(segs), cfg.out_dir)
    return manifest


def run_ingest(cfg: PipelineConfig) -> str:
    """Standardize the configured source into a CW dataset directory.

    FMCW cubes are reduced to their target-bin series; everything is
    resampled to target_rate_hz.  Output: records + manifest.csv.
    """
    records, _ = load_records(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = os.path.join(cfg.out_dir, "manifest.csv")
    with open(manifest, "w", encoding="utf-8") as fh:
        for line in reproducibility_header(cfg, n_records=len(records)):
            fh.write("# %s\n" % line)
        fh.write(
            "subject_id,session_id,day_index,segment_index,file,rate_hz,duration_s\n"
        )
        for series, meta in records:
            name = "%s_%s_%03d.bin" % (
                meta.subject_id,
                meta.session_id,
                meta.segment_index,
            )
            save_cw_record(os.path.join(cfg.out_dir, name), series)
            fh.write(
                "%s,%s,%d,%d,%s,%.10g,%.10g\n"
                % (
                    meta.subject_id,
                    meta.session_id,
                    meta.day_index,
                    meta.segment_index,
                    name,
                    series.rate,
                    series.duration,
                )
            )
    return manifest


def run_extract(cfg: PipelineConfig) -> tuple[str, ExtractResult]:
    records, wavelength = load_records(cfg)
    result = extract_features(records, cfg, wavelength=wavelength)
    path = write_feature_csv(feature_csv_path(cfg), result, cfg)
    log.info(
        "extracted %d/%d segments -> %s", len(result.rows), result.n_total, path
    )
    return path, result


def run_evaluate(cfg: PipelineConfig, features_path: str | None = None):
    """Evaluate the configured method on an existing feature file.

    Returns (report, file path dict, grid table).
    """
    feature_kind, _ = method_spec(cfg.method)
    path = features_path or feature_csv_path(cfg, feature_kind)
    x, y, metas, info = read_feature_csv(path)
    want = FEATURE_DIMS[feature_kind]
    if x.shape[1] != want:
        raise InputError(
            "method %s expects %d feature dims, %s has %d"
            % (cfg.method, want, path, x.shape[1])
        )
    report, table = evaluate_features(x, y, cfg, metas=metas)
    header = reproducibility_header(
        cfg, method=cfg.method, features=os.path.basename(path)
    )
    paths = write_report_files(report, cfg.out_dir, cfg.method, header_lines=header)
    return report, paths, table


# ------------------------------------------------------------ diagnostics


def dump_diagnostics(cfg: PipelineConfig, limit: int = 4) -> list[str]:
    """Per-window model-fit and mel-spectrum tables for the first segments.

    For each of the first `limit` segments writes
    fitdiag_<subject>_<idx>.csv (one fitted window per row) and
    meldiag_<subject>_<idx>.csv (band edges, energies, coefficients).
    """
    records, wavelength = load_records(cfg)
    jobs = []
    for series, meta in records:
        jobs.extend(segment(series, cfg.t0, cfg.segment_hop, base_meta=meta))
        if len(jobs) >= limit:
            break
    jobs = jobs[:limit]
    if not jobs:
        raise InputError("no segments to diagnose")
    os.makedirs(cfg.out_dir, exist_ok=True)
    header = reproducibility_header(cfg)
    written = []
    for series, meta in jobs:
        tag = "%s_%03d" % (meta.subject_id, meta.segment_index)

        fit_path = os.path.join(cfg.out_dir, "fitdiag_%s.csv" % tag)
        d = phase_demodulate(series, wavelength)
        fits, rejected = window_fits(
            d, hop=cfg.resp_hop, w_length=cfg.resp_window, eps=cfg.plateau_eps
        )
        with open(fit_path, "w", encoding="utf-8") as fh:
            for line in header:
                fh.write("# %s\n" % line)
            fh.write("# n_windows=%d n_rejected=%d\n" % (len(fits), rejected))
            fh.write(
                "t_center,freq_hz,beta1,beta2,duty,amplitude_m,tau_s,c2,residual\n"
            )
            for w in fits:
                p = w.params
                fh.write(
                    "%.6g,%r,%r,%r,%r,%r,%r,%r,%r\n"
                    % (
                        float(w.feature.t),
                        float(p.freq),
                        float(p.beta1),
                        float(p.beta2),
                        float(p.duty),
                        float(p.amplitude),
                        float(p.tau),
                        float(w.c2),
                        float(w.residual),
                    )
                )
        written.append(fit_path)

        mel_path = os.path.join(cfg.out_dir, "meldiag_%s.csv" % tag)
        accel = second_difference(series)
        spec = stft(accel, window=cfg.stft_window, hop=cfg.stft_hop)
        bank = build_mel_bank(
            series.rate,
            f_tilde=cfg.mel_f_tilde,
            f_prime=cfg.mel_f_prime,
            n_filters=cfg.mel_filters,
        )
        energies = mel_energies(spec, bank)
        coeffs, floored = mfcc(energies)
        l_count = bank.size
        with open(mel_path, "w", encoding="utf-8") as fh:
            for line in header:
                fh.write("# %s\n" % line)
            fh.write("# floored=%s\n" % floored)
            fh.write("band,f_lo_hz,f_center_hz,f_hi_hz,energy_pos,energy_neg,")
            fh.write("coeff_pos,coeff_neg\n")
            for ell in range(l_count):
                fh.write(
                    "%d,%r,%r,%r,%r,%r,%r,%r\n"
                    % (
                        ell,
                        float(bank.centers[ell]),
                        float(bank.centers[ell + 1]),
                        float(bank.centers[ell + 2]),
                        float(energies.pos[ell]),
                        float(energies.neg[ell]),
                        float(coeffs[l_count + ell]),
                        float(coeffs[l_count - 1 - ell]),
                    )
                )
        written.append(mel_path)
    return written
