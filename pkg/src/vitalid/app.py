"""HTTP service exposing the pipeline.

Every endpoint resolves its configuration the same way: start from the
built-in defaults, overlay the config file named in the request (if any),
then overlay the request's explicit fields.  Domain errors surface as
structured JSON with the error category, which the CLI maps to exit codes.
"""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .config import PipelineConfig, load_config
from .errors import InputError, VitalidError
from .io import ComplexSeries, SegmentMeta
from . import pipeline
from .schemas import (
    ConfigModel,
    DatasetResponse,
    DiagnosticsRequest,
    DiagnosticsResponse,
    EvaluateResponse,
    ExtractResponse,
    HealthResponse,
    RunRequest,
    SegmentFeatureRequest,
    SegmentFeatureResponse,
)

_STATUS_BY_CATEGORY = {"input": 400, "extraction": 422, "training": 500, "internal": 500}


def _resolve(config_path: str | None, model: ConfigModel) -> PipelineConfig:
    overrides = {k: v for k, v in model.model_dump().items() if v is not None}
    return load_config(config_path, overrides)


def create_app() -> FastAPI:
    app = FastAPI(title="vitalid", version=__version__)

    @app.exception_handler(VitalidError)
    async def _domain_error(_: Request, exc: VitalidError):
        return JSONResponse(
            status_code=_STATUS_BY_CATEGORY.get(exc.category, 500),
            content={"detail": {"category": exc.category, "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/synth", response_model=DatasetResponse)
    def synth(req: RunRequest):
        cfg = _resolve(req.config_path, req.config)
        manifest = pipeline.run_synth(cfg)
        n = cfg.synth_subjects * cfg.synth_segments
        return DatasetResponse(manifest=manifest, n_records=n, out_dir=cfg.out_dir)

    @app.post("/ingest", response_model=DatasetResponse)
    def ingest(req: RunRequest):
        cfg = _resolve(req.config_path, req.config)
        manifest = pipeline.run_ingest(cfg)
        with open(manifest, "r", encoding="utf-8") as fh:
            n = sum(1 for line in fh if line and not line.startswith("#")) - 1
        return DatasetResponse(manifest=manifest, n_records=n, out_dir=cfg.out_dir)

    @app.post("/extract", response_model=ExtractResponse)
    def extract(req: RunRequest):
        cfg = _resolve(req.config_path, req.config)
        path, result = pipeline.run_extract(cfg)
        return ExtractResponse(
            features=path,
            feature=result.feature,
            n_rows=len(result.rows),
            n_failed=len(result.failures),
            failure_rate=result.failure_rate,
        )

    @app.post("/evaluate", response_model=EvaluateResponse)
    def evaluate(req: RunRequest):
        cfg = _resolve(req.config_path, req.config)
        report, paths, table = pipeline.run_evaluate(cfg)
        return EvaluateResponse(
            method=cfg.method,
            accuracy=report.accuracy,
            macro_f1=report.macro_f1,
            macro_auc=(
                report.macro_auc if math.isfinite(report.macro_auc) else None
            ),
            class_set=[str(c) for c in report.class_set],
            paths=paths,
            grid_cells=len(table),
        )

    @app.post("/diagnostics", response_model=DiagnosticsResponse)
    def diagnostics(req: DiagnosticsRequest):
        cfg = _resolve(req.config_path, req.config)
        return DiagnosticsResponse(files=pipeline.dump_diagnostics(cfg, req.limit))

    @app.post("/features", response_model=SegmentFeatureResponse)
    def segment_features(req: SegmentFeatureRequest):
        cfg = _resolve(req.config_path, req.config)
        if req.feature not in pipeline.FEATURE_DIMS:
            raise InputError(
                "feature must be one of %s" % (sorted(pipeline.FEATURE_DIMS),)
            )
        if len(req.i) != len(req.q):
            raise InputError("i and q lengths differ")
        if len(req.i) < 2:
            raise InputError("segment too short")
        samples = np.asarray(req.i, dtype=np.float64) + 1j * np.asarray(
            req.q, dtype=np.float64
        )
        series = ComplexSeries(samples=samples, rate=req.rate_hz)
        meta = SegmentMeta(
            subject_id=req.subject_id,
            session_id=req.session_id,
            day_index=0,
            segment_index=0,
            duration=series.duration,
        )
        wavelength = (
            req.wavelength_m if req.wavelength_m is not None else cfg.wavelength_m
        )
        vec = pipeline.extract_segment(series, meta, req.feature, cfg, wavelength)
        return SegmentFeatureResponse(
            feature=req.feature, dim=int(vec.size), vector=[float(v) for v in vec]
        )

    return app
