"""Wire models for the HTTP service.

ConfigModel mirrors PipelineConfig field-for-field with everything
optional: unset fields fall back to the config file (if given) and then
to the built-in defaults, in that order.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class ConfigModel(BaseModel):
    source: str | None = None
    data_path: str | None = None
    record_rate_hz: float | None = None
    target_rate_hz: float | None = None
    wavelength_m: float | None = None
    t0: float | None = None
    seg_hop: float | None = None
    resp_window: float | None = None
    resp_hop: float | None = None
    plateau_eps: float | None = None
    stft_window: float | None = None
    stft_hop: float | None = None
    mel_filters: int | None = None
    mel_keep: int | None = None
    mel_f_tilde: float | None = None
    mel_f_prime: float | None = None
    feature: str | None = None
    method: str | None = None
    grid: bool | None = None
    folds: int | None = None
    seed: int | None = None
    synth_subjects: int | None = None
    synth_segments: int | None = None
    synth_duration: float | None = None
    synth_rate_hz: float | None = None
    synth_snr_db: float | None = None
    synth_seed: int | None = None
    out_dir: str | None = None
    workers: int | None = None


class RunRequest(BaseModel):
    """Shared request body for the pipeline endpoints."""

    config_path: str | None = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class DiagnosticsRequest(RunRequest):
    limit: int = 4


class SegmentFeatureRequest(BaseModel):
    """One raw complex segment, sent inline as I/Q arrays."""

    i: list[float]
    q: list[float]
    rate_hz: float
    feature: str = "prop"
    wavelength_m: float | None = None
    subject_id: str = "unknown"
    session_id: str = "s0"
    config_path: str | None = None
    config: ConfigModel = Field(default_factory=ConfigModel)


class HealthResponse(BaseModel):
    status: str
    version: str


class DatasetResponse(BaseModel):
    manifest: str
    n_records: int
    out_dir: str


class ExtractResponse(BaseModel):
    features: str
    feature: str
    n_rows: int
    n_failed: int
    failure_rate: float


class EvaluateResponse(BaseModel):
    method: str
    accuracy: float
    macro_f1: float
    macro_auc: float | None  # None when undefined (every class excluded)
    class_set: list[str]
    paths: dict[str, str]
    grid_cells: int


class DiagnosticsResponse(BaseModel):
    files: list[str]


class SegmentFeatureResponse(BaseModel):
    feature: str
    dim: int
    vector: list[float]
