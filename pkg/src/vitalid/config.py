"""Run configuration: INI parsing, defaults, and a stable content hash.

Every pipeline run is driven by a PipelineConfig.  Defaults reproduce the
reference analysis settings (8 s fitting window, plateau threshold 0.6,
2 s spectrogram window, 64 mel filters, 24 kept coefficients per side).
All outputs embed config_hash() so results can be traced to a configuration.
"""

from __future__ import annotations

import configparser
import hashlib
import io as _io
from dataclasses import dataclass, fields

from .errors import InputError

SOURCES = ("fmcw", "cw", "synth")
FEATURES = ("resp", "hb", "prop")


@dataclass(frozen=True)
class PipelineConfig:
    # [input]
    source: str = "synth"
    data_path: str = ""  # record file, manifest.csv, or dataset directory
    record_rate_hz: float = 100.0  # assumed rate for bare CW records
    target_rate_hz: float = 100.0  # resample target; 0 keeps the native rate
    wavelength_m: float = 3.8e-3  # carrier wavelength for demodulation
    t0: float = 60.0  # s, segment length
    seg_hop: float = 0.0  # s; 0 means non-overlapping (= t0)
    # [respiration]
    resp_window: float = 8.0  # s, sliding model-fit window
    resp_hop: float = 1.0  # s
    plateau_eps: float = 0.6  # support threshold, fraction of amplitude
    # [heartbeat]
    stft_window: float = 2.0  # s
    stft_hop: float = 0.1  # s
    mel_filters: int = 64
    mel_keep: int = 24  # coefficients kept per frequency side
    mel_f_tilde: float = 5.0  # Hz
    mel_f_prime: float = 1000.0  # Hz
    # [classifier]
    feature: str = "prop"
    method: str = "C1"
    grid: bool = False  # grid-search the classifier before evaluating
    # [cv]
    folds: int = 10
    seed: int = 0
    # [synth]
    synth_subjects: int = 6
    synth_segments: int = 50
    synth_duration: float = 60.0  # s
    synth_rate_hz: float = 100.0
    synth_snr_db: float = 20.0
    synth_seed: int = 0
    # [output]
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.source not in SOURCES:
            raise InputError("source must be one of %s" % (SOURCES,))
        if self.feature not in FEATURES:
            raise InputError("feature must be one of %s" % (FEATURES,))
        if self.t0 <= 0 or self.seg_hop < 0:
            raise InputError("t0 must be positive and seg_hop non-negative")
        if self.folds < 2:
            raise InputError("folds must be at least 2")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        if self.mel_keep < 1 or self.mel_keep > self.mel_filters:
            raise InputError("mel_keep must lie in [1, mel_filters]")

    @property
    def segment_hop(self) -> float:
        return self.seg_hop if self.seg_hop > 0 else self.t0


# INI layout: section -> (key, config field).  This is the on-disk schema;
# reordering or renaming entries is a breaking format change.
_SCHEMA = {
    "input": (
        ("source", "source"),
        ("data_path", "data_path"),
        ("record_rate_hz", "record_rate_hz"),
        ("target_rate_hz", "target_rate_hz"),
        ("wavelength_m", "wavelength_m"),
        ("t0", "t0"),
        ("seg_hop", "seg_hop"),
    ),
    "respiration": (
        ("window", "resp_window"),
        ("hop", "resp_hop"),
        ("plateau_eps", "plateau_eps"),
    ),
    "heartbeat": (
        ("stft_window", "stft_window"),
        ("stft_hop", "stft_hop"),
        ("filters", "mel_filters"),
        ("keep", "mel_keep"),
        ("f_tilde", "mel_f_tilde"),
        ("f_prime", "mel_f_prime"),
    ),
    "classifier": (
        ("feature", "feature"),
        ("method", "method"),
        ("grid", "grid"),
    ),
    "cv": (
        ("folds", "folds"),
        ("seed", "seed"),
    ),
    "synth": (
        ("subjects", "synth_subjects"),
        ("segments", "synth_segments"),
        ("duration", "synth_duration"),
        ("rate_hz", "synth_rate_hz"),
        ("snr_db", "synth_snr_db"),
        ("seed", "synth_seed"),
    ),
    "output": (
        ("dir", "out_dir"),
        ("workers", "workers"),
    ),
}

_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(field_name: str, raw: str):
    ftype = _FIELD_TYPES[field_name]
    raw = raw.strip()
    if ftype == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError("bad boolean %r for %s" % (raw, field_name))
    if ftype == "int":
        try:
            return int(raw)
        except ValueError:
            raise InputError("bad integer %r for %s" % (raw, field_name))
    if ftype == "float":
        try:
            return float(raw)
        except ValueError:
            raise InputError("bad number %r for %s" % (raw, field_name))
    return raw


def load_config(path: str | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Read an INI config; missing file/keys fall back to defaults.

    overrides maps config field names to already-typed values (CLI flags);
    they win over the file.
    """
    values: dict = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise InputError("cannot read config %s: %s" % (path, exc))
        except configparser.Error as exc:
            raise InputError("malformed config %s: %s" % (path, exc))
        known = {sec: dict(pairs) for sec, pairs in _SCHEMA.items()}
        for sec in parser.sections():
            if sec not in known:
                raise InputError("unknown config section [%s]" % sec)
            for key, raw in parser.items(sec):
                if key not in known[sec]:
                    raise InputError("unknown key %r in section [%s]" % (key, sec))
                values[known[sec][key]] = _parse_value(known[sec][key], raw)
    if overrides:
        for name, val in overrides.items():
            if val is None:
                continue
            if name not in _FIELD_TYPES:
                raise InputError("unknown config field %r" % name)
            values[name] = val
    return PipelineConfig(**values)


def to_ini(cfg: PipelineConfig) -> str:
    """Render the fully resolved configuration as INI text."""
    buf = _io.StringIO()
    for sec, pairs in _SCHEMA.items():
        buf.write("[%s]\n" % sec)
        for key, field_name in pairs:
            val = getattr(cfg, field_name)
            if isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = "%.12g" % val
            buf.write("%s = %s\n" % (key, val))
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg: PipelineConfig) -> str:
    """Short stable digest of every field; embedded in all output headers."""
    lines = []
    for sec, pairs in _SCHEMA.items():
        for key, field_name in pairs:
            val = getattr(cfg, field_name)
            if isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = "%.17g" % val
            lines.append("%s.%s=%s" % (sec, key, val))
    blob = "\n".join(lines).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def reproducibility_header(cfg: PipelineConfig, **extra) -> list[str]:
    """Header lines (no leading '#') stamped into every output file."""
    import numpy
    import scipy

    from . import __version__

    lines = [
        "vitalid=%s numpy=%s scipy=%s" % (__version__, numpy.__version__, scipy.__version__),
        "config_hash=%s" % config_hash(cfg),
        "seed=%d synth_seed=%d" % (cfg.seed, cfg.synth_seed),
    ]
    for key, val in extra.items():
        lines.append("%s=%s" % (key, val))
    return lines
