"""Loading, resampling, and segmentation of raw radar recordings.

Two on-disk sources are supported:

* FMCW data cubes: little-endian interleaved float32 (re, im) with fast time
  innermost, plus a UTF-8 ``key = value`` sidecar describing the radar and
  the cube dimensions.
* CW records: interleaved float32 (I, Q) binary, or two-column CSV with
  header ``i,q``; the format is picked by file extension.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import firwin, oaconvolve

from .errors import InputError

SPEED_OF_LIGHT = 299792458.0

# Sidecar keys that must be present for an FMCW cube.
_SIDECAR_REQUIRED = (
    "center_frequency_hz",
    "bandwidth_hz",
    "n_tx",
    "n_rx",
    "tx_spacing_m",
    "rx_spacing_m",
    "slow_time_rate_hz",
    "n_slow",
    "n_virtual",
    "n_fast",
)


@dataclass
class RadarParams:
    """Static description of the acquiring radar."""

    center_frequency: float  # Hz
    bandwidth: float  # Hz
    n_tx: int
    n_rx: int
    tx_spacing: float  # m
    rx_spacing: float  # m
    slow_time_rate: float  # Hz
    wavelength: float | None = None  # m; derived from center frequency if absent
    range_resolution: float | None = None  # m; c / (2 B) if absent

    def __post_init__(self):
        if self.center_frequency <= 0 or self.bandwidth <= 0:
            raise InputError("center frequency and bandwidth must be positive")
        if self.n_tx < 1 or self.n_rx < 1:
            raise InputError("n_tx and n_rx must be at least 1")
        if self.slow_time_rate <= 0:
            raise InputError("slow-time rate must be positive")
        nominal = SPEED_OF_LIGHT / self.center_frequency
        if self.wavelength is None:
            self.wavelength = nominal
        elif abs(self.wavelength - nominal) > 0.005 * nominal:
            raise InputError(
                "declared wavelength %.6g m deviates more than 0.5%% from "
                "c/f = %.6g m" % (self.wavelength, nominal)
            )
        if self.range_resolution is None:
            self.range_resolution = SPEED_OF_LIGHT / (2.0 * self.bandwidth)
        elif self.range_resolution <= 0:
            raise InputError("range resolution must be positive")

    @property
    def n_virtual(self) -> int:
        return self.n_tx * self.n_rx


@dataclass
class ComplexSeries:
    """Uniformly sampled complex baseband signal."""

    samples: np.ndarray  # complex128[n]
    rate: float  # Hz
    t0: float = 0.0  # s

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise InputError("series must be a non-empty 1-d array")
        if self.rate <= 0:
            raise InputError("sample rate must be positive")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.rate


@dataclass
class DataCube:
    """FMCW recording: slow time x virtual channel x fast time."""

    samples: np.ndarray  # complex64/128[n_slow][n_virtual][n_fast]
    params: RadarParams
    t0: float = 0.0

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise InputError("cube must have 3 axes (slow, virtual, fast)")
        if self.samples.shape[1] != self.params.n_virtual:
            raise InputError(
                "cube has %d virtual channels but params declare %d"
                % (self.samples.shape[1], self.params.n_virtual)
            )

    @property
    def n_slow(self) -> int:
        return self.samples.shape[0]

    @property
    def n_fast(self) -> int:
        return self.samples.shape[2]

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.params.slow_time_rate


@dataclass
class SegmentMeta:
    """Identity and position of one analysis segment."""

    subject_id: str
    session_id: str
    day_index: int
    segment_index: int
    duration: float  # s
    start_time: float = 0.0  # s, relative to the parent recording
    source: str = ""  # originating file, if any

    def __post_init__(self):
        if self.duration <= 0:
            raise InputError("segment duration must be positive")
        if not self.subject_id or not self.session_id:
            raise InputError("subject and session labels must be non-empty")


def read_sidecar(path: str) -> tuple[RadarParams, dict]:
    """Parse a cube metadata sidecar.

    Returns the radar parameters and the raw key-value mapping (which also
    carries the cube dimensions n_slow / n_virtual / n_fast).
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError("%s:%d: expected 'key = value'" % (path, lineno))
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    missing = [k for k in _SIDECAR_REQUIRED if k not in values]
    if missing:
        raise InputError("sidecar %s missing keys: %s" % (path, ", ".join(missing)))
    params = RadarParams(
        center_frequency=float(values["center_frequency_hz"]),
        bandwidth=float(values["bandwidth_hz"]),
        n_tx=int(values["n_tx"]),
        n_rx=int(values["n_rx"]),
        tx_spacing=float(values["tx_spacing_m"]),
        rx_spacing=float(values["rx_spacing_m"]),
        slow_time_rate=float(values["slow_time_rate_hz"]),
        wavelength=float(values["wavelength_m"]) if "wavelength_m" in values else None,
        range_resolution=(
            float(values["range_resolution_m"]) if "range_resolution_m" in values else None
        ),
    )
    if int(values["n_virtual"]) != params.n_virtual:
        raise InputError(
            "sidecar declares n_virtual = %s but n_tx x n_rx = %d"
            % (values["n_virtual"], params.n_virtual)
        )
    dims = {k: int(values[k]) for k in ("n_slow", "n_virtual", "n_fast")}
    return params, dims


def write_sidecar(path: str, params: RadarParams, n_slow: int, n_fast: int) -> None:
    lines = [
        "center_frequency_hz = %.10g" % params.center_frequency,
        "bandwidth_hz = %.10g" % params.bandwidth,
        "n_tx = %d" % params.n_tx,
        "n_rx = %d" % params.n_rx,
        "tx_spacing_m = %.10g" % params.tx_spacing,
        "rx_spacing_m = %.10g" % params.rx_spacing,
        "slow_time_rate_hz = %.10g" % params.slow_time_rate,
        "n_slow = %d" % n_slow,
        "n_virtual = %d" % params.n_virtual,
        "n_fast = %d" % n_fast,
        "wavelength_m = %.10g" % params.wavelength,
        "range_resolution_m = %.10g" % params.range_resolution,
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_fmcw_cube(path: str, params: RadarParams | None = None) -> DataCube:
    """Load an FMCW cube from interleaved float32 (re, im) plus sidecar.

    The sidecar is ``<path>.meta``; it always supplies the cube dimensions
    and, when `params` is None, the radar parameters as well.
    """
    sidecar = path + ".meta"
    if not os.path.exists(sidecar):
        raise InputError("missing sidecar %s" % sidecar)
    sidecar_params, dims = read_sidecar(sidecar)
    if params is None:
        params = sidecar_params
    n_slow, n_virtual, n_fast = dims["n_slow"], dims["n_virtual"], dims["n_fast"]
    expected = n_slow * n_virtual * n_fast * 2 * 4  # float32 pairs
    actual = os.path.getsize(path)
    if actual != expected:
        raise InputError(
            "cube %s: expected %d bytes for %dx%dx%d complex64, found %d"
            % (path, expected, n_slow, n_virtual, n_fast, actual)
        )
    raw = np.fromfile(path, dtype="<f4")
    data = raw[0::2] + 1j * raw[1::2]
    data = data.reshape(n_slow, n_virtual, n_fast)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        i, j, k = bad[0]
        raise InputError(
            "cube %s: non-finite sample at (slow=%d, virtual=%d, fast=%d)"
            % (path, i, j, k)
        )
    return DataCube(samples=data, params=params)


def save_fmcw_cube(path: str, cube: DataCube) -> None:
    data = np.asarray(cube.samples, dtype=np.complex64)
    raw = np.empty(data.size * 2, dtype="<f4")
    flat = data.reshape(-1)
    raw[0::2] = flat.real
    raw[1::2] = flat.imag
    raw.tofile(path)
    write_sidecar(path + ".meta", cube.params, cube.n_slow, cube.n_fast)


def load_cw_record(path: str, rate: float) -> ComplexSeries:
    """Load a CW I/Q record (binary ``.bin``/``.dat`` or CSV, by extension)."""
    if rate <= 0:
        raise InputError("rate must be positive")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".csv":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().lower().replace(" ", "")
            if header != "i,q":
                raise InputError("%s: expected CSV header 'i,q', got %r" % (path, header))
            body = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
        if body.size == 0:
            raise InputError("%s: empty record" % path)
        if body.shape[1] != 2:
            raise InputError("%s: expected 2 columns, found %d" % (path, body.shape[1]))
        i_ch, q_ch = body[:, 0], body[:, 1]
    else:
        raw = np.fromfile(path, dtype="<f4")
        if raw.size == 0:
            raise InputError("%s: empty record" % path)
        if raw.size % 2 != 0:
            raise InputError(
                "%s: %d float32 values cannot form equal-length I/Q channels"
                % (path, raw.size)
            )
        i_ch, q_ch = raw[0::2], raw[1::2]
    if i_ch.size != q_ch.size:
        raise InputError("%s: I and Q channel lengths differ" % path)
    if i_ch.size < 2:
        raise InputError("%s: record holds fewer than 2 samples" % path)
    return ComplexSeries(samples=i_ch + 1j * q_ch, rate=rate)


def save_cw_record(path: str, series: ComplexSeries) -> None:
    """Write a CW record in the format matching the file extension."""
    ext = os.path.splitext(path)[1].lower()
    i_ch = np.asarray(series.samples.real, dtype=np.float32)
    q_ch = np.asarray(series.samples.imag, dtype=np.float32)
    if ext == ".csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("i,q\n")
            for a, b in zip(i_ch, q_ch):
                fh.write("%.9g,%.9g\n" % (a, b))
    else:
        raw = np.empty(i_ch.size * 2, dtype="<f4")
        raw[0::2] = i_ch
        raw[1::2] = q_ch
        raw.tofile(path)


def resample(series: ComplexSeries, target_rate: float) -> ComplexSeries:
    """Integer-factor decimation with an anti-alias FIR low-pass.

    The passband edge sits at 0.45 x target rate.  Tap count scales with the
    decimation factor so the transition band stays narrow in absolute Hz;
    the window-method 6 dB point is shifted up by half the transition width
    so the passband edge itself stays flat.  Same-rate calls return the
    input unchanged (exact idempotence).
    """
    if target_rate <= 0:
        raise InputError("target rate must be positive")
    ratio = series.rate / target_rate
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise InputError(
            "rate %g Hz is not an integer multiple of target %g Hz"
            % (series.rate, target_rate)
        )
    if factor == 1:
        return series
    numtaps = 127 * factor
    if numtaps % 2 == 0:
        numtaps += 1
    edge = 0.45 * target_rate
    transition = 3.3 * series.rate / numtaps  # Hamming main-lobe width, Hz
    taps = firwin(numtaps, edge + 0.5 * transition, window="hamming", fs=series.rate)
    taps = taps / taps.sum()  # exact unity DC gain
    half = numtaps // 2
    x = series.samples
    padded = np.concatenate([np.full(half, x[0]), x, np.full(half, x[-1])])
    filtered = oaconvolve(padded, taps, mode="valid")
    out_len = x.size // factor
    decimated = filtered[::factor][:out_len]
    return ComplexSeries(samples=decimated, rate=target_rate, t0=series.t0)


def segment(
    series: ComplexSeries,
    t0_length: float,
    hop: float | None = None,
    base_meta: SegmentMeta | None = None,
) -> list[tuple[ComplexSeries, SegmentMeta]]:
    """Cut a series into fixed-length segments starting at hop multiples.

    A trailing partial segment is discarded.  If the series is shorter than
    one segment, an empty list is returned with a warning.
    """
    if t0_length <= 0:
        raise InputError("segment length must be positive")
    if hop is None:
        hop = t0_length
    if hop <= 0:
        raise InputError("hop must be positive")
    seg_len = int(round(t0_length * series.rate))
    hop_len = int(round(hop * series.rate))
    if seg_len > series.n:
        warnings.warn(
            "segment length %.3g s exceeds record duration %.3g s; no segments"
            % (t0_length, series.duration)
        )
        return []
    out = []
    index = 0
    start = 0
    while start + seg_len <= series.n:
        chunk = ComplexSeries(
            samples=series.samples[start : start + seg_len].copy(),
            rate=series.rate,
            t0=series.t0 + start / series.rate,
        )
        if base_meta is not None:
            meta = replace(
                base_meta,
                segment_index=index,
                duration=t0_length,
                start_time=series.t0 + start / series.rate,
            )
        else:
            meta = SegmentMeta(
                subject_id="unknown",
                session_id="unknown",
                day_index=0,
                segment_index=index,
                duration=t0_length,
                start_time=series.t0 + start / series.rate,
            )
        out.append((chunk, meta))
        index += 1
        start = index * hop_len
    return out
