"""Branch signals derived from raw radar data.

Produces the two inputs the feature extractors consume: the phase-derived
chest displacement d(t) and the twice-differentiated complex signal with
its two-sided spectrogram.  Also holds FMCW target isolation (range FFT,
delay-and-sum beamforming, target-bin selection).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExtractionError, InputError
from .io import ComplexSeries, DataCube, RadarParams

DEFAULT_STFT_WINDOW = 2.0  # s
DEFAULT_STFT_HOP = 0.1  # s
DEFAULT_ANGLES = np.arange(-45.0, 45.0 + 0.5, 1.0)  # degrees

# Respiration band used for target-bin scoring.
RESP_BAND = (0.1, 0.5)  # Hz
TARGET_RANGE_SPAN = (0.3, 3.0)  # m


@dataclass
class DisplacementSeries:
    """Chest displacement in metres, uniformly sampled."""

    values: np.ndarray  # float64[n]
    rate: float  # Hz
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise InputError("displacement must be a non-empty 1-d array")
        if not np.all(np.isfinite(self.values)):
            raise InputError("displacement contains non-finite values")
        if self.rate <= 0:
            raise InputError("rate must be positive")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return self.values.size / self.rate

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.values.size) / self.rate


@dataclass
class Spectrogram:
    """Two-sided magnitude spectrogram of a complex signal."""

    magnitudes: np.ndarray  # float64[n_frames][n_freqs], raw |DFT|
    frame_times: np.ndarray  # s, frame centers
    freqs: np.ndarray  # Hz, strictly increasing, spans both signs
    window_length: float  # s
    hop: float  # s

    def __post_init__(self):
        if self.magnitudes.ndim != 2:
            raise InputError("spectrogram must be 2-d (frames x freqs)")
        if np.any(self.magnitudes < 0):
            raise InputError("magnitudes must be non-negative")
        if np.any(np.diff(self.freqs) <= 0):
            raise InputError("frequency axis must be strictly increasing")


@dataclass
class TargetBin:
    range_index: int
    range_m: float
    angle_index: int
    angle_deg: float
    selection_score: float


def phase_demodulate(s: ComplexSeries, wavelength: float) -> DisplacementSeries:
    """Displacement from the unwrapped baseband phase: d = (lambda/4pi) * arg s.

    The result carries an arbitrary additive constant; consumers subtract a
    per-window mean before fitting.
    """
    if wavelength <= 0:
        raise InputError("wavelength must be positive")
    mags = np.abs(s.samples)
    zero = np.flatnonzero(mags == 0.0)
    if zero.size:
        raise ExtractionError("zero-magnitude sample at index %d" % zero[0])
    phase = np.unwrap(np.angle(s.samples))
    d = (wavelength / (4.0 * np.pi)) * phase
    return DisplacementSeries(values=d, rate=s.rate, t0=s.t0)


def second_difference(s: ComplexSeries) -> ComplexSeries:
    """Discrete second derivative, scaled by rate^2 to approximate d^2/dt^2."""
    if s.n < 3:
        raise InputError("second difference needs at least 3 samples")
    x = s.samples
    out = (x[2:] - 2.0 * x[1:-1] + x[:-2]) * (s.rate**2)
    return ComplexSeries(samples=out, rate=s.rate, t0=s.t0 + 1.0 / s.rate)


def stft(
    s: ComplexSeries,
    window: float = DEFAULT_STFT_WINDOW,
    hop: float = DEFAULT_STFT_HOP,
) -> Spectrogram:
    """Rectangular-window short-time Fourier transform, two-sided axis.

    Frame k covers samples [k*hop, k*hop + window); a trailing partial frame
    is discarded.  Magnitudes are raw DFT magnitudes (Parseval with 1/nfft).
    """
    if hop <= 0:
        raise InputError("hop must be positive")
    wlen = int(round(window * s.rate))
    hlen = int(round(hop * s.rate))
    if wlen < 2:
        raise InputError("window too short for the sample rate")
    if wlen > s.n:
        raise InputError(
            "window %.3g s exceeds series duration %.3g s" % (window, s.duration)
        )
    nfft = 1
    while nfft < wlen:
        nfft *= 2
    n_frames = (s.n - wlen) // hlen + 1
    starts = np.arange(n_frames) * hlen
    frames = s.samples[starts[:, None] + np.arange(wlen)[None, :]]
    spec = np.fft.fftshift(np.fft.fft(frames, n=nfft, axis=1), axes=1)
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, d=1.0 / s.rate))
    times = s.t0 + (starts + 0.5 * wlen) / s.rate
    return Spectrogram(
        magnitudes=np.abs(spec),
        frame_times=times,
        freqs=freqs,
        window_length=window,
        hop=hop,
    )


def range_fft(cube: DataCube) -> np.ndarray:
    """Hamming-windowed FFT over fast time; bin m sits at range m * dr."""
    if cube.n_fast < 2:
        raise InputError("need at least 2 fast-time samples")
    w = np.hamming(cube.n_fast)
    return np.fft.fft(cube.samples * w[None, None, :], axis=2)


def virtual_positions(params: RadarParams) -> np.ndarray:
    """Virtual element positions, tx-major channel order: x = i*dtx + j*drx."""
    i = np.arange(params.n_tx)
    j = np.arange(params.n_rx)
    return (i[:, None] * params.tx_spacing + j[None, :] * params.rx_spacing).reshape(-1)


def _steering_matrix(params: RadarParams, angles_deg: np.ndarray) -> np.ndarray:
    x = virtual_positions(params)
    sin_t = np.sin(np.deg2rad(angles_deg))
    return np.exp(-2j * np.pi * np.outer(x, sin_t) / params.wavelength)


def beamform(profiles: np.ndarray, params: RadarParams, angles_deg=None):
    """Delay-and-sum beamforming of range profiles.

    Returns (power_map, bin_series) where power_map[range, angle] is the
    slow-time-averaged beam power and bin_series(range_idx, angle_idx)
    yields the complex slow-time series of that bin on demand.
    """
    if angles_deg is None:
        angles_deg = DEFAULT_ANGLES
    angles_deg = np.atleast_1d(np.asarray(angles_deg, dtype=np.float64))
    if angles_deg.size == 0:
        raise InputError("angle grid is empty")
    n_slow, n_virtual, n_range = profiles.shape
    if n_virtual != params.n_virtual:
        raise InputError("profile channel count does not match params")
    weights = _steering_matrix(params, angles_deg)  # (n_virtual, n_angles)
    power = np.zeros((n_range, angles_deg.size))
    block = max(1, int(2e7) // max(1, n_range * angles_deg.size))
    for lo in range(0, n_slow, block):
        chunk = profiles[lo : lo + block]  # (b, n_virtual, n_range)
        beams = np.einsum("bvr,va->rab", chunk, weights, optimize=True)
        power += (beams.real**2 + beams.imag**2).sum(axis=2)
    power /= n_slow

    def bin_series(range_idx: int, angle_idx: int) -> np.ndarray:
        return profiles[:, :, range_idx] @ weights[:, angle_idx]

    return power, bin_series


def select_target_bin(
    profiles: np.ndarray,
    params: RadarParams,
    angles_deg=None,
    range_span: tuple[float, float] = TARGET_RANGE_SPAN,
) -> TargetBin:
    """Pick the (range, angle) bin with the strongest respiration-band motion.

    Scores each candidate bin by the 0.1-0.5 Hz power of its demodulated
    displacement, normalized by that bin's own noise floor; rejects the scene
    when no bin clears 10x the median score.

    Three details keep the score map honest. The beam is demodulated about
    its temporal mean with an AC-power floor in the denominator, so a beam
    with no static anchor (noise only, or a steering null) stays bounded
    instead of phase-random-walking. The noise floor is the median
    out-of-band periodogram bin, which ignores harmonics of the motion
    itself. And a Hann window keeps in-band tone leakage out of that noise
    estimate.
    """
    if angles_deg is None:
        angles_deg = DEFAULT_ANGLES
    angles_deg = np.atleast_1d(np.asarray(angles_deg, dtype=np.float64))
    n_slow, _, n_range = profiles.shape
    duration = n_slow / params.slow_time_rate
    if duration < 10.0:
        raise InputError("target selection needs at least 10 s of data")
    dr = params.range_resolution
    ranges = np.arange(n_range) * dr
    r_mask = (ranges >= range_span[0]) & (ranges <= range_span[1])
    r_idx = np.flatnonzero(r_mask)
    if r_idx.size == 0:
        raise InputError("no range bins inside %s m" % (range_span,))
    weights = _steering_matrix(params, angles_deg)
    lam = params.wavelength
    scale = lam / (4.0 * np.pi)
    freqs = np.fft.rfftfreq(n_slow, d=1.0 / params.slow_time_rate)
    band_rows = (freqs >= RESP_BAND[0]) & (freqs <= RESP_BAND[1])
    band_rows[0] = False  # DC is not motion
    out_rows = ~band_rows
    out_rows[0] = False
    window = np.hanning(n_slow)[:, None]  # keep tone leakage out of the noise estimate
    scores = np.zeros((r_idx.size, angles_deg.size))
    for ri, r in enumerate(r_idx):
        beams = profiles[:, :, r] @ weights  # (n_slow, n_angles)
        anchor = beams.mean(axis=0)
        ac = beams - anchor
        gain = np.abs(anchor) ** 2 + (np.abs(ac) ** 2).mean(axis=0)
        safe = np.where(gain > 0.0, gain, 1.0)
        d = scale * (ac * anchor.conj()).imag / safe  # zero-mean by construction
        spec2 = np.abs(np.fft.rfft(d * window, axis=0)) ** 2
        band = spec2[band_rows].sum(axis=0)
        total = spec2[1:].sum(axis=0)
        noise = np.median(spec2[out_rows], axis=0)
        floor = band_rows.sum() * noise + 1e-12 * total
        scores[ri] = np.where(floor > 0.0, band / np.where(floor > 0.0, floor, 1.0), 0.0)
    best_flat = int(np.argmax(scores))
    bi, ba = np.unravel_index(best_flat, scores.shape)
    best = scores[bi, ba]
    median = float(np.median(scores))
    if best < 10.0 * median or best <= 0.0:
        raise ExtractionError(
            "no target: best respiration-band score %.3g below 10x median %.3g"
            % (best, median)
        )
    return TargetBin(
        range_index=int(r_idx[bi]),
        range_m=float(r_idx[bi] * dr),
        angle_index=int(ba),
        angle_deg=float(angles_deg[ba]),
        selection_score=best,
    )
