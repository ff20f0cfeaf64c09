"""Synthetic ground-truth generator.

Builds complex radar baseband segments for artificial subjects whose chest
displacement is a per-cycle-jittered respiration waveform plus a harmonic
heartbeat with per-beat timing jitter.  Ground truth is retained so every
downstream stage can be verified without recorded data.

Randomness: numpy PCG64 throughout.  A population run derives one child
seed per (subject, segment) via SeedSequence([root_seed, subject_index,
segment_index]), so any segment can be regenerated in isolation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .io import ComplexSeries, SegmentMeta, save_cw_record
from .respiration import MRCWParams, _unit_shape

DEFAULT_WAVELENGTH = 3.8e-3  # m

# Documented population constants.  Subject means are drawn uniformly from
# these ranges; per-cycle jitter is Gaussian with std = JITTER_FRAC * mean.
RESP_AMP_RANGE = (1.2e-3, 2.8e-3)  # m
RESP_FREQ_RANGE = (0.16, 0.44)  # Hz
RESP_BETA_RANGE = (0.35, 0.90)
DUTY_OFFSET_RANGE = (0.008, 0.030)  # added to the continuity duty
JITTER_FRAC = 0.05
HB_FREQ_RANGE = (0.9, 1.8)  # Hz
HB_MAX_HARMONICS = 6
HB_TOTAL_AMP = 0.30e-3  # m, sum of harmonic amplitudes
HB_PERIOD_JITTER = 0.02  # s
HB_HARMONIC_DECAY = 0.7  # amplitude envelope ~ h^-decay

# Per-parameter jitter scales used for the separation requirement
# (amplitude, freq, beta1, beta2, duty, hb fundamental).
SEPARATION_SCALES = np.array([1.0e-4, 0.015, 0.031, 0.031, 0.025, 0.04])
SEPARATION_MIN_SIGMA = 3.0  # min pairwise distance in jitter-std units


def continuity_duty(beta1: float, beta2: float) -> float:
    """Duty ratio at which the waveform's last piece meets the trough."""
    return (1.0 - beta2) / (2.0 - beta1 - beta2)


@dataclass
class SubjectProfile:
    """Generative description of one synthetic subject."""

    amplitude: float  # mean A, m
    freq: float  # mean respiratory rate, Hz
    beta1: float
    beta2: float
    duty_offset: float  # duty = continuity_duty(beta1, beta2) + offset
    hb_freq: float  # heartbeat fundamental, Hz
    hb_amps: np.ndarray  # harmonic displacement amplitudes, m
    jitter_frac: float = JITTER_FRAC
    hb_period_jitter: float = HB_PERIOD_JITTER  # s
    chest_gain: float = 1.0

    def __post_init__(self):
        self.hb_amps = np.asarray(self.hb_amps, dtype=np.float64)
        if self.hb_amps.size > 8:
            raise InputError("at most 8 heartbeat harmonics")
        total = float(self.hb_amps.sum()) * self.chest_gain
        if total > 0.5e-3 + 1e-12:
            raise InputError(
                "harmonic displacement sum %.3g m exceeds 0.5 mm" % total
            )
        if not (0.8 <= self.hb_freq <= 2.0):
            raise InputError("heartbeat fundamental outside [0.8, 2.0] Hz")

    @property
    def duty(self) -> float:
        return continuity_duty(self.beta1, self.beta2) + self.duty_offset

    def separation_vector(self) -> np.ndarray:
        raw = np.array(
            [self.amplitude, self.freq, self.beta1, self.beta2, self.duty, self.hb_freq]
        )
        return raw / SEPARATION_SCALES


@dataclass
class SynthTruth:
    """Everything needed to reproduce or check a synthesized segment."""

    resp_cycles: list  # (start time s, MRCWParams) per cycle
    beat_times: np.ndarray  # s, start of each heartbeat cycle
    harmonic_phases: np.ndarray  # rad, per harmonic
    displacement: np.ndarray  # m, the exact noiseless d(t)
    profile: SubjectProfile


@dataclass
class SynthSegment:
    series: ComplexSeries
    truth: SynthTruth
    subject_id: str
    snr: float  # dB; inf for noiseless
    meta: SegmentMeta = field(default=None)


def _make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _resp_trajectory(profile, rng, t, t0_length):
    """Per-cycle jittered respiration displacement on the sample grid t."""
    jf = profile.jitter_frac
    d = np.zeros(t.size)
    cycles = []
    cursor = -rng.uniform(0.0, 1.0) / profile.freq  # random initial phase
    while cursor < t0_length:
        a_c = profile.amplitude * max(0.2, 1.0 + jf * rng.standard_normal())
        f_c = float(np.clip(profile.freq * (1.0 + jf * rng.standard_normal()), 0.12, 0.65))
        b1_c = float(np.clip(profile.beta1 * (1.0 + jf * rng.standard_normal()), 0.05, 1.0))
        b2_c = float(np.clip(profile.beta2 * (1.0 + jf * rng.standard_normal()), 0.05, 1.0))
        off_c = profile.duty_offset * (1.0 + jf * rng.standard_normal())
        d_c = float(np.clip(continuity_duty(b1_c, b2_c) + off_c, 0.03, 0.97))
        params = MRCWParams(
            amplitude=a_c, freq=f_c, beta1=b1_c, beta2=b2_c, duty=d_c, tau=0.0
        )
        period = 1.0 / f_c
        lo = np.searchsorted(t, cursor, side="left")
        hi = np.searchsorted(t, cursor + period, side="left")
        if hi > lo:
            x = (t[lo:hi] - cursor) * f_c
            x = np.clip(x, 0.0, np.nextafter(1.0, 0.0))
            d[lo:hi] = a_c * _unit_shape(x, b1_c, b2_c, d_c)
        cycles.append((cursor, params))
        cursor += period
    return d, cycles


def _hb_trajectory(profile, rng, t, t0_length):
    """Harmonic heartbeat displacement with per-beat period jitter."""
    n_h = profile.hb_amps.size
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_h)
    if n_h == 0 or profile.hb_amps.sum() == 0.0:
        return np.zeros(t.size), np.empty(0), phases
    nominal = 1.0 / profile.hb_freq
    start = -rng.uniform(0.0, 1.0) * nominal
    beats = [start]
    while beats[-1] < t0_length:
        period = nominal + rng.normal(0.0, profile.hb_period_jitter)
        period = float(np.clip(period, 0.5 * nominal, 2.0 * nominal))
        beats.append(beats[-1] + period)
    beats = np.asarray(beats)
    # Piecewise-linear beat phase: one full turn per beat interval.
    k = np.searchsorted(beats, t, side="right") - 1
    frac = (t - beats[k]) / (beats[k + 1] - beats[k])
    phi = 2.0 * np.pi * (k + frac)
    d = np.zeros(t.size)
    for h in range(1, n_h + 1):
        d += profile.hb_amps[h - 1] * np.sin(h * phi + phases[h - 1])
    return profile.chest_gain * d, beats, phases


def synth_segment(
    profile: SubjectProfile,
    t0_length: float,
    fs: float,
    snr_db: float,
    seed,
    wavelength: float = DEFAULT_WAVELENGTH,
    subject_id: str = "synth",
    meta: SegmentMeta | None = None,
) -> SynthSegment:
    """Generate one complex baseband segment with known ground truth.

    s(t) = exp(j 4 pi d(t) / wavelength) + complex white noise at snr_db
    (relative to the unit carrier power).  snr_db = inf disables noise.
    """
    if t0_length < 8.0:
        raise InputError("segments must be at least 8 s long")
    n_h = profile.hb_amps.size
    if n_h and fs < 20.0 * n_h * profile.hb_freq:
        raise InputError(
            "rate %.3g Hz below 20x the top heartbeat harmonic %.3g Hz"
            % (fs, n_h * profile.hb_freq)
        )
    rng = _make_rng(seed)
    n = int(round(t0_length * fs))
    t = np.arange(n) / fs
    d_resp, cycles = _resp_trajectory(profile, rng, t, t0_length)
    d_hb, beats, phases = _hb_trajectory(profile, rng, t, t0_length)
    d = d_resp + d_hb
    phase = (4.0 * np.pi / wavelength) * d
    step = float(np.max(np.abs(np.diff(phase))))
    if step >= np.pi:
        raise InputError(
            "per-sample phase step %.3g rad >= pi; lower the displacement "
            "amplitudes or raise the sample rate" % step
        )
    signal = np.exp(1j * phase)
    if np.isfinite(snr_db):
        sigma = 10.0 ** (-snr_db / 20.0)
        noise = rng.standard_normal((2, n))
        signal = signal + (sigma / np.sqrt(2.0)) * (noise[0] + 1j * noise[1])
    if meta is None:
        meta = SegmentMeta(
            subject_id=subject_id,
            session_id="synth",
            day_index=0,
            segment_index=0,
            duration=t0_length,
        )
    series = ComplexSeries(samples=signal, rate=fs, t0=0.0)
    truth = SynthTruth(
        resp_cycles=cycles,
        beat_times=beats,
        harmonic_phases=phases,
        displacement=d,
        profile=profile,
    )
    return SynthSegment(
        series=series, truth=truth, subject_id=meta.subject_id, snr=snr_db, meta=meta
    )


def draw_profile(rng: np.random.Generator, fs: float = 100.0) -> SubjectProfile:
    """Draw one subject from the documented uniform ranges."""
    amplitude = rng.uniform(*RESP_AMP_RANGE)
    freq = rng.uniform(*RESP_FREQ_RANGE)
    beta1 = rng.uniform(*RESP_BETA_RANGE)
    beta2 = rng.uniform(*RESP_BETA_RANGE)
    duty_offset = rng.uniform(*DUTY_OFFSET_RANGE)
    hb_freq = rng.uniform(*HB_FREQ_RANGE)
    # Harmonic count limited by the sample-rate precondition.
    n_h = min(HB_MAX_HARMONICS, int(fs / (20.0 * hb_freq)))
    if n_h < 1:
        raise InputError(
            "rate %.3g Hz cannot carry a heartbeat fundamental at %.3g Hz"
            % (fs, hb_freq)
        )
    h = np.arange(1, n_h + 1, dtype=np.float64)
    envelope = rng.uniform(0.25, 1.0, size=n_h) * h ** (-HB_HARMONIC_DECAY)
    amps = envelope / envelope.sum() * HB_TOTAL_AMP
    return SubjectProfile(
        amplitude=amplitude,
        freq=freq,
        beta1=beta1,
        beta2=beta2,
        duty_offset=duty_offset,
        hb_freq=hb_freq,
        hb_amps=amps,
    )


def draw_profiles(
    n_subjects: int, seed, fs: float = 100.0, max_tries: int = 500
) -> list[SubjectProfile]:
    """Draw subjects enforcing pairwise separation of at least
    SEPARATION_MIN_SIGMA jitter-std units between mean parameter vectors."""
    rng = _make_rng(seed)
    profiles: list[SubjectProfile] = []
    vectors: list[np.ndarray] = []
    for _ in range(n_subjects):
        for attempt in range(max_tries):
            cand = draw_profile(rng, fs)
            v = cand.separation_vector()
            if all(
                np.linalg.norm(v - u) >= SEPARATION_MIN_SIGMA for u in vectors
            ):
                profiles.append(cand)
                vectors.append(v)
                break
        else:
            raise InputError(
                "could not draw %d separated subjects in %d tries"
                % (n_subjects, max_tries)
            )
    return profiles


def _session_labels(seg_idx: int, n_segments: int) -> tuple[int, str]:
    # Spread segments over 5 days x 2 half-day sessions.
    block = min(9, seg_idx * 10 // max(1, n_segments))
    day = block // 2
    half = "am" if block % 2 == 0 else "pm"
    return day, "d%d-%s" % (day, half)


def synth_population(
    n_subjects: int,
    n_segments_each: int,
    t0_length: float,
    fs: float = 100.0,
    snr_db: float = 20.0,
    seed: int = 0,
    profiles: list[SubjectProfile] | None = None,
    wavelength: float = DEFAULT_WAVELENGTH,
) -> list[SynthSegment]:
    """Generate a labeled population of segments.

    Profiles may be supplied explicitly (e.g. identical profiles for a
    null experiment); otherwise they are drawn with enforced separation.
    """
    if n_subjects < 2:
        raise InputError("need at least 2 subjects")
    if profiles is None:
        profiles = draw_profiles(n_subjects, np.random.SeedSequence([seed, 0]), fs)
    elif len(profiles) != n_subjects:
        raise InputError("profile count does not match n_subjects")
    segments: list[SynthSegment] = []
    for subj in range(n_subjects):
        sid = "s%02d" % subj
        for seg in range(n_segments_each):
            day, session = _session_labels(seg, n_segments_each)
            meta = SegmentMeta(
                subject_id=sid,
                session_id=session,
                day_index=day,
                segment_index=seg,
                duration=t0_length,
            )
            child = np.random.SeedSequence([seed, subj, seg])
            segments.append(
                synth_segment(
                    profiles[subj],
                    t0_length,
                    fs,
                    snr_db,
                    child,
                    wavelength=wavelength,
                    subject_id=sid,
                    meta=meta,
                )
            )
    return segments


def write_dataset(segments: list[SynthSegment], out_dir: str, fmt: str = "bin") -> str:
    """Write CW-format records plus a manifest CSV; returns the manifest path."""
    if fmt not in ("bin", "csv"):
        raise InputError("fmt must be 'bin' or 'csv'")
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(
            "subject_id,session_id,day_index,segment_index,file,rate_hz,"
            "duration_s,snr_db\n"
        )
        for seg in segments:
            name = "%s_seg%03d.%s" % (seg.meta.subject_id, seg.meta.segment_index, fmt)
            save_cw_record(os.path.join(out_dir, name), seg.series)
            fh.write(
                "%s,%s,%d,%d,%s,%.10g,%.10g,%s\n"
                % (
                    seg.meta.subject_id,
                    seg.meta.session_id,
                    seg.meta.day_index,
                    seg.meta.segment_index,
                    name,
                    seg.series.rate,
                    seg.meta.duration,
                    ("inf" if not np.isfinite(seg.snr) else "%.10g" % seg.snr),
                )
            )
    return manifest
