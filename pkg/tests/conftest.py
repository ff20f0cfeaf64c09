import numpy as np
import pytest

from vitalid.io import ComplexSeries, RadarParams, SegmentMeta


@pytest.fixture
def radar_params() -> RadarParams:
    """79 GHz MIMO front end used throughout the FMCW tests."""
    return RadarParams(
        center_frequency=79.0e9,
        bandwidth=3.6e9,
        n_tx=3,
        n_rx=4,
        tx_spacing=7.6e-3,
        rx_spacing=1.9e-3,
        slow_time_rate=100.0,
        wavelength=3.8e-3,
        range_resolution=44.7e-3,
    )


@pytest.fixture
def meta() -> SegmentMeta:
    return SegmentMeta(
        subject_id="s00", session_id="d0-am", day_index=0,
        segment_index=0, duration=60.0,
    )


def make_series(values, rate=100.0, t0=0.0) -> ComplexSeries:
    return ComplexSeries(samples=np.asarray(values, dtype=np.complex128), rate=rate, t0=t0)


def smooth_displacement(rng, n, rate, amp=3e-3, n_modes=4, f_max=0.8):
    """Random band-limited displacement, peak |d| close to amp."""
    t = np.arange(n) / rate
    d = np.zeros(n)
    for _ in range(n_modes):
        f = rng.uniform(0.05, f_max)
        phase = rng.uniform(0, 2 * np.pi)
        d += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * f * t + phase)
    d *= amp / np.max(np.abs(d))
    return d
