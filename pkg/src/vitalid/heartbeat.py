"""Heartbeat feature extraction.

The complex baseband signal is twice differentiated (which emphasizes the
fast heartbeat motion over respiration), turned into a two-sided magnitude
spectrogram, integrated through a mel-spaced triangular filter bank kept
separate for positive and negative frequencies, and cepstrum-transformed.
The feature keeps the first K' cosine coefficients of each side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ExtractionError, InputError
from .io import ComplexSeries, SegmentMeta
from .signals import (
    DEFAULT_STFT_HOP,
    DEFAULT_STFT_WINDOW,
    Spectrogram,
    second_difference,
    stft,
)

DEFAULT_F_TILDE = 5.0  # Hz, mel knee
DEFAULT_F_PRIME = 1000.0  # Hz, mel reference
DEFAULT_N_FILTERS = 64  # L
DEFAULT_KEEP = 24  # K', coefficients kept per side

LOG_FLOOR_REL = 1e-12  # energy floor, relative to the max over both sides


@dataclass
class MelFilterBank:
    """Triangular filters with mel-spaced centers on [0, fs/2]."""

    size: int  # L
    centers: np.ndarray  # Hz, length L+2 (edge, L peaks, edge)
    f_tilde: float
    f_prime: float
    fs: float
    m_tilde: float  # mel scale constant

    def values(self, freqs: np.ndarray) -> np.ndarray:
        """Filter responses H_l(freqs), shape (L, len(freqs))."""
        f = np.asarray(freqs, dtype=np.float64)
        lo = self.centers[:-2, None]
        mid = self.centers[1:-1, None]
        hi = self.centers[2:, None]
        peak = 2.0 / (hi - lo)
        rising = (f[None, :] - lo) / (mid - lo)
        falling = (hi - f[None, :]) / (hi - mid)
        h = peak * np.minimum(rising, falling)
        return np.maximum(h, 0.0)


@dataclass
class MelEnergies:
    """Band energies for the positive and negative frequency sides."""

    pos: np.ndarray  # float64[L]
    neg: np.ndarray  # float64[L]


@dataclass
class HbFeature:
    """48-dim heartbeat cepstral feature."""

    r: np.ndarray  # float64[2K']
    meta: SegmentMeta
    floored: bool = False  # True when the log floor was triggered


def build_mel_bank(
    fs: float,
    f_tilde: float = DEFAULT_F_TILDE,
    f_prime: float = DEFAULT_F_PRIME,
    n_filters: int = DEFAULT_N_FILTERS,
) -> MelFilterBank:
    """Mel-spaced bank: centers f_l = f~ (exp(m_l/m~) - 1), l = 0 .. L+1.

    m~ = f'/log(f'/f~ + 1) and m_l = m~ (l/(L+1)) log(1 + fs/(2 f~)), which
    places f_0 at 0 and f_{L+1} at fs/2 by construction.
    """
    if fs <= 0 or f_tilde <= 0 or f_prime <= 0:
        raise InputError("fs, f_tilde, f_prime must be positive")
    if n_filters < 1:
        raise InputError("need at least one filter")
    m_tilde = f_prime / np.log(f_prime / f_tilde + 1.0)
    ell = np.arange(n_filters + 2, dtype=np.float64)
    m_ell = m_tilde * (ell / (n_filters + 1)) * np.log(1.0 + fs / (2.0 * f_tilde))
    centers = f_tilde * (np.exp(m_ell / m_tilde) - 1.0)
    return MelFilterBank(
        size=n_filters,
        centers=centers,
        f_tilde=f_tilde,
        f_prime=f_prime,
        fs=fs,
        m_tilde=float(m_tilde),
    )


def mel_energies(spec: Spectrogram, bank: MelFilterBank) -> MelEnergies:
    """Riemann-sum band energies of |S(t, f)| over each frequency side.

    S_l integrates over f >= 0 with H_l(f); S_{-l} over f < 0 with H_l(-f).
    Grid steps are the FFT bin width and the frame hop.
    """
    freqs = spec.freqs
    df = float(freqs[1] - freqs[0])
    fmax = float(freqs[-1])
    if abs(bank.fs - 2.0 * (fmax + df)) > 2.0 * df * (1.0 + 1e-9):
        raise InputError(
            "bank built for fs = %g Hz but spectrogram spans %g Hz"
            % (bank.fs, 2.0 * (fmax + df))
        )
    dt = spec.hop
    mag_time_sum = spec.magnitudes.sum(axis=0)  # integrate over frames
    pos_mask = freqs >= 0.0
    neg_mask = ~pos_mask
    h_pos = bank.values(freqs[pos_mask])
    h_neg = bank.values(-freqs[neg_mask])
    pos = (h_pos @ mag_time_sum[pos_mask]) * df * dt
    neg = (h_neg @ mag_time_sum[neg_mask]) * df * dt
    return MelEnergies(pos=pos, neg=neg)


def mfcc(energies: MelEnergies, n_coeff: int | None = None) -> tuple[np.ndarray, bool]:
    """Cosine-transform the log band energies of both sides.

    Returns (coeffs, floored) where coeffs is
    [C_{-(K-1)} ... C_{-0}, C_{+0} ... C_{+(K-1)}] with K = L, and floored
    records whether any energy had to be raised to the log floor.
    """
    l_count = energies.pos.size
    if energies.neg.size != l_count:
        raise InputError("positive/negative side lengths differ")
    if n_coeff is None:
        n_coeff = l_count
    if n_coeff != l_count:
        raise InputError(
            "cosine order K = %d must equal the filter count L = %d"
            % (n_coeff, l_count)
        )
    peak = max(float(energies.pos.max(initial=0.0)), float(energies.neg.max(initial=0.0)))
    floor = LOG_FLOOR_REL * peak if peak > 0 else np.finfo(np.float64).tiny
    pos = np.maximum(energies.pos, floor)
    neg = np.maximum(energies.neg, floor)
    floored = bool((energies.pos < floor).any() or (energies.neg < floor).any())
    ell = np.arange(l_count, dtype=np.float64)
    k = np.arange(n_coeff, dtype=np.float64)
    basis = np.cos(np.outer(k, (2.0 * ell + 1.0) * np.pi / n_coeff))  # (K, L)
    scale = 2.0 / (l_count + (k == 0).astype(np.float64))
    c_pos = scale * (basis @ np.log(pos))
    c_neg = scale * (basis @ np.log(neg))
    return np.concatenate([c_neg[::-1], c_pos]), floored


def hb_feature(
    s: ComplexSeries,
    meta: SegmentMeta,
    stft_window: float = DEFAULT_STFT_WINDOW,
    stft_hop: float = DEFAULT_STFT_HOP,
    f_tilde: float = DEFAULT_F_TILDE,
    f_prime: float = DEFAULT_F_PRIME,
    n_filters: int = DEFAULT_N_FILTERS,
    keep: int = DEFAULT_KEEP,
) -> HbFeature:
    """Complex segment -> 2K'-dim heartbeat feature vector."""
    if keep < 1 or keep > n_filters:
        raise InputError("keep must lie in [1, n_filters]")
    if s.duration < stft_window + 2.0 / s.rate:
        raise ExtractionError(
            "segment %.3g s too short for a %.3g s analysis window"
            % (s.duration, stft_window)
        )
    accel = second_difference(s)
    spec = stft(accel, window=stft_window, hop=stft_hop)
    bank = build_mel_bank(s.rate, f_tilde=f_tilde, f_prime=f_prime, n_filters=n_filters)
    energies = mel_energies(spec, bank)
    coeffs, floored = mfcc(energies)
    l_count = n_filters
    # coeffs = [C_{-(L-1)} .. C_{-0}, C_{+0} .. C_{+(L-1)}]; keep K' per side.
    neg_part = coeffs[l_count - keep : l_count]
    pos_part = coeffs[l_count : l_count + keep]
    r = np.concatenate([neg_part, pos_part])
    return HbFeature(r=r, meta=meta, floored=floored)
