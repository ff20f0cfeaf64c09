"""Respiratory feature extraction.

An 8 s sliding window of chest displacement is fitted with a modified
raised-cosine waveform (amplitude A, rate f, rise/fall roll-off factors
beta1/beta2, duty ratio D, time shift tau).  The exhale plateau of the
fitted model defines a support region on which a parabola is fitted; its
curvature joins the model parameters in a six-element instantaneous
vector, and the per-segment feature is the 24 moments (mean, std,
skewness, kurtosis) of those six elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateSupportError, ExtractionError, InputError
from .io import SegmentMeta
from .signals import DisplacementSeries

F_MIN, F_MAX = 0.1, 0.7  # physiological respiratory band, Hz
BETA_MIN = 0.02
DUTY_MIN, DUTY_MAX = 0.02, 0.98

# Coarse search grid; amplitude is closed-form per grid point.
F_GRID = np.round(np.arange(0.10, 0.70 + 1e-9, 0.02), 10)
BETA_GRID = np.round(np.arange(0.1, 1.0 + 1e-9, 0.1), 10)
DUTY_GRID = np.round(np.arange(0.1, 0.9 + 1e-9, 0.1), 10)
N_TAU = 16
_M_BINS = 128  # phase bins per cycle for the gridded shape table
N_STARTS = 3  # distinct shape combos raced per window
_RACE_DECIM = 4  # sample stride for the cheap racing stage
_RACE_MAXITER = 80

DEFAULT_WINDOW = 8.0  # s
DEFAULT_HOP = 1.0  # s
DEFAULT_EPS = 0.6  # plateau support threshold, fraction of A

FLAT_VARIANCE = 1e-12  # m^2; below this a window has no usable motion


@dataclass(frozen=True)
class MRCWParams:
    """One-cycle respiration waveform parameters."""

    amplitude: float  # A, m
    freq: float  # f, Hz
    beta1: float  # rise roll-off, (0, 1]
    beta2: float  # fall roll-off, (0, 1]
    duty: float  # D, (0, 1)
    tau: float  # time shift, s, in [0, 1/f)

    def __post_init__(self):
        if not (self.amplitude > 0):
            raise InputError("amplitude must be positive")
        if not (F_MIN <= self.freq <= F_MAX):
            raise InputError("freq %.4g outside [%g, %g] Hz" % (self.freq, F_MIN, F_MAX))
        if not (0.0 < self.beta1 <= 1.0 and 0.0 < self.beta2 <= 1.0):
            raise InputError("beta1/beta2 must lie in (0, 1]")
        if not (0.0 < self.duty < 1.0):
            raise InputError("duty must lie in (0, 1)")
        if not (0.0 <= self.tau < 1.0 / self.freq):
            raise InputError("tau must lie in [0, 1/f)")

    @property
    def period(self) -> float:
        return 1.0 / self.freq


@dataclass
class PlateauFit:
    """Parabola fitted over the exhale-plateau support."""

    c0: float  # m
    c1: float  # m/s
    c2: float  # m/s^2
    n_support: int


@dataclass
class InstantFeature:
    """Six-element instantaneous respiratory descriptor at window center t."""

    q: np.ndarray  # float64[6]
    t: float  # s


@dataclass
class WindowFit:
    """Full per-window fit output (feature plus diagnostics)."""

    feature: InstantFeature
    params: MRCWParams
    c2: float
    residual: float  # m^2 s


@dataclass
class RespFeature:
    """24-dim respiratory feature: [mean, std, skew, kurt] per q element."""

    r: np.ndarray  # float64[24]
    meta: SegmentMeta
    degenerate_dims: tuple[int, ...] = ()


def _unit_shape(x: np.ndarray, beta1: float, beta2: float, duty: float) -> np.ndarray:
    """One waveform cycle at unit amplitude over normalized phase x in [0, 1).

    Piece boundaries follow the printed model: plateau on
    (1/2 - Ta1, 1/2 + Ta2], half-cosine rise on (Tb1, 1/2 - Ta1],
    half-cosine fall on (1/2 + Ta2, 1 - Ta1], trough otherwise.
    """
    ta1 = duty * (1.0 - beta1) / 2.0
    ta2 = duty * (1.0 - beta2) / 2.0
    tb1 = (1.0 - duty) * (1.0 - beta1) / 2.0
    out = np.full(x.shape, -1.0)
    dist = np.abs(x - 0.5)
    m = (x > tb1) & (x <= 0.5 - ta1)
    out[m] = np.cos((2.0 * np.pi / beta1) * (dist[m] - ta1))
    m = (x > 0.5 - ta1) & (x <= 0.5 + ta2)
    out[m] = 1.0
    m = (x > 0.5 + ta2) & (x <= 1.0 - ta1)
    out[m] = np.cos((2.0 * np.pi / beta2) * (dist[m] - ta2))
    return out


def mrcw_eval(t, p: MRCWParams):
    """Evaluate the respiration waveform at time(s) t (seconds)."""
    scalar = np.isscalar(t)
    tt = np.asarray(t, dtype=np.float64)
    period = 1.0 / p.freq
    x = np.mod(tt - p.tau, period) * p.freq
    x = np.where(x >= 1.0, x - 1.0, x)
    vals = p.amplitude * _unit_shape(np.atleast_1d(x), p.beta1, p.beta2, p.duty)
    if scalar:
        return float(vals[0])
    return vals.reshape(tt.shape)


# ---------------------------------------------------------------------------
# Fitting: coarse grid with closed-form amplitude, then simplex refinement.
# ---------------------------------------------------------------------------

_TABLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _grid_tables(m_bins: int = _M_BINS):
    """Unit-amplitude shape table over (beta1, beta2, D) at binned phase."""
    cached = _TABLE_CACHE.get(m_bins)
    if cached is not None:
        return cached
    combos = np.array(
        [(b1, b2, dd) for b1 in BETA_GRID for b2 in BETA_GRID for dd in DUTY_GRID]
    )
    centers = (np.arange(m_bins) + 0.5) / m_bins
    table = np.empty((combos.shape[0], m_bins), dtype=np.float32)
    for i, (b1, b2, dd) in enumerate(combos):
        table[i] = _unit_shape(centers, b1, b2, dd)
    squares = table * table
    _TABLE_CACHE[m_bins] = (combos, table, squares)
    return combos, table, squares


def _coarse_starts(d_c: np.ndarray, t_rel: np.ndarray, n_starts: int) -> list[tuple]:
    """Top-scoring (f, beta1, beta2, D, phase-shift) grid cells, best first.

    Projection scores use phase-binned sums so all (shape, f, tau) cells
    reduce to three matrix products; tau enters as an integer bin roll.
    Returned starts have pairwise distinct (beta1, beta2, D) combos: the
    refinement stage gets stuck on a beta/duty ridge often enough that
    restarting from the runner-up shapes is what rescues those windows,
    while extra starts sharing the winning shape never help.
    """
    combos, table, squares = _grid_tables()
    m_bins = table.shape[1]
    n = d_c.size
    n_f = F_GRID.size

    phases = np.outer(F_GRID, t_rel)
    phases -= np.floor(phases)
    bins = (phases * m_bins).astype(np.int64)
    np.minimum(bins, m_bins - 1, out=bins)
    bins += (np.arange(n_f) * m_bins)[:, None]
    flat = bins.ravel()
    w_rows = np.bincount(flat, weights=np.tile(d_c, n_f), minlength=n_f * m_bins)
    c_rows = np.bincount(flat, minlength=n_f * m_bins).astype(np.float64)
    w_rows = w_rows.reshape(n_f, m_bins)
    c_rows = c_rows.reshape(n_f, m_bins)

    delta = m_bins // N_TAU
    roll = (np.arange(m_bins)[None, :] + delta * np.arange(N_TAU)[:, None]) % m_bins
    w_all = w_rows[:, roll].reshape(n_f * N_TAU, m_bins).T.astype(np.float32)
    c_all = c_rows[:, roll].reshape(n_f * N_TAU, m_bins).T.astype(np.float32)

    num = table @ w_all  # <d, u> per (shape, f, tau)
    den = squares @ c_all  # <u, u>
    usum = table @ c_all  # sum of u, for mean removal
    den_c = den - (usum * usum) / np.float32(n)
    np.maximum(num, 0.0, out=num)  # amplitude must stay positive
    score = (num * num) / np.maximum(den_c, np.float32(1e-6))

    starts: list[tuple] = []
    seen: set[int] = set()
    for idx in np.argsort(-score, axis=None):
        combo_idx, col = np.unravel_index(int(idx), score.shape)
        if combo_idx in seen:
            continue
        seen.add(int(combo_idx))
        f_idx, k = divmod(int(col), N_TAU)
        b1, b2, dd = combos[combo_idx]
        starts.append((float(F_GRID[f_idx]), float(b1), float(b2), float(dd), k / N_TAU))
        if len(starts) == n_starts:
            break
    return starts


def _clamp_theta(theta):
    f, b1, b2, dd, phi = theta
    f = min(max(f, F_MIN), F_MAX)
    b1 = min(max(b1, BETA_MIN), 1.0)
    b2 = min(max(b2, BETA_MIN), 1.0)
    dd = min(max(dd, DUTY_MIN), DUTY_MAX)
    return f, b1, b2, dd, phi


def _projection(theta, t_rel, d_c):
    """Centered unit shape for theta and its projection statistics."""
    f, b1, b2, dd, phi = _clamp_theta(theta)
    x = t_rel * f - phi
    x -= np.floor(x)
    u = _unit_shape(x, b1, b2, dd)
    u -= u.mean()
    uu = float(u @ u)
    du = float(d_c @ u)
    return u, uu, du


def _objective(theta, t_rel, d_c, dd_total):
    # Relative residual of the best positive-amplitude fit for this shape.
    _, uu, du = _projection(theta, t_rel, d_c)
    if uu <= 1e-20 or du <= 0.0:
        return 1.0
    return 1.0 - (du * du) / (uu * dd_total)


def mrcw_fit(
    window: DisplacementSeries, w_length: float = DEFAULT_WINDOW
) -> tuple[MRCWParams, float]:
    """Fit the respiration model to one displacement window.

    Coarse grid over (f, beta1, beta2, D, tau) with closed-form amplitude,
    then two-stage simplex refinement: the top N_STARTS distinct shape
    combos race with cheap Nelder-Mead runs on a decimated window, and
    only the winner gets the full-resolution polish (clamped to the valid
    ranges).  Returns the parameters and the integrated squared residual
    (m^2 s) of the mean-removed window.
    """
    wlen = int(round(w_length * window.rate))
    if window.n < wlen:
        raise InputError(
            "window %.3g s shorter than fit length %.3g s" % (window.duration, w_length)
        )
    d = window.values[:wlen].astype(np.float64)
    d_c = d - d.mean()
    dd_total = float(d_c @ d_c)
    if dd_total / wlen < FLAT_VARIANCE:
        raise ExtractionError("no respiration: window variance below 1e-12 m^2")
    t_rel = np.arange(wlen) / window.rate

    dec_d = d[::_RACE_DECIM]
    dec_c = dec_d - dec_d.mean()
    dec_total = float(dec_c @ dec_c)
    dec_t = t_rel[::_RACE_DECIM]

    starts = _coarse_starts(d_c, t_rel, N_STARTS)
    cands = []
    for start in starts:
        x0 = np.array(start)
        cheap = minimize(
            _objective,
            x0,
            args=(dec_t, dec_c, dec_total),
            method="Nelder-Mead",
            options=dict(maxiter=_RACE_MAXITER, xatol=1e-3, fatol=1e-6),
        )
        keep = cheap.x if cheap.fun <= _objective(x0, dec_t, dec_c, dec_total) else x0
        cands.append(keep)
    full = [_objective(c, t_rel, d_c, dd_total) for c in cands]
    x1 = cands[int(np.argmin(full))]

    result = minimize(
        _objective,
        x1,
        args=(t_rel, d_c, dd_total),
        method="Nelder-Mead",
        options=dict(maxiter=200, xatol=1e-6, fatol=1e-6),
    )
    theta = result.x if result.fun <= _objective(x1, t_rel, d_c, dd_total) else x1
    f, b1, b2, dd, phi = _clamp_theta(theta)
    _, uu, du = _projection((f, b1, b2, dd, phi), t_rel, d_c)
    if uu <= 1e-20 or du <= 0.0:
        raise ExtractionError("no respiration: fit amplitude collapsed")
    amplitude = du / uu
    tau = (phi % 1.0) / f
    params = MRCWParams(
        amplitude=amplitude, freq=f, beta1=b1, beta2=b2, duty=dd, tau=tau
    )
    residual = (dd_total - du * du / uu) / window.rate
    return params, max(residual, 0.0)


def plateau_parabola_fit(
    window: DisplacementSeries, fitted: MRCWParams, eps: float = DEFAULT_EPS
) -> PlateauFit:
    """Least-squares parabola over the samples where the fitted model
    stays at or above eps * A.

    Disjoint support runs (plateaus of different cycles) are fitted
    separately with time re-centered per run; coefficients are averaged
    over runs weighted by run length.
    """
    if not (0.0 < eps <= 1.0):
        raise InputError("eps must lie in (0, 1]")
    t_rel = np.arange(window.n) / window.rate
    model = mrcw_eval(t_rel, fitted)
    mask = model >= eps * fitted.amplitude
    if not mask.any():
        raise DegenerateSupportError("plateau support is empty")
    # Contiguous support runs.
    edges = np.flatnonzero(np.diff(mask.astype(np.int8)))
    starts = np.concatenate([[0], edges + 1])
    ends = np.concatenate([edges + 1, [mask.size]])
    coeffs = []
    lengths = []
    for s, e in zip(starts, ends):
        if not mask[s]:
            continue
        run = e - s
        if run < 3:
            continue
        tc = t_rel[s:e]
        tc = tc - 0.5 * (tc[0] + tc[-1])
        c2, c1, c0 = np.polyfit(tc, window.values[s:e], 2)
        coeffs.append((c0, c1, c2))
        lengths.append(run)
    if not coeffs:
        raise DegenerateSupportError(
            "plateau support has no run of 3 or more samples"
        )
    weights = np.asarray(lengths, dtype=np.float64)
    weights /= weights.sum()
    c0, c1, c2 = (np.asarray(coeffs, dtype=np.float64) * weights[:, None]).sum(axis=0)
    return PlateauFit(c0=float(c0), c1=float(c1), c2=float(c2), n_support=int(sum(lengths)))


def window_fits(
    d: DisplacementSeries,
    hop: float = DEFAULT_HOP,
    w_length: float = DEFAULT_WINDOW,
    eps: float = DEFAULT_EPS,
) -> tuple[list[WindowFit], int]:
    """Slide the fit window across a segment; returns (fits, n_rejected)."""
    if d.duration < w_length:
        raise InputError("segment shorter than the %g s fit window" % w_length)
    if hop <= 0:
        raise InputError("hop must be positive")
    wlen = int(round(w_length * d.rate))
    hlen = max(1, int(round(hop * d.rate)))
    fits: list[WindowFit] = []
    rejected = 0
    for start in range(0, d.n - wlen + 1, hlen):
        chunk = DisplacementSeries(
            values=d.values[start : start + wlen],
            rate=d.rate,
            t0=d.t0 + start / d.rate,
        )
        try:
            params, residual = mrcw_fit(chunk, w_length)
            plateau = plateau_parabola_fit(chunk, params, eps)
        except ExtractionError:
            rejected += 1
            continue
        q = np.array(
            [
                params.freq,
                params.duty,
                params.beta1 + params.beta2,
                abs(params.beta1 - params.beta2),
                (params.beta1 + params.beta2) / params.freq,
                plateau.c2,
            ]
        )
        t_center = d.t0 + (start + 0.5 * wlen) / d.rate
        fits.append(
            WindowFit(
                feature=InstantFeature(q=q, t=t_center),
                params=params,
                c2=plateau.c2,
                residual=residual,
            )
        )
    return fits, rejected


def instantaneous_features(
    d: DisplacementSeries,
    hop: float = DEFAULT_HOP,
    w_length: float = DEFAULT_WINDOW,
    eps: float = DEFAULT_EPS,
) -> list[InstantFeature]:
    fits, rejected = window_fits(d, hop=hop, w_length=w_length, eps=eps)
    if not fits:
        raise ExtractionError(
            "all %d windows rejected; no instantaneous features" % rejected
        )
    return [w.feature for w in fits]


def _moments(x: np.ndarray) -> tuple[float, float, float, float, bool]:
    mu = float(x.mean())
    centered = x - mu
    var = float((centered**2).mean())
    sigma = np.sqrt(var)
    if sigma <= 1e-9 * max(abs(mu), 1e-30):
        return mu, 0.0, 0.0, 3.0, True  # constant-series convention
    skew = float((centered**3).mean()) / sigma**3
    kurt = float((centered**4).mean()) / sigma**4
    return mu, sigma, skew, kurt, False


def resp_statistics(features: list[InstantFeature], meta: SegmentMeta) -> RespFeature:
    """Aggregate instantaneous vectors into the 24-dim segment feature.

    Population moments (divisor N); kurtosis is non-excess.  Order is
    [mean, std, skew, kurt] for q1, then q2, ... q6.
    """
    if len(features) < 4:
        raise ExtractionError(
            "need at least 4 instantaneous features, got %d" % len(features)
        )
    q = np.stack([f.q for f in features])  # (n, 6)
    out = np.empty(24)
    degenerate = []
    for col in range(6):
        mu, sigma, skew, kurt, flat = _moments(q[:, col])
        out[4 * col : 4 * col + 4] = (mu, sigma, skew, kurt)
        if flat:
            degenerate.append(col)
    return RespFeature(r=out, meta=meta, degenerate_dims=tuple(degenerate))


def resp_feature(
    d: DisplacementSeries,
    meta: SegmentMeta,
    hop: float = DEFAULT_HOP,
    w_length: float = DEFAULT_WINDOW,
    eps: float = DEFAULT_EPS,
) -> RespFeature:
    """Displacement segment -> 24-dim respiratory feature vector."""
    return resp_statistics(
        instantaneous_features(d, hop=hop, w_length=w_length, eps=eps), meta
    )
