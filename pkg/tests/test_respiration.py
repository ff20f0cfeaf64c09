"""Respiration model, plateau curvature, and moment statistics."""

import numpy as np
import pytest

from vitalid.errors import DegenerateSupportError, ExtractionError, InputError
from vitalid.io import SegmentMeta
from vitalid.respiration import (
    InstantFeature,
    MRCWParams,
    instantaneous_features,
    mrcw_eval,
    mrcw_fit,
    plateau_parabola_fit,
    resp_feature,
    resp_statistics,
    window_fits,
)
from vitalid.signals import DisplacementSeries

RATE = 100.0


def _series(values, rate=RATE, t0=0.0):
    return DisplacementSeries(values=np.asarray(values, dtype=np.float64), rate=rate, t0=t0)


def _random_params(rng) -> MRCWParams:
    f = rng.uniform(0.1, 0.7)
    return MRCWParams(
        amplitude=rng.uniform(0.5e-3, 5e-3),
        freq=f,
        beta1=rng.uniform(0.05, 1.0),
        beta2=rng.uniform(0.05, 1.0),
        duty=rng.uniform(0.1, 0.9),
        tau=rng.uniform(0.0, 1.0 / f) * 0.999,
    )


def _piece_bounds(p: MRCWParams):
    """Normalized-phase piece boundaries (rise start, plateau, fall end)."""
    ta1 = p.duty * (1.0 - p.beta1) / 2.0
    ta2 = p.duty * (1.0 - p.beta2) / 2.0
    tb1 = (1.0 - p.duty) * (1.0 - p.beta1) / 2.0
    return ta1, ta2, tb1


# ---------------------------------------------------------------------------
# waveform evaluation
# ---------------------------------------------------------------------------


def test_waveform_peak_and_trough():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = _random_params(rng)
        assert mrcw_eval(p.tau + 0.5 * p.period, p) == pytest.approx(p.amplitude, abs=1e-15)
        assert mrcw_eval(p.tau, p) == pytest.approx(-p.amplitude, abs=1e-15)


def test_waveform_rise_boundaries_join():
    # the half-cosine rise meets -A at its start and +A at its end
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = _random_params(rng)
        ta1, _, tb1 = _piece_bounds(p)
        t_start = p.tau + tb1 * p.period
        t_top = p.tau + (0.5 - ta1) * p.period
        assert mrcw_eval(t_start, p) == pytest.approx(-p.amplitude, rel=1e-12)
        assert mrcw_eval(t_top, p) == pytest.approx(p.amplitude, rel=1e-12)
        just_after = mrcw_eval(t_start + 1e-9 * p.period, p)
        assert abs(just_after - (-p.amplitude)) < 1e-5 * p.amplitude


def test_waveform_fall_boundary_jump_matches_formula():
    # the fall piece ends at phase 1 - Ta1 with a step whose height follows
    # from evaluating the fall half-cosine there; kept as printed
    p = MRCWParams(amplitude=1.0, freq=0.25, beta1=0.5, beta2=0.5, duty=0.3, tau=0.0)
    ta1, ta2, _ = _piece_bounds(p)
    left_phase = 1.0 - ta1 - 1e-9
    left = mrcw_eval(left_phase * p.period, p)
    expect_left = np.cos((2.0 * np.pi / p.beta2) * (0.5 - ta1 - ta2))
    assert left == pytest.approx(expect_left, abs=1e-6)
    right = mrcw_eval((1.0 - ta1 + 1e-9) * p.period, p)
    assert right == pytest.approx(-1.0, abs=1e-12)
    assert abs(left - right) > 0.5  # the printed form is discontinuous here


def test_waveform_periodicity():
    # dyadic tau and rate keep the phase arithmetic exact, so periodicity is bitwise
    p = MRCWParams(amplitude=2e-3, freq=0.25, beta1=0.7, beta2=0.4, duty=0.6, tau=0.25)
    t = np.arange(0, 8, 1.0 / 64)
    np.testing.assert_array_equal(mrcw_eval(t, p), mrcw_eval(t + 4.0, p))
    q = MRCWParams(amplitude=2e-3, freq=0.3, beta1=0.7, beta2=0.4, duty=0.6, tau=0.3)
    t2 = np.linspace(0.0, 20.0, 4001)
    assert np.max(np.abs(mrcw_eval(t2 + 1.0 / 0.3, q) - mrcw_eval(t2, q))) < 1e-9


def test_waveform_bounded():
    rng = np.random.default_rng(2)
    t = np.linspace(0.0, 30.0, 20001)
    for _ in range(30):
        p = _random_params(rng)
        v = mrcw_eval(t, p)
        assert v.min() >= -p.amplitude - 1e-12
        assert v.max() <= p.amplitude + 1e-12


def test_waveform_long_plateau_asymmetric_flanks():
    # slow-exhale profile: wide top, rise slower than fall
    p = MRCWParams(amplitude=1.0, freq=0.4, beta1=0.9, beta2=0.6, duty=0.9, tau=0.0)
    x = (np.arange(100000) + 0.5) / 100000
    v = mrcw_eval(x * p.period, p)
    ta1, ta2, tb1 = _piece_bounds(p)
    assert np.mean(v == 1.0) == pytest.approx(ta1 + ta2, abs=1e-3)
    assert np.mean(v == -1.0) == pytest.approx(tb1 + ta1, abs=1e-3)
    rise = v[(x > tb1) & (x <= 0.5 - ta1)]
    fall = v[(x > 0.5 + ta2) & (x <= 1.0 - ta1)]
    assert rise.size > fall.size
    assert np.all(np.diff(rise) >= 0)
    assert np.all(np.diff(fall) <= 0)


def test_waveform_smooth_within_pieces():
    rng = np.random.default_rng(3)
    m = 200000
    x = (np.arange(m) + 0.5) / m
    for _ in range(20):
        p = _random_params(rng)
        ta1, ta2, tb1 = _piece_bounds(p)
        v = mrcw_eval(p.tau + x * p.period, p)
        jumps = np.abs(np.diff(v))
        slope_bound = p.amplitude * 2.0 * np.pi / (min(p.beta1, p.beta2) * m)
        # exclude the four piece boundaries from the slope check
        boundary = np.zeros(m - 1, dtype=bool)
        for b in (tb1, 0.5 - ta1, 0.5 + ta2, 1.0 - ta1):
            k = int(b * m)
            boundary[max(k - 2, 0) : k + 2] = True
        assert np.max(jumps[~boundary]) <= slope_bound * 1.01 + 1e-12


def test_waveform_param_validation():
    good = dict(amplitude=1e-3, freq=0.3, beta1=0.5, beta2=0.5, duty=0.5, tau=0.0)
    for bad in (
        dict(amplitude=0.0),
        dict(freq=0.05),
        dict(freq=0.8),
        dict(beta1=0.0),
        dict(beta2=1.2),
        dict(duty=0.0),
        dict(duty=1.0),
        dict(tau=4.0),
        dict(tau=-0.1),
    ):
        with pytest.raises(InputError):
            MRCWParams(**{**good, **bad})


# ---------------------------------------------------------------------------
# model fitting
# ---------------------------------------------------------------------------

TRUE = MRCWParams(amplitude=2e-3, freq=0.3, beta1=0.5, beta2=0.5, duty=0.5, tau=0.0)


def _waveform(params, n=800, rate=RATE, shift=0.0):
    t = np.arange(n) / rate
    return mrcw_eval(t - shift, params)


def _relative_residual(d_c, f, b1, b2, duty, tau, rate=RATE):
    """Best-amplitude relative residual for a fixed shape, from public eval."""
    t = np.arange(d_c.size) / rate
    u = mrcw_eval(
        t, MRCWParams(amplitude=1.0, freq=f, beta1=b1, beta2=b2, duty=duty,
                      tau=tau % (1.0 / f))
    )
    uc = u - u.mean()
    du = float(d_c @ uc)
    uu = float(uc @ uc)
    if uu <= 1e-20 or du <= 0.0:
        return 1.0
    return 1.0 - du * du / (uu * float(d_c @ d_c))


def test_fit_recovers_noiseless():
    d = _waveform(TRUE)
    p, residual = mrcw_fit(_series(d))
    assert abs(p.freq - TRUE.freq) <= 0.01
    assert abs(p.beta1 - TRUE.beta1) <= 0.05
    assert abs(p.beta2 - TRUE.beta2) <= 0.05
    assert abs(p.duty - TRUE.duty) <= 0.03
    assert abs(p.amplitude - TRUE.amplitude) <= 0.02 * TRUE.amplitude
    assert 0.0 <= p.tau < 1.0 / p.freq
    assert residual <= 1e-12


def test_fit_recovers_off_grid_params():
    truth = MRCWParams(amplitude=1.7e-3, freq=0.37, beta1=0.45, beta2=0.65,
                       duty=0.55, tau=0.9)
    p, _ = mrcw_fit(_series(_waveform(truth)))
    assert abs(p.freq - truth.freq) <= 0.01
    assert abs(p.beta1 - truth.beta1) <= 0.05
    assert abs(p.beta2 - truth.beta2) <= 0.05
    assert abs(p.duty - truth.duty) <= 0.03
    assert abs(p.amplitude - truth.amplitude) <= 0.02 * truth.amplitude


def test_fit_amplitude_closed_form():
    # returned A equals the least-squares projection for the returned shape
    d = _waveform(TRUE)
    p, _ = mrcw_fit(_series(d))
    t = np.arange(d.size) / RATE
    u = mrcw_eval(t, MRCWParams(amplitude=1.0, freq=p.freq, beta1=p.beta1,
                                beta2=p.beta2, duty=p.duty, tau=p.tau))
    uc = u - u.mean()
    d_c = d - d.mean()
    a_proj = float(d_c @ uc) / float(uc @ uc)
    assert abs(p.amplitude - a_proj) <= 1e-12 * abs(a_proj)


def test_fit_noisy_monte_carlo():
    d = _waveform(TRUE)
    sig = np.mean((d - d.mean()) ** 2)
    noise_std = np.sqrt(sig / 10 ** (20 / 10))  # 20 dB SNR
    passed = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p, _ = mrcw_fit(_series(d + noise_std * rng.standard_normal(d.size)))
        passed += (
            abs(p.freq - TRUE.freq) <= 0.02
            and abs(p.beta1 - TRUE.beta1) <= 0.1
            and abs(p.beta2 - TRUE.beta2) <= 0.1
            and abs(p.duty - TRUE.duty) <= 0.05
        )
    assert passed >= 90


def test_fit_local_optimality():
    # no single-parameter +/-1% nudge improves the refined fit
    d = _waveform(TRUE)
    sig = np.mean((d - d.mean()) ** 2)
    noise_std = np.sqrt(sig / 100.0)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        dn = d + noise_std * rng.standard_normal(d.size)
        p, _ = mrcw_fit(_series(dn))
        d_c = dn - dn.mean()
        base = _relative_residual(d_c, p.freq, p.beta1, p.beta2, p.duty, p.tau)
        for i in range(4):
            for sgn in (1.0, -1.0):
                vals = [p.freq, p.beta1, p.beta2, p.duty]
                vals[i] *= 1.0 + sgn * 0.01
                vals[0] = min(max(vals[0], 0.1), 0.7)
                vals[1] = min(max(vals[1], 0.02), 1.0)
                vals[2] = min(max(vals[2], 0.02), 1.0)
                vals[3] = min(max(vals[3], 0.02), 0.98)
                pert = _relative_residual(d_c, vals[0], vals[1], vals[2], vals[3], p.tau)
                assert base - pert <= 1e-9


def test_fit_shift_equivariance():
    shift = 0.7
    p, _ = mrcw_fit(_series(_waveform(TRUE, shift=shift)))
    assert abs(p.freq - TRUE.freq) <= 0.01
    assert abs(p.beta1 - TRUE.beta1) <= 0.05
    assert abs(p.beta2 - TRUE.beta2) <= 0.05
    assert abs(p.duty - TRUE.duty) <= 0.03
    period = 1.0 / p.freq
    dist = (p.tau - (TRUE.tau + shift)) % period
    assert min(dist, period - dist) <= 0.02


def test_fit_flat_window_raises():
    with pytest.raises(ExtractionError, match="no respiration"):
        mrcw_fit(_series(np.zeros(800)))


def test_fit_short_window_raises():
    with pytest.raises(InputError):
        mrcw_fit(_series(_waveform(TRUE, n=700)))


# ---------------------------------------------------------------------------
# plateau parabola
# ---------------------------------------------------------------------------

PLATEAU_PARAMS = MRCWParams(amplitude=2e-3, freq=0.25, beta1=0.5, beta2=0.5,
                            duty=0.5, tau=0.0)


def test_plateau_recovers_exact_parabola():
    t = np.arange(800) / RATE - 4.0
    d = 3e-4 * t**2 + 2e-5 * t + 1e-3
    fit = plateau_parabola_fit(_series(d), PLATEAU_PARAMS, 0.6)
    assert abs(fit.c2 - 3e-4) <= 1e-9 * 3e-4


def test_plateau_flat_top_zero_curvature():
    # support at eps=1 is exactly the flat top, so curvature vanishes
    d = _waveform(PLATEAU_PARAMS)
    fit = plateau_parabola_fit(_series(d), PLATEAU_PARAMS, 1.0)
    assert abs(fit.c2) <= 1e-9
    assert fit.n_support >= 3


def test_plateau_support_matches_threshold_oracle():
    d = _waveform(PLATEAU_PARAMS)
    fit = plateau_parabola_fit(_series(d), PLATEAU_PARAMS, 0.6)
    t = np.arange(d.size) / RATE
    mask = mrcw_eval(t, PLATEAU_PARAMS) >= 0.6 * PLATEAU_PARAMS.amplitude
    idx = np.flatnonzero(mask)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    long_runs = [r for r in runs if r.size >= 3]
    assert fit.n_support == sum(r.size for r in long_runs)
    # each cycle contributes one interval around its plateau midpoint
    assert len(long_runs) == 2
    for r in long_runs:
        mid = (2.0 + 4.0 * round((t[r[0]] - 2.0) / 4.0)) * RATE  # plateau centers: 2 s, 6 s
        assert r[0] <= mid <= r[-1]
        assert 155 <= r.size <= 163


def test_plateau_empty_support_raises():
    spiky = MRCWParams(amplitude=2e-3, freq=0.25, beta1=1.0, beta2=1.0,
                       duty=0.5, tau=0.0)
    d = _waveform(PLATEAU_PARAMS)
    with pytest.raises(DegenerateSupportError):
        plateau_parabola_fit(_series(d), spiky, 1.0)


def test_plateau_eps_validation():
    d = _waveform(PLATEAU_PARAMS)
    for eps in (0.0, -0.5, 1.5):
        with pytest.raises(InputError):
            plateau_parabola_fit(_series(d), PLATEAU_PARAMS, eps)


# ---------------------------------------------------------------------------
# sliding windows
# ---------------------------------------------------------------------------


def test_windows_count_and_stationary_constancy():
    d = _waveform(TRUE, n=6000)
    fits, rejected = window_fits(_series(d))
    assert len(fits) == 53  # positions 0..52 at 1 s hop
    assert rejected == 0
    q = np.stack([w.feature.q for w in fits])
    assert np.ptp(q[:, 0]) <= 2e-5
    assert np.ptp(q[:, 1]) <= 2e-4
    assert np.ptp(q[:, 2]) <= 5e-4
    assert np.ptp(q[:, 3]) <= 1e-3
    assert np.ptp(q[:, 4]) <= 2e-3
    assert np.ptp(q[:, 5]) <= 3e-3
    for w in fits:
        p = w.params
        assert w.feature.q[0] == p.freq
        assert w.feature.q[1] == p.duty
        assert w.feature.q[2] == p.beta1 + p.beta2
        assert w.feature.q[3] == abs(p.beta1 - p.beta2)
        assert w.feature.q[4] == (p.beta1 + p.beta2) / p.freq
        assert w.feature.q[5] == w.c2


def test_windows_centers_follow_hop():
    d = _waveform(TRUE, n=1200)
    fits, _ = window_fits(_series(d, t0=5.0))
    times = [w.feature.t for w in fits]
    assert times == pytest.approx([9.0, 10.0, 11.0, 12.0, 13.0], abs=1e-9)


def test_windows_flat_stretch_rejected():
    d = _waveform(TRUE, n=2000)
    d[1200:] = 0.0  # last 8 s silent
    fits, rejected = window_fits(_series(d))
    assert rejected == 1
    assert len(fits) == 12


def test_instantaneous_all_rejected():
    with pytest.raises(ExtractionError, match="3 windows"):
        instantaneous_features(_series(np.zeros(1000)))


def test_windows_bad_args():
    d = _waveform(TRUE, n=500)
    with pytest.raises(InputError):
        window_fits(_series(d))
    with pytest.raises(InputError):
        window_fits(_series(_waveform(TRUE, n=1000)), hop=0.0)


# ---------------------------------------------------------------------------
# moment statistics
# ---------------------------------------------------------------------------


def _features_from_matrix(q: np.ndarray) -> list:
    return [InstantFeature(q=row.astype(np.float64), t=float(i)) for i, row in enumerate(q)]


def _meta() -> SegmentMeta:
    return SegmentMeta(subject_id="s00", session_id="d0-am", day_index=0,
                       segment_index=0, duration=60.0)


def test_statistics_constant_columns():
    q = np.tile(np.array([0.3, 0.5, 1.0, 0.0, 10.0 / 3, -2e-4]), (5, 1))
    rf = resp_statistics(_features_from_matrix(q), _meta())
    assert rf.degenerate_dims == (0, 1, 2, 3, 4, 5)
    for col in range(6):
        mu, sigma, skew, kurt = rf.r[4 * col : 4 * col + 4]
        assert mu == pytest.approx(q[0, col], rel=1e-12, abs=1e-15)
        assert sigma == 0.0
        assert skew == 0.0
        assert kurt == 3.0


def test_statistics_alternating_signs():
    q = np.zeros((6, 6))
    q[:, 2] = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
    q[:, 0] = 0.3  # keep a realistic rate column
    rf = resp_statistics(_features_from_matrix(q), _meta())
    mu, sigma, skew, kurt = rf.r[8:12]
    assert mu == 0.0
    assert sigma == 1.0
    assert skew == 0.0
    assert kurt == 1.0
    assert 2 not in rf.degenerate_dims


def test_statistics_normal_draws():
    rng = np.random.default_rng(11)
    q = rng.standard_normal((10000, 6))
    rf = resp_statistics(_features_from_matrix(q), _meta())
    for col in range(6):
        mu, sigma, skew, kurt = rf.r[4 * col : 4 * col + 4]
        assert abs(mu) <= 0.05
        assert sigma == pytest.approx(1.0, abs=0.05)
        assert abs(skew) <= 0.1
        assert kurt == pytest.approx(3.0, abs=0.2)
    assert rf.degenerate_dims == ()


def test_statistics_layout_by_column():
    base = np.array([1.5, 2.5, 3.5, 4.5, 5.5, 6.5])
    q = np.tile(base, (7, 1))
    rf = resp_statistics(_features_from_matrix(q), _meta())
    for col in range(6):
        assert rf.r[4 * col] == pytest.approx(base[col])
    assert rf.r.shape == (24,)


def test_statistics_partial_degeneracy():
    q = np.zeros((4, 6))
    q[:, 0] = 0.25
    q[:, 1] = [0.4, 0.6, 0.4, 0.6]
    q[:, 2:] = np.random.default_rng(5).standard_normal((4, 4))
    rf = resp_statistics(_features_from_matrix(q), _meta())
    assert rf.degenerate_dims == (0,)


def test_statistics_needs_four_points():
    q = np.ones((3, 6))
    with pytest.raises(ExtractionError, match="4"):
        resp_statistics(_features_from_matrix(q), _meta())


def test_resp_feature_end_to_end():
    rng = np.random.default_rng(3)
    d = _waveform(TRUE, n=6000)
    d += np.sqrt(np.mean((d - d.mean()) ** 2) / 1e4) * rng.standard_normal(6000)
    rf = resp_feature(_series(d), _meta())
    assert rf.r.shape == (24,)
    assert np.all(np.isfinite(rf.r))
    assert np.all(rf.r[1::4] >= 0.0)  # spreads
    assert np.all(rf.r[3::4] >= 1.0)  # kurtosis floor
    assert rf.degenerate_dims == ()
    assert rf.meta.subject_id == "s00"
