"""Detector state machine: arithmetic examples and invariants."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from synwatch.detector import (
    AlarmEvent,
    cusum_general,
    DetectorConfig,
    DetectorState,
    ewma_update,
    IntervalSample,
    new_state,
    residual,
    step,
    variance_update,
)
from synwatch.errors import ConfigError, SequencingError

from batch_reference import batch_replay

REL = 1e-9


def close(a, b):
    return math.isclose(a, b, rel_tol=REL, abs_tol=1e-12)


def run_trace(counts, config, start_state=None):
    """Feed counts through step; returns (f values, alarms)."""
    state = start_state if start_state is not None else new_state(config)
    fs, alarms = [], []
    for i, c in enumerate(counts):
        state, event = step(state, IntervalSample(i, float(i), c), config)
        fs.append(state.f)
        if event is not None:
            alarms.append(event)
    return fs, alarms


def warmed_state(mu, var, f=0.0, n=0, in_alarm=False):
    return DetectorState(n=n, mu_bar=mu, var_hat=var, f=f,
                         in_alarm=in_alarm, warmed_up=True)


# --- configuration ---------------------------------------------------------

def test_new_state_defaults():
    state = new_state(DetectorConfig())
    assert state.f == 0.0
    assert not state.in_alarm
    assert not state.warmed_up
    assert state.n == 0


@pytest.mark.parametrize("bad", [
    dict(ewma_lambda=1.0),
    dict(ewma_lambda=-0.1),
    dict(alpha=0.0),
    dict(alpha=-1.0),
    dict(threshold_h=0.0),
    dict(fixed_variance=0.0),
    dict(fixed_variance=-4.0),
    dict(warmup_intervals=0),
    dict(var_floor=0.0),
    dict(reset_policy="bounce"),
])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        new_state(DetectorConfig(**bad))


# --- the pure update functions ---------------------------------------------

def test_ewma_update_examples():
    assert ewma_update(10.0, 20.0, 0.5) == 15.0
    assert close(ewma_update(7.0, 7.0, 0.9), 7.0)
    assert close(ewma_update(100.0, 0.0, 0.98), 98.0)


def test_residual_examples():
    assert residual(120.0, 100.0) == 20.0
    assert residual(100.0, 100.0) == 0.0
    assert residual(80.0, 100.0) == -20.0


def test_cusum_general_examples():
    # (4-0)/4 * (10 - 2) = 8
    assert cusum_general(0.0, 10.0, 0.0, 4.0, 4.0) == 8.0
    # 1 + 1*(0 - 2) = -1, clamped to 0
    assert cusum_general(1.0, 0.0, 0.0, 4.0, 4.0) == 0.0
    with pytest.raises(ConfigError):
        cusum_general(0.0, 1.0, 0.0, 4.0, 0.0)


@given(f=st.floats(0, 1e6), mu0=st.floats(-1e3, 1e3),
       shift=st.floats(0.001, 1e3), sigma2=st.floats(0.001, 1e6))
def test_cusum_general_midpoint_is_neutral(f, mu0, shift, sigma2):
    mu1 = mu0 + shift
    y = (mu1 + mu0) / 2.0
    assert cusum_general(f, y, mu0, mu1, sigma2) == f


def test_variance_update_examples():
    assert variance_update(100.0, 10.0, 0.5) == 100.0
    assert close(variance_update(100.0, 0.0, 0.9), 90.0)
    assert variance_update(1e-12, 0.0, 0.5, var_floor=1e-6) == 1e-6


@given(c=st.floats(0, 1e9), lam=st.floats(0, 1, exclude_max=True))
def test_ewma_fixed_point(c, lam):
    assert close(ewma_update(c, c, lam), c)


@given(mu=st.floats(0, 1e9), x=st.floats(0, 1e9))
def test_ewma_lambda_zero_tracks_input_exactly(mu, x):
    assert ewma_update(mu, x, 0.0) == x


@given(xs=st.lists(st.integers(0, 10_000), min_size=1, max_size=60),
       mu0=st.floats(0, 1e4), lam=st.floats(0, 0.999))
def test_ewma_streaming_matches_closed_form(xs, mu0, lam):
    # mu_n = lam^n mu_0 + (1 - lam) * sum_i lam^(n-1-i) x_i
    mu = mu0
    for x in xs:
        mu = ewma_update(mu, float(x), lam)
    n = len(xs)
    batch = lam ** n * mu0 + (1.0 - lam) * sum(
        lam ** (n - 1 - i) * xs[i] for i in range(n))
    assert close(mu, batch)


# --- step: arithmetic and alarm rule ----------------------------------------

STEP_CFG = DetectorConfig(alpha=0.5, threshold_h=50.0, fixed_variance=100.0)


def test_step_negative_increment_clamps_to_zero():
    # increment = (0.5*100/100) * (100 - 100 - 25) = -12.5
    state, event = step(warmed_state(100.0, 100.0), IntervalSample(0, 0.0, 100), STEP_CFG)
    assert state.f == 0.0
    assert event is None


def test_step_jump_crosses_threshold():
    # increment = (0.5*100/100) * (300 - 100 - 25) = 87.5 >= h = 50
    state, event = step(warmed_state(100.0, 100.0), IntervalSample(0, 0.0, 300), STEP_CFG)
    assert close(state.f, 87.5)
    assert event is not None
    assert event.kind == "onset"
    assert close(event.f_value, 87.5)
    assert event.threshold == 50.0
    assert state.in_alarm


def test_step_constant_trace_stays_quiet():
    # After warmup on a constant trace every increment is negative, so f
    # never leaves zero; verified over a long replay.
    cfg = DetectorConfig(alpha=0.5, threshold_h=5.0, fixed_variance=100.0,
                         warmup_intervals=30)
    fs, alarms = run_trace([100] * 10_000, cfg)
    assert alarms == []
    assert all(f == 0.0 for f in fs)


def test_step_increment_matches_closed_form_on_constant_trace():
    # On a constant trace x = mu the unclamped increment is -alpha^2 mu^2 / (2 sigma^2).
    mu, var, alpha = 80.0, 64.0, 0.25
    inc = cusum_general(1e9, residual(mu, mu), 0.0, alpha * mu, var) - 1e9
    assert close(inc, -(alpha ** 2) * mu ** 2 / (2 * var))


def test_step_rejects_out_of_order_samples():
    cfg = DetectorConfig()
    state = new_state(cfg)
    state, _ = step(state, IntervalSample(0, 0.0, 5), cfg)
    with pytest.raises(SequencingError):
        step(state, IntervalSample(0, 0.0, 5), cfg)
    with pytest.raises(SequencingError):
        step(state, IntervalSample(2, 2.0, 5), cfg)


def test_warmup_only_seeds_baseline():
    cfg = DetectorConfig(warmup_intervals=3, fixed_variance=1.0, threshold_h=1.0)
    state = new_state(cfg)
    state, e0 = step(state, IntervalSample(0, 0.0, 1000), cfg)
    assert state.mu_bar == 1000.0          # seeded with the first sample
    assert state.f == 0.0 and e0 is None
    state, e1 = step(state, IntervalSample(1, 1.0, 0), cfg)
    assert close(state.mu_bar, 980.0)      # 0.98*1000 + 0.02*0
    assert state.f == 0.0 and e1 is None
    assert not state.warmed_up
    state, e2 = step(state, IntervalSample(2, 2.0, 0), cfg)
    assert state.warmed_up and state.f == 0.0 and e2 is None


def test_degenerate_zero_baseline_leaves_f_unchanged():
    cfg = DetectorConfig(fixed_variance=4.0, threshold_h=5.0)
    state = warmed_state(0.0, 4.0, f=1.25)
    state, event = step(state, IntervalSample(0, 0.0, 10_000), cfg)
    assert state.f == 1.25
    assert event is None


def test_adaptive_variance_floors_on_quiet_trace():
    cfg = DetectorConfig(warmup_intervals=5, var_floor=1e-6, threshold_h=5.0)
    state = new_state(cfg)
    for i in range(5):
        state, _ = step(state, IntervalSample(i, float(i), 50), cfg)
    assert state.warmed_up
    assert state.var_hat == 1e-6   # zero residuals, floored


# --- alarm lifecycle ---------------------------------------------------------

def attack_counts():
    return [100] * 40 + [400] * 5 + [100] * 400


def test_hold_until_quiet_marks_onset_then_ongoing():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0,
                         reset_policy="hold_until_quiet",
                         freeze_baseline_in_alarm=True, warmup_intervals=30)
    _, alarms = run_trace(attack_counts(), cfg)
    assert alarms[0].kind == "onset"
    assert all(a.kind == "ongoing" for a in alarms[1:])
    idx = [a.interval_index for a in alarms]
    assert idx == list(range(idx[0], idx[0] + len(idx)))   # one contiguous period
    assert idx[0] == 40


def test_reset_to_zero_rearms_immediately():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0,
                         reset_policy="reset_to_zero", warmup_intervals=30)
    fs, alarms = run_trace(attack_counts(), cfg)
    # every attack interval alarms on its own, as a fresh onset
    assert [a.interval_index for a in alarms] == [40, 41, 42, 43, 44]
    assert all(a.kind == "onset" for a in alarms)
    assert all(f == 0.0 for i, f in enumerate(fs) if i in (40, 41, 42, 43, 44))


def test_frozen_baseline_ignores_attack_intervals():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0,
                         freeze_baseline_in_alarm=True, warmup_intervals=30)
    state = new_state(cfg)
    for i, c in enumerate(attack_counts()[:45]):
        state, _ = step(state, IntervalSample(i, float(i), c), cfg)
    assert close(state.mu_bar, 100.0)   # the five 400s never touched it


def test_unfrozen_baseline_absorbs_attack():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0,
                         freeze_baseline_in_alarm=False, warmup_intervals=30)
    state = new_state(cfg)
    for i, c in enumerate(attack_counts()[:45]):
        state, _ = step(state, IntervalSample(i, float(i), c), cfg)
    assert state.mu_bar > 100.0


def test_alarm_invariant_in_alarm_iff_f_at_threshold():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0, warmup_intervals=30)
    state = new_state(cfg)
    for i, c in enumerate(attack_counts()):
        state, _ = step(state, IntervalSample(i, float(i), c), cfg)
        assert state.in_alarm == (state.warmed_up and state.f >= cfg.threshold_h)


# --- trajectory properties ---------------------------------------------------

count_lists = st.lists(st.integers(0, 2000), min_size=35, max_size=120)


@settings(max_examples=60, deadline=None)
@given(counts=count_lists, lam=st.floats(0.5, 0.999),
       alpha=st.floats(0.05, 2.0), sigma2=st.one_of(st.none(), st.floats(1.0, 1e4)))
def test_f_never_goes_negative(counts, lam, alpha, sigma2):
    cfg = DetectorConfig(ewma_lambda=lam, alpha=alpha, threshold_h=5.0,
                         fixed_variance=sigma2, warmup_intervals=10)
    fs, _ = run_trace(counts, cfg)
    assert all(f >= 0.0 for f in fs)


@settings(max_examples=40, deadline=None)
@given(counts=count_lists, bump=st.integers(1, 500), data=st.data())
def test_increasing_one_count_never_lowers_f_there(counts, bump, data):
    cfg = DetectorConfig(fixed_variance=400.0, threshold_h=1e12, warmup_intervals=10)
    pos = data.draw(st.integers(10, len(counts) - 1))
    fs_lo, _ = run_trace(counts, cfg)
    bumped = list(counts)
    bumped[pos] += bump
    fs_hi, _ = run_trace(bumped, cfg)
    assert fs_hi[pos] >= fs_lo[pos]


@settings(max_examples=30, deadline=None)
@given(counts=count_lists, h_lo=st.floats(1.0, 40.0), h_extra=st.floats(0.1, 100.0))
def test_raising_threshold_only_delays_or_removes_alarms(counts, h_lo, h_extra):
    # with freeze and reset disabled the trajectory is threshold-independent
    def alarms_at(h):
        cfg = DetectorConfig(fixed_variance=100.0, threshold_h=h,
                             warmup_intervals=10, freeze_baseline_in_alarm=False,
                             reset_policy="hold_until_quiet")
        _, alarms = run_trace(counts, cfg)
        return [a.interval_index for a in alarms]

    lo, hi = alarms_at(h_lo), alarms_at(h_lo + h_extra)
    assert set(hi) <= set(lo)
    if hi:
        assert min(hi) >= min(lo)


# --- streaming vs batch reference --------------------------------------------

@settings(max_examples=25, deadline=None)
@given(counts=count_lists, lam=st.floats(0.5, 0.999), alpha=st.floats(0.1, 1.0),
       h=st.floats(2.0, 100.0), fixed=st.booleans(),
       freeze=st.booleans(), reset=st.booleans())
def test_streaming_equals_batch_reference(counts, lam, alpha, h, fixed, freeze, reset):
    sigma2 = 100.0 if fixed else None
    cfg = DetectorConfig(
        ewma_lambda=lam, alpha=alpha, threshold_h=h, fixed_variance=sigma2,
        warmup_intervals=10, freeze_baseline_in_alarm=freeze,
        reset_policy="reset_to_zero" if reset else "hold_until_quiet")
    fs, alarms = run_trace(counts, cfg)
    ref_fs, ref_alarms = batch_replay(
        counts, lam=lam, alpha=alpha, h=h, warmup=10, sigma2=sigma2,
        freeze_in_alarm=freeze, reset_to_zero=reset)
    assert fs == ref_fs   # bit-identical, not approximately equal
    assert [(a.interval_index, a.kind) for a in alarms] == ref_alarms


# --- state checkpointing ------------------------------------------------------

def test_state_dict_round_trip():
    cfg = DetectorConfig(fixed_variance=100.0, threshold_h=50.0, warmup_intervals=5)
    state = new_state(cfg)
    for i, c in enumerate([90, 110, 95, 105, 100, 250, 240]):
        state, _ = step(state, IntervalSample(i, float(i), c), cfg)
    restored = DetectorState.from_dict(state.to_dict())
    assert restored == state
    # resuming from the checkpoint continues the same trajectory
    a, _ = step(state, IntervalSample(7, 7.0, 260), cfg)
    b, _ = step(restored, IntervalSample(7, 7.0, 260), cfg)
    assert a == b
