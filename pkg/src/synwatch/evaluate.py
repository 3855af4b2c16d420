"""Run the detector over labeled traces and score it.

Two headline metrics, one benchmark:

* detection ratio: fraction of attack episodes with at least one alarmed
  interval inside the episode or its short grace window
* false alarm ratio: fraction of post-warmup benign intervals alarmed
  outside every episode's grace window

The grace window (default 2 intervals past an episode) exists because the
statistic decays rather than dropping to zero the moment an attack stops;
counting that tail as false alarms would penalize the detector for its own
definition. Mean detection delay is reported as an auxiliary metric.

``benchmark`` sweeps attack rates over freshly generated traces and emits a
report shaped like a two-column results table: one row per rate plus an
unweighted-average row.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .detector import AlarmEvent, DetectorConfig, new_state, step
from .errors import ConfigError, MetricError
from .traffic import AttackEpisode, LabeledTrace, ScenarioSpec, generate_trace

_CALIBRATION_TAG = 0xCA11B7A7E


@dataclass(frozen=True)
class EvalRow:
    """Metrics for one attack rate."""

    rate: float
    detection_ratio: float
    false_alarm_ratio: float
    mean_delay: Optional[float]  # intervals; None when nothing was detected


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    mean_detection_ratio: float
    mean_false_alarm_ratio: float
    detector: DetectorConfig           # as actually run (post-calibration)
    config: "EvalConfig"


@dataclass(frozen=True)
class EvalConfig:
    """Benchmark layout: which rates to sweep and what each trace looks like.

    Episodes are laid out evenly: ``episode_count`` episodes of
    ``episode_length`` seconds separated by equal benign gaps, so the first
    gap doubles as warmup room. ``auto_threshold`` calibrates ``threshold_h``
    on benign-only traces before the sweep.
    """

    detector: DetectorConfig
    scenario_template: ScenarioSpec    # episodes/seed fields are ignored
    rates: tuple[float, ...] = (200.0, 400.0, 600.0, 800.0, 1000.0)
    runs_per_rate: int = 1
    base_seed: int = 0
    episode_count: int = 50
    episode_length: float = 30.0
    grace_intervals: int = 2
    auto_threshold: bool = False

    def validate(self) -> None:
        self.detector.validate()
        if not self.rates:
            raise ConfigError("rates must be non-empty")
        if any(not r > 0 for r in self.rates):
            raise ConfigError(f"attack rates must be > 0, got {self.rates}")
        if self.runs_per_rate < 1:
            raise ConfigError(f"runs_per_rate must be >= 1, got {self.runs_per_rate}")
        if self.episode_count < 1:
            raise ConfigError(f"episode_count must be >= 1, got {self.episode_count}")
        if not self.episode_length > 0:
            raise ConfigError(f"episode_length must be > 0, got {self.episode_length}")
        if self.grace_intervals < 0:
            raise ConfigError(f"grace_intervals must be >= 0, got {self.grace_intervals}")
        benign = replace(self.scenario_template, episodes=(), seed=0)
        benign.validate()
        if self.episode_count * self.episode_length >= self.scenario_template.duration:
            raise ConfigError("episodes do not fit into the scenario duration")


def run_detection(trace: LabeledTrace, config: DetectorConfig) -> list[AlarmEvent]:
    """Feed the trace through the detector and collect every alarm."""
    state = new_state(config)
    alarms = []
    for sample in trace.samples:
        state, event = step(state, sample, config)
        if event is not None:
            alarms.append(event)
    return alarms


def episode_windows(trace: LabeledTrace) -> list[tuple[int, int]]:
    """Inclusive interval-index ranges of the attack episodes.

    Uses the generating scenario when available (keeps adjacent episodes
    distinct); otherwise falls back to runs of consecutive true labels.
    """
    n = len(trace.samples)
    if trace.spec_echo is not None:
        il = trace.spec_echo.interval_len
        windows = []
        for ep in sorted(trace.spec_echo.episodes, key=lambda e: e.start):
            first = max(0, math.floor(ep.start / il + 1e-9))
            last = min(n - 1, math.ceil((ep.start + ep.length) / il - 1e-9) - 1)
            if first <= last:
                windows.append((first, last))
        return windows
    windows = []
    start = None
    for i, flag in enumerate(trace.labels):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            windows.append((start, i - 1))
            start = None
    if start is not None:
        windows.append((start, n - 1))
    return windows


def _alarm_indices(alarms: Sequence[AlarmEvent]) -> list[int]:
    return sorted({a.interval_index for a in alarms})


def _detection_counts(alarms: Sequence[AlarmEvent], trace: LabeledTrace,
                      grace: int) -> tuple[int, int, list[int]]:
    """(detected, total, per-detected-episode delays in intervals)."""
    windows = episode_windows(trace)
    idx = _alarm_indices(alarms)
    last_valid = len(trace.samples) - 1
    detected = 0
    delays = []
    for first, last in windows:
        end = min(last + grace, last_valid)
        pos = bisect_left(idx, first)
        if pos < len(idx) and idx[pos] <= end:
            detected += 1
            delays.append(idx[pos] - first)
    return detected, len(windows), delays


def _false_alarm_counts(alarms: Sequence[AlarmEvent], trace: LabeledTrace,
                        grace: int, warmup_intervals: int) -> tuple[int, int]:
    """(false-alarmed benign intervals, total post-warmup benign intervals)."""
    n = len(trace.samples)
    shielded = bytearray(n)  # episode intervals plus their grace tails
    for first, last in episode_windows(trace):
        for i in range(first, min(last + grace, n - 1) + 1):
            shielded[i] = 1
    alarmed = set(_alarm_indices(alarms))
    false = 0
    benign = 0
    for i in range(warmup_intervals, n):
        if trace.labels[i]:
            continue
        benign += 1
        if i in alarmed and not shielded[i]:
            false += 1
    return false, benign


def detection_ratio(alarms: Sequence[AlarmEvent], trace: LabeledTrace, *,
                    grace_intervals: int = 2) -> float:
    """Fraction of episodes with at least one alarm in the episode or its
    grace window. Undefined (raises) when the trace has no episodes."""
    detected, total, _ = _detection_counts(alarms, trace, grace_intervals)
    if total == 0:
        raise MetricError("detection ratio is undefined: trace has no episodes")
    return detected / total


def false_alarm_ratio(alarms: Sequence[AlarmEvent], trace: LabeledTrace, *,
                      grace_intervals: int = 2, warmup_intervals: int = 0) -> float:
    """Fraction of post-warmup benign intervals alarmed outside every grace
    window. Undefined (raises) when there are no such benign intervals."""
    false, benign = _false_alarm_counts(alarms, trace, grace_intervals,
                                        warmup_intervals)
    if benign == 0:
        raise MetricError("false alarm ratio is undefined: no benign intervals")
    return false / benign


def detection_delay(alarms: Sequence[AlarmEvent], trace: LabeledTrace, *,
                    grace_intervals: int = 2) -> Optional[float]:
    """Mean intervals from episode start to its first alarm, over detected
    episodes; None when nothing was detected."""
    _, _, delays = _detection_counts(alarms, trace, grace_intervals)
    if not delays:
        return None
    return sum(delays) / len(delays)


def column_mean(values: Sequence[float]) -> float:
    """Unweighted mean of a per-rate metric column; the report aggregator."""
    if not values:
        raise MetricError("cannot aggregate an empty column")
    return sum(values) / len(values)


def _mixed_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _evenly_spaced_episodes(duration: float, count: int, length: float,
                            rate: float) -> tuple[AttackEpisode, ...]:
    gap = (duration - count * length) / (count + 1)
    return tuple(
        AttackEpisode(start=gap + i * (length + gap), length=length, attack_rate=rate)
        for i in range(count)
    )


def _scenario_for(config: EvalConfig, rate: float, run: int) -> ScenarioSpec:
    seed = _mixed_seed(config.base_seed, int(round(rate * 1000)), run)
    episodes = _evenly_spaced_episodes(config.scenario_template.duration,
                                       config.episode_count,
                                       config.episode_length, rate)
    return replace(config.scenario_template, episodes=episodes, seed=seed)


def calibrate_threshold(detector: DetectorConfig, scenario_template: ScenarioSpec, *,
                        base_seed: int = 0, num_traces: int = 3,
                        target_false_alarm_ratio: float = 0.01,
                        safety_factor: float = 1.5,
                        min_threshold: float = 1.0) -> float:
    """Pick an alarm threshold from benign-only traces.

    Runs the detector with an unreachable threshold over ``num_traces``
    attack-free traces, takes the largest post-warmup statistic seen, and
    scales it by ``safety_factor``. By construction the measured false alarm
    ratio on the calibration traces is 0, well under the target.
    """
    if not 0.0 < target_false_alarm_ratio < 1.0:
        raise ConfigError("target_false_alarm_ratio must be in (0, 1)")
    probe = replace(detector, threshold_h=math.inf)
    probe.validate()
    f_max = 0.0
    seen = 0
    for i in range(num_traces):
        spec = replace(scenario_template, episodes=(),
                       seed=_mixed_seed(base_seed, _CALIBRATION_TAG, i))
        trace = generate_trace(spec)
        state = new_state(probe)
        for sample in trace.samples:
            state, _ = step(state, sample, probe)
            if state.warmed_up:
                f_max = max(f_max, state.f)
                seen += 1
    if seen == 0:
        raise ConfigError("calibration traces are shorter than the warmup")
    return max(min_threshold, safety_factor * f_max)


def benchmark(config: EvalConfig) -> EvalReport:
    """Sweep the configured attack rates; deterministic given the config."""
    config.validate()
    detector = config.detector
    if config.auto_threshold:
        detector = replace(detector, threshold_h=calibrate_threshold(
            detector, config.scenario_template, base_seed=config.base_seed))

    rows = []
    for rate in config.rates:
        detected = total = false = benign = 0
        delays: list[int] = []
        for run in range(config.runs_per_rate):
            trace = generate_trace(_scenario_for(config, rate, run))
            alarms = run_detection(trace, detector)
            d, t, dl = _detection_counts(alarms, trace, config.grace_intervals)
            fa, be = _false_alarm_counts(alarms, trace, config.grace_intervals,
                                         detector.warmup_intervals)
            detected += d
            total += t
            false += fa
            benign += be
            delays.extend(dl)
        if benign == 0:
            raise MetricError(f"no benign intervals at rate {rate}")
        rows.append(EvalRow(
            rate=rate,
            detection_ratio=detected / total,
            false_alarm_ratio=false / benign,
            mean_delay=(sum(delays) / len(delays)) if delays else None,
        ))

    return EvalReport(
        rows=tuple(rows),
        mean_detection_ratio=column_mean([r.detection_ratio for r in rows]),
        mean_false_alarm_ratio=column_mean([r.false_alarm_ratio for r in rows]),
        detector=detector,
        config=config,
    )


def report_to_csv(report: EvalReport) -> str:
    """Data rows only; averages live in the JSON and the rendered table."""
    lines = ["rate,detection_ratio,false_alarm_ratio,mean_delay"]
    for row in report.rows:
        delay = "" if row.mean_delay is None else f"{row.mean_delay:.6f}"
        lines.append(f"{_fmt_rate(row.rate)},{row.detection_ratio:.6f},"
                     f"{row.false_alarm_ratio:.6f},{delay}")
    return "\n".join(lines) + "\n"


def report_to_dict(report: EvalReport) -> dict:
    det = report.detector
    tpl = report.config.scenario_template
    return {
        "rows": [
            {
                "rate": row.rate,
                "detection_ratio": row.detection_ratio,
                "false_alarm_ratio": row.false_alarm_ratio,
                "mean_delay": row.mean_delay,
            }
            for row in report.rows
        ],
        "mean_detection_ratio": report.mean_detection_ratio,
        "mean_false_alarm_ratio": report.mean_false_alarm_ratio,
        "config": {
            "rates": list(report.config.rates),
            "runs_per_rate": report.config.runs_per_rate,
            "base_seed": report.config.base_seed,
            "episode_count": report.config.episode_count,
            "episode_length": report.config.episode_length,
            "grace_intervals": report.config.grace_intervals,
            "detector": {
                "lambda": det.ewma_lambda,
                "alpha": det.alpha,
                "threshold": det.threshold_h,
                "sigma2": det.fixed_variance,
                "var_floor": det.var_floor,
                "warmup": det.warmup_intervals,
                "reset_policy": det.reset_policy,
                "freeze_baseline_in_alarm": det.freeze_baseline_in_alarm,
            },
            "scenario": {
                "duration": tpl.duration,
                "interval_len": tpl.interval_len,
                "background_rate": tpl.background_rate,
                "diurnal_amplitude": tpl.diurnal_amplitude,
                "diurnal_period": tpl.diurnal_period,
            },
        },
    }


def render_table(report: EvalReport) -> str:
    """Plain-text table: one row per attack rate plus an average row."""
    header = (f"{'SYN packets/second':>18}  {'Detection ratio':>16}  "
              f"{'False alarm ratio':>18}  {'Mean delay (intervals)':>23}")
    lines = [header, "-" * len(header)]
    for row in report.rows:
        delay = "-" if row.mean_delay is None else f"{row.mean_delay:.2f}"
        lines.append(f"{_fmt_rate(row.rate):>18}  {row.detection_ratio * 100:>14.2f} %  "
                     f"{row.false_alarm_ratio * 100:>16.2f} %  {delay:>23}")
    lines.append(f"{'average':>18}  {report.mean_detection_ratio * 100:>14.2f} %  "
                 f"{report.mean_false_alarm_ratio * 100:>16.2f} %  {'':>23}")
    return "\n".join(lines) + "\n"


def _fmt_rate(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else f"{rate:g}"


def default_detector_config() -> DetectorConfig:
    """Detector settings used by the bundled benchmark; the threshold is a
    placeholder meant to be replaced by calibration."""
    return DetectorConfig(
        ewma_lambda=0.98,
        alpha=0.5,
        threshold_h=5.0,
        fixed_variance=None,
        warmup_intervals=30,
        reset_policy="reset_to_zero",
        freeze_baseline_in_alarm=True,
    )


def default_eval_config() -> EvalConfig:
    """The bundled benchmark: 100 SYN/s background, 1 s intervals, 50 flood
    episodes of 30 s per rate, rates 200 through 1000 SYN/s, calibrated
    threshold."""
    return EvalConfig(
        detector=default_detector_config(),
        scenario_template=ScenarioSpec(duration=5000.0, background_rate=100.0,
                                       interval_len=1.0),
        rates=(200.0, 400.0, 600.0, 800.0, 1000.0),
        runs_per_rate=1,
        base_seed=20260810,
        episode_count=50,
        episode_length=30.0,
        grace_intervals=2,
        auto_threshold=True,
    )
