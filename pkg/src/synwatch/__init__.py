"""synwatch: streaming SYN-flood detection over per-interval SYN counts.

The core is a small sequential state machine (:mod:`synwatch.detector`): an
EWMA baseline tracks the mean SYN count per sample interval, each new count
is detrended against that baseline, and a one-sided CUSUM accumulates the
detrended evidence of an upward mean shift. Crossing the threshold raises
an alarm. Everything else is tooling around it:

* :mod:`synwatch.ingest` turns classic pcap files or CSV packet/count logs
  into per-interval SYN counts
* :mod:`synwatch.traffic` generates seeded, reproducible synthetic traces
  (Poisson background, optional diurnal cycle, labeled flood episodes)
* :mod:`synwatch.evaluate` scores alarm streams (detection ratio, false
  alarm ratio, detection delay) and runs the rate-sweep benchmark
* :mod:`synwatch.cli` wraps it all as the ``synwatch`` command

Quick start::

    from synwatch import DetectorConfig, new_state, step, IntervalSample

    config = DetectorConfig(fixed_variance=100.0, threshold_h=50.0)
    state = new_state(config)
    for i, count in enumerate(counts):
        state, alarm = step(state, IntervalSample(i, float(i), count), config)
        if alarm:
            print(f"alarm at interval {alarm.interval_index}: f={alarm.f_value:.1f}")

See the demos/ directory for narrative walkthroughs of each capability.
"""

from .detector import (
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
from .errors import (
    ConfigError,
    FormatError,
    MetricError,
    ScenarioError,
    SequencingError,
    SynwatchError,
    TruncationError,
    UnsupportedFormatError,
)
from .evaluate import (
    benchmark,
    calibrate_threshold,
    column_mean,
    default_detector_config,
    default_eval_config,
    detection_delay,
    detection_ratio,
    episode_windows,
    EvalConfig,
    EvalReport,
    EvalRow,
    false_alarm_ratio,
    render_table,
    report_to_csv,
    report_to_dict,
    run_detection,
)
from .ingest import (
    bin_intervals,
    is_syn,
    PacketRecord,
    parse_csv_packets,
    parse_pcap,
    ParseStats,
    read_csv_counts,
    sniff_format,
    write_pcap,
)
from .traffic import (
    AttackEpisode,
    background_mean,
    emit_csv_counts,
    generate_trace,
    LabeledTrace,
    ScenarioSpec,
    trace_from_counts,
)

__version__ = "0.1.0"

__all__ = [
    "AlarmEvent",
    "AttackEpisode",
    "background_mean",
    "benchmark",
    "bin_intervals",
    "calibrate_threshold",
    "column_mean",
    "ConfigError",
    "cusum_general",
    "default_detector_config",
    "default_eval_config",
    "detection_delay",
    "detection_ratio",
    "DetectorConfig",
    "DetectorState",
    "emit_csv_counts",
    "episode_windows",
    "EvalConfig",
    "EvalReport",
    "EvalRow",
    "ewma_update",
    "false_alarm_ratio",
    "FormatError",
    "generate_trace",
    "IntervalSample",
    "is_syn",
    "LabeledTrace",
    "MetricError",
    "new_state",
    "PacketRecord",
    "parse_csv_packets",
    "parse_pcap",
    "ParseStats",
    "read_csv_counts",
    "render_table",
    "report_to_csv",
    "report_to_dict",
    "residual",
    "run_detection",
    "ScenarioError",
    "ScenarioSpec",
    "SequencingError",
    "sniff_format",
    "step",
    "SynwatchError",
    "trace_from_counts",
    "TruncationError",
    "UnsupportedFormatError",
    "variance_update",
    "write_pcap",
]
