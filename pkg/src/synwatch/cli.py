"""Command-line front end: generate, detect, evaluate, and bench.

Exit codes are fixed for scripting: 0 success, 1 alarms seen under
--fail-on-alarm, 2 usage/format/config problems, 3 I/O failures.

Flags always win over values from a --config JSON file, which in turn win
over built-in defaults. Unknown keys in a config file are rejected rather
than ignored.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from contextlib import nullcontext
from dataclasses import replace

from .detector import DetectorConfig, new_state, step
from .errors import ConfigError, MetricError, SynwatchError
from .evaluate import (
    benchmark,
    default_detector_config,
    default_eval_config,
    detection_delay,
    detection_ratio,
    EvalConfig,
    false_alarm_ratio,
    render_table,
    report_to_csv,
    report_to_dict,
    run_detection,
)
from .ingest import (
    bin_intervals,
    parse_csv_packets,
    parse_pcap,
    ParseStats,
    read_csv_counts,
    sniff_format,
)
from .traffic import generate_trace, emit_csv_counts, ScenarioSpec, trace_from_counts

EXIT_OK = 0
EXIT_ALARM = 1
EXIT_USAGE = 2
EXIT_IO = 3

_DETECTOR_KEYS = {"lambda", "alpha", "threshold", "sigma2", "var_floor",
                  "warmup", "reset_policy", "freeze_baseline_in_alarm"}
_DETECT_FILE_KEYS = _DETECTOR_KEYS | {"interval_len", "format"}
_EVAL_FILE_KEYS = {"rates", "runs_per_rate", "base_seed", "episode_count",
                   "episode_length", "grace_intervals", "detector", "scenario"}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SynwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: bad JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synwatch",
        description="SYN-flood detection over packet traces and count logs")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a labeled synthetic trace as CSV counts")
    gen.add_argument("scenario", help="scenario JSON file, or - for stdin")
    gen.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    gen.add_argument("--out", default=None, help="output path (default stdout)")
    gen.set_defaults(func=_cmd_generate)

    det = sub.add_parser("detect", help="stream alarms for a trace as JSON lines")
    _add_input_and_detector_flags(det)
    det.add_argument("--fail-on-alarm", action="store_true", default=None,
                     help="exit 1 if any alarm is raised")
    det.add_argument("--out", default=None, help="alarm JSONL path (default stdout)")
    det.set_defaults(func=_cmd_detect)

    ev = sub.add_parser("evaluate", help="score a labeled CSV counts trace")
    _add_input_and_detector_flags(ev)
    ev.add_argument("--grace", type=int, default=None,
                    help="grace intervals after an episode (default 2)")
    ev.add_argument("--out", default=None, help="metrics JSON path (default stdout)")
    ev.set_defaults(func=_cmd_evaluate)

    ben = sub.add_parser("bench", help="run the rate-sweep benchmark and print the table")
    ben.add_argument("config", nargs="?", default=None,
                     help="benchmark config JSON (default: bundled benchmark)")
    ben.add_argument("--seed", type=int, default=None, help="override the base seed")
    ben.add_argument("--out", default=None,
                     help="report path prefix; writes PREFIX.csv and PREFIX.json")
    ben.set_defaults(func=_cmd_bench)
    return parser


def _add_input_and_detector_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("input", nargs="?", default="-",
                     help="trace file, or - for stdin (default)")
    sub.add_argument("--format", choices=["pcap", "csv-packets", "csv-counts"],
                     default=None, help="input format (default: sniff content)")
    sub.add_argument("--interval-len", dest="interval_len", type=float, default=None,
                     help="sample interval length in seconds (default 1.0)")
    sub.add_argument("--lambda", dest="ewma_lambda", type=float, default=None,
                     help="EWMA baseline factor in [0, 1)")
    sub.add_argument("--alpha", type=float, default=None,
                     help="assumed fractional mean increase after a change")
    sub.add_argument("--sigma2", type=float, default=None,
                     help="fixed variance; omit to track it adaptively")
    sub.add_argument("--threshold", type=float, default=None, help="alarm threshold")
    sub.add_argument("--warmup", type=int, default=None,
                     help="baseline warmup intervals (default 30)")
    sub.add_argument("--reset-policy", dest="reset_policy",
                     choices=["hold_until_quiet", "reset_to_zero"], default=None)
    sub.add_argument("--freeze-baseline", dest="freeze_baseline",
                     action=argparse.BooleanOptionalAction, default=None,
                     help="freeze baseline updates on alarmed intervals")
    sub.add_argument("--config", default=None, help="JSON file with default flag values")


def _load_json(path: str) -> dict:
    if path == "-":
        data = json.load(sys.stdin)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config JSON must be an object")
    return data


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _open_out(path):
    if path is None or path == "-":
        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="\n")


def _pick(flag_value, file_cfg: dict, key: str, default):
    if flag_value is not None:
        return flag_value
    if key in file_cfg:
        return file_cfg[key]
    return default


def detector_config_from_dict(data: dict,
                              base: DetectorConfig | None = None
                              ) -> tuple[DetectorConfig, bool]:
    """Build a DetectorConfig from config-file keys.

    Returns (config, auto_threshold); ``"threshold": "auto"`` requests
    calibration and leaves the base threshold in place.
    """
    if base is None:
        base = DetectorConfig()
    unknown = set(data) - _DETECTOR_KEYS
    if unknown:
        raise ConfigError(f"unknown detector config keys: {sorted(unknown)}")
    auto = data.get("threshold") == "auto"
    try:
        cfg = DetectorConfig(
            ewma_lambda=float(data.get("lambda", base.ewma_lambda)),
            alpha=float(data.get("alpha", base.alpha)),
            threshold_h=(base.threshold_h if auto
                         else float(data.get("threshold", base.threshold_h))),
            fixed_variance=(None if data.get("sigma2", base.fixed_variance) is None
                            else float(data.get("sigma2", base.fixed_variance))),
            var_floor=float(data.get("var_floor", base.var_floor)),
            warmup_intervals=int(data.get("warmup", base.warmup_intervals)),
            reset_policy=data.get("reset_policy", base.reset_policy),
            freeze_baseline_in_alarm=bool(data.get("freeze_baseline_in_alarm",
                                                   base.freeze_baseline_in_alarm)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad detector config value: {exc}")
    cfg.validate()
    return cfg, auto


def eval_config_from_dict(data: dict) -> EvalConfig:
    """Build a benchmark config from its JSON document."""
    unknown = set(data) - _EVAL_FILE_KEYS
    if unknown:
        raise ConfigError(f"unknown benchmark config keys: {sorted(unknown)}")
    defaults = default_eval_config()
    detector, auto = detector_config_from_dict(data.get("detector", {}),
                                               default_detector_config())
    if "detector" not in data:
        auto = defaults.auto_threshold

    scenario_data = data.get("scenario")
    if scenario_data is None:
        template = defaults.scenario_template
    else:
        if not isinstance(scenario_data, dict):
            raise ConfigError("scenario must be an object")
        for key in ("episodes", "seed"):
            if key in scenario_data:
                raise ConfigError(
                    f"scenario template must not set {key!r}; the benchmark fills it in")
        template = ScenarioSpec.from_dict(scenario_data)

    try:
        rates = tuple(float(r) for r in data.get("rates", defaults.rates))
        config = EvalConfig(
            detector=detector,
            scenario_template=template,
            rates=rates,
            runs_per_rate=int(data.get("runs_per_rate", defaults.runs_per_rate)),
            base_seed=int(data.get("base_seed", defaults.base_seed)),
            episode_count=int(data.get("episode_count", defaults.episode_count)),
            episode_length=float(data.get("episode_length", defaults.episode_length)),
            grace_intervals=int(data.get("grace_intervals", defaults.grace_intervals)),
            auto_threshold=auto,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad benchmark config value: {exc}")
    config.validate()
    return config


def _resolve_detector(args) -> tuple[DetectorConfig, dict]:
    """Merge flags over --config file values; returns (config, file_cfg)."""
    file_cfg = _load_json(args.config) if args.config else {}
    unknown = set(file_cfg) - _DETECT_FILE_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = DetectorConfig()
    sigma2 = _pick(args.sigma2, file_cfg, "sigma2", base.fixed_variance)
    try:
        cfg = DetectorConfig(
            ewma_lambda=float(_pick(args.ewma_lambda, file_cfg, "lambda", base.ewma_lambda)),
            alpha=float(_pick(args.alpha, file_cfg, "alpha", base.alpha)),
            threshold_h=float(_pick(args.threshold, file_cfg, "threshold", base.threshold_h)),
            fixed_variance=None if sigma2 is None else float(sigma2),
            var_floor=float(_pick(None, file_cfg, "var_floor", base.var_floor)),
            warmup_intervals=int(_pick(args.warmup, file_cfg, "warmup", base.warmup_intervals)),
            reset_policy=_pick(args.reset_policy, file_cfg, "reset_policy", base.reset_policy),
            freeze_baseline_in_alarm=bool(_pick(args.freeze_baseline, file_cfg,
                                                "freeze_baseline_in_alarm",
                                                base.freeze_baseline_in_alarm)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}")
    cfg.validate()
    return cfg, file_cfg


def _load_samples(args, file_cfg: dict):
    """Read the input trace; returns (samples, labels or None, stats)."""
    data = _read_input(args.input)
    fmt = _pick(args.format, file_cfg, "format", None)
    if fmt is None:
        fmt = sniff_format(data[:4096])
    interval_len = float(_pick(args.interval_len, file_cfg, "interval_len", 1.0))
    stats = ParseStats()
    if fmt == "pcap":
        records = parse_pcap(io.BytesIO(data), stats)
        return bin_intervals(records, interval_len, stats=stats), None, stats
    text = io.StringIO(data.decode("utf-8"))
    if fmt == "csv-packets":
        records = parse_csv_packets(text, stats)
        return bin_intervals(records, interval_len, stats=stats), None, stats
    samples, labels = read_csv_counts(text, interval_len)
    return samples, labels, stats


def _warn_stats(stats: ParseStats) -> None:
    notes = []
    if stats.skipped_non_ipv4:
        notes.append(f"{stats.skipped_non_ipv4} non-IPv4 frames skipped")
    if stats.skipped_non_tcp:
        notes.append(f"{stats.skipped_non_tcp} non-TCP packets skipped")
    if stats.skipped_short:
        notes.append(f"{stats.skipped_short} short frames skipped")
    if stats.out_of_order:
        notes.append(f"{stats.out_of_order} out-of-order timestamps")
    if stats.before_origin:
        notes.append(f"{stats.before_origin} packets before the binning origin")
    if stats.line_errors:
        notes.append(f"{len(stats.line_errors)} malformed lines "
                     f"(first: line {stats.line_errors[0][0]}: {stats.line_errors[0][1]})")
    if notes:
        print("warning: " + "; ".join(notes), file=sys.stderr)


def _cmd_generate(args) -> int:
    spec = ScenarioSpec.from_dict(_load_json(args.scenario))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
        spec.validate()
    trace = generate_trace(spec)
    with _open_out(args.out) as out:
        emit_csv_counts(trace, out)
    return EXIT_OK


def _cmd_detect(args) -> int:
    config, file_cfg = _resolve_detector(args)
    samples, _, stats = _load_samples(args, file_cfg)
    fail_on_alarm = bool(_pick(args.fail_on_alarm, file_cfg, "fail_on_alarm", False))
    saw_alarm = False
    state = new_state(config)
    with _open_out(args.out) as out:
        for sample in samples:
            state, event = step(state, sample, config)
            if event is not None:
                saw_alarm = True
                out.write(json.dumps(event.to_dict()) + "\n")
    _warn_stats(stats)
    return EXIT_ALARM if (saw_alarm and fail_on_alarm) else EXIT_OK


def _cmd_evaluate(args) -> int:
    config, file_cfg = _resolve_detector(args)
    samples, labels, stats = _load_samples(args, file_cfg)
    if labels is None:
        raise ConfigError("evaluate needs a labeled csv-counts trace "
                          "(header index,syn_count,label)")
    grace = args.grace if args.grace is not None else 2
    trace = trace_from_counts(samples, labels)
    alarms = run_detection(trace, config)

    def _or_null(fn):
        try:
            return fn()
        except MetricError:
            return None

    metrics = {
        "detection_ratio": _or_null(
            lambda: detection_ratio(alarms, trace, grace_intervals=grace)),
        "false_alarm_ratio": _or_null(
            lambda: false_alarm_ratio(alarms, trace, grace_intervals=grace,
                                      warmup_intervals=config.warmup_intervals)),
        "mean_detection_delay_intervals": detection_delay(alarms, trace,
                                                          grace_intervals=grace),
        "intervals": len(trace.samples),
        "alarm_intervals": len({a.interval_index for a in alarms}),
    }
    _warn_stats(stats)
    with _open_out(args.out) as out:
        out.write(json.dumps(metrics) + "\n")
    return EXIT_OK


def _cmd_bench(args) -> int:
    if args.config is None:
        config = default_eval_config()
    else:
        config = eval_config_from_dict(_load_json(args.config))
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    report = benchmark(config)
    if args.out:
        with open(args.out + ".csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report_to_csv(report))
        with open(args.out + ".json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report_to_dict(report), indent=2) + "\n")
    sys.stdout.write(render_table(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
