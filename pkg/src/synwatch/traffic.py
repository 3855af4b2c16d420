"""Seeded synthetic SYN-count traces: Poisson background plus flood episodes.

Counts are Poisson draws. The background mean may follow a sinusoidal
diurnal cycle; each attack episode adds an independent Poisson component
proportional to how much of the interval it covers.

Randomness comes from numpy's Philox counter-based generator with one
spawned stream per interval index (``SeedSequence(seed).spawn(n)``), so a
trace is a pure function of its scenario: same seed, same counts, on any
platform, and an interval's draws do not depend on the trace length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, TextIO

import numpy as np

from .detector import IntervalSample
from .errors import ScenarioError


@dataclass(frozen=True)
class AttackEpisode:
    """One constant-rate SYN flood: ``attack_rate`` extra SYN/s over
    ``[start, start + length)``."""

    start: float
    length: float
    attack_rate: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate one labeled trace."""

    duration: float
    background_rate: float
    interval_len: float = 1.0
    diurnal_amplitude: float = 0.0
    diurnal_period: float = 86400.0
    episodes: tuple[AttackEpisode, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if not self.duration > 0:
            raise ScenarioError(f"duration must be > 0, got {self.duration}")
        if not self.interval_len > 0:
            raise ScenarioError(f"interval_len must be > 0, got {self.interval_len}")
        if not self.background_rate > 0:
            raise ScenarioError(
                f"background_rate must be > 0, got {self.background_rate}")
        if not 0.0 <= self.diurnal_amplitude < 1.0:
            raise ScenarioError(
                f"diurnal_amplitude must be in [0, 1), got {self.diurnal_amplitude}")
        if not self.diurnal_period > 0:
            raise ScenarioError(f"diurnal_period must be > 0, got {self.diurnal_period}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ScenarioError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        prev_end = None
        for ep in sorted(self.episodes, key=lambda e: e.start):
            if not ep.length > 0 or not ep.attack_rate > 0 or ep.start < 0:
                raise ScenarioError(
                    f"episode needs start >= 0, length > 0, attack_rate > 0: {ep}")
            if ep.start + ep.length > self.duration:
                raise ScenarioError(
                    f"episode ends at {ep.start + ep.length}, beyond duration {self.duration}")
            if prev_end is not None and ep.start < prev_end:
                raise ScenarioError(f"episodes overlap at t={ep.start}")
            prev_end = ep.start + ep.length

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "interval_len": self.interval_len,
            "background_rate": self.background_rate,
            "diurnal_amplitude": self.diurnal_amplitude,
            "diurnal_period": self.diurnal_period,
            "episodes": [
                {"start": ep.start, "length": ep.length, "attack_rate": ep.attack_rate}
                for ep in self.episodes
            ],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        known = {"duration", "interval_len", "background_rate", "diurnal_amplitude",
                 "diurnal_period", "episodes", "seed"}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        missing = {"duration", "background_rate"} - set(data)
        if missing:
            raise ScenarioError(f"missing scenario keys: {sorted(missing)}")
        episodes = []
        for i, raw in enumerate(data.get("episodes", [])):
            extra = set(raw) - {"start", "length", "attack_rate"}
            if extra:
                raise ScenarioError(f"unknown episode keys in episode {i}: {sorted(extra)}")
            try:
                episodes.append(AttackEpisode(
                    start=float(raw["start"]),
                    length=float(raw["length"]),
                    attack_rate=float(raw["attack_rate"]),
                ))
            except KeyError as exc:
                raise ScenarioError(f"episode {i} is missing key {exc}")
        spec = cls(
            duration=float(data["duration"]),
            interval_len=float(data.get("interval_len", 1.0)),
            background_rate=float(data["background_rate"]),
            diurnal_amplitude=float(data.get("diurnal_amplitude", 0.0)),
            diurnal_period=float(data.get("diurnal_period", 86400.0)),
            episodes=tuple(episodes),
            seed=int(data.get("seed", 0)),
        )
        spec.validate()
        return spec


@dataclass(frozen=True)
class LabeledTrace:
    """Samples plus a per-interval attack flag and the spec that produced them.

    ``spec_echo`` is None for traces loaded from files rather than generated.
    """

    samples: tuple[IntervalSample, ...]
    labels: tuple[bool, ...]
    spec_echo: Optional[ScenarioSpec] = None

    def __post_init__(self):
        if len(self.samples) != len(self.labels):
            raise ScenarioError(
                f"{len(self.samples)} samples but {len(self.labels)} labels")


def background_mean(spec: ScenarioSpec, t: float) -> float:
    """Expected background SYN rate (per second) at time ``t``."""
    cycle = math.sin(2.0 * math.pi * t / spec.diurnal_period)
    return spec.background_rate * (1.0 + spec.diurnal_amplitude * cycle)


def generate_trace(spec: ScenarioSpec) -> LabeledTrace:
    """Generate the labeled trace for ``spec``; deterministic in the seed."""
    spec.validate()
    il = spec.interval_len
    n_intervals = math.ceil(spec.duration / il - 1e-9)
    episodes = sorted(spec.episodes, key=lambda e: e.start)
    streams = np.random.SeedSequence(int(spec.seed)).spawn(n_intervals)

    samples = []
    labels = []
    for n in range(n_intervals):
        t0 = n * il
        t1 = t0 + il
        rng = np.random.Generator(np.random.Philox(streams[n]))
        count = int(rng.poisson(background_mean(spec, t0 + il / 2.0) * il))
        label = False
        for ep in episodes:
            overlap = min(t1, ep.start + ep.length) - max(t0, ep.start)
            if overlap > 0:
                label = True
                count += int(rng.poisson(ep.attack_rate * overlap))
        samples.append(IntervalSample(index=n, start_time=t0, syn_count=count))
        labels.append(label)
    return LabeledTrace(samples=tuple(samples), labels=tuple(labels), spec_echo=spec)


def emit_csv_counts(trace: LabeledTrace, stream: TextIO) -> None:
    """Write ``index,syn_count,label`` lines; integers only, so the counts
    round-trip losslessly through :func:`synwatch.ingest.read_csv_counts`."""
    stream.write("index,syn_count,label\n")
    for sample, label in zip(trace.samples, trace.labels):
        stream.write(f"{sample.index},{sample.syn_count},{int(label)}\n")


def trace_from_counts(samples: Sequence[IntervalSample],
                      labels: Optional[Sequence[bool]] = None) -> LabeledTrace:
    """Wrap loaded samples as a trace; unlabeled inputs get all-benign labels."""
    if labels is None:
        labels = [False] * len(samples)
    return LabeledTrace(samples=tuple(samples), labels=tuple(labels), spec_echo=None)
