"""Streaming SYN-rate change detector.

The detector consumes one per-interval SYN count at a time and keeps three
pieces of running state: an EWMA baseline of the mean count, a variance
estimate, and a one-sided CUSUM statistic over the detrended counts.

Per interval ``n`` with count ``x_n``:

    resid_n = x_n - mu_{n-1}                                   (detrending)
    f_n     = max(0, f_{n-1}
                     + (alpha * mu_{n-1} / var) * (resid_n - alpha * mu_{n-1} / 2))
    mu_n    = lambda * mu_{n-1} + (1 - lambda) * x_n           (baseline)

``alpha`` stands in for the unknown post-change mean: a change is modelled
as the baseline growing by the fraction ``alpha``, so no attack model is
needed. An alarm is raised whenever ``f_n >= threshold_h``. The increment
always uses the baseline from the previous interval, so the current
observation cannot explain itself away.

The variance is either fixed up front or tracked as an EWMA of squared
residuals (same ``lambda``), floored at ``var_floor`` to keep the ratio
finite on very quiet links.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

from .errors import ConfigError, SequencingError

ResetPolicy = Literal["hold_until_quiet", "reset_to_zero"]
AlarmKind = Literal["onset", "ongoing"]

DEFAULT_VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class DetectorConfig:
    """Tuning knobs for the detector.

    Attributes:
        ewma_lambda: Baseline smoothing factor in [0, 1). Values near 1 give
            a slow-moving baseline.
        alpha: Assumed fractional increase of the mean count after a change,
            > 0. Smaller values make the detector more sensitive.
        threshold_h: Alarm threshold for the CUSUM statistic, > 0.
        fixed_variance: Use this variance (> 0) instead of tracking one.
            ``None`` selects the adaptive squared-residual EWMA.
        var_floor: Lower bound for the adaptive variance estimate, > 0.
        warmup_intervals: Number of leading intervals (>= 1) used only to
            seed the baseline (and variance); no CUSUM updates, no alarms.
        reset_policy: ``hold_until_quiet`` keeps the statistic running so the
            alarm stays asserted while f >= h; ``reset_to_zero`` restarts the
            statistic at 0 after every alarm-raising interval.
        freeze_baseline_in_alarm: When true, baseline and variance are not
            updated on alarmed intervals, so attack traffic cannot absorb
            itself into the baseline.
    """

    ewma_lambda: float = 0.98
    alpha: float = 0.5
    threshold_h: float = 5.0
    fixed_variance: Optional[float] = None
    var_floor: float = DEFAULT_VAR_FLOOR
    warmup_intervals: int = 30
    reset_policy: ResetPolicy = "hold_until_quiet"
    freeze_baseline_in_alarm: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.ewma_lambda < 1.0:
            raise ConfigError(f"ewma_lambda must be in [0, 1), got {self.ewma_lambda}")
        if not self.alpha > 0.0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not self.threshold_h > 0.0:
            raise ConfigError(f"threshold_h must be > 0, got {self.threshold_h}")
        if self.fixed_variance is not None and not self.fixed_variance > 0.0:
            raise ConfigError(f"fixed_variance must be > 0, got {self.fixed_variance}")
        if not self.var_floor > 0.0:
            raise ConfigError(f"var_floor must be > 0, got {self.var_floor}")
        if self.warmup_intervals < 1:
            raise ConfigError(f"warmup_intervals must be >= 1, got {self.warmup_intervals}")
        if self.reset_policy not in ("hold_until_quiet", "reset_to_zero"):
            raise ConfigError(f"unknown reset_policy {self.reset_policy!r}")

    @property
    def adaptive_variance(self) -> bool:
        return self.fixed_variance is None


@dataclass(frozen=True)
class IntervalSample:
    """SYN count for one fixed-length sample interval."""

    index: int
    start_time: float
    syn_count: int


@dataclass(frozen=True)
class DetectorState:
    """Running state; a plain value produced and consumed by :func:`step`.

    ``mu_bar`` and ``var_hat`` are 0.0 until seeded during warmup.
    """

    n: int
    mu_bar: float
    var_hat: float
    f: float
    in_alarm: bool
    warmed_up: bool

    def to_dict(self) -> dict:
        """JSON-ready checkpoint of the state (field names are stable)."""
        return {
            "n": self.n,
            "mu_bar": self.mu_bar,
            "var_hat": self.var_hat,
            "f": self.f,
            "in_alarm": self.in_alarm,
            "warmed_up": self.warmed_up,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorState":
        return cls(
            n=int(data["n"]),
            mu_bar=float(data["mu_bar"]),
            var_hat=float(data["var_hat"]),
            f=float(data["f"]),
            in_alarm=bool(data["in_alarm"]),
            warmed_up=bool(data["warmed_up"]),
        )


@dataclass(frozen=True)
class AlarmEvent:
    """One alarmed interval. ``kind`` is "onset" for the first interval of an
    alarm period and "ongoing" while the statistic stays at or above the
    threshold."""

    interval_index: int
    start_time: float
    f_value: float
    threshold: float
    kind: AlarmKind

    def to_dict(self) -> dict:
        return {
            "interval_index": self.interval_index,
            "start_time": self.start_time,
            "f_value": self.f_value,
            "threshold": self.threshold,
            "kind": self.kind,
        }


def ewma_update(mu_bar_prev: float, x: float, lam: float) -> float:
    """One EWMA step: lam * mu_bar_prev + (1 - lam) * x."""
    return lam * mu_bar_prev + (1.0 - lam) * x


def residual(x: float, mu_bar_prev: float) -> float:
    """Detrended count: the observation minus the previous baseline."""
    return x - mu_bar_prev


def variance_update(var_prev: float, resid: float, lam: float,
                    var_floor: float = DEFAULT_VAR_FLOOR) -> float:
    """EWMA of squared residuals, floored at ``var_floor``."""
    return max(lam * var_prev + (1.0 - lam) * resid * resid, var_floor)


def cusum_general(f_prev: float, y: float, mu0: float, mu1: float, sigma2: float) -> float:
    """General one-sided CUSUM recursion for a mean shift mu0 -> mu1.

    Returns max(0, f_prev + ((mu1 - mu0) / sigma2) * (y - (mu1 + mu0) / 2)).
    """
    if not sigma2 > 0.0:
        raise ConfigError(f"sigma2 must be > 0, got {sigma2}")
    return max(0.0, f_prev + ((mu1 - mu0) / sigma2) * (y - (mu1 + mu0) / 2.0))


def new_state(config: DetectorConfig) -> DetectorState:
    """Fresh state for ``config``; raises ConfigError on invalid parameters."""
    config.validate()
    var0 = config.fixed_variance if config.fixed_variance is not None else 0.0
    return DetectorState(n=0, mu_bar=0.0, var_hat=var0, f=0.0,
                         in_alarm=False, warmed_up=False)


def step(state: DetectorState, sample: IntervalSample,
         config: DetectorConfig) -> tuple[DetectorState, Optional[AlarmEvent]]:
    """Advance the detector by one interval.

    Returns the successor state and an :class:`AlarmEvent` if this interval
    is alarmed. Samples must arrive in order (``sample.index == state.n``).
    """
    if sample.index != state.n:
        raise SequencingError(
            f"expected sample index {state.n}, got {sample.index}")
    x = float(sample.syn_count)

    if not state.warmed_up:
        # Seed the baseline with the first sample, then refine; the CUSUM
        # statistic stays at zero until warmup completes.
        if state.n == 0:
            mu = x
            var = state.var_hat
        else:
            if config.adaptive_variance:
                var = variance_update(state.var_hat, residual(x, state.mu_bar),
                                      config.ewma_lambda, config.var_floor)
            else:
                var = state.var_hat
            mu = ewma_update(state.mu_bar, x, config.ewma_lambda)
        warmed = state.n + 1 >= config.warmup_intervals
        if warmed and config.adaptive_variance:
            var = max(var, config.var_floor)
        return DetectorState(n=state.n + 1, mu_bar=mu, var_hat=var, f=0.0,
                             in_alarm=False, warmed_up=warmed), None

    mu_prev = state.mu_bar
    var = state.var_hat
    # The increment uses the prior baseline; with mu_prev == 0 both factors
    # of the increment vanish and f is left unchanged.
    f_new = cusum_general(state.f, residual(x, mu_prev),
                          0.0, config.alpha * mu_prev, var)
    alarmed = f_new >= config.threshold_h

    event: Optional[AlarmEvent] = None
    if alarmed:
        event = AlarmEvent(
            interval_index=sample.index,
            start_time=sample.start_time,
            f_value=f_new,
            threshold=config.threshold_h,
            kind="ongoing" if state.in_alarm else "onset",
        )

    if alarmed and config.freeze_baseline_in_alarm:
        mu, var_next = mu_prev, state.var_hat
    else:
        mu = ewma_update(mu_prev, x, config.ewma_lambda)
        if config.adaptive_variance:
            var_next = variance_update(state.var_hat, residual(x, mu_prev),
                                       config.ewma_lambda, config.var_floor)
        else:
            var_next = state.var_hat

    in_alarm = alarmed
    if alarmed and config.reset_policy == "reset_to_zero":
        f_new = 0.0
        in_alarm = False

    return DetectorState(n=state.n + 1, mu_bar=mu, var_hat=var_next, f=f_new,
                         in_alarm=in_alarm, warmed_up=True), event
