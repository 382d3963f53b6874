"""Scenario config files: flat INI sections of ``key = value`` lines.

A minimal file needs nothing at all — every key has a default — but a
typical sweep looks like::

    [churn]
    mtbf = 4000, 7200, 14400   ; comma list fans out into one scenario each
    population = 1000
    degree = 4
    stabilization = 30s

    [job]
    peers = 8
    work = 8h

    [overheads]
    checkpoint = 20s
    download = 50s

    [policies]
    policies = adaptive, fixed:60, fixed:300, fixed:900, fixed:1800

    [estimator]
    window = 50
    calibration = 120s
    cadence = 1
    prior_mtbf = 7200
    v_method = measured
    freshness = 10

    [run]
    seeds = 30                 ; a count, or an explicit list 3, 7, 21
    max_wall = 100h            ; defaults to 50x the job length
    max_events = 2000000

Durations accept ``s``/``m``/``h`` suffixes (plain numbers are seconds).
``[churn]`` takes exactly one of ``mtbf``, ``rate``, or ``trace``;
``double_every`` adds the accelerating-churn mode on top of ``mtbf``/``rate``.
All problems raise :class:`ConfigError` with the file and key that caused
them.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import replace

from .job import AdaptivePolicy, AdaptiveSettings, FixedIntervalPolicy
from .experiments import ScenarioConfig

__all__ = ["ConfigError", "load_scenarios", "parse_duration"]

_DURATION_SUFFIXES = {"s": 1.0, "m": 60.0, "h": 3600.0}


class ConfigError(ValueError):
    """Scenario config file is invalid."""


def parse_duration(text: str) -> float:
    """``"90"``/``"90s"`` → 90.0, ``"5m"`` → 300.0, ``"8h"`` → 28800.0."""
    raw = text.strip().lower()
    scale = 1.0
    if raw and raw[-1] in _DURATION_SUFFIXES:
        scale = _DURATION_SUFFIXES[raw[-1]]
        raw = raw[:-1]
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"not a duration: {text!r}") from None
    return value * scale


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


class _Section:
    """Typed accessors over one INI section, with error context."""

    def __init__(self, parser: configparser.ConfigParser, name: str, path: str):
        self.name = name
        self.path = path
        self.raw = dict(parser[name]) if parser.has_section(name) else {}

    def _fail(self, key: str, problem: str):
        raise ConfigError(f"{self.path}: [{self.name}] {key}: {problem}")

    def has(self, key: str) -> bool:
        return key in self.raw

    def text(self, key: str, default: str | None = None) -> str | None:
        return self.raw.get(key, default)

    def duration(self, key: str, default: float | None = None) -> float | None:
        if key not in self.raw:
            return default
        try:
            return parse_duration(self.raw[key])
        except ConfigError as exc:
            self._fail(key, str(exc))

    def number(self, key: str, default: float | None = None) -> float | None:
        if key not in self.raw:
            return default
        try:
            return float(self.raw[key])
        except ValueError:
            self._fail(key, f"not a number: {self.raw[key]!r}")

    def integer(self, key: str, default: int | None = None) -> int | None:
        if key not in self.raw:
            return default
        try:
            return int(self.raw[key])
        except ValueError:
            self._fail(key, f"not an integer: {self.raw[key]!r}")


def _parse_policies(section: _Section) -> tuple:
    text = section.text("policies")
    if text is None:
        return ScenarioConfig.__dataclass_fields__["policies"].default
    policies = []
    for item in _split_list(text):
        if item == "adaptive":
            policies.append(AdaptivePolicy())
        elif item.startswith("fixed:"):
            interval_text = item.split(":", 1)[1]
            if interval_text == "none":
                policies.append(FixedIntervalPolicy(None))
                continue
            try:
                policies.append(FixedIntervalPolicy(parse_duration(interval_text)))
            except (ConfigError, ValueError) as exc:
                section._fail("policies", f"bad fixed interval in {item!r}: {exc}")
        else:
            section._fail("policies", f"unknown policy {item!r} "
                                      "(expected 'adaptive' or 'fixed:<interval>')")
    return tuple(policies)


def _parse_estimator(section: _Section) -> AdaptiveSettings:
    defaults = AdaptiveSettings()
    method = section.text("v_method", defaults.cost_method)
    try:
        return AdaptiveSettings(
            window=section.integer("window", defaults.window),
            calibration_seconds=section.duration(
                "calibration", defaults.calibration_seconds),
            exchange_every=section.integer("cadence", defaults.exchange_every),
            prior_rate=(1.0 / section.duration("prior_mtbf", 1.0 / defaults.prior_rate)),
            cost_method=method,
            freshness_periods=section.number("freshness", defaults.freshness_periods),
        )
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{section.path}: [estimator] {exc}") from None


def _parse_seeds(section: _Section) -> tuple[int, ...]:
    text = section.text("seeds")
    if text is None:
        return ScenarioConfig.__dataclass_fields__["seeds"].default
    items = _split_list(text)
    try:
        values = [int(item) for item in items]
    except ValueError:
        section._fail("seeds", f"not integers: {text!r}")
    if len(values) == 1 and values[0] > 0:
        return tuple(range(values[0]))  # a count
    if not values:
        section._fail("seeds", "empty")
    return tuple(values)


def load_scenarios(path: str) -> list[ScenarioConfig]:
    """Parse a scenario file into one or more :class:`ScenarioConfig`.

    A comma list under ``[churn] mtbf`` produces one scenario per value,
    with ids ``<stem>-mtbf<value>``; otherwise the single scenario is named
    after the file stem.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for name in parser.sections():
        if name not in ("churn", "job", "overheads", "policies", "estimator", "run"):
            raise ConfigError(f"{path}: unknown section [{name}]")

    churn = _Section(parser, "churn", path)
    job = _Section(parser, "job", path)
    overheads = _Section(parser, "overheads", path)
    policies = _Section(parser, "policies", path)
    estimator = _Section(parser, "estimator", path)
    run = _Section(parser, "run", path)

    sources = [key for key in ("mtbf", "rate", "trace") if churn.has(key)]
    if len(sources) > 1:
        raise ConfigError(f"{path}: [churn] give only one of mtbf/rate/trace")

    doubling = churn.duration("double_every")
    trace_path = None
    rates: list[tuple[str, float]] = []
    stem = os.path.splitext(os.path.basename(path))[0]
    if churn.has("trace"):
        trace_path = churn.text("trace")
        if not os.path.isabs(trace_path):
            trace_path = os.path.join(os.path.dirname(os.path.abspath(path)), trace_path)
        if doubling is not None:
            raise ConfigError(f"{path}: [churn] double_every does not apply to traces")
        rates.append((stem, 0.0))
    elif churn.has("rate"):
        rate = churn.number("rate")
        if not rate >= 0.0:
            raise ConfigError(f"{path}: [churn] rate must be >= 0, got {rate!r}")
        rates.append((stem, rate))
    else:
        mtbf_text = churn.text("mtbf", "7200")
        values = _split_list(mtbf_text)
        for item in values:
            try:
                mtbf = parse_duration(item)
            except ConfigError:
                raise ConfigError(f"{path}: [churn] mtbf: not a duration: {item!r}") from None
            if not mtbf > 0.0:
                raise ConfigError(f"{path}: [churn] mtbf must be > 0, got {item!r}")
            name = stem if len(values) == 1 else f"{stem}-mtbf{mtbf:g}"
            rates.append((name, 1.0 / mtbf))
        if not rates:
            raise ConfigError(f"{path}: [churn] mtbf: empty")

    try:
        base = ScenarioConfig(
            scenario_id=stem,
            trace_path=trace_path,
            doubling_period=doubling,
            population=churn.integer("population", 1000),
            degree=churn.integer("degree", 4),
            stabilization_period=churn.duration("stabilization", 30.0),
            peers=job.integer("peers", 8),
            work_required=job.duration("work", 8.0 * 3600.0),
            checkpoint_cost=overheads.duration("checkpoint", 20.0),
            restore_cost=overheads.duration("download", 50.0),
            policies=_parse_policies(policies),
            estimator=_parse_estimator(estimator),
            seeds=_parse_seeds(run),
            max_wall_time=run.duration("max_wall"),
            max_events=run.integer("max_events", ScenarioConfig.__dataclass_fields__[
                "max_events"].default),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    return [replace(base, scenario_id=name, base_rate=rate) for name, rate in rates]
