"""Scenario files: duration parsing, sweeps, defaults, and error context."""

import pytest

from churnckpt.config import ConfigError, load_scenarios, parse_duration
from churnckpt.experiments import DEFAULT_FIXED_INTERVALS
from churnckpt.job import AdaptivePolicy, FixedIntervalPolicy


def write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# durations
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "text,expected",
    [
        ("90", 90.0),
        ("90s", 90.0),
        ("5m", 300.0),
        ("8h", 28800.0),
        ("1.5h", 5400.0),
        (" 2H ", 7200.0),
        ("0", 0.0),
    ],
)
def test_parse_duration(text, expected):
    assert parse_duration(text) == expected


@pytest.mark.parametrize("text", ["", "h", "5d", "fast", "5 m m"])
def test_bad_durations_rejected(text):
    with pytest.raises(ConfigError):
        parse_duration(text)


# ---------------------------------------------------------------------------
# whole files
# ---------------------------------------------------------------------------

def test_empty_file_gets_all_defaults(tmp_path):
    (scenario,) = load_scenarios(write(tmp_path, "", name="defaults.ini"))
    assert scenario.scenario_id == "defaults"
    assert scenario.base_rate == pytest.approx(1.0 / 7200.0)
    assert scenario.population == 1000
    assert scenario.degree == 4
    assert scenario.peers == 8
    assert scenario.work_required == 8 * 3600.0
    assert scenario.checkpoint_cost == 20.0
    assert scenario.restore_cost == 50.0
    assert isinstance(scenario.policies[0], AdaptivePolicy)
    assert tuple(p.interval for p in scenario.policies[1:]) == DEFAULT_FIXED_INTERVALS
    assert scenario.seeds == tuple(range(30))
    assert scenario.max_wall_time is None


def test_full_file_parses(tmp_path):
    path = write(tmp_path, """
[churn]
mtbf = 2h
population = 200
degree = 3
stabilization = 15s

[job]
peers = 4
work = 30m

[overheads]
checkpoint = 5s
download = 10s

[policies]
policies = adaptive, fixed:5m, fixed:none

[estimator]
window = 25
calibration = 60s
cadence = 2
prior_mtbf = 3600
v_method = calibration-ratio
freshness = 5

[run]
seeds = 3, 7, 21
max_wall = 10h
max_events = 500000
""")
    (s,) = load_scenarios(path)
    assert s.base_rate == pytest.approx(1.0 / 7200.0)
    assert (s.population, s.degree, s.stabilization_period) == (200, 3, 15.0)
    assert (s.peers, s.work_required) == (4, 1800.0)
    assert (s.checkpoint_cost, s.restore_cost) == (5.0, 10.0)
    kinds = [type(p) for p in s.policies]
    assert kinds == [AdaptivePolicy, FixedIntervalPolicy, FixedIntervalPolicy]
    assert s.policies[1].interval == 300.0
    assert s.policies[2].interval is None
    est = s.estimator
    assert (est.window, est.calibration_seconds, est.exchange_every) == (25, 60.0, 2)
    assert est.prior_rate == pytest.approx(1.0 / 3600.0)
    assert est.cost_method == "calibration-ratio"
    assert est.freshness_periods == 5.0
    assert s.seeds == (3, 7, 21)
    assert s.max_wall_time == 36000.0
    assert s.max_events == 500_000


def test_mtbf_list_fans_out_into_scenarios(tmp_path):
    path = write(tmp_path, "[churn]\nmtbf = 4000, 7200, 14400\n", name="sweep.ini")
    scenarios = load_scenarios(path)
    assert [s.scenario_id for s in scenarios] == [
        "sweep-mtbf4000", "sweep-mtbf7200", "sweep-mtbf14400"]
    assert [s.base_rate for s in scenarios] == pytest.approx(
        [1 / 4000.0, 1 / 7200.0, 1 / 14400.0])
    # everything else is shared
    assert len({s.population for s in scenarios}) == 1


def test_rate_and_doubling(tmp_path):
    path = write(tmp_path, "[churn]\nrate = 0.001\ndouble_every = 5h\n")
    (s,) = load_scenarios(path)
    assert s.base_rate == 0.001
    assert s.doubling_period == 18000.0


def test_trace_path_resolves_relative_to_the_config(tmp_path):
    (tmp_path / "sessions.trace").write_text("0,100\n50,200\n")
    path = write(tmp_path, "[churn]\ntrace = sessions.trace\n")
    (s,) = load_scenarios(path)
    assert s.trace_path == str(tmp_path / "sessions.trace")
    assert s.schedule().trace_driven


def test_seed_count_expands_to_a_range(tmp_path):
    (s,) = load_scenarios(write(tmp_path, "[run]\nseeds = 5\n"))
    assert s.seeds == (0, 1, 2, 3, 4)


def test_explicit_seed_list_is_kept(tmp_path):
    (s,) = load_scenarios(write(tmp_path, "[run]\nseeds = 0, 4, 9\n"))
    assert s.seeds == (0, 4, 9)


# ---------------------------------------------------------------------------
# rejected files
# ---------------------------------------------------------------------------

@pytest.mark.parametrize(
    "body,fragment",
    [
        ("[churn]\nmtbf = 7200\nrate = 0.001\n", "only one of"),
        ("[churn]\ntrace = x.trace\ndouble_every = 4h\n", "double_every"),
        ("[churn]\nmtbf = fast\n", "not a duration"),
        ("[churn]\nmtbf = 0\n", "must be > 0"),
        ("[churn]\nrate = -1\n", ">= 0"),
        ("[churn]\npopulation = many\n", "not an integer"),
        ("[typo]\nx = 1\n", "unknown section"),
        ("[policies]\npolicies = adaptive, eager\n", "unknown policy"),
        ("[policies]\npolicies = fixed:soon\n", "bad fixed interval"),
        ("[run]\nseeds = one, two\n", "not integers"),
        ("[estimator]\nwindow = 0\n", "window"),
        ("[estimator]\nv_method = guess\n", "cost_method"),
        ("no section header", "scenario.ini"),
    ],
)
def test_bad_configs_name_the_culprit(tmp_path, body, fragment):
    path = write(tmp_path, body)
    with pytest.raises(ConfigError, match=fragment):
        load_scenarios(path)


def test_error_message_carries_file_section_and_key(tmp_path):
    path = write(tmp_path, "[job]\npeers = a few\n")
    with pytest.raises(ConfigError) as exc:
        load_scenarios(path)
    assert str(exc.value) == f"{path}: [job] peers: not an integer: 'a few'"


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        load_scenarios(str(tmp_path / "absent.ini"))
