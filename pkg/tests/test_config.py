import json

import pytest

from blockcloud.config import load_config, parse_config
from blockcloud.errors import ConfigError


def fields(raw):
    with pytest.raises(ConfigError) as e:
        parse_config(raw)
    return {path for path, _ in e.value.errors}


def test_defaults_generate_nodes():
    cfg = parse_config({"seed": 3})
    assert [n.id for n in cfg.by_role("super")] == [f"super-{i}" for i in range(4)]
    assert cfg.tasks == () and cfg.seed == 3
    assert cfg.policy.validators_per_task == 4
    assert cfg.timers.b_timer_us == 10_000_000 and cfg.timers.t_timer_us == 2_000_000


def test_generation_is_seeded():
    a = parse_config({"seed": 1, "node_counts": {"super": 5}})
    b = parse_config({"seed": 1, "node_counts": {"super": 5}})
    assert a.nodes == b.nodes


def test_unknown_top_key():
    assert fields({"nodez": []}) == {"nodez"}


def test_errors_enumerated_together():
    raw = {
        "latency": {"min_us": 10, "max_us": 5},
        "policy": {"tariff_rate": 2},
        "dcc": {"a": 0.5, "b": 0.6},
        "tasks": [{"id": "t", "tasker": "tasking-0", "profile": {"weights": [1, 1, 1, 1, 1, 1]}},
                  {"id": "u", "tasker": "super-0"}],
    }
    got = fields(raw)
    assert {"latency", "policy.tariff_rate", "dcc", "tasks[1].tasker", "tasks[0].profile.weights"} <= got


def test_lambda_key_maps():
    assert parse_config({"dcc": {"lambda": 0.5}}).dcc.lam == 0.5


def test_behaviors_apply_and_validate():
    cfg = parse_config({"behaviors": {"super-1": "silent"}})
    assert cfg.node("super-1").behavior == "silent"
    assert "behaviors.ghost" in fields({"behaviors": {"ghost": "silent"}})
    assert "behaviors.super-1" in fields({"behaviors": {"super-1": "lazy"}})


def test_too_few_supers_for_tasks():
    raw = {"node_counts": {"super": 2, "tasking": 1}, "tasks": [{"tasker": "tasking-0"}]}
    assert "nodes" in fields(raw)


def test_transfer_needs_known_recipient():
    raw = {"tasks": [{"tasker": "tasking-0", "assignments": [{"type": "null", "value": 1, "to": "nobody"}]}]}
    assert "tasks[0].assignments[0].to" in fields(raw)


def test_inject_faults_must_be_bool():
    assert "inject_faults.conservation" in fields({"inject_faults": {"conservation": "yes"}})


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"seed": 9}))
    assert load_config(good).seed == 9
