import pytest

from flowdirector.config import ConfigError, config_from_dict, load_config


def test_defaults():
    cfg = config_from_dict({})
    assert cfg.allocator.granularity_gbps == 5
    assert cfg.monitor.threshold == 0.8 and cfg.monitor.window == 3
    assert cfg.orchestrator.reuse_window_s == 600
    assert (cfg.tuning.per_transfer_cap_gbps, cfg.tuning.window_gbit,
            cfg.tuning.min_active, cfg.tuning.max_active) == (2.0, 0.5, 2, 500)


def test_sites_and_rtt():
    cfg = config_from_dict({"sites": {
        "A": {"capacity_gbps": 100, "endpoints": 2, "B": {"rtt_ms": 12}},
        "B": {"capacity_gbps": 50, "endpoints": ["b-x"]},
    }})
    assert cfg.site("A").endpoints == ["a-ep1", "a-ep2"]
    assert cfg.rtt_ms("A", "B") == cfg.rtt_ms("B", "A") == 12
    assert cfg.rtt_ms("A", "C") == cfg.orchestrator.default_rtt_ms
    assert cfg.site("Z") is None


@pytest.mark.parametrize("doc,needle", [
    ({"allocator": {"granularity_gbps": 0}}, "granularity"),
    ({"allocator": {"granularity": 5}}, "allocator.granularity: unknown key"),
    ({"monitor": {"threshold": "high"}}, "monitor.threshold: expected a number"),
    ({"adapters": {"mode": "carrier-pigeon"}}, "adapters.mode"),
    ({"nonsense": {}}, "nonsense"),
    ({"sites": {"A": {"endpoints": 1}}}, "sites.A.capacity_gbps"),
    ({"sites": {"A": {"capacity_gbps": 1, "B": 7}}}, "sites.A.B"),
    ({"sites": {"A": {"capacity_gbps": 1, "endpoints": ["x"]},
                "B": {"capacity_gbps": 1, "endpoints": ["x"]}}}, "unique"),
])
def test_rejections(doc, needle):
    with pytest.raises(ConfigError, match=needle):
        config_from_dict(doc)


def test_yaml_error_has_position(tmp_path):
    f = tmp_path / "c.yaml"
    f.write_text("store:\n  path: [unclosed\n")
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        load_config(str(f))


def test_json_is_accepted(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{"allocator": {"granularity_gbps": 10}}')
    assert load_config(str(f)).allocator.granularity_gbps == 10


def test_shipped_mock_config_loads():
    from support import ROOT
    cfg = load_config(str(ROOT / "configs" / "mock.yaml"))
    assert cfg.adapters.mode == "mock"
    assert cfg.rtt_ms("T1_US_FNAL", "T2_US_UCSD") == 55
    assert sum(len(s.endpoints) for s in cfg.sites) == 7
