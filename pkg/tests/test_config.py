import math

import pytest

from epimem.server import ConfigError, ServerConfig


GOOD = """
# object memory
memory_name = Object
host = 127.0.0.1
port = 7411
core_segment = Instance:Obs
core_segment = Class
schema = schemas/object.xml
wm_max_bytes = 1048576
wm_max_snapshots_per_entity = 64
hot_query_threshold = 4
hot_window_seconds = 12.5
ltm_root = /tmp/ltm
mns = 127.0.0.1:7400
k_basis = 7
ltm_max_hz = 5
"""


def test_parse_full_config():
    cfg = ServerConfig.parse(GOOD, env={})
    assert cfg.memory_name == "Object"
    assert cfg.port == 7411
    assert cfg.core_segments == [("Instance", "Obs"), ("Class", None)]
    assert cfg.schema_files == ["schemas/object.xml"]
    assert cfg.wm_max_bytes == 1048576
    assert cfg.hot_query_threshold == 4
    assert cfg.hot_window_seconds == 12.5
    assert cfg.mns == ("127.0.0.1", 7400)
    assert cfg.k_basis == 7
    assert cfg.ltm_max_hz == 5.0


def test_env_overrides_mns():
    cfg = ServerConfig.parse(GOOD, env={"EPIMEM_MNS": "10.1.2.3:9000"})
    assert cfg.mns == ("10.1.2.3", 9000)


def test_missing_memory_name():
    with pytest.raises(ConfigError):
        ServerConfig.parse("port = 1", env={})


def test_unknown_key():
    with pytest.raises(ConfigError):
        ServerConfig.parse("memory_name = X\nbogus = 1", env={})


def test_invalid_budget():
    with pytest.raises(ConfigError):
        ServerConfig.parse("memory_name = X\nwm_max_bytes = 0", env={})


def test_inf_max_hz():
    cfg = ServerConfig.parse("memory_name = X\nltm_max_hz = inf", env={})
    assert math.isinf(cfg.ltm_max_hz)
