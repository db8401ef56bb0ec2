import json
import os
import math

import numpy as np
import pytest

from src import worker
from src.config_manager import ConfigManager
from src.logic import verification
from src.worker_pool import WorkerPool


def test_ping_and_list():
    assert worker.handle("ping", {}) == {"status": "ok"}
    assert [c["id"] for c in worker.handle("list_checks", {})] == list(verification.CHECKS)


def test_run_check_matches_in_process_run():
    config = {"settings": verification.resolve_settings(), "seed": 11}
    result = worker.handle("run_check", {"check_id": "blowup_probe", "config": config})
    direct = verification.run_check("blowup_probe", config["settings"], 11).to_dict()
    assert result["status"] == "pass"
    assert {k: v for k, v in result.items() if k != "seconds"} == {k: v for k, v in direct.items() if k != "seconds"}


def test_handle_errors():
    with pytest.raises(ValueError, match="check_id is required"):
        worker.handle("run_check", {})
    with pytest.raises(LookupError):
        worker.handle("format_disk", {})


def test_json_safe_encoder():
    payload = {
        "array": np.arange(3),
        "int": np.int64(4),
        "nan": np.float64(math.nan),
        "complex": 1 - 2j,
        "set": {3, 1},
        "report": verification.VerificationReport.from_error("x", 0.0, 1.0),
    }
    decoded = json.loads(json.dumps(payload, cls=worker.JsonSafeEncoder))
    assert decoded["array"] == [0, 1, 2]
    assert decoded["int"] == 4
    assert decoded["nan"] is None
    assert decoded["complex"] == {"re": 1.0, "im": -2.0}
    assert decoded["set"] == [1, 3]
    assert decoded["report"]["status"] == "pass"


def test_json_safe_encoder_nulls_nested_non_finite_floats():
    payload = {
        "plain": math.nan,
        "nested": {"values": [np.float64(math.inf), 1.5, (float("-inf"), np.float32(2.0))]},
        "complex": complex(math.nan, 1.0),
        "array": np.array([1.0, math.nan]),
        "skipped": verification.VerificationReport.skipped("x", "no scipy"),
    }
    text = json.dumps(payload, cls=worker.JsonSafeEncoder)
    assert "NaN" not in text and "Infinity" not in text
    decoded = json.loads(text)
    assert decoded["plain"] is None
    assert decoded["nested"]["values"] == [None, 1.5, [None, 2.0]]
    assert decoded["complex"] == {"re": None, "im": 1.0}
    assert decoded["array"] == [1.0, None]
    assert decoded["skipped"]["max_error"] is None


def test_slot_names(config_file):
    pool = WorkerPool(config_file({"workers": 3}), "src")
    try:
        assert pool.slot_names() == ["slot0", "slot1", "slot2"]
    finally:
        pool.shutdown()


@pytest.mark.slow
def test_pool_reports_match_in_process_reports(config_file):
    manager = config_file({"workers": 2, "worker_timeout": 0})
    base_dir = os.path.dirname(os.path.abspath(worker.__file__))
    pool = WorkerPool(manager, base_dir)
    try:
        settings = {**verification.resolve_settings(), "workers": 2}
        pooled = verification.run_report("charts", settings, seed=4, worker_pool=pool, omit_timing=True)
        local = verification.run_report("charts", settings, seed=4, omit_timing=True)
    finally:
        pool.shutdown()
    dump = lambda reports: [r.to_dict(include_timing=False) for r in reports]
    assert dump(pooled) == dump(local)


def test_config_manager_feeds_pool_settings(tmp_path):
    manager = ConfigManager(str(tmp_path / "absent.json"))
    assert manager.get_global_setting("worker_timeout") == 300
    assert manager.get_global_setting("enable_worker_logging") is False
