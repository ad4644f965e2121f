import subprocess
from typing import Any, Dict, List

import numpy as np
import pytest

import ohsize.config as config
from ohsize.core.cost_model import power_law_curve, total_cost
from ohsize.errors import OracleError, OracleQuotaExceeded
from ohsize.services.oracle import ReplayOracle, SubprocessOracle, SyntheticOracle
from ohsize.types.cost import CostParameters, PowerLawTheta

THETA = PowerLawTheta(a=10_000, b=1.2, c=0.2)


class DummyCompleted:
    def __init__(self, stdout: str) -> None:
        self.stdout = stdout
        self.returncode = 0


def _patch_run(monkeypatch, stdout: str, log: List[Dict[str, Any]]):
    def fake_run(argv, **kwargs):
        log.append({"argv": argv, **kwargs})
        return DummyCompleted(stdout)

    monkeypatch.setattr("ohsize.services.oracle.subprocess.run", fake_run)


def test_synthetic_noise_depends_only_on_call_index():
    first = SyntheticOracle(power_law_curve(THETA), seed=1)
    second = SyntheticOracle(power_law_curve(THETA), seed=1)
    assert [first(1_000), first(5_000)] == [second(1_000), second(5_000)]
    assert first(1_000) != first(1_000)


def test_noiseless_oracle_uses_cache():
    oracle = SyntheticOracle(power_law_curve(THETA), seed=1, noiseless=True)
    value, variance = oracle(1_000)
    assert value == pytest.approx(float(power_law_curve(THETA)(np.array([1_000.0]))[0]))
    assert oracle(1_000) == (value, variance)
    assert oracle.calls == 1
    oracle(1_000, fresh=True)
    assert oracle.calls == 2


def test_cost_target_scales_noise():
    params = CostParameters(N=100_000, k1=0.4, theta=THETA)
    oracle = SyntheticOracle(
        power_law_curve(THETA), variance_range=(1e-4, 1e-4), seed=2, target="cost", k1=0.4, N=100_000, noiseless=True
    )
    value, variance = oracle(20_000)
    assert value == pytest.approx(float(total_cost(20_000, params)))
    assert variance == pytest.approx(1e-4 * 80_000**2)


def test_cost_target_needs_population():
    with pytest.raises(OracleError):
        SyntheticOracle(power_law_curve(THETA), target="cost")


def test_quota_exceeded():
    oracle = SyntheticOracle(power_law_curve(THETA), seed=0, max_calls=2)
    oracle(10)
    oracle(20)
    assert oracle.remaining_quota == 0
    with pytest.raises(OracleQuotaExceeded):
        oracle(30)


def test_quota_defaults_to_configured_limit(monkeypatch):
    monkeypatch.setenv("OHSIZE_ORACLE_MAX_CALLS", "3")
    config.oracle_max_calls.cache_clear()
    oracle = SyntheticOracle(power_law_curve(THETA), seed=0)
    assert oracle.remaining_quota == 3


def test_subprocess_oracle_parses_last_line(monkeypatch):
    log: List[Dict[str, Any]] = []
    _patch_run(monkeypatch, "fitting...\n0.31,0.0004\n", log)
    oracle = SubprocessOracle("./estimate --fast", timeout=5)
    assert oracle(1_200) == (0.31, 0.0004)
    assert log[0]["argv"] == ["./estimate", "--fast", "1200"]
    assert log[0]["timeout"] == 5


def test_subprocess_oracle_cache(monkeypatch):
    log: List[Dict[str, Any]] = []
    _patch_run(monkeypatch, "0.31,0.0004\n", log)
    oracle = SubprocessOracle(["estimate"], cache_results=True)
    oracle(500)
    oracle(500)
    assert len(log) == 1
    oracle(500, fresh=True)
    assert len(log) == 2


@pytest.mark.parametrize("stdout", ["", "0.3\n", "abc,def\n", "0.3,-1\n", "nan,0.1\n"])
def test_subprocess_oracle_rejects_bad_output(monkeypatch, stdout):
    _patch_run(monkeypatch, stdout, [])
    with pytest.raises(OracleError):
        SubprocessOracle("estimate")(100)


def test_subprocess_oracle_timeout(monkeypatch):
    def fake_run(argv, **kwargs):
        raise subprocess.TimeoutExpired(argv, kwargs["timeout"])

    monkeypatch.setattr("ohsize.services.oracle.subprocess.run", fake_run)
    with pytest.raises(OracleError, match="timed out"):
        SubprocessOracle("estimate", timeout=0.5)(100)


def test_subprocess_oracle_failure(monkeypatch):
    def fake_run(argv, **kwargs):
        raise subprocess.CalledProcessError(1, argv)

    monkeypatch.setattr("ohsize.services.oracle.subprocess.run", fake_run)
    with pytest.raises(OracleError, match="failed"):
        SubprocessOracle("estimate")(100)


def test_empty_command():
    with pytest.raises(OracleError):
        SubprocessOracle("")


def test_replay_then_fallback():
    calls: List[int] = []

    def fallback(n):
        calls.append(n)
        return float(n), 1.0

    replay = ReplayOracle([(0.5, 0.1), (0.4, 0.1)], fallback)
    assert replay(10) == (0.5, 0.1)
    assert replay(20) == (0.4, 0.1)
    assert replay(30) == (30.0, 1.0)
    assert calls == [30]


def test_replay_without_fallback():
    replay = ReplayOracle([(0.5, 0.1)])
    replay(1)
    with pytest.raises(OracleError):
        replay(2)
