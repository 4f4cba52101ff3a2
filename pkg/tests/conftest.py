from __future__ import annotations

import pytest

from prefsqa.dataset import Dataset, Rating, SynthConfig, generate_synthetic

_ACCEPTANCE: dict[str, list] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        entry = _ACCEPTANCE.setdefault(name, [[], []])
        entry[0].append(report.outcome)
        entry[1].extend(report.user_properties)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured values."""
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcomes, props) in sorted(_ACCEPTANCE.items()):
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        detail = "  ".join(f"{k}={v}" for k, v in props)
        terminalreporter.write_line(f"{status}  {name}  {detail}".rstrip())


def make_ds(rows, scale="mos15") -> Dataset:
    return Dataset([Rating(*r) for r in rows], scale)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SynthConfig(n_systems=12, utterances_per_system=6, n_listeners=30, seed=11))


@pytest.fixture(scope="session")
def noiseless_synth():
    cfg = SynthConfig(n_systems=10, utterances_per_system=5, n_listeners=24, listener_bias_sd=0.0,
                      noise_sd=0.0, quantize=False, seed=4)
    return generate_synthetic(cfg)
