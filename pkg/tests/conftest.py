import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE = {}


def record(criterion: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE[criterion] = (name, bool(passed), detail)
    line = f"ACCEPTANCE {criterion:2d} {'PASS' if passed else 'FAIL'}  {name}  {detail}"
    print(line)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d}. {name}  {detail}")


@pytest.fixture(scope="session")
def ref_design():
    from seslam.gains import build_lti, default_eigenvalues, place_poles
    return place_poles(build_lti(15), default_eigenvalues(15))


@pytest.fixture(scope="session")
def ref_gains(ref_design):
    from seslam.observer import ObserverGains
    return ObserverGains.from_design(ref_design, 1.0, "ones")


@pytest.fixture(scope="session")
def noiseless_10s():
    from seslam.dynamics import NoiseSpec, SimConfig, generate_measurements, generate_truth
    cfg = SimConfig(duration=10.0, noise=NoiseSpec.zero())
    truth = generate_truth(cfg)
    return cfg, truth, generate_measurements(truth, cfg.noise)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
