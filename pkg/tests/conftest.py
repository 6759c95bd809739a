"""Shared fixtures and the acceptance-summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from dynfourier.ifs import IFSSystem, MobiusMap, Similitude
from dynfourier.measures import self_similar

I1 = np.eye(1)
I2 = np.eye(2)

# Filled by tests/test_acceptance.py; printed once at the end of the session.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    """Register the outcome of an acceptance criterion."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"AC{k:<2d} {'PASS' if ok else 'FAIL'}  {detail}")


def cantor_system() -> IFSSystem:
    return IFSSystem([Similitude(1 / 3, I1, [0.0]), Similitude(1 / 3, I1, [2 / 3])])


def half_third_system() -> IFSSystem:
    return IFSSystem([Similitude(1 / 2, I1, [0.0]), Similitude(1 / 3, I1, [2 / 3])])


def lebesgue_system() -> IFSSystem:
    return IFSSystem([Similitude(1 / 2, I1, [0.0]), Similitude(1 / 2, I1, [1 / 2])])


def uni_system() -> IFSSystem:
    return IFSSystem([MobiusMap((-0.15, 0.2), 0.4, I2, (-1.0, 0.5)),
                      MobiusMap((1.15, 0.2), 0.4, I2, (2.0, 0.5)),
                      MobiusMap((0.22, 0.4), 0.4, I2, (0.5, -1.0)),
                      Similitude(0.4, I2, (0.55, 0.55))])


def similitude_control_system() -> IFSSystem:
    return IFSSystem([Similitude(0.3, I2, (0.05, 0.05)), Similitude(0.25, I2, (0.7, 0.05)),
                      Similitude(0.2, I2, (0.1, 0.7)), Similitude(0.4, I2, (0.55, 0.55))])


@pytest.fixture(scope="session")
def cantor():
    return self_similar(cantor_system(), [0.5, 0.5])


@pytest.fixture(scope="session")
def half_third():
    return self_similar(half_third_system(), [0.5, 0.5])


@pytest.fixture(scope="session")
def lebesgue():
    return self_similar(lebesgue_system(), [0.5, 0.5])


@pytest.fixture(scope="session")
def uni():
    return uni_system()


@pytest.fixture(scope="session")
def sim_control():
    return similitude_control_system()


# Bundled configuration and reduced parameters for a quick run of each subcommand.
SMALL_RUNS = {
    "decay": ("half_third", {"T_max": 200.0, "grid_step": 0.2}),
    "flatten": ("half_third", {"T": [50.0, 200.0], "grid_step": 0.2}),
    "nonconc": ("similitude_control", {"trials": 2}),
    "decompose": ("half_third", {"xi": 1e5}),
    "separation": ("half_third", {"xi": 1e5}),
    "pipeline": ("half_third", {"xi": 1e5}),
    "uni": ("uni_mobius", {"n_list": [3, 4]}),
    "spectrum": ("uni_mobius", {"n_max": 6, "b_list": [10.0], "depth": 2}),
    "disintegrate": ("gauss_product", {"n_xi": 2, "n_samples": 300}),
    "normality": ("lebesgue", {"N_schedule": [16, 64], "samples": 20}),
    "multinomial": ("half_third", {"n_max": 50}),
}


def small_config(tmp_path, command: str) -> str:
    """Write a bundled configuration with reduced parameters for ``command``."""
    import json
    from importlib.resources import files

    name, params = SMALL_RUNS[command]
    cfg = json.loads((files("dynfourier") / "configs" / f"{name}.json").read_text())
    cfg.setdefault("params", {})[command] = params
    path = tmp_path / f"{command}.json"
    path.write_text(json.dumps(cfg, indent=1))
    return str(path)
