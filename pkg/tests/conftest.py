from pathlib import Path

import pytest
import torch

from conchshell.data import build_manifest

FIXTURE = Path(__file__).parent / "fixtures" / "bop"


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture(scope="session")
def fixture_root() -> Path:
    return FIXTURE


@pytest.fixture(scope="session")
def manifest():
    return build_manifest(FIXTURE, 0.85, 0)


def zero_biases(module: torch.nn.Module) -> torch.nn.Module:
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
    return module


def run_pipeline(out: Path) -> Path:
    """Prepare and train every stage at the test profile through the CLI."""
    from conchshell.cli import main

    common = ["--profile", "test", "--out", str(out)]
    assert main(["prepare", *common, str(FIXTURE)]) == 0
    for stage in ("tcnn", "codec", "gan"):
        assert main(["train", stage, *common]) == 0
    return out


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory) -> Path:
    return run_pipeline(tmp_path_factory.mktemp("run"))


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
