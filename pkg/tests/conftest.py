import os
import shutil
from pathlib import Path

import numpy as np
import pytest

from softproprio.cli import main

CONFIGS = Path(__file__).parent / "configs"
MINI = CONFIGS / "mini.toml"
ACCEPTANCE = CONFIGS / "acceptance.toml"
VARIANTS3 = ("dual-ae", "sim-only-lstm", "real2sim-lstm")


def run_cli(*args) -> int:
    return main([*map(str, args), "-q"])


def full_pipeline(config: Path, out: Path) -> None:
    """generate, train each configured baseline and the dual model, evaluate."""
    assert run_cli("generate", "--config", config, "--out", out) == 0
    for v in VARIANTS3:
        assert run_cli("train", v, "--config", config, "--out", out) == 0
    assert run_cli("eval", "--config", config, "--out", out) == 0


@pytest.fixture(scope="session")
def mini_data(tmp_path_factory) -> Path:
    """A generated mini dataset (read-only for tests)."""
    out = tmp_path_factory.mktemp("mini_data")
    assert run_cli("generate", "--config", MINI, "--out", out) == 0
    return out


@pytest.fixture(scope="session")
def mini_run(tmp_path_factory, mini_data) -> Path:
    """A fully trained and evaluated mini run (read-only for tests)."""
    out = tmp_path_factory.mktemp("mini_run")
    shutil.copytree(mini_data / "data", out / "data")
    for v in VARIANTS3:
        assert run_cli("train", v, "--config", MINI, "--out", out) == 0
    assert run_cli("eval", "--config", MINI, "--out", out) == 0
    return out


@pytest.fixture
def fresh_mini(tmp_path, mini_data) -> Path:
    """A writable copy of the mini dataset without checkpoints."""
    shutil.copytree(mini_data / "data", tmp_path / "data")
    return tmp_path


@pytest.fixture(scope="session")
def acceptance_run(tmp_path_factory) -> Path:
    """Full-scale run. ``SOFTPROPRIO_ACCEPT_DIR`` points at a finished run to reuse it,
    or at an empty/nonexistent directory to build one there."""
    env = os.environ.get("SOFTPROPRIO_ACCEPT_DIR")
    out = Path(env) if env else tmp_path_factory.mktemp("acceptance")
    if not (out / "report" / "summary.json").exists():
        if (out / "data" / "manifest.json").exists():
            for v in VARIANTS3:
                assert run_cli("train", v, "--config", ACCEPTANCE, "--out", out) == 0
            assert run_cli("eval", "--config", ACCEPTANCE, "--out", out) == 0
        else:
            full_pipeline(ACCEPTANCE, out)
    return out


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when != "call" and status != "error":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props:
                lines.append((props["criterion"], "PASS" if status == "passed" else "FAIL",
                              props.get("title", ""), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for n, verdict, title, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {n:2d} {verdict}: {title}" + (f" | {detail}" if detail else ""))
