import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from streamcost.model import TrainConfig, TrainingExample, train  # noqa: E402
from streamcost.simulator import SimConfig, simulate  # noqa: E402
from streamcost.workload import GenerationConfig, generate_dataset  # noqa: E402

SHORT_RUN = SimConfig(duration=12.0, warmup=2.0)


@pytest.fixture(scope="session")
def small_examples():
    """About a hundred labelled queries over the three training structures."""
    cfg = GenerationConfig(seed=3, counts={"linear": 45, "two-way-join": 40,
                                           "three-way-join": 35})
    out = []
    for q in generate_dataset(cfg):
        obs = simulate(q, SHORT_RUN)
        if obs.usable:
            out.append(TrainingExample(q, obs.dcs, obs.latency_ms, obs.throughput))
    return out


@pytest.fixture(scope="session")
def small_model(small_examples):
    return train(small_examples, TrainConfig(epochs=15, seed=1))


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Store one PASS/FAIL line per acceptance criterion for the summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def _record(number: int, ok: bool, detail: str) -> None:
        lines[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return _record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
