import numpy as np
import pytest
import torch

from avse_tongue.synthdata import CorpusCache, GeneratorConfig, generate_corpus

SMALL = dict(n_train=16, n_valid=4, n_test=8, noise_seconds=3.0, babble_talkers=3, duration_s=(1.2, 1.6))


@pytest.fixture(scope="session")
def small_cfg():
    return GeneratorConfig.toy(**SMALL)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, small_cfg):
    """A few dozen short utterances; enough to exercise every code path quickly."""
    return generate_corpus(small_cfg, tmp_path_factory.mktemp("small_corpus"))


@pytest.fixture(scope="session")
def small_cache(small_corpus):
    return CorpusCache(small_corpus)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)


_ACCEPTANCE: list[str] = []


class AcceptanceReport:
    """Collects one line per acceptance criterion; printed in the terminal summary."""

    def record(self, number: int, title: str, ok: bool, seconds: float, detail: str = "") -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f} s)"
        if detail:
            line += f"  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceReport()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
