import numpy as np
import pytest

from spwitness import fock

_ACCEPTANCE = {}
_EXPECTED = {}


class AcceptanceLog:
    """Collects one line per acceptance criterion for the terminal summary."""

    def expect(self, key, title):
        _EXPECTED.setdefault(key, title)

    def record(self, key, passed, detail):
        _ACCEPTANCE[key] = (bool(passed), detail)
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _EXPECTED and not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(set(_EXPECTED) | set(_ACCEPTANCE), key=lambda k: (len(str(k)), str(k))):
        title = _EXPECTED.get(key, "")
        if key in _ACCEPTANCE:
            passed, detail = _ACCEPTANCE[key]
            terminalreporter.write_line(f"[{key:>2}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"[{key:>2}] FAIL  {title}: no result recorded (test errored or was skipped)")


@pytest.fixture(scope="session")
def ideal_state():
    return fock.ideal_split_state()


def modeled_state(p1, p2, eta_A, eta_B):
    """Heralded source split on a balanced beam splitter, then lossy channels."""
    split = fock.beam_splitter_split(fock.heralded_source_state(p1, p2))
    return fock.apply_loss(split, fock.LossParams(eta_A, eta_B))


def local_etas(mode, eta_ab):
    if mode == "sym":
        e = float(np.sqrt(eta_ab))
        return e, e
    return 1.0, float(eta_ab)
