import numpy as np
import pytest

from macimmse import MacSystem, bpsk, cartesian_power


def random_system(seed, n_r=2, n_t=2, snr=1.0, c=None):
    """Random complex channels and precoders with unit-order entries."""
    rng = np.random.default_rng(seed)

    def cm(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    c = c if c is not None else cartesian_power(bpsk(), n_t)
    return MacSystem(cm((n_r, n_t)), cm((n_r, n_t)), cm((n_t, n_t)), cm((n_t, n_t)), snr, c, c)


@pytest.fixture
def system_2x2():
    return random_system(11)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
