import numpy as np
import pytest

from willmore_flow.geometry import derivative_fields
from willmore_flow.grid import ScalarField

_RESULTS = []


def record(number, title, passed, detail=""):
    """Remember one acceptance line; printed in the terminal summary."""
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    _RESULTS.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_RESULTS):
        terminalreporter.write_line(line)


def random_field(domain, rng, grad_max=None, modes=4):
    """Smooth random trigonometric field on every node (ghosts included).

    With ``grad_max`` the field is rescaled so that its largest closure
    gradient equals ``grad_max``.
    """
    k = np.arange(modes)
    decay = (1.0 + np.add.outer(k, k)) ** 2
    a = rng.normal(size=(modes, modes)) / decay
    b = rng.normal(size=(modes, modes)) / decay
    ph = rng.uniform(0, 2 * np.pi, size=(modes, modes))

    def f(X, Y):
        v = np.zeros_like(X)
        for m in range(modes):
            for n in range(modes):
                v += a[m, n] * np.cos(np.pi * (m * X + n * Y) + ph[m, n])
                v += b[m, n] * np.sin(np.pi * (m * X - n * Y) + ph[m, n])
        return v

    u = ScalarField.from_function(domain, f)
    if grad_max is not None:
        D = derivative_fields(u, 1)
        g = np.hypot(D[1, 0], D[0, 1])[domain.closure].max()
        u = u * (grad_max / g)
    return u


def geometric_times(t_end, per_octave, t_first):
    n = int(round(np.log2(t_end / t_first) * per_octave))
    return tuple(t_end * 2.0 ** (-np.arange(n + 1) / per_octave))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
