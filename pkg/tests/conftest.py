"""Shared fixtures and stub randomness sources.

Models are session-scoped: every fresh ModelSpec carries its own compiled
coefficient closures and forces a re-specialization of the batch kernels, so
tests share instances wherever the model parameters agree.
"""

import numpy as np
import pytest

from jumpmc.models import (
    build_model_affine,
    build_model_const1d,
    build_model_trig,
    payoff_call,
    payoff_indicator,
)


@pytest.fixture(scope="session")
def trig_model():
    return build_model_trig()


@pytest.fixture(scope="session")
def trig_const_lam():
    """Trig model with constant intensity and zero-size jumps (phantom jumps)."""
    return build_model_trig(lam=(0.3, 0.0, 0.2, 0.2), v_jump=0.0)


@pytest.fixture(scope="session")
def trig_const_coeff():
    """Constant coefficients and intensity: every weight term vanishes."""
    return build_model_trig(mu2=0.0, sigma2=0.0, lam=(0.3, 0.0, 0.2, 0.2), v_jump=0.0)


@pytest.fixture(scope="session")
def affine_model():
    return build_model_affine()


@pytest.fixture(scope="session")
def const_model():
    return build_model_const1d()


@pytest.fixture(scope="session")
def f_indicator():
    return payoff_indicator(1.8)


@pytest.fixture(scope="session")
def f_call():
    return payoff_call(1.8)


@pytest.fixture
def x0_2d():
    return np.array([1.0, 1.0])


_acceptance_lines = []


def record_acceptance(line: str) -> None:
    """Collect one pass/fail line per acceptance criterion for the summary."""
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)


class ScriptedRng:
    """Randomness stub replaying fixed sequences of draws.

    Uniform draws come from ``uniforms`` (then ``u_default``), normal draws
    from ``normals`` (then ``z_default``).
    """

    def __init__(self, uniforms=(), normals=(), u_default=0.5, z_default=0.0):
        self._u = list(uniforms)
        self._z = list(normals)
        self.u_default = u_default
        self.z_default = z_default

    def random(self):
        return self._u.pop(0) if self._u else self.u_default

    def standard_normal(self):
        return self._z.pop(0) if self._z else self.z_default
