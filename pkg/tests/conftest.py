import numpy as np
import pytest
from hypothesis import settings

from panoproj.synth import SceneSpec, generate

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scene():
    """Low-resolution synthetic room: (equirect image, ground-truth content)."""
    return generate(SceneSpec(width=256, height=128))


@pytest.fixture(scope="session")
def scene_content(scene):
    return scene[1]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
