import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from landau_particles import ModelParams, ParticleEnsemble

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# per-criterion outcomes collected by the acceptance tests
ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=int):
        oks = results[key]
        verdict = "PASS" if all(oks) else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {key} ({sum(oks)}/{len(oks)} cases)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def params():
    return ModelParams(epsilon=1.0, gamma=0.0, dim=2)


def random_ensemble(rng, n, dim=2, scale=1.0, equal=True):
    pos = scale * rng.standard_normal((n, dim))
    if equal:
        return ParticleEnsemble.from_positions(pos)
    w = rng.dirichlet(np.ones(n))
    return ParticleEnsemble.from_positions(pos, w / w.sum())
