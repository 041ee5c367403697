import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from simfas.channel import (
    ChannelStats,
    FasConfig,
    bdma_partition,
    build_sigma,
    link_distance,
    los_vector,
    path_loss,
)
from simfas.sim_stack import SimGeometry, build_coupling

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (criterion, passed, detail) collected by the acceptance module
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def make_system(num_layers=3, atoms=16, num_ports=50, wavelength=0.1, rician_k=2.0, mu_sq=0.97):
    geo = SimGeometry(num_layers, atoms, wavelength)
    coupling = build_coupling(geo)
    fas = FasConfig(num_ports, 5.0)
    part = bdma_partition(build_sigma(fas), mu_sq)
    stats = ChannelStats(path_loss(link_distance(10.0, 60.0)), los_vector(geo, 10.0, 60.0),
                         fas, part, rician_k)
    return geo, coupling, stats, part


@pytest.fixture(scope="session")
def baseline():
    """(geometry, coupling, stats, partition) at L=3, M=16, N=50."""
    return make_system()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
