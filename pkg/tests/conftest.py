"""Shared fixtures and the acceptance summary hook."""
import pytest

from kerrnet import flatten, parse_netlist, reduce_circuit
from kerrnet.stdcells import CellSpec, build_cell

ACCEPTANCE_RESULTS: dict[int, str] = {}

AMP_STAGE0 = """\
netlist amp0
comp bc source value=95
comp bs beamsplitter theta=0.3217505543966422 in=bc.0,input:signal
comp res resonator delta=50 chi=-0.5 kappa=25,25 in=bs.1
comp ps phaseshifter phi=-3.42 in=res.1
output q from ps.0
drop bs.0
drop res.0
"""


@pytest.fixture(scope="session")
def cell_systems():
    """Reduced systems of the standard cells at E_high = 50, built once."""
    cache = {}

    def get(kind, e_high=50.0, **kw):
        key = (kind, e_high, tuple(sorted(kw.items())))
        if key not in cache:
            spec = CellSpec(kind, e_high=e_high, **kw)
            cache[key] = reduce_circuit(flatten(build_cell(spec)))
        return cache[key]

    return get


@pytest.fixture
def amp_stage0():
    return parse_netlist(AMP_STAGE0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
