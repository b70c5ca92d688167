import pytest

from patcharray import paper_geometry_path
from patcharray.io import read_geometry
from patcharray.microstrip import MicrostripLine, Substrate, design_patch
from patcharray.network import ArrayLayout


@pytest.fixture
def paper_substrate():
    return Substrate(eps_r=3.0, tan_delta=0.0013, height=1.574e-3)


@pytest.fixture
def paper_patch(paper_substrate):
    return design_patch(28e9, paper_substrate)


@pytest.fixture
def paper_layout(paper_substrate, paper_patch):
    return ArrayLayout.uniform(
        paper_substrate,
        MicrostripLine(0.5e-3, 1.5e-3),
        paper_patch,
        6,
        MicrostripLine(0.5e-3, 1.9e-3),
    )


@pytest.fixture
def paper_geom():
    return read_geometry(paper_geometry_path())


@pytest.fixture
def lossless_substrate():
    return Substrate(eps_r=3.0, tan_delta=0.0, height=1.574e-3, metal_conductivity=1e300)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the test still asserts on its own."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
