import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from helmdd.assembly import AssemblyRecipe, WaveNumberField, assemble
from helmdd.mesh import BoundaryTag, build_p2_space, build_rect_mesh

settings.register_profile(
    "helmdd", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("helmdd")


def reduced(space, recipe=None, k=None):
    full = assemble(space, recipe or AssemblyRecipe(), k)
    return full[: space.n, : space.n].tocsr()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def robin_square():
    """6x6-cell unit square, absorbing on every side, k = 5."""
    mesh = build_rect_mesh((0, 1), (0, 1), 6, 6)
    space = build_p2_space(mesh)
    k = WaveNumberField.constant(5.0)
    return space, k, reduced(space, k=k)


@pytest.fixture
def mixed_square():
    """Dirichlet top, Neumann left, Robin elsewhere."""
    mesh = build_rect_mesh((0, 1), (0, 1), 5, 4, {"top": BoundaryTag.DIRICHLET, "left": BoundaryTag.NEUMANN})
    space = build_p2_space(mesh)
    k = WaveNumberField.constant(4.0)
    return space, k, reduced(space, k=k)


# ---------------------------------------------------------------- acceptance summary lines

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is None:
        return
    if report.failed or (report.when == "call"):
        title = (item.function.__doc__ or "").strip().splitlines()[0]
        prev = _criteria.get(number, (title, "PASS"))[1]
        _criteria[number] = (title, "FAIL" if report.failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2} {verdict}: {title}")
