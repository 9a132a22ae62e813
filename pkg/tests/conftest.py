import numpy as np
import pytest

from omtnav.env import Layout

# Small handcrafted rooms.  '#' wall, 'o' obstacle, '.' free; objects listed below the grid.
LAYOUTS = {
    "open5": """OMTENV1 5 5
#####
#...#
#...#
#...#
#####
category 0
obj 0 2 1 mid 1.0
""",
    "detour7": """OMTENV1 7 7
#######
#.....#
#.###.#
#.....#
#.....#
#.....#
#######
category 0
obj 0 3 1 mid 0.8
obj 1 1 5 low 0.5
""",
    "pillars7": """OMTENV1 7 7
#######
#.....#
#.o.o.#
#.....#
#.o.o.#
#.....#
#######
category 0
obj 2 3 3 mid 1.0
obj 0 5 5 mid 0.6
""",
    "shelf6": """OMTENV1 6 6
######
#....#
#....#
#....#
#....#
######
category 0
obj 1 4 1 high 0.7
obj 0 1 4 low 0.9
""",
    "corridor7x5": """OMTENV1 7 5
#######
#.....#
###o..#
#.....#
#######
category 0
obj 0 1 3 mid 1.0
""",
}


def layout_named(name: str) -> Layout:
    return Layout.loads(LAYOUTS[name])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
