import pathlib

import pytest

from sesmon import parser as ps

PROCS = pathlib.Path(__file__).resolve().parents[1] / "src" / "sesmon" / "procs"

CORPUS = sorted(p.stem for p in PROCS.glob("*.proc"))


def load(name: str) -> ps.Program:
    return ps.parse_program((PROCS / f"{name}.proc").read_text())


@pytest.fixture
def load_program():
    return load
