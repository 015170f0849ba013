import os

import pytest

from helpers import indexed_sig, load_program, parity_sig

PROGRAMS_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "programs")

ACCEPTED_PROGRAMS = [
    "unit.gl",
    "loopy.gl",
    "parity.gl",
    "parity_unguarded.gl",
    "parity_plain.gl",
    "parity_apply.gl",
    "parity_ctxanno.gl",
    "parity_twice.gl",
    "ctxanno_indexed.gl",
    "some_guard.gl",
    "some_expr.gl",
    "idxfn_merge.gl",
]

REJECTED_PROGRAMS = ["parity_badguard.gl", "some_bad.gl"]


def program_path(name: str) -> str:
    return os.path.join(PROGRAMS_DIR, name)


@pytest.fixture
def psig():
    return parity_sig()


@pytest.fixture
def isig():
    return indexed_sig()


@pytest.fixture
def parity_program():
    return load_program(program_path("parity.gl"))
