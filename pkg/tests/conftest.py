"""Shared fixtures: assembled fields are cached on disk between test sessions."""
import os
import warnings
from pathlib import Path

import pytest

from levikernel import (SpaceTimeGrid, build_field, constant_kernel, kappa_from_matrix,
                        reference_kernel, tanh_matrix_field)

ORACLES = Path(__file__).parent / "oracles"


@pytest.fixture(scope="session")
def field_cache(request):
    env = os.environ.get("LEVIKERNEL_TEST_CACHE")
    if env:
        Path(env).mkdir(parents=True, exist_ok=True)
        return env
    return str(request.config.cache.mkdir("levikernel-fields"))


def _build(k, grid, cache):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_field(k, grid, cache_dir=cache)


@pytest.fixture(scope="session")
def grid():
    return SpaceTimeGrid()


@pytest.fixture(scope="session")
def cauchy_kernel():
    return constant_kernel(1.0, 1.0)


@pytest.fixture(scope="session")
def cauchy_field(cauchy_kernel, grid, field_cache):
    return _build(cauchy_kernel, grid, field_cache)[0]


@pytest.fixture(scope="session")
def cauchy_coarse(cauchy_kernel, grid, field_cache):
    return _build(cauchy_kernel, grid.coarsened(), field_cache)[0]


@pytest.fixture(scope="session")
def ref_kernel():
    return reference_kernel()


@pytest.fixture(scope="session")
def ref_build(ref_kernel, grid, field_cache):
    return _build(ref_kernel, grid, field_cache)


@pytest.fixture(scope="session")
def ref_field(ref_build):
    return ref_build[0]


@pytest.fixture(scope="session")
def ref_coarse(ref_kernel, grid, field_cache):
    return _build(ref_kernel, grid.coarsened(), field_cache)[0]


@pytest.fixture(scope="session")
def tanh_matrix():
    return tanh_matrix_field(0.3)


@pytest.fixture(scope="session")
def tanh_kernel(tanh_matrix):
    return kappa_from_matrix(tanh_matrix, 1.0)


@pytest.fixture(scope="session")
def tanh_field(tanh_kernel, grid, field_cache):
    return _build(tanh_kernel, grid, field_cache)[0]


@pytest.fixture(scope="session")
def ref_ctx(ref_field, ref_kernel):
    from levikernel.validator import FieldContext
    return FieldContext(ref_field, ref_kernel)


@pytest.fixture(scope="session")
def cauchy_ctx(cauchy_field, cauchy_kernel):
    from levikernel.validator import FieldContext
    return FieldContext(cauchy_field, cauchy_kernel)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
