import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fracrb.fem1d import build_mesh  # noqa: E402
from fracrb.fom_solver import ProblemSpec, build_operators  # noqa: E402
from fracrb.problems import BUILTINS  # noqa: E402


def make_spec(problem="example1", K=8, n_el=16, alpha=None, gamma=None, T=1.0, mu_domain=(0.5, 1.5)):
    builtin = BUILTINS.get(problem)
    return ProblemSpec(
        alpha=alpha if alpha is not None else builtin.alpha,
        gamma=gamma if gamma is not None else builtin.gamma,
        T=T,
        K=K,
        mesh=build_mesh(0.0, 1.0, n_el),
        mu_domain=mu_domain,
        problem=problem,
    )


@pytest.fixture(scope="session")
def small_ex1():
    spec = make_spec("example1", K=8, n_el=16)
    return spec, build_operators(spec)
