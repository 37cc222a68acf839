import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nashrefine.games import MATCHING_PENNIES, ROCK_PAPER_SCISSORS, build_kuhn
from nashrefine.nfg import MixedProfile, NormalFormGame, project_interior

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_profile(rng: np.random.Generator, m: int, n: int, concentration: float = 1.0) -> MixedProfile:
    return MixedProfile(project_interior(rng.dirichlet(np.full(m, concentration))),
                        project_interior(rng.dirichlet(np.full(n, concentration))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pennies():
    return NormalFormGame(MATCHING_PENNIES, name="matching_pennies")


@pytest.fixture
def rps():
    return NormalFormGame(ROCK_PAPER_SCISSORS, name="rps")


@pytest.fixture(scope="session")
def kuhn():
    return build_kuhn()


@pytest.fixture(scope="session")
def kuhn_nfg(kuhn):
    from nashrefine.efg import efg_to_nfg

    return efg_to_nfg(kuhn)


def lp_solve(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Maximin strategies of both players by linear programming (test oracle)."""
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape

    def maximin(M):
        k, l = M.shape
        # variables (p_1..p_k, v): maximize v s.t. (M^T p)_j >= v
        c = np.zeros(k + 1)
        c[-1] = -1.0
        A_ub = np.hstack([-M.T, np.ones((l, 1))])
        A_eq = np.hstack([np.ones((1, k)), np.zeros((1, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(l), A_eq=A_eq, b_eq=[1.0],
                      bounds=[(0, None)] * k + [(None, None)], method="highs")
        assert res.status == 0
        p = np.maximum(res.x[:k], 0.0)
        return p / p.sum(), res.x[-1]

    x, v = maximin(A)
    y, _ = maximin(-A.T)
    return x, y, v


@pytest.fixture(scope="session")
def kuhn_lp(kuhn_nfg):
    return lp_solve(kuhn_nfg.nfg.A)
