"""Iteratively refined regularization for two-player zero-sum games.

Exact tabular solvers (magnetic mirror descent, the regularized-VI operator
and its iterated refinement), a sampled policy-gradient trainer for
extensive-form games, exact exploitability, and an Elo/Swiss tournament.
"""

from nashrefine.errors import ConfigError, DimensionError, DomainError, GameTooLargeError
from nashrefine.nfg import (
    BregmanGeometry,
    MixedProfile,
    NormalFormGame,
    bregman_divergence,
    check_mmd_condition,
    operator_F,
    operator_G,
    payoff,
)
from nashrefine.efg import (
    BehavioralProfile,
    ExtensiveFormGame,
    best_response,
    efg_to_nfg,
    expected_payoff,
    exploitability,
)
from nashrefine.games import build_kuhn, build_leduc, load_game

__version__ = "0.1.0"

__all__ = [
    "BehavioralProfile",
    "BregmanGeometry",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "ExtensiveFormGame",
    "GameTooLargeError",
    "MixedProfile",
    "NormalFormGame",
    "best_response",
    "bregman_divergence",
    "build_kuhn",
    "build_leduc",
    "check_mmd_condition",
    "efg_to_nfg",
    "expected_payoff",
    "exploitability",
    "load_game",
    "operator_F",
    "operator_G",
    "payoff",
]
