"""Concrete games and the name registry used by the command line.

Kuhn payoffs are raw chip deltas; Leduc payoffs are chip deltas divided by 20.
Leduc uses ante 1, raise sizes 2 and 4, and at most two raises per round.
Leduc infosets are keyed by card rank only, since suits never affect play.
"""

from __future__ import annotations

import functools
from pathlib import Path

import numpy as np

from nashrefine.efg import Chance, Decision, ExtensiveFormGame, Terminal
from nashrefine.errors import ConfigError
from nashrefine.nfg import NormalFormGame

RANKS = "JQK"

MATCHING_PENNIES = np.array([[1.0, -1.0], [-1.0, 1.0]])
ROCK_PAPER_SCISSORS = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


# --- Kuhn -----------------------------------------------------------------

_KUHN_TERMINAL = {"pp", "bp", "bb", "pbp", "pbb"}


def _kuhn_expand(h):
    cards, bets = h
    if cards is None:
        deals = [(a, b) for a in range(3) for b in range(3) if a != b]
        return Chance([(1.0 / 6.0, (d, "")) for d in deals])
    if bets in _KUHN_TERMINAL:
        if bets == "bp":
            return Terminal(1.0)
        if bets == "pbp":
            return Terminal(-1.0)
        stake = 2.0 if bets.endswith("bb") else 1.0
        return Terminal(stake if cards[0] > cards[1] else -stake)
    p = len(bets) % 2
    key = RANKS[cards[p]] + bets
    return Decision(p, key, [("p", (cards, bets + "p")), ("b", (cards, bets + "b"))])


@functools.lru_cache(maxsize=None)
def build_kuhn() -> ExtensiveFormGame:
    """Three-card Kuhn poker; actions are pass (0) and bet (1)."""
    return ExtensiveFormGame.from_expander("kuhn", (None, ""), _kuhn_expand)


# --- Leduc ------------------------------------------------------------------

LEDUC_ANTE = 1
LEDUC_RAISES = (2, 4)
LEDUC_MAX_RAISES = 2
LEDUC_SCALE = 20.0


def _round_over(seq: str) -> bool:
    return seq == "cc" or (len(seq) >= 2 and seq[-1] == "c" and "r" in seq)


def _leduc_expand(h):
    # h = (private cards, public card, round-1 actions, round-2 actions, contributions)
    private, public, r1, r2, contrib = h
    if len(private) < 2:
        used = set(private)
        left = [c for c in range(6) if c not in used]
        return Chance([(1.0 / len(left), (private + (c,), public, r1, r2, contrib)) for c in left])
    rnd = 0 if not _round_over(r1) else 1
    seq = r1 if rnd == 0 else r2
    if seq.endswith("f"):
        folder = (len(seq) - 1) % 2
        won = contrib[1] if folder == 1 else -contrib[0]
        return Terminal(won / LEDUC_SCALE)
    if rnd == 1 and public is None:
        left = [c for c in range(6) if c not in private]
        return Chance([(1.0 / len(left), (private, c, r1, r2, contrib)) for c in left])
    if rnd == 1 and _round_over(r2):
        return Terminal(_showdown(private, public) * contrib[0] / LEDUC_SCALE)

    p = len(seq) % 2
    raises = seq.count("r")
    facing = contrib[1 - p] > contrib[p]
    pub = "" if public is None else RANKS[public % 3]
    key = f"{RANKS[private[p] % 3]}{pub}:{r1}" + (f"/{r2}" if rnd == 1 else "")

    def after(action, new_contrib):
        if rnd == 0:
            return (private, public, r1 + action, r2, new_contrib)
        return (private, public, r1, r2 + action, new_contrib)

    actions = []
    if facing:
        actions.append(("f", after("f", contrib)))
    called = list(contrib)
    called[p] = contrib[1 - p]
    actions.append(("c", after("c", tuple(called))))
    if raises < LEDUC_MAX_RAISES:
        raised = list(contrib)
        raised[p] = contrib[1 - p] + LEDUC_RAISES[rnd]
        actions.append(("r", after("r", tuple(raised))))
    return Decision(p, key, actions)


def _showdown(private, public) -> int:
    r0, r1, rp = private[0] % 3, private[1] % 3, public % 3
    if r0 == rp and r1 != rp:
        return 1
    if r1 == rp and r0 != rp:
        return -1
    return int(np.sign(r0 - r1))


@functools.lru_cache(maxsize=None)
def build_leduc() -> ExtensiveFormGame:
    """Two-round Leduc hold'em with a six-card deck."""
    root = ((), None, "", "", (LEDUC_ANTE, LEDUC_ANTE))
    return ExtensiveFormGame.from_expander("leduc", root, _leduc_expand)


# --- matrix games as one-shot trees ------------------------------------------

def efg_from_matrix(game: NormalFormGame) -> ExtensiveFormGame:
    """Simultaneous one-shot play: player 1 cannot see player 0's choice."""
    A = game.payoff_matrix

    def expand(h):
        if len(h) == 0:
            return Decision(0, "row", [(f"r{i}", (i,)) for i in range(game.m)])
        if len(h) == 1:
            return Decision(1, "col", [(f"c{j}", h + (j,)) for j in range(game.n)])
        return Terminal(float(A[h[0], h[1]]))

    return ExtensiveFormGame.from_expander(game.name, (), expand)


# --- registry ---------------------------------------------------------------

BUILTIN_MATRICES = {
    "matching_pennies": MATCHING_PENNIES,
    "rps": ROCK_PAPER_SCISSORS,
}

EXTENSIVE_GAMES = {
    "kuhn": build_kuhn,
    "leduc": build_leduc,
}


def load_game(name: str) -> NormalFormGame | ExtensiveFormGame:
    """Resolve ``kuhn``, ``leduc``, ``matching_pennies``, ``rps`` or ``matrix:<path>``."""
    if name in EXTENSIVE_GAMES:
        return EXTENSIVE_GAMES[name]()
    if name in BUILTIN_MATRICES:
        return NormalFormGame(BUILTIN_MATRICES[name], name=name)
    if name.startswith("matrix:"):
        target = name[len("matrix:"):]
        path = Path(target)
        if path.exists():
            return NormalFormGame.load(path)
        if Path(target).stem in BUILTIN_MATRICES and not path.parent.parts:
            stem = Path(target).stem
            return NormalFormGame(BUILTIN_MATRICES[stem], name=stem)
        raise ConfigError(f"matrix file not found: {target}")
    raise ConfigError(f"unknown game {name!r}")


def load_extensive(name: str) -> ExtensiveFormGame:
    game = load_game(name)
    if isinstance(game, NormalFormGame):
        return efg_from_matrix(game)
    return game
