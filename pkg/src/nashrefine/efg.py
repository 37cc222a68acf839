"""Finite extensive-form zero-sum games with perfect recall.

Trees are stored as flat arrays in depth-first preorder (a parent always has a
smaller index than its children), which keeps every traversal a handful of
vectorized passes over depth levels. Players are numbered 0 and 1; terminal
payoffs are stored once, for player 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from nashrefine.errors import DimensionError, GameTooLargeError
from nashrefine.nfg import INTERIOR_FLOOR, MixedProfile, NormalFormGame

CHANCE = -1
TERMINAL = -2

DEFAULT_NFG_CAP = 10**7


# --- tree description used by the builders -------------------------------

class Chance(NamedTuple):
    outcomes: Sequence[tuple[float, object]]  # (probability, next history)


class Decision(NamedTuple):
    player: int
    infoset: str
    actions: Sequence[tuple[str, object]]  # (label, next history)


class Terminal(NamedTuple):
    payoff: float


Expander = Callable[[object], "Chance | Decision | Terminal"]


@dataclass(frozen=True, eq=False)
class ExtensiveFormGame:
    """Immutable game tree.

    ``player[n]`` is 0, 1, ``CHANCE`` or ``TERMINAL``. ``children[n, a]`` is -1
    past the node's action count. ``infoset[n]`` indexes ``infoset_keys``.
    """

    name: str
    player: np.ndarray
    children: np.ndarray
    chance_probs: np.ndarray
    infoset: np.ndarray
    payoff: np.ndarray
    infoset_keys: tuple[str, ...]
    infoset_player: np.ndarray
    infoset_actions: tuple[tuple[str, ...], ...]

    # derived in __post_init__
    num_children: np.ndarray = field(init=False, repr=False)
    parent: np.ndarray = field(init=False, repr=False)
    parent_action: np.ndarray = field(init=False, repr=False)
    depth: np.ndarray = field(init=False, repr=False)
    levels: tuple = field(init=False, repr=False)
    infoset_num_actions: np.ndarray = field(init=False, repr=False)
    action_mask: np.ndarray = field(init=False, repr=False)
    seq_offset: np.ndarray = field(init=False, repr=False)
    node_seq: tuple = field(init=False, repr=False)
    infoset_parent_seq: np.ndarray = field(init=False, repr=False)
    player_infosets: tuple = field(init=False, repr=False)
    infoset_index: dict = field(init=False, repr=False)
    terminals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        player = np.asarray(self.player, dtype=np.int64)
        children = np.asarray(self.children, dtype=np.int64)
        chance_probs = np.asarray(self.chance_probs, dtype=np.float64)
        infoset = np.asarray(self.infoset, dtype=np.int64)
        payoff = np.asarray(self.payoff, dtype=np.float64)
        infoset_player = np.asarray(self.infoset_player, dtype=np.int64)
        for k, v in (("player", player), ("children", children), ("chance_probs", chance_probs),
                     ("infoset", infoset), ("payoff", payoff), ("infoset_player", infoset_player)):
            v.setflags(write=False)
            s(k, v)
        N = player.shape[0]
        if N == 0:
            raise ValueError("empty game tree")
        num_children = (children >= 0).sum(axis=1)
        s("num_children", num_children)

        parent = np.full(N, -1, dtype=np.int64)
        parent_action = np.full(N, -1, dtype=np.int64)
        rows, cols = np.nonzero(children >= 0)
        kids = children[rows, cols]
        if np.any(kids <= rows):
            raise ValueError("nodes must be in preorder (children after parents)")
        parent[kids] = rows
        parent_action[kids] = cols
        if np.count_nonzero(parent < 0) != 1 or parent[0] != -1:
            raise ValueError("tree must have exactly one root at index 0")
        depth = np.zeros(N, dtype=np.int64)
        for n in range(1, N):
            depth[n] = depth[parent[n]] + 1
        levels = tuple(np.nonzero(depth == d)[0] for d in range(int(depth.max()) + 1))
        s("parent", parent)
        s("parent_action", parent_action)
        s("depth", depth)
        s("levels", levels)

        term = player == TERMINAL
        if np.any(num_children[term] != 0) or np.any(num_children[~term] == 0):
            raise ValueError("terminal nodes must be exactly the leaves")
        if not np.all(np.isfinite(payoff[term])):
            raise ValueError("terminal payoffs must be finite")
        chance_nodes = np.nonzero(player == CHANCE)[0]
        if chance_nodes.size:
            cp = chance_probs[chance_nodes]
            if np.any(cp < 0) or np.any(np.abs(cp.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError("chance outcome probabilities must sum to 1")
        s("terminals", np.nonzero(term)[0])

        n_inf = len(self.infoset_keys)
        decision = np.nonzero(player >= 0)[0]
        if np.any(infoset[decision] < 0) or np.any(infoset[decision] >= n_inf):
            raise ValueError("every decision node needs a valid infoset")
        if np.any(infoset_player[infoset[decision]] != player[decision]):
            raise ValueError("infoset owned by a different player than its node")
        n_actions = np.array([len(a) for a in self.infoset_actions], dtype=np.int64)
        if np.any(n_actions[infoset[decision]] != num_children[decision]):
            raise ValueError("nodes in one infoset must share the same action set")
        A = int(children.shape[1])
        mask = np.arange(A)[None, :] < n_actions[:, None]
        offset = np.concatenate([[0], np.cumsum(n_actions)])
        s("infoset_num_actions", n_actions)
        s("action_mask", mask)
        s("seq_offset", offset)
        s("infoset_index", {k: i for i, k in enumerate(self.infoset_keys)})

        # each player's own last (infoset, action) sequence at every node; -1 = empty
        node_seq = []
        inf_parent = np.full(n_inf, -2, dtype=np.int64)
        for p in (0, 1):
            seq = np.full(N, -1, dtype=np.int64)
            for lvl in levels[1:]:
                par = parent[lvl]
                mine = player[par] == p
                seq[lvl] = np.where(mine, offset[infoset[par].clip(0)] + parent_action[lvl], seq[par])
            seq.setflags(write=False)
            node_seq.append(seq)
            nodes = decision[player[decision] == p]
            for n in nodes:
                I = infoset[n]
                if inf_parent[I] == -2:
                    inf_parent[I] = seq[n]
                elif inf_parent[I] != seq[n]:
                    raise ValueError(
                        f"perfect recall violated at infoset {self.infoset_keys[I]!r}: "
                        "nodes have different own-action histories")
        s("node_seq", tuple(node_seq))
        s("infoset_parent_seq", inf_parent)
        first_node = np.full(n_inf, N, dtype=np.int64)
        np.minimum.at(first_node, infoset[decision], decision)
        order = np.argsort(first_node, kind="stable")
        s("player_infosets", tuple(
            np.array([I for I in order if infoset_player[I] == p and first_node[I] < N], dtype=np.int64)
            for p in (0, 1)))

    # --- construction -----------------------------------------------------

    @classmethod
    def from_expander(cls, name: str, root, expand: Expander) -> "ExtensiveFormGame":
        """Enumerate the full tree reachable from ``root`` under ``expand``."""
        player, kids, probs, infoset, payoff = [], [], [], [], []
        keys: dict[str, int] = {}
        key_player: list[int] = []
        key_actions: list[tuple[str, ...]] = []

        def visit(h) -> int:
            node = expand(h)
            idx = len(player)
            player.append(0)
            kids.append(())
            probs.append(())
            infoset.append(-1)
            payoff.append(0.0)
            if isinstance(node, Terminal):
                player[idx] = TERMINAL
                payoff[idx] = float(node.payoff)
            elif isinstance(node, Chance):
                player[idx] = CHANCE
                probs[idx] = tuple(float(p) for p, _ in node.outcomes)
                kids[idx] = tuple(visit(nxt) for _, nxt in node.outcomes)
            elif isinstance(node, Decision):
                labels = tuple(lbl for lbl, _ in node.actions)
                if node.infoset not in keys:
                    keys[node.infoset] = len(key_player)
                    key_player.append(node.player)
                    key_actions.append(labels)
                player[idx] = node.player
                infoset[idx] = keys[node.infoset]
                kids[idx] = tuple(visit(nxt) for _, nxt in node.actions)
            else:
                raise TypeError(f"unknown node description {node!r}")
            return idx

        visit(root)
        N = len(player)
        A = max(len(k) for k in kids)
        children = np.full((N, A), -1, dtype=np.int64)
        chance_probs = np.zeros((N, A))
        for n in range(N):
            children[n, :len(kids[n])] = kids[n]
            chance_probs[n, :len(probs[n])] = probs[n]
        return cls(
            name=name,
            player=np.array(player),
            children=children,
            chance_probs=chance_probs,
            infoset=np.array(infoset),
            payoff=np.array(payoff),
            infoset_keys=tuple(keys),
            infoset_player=np.array(key_player, dtype=np.int64),
            infoset_actions=tuple(key_actions),
        )

    # --- sizes ------------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return int(self.player.shape[0])

    @property
    def num_infosets(self) -> int:
        return len(self.infoset_keys)

    @property
    def max_actions(self) -> int:
        return int(self.children.shape[1])

    @property
    def max_depth(self) -> int:
        return len(self.levels) - 1

    def num_nonterminal(self) -> int:
        return int(np.count_nonzero(self.player != TERMINAL))

    def infoset_counts(self) -> tuple[int, int]:
        return len(self.player_infosets[0]), len(self.player_infosets[1])

    def num_pure_strategies(self, p: int) -> int:
        return math.prod(int(self.infoset_num_actions[I]) for I in self.player_infosets[p])

    # --- exact traversals ---------------------------------------------------

    def _edge_probs(self, probs: np.ndarray, include: Iterable[int]) -> np.ndarray:
        """Probability of the edge into each node, 1 for excluded movers."""
        include = set(include)
        par = self.parent.copy()
        par[0] = 0
        act = self.parent_action.clip(0)
        mover = self.player[par]
        edge = np.ones(self.num_nodes)
        if CHANCE in include:
            c = mover == CHANCE
            edge[c] = self.chance_probs[par[c], act[c]]
        for p in (0, 1):
            if p in include:
                d = mover == p
                edge[d] = probs[self.infoset[par[d]], act[d]]
        edge[0] = 1.0
        return edge

    def reach(self, probs: np.ndarray, include: Iterable[int] = (CHANCE, 0, 1)) -> np.ndarray:
        """Product of edge probabilities from the root for the movers in ``include``."""
        edge = self._edge_probs(probs, include)
        r = np.ones(self.num_nodes)
        for lvl in self.levels[1:]:
            r[lvl] = r[self.parent[lvl]] * edge[lvl]
        return r

    def node_values(self, probs: np.ndarray) -> np.ndarray:
        """Player 0's expected payoff from each node onward."""
        v = np.where(self.player == TERMINAL, self.payoff, 0.0)
        for lvl in reversed(self.levels):
            nodes = lvl[self.player[lvl] != TERMINAL]
            if nodes.size == 0:
                continue
            w = self._node_dists(nodes, probs)
            v[nodes] = np.sum(w * v[self.children[nodes]], axis=1)
        return v

    def _node_dists(self, nodes: np.ndarray, probs: np.ndarray) -> np.ndarray:
        is_chance = (self.player[nodes] == CHANCE)[:, None]
        return np.where(is_chance, self.chance_probs[nodes], probs[self.infoset[nodes].clip(0)])

    def uniform_probs(self) -> np.ndarray:
        return self.action_mask / self.infoset_num_actions[:, None]


# --- strategies -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BehavioralProfile:
    """Action distributions for every infoset of both players.

    ``probs`` is an ``(num_infosets, max_actions)`` array, zero past each
    infoset's legal actions.
    """

    game: ExtensiveFormGame
    probs: np.ndarray

    def __post_init__(self):
        g = self.game
        p = np.array(self.probs, dtype=np.float64)
        if p.shape != (g.num_infosets, g.max_actions):
            raise DimensionError(f"expected probs of shape {(g.num_infosets, g.max_actions)}, got {p.shape}")
        if np.any(p[~g.action_mask] != 0):
            raise ValueError("probability mass on illegal actions")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each infoset distribution must lie on the simplex")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, game: ExtensiveFormGame) -> "BehavioralProfile":
        return cls(game, game.uniform_probs())

    @classmethod
    def from_dict(cls, game: ExtensiveFormGame, policy: Mapping[str, Sequence[float]]) -> "BehavioralProfile":
        probs = np.zeros((game.num_infosets, game.max_actions))
        for I, key in enumerate(game.infoset_keys):
            if key not in policy:
                raise KeyError(f"profile is missing infoset {key!r}")
            dist = np.asarray(policy[key], dtype=np.float64)
            if dist.shape != (game.infoset_num_actions[I],):
                raise DimensionError(f"infoset {key!r} expects {game.infoset_num_actions[I]} actions")
            probs[I, :dist.size] = dist
        return cls(game, probs)

    @classmethod
    def combine(cls, first: "BehavioralProfile", second: "BehavioralProfile") -> "BehavioralProfile":
        """Player 0's strategy from ``first`` and player 1's from ``second``."""
        g = first.game
        rows1 = g.infoset_player == 1
        probs = first.probs.copy()
        probs[rows1] = second.probs[rows1]
        return cls(g, probs)

    def policy(self, player: int) -> dict[str, np.ndarray]:
        g = self.game
        return {g.infoset_keys[I]: self.probs[I, :g.infoset_num_actions[I]].copy()
                for I in g.player_infosets[player]}

    def is_interior(self, floor: float = INTERIOR_FLOOR) -> bool:
        return bool(np.all(self.probs[self.game.action_mask] >= floor * (1 - 1e-6)))


@dataclass(frozen=True)
class PureStrategy:
    """One action index per infoset of ``player``."""

    player: int
    actions: dict[str, int]

    def probs_into(self, game: ExtensiveFormGame, probs: np.ndarray) -> np.ndarray:
        probs = probs.copy()
        for key, a in self.actions.items():
            I = game.infoset_index[key]
            probs[I] = 0.0
            probs[I, a] = 1.0
        return probs


def _as_probs(game: ExtensiveFormGame, profile) -> np.ndarray:
    if isinstance(profile, BehavioralProfile):
        if profile.game is not game and profile.probs.shape != (game.num_infosets, game.max_actions):
            raise DimensionError("profile belongs to a different game")
        return profile.probs
    probs = np.asarray(profile, dtype=np.float64)
    if probs.shape != (game.num_infosets, game.max_actions):
        raise DimensionError(f"expected probs of shape {(game.num_infosets, game.max_actions)}")
    return probs


def expected_payoff(game: ExtensiveFormGame, profile) -> float:
    """Exact expectation of player 0's terminal payoff."""
    probs = _as_probs(game, profile)
    r = game.reach(probs)
    t = game.terminals
    return float(np.dot(r[t], game.payoff[t]))


def best_response(game: ExtensiveFormGame, opponent, responder: int) -> tuple[PureStrategy, float]:
    """Exact best response of ``responder`` to the other player's strategy.

    ``opponent`` may be a full profile; only the opponent's rows are read.
    Returns the pure strategy (ties go to the lowest action index) and the
    responder's expected payoff against the fixed opponent.
    """
    probs = _as_probs(game, opponent)
    other = 1 - responder
    sign = 1.0 if responder == 0 else -1.0
    opp_reach = game.reach(probs, include=(CHANCE, other))
    t = game.terminals
    n_seq = int(game.seq_offset[-1])
    # slot 0 holds the empty sequence
    util = np.bincount(game.node_seq[responder][t] + 1,
                       weights=sign * opp_reach[t] * game.payoff[t], minlength=n_seq + 1)
    choice: dict[str, int] = {}
    for I in game.player_infosets[responder][::-1]:
        lo = game.seq_offset[I] + 1
        vals = util[lo:lo + game.infoset_num_actions[I]]
        best = vals.max()
        a = int(np.flatnonzero(vals >= best - 1e-12 * max(1.0, abs(best)))[0])
        choice[game.infoset_keys[I]] = a
        util[game.infoset_parent_seq[I] + 1] += vals[a]
    return PureStrategy(responder, choice), float(util[0])


def exploitability(game: ExtensiveFormGame, profile) -> float:
    """Mean over both players of the best-response gain against ``profile``."""
    probs = _as_probs(game, profile)
    v0 = expected_payoff(game, probs)
    _, br0 = best_response(game, probs, 0)
    _, br1 = best_response(game, probs, 1)
    delta0 = br0 - v0
    delta1 = br1 + v0
    return 0.5 * (delta0 + delta1)


def exact_policy_gradient(game: ExtensiveFormGame, probs: np.ndarray) -> np.ndarray:
    """d E[player-0 payoff] / d probs[I, a], treating each row independently.

    Under perfect recall an infoset is crossed at most once per path, so the
    derivative is the reach-weighted value of taking ``a`` at each node of I.
    """
    v = game.node_values(probs)
    r = game.reach(probs)
    dec = np.nonzero(game.player >= 0)[0]
    kid_vals = np.where(game.children[dec] >= 0, v[game.children[dec]], 0.0)
    grad = np.zeros((game.num_infosets, game.max_actions))
    np.add.at(grad, game.infoset[dec], r[dec, None] * kid_vals)
    return grad


# --- normal-form reduction --------------------------------------------------

def _realization_plans(game: ExtensiveFormGame, p: int, choices: np.ndarray) -> np.ndarray:
    """Sequence-form plans (slot 0 = empty sequence) of pure strategies.

    ``choices`` has one row per pure strategy and one column per infoset in
    ``game.player_infosets[p]``.
    """
    infosets = game.player_infosets[p]
    n_seq = int(game.seq_offset[-1])
    plans = np.zeros((choices.shape[0], n_seq + 1))
    plans[:, 0] = 1.0
    for col, I in enumerate(infosets):
        base = plans[:, game.infoset_parent_seq[I] + 1]
        k = game.infoset_num_actions[I]
        lo = game.seq_offset[I] + 1
        plans[:, lo:lo + k] = base[:, None] * (choices[:, col, None] == np.arange(k))
    return plans


@dataclass(frozen=True, eq=False)
class NormalFormConversion:
    """Normal form of an extensive-form game plus the pure-strategy index maps.

    ``pure_strategies[p][s]`` lists the action chosen by pure strategy ``s`` at
    each infoset of ``game.player_infosets[p]`` (in that order).
    """

    efg: ExtensiveFormGame
    nfg: NormalFormGame
    pure_strategies: tuple[np.ndarray, np.ndarray]

    def pure_strategy(self, p: int, index: int) -> PureStrategy:
        g = self.efg
        acts = self.pure_strategies[p][index]
        return PureStrategy(p, {g.infoset_keys[I]: int(a) for I, a in zip(g.player_infosets[p], acts)})

    def profile_from_pure(self, i: int, j: int) -> BehavioralProfile:
        probs = self.efg.uniform_probs()
        probs = self.pure_strategy(0, i).probs_into(self.efg, probs)
        probs = self.pure_strategy(1, j).probs_into(self.efg, probs)
        return BehavioralProfile(self.efg, probs)

    def mixed_from_behavioral(self, profile) -> MixedProfile:
        """Realization-equivalent mixed profile: product of behavioral probabilities."""
        probs = _as_probs(self.efg, profile)
        out = []
        for p in (0, 1):
            infosets = self.efg.player_infosets[p]
            S = self.pure_strategies[p]
            w = np.ones(S.shape[0])
            for col, I in enumerate(infosets):
                w = w * probs[I, S[:, col]]
            out.append(w / w.sum())
        return MixedProfile(*out)

    def behavioral_from_mixed(self, z: MixedProfile) -> BehavioralProfile:
        """Behavioral strategy induced by a mixed profile (uniform where unreached)."""
        g = self.efg
        probs = g.uniform_probs()
        for p, weights in ((0, z.x), (1, z.y)):
            plan = weights @ _realization_plans(g, p, self.pure_strategies[p])
            for I in g.player_infosets[p]:
                k = g.infoset_num_actions[I]
                lo = g.seq_offset[I] + 1
                mass = plan[g.infoset_parent_seq[I] + 1]
                if mass > 0:
                    probs[I, :k] = plan[lo:lo + k] / plan[lo:lo + k].sum()
        return BehavioralProfile(g, probs)


def efg_to_nfg(game: ExtensiveFormGame, cap: int = DEFAULT_NFG_CAP) -> NormalFormConversion:
    """Exact normal form: ``A[i, j]`` is the chance-expected payoff of pure plans i, j."""
    n0, n1 = game.num_pure_strategies(0), game.num_pure_strategies(1)
    if n0 * n1 > cap:
        raise GameTooLargeError(
            f"{game.name}: normal form would have {float(n0):.3g} x {float(n1):.3g} entries, above the cap of {cap:.3g}")
    strategies = []
    for p in (0, 1):
        ranges = [range(int(game.infoset_num_actions[I])) for I in game.player_infosets[p]]
        S = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, len(ranges))
        strategies.append(S)
    t = game.terminals
    chance_reach = game.reach(game.uniform_probs(), include=(CHANCE,))
    weight = chance_reach[t] * game.payoff[t]
    consistent = [_realization_plans(game, p, strategies[p])[:, game.node_seq[p][t] + 1] for p in (0, 1)]
    A = (consistent[0] * weight) @ consistent[1].T
    return NormalFormConversion(game, NormalFormGame(A, name=f"{game.name}-nf"), tuple(strategies))
