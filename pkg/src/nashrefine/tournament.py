"""Elo ratings and a Swiss-style tournament between policy checkpoints."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from nashrefine.efg import BehavioralProfile, ExtensiveFormGame
from nashrefine.errors import ConfigError
from nashrefine.nashpg import SoftmaxPolicy, sample_trajectories

INITIAL_RATING = 1500.0


@dataclass
class EloEntry:
    id: str
    rating: float = INITIAL_RATING


@dataclass(frozen=True)
class TournamentConfig:
    rounds: int = 100
    games_per_match: int = 100
    k_factor: float = 32.0
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.games_per_match < 1 or not self.k_factor > 0:
            raise ConfigError("rounds, games_per_match and k_factor must be positive")


def expected_score(rating_a: float, rating_b: float) -> float:
    return 1.0 / (1.0 + 10.0 ** ((rating_b - rating_a) / 400.0))


def elo_update(entry_a: EloEntry, entry_b: EloEntry, outcome: float, k: float = 32.0) -> tuple[EloEntry, EloEntry]:
    """Return updated copies of both entries after A scores ``outcome``."""
    if outcome not in (0, 0.5, 1):
        raise ValueError(f"outcome must be 0, 0.5 or 1, got {outcome!r}")
    e_a = expected_score(entry_a.rating, entry_b.rating)
    delta = k * (outcome - e_a)
    # B's change K*((1 - R_A) - (1 - E_A)) is exactly -delta
    return EloEntry(entry_a.id, entry_a.rating + delta), EloEntry(entry_b.id, entry_b.rating - delta)


def _probs(game: ExtensiveFormGame, policy) -> np.ndarray:
    if isinstance(policy, SoftmaxPolicy):
        return policy.probs()
    if isinstance(policy, BehavioralProfile):
        return policy.probs
    return np.asarray(policy, dtype=np.float64)


def match_rewards(game: ExtensiveFormGame, policy_a, policy_b, games: int, seed) -> np.ndarray:
    """A's reward in each game; seats alternate and each pair shares chance draws.

    Game ``2k`` seats A first and game ``2k + 1`` seats B first, both replaying
    the same random numbers, so identical policies cancel pair by pair.
    """
    pa, pb = _probs(game, policy_a), _probs(game, policy_b)
    first = game.infoset_player == 0
    a_first = np.where(first[:, None], pa, pb)
    b_first = np.where(first[:, None], pb, pa)
    pairs, extra = divmod(games, 2)
    rng = np.random.default_rng(seed)
    pair_seed, extra_seed = rng.integers(0, 2**63 - 1, size=2)
    rewards = []
    if pairs:
        r1 = sample_trajectories(game, a_first, pairs, int(pair_seed)).payoffs
        r2 = -sample_trajectories(game, b_first, pairs, int(pair_seed)).payoffs
        rewards.append(np.column_stack([r1, r2]).ravel())
    if extra:
        rewards.append(sample_trajectories(game, a_first, 1, int(extra_seed)).payoffs)
    return np.concatenate(rewards) if rewards else np.zeros(0)


def play_match(game: ExtensiveFormGame, policy_a, policy_b, games_per_match: int = 100, seed=0) -> float:
    """1, 0 or 0.5 by the sign of A's cumulative reward."""
    r = match_rewards(game, policy_a, policy_b, games_per_match, seed)
    pairs = r[: r.size - r.size % 2].reshape(-1, 2).sum(axis=1)
    total = pairs.sum() + (r[-1] if r.size % 2 else 0.0)
    if total > 0:
        return 1.0
    if total < 0:
        return 0.0
    return 0.5


@dataclass
class TournamentResult:
    entries: list[EloEntry]
    history: list[dict] = field(default_factory=list)

    def standings(self) -> list[EloEntry]:
        return sorted(self.entries, key=lambda e: (-e.rating, e.id))

    def ratings(self) -> dict[str, float]:
        return {e.id: e.rating for e in self.entries}

    def write_csv(self, history_path, standings_path) -> None:
        with Path(history_path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["round", "id_a", "id_b", "R_A", "rating_a_after", "rating_b_after"])
            w.writeheader()
            w.writerows(self.history)
        with Path(standings_path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "id", "rating"])
            for rank, e in enumerate(self.standings(), 1):
                w.writerow([rank, e.id, e.rating])


def swiss_pairings(entries: Sequence[EloEntry]) -> tuple[list[tuple[int, int]], int | None]:
    """Adjacent pairs after sorting by rating (ties by id); returns (pairs, bye index)."""
    order = sorted(range(len(entries)), key=lambda i: (-entries[i].rating, entries[i].id))
    pairs = [(order[i], order[i + 1]) for i in range(0, len(order) - 1, 2)]
    bye = order[-1] if len(order) % 2 else None
    return pairs, bye


def swiss_tournament(game: ExtensiveFormGame, checkpoints: dict, cfg: TournamentConfig) -> TournamentResult:
    """Nearest-neighbour Swiss rounds; ratings update together at the end of each round."""
    if len(checkpoints) < 2:
        raise ConfigError("a tournament needs at least two entries")
    ids = list(checkpoints)
    policies = [_probs(game, checkpoints[i]) for i in ids]
    entries = [EloEntry(i) for i in ids]
    result = TournamentResult(entries)
    rng = np.random.default_rng(cfg.seed)
    for rnd in range(1, cfg.rounds + 1):
        pairs, _ = swiss_pairings(entries)
        seeds = rng.integers(0, 2**63 - 1, size=len(pairs))
        updated = list(entries)
        played = []
        for (a, b), s in zip(pairs, seeds):
            outcome = play_match(game, policies[a], policies[b], cfg.games_per_match, int(s))
            new_a, new_b = elo_update(entries[a], entries[b], outcome, cfg.k_factor)
            updated[a], updated[b] = new_a, new_b
            played.append((a, b, outcome))
        entries[:] = updated
        for a, b, outcome in played:
            result.history.append({"round": rnd, "id_a": ids[a], "id_b": ids[b], "R_A": outcome,
                                   "rating_a_after": entries[a].rating, "rating_b_after": entries[b].rating})
    return result
