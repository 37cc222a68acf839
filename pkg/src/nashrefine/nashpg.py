"""Sampled self-play with tabular softmax policies.

``train_nashpg`` runs regularized REINFORCE against a KL magnet that is reset
to the current policy every ``inner_iters`` updates; ``train_anneal`` keeps the
magnet at uniform and decays its strength instead.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Optional

import numpy as np

from nashrefine.efg import CHANCE, TERMINAL, BehavioralProfile, ExtensiveFormGame, exact_policy_gradient, exploitability
from nashrefine.errors import ConfigError
from nashrefine.solvers import AnnealSchedule, RunRecord, linear_schedule


class SoftmaxPolicy:
    """Logits for every infoset of both players; illegal slots are masked out."""

    def __init__(self, game: ExtensiveFormGame, logits: np.ndarray | None = None):
        self.game = game
        if logits is None:
            logits = np.zeros((game.num_infosets, game.max_actions))
        logits = np.array(logits, dtype=np.float64)
        if logits.shape != (game.num_infosets, game.max_actions):
            raise ValueError(f"logits must have shape {(game.num_infosets, game.max_actions)}")
        logits[~game.action_mask] = 0.0
        self.logits = logits

    def probs(self) -> np.ndarray:
        z = np.where(self.game.action_mask, self.logits, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def log_probs(self) -> np.ndarray:
        z = np.where(self.game.action_mask, self.logits, -np.inf)
        m = z.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
        return np.where(self.game.action_mask, z - lse, 0.0)

    def profile(self) -> BehavioralProfile:
        return BehavioralProfile(self.game, self.probs())

    def copy(self) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.game, self.logits.copy())

    def save(self, path) -> Path:
        """Write ``[player p]`` sections of ``infoset_id action_index logit`` lines."""
        g = self.game
        lines = []
        for p in (0, 1):
            lines.append(f"[player {p}]")
            for I in g.player_infosets[p]:
                for a in range(g.infoset_num_actions[I]):
                    lines.append(f"{g.infoset_keys[I]} {a} {float(self.logits[I, a])!r}")
        path = Path(path)
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, game: ExtensiveFormGame, path) -> "SoftmaxPolicy":
        logits = np.zeros((game.num_infosets, game.max_actions))
        seen = np.zeros_like(game.action_mask)
        player = None
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[player"):
                player = int(line.strip("[]").split()[1])
                continue
            parts = line.split()
            if player is None or len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: malformed checkpoint line")
            key, a, v = parts[0], int(parts[1]), float(parts[2])
            I = game.infoset_index.get(key)
            if I is None or game.infoset_player[I] != player or not 0 <= a < game.infoset_num_actions[I]:
                raise ValueError(f"{path}:{lineno}: unknown infoset/action {key} {a}")
            logits[I, a] = v
            seen[I, a] = True
        if np.any(game.action_mask & ~seen):
            raise ValueError(f"{path}: checkpoint does not cover every infoset")
        return cls(game, logits)


class Step(NamedTuple):
    player: int
    infoset: str
    action: int
    log_prob: float


class Trajectory(NamedTuple):
    steps: tuple[Step, ...]
    payoff: float  # to player 0


@dataclass(frozen=True)
class TrajectoryBatch:
    """Columnar storage of sampled episodes.

    Step arrays are aligned: step ``k`` belongs to episode ``step_traj[k]``.
    """

    game: ExtensiveFormGame
    payoffs: np.ndarray
    step_traj: np.ndarray
    step_player: np.ndarray
    step_infoset: np.ndarray
    step_action: np.ndarray
    step_logprob: np.ndarray

    def __len__(self) -> int:
        return int(self.payoffs.shape[0])

    def __iter__(self) -> Iterator[Trajectory]:
        order = np.argsort(self.step_traj, kind="stable")
        bounds = np.searchsorted(self.step_traj[order], np.arange(len(self) + 1))
        keys = self.game.infoset_keys
        for i in range(len(self)):
            idx = order[bounds[i]:bounds[i + 1]]
            steps = tuple(Step(int(self.step_player[k]), keys[self.step_infoset[k]],
                               int(self.step_action[k]), float(self.step_logprob[k])) for k in idx)
            yield Trajectory(steps, float(self.payoffs[i]))

    def returns(self, player: int) -> np.ndarray:
        return self.payoffs if player == 0 else -self.payoffs

    def visit_counts(self, player: int) -> np.ndarray:
        mine = self.step_player == player
        return np.bincount(self.step_infoset[mine], minlength=self.game.num_infosets)


def sample_trajectories(game: ExtensiveFormGame, policy, n: int, seed=None) -> TrajectoryBatch:
    """Roll out ``n`` independent episodes under chance and ``policy``.

    ``policy`` is a SoftmaxPolicy, BehavioralProfile or probability array. Each
    episode consumes one uniform draw per depth level, so two calls with the
    same seed share random numbers episode by episode.
    """
    if isinstance(policy, SoftmaxPolicy):
        probs = policy.probs()
    elif isinstance(policy, BehavioralProfile):
        probs = policy.probs
    else:
        probs = np.asarray(policy, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    U = rng.random((n, game.max_depth + 1))
    is_chance_node = (game.player == CHANCE)[:, None]
    node_cdf = np.cumsum(np.where(is_chance_node, game.chance_probs, probs[game.infoset.clip(0)]), axis=1)
    logp = np.log(np.where(probs > 0, probs, 1.0))

    cur = np.zeros(n, dtype=np.int64)
    tr, pl, inf, act, lp = [], [], [], [], []
    for d in range(game.max_depth + 1):
        live = np.nonzero(game.player[cur] != TERMINAL)[0]
        if live.size == 0:
            break
        nodes = cur[live]
        mover = game.player[nodes]
        is_chance = mover == CHANCE
        I = game.infoset[nodes]
        a = (U[live, d, None] >= node_cdf[nodes]).sum(axis=1)
        a = np.minimum(a, game.num_children[nodes] - 1)
        dec = ~is_chance
        tr.append(live[dec])
        pl.append(mover[dec])
        inf.append(I[dec])
        act.append(a[dec])
        lp.append(logp[I[dec], a[dec]])
        cur[live] = game.children[nodes, a]
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    return TrajectoryBatch(game, game.payoff[cur].copy(), cat(tr, np.int64), cat(pl, np.int64),
                           cat(inf, np.int64), cat(act, np.int64), cat(lp, np.float64))


def estimate_policy_gradient(batch: TrajectoryBatch, player: int, policy: SoftmaxPolicy,
                             probs: np.ndarray | None = None) -> np.ndarray:
    """REINFORCE with a batch-mean baseline, averaged over episodes."""
    g = np.zeros((policy.game.num_infosets, policy.game.max_actions))
    n = len(batch)
    if n == 0:
        return g
    R = batch.returns(player)
    # identical returns must give an exactly zero gradient; mean() can be off by an ulp
    baseline = R[0] if np.all(R == R[0]) else R.mean()
    mine = batch.step_player == player
    I = batch.step_infoset[mine]
    a = batch.step_action[mine]
    adv = (R - baseline)[batch.step_traj[mine]]
    if probs is None:
        probs = policy.probs()
    A = g.shape[1]
    g += np.bincount(I * A + a, weights=adv, minlength=g.size).reshape(g.shape)
    adv_sum = np.bincount(I, weights=adv, minlength=g.shape[0])
    g -= adv_sum[:, None] * probs
    g[~policy.game.action_mask] = 0.0
    return g / n


def kl_divergence_rows(probs: np.ndarray, ref: np.ndarray, mask: np.ndarray) -> np.ndarray:
    lp = np.log(np.where(mask, probs, 1.0))
    lq = np.log(np.where(mask, ref, 1.0))
    return np.sum(np.where(mask, probs * (lp - lq), 0.0), axis=1)


def kl_gradient_rows(probs: np.ndarray, ref: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """d KL(softmax(theta) || ref) / d theta, row by row."""
    lp = np.log(np.where(mask, probs, 1.0))
    lq = np.log(np.where(mask, ref, 1.0))
    kl = np.sum(np.where(mask, probs * (lp - lq), 0.0), axis=1, keepdims=True)
    return np.where(mask, probs * (lp - lq - kl), 0.0)


def estimate_kl_gradient(batch: TrajectoryBatch, player: int, policy: SoftmaxPolicy,
                         reference, weighting: str = "visits", probs: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the expected per-observation KL to ``reference``.

    Observations are the player's infosets visited in ``batch``. With
    ``weighting="visits"`` each is weighted by its share of the player's
    visits; ``"uniform"`` weights every visited infoset equally.
    """
    game = policy.game
    ref = reference.probs() if isinstance(reference, SoftmaxPolicy) else getattr(reference, "probs", reference)
    counts = batch.visit_counts(player).astype(np.float64)
    total = counts.sum()
    if total == 0:
        return np.zeros((game.num_infosets, game.max_actions))
    if weighting == "visits":
        w = counts / total
    elif weighting == "uniform":
        w = (counts > 0) / np.count_nonzero(counts)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    rows = np.nonzero(w)[0]
    g = np.zeros((game.num_infosets, game.max_actions))
    if probs is None:
        probs = policy.probs()
    g[rows] = w[rows, None] * kl_gradient_rows(probs[rows], ref[rows], game.action_mask[rows])
    return g


def exact_logit_gradient(game: ExtensiveFormGame, policy: SoftmaxPolicy, player: int) -> np.ndarray:
    """Exact d E[R_player] / d theta by tree traversal and the softmax Jacobian."""
    probs = policy.probs()
    dprob = exact_policy_gradient(game, probs) * (1.0 if player == 0 else -1.0)
    inner = np.sum(probs * dprob, axis=1, keepdims=True)
    g = probs * (dprob - inner)
    g[game.infoset_player != player] = 0.0
    g[~game.action_mask] = 0.0
    return g


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.2
    eta: float = 0.05
    inner_iters: int = 1000
    outer_iters: int = 50
    batch_size: int = 512
    seed: int = 0
    anneal: Optional[AnnealSchedule] = None
    eval_every: Optional[int] = None
    kl_weighting: str = "visits"

    def __post_init__(self):
        if not self.alpha > 0 or self.eta < 0:
            raise ConfigError("alpha must be positive and eta non-negative")
        if self.inner_iters < 1 or self.outer_iters < 1 or self.batch_size < 1:
            raise ConfigError("inner_iters, outer_iters and batch_size must be at least 1")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be positive")
        if self.kl_weighting not in ("visits", "uniform"):
            raise ConfigError(f"unknown kl_weighting {self.kl_weighting!r}")

    @property
    def total_steps(self) -> int:
        return self.inner_iters * self.outer_iters

    @property
    def checkpoint_every(self) -> int:
        return self.eval_every or max(1, self.total_steps // 50)

    def to_dict(self) -> dict:
        return asdict(self)


TRAIN_COLUMNS = ("step", "outer", "alpha", "eta", "exploitability")


def _train(game: ExtensiveFormGame, cfg: TrainConfig, refresh_reference: bool) -> RunRecord:
    rng = np.random.default_rng(cfg.seed)
    policy = SoftmaxPolicy(game)
    reference = policy.probs()
    total = cfg.total_steps
    every = cfg.checkpoint_every
    record = RunRecord(TRAIN_COLUMNS, meta={"config": cfg.to_dict(), "game": game.name,
                                            "refresh_reference": refresh_reference})
    record.append(policy.logits.copy(), step=0, outer=0, alpha=cfg.alpha, eta=cfg.eta,
                  exploitability=exploitability(game, reference))
    step = 0
    for t in range(cfg.outer_iters):
        for _ in range(cfg.inner_iters):
            alpha, eta = cfg.alpha, cfg.eta
            if cfg.anneal is not None:
                alpha = linear_schedule(cfg.alpha, cfg.anneal.alpha_final, step, total)
                if cfg.anneal.eta_final is not None:
                    eta = linear_schedule(cfg.eta, cfg.anneal.eta_final, step, total)
            probs = policy.probs()
            batch = sample_trajectories(game, probs, cfg.batch_size, rng)
            update = np.zeros_like(policy.logits)
            for p in (0, 1):
                g = estimate_policy_gradient(batch, p, policy, probs)
                g_reg = estimate_kl_gradient(batch, p, policy, reference, cfg.kl_weighting, probs)
                update += g - alpha * g_reg
            policy.logits += eta * update
            step += 1
            if step % every == 0 or step == total:
                record.append(policy.logits.copy(), step=step, outer=t, alpha=alpha, eta=eta,
                              exploitability=exploitability(game, policy.probs()))
        if refresh_reference:
            reference = policy.probs()
    record.meta["policy"] = policy
    return record


def train_nashpg(game: ExtensiveFormGame, cfg: TrainConfig) -> RunRecord:
    """Regularized policy gradient with the magnet refreshed every ``inner_iters`` steps.

    Snapshots hold the logits at every checkpoint row.
    """
    return _train(game, cfg, refresh_reference=True)


def train_anneal(game: ExtensiveFormGame, cfg: TrainConfig) -> RunRecord:
    """Same sampled loop with the magnet frozen at uniform and alpha decayed."""
    if cfg.anneal is None:
        raise ConfigError("train_anneal needs an anneal schedule")
    return _train(game, cfg, refresh_reference=False)
