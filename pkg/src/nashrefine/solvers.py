"""Exact-gradient solvers on matrix games.

``mmd_step`` is the closed-form entropic magnetic mirror descent update,
``solve_regularized_vi`` iterates it to the fixed point of the regularized
problem (the operator M), ``iterative_m`` repeatedly re-anchors the magnet at
the previous solution, and ``mmd_anneal`` is the fixed-magnet baseline with a
linearly decaying regularization strength.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from nashrefine.errors import ConfigError, DomainError
from nashrefine.nfg import (
    INTERIOR_FLOOR,
    NEGATIVE_ENTROPY,
    BregmanGeometry,
    MixedProfile,
    NormalFormGame,
    bregman_divergence,
    check_mmd_condition,
    operator_G,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnealSchedule:
    alpha_final: float = 0.001
    eta_final: Optional[float] = None  # None keeps eta fixed


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.2
    eta: float = 0.5
    inner_tol: float = 1e-9
    inner_max_iters: int = 1000
    outer_iters: int = 50
    anneal: Optional[AnnealSchedule] = None

    def __post_init__(self):
        if not self.alpha > 0 or not self.eta > 0 or not self.inner_tol > 0:
            raise ConfigError("alpha, eta and inner_tol must be positive")
        if self.inner_max_iters < 1 or self.outer_iters < 1:
            raise ConfigError("iteration counts must be at least 1")


@dataclass
class RunRecord:
    """Per-iteration metrics of one run, with optional snapshots."""

    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, snapshot=None, **row) -> None:
        self.rows.append({c: row.get(c) for c in self.columns})
        if snapshot is not None:
            self.snapshots.append(snapshot)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final(self) -> dict:
        return self.rows[-1]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if v is None else v) for k, v in r.items()})
        return path


@dataclass(frozen=True)
class InnerSolve:
    """Result of one regularized-VI solve plus convergence diagnostics."""

    z: MixedProfile
    iters: int
    converged: bool
    last_step: float
    residual: float


SOLVER_COLUMNS = ("t", "exploitability", "bregman_step", "bregman_to_star", "inner_iters")


def _mmd_update(p: np.ndarray, grad: np.ndarray, magnet_log: np.ndarray, eta: float, alpha: float) -> np.ndarray:
    logits = (np.log(p) + eta * grad + eta * alpha * magnet_log) / (1.0 + eta * alpha)
    logits -= logits.max()
    q = np.exp(logits)
    q /= q.sum()
    q = np.maximum(q, INTERIOR_FLOOR)
    return q / q.sum()


def mmd_step(game: NormalFormGame, geom: BregmanGeometry, z: MixedProfile, rho: MixedProfile,
             cfg: SolverConfig, *, alpha: float | None = None, eta: float | None = None) -> MixedProfile:
    """One simultaneous magnetic mirror descent step from ``z`` with magnet ``rho``."""
    if not z.is_interior() or not rho.is_interior():
        raise DomainError("mmd_step needs strictly interior z and rho")
    alpha = cfg.alpha if alpha is None else alpha
    eta = cfg.eta if eta is None else eta
    A = game.payoff_matrix
    x = _mmd_update(z.x, A @ z.y, np.log(rho.x), eta, alpha)
    y = _mmd_update(z.y, -(A.T @ z.x), np.log(rho.y), eta, alpha)
    return MixedProfile(x, y)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    r = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[r] / (r + 1), 0.0)


def natural_residual(game: NormalFormGame, z: MixedProfile, rho: MixedProfile, alpha: float,
                     gamma: float = 1.0) -> float:
    """``||z - Proj(z - gamma * G_rho(z))||_1``; zero exactly at the VI solution."""
    G = operator_G(game, NEGATIVE_ENTROPY, z, rho, alpha)
    m = game.m
    v = z.vector - gamma * G
    proj = np.concatenate([_project_simplex(v[:m]), _project_simplex(v[m:])])
    return float(np.abs(z.vector - proj).sum())


def solve_regularized_vi(game: NormalFormGame, geom: BregmanGeometry, rho: MixedProfile,
                         cfg: SolverConfig, *, z0: MixedProfile | None = None) -> InnerSolve:
    """Approximate M(rho): iterate ``mmd_step`` from ``rho`` until the step is below tolerance."""
    L = game.spectral_norm()
    if not check_mmd_condition(cfg.alpha, cfg.eta, geom.strong_convexity_mu, L):
        warnings.warn(
            f"alpha={cfg.alpha} < mu*eta*L^2={geom.strong_convexity_mu * cfg.eta * L * L:.4g}; "
            "MMD convergence is not guaranteed", RuntimeWarning, stacklevel=2)
    z = rho if z0 is None else z0
    if not z.is_interior() or not rho.is_interior():
        raise DomainError("solve_regularized_vi needs strictly interior rho and z0")
    # same update as mmd_step, kept on raw arrays to avoid per-step validation
    A = game.payoff_matrix
    log_rx, log_ry = np.log(rho.x), np.log(rho.y)
    x, y = z.x, z.y
    step = np.inf
    k = 0
    while k < cfg.inner_max_iters:
        x_next = _mmd_update(x, A @ y, log_rx, cfg.eta, cfg.alpha)
        y_next = _mmd_update(y, -(A.T @ x), log_ry, cfg.eta, cfg.alpha)
        step = float(np.abs(x_next - x).sum() + np.abs(y_next - y).sum())
        x, y = x_next, y_next
        k += 1
        if step < cfg.inner_tol:
            break
    z = MixedProfile(x, y) if k else z
    converged = step < cfg.inner_tol
    if not converged:
        log.debug("inner loop stopped at K=%d with step %.3g", k, step)
    return InnerSolve(z, k, converged, step, natural_residual(game, z, rho, cfg.alpha))


def iterative_m(game: NormalFormGame, geom: BregmanGeometry, z0: MixedProfile, cfg: SolverConfig,
                z_star: MixedProfile | None = None) -> RunRecord:
    """Outer refinement loop: each iterate becomes the next magnet."""
    if not z0.is_interior():
        raise DomainError("z0 must be strictly interior")
    record = RunRecord(SOLVER_COLUMNS, meta={"alpha": cfg.alpha, "eta": cfg.eta})
    star = None if z_star is None else bregman_divergence(geom, z_star, z0)
    record.append(z0, t=0, exploitability=game.exploitability(z0), bregman_step=0.0,
                  bregman_to_star=star, inner_iters=0)
    z = z0
    with warnings.catch_warnings():
        warnings.simplefilter("once", RuntimeWarning)
        for t in range(1, cfg.outer_iters + 1):
            sol = solve_regularized_vi(game, geom, z, cfg)
            star = None if z_star is None else bregman_divergence(geom, z_star, sol.z)
            record.append(sol.z, t=t, exploitability=game.exploitability(sol.z),
                          bregman_step=bregman_divergence(geom, sol.z, z),
                          bregman_to_star=star, inner_iters=sol.iters)
            z = sol.z
    return record


def linear_schedule(start: float, end: float, step: int, total: int) -> float:
    """Linear interpolation from ``start`` (step 0) to ``end`` (step ``total``)."""
    if total <= 0:
        return end
    frac = min(max(step / total, 0.0), 1.0)
    return start + (end - start) * frac


def mmd_anneal(game: NormalFormGame, geom: BregmanGeometry, z0: MixedProfile, cfg: SolverConfig,
               *, record_every: int | None = None) -> RunRecord:
    """Fixed uniform magnet; alpha (and optionally eta) decay linearly over all steps.

    The total step budget is ``outer_iters * inner_max_iters``. Without an
    anneal schedule alpha and eta stay fixed.
    """
    total = cfg.outer_iters * cfg.inner_max_iters
    every = record_every or max(1, total // 50)
    rho = game.uniform_profile()
    sched = cfg.anneal
    record = RunRecord(("step", "alpha", "eta", "exploitability"))
    z = z0
    record.append(z, step=0, alpha=cfg.alpha, eta=cfg.eta, exploitability=game.exploitability(z))
    for s in range(1, total + 1):
        alpha, eta = cfg.alpha, cfg.eta
        if sched is not None:
            alpha = linear_schedule(cfg.alpha, sched.alpha_final, s - 1, total)
            if sched.eta_final is not None:
                eta = linear_schedule(cfg.eta, sched.eta_final, s - 1, total)
        z = mmd_step(game, geom, z, rho, cfg, alpha=alpha, eta=eta)
        if s % every == 0 or s == total:
            record.append(z, step=s, alpha=alpha, eta=eta, exploitability=game.exploitability(z))
    return record
