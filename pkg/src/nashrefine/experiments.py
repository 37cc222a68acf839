"""Experiment specs, flat ``key=value`` configs, and run orchestration.

Every run writes into its output directory:

* ``manifest.json``: the fully resolved experiment settings and package version,
* one CSV per seed plus ``aggregate.csv`` (per-checkpoint mean and sd),
* PNG figures of the same data, unless ``plots=false``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from nashrefine import __version__
from nashrefine.efg import ExtensiveFormGame, efg_to_nfg, exploitability
from nashrefine.errors import ConfigError
from nashrefine.games import efg_from_matrix, load_game
from nashrefine.nashpg import SoftmaxPolicy, TrainConfig, train_anneal, train_nashpg
from nashrefine.nfg import NEGATIVE_ENTROPY, MixedProfile, NormalFormGame, project_interior
from nashrefine.solvers import AnnealSchedule, RunRecord, SolverConfig, iterative_m, mmd_anneal
from nashrefine.tournament import TournamentConfig, swiss_tournament

log = logging.getLogger(__name__)

KINDS = ("solve_nfg", "solve_efg_exact", "nashpg", "anneal", "alpha_sweep", "tournament", "evaluate")

SOLVER_ETA_EXTENSIVE = 0.5
TRAIN_ETA = 0.05


@dataclass
class ExperimentSpec:
    """Resolved experiment configuration.

    ``eta=None`` picks a default by experiment and game. Exact solves on
    matrix games use the largest step with guaranteed convergence,
    ``alpha / L**2``; exact solves on converted extensive games use 0.5, which
    breaks that bound but converges in practice (a warning is logged).
    Sampled training uses 0.05, or 1.0 on Leduc, whose rewards are scaled
    by 1/20.
    """

    kind: str = "nashpg"
    game: str = "kuhn"
    alpha: float = 0.2
    eta: Optional[float] = None
    inner: int = 1000
    outer: int = 50
    inner_tol: float = 1e-10
    batch: int = 512
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])
    alphas: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.4])
    alpha_final: float = 0.001
    eta_final: Optional[float] = None
    eval_every: Optional[int] = None
    kl_weighting: str = "visits"
    rounds: int = 100
    games_per_match: int = 100
    k_factor: float = 32.0
    checkpoints: list[str] = field(default_factory=list)
    out: str = "runs/experiment"
    plots: bool = True
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for name in ("alpha", "inner_tol", "alpha_final", "k_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta!r}")
        if self.eta_final is not None and self.eta_final < 0:
            raise ConfigError("eta_final must be non-negative")
        for name in ("inner", "outer", "batch", "rounds", "games_per_match", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)!r}")
        if self.eval_every is not None and self.eval_every < 1:
            raise ConfigError("eval_every must be at least 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(a <= 0 for a in self.alphas):
            raise ConfigError("sweep alphas must be positive")
        if self.kl_weighting not in ("visits", "uniform"):
            raise ConfigError(f"kl_weighting must be 'visits' or 'uniform', got {self.kl_weighting!r}")

    @property
    def games(self) -> list[str]:
        return [g for g in self.game.split(",") if g]

    def train_eta(self, game_name: str) -> float:
        # one tabular default for every game; game_name kept for callers that vary it
        return TRAIN_ETA if self.eta is None else self.eta

    def solver_eta(self, nfg: NormalFormGame, from_extensive: bool) -> float:
        if self.eta is not None:
            return self.eta
        if from_extensive:
            return SOLVER_ETA_EXTENSIVE
        return self.alpha / nfg.spectral_norm() ** 2

    def solver_config(self, nfg: NormalFormGame, from_extensive: bool = False) -> SolverConfig:
        anneal = AnnealSchedule(self.alpha_final, self.eta_final) if self.kind == "anneal" else None
        return SolverConfig(alpha=self.alpha, eta=self.solver_eta(nfg, from_extensive), inner_tol=self.inner_tol,
                            inner_max_iters=self.inner, outer_iters=self.outer, anneal=anneal)

    def train_config(self, game_name: str, seed: int, alpha: float | None = None) -> TrainConfig:
        anneal = AnnealSchedule(self.alpha_final, self.eta_final) if self.kind == "anneal" else None
        return TrainConfig(alpha=self.alpha if alpha is None else alpha, eta=self.train_eta(game_name),
                           inner_iters=self.inner, outer_iters=self.outer, batch_size=self.batch, seed=seed,
                           anneal=anneal, eval_every=self.eval_every, kl_weighting=self.kl_weighting)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --- config parsing ----------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "null") else conv(text)
    return parse


def _list(conv):
    def parse(text: str):
        return [conv(tok) for tok in text.replace(" ", "").split(",") if tok]
    return parse


_PARSERS = {
    "kind": str,
    "game": str,
    "alpha": float,
    "eta": _optional(float),
    "inner": int,
    "outer": int,
    "inner_tol": float,
    "batch": int,
    "seeds": _list(int),
    "alphas": _list(float),
    "alpha_final": float,
    "eta_final": _optional(float),
    "eval_every": _optional(int),
    "kl_weighting": str,
    "rounds": int,
    "games_per_match": int,
    "k_factor": float,
    "checkpoints": _list(str),
    "out": str,
    "plots": _parse_bool,
    "workers": int,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def build_spec(file_values: dict[str, str] | None = None, overrides: dict[str, Any] | None = None) -> ExperimentSpec:
    """Merge file values and overrides (overrides win) into a validated spec."""
    merged: dict[str, Any] = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in _PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, str):
                try:
                    value = _PARSERS[key](value)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key}: {exc}") from None
            merged[key] = value
    try:
        return ExperimentSpec(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_spec(config_path=None, overrides: dict[str, Any] | None = None) -> ExperimentSpec:
    file_values = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        file_values = parse_config_text(path.read_text(), str(path))
    return build_spec(file_values, overrides)


# --- aggregation --------------------------------------------------------------

def aggregate_records(records: Sequence[RunRecord], key: str, value: str = "exploitability") -> list[dict]:
    """Mean and population sd of ``value`` across runs, matched on ``key``."""
    xs = records[0].column(key)
    vals = np.vstack([r.column(value) for r in records])
    for r in records:
        if not np.array_equal(r.column(key), xs):
            raise ValueError("runs do not share checkpoints")
    mean = vals.mean(axis=0)
    sd = vals.std(axis=0)
    return [{key: int(x) if float(x).is_integer() else x, "mean": m, "sd": s, "n": len(records)}
            for x, m, s in zip(xs, mean, sd)]


def write_rows(path, rows: list[dict], columns: Sequence[str] | None = None) -> Path:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return path


def read_rows(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def mean_sd(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


# --- runners ----------------------------------------------------------------

def _random_interior(game: NormalFormGame, seed: int) -> MixedProfile:
    rng = np.random.default_rng(seed)
    return MixedProfile(project_interior(rng.dirichlet(np.ones(game.m))),
                        project_interior(rng.dirichlet(np.ones(game.n))))


def _solve_one(nfg: NormalFormGame, spec: ExperimentSpec, seed: int, from_extensive: bool) -> RunRecord:
    z0 = _random_interior(nfg, seed)
    cfg = spec.solver_config(nfg, from_extensive)
    if spec.kind == "anneal":
        return mmd_anneal(nfg, NEGATIVE_ENTROPY, z0, cfg)
    return iterative_m(nfg, NEGATIVE_ENTROPY, z0, cfg)


def _train_one(args) -> RunRecord:
    game_name, spec, seed, alpha = args
    game = load_game(game_name)
    efg = efg_from_matrix(game) if isinstance(game, NormalFormGame) else game
    cfg = spec.train_config(game_name, seed, alpha)
    fn = train_anneal if spec.kind == "anneal" else train_nashpg
    record = fn(efg, cfg)
    record.meta.pop("policy", None)
    return record


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _save_checkpoints(game: ExtensiveFormGame, record: RunRecord, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for row, logits in zip(record.rows, record.snapshots):
        SoftmaxPolicy(game, logits).save(directory / f"step{int(row['step']):07d}.txt")


def _write_manifest(out: Path, spec: ExperimentSpec, extra: dict | None = None) -> None:
    manifest = {"version": __version__, "spec": spec.to_dict()}
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_solve(spec: ExperimentSpec, out: Path) -> dict:
    game = load_game(spec.game)
    conversion = None
    if isinstance(game, ExtensiveFormGame):
        conversion = efg_to_nfg(game)
        nfg = conversion.nfg
    else:
        nfg = game
    records = []
    summary = {}
    for seed in spec.seeds:
        rec = _solve_one(nfg, spec, seed, conversion is not None)
        if conversion is not None:
            behavioral = conversion.behavioral_from_mixed(rec.snapshots[-1])
            rec.meta["efg_exploitability"] = exploitability(conversion.efg, behavioral)
        rec.to_csv(out / f"{spec.kind}_seed{seed}.csv")
        records.append(rec)
        summary[seed] = {"final_exploitability": rec.final["exploitability"],
                         "value": float(rec.snapshots[-1].x @ nfg.A @ rec.snapshots[-1].y)}
        if conversion is not None:
            summary[seed]["efg_exploitability"] = rec.meta["efg_exploitability"]
    key = "step" if spec.kind == "anneal" else "t"
    write_rows(out / "aggregate.csv", aggregate_records(records, key))
    if spec.plots:
        from nashrefine import plotting
        plotting.plot_exploitability(out / "aggregate.csv", out / "exploitability.png", x=key,
                                     title=f"{spec.kind} on {spec.game}")
    return summary


def run_train(spec: ExperimentSpec, out: Path) -> dict:
    game_name = spec.game
    game = load_game(game_name)
    efg = efg_from_matrix(game) if isinstance(game, NormalFormGame) else game
    records = _map(_train_one, [(game_name, spec, s, None) for s in spec.seeds], spec.workers)
    summary = {}
    for seed, rec in zip(spec.seeds, records):
        rec.to_csv(out / f"{spec.kind}_seed{seed}.csv")
        _save_checkpoints(efg, rec, out / "checkpoints" / f"seed{seed}")
        summary[seed] = {"final_exploitability": rec.final["exploitability"]}
    write_rows(out / "aggregate.csv", aggregate_records(records, "step"))
    if spec.plots:
        from nashrefine import plotting
        plotting.plot_exploitability(out / "aggregate.csv", out / "exploitability.png", x="step",
                                     title=f"{spec.kind} on {game_name}")
    return summary


def run_sweep(spec: ExperimentSpec, out: Path) -> dict:
    jobs = [(g, spec, s, a) for a in spec.alphas for g in spec.games for s in spec.seeds]
    records = _map(_train_one, jobs, spec.workers)
    finals: dict[tuple[float, str], list[float]] = {}
    for (g, _, seed, alpha), rec in zip(jobs, records):
        rec.to_csv(out / f"sweep_{g}_alpha{alpha}_seed{seed}.csv")
        finals.setdefault((alpha, g), []).append(rec.final["exploitability"])
    agg_rows = []
    for alpha in spec.alphas:
        for g in spec.games:
            recs = [r for (gg, _, _, a), r in zip(jobs, records) if gg == g and a == alpha]
            for row in aggregate_records(recs, "step"):
                agg_rows.append({"game": g, "alpha": alpha, **row})
    write_rows(out / "aggregate.csv", agg_rows)
    table = []
    for alpha in spec.alphas:
        row = {"alpha": alpha}
        for g in spec.games:
            m, s = mean_sd(finals[(alpha, g)])
            row[g] = f"{m:.4f} ± {s:.4f}"
        table.append(row)
    write_rows(out / "summary.csv", table, ["alpha", *spec.games])
    if spec.plots:
        from nashrefine import plotting
        plotting.plot_sweep(out / "aggregate.csv", out / "sweep.png")
    return {"table": table, "finals": {f"{a}/{g}": v for (a, g), v in finals.items()}}


def _resolve_checkpoints(paths: Sequence[str]) -> dict[str, Path]:
    found: dict[str, Path] = {}
    for entry in paths:
        p = Path(entry)
        files = sorted(p.rglob("*.txt")) if p.is_dir() else sorted(p.parent.glob(p.name)) if any(c in p.name for c in "*?[") else [p]
        for f in files:
            if not f.exists():
                raise ConfigError(f"checkpoint not found: {f}")
            base = p if p.is_dir() else f.parent
            key = str(f.relative_to(base).with_suffix("")) if p.is_dir() else f.stem
            while key in found:
                key += "'"
            found[key] = f
    if not found:
        raise ConfigError("no checkpoints given")
    return found


def run_tournament(spec: ExperimentSpec, out: Path) -> dict:
    efg = load_game(spec.game)
    if isinstance(efg, NormalFormGame):
        efg = efg_from_matrix(efg)
    files = _resolve_checkpoints(spec.checkpoints)
    policies = {k: SoftmaxPolicy.load(efg, f) for k, f in files.items()}
    ratings: dict[str, list[float]] = {k: [] for k in policies}
    for seed in spec.seeds:
        cfg = TournamentConfig(spec.rounds, spec.games_per_match, spec.k_factor, seed)
        res = swiss_tournament(efg, policies, cfg)
        res.write_csv(out / f"tournament_seed{seed}.csv", out / f"standings_seed{seed}.csv")
        for k, v in res.ratings().items():
            ratings[k].append(v)
    rows = [{"id": k, "mean_rating": float(np.mean(v)), "sd_rating": float(np.std(v)), "n": len(v)}
            for k, v in sorted(ratings.items(), key=lambda kv: -np.mean(kv[1]))]
    write_rows(out / "aggregate.csv", rows)
    if spec.plots:
        from nashrefine import plotting
        plotting.plot_standings(out / "aggregate.csv", out / "standings.png")
    return {"standings": rows}


def run_evaluate(spec: ExperimentSpec, out: Path) -> dict:
    efg = load_game(spec.game)
    if isinstance(efg, NormalFormGame):
        efg = efg_from_matrix(efg)
    files = _resolve_checkpoints(spec.checkpoints)
    rows = []
    for k, f in files.items():
        probs = SoftmaxPolicy.load(efg, f).probs()
        rows.append({"id": k, "path": str(f), "exploitability": exploitability(efg, probs)})
    write_rows(out / "evaluation.csv", rows)
    return {"evaluation": rows}


RUNNERS = {
    "solve_nfg": run_solve,
    "solve_efg_exact": run_solve,
    "nashpg": run_train,
    "anneal": None,  # chosen by game type
    "alpha_sweep": run_sweep,
    "tournament": run_tournament,
    "evaluate": run_evaluate,
}


def run(spec: ExperimentSpec) -> dict:
    """Execute ``spec`` and write its artifacts under ``spec.out``."""
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    for g in spec.games:
        load_game(g)  # fail fast on unknown names
    runner = RUNNERS[spec.kind]
    if spec.kind == "anneal":
        runner = run_solve if isinstance(load_game(spec.game), NormalFormGame) else run_train
    _write_manifest(out, spec)
    summary = runner(spec, out)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    return summary
