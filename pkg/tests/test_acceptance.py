"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION n: PASS|FAIL`` line with the measured
numbers, then asserts. Training runs are shared between criteria through
module-level caches, so running the whole file costs about as much as the
slowest criterion plus the Leduc runs.
"""

import dataclasses
import functools
import time
import warnings

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import lp_solve, random_profile
from nashrefine.efg import efg_to_nfg, exploitability
from nashrefine.experiments import build_spec
from nashrefine.games import MATCHING_PENNIES, ROCK_PAPER_SCISSORS, build_kuhn, build_leduc
from nashrefine.nashpg import (
    SoftmaxPolicy,
    estimate_kl_gradient,
    estimate_policy_gradient,
    exact_logit_gradient,
    kl_divergence_rows,
    kl_gradient_rows,
    sample_trajectories,
    train_anneal,
    train_nashpg,
)
from nashrefine.nfg import (
    NEGATIVE_ENTROPY,
    MixedProfile,
    NormalFormGame,
    bregman_divergence,
    operator_F,
    operator_G,
)
from nashrefine.solvers import AnnealSchedule, SolverConfig, iterative_m, solve_regularized_vi
from nashrefine.tournament import EloEntry, TournamentConfig, elo_update, expected_score, swiss_tournament

pytestmark = pytest.mark.acceptance

SEEDS = (0, 1, 2, 3)
KUHN_VALUE = -1.0 / 18.0
GEOM = NEGATIVE_ENTROPY


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}")


def final_tenth(curve):
    k = max(1, int(round(0.1 * len(curve))))
    return float(np.mean(curve[-k:])), float(np.min(curve[:-k]))


@functools.lru_cache(maxsize=None)
def theory_games():
    rng = np.random.default_rng(2024)
    games = [("matching_pennies", NormalFormGame(MATCHING_PENNIES)), ("rps", NormalFormGame(ROCK_PAPER_SCISSORS))]
    games += [(f"random5x5_{i}", NormalFormGame(rng.normal(size=(5, 5)))) for i in range(20)]
    games.append(("kuhn_nfg", efg_to_nfg(build_kuhn()).nfg))
    return games


def accurate_m(game, rho, alpha, eta_start=0.0):
    """M(rho) to near machine precision, certified by the natural residual.

    Starts from the larger of 1/L and ``eta_start`` and halves the step until
    the iteration settles; alpha/L**2 always does.
    """
    L = game.spectral_norm()
    safe = alpha / L**2
    eta = max(1.0 / L, eta_start)
    while True:
        final = eta <= safe
        cfg = SolverConfig(alpha=alpha, eta=max(eta, safe), inner_tol=1e-13,
                           inner_max_iters=100000 if final else 5000)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = solve_regularized_vi(game, GEOM, rho, cfg)
        if sol.residual < 1e-10 or final:
            return sol
        eta /= 2


@functools.lru_cache(maxsize=None)
def kuhn_game():
    return build_kuhn()


@functools.lru_cache(maxsize=None)
def training_run(game_name, alpha, seed, anneal=False):
    spec = build_spec()
    game = kuhn_game() if game_name == "kuhn" else build_leduc()
    cfg = spec.train_config(game_name, seed, alpha)
    if anneal:
        cfg = dataclasses.replace(cfg, anneal=AnnealSchedule(spec.alpha_final, spec.eta_final))
        return train_anneal(game, cfg)
    return train_nashpg(game, cfg)


def test_criterion_1_theory_suite(capsys):
    start = time.time()
    rng = np.random.default_rng(7)
    alpha = 0.2
    spec = build_spec()
    worst = {"a": 0.0, "b": 0.0, "c_ratio": np.inf, "c_block_ratio": np.inf, "d": 0.0, "e": -np.inf,
             "f": 0.0, "z_star": 0.0, "m_residual": 0.0}
    c_violations = 0
    c_total = 0
    for name, game in theory_games():
        m, n = game.shape
        from_extensive = name == "kuhn_nfg"
        eta_start = spec.solver_eta(game, from_extensive)
        # (a) three-point identity B(a;c) = B(a;b) + B(b;c) + <grad psi(b) - grad psi(c), a - b>
        for _ in range(1000):
            a, b, c = (random_profile(rng, m, n) for _ in range(3))
            lhs = bregman_divergence(GEOM, a, c)
            inner = (GEOM.grad_psi(b.vector) - GEOM.grad_psi(c.vector)) @ (a.vector - b.vector)
            rhs = bregman_divergence(GEOM, a, b) + bregman_divergence(GEOM, b, c) + inner
            worst["a"] = max(worst["a"], abs(lhs - rhs))
        # (b) F is monotone with equality for zero-sum games
        for _ in range(1000):
            u, v = random_profile(rng, m, n), random_profile(rng, m, n)
            worst["b"] = max(worst["b"], abs((operator_F(game, u) - operator_F(game, v)) @ (u.vector - v.vector)))
        # (c) strong monotonicity of G_rho against alpha * ||u - v||_1^2 on the stacked vector
        for _ in range(1000):
            u, v, rho = (random_profile(rng, m, n) for _ in range(3))
            lhs = (operator_G(game, GEOM, u, rho, alpha) - operator_G(game, GEOM, v, rho, alpha)) @ (u.vector - v.vector)
            stacked = np.abs(u.vector - v.vector).sum() ** 2
            blockwise = np.abs(u.x - v.x).sum() ** 2 + np.abs(u.y - v.y).sum() ** 2
            c_total += 1
            c_violations += lhs < alpha * stacked
            worst["c_ratio"] = min(worst["c_ratio"], lhs / (alpha * stacked))
            worst["c_block_ratio"] = min(worst["c_block_ratio"], lhs / (alpha * blockwise))
        # z* from an independent LP solve
        x, y, _ = lp_solve(game.A)
        z_star = MixedProfile(np.clip(x, 0, None) / np.clip(x, 0, None).sum(), np.clip(y, 0, None) / np.clip(y, 0, None).sum())
        worst["z_star"] = max(worst["z_star"], game.exploitability(z_star))
        # (d) distance non-increase with an accurately solved M(rho), certified by its natural residual
        for _ in range(100):
            rho = random_profile(rng, m, n)
            sol = accurate_m(game, rho, alpha, eta_start)
            worst["m_residual"] = max(worst["m_residual"], sol.residual)
            slack = (bregman_divergence(GEOM, z_star, rho) - bregman_divergence(GEOM, z_star, sol.z)
                     - bregman_divergence(GEOM, sol.z, rho))
            worst["d"] = min(worst["d"], slack)
        # (f) fixed-point residual at the interior-projected solution
        zs_int = MixedProfile.interior(z_star.x, z_star.y)
        worst["f"] = max(worst["f"], accurate_m(game, zs_int, alpha, eta_start).z.l1_distance(zs_int))
        # (e) B(z*; z_t) decreases along the default refinement run
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cfg = spec.solver_config(game, from_extensive)
            rec = iterative_m(game, GEOM, random_profile(rng, m, n), cfg, z_star=z_star)
        worst["e"] = max(worst["e"], float(np.max(np.diff(rec.column("bregman_to_star")))))
    elapsed = time.time() - start
    checks = {
        "a": worst["a"] <= 1e-9,
        "b": worst["b"] <= 1e-12,
        "c": c_violations == 0,
        "d": worst["d"] >= -1e-6,
        "e": worst["e"] <= 1e-12,
        "f": worst["f"] < 1e-5,
        "z*": worst["z_star"] < 1e-7,
        "M certified": worst["m_residual"] < 1e-8,
        "time": elapsed < 300,
    }
    ok = all(checks.values())
    report(capsys, 1, ok,
           f"(a) {worst['a']:.1e} (b) {worst['b']:.1e} (c) {c_violations}/{c_total} violations, "
           f"min ratio {worst['c_ratio']:.3f} (blockwise norm min ratio {worst['c_block_ratio']:.3f}) "
           f"(d) min slack {worst['d']:.1e} (e) max increase {worst['e']:.1e} (f) {worst['f']:.1e} "
           f"z* expl {worst['z_star']:.1e} M residual {worst['m_residual']:.1e} time {elapsed:.0f}s failed={[k for k, v in checks.items() if not v]}")
    assert ok


def test_criterion_2_exact_solver(capsys):
    start = time.time()
    spec = build_spec()
    rng = np.random.default_rng(11)
    finals = {}
    for name, game, from_extensive in (("matching_pennies", NormalFormGame(MATCHING_PENNIES), False),
                                       ("rps", NormalFormGame(ROCK_PAPER_SCISSORS), False),
                                       ("kuhn_nfg", efg_to_nfg(kuhn_game()).nfg, True)):
        cfg = spec.solver_config(game, from_extensive)
        assert (cfg.alpha, cfg.outer_iters, cfg.inner_max_iters) == (0.2, 50, 1000)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rec = iterative_m(game, GEOM, random_profile(rng, *game.shape), cfg)
        finals[name] = (rec.final["exploitability"], game.value(rec.snapshots[-1]))
    elapsed = time.time() - start
    ok = (finals["matching_pennies"][0] < 1e-4 and finals["rps"][0] < 1e-4 and finals["kuhn_nfg"][0] < 1e-3
          and abs(finals["kuhn_nfg"][1] - KUHN_VALUE) < 1e-3 and elapsed < 600)
    report(capsys, 2, ok,
           f"pennies {finals['matching_pennies'][0]:.2e} rps {finals['rps'][0]:.2e} "
           f"kuhn {finals['kuhn_nfg'][0]:.2e} value {finals['kuhn_nfg'][1]:.6f} (target {KUHN_VALUE:.6f}) "
           f"time {elapsed:.0f}s")
    assert ok


def test_criterion_3_nashpg_table(capsys):
    start = time.time()
    kuhn_02 = [training_run("kuhn", 0.2, s).final["exploitability"] for s in SEEDS]
    kuhn_01 = [training_run("kuhn", 0.1, s).final["exploitability"] for s in SEEDS]
    leduc_02 = [training_run("leduc", 0.2, s).final["exploitability"] for s in SEEDS]
    elapsed = time.time() - start
    m02, m01, ml = np.mean(kuhn_02), np.mean(kuhn_01), np.mean(leduc_02)
    checks = {"kuhn<=0.02": m02 <= 0.02, "ordering": m02 <= m01, "leduc<=0.05": ml <= 0.05, "time": elapsed < 7200}
    ok = all(checks.values())
    report(capsys, 3, ok,
           f"kuhn a=0.2 {m02:.4f} ± {np.std(kuhn_02):.4f}, a=0.1 {m01:.4f} ± {np.std(kuhn_01):.4f}, "
           f"leduc a=0.2 {ml:.4f} ± {np.std(leduc_02):.4f}, time {elapsed:.0f}s "
           f"failed={[k for k, v in checks.items() if not v]}")
    assert ok


def test_criterion_4_anneal_instability(capsys):
    anneal = np.array([training_run("kuhn", 0.2, s, anneal=True).column("exploitability") for s in SEEDS])
    nashpg = np.array([training_run("kuhn", 0.2, s).column("exploitability") for s in SEEDS])
    ratios = []
    for curve in anneal:
        late, best = final_tenth(curve)
        ratios.append(late / best)
    diverging = sum(r > 1.5 for r in ratios)
    late, best = final_tenth(nashpg.mean(axis=0))
    nashpg_ratio = late / best
    ok = diverging >= 3 and nashpg_ratio <= 1.2
    report(capsys, 4, ok,
           f"anneal final-10%/min per seed {np.round(ratios, 2).tolist()} ({diverging}/4 > 1.5), "
           f"nashpg seed-mean ratio {nashpg_ratio:.3f} (<= 1.2 required)")
    assert ok


def test_criterion_5_gradient_estimators(capsys):
    game = kuhn_game()
    rng = np.random.default_rng(3)
    policy = SoftmaxPolicy(game, rng.normal(scale=0.5, size=(game.num_infosets, game.max_actions)))
    reference = SoftmaxPolicy(game, rng.normal(scale=0.5, size=(game.num_infosets, game.max_actions)))
    batch = sample_trajectories(game, policy, 10**5, seed=5)
    probs = policy.probs()
    reach = game.reach(probs)
    worst_pg, worst_kl, checked = 1.0, 1.0, 0
    overall = []
    for p in (0, 1):
        pg_est = estimate_policy_gradient(batch, p, policy)
        pg_exact = exact_logit_gradient(game, policy, p)
        kl_est = estimate_kl_gradient(batch, p, policy, reference)
        dec = np.nonzero(game.player == p)[0]
        w = np.bincount(game.infoset[dec], weights=reach[dec], minlength=game.num_infosets)
        kl_exact = (w / w.sum())[:, None] * kl_gradient_rows(probs, reference.probs(), game.action_mask)
        for est, exact in ((pg_est, pg_exact), (kl_est, kl_exact)):
            overall.append(float(est.ravel() @ exact.ravel() / (np.linalg.norm(est) * np.linalg.norm(exact))))
        for I in np.nonzero(batch.visit_counts(p) >= 500)[0]:
            checked += 1
            for est, exact, key in ((pg_est[I], pg_exact[I], "pg"), (kl_est[I], kl_exact[I], "kl")):
                cos = est @ exact / (np.linalg.norm(est) * np.linalg.norm(exact))
                if key == "pg":
                    worst_pg = min(worst_pg, cos)
                else:
                    worst_kl = min(worst_kl, cos)
    # analytic KL gradient against central differences on single-infoset cases
    worst_fd = 0.0
    for k in (2, 3, 4):
        mask = np.ones((1, k), dtype=bool)
        for _ in range(20):
            theta, ref = rng.normal(size=k), rng.dirichlet(np.ones(k))

            def kl(t):
                q = np.exp(t - t.max())
                return kl_divergence_rows((q / q.sum())[None], ref[None], mask)[0]

            q = np.exp(theta - theta.max())
            q /= q.sum()
            h = 1e-5
            fd = np.array([(kl(theta + h * e) - kl(theta - h * e)) / (2 * h) for e in np.eye(k)])
            worst_fd = max(worst_fd, np.abs(kl_gradient_rows(q[None], ref[None], mask)[0] - fd).max())
    ok = checked > 0 and worst_pg > 0.95 and worst_kl > 0.95 and worst_fd < 1e-6
    report(capsys, 5, ok,
           f"{checked} infosets with >=500 visits, min cosine REINFORCE {worst_pg:.4f}, KL {worst_kl:.4f} "
           f"(whole-gradient cosines {np.round(overall, 4).tolist()}); "
           f"max |analytic - central difference| {worst_fd:.1e}")
    assert ok


def test_criterion_6_tournament(capsys):
    game = kuhn_game()
    spot = elo_update(EloEntry("a"), EloEntry("b"), 1.0, 32)
    spot_ok = (spot[0].rating, spot[1].rating) == (1516.0, 1484.0)
    identities_ok = (expected_score(1500, 1500) == 0.5
                     and all(expected_score(a, b) + expected_score(b, a) == pytest.approx(1.0, abs=1e-15)
                             for a, b in ((1500, 1900), (1200, 1850.5), (2400, 800))))
    run = training_run("kuhn", 0.2, 0)
    n = len(run.snapshots)
    fractions = (0.25, 0.5, 0.75, 1.0)
    picks = [int(round(f * (n - 1))) for f in fractions]
    entries = {f"{int(f * 100)}%": SoftmaxPolicy(game, run.snapshots[i]).probs() for f, i in zip(fractions, picks)}
    expl = [exploitability(game, p) for p in entries.values()]
    rhos, drift = [], 0.0
    for seed in SEEDS:
        res = swiss_tournament(game, entries, TournamentConfig(seed=seed))
        # replay the history and check the rating total after every round
        current = {k: 1500.0 for k in entries}
        for row in res.history:
            current[row["id_a"]], current[row["id_b"]] = row["rating_a_after"], row["rating_b_after"]
            drift = max(drift, abs(sum(current.values()) - 1500.0 * len(entries)))
        ratings = res.ratings()
        assert ratings == pytest.approx(current)
        rhos.append(spearmanr(np.arange(len(entries)), [ratings[k] for k in entries])[0])
    positive = sum(r > 0 for r in rhos)
    ok = spot_ok and identities_ok and drift <= 1e-9 and positive >= 3
    report(capsys, 6, ok,
           f"Elo spot check {spot_ok}, identities {identities_ok}, rating-sum drift {drift:.1e}; "
           f"checkpoint exploitability {np.round(expl, 4).tolist()}, Spearman per tournament seed "
           f"{np.round(rhos, 2).tolist()} ({positive}/4 > 0)")
    assert ok
