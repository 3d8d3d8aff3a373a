"""Acceptance suite: every criterion prints one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The scaled comparison
criteria (7-10) use the desk-scale scenario: 60 UEs, 15 s, one channel seed,
with every other parameter at its configuration default.
"""

import hashlib
import time
from contextlib import contextmanager

import numpy as np
import pytest

from rembm.channel import build_codebook, generate_shadowing
from rembm.cli import main
from rembm.config import RunConfig
from rembm.mdp import (
    RewardParams,
    State,
    TabularMdp,
    policy_evaluation,
    policy_iteration,
    reward,
    solve_policy_iteration,
)
from rembm.rem import Grid, Rem
from rembm.ric import A1PolicyMessage, BmXapp
from rembm.sim import BaselineController, populate_rem, rsrp_cdf, run

import scipy.sparse as sp

CHANNEL_SEED = 1
TRAFFIC_SEED = 1
DESK_UES = 60
REM_PASSES = 100


@contextmanager
def criterion(num, description):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {num:2d} FAIL  {description}")
        raise
    elapsed = time.perf_counter() - start
    print(f"ACCEPTANCE {num:2d} PASS  {description}  [{elapsed:.1f}s]")


@pytest.fixture(scope="module")
def desk():
    """Shared desk-scale pipeline: channel, REM, trained policies, five runs."""
    cfg = RunConfig.defaults()
    cfg.values["scenario"]["n_ues"] = DESK_UES
    chan = cfg.build_channel(CHANNEL_SEED)
    grid = cfg.build_grid()
    scenario = cfg.build_scenario(TRAFFIC_SEED)
    rem = populate_rem(scenario, chan, grid, n_passes=REM_PASSES, seed=CHANNEL_SEED)
    params = {beta: RewardParams(beta=beta, delta_th_db=scenario.delta_th_db)
              for beta in (1.0, 0.0)}
    policies = {beta: policy_iteration(rem, params[beta],
                                       gamma=cfg.get("solver", "gamma"),
                                       tol=cfg.get("solver", "tolerance"),
                                       t_b_ms=scenario.ssb_period_ms)
                for beta in (1.0, 0.0)}
    runs = {}
    for delta_ho in (3.0, 5.0, 7.0):
        runs[f"baseline{delta_ho:g}"] = run(
            scenario, BaselineController(delta_ho), chan, delta_ho_db=delta_ho)
    for beta, label in ((1.0, "br-min"), (0.0, "rsrp-max")):
        xapp = BmXapp(grid, delta_th_db=scenario.delta_th_db,
                      fallback_delta_ho_db=cfg.get("solver", "fallback_delta_ho_db"))
        xapp.deploy(A1PolicyMessage(policies[beta].to_bytes(), beta,
                                    cfg.get("solver", "gamma"),
                                    policies[beta].rem_checksum), rem)
        runs[label] = run(scenario, xapp, chan, label=label, beta=beta)
    return {"config": cfg, "grid": grid, "rem": rem, "policies": policies,
            "runs": runs, "scenario": scenario}


def random_dense_mdp(rng, n_states, n_actions):
    rewards = rng.uniform(-1.0, 1.0, (n_states, n_actions))
    probs = rng.exponential(1.0, (n_states, n_actions, n_states))
    probs /= probs.sum(axis=2, keepdims=True)
    return rewards, probs


def exact_values(rewards, probs, policy, gamma):
    n = rewards.shape[0]
    p_pi = probs[np.arange(n), policy, :]
    r_pi = rewards[np.arange(n), policy]
    return np.linalg.solve(np.eye(n) - gamma * p_pi, r_pi)


def best_enumerated_values(rewards, probs, gamma):
    """Batched linear solve over every deterministic policy."""
    n, n_a = rewards.shape
    grids = np.meshgrid(*[np.arange(n_a)] * n, indexing="ij")
    policies = np.stack([g.ravel() for g in grids], axis=1)  # (A^n, n)
    p_pi = probs[np.arange(n)[None, :], policies, :]         # (A^n, n, n)
    r_pi = rewards[np.arange(n)[None, :], policies]          # (A^n, n)
    systems = np.eye(n)[None] - gamma * p_pi
    values = np.linalg.solve(systems, r_pi[..., None])[..., 0]
    return values.max(axis=0)


def test_criterion_1_policy_iteration_matches_enumeration():
    with criterion(1, "PI equals best enumerated policy on 60 random MDPs"):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        gamma = 0.9
        for instance in range(60):
            n = int(rng.integers(2, 9))       # |S| <= 8
            n_a = int(rng.integers(2, 4))     # |A| <= 3
            rewards, probs = random_dense_mdp(rng, n, n_a)
            trans = sp.csr_matrix(np.hstack([probs.reshape(n * n_a, n),
                                             np.zeros((n * n_a, 1))]))
            mdp = TabularMdp(rewards=rewards, trans=trans)
            policy, _, _ = solve_policy_iteration(mdp, gamma, tol=1e-9)
            got = exact_values(rewards, probs, policy, gamma)
            best = best_enumerated_values(rewards, probs, gamma)
            assert np.all(np.abs(got - best) < 1e-6), f"instance {instance}"
        assert time.perf_counter() - start < 10.0


def test_criterion_2_reward_conformance():
    with criterion(2, "reward matches an independent oracle on 10^4 cases"):
        start = time.perf_counter()

        def oracle(means, source, action, beta, delta_th):
            best = max(means)
            if means[source] < best - delta_th:
                f_br = -1000.0
            elif action != source:
                f_br = -1.0
            else:
                f_br = 0.0
            f_rsrp = 0.0 if action == means.index(best) else -1000.0
            return beta * f_br + (1.0 - beta) * f_rsrp

        rng = np.random.default_rng(99)
        n_beams = 6
        tiles = [(1, iy) for iy in range(5)]
        rem = Rem(Grid(tile_size_m=2.0, n_x=4, n_y=5), n_beams=n_beams)
        for tile in tiles:
            for b in range(n_beams):
                rem.rsrp.ingest_report(tile, b, float(rng.uniform(-110.0, -60.0)))
            rem.mobility.observe_transition(tile, 25.0, 0.0, 25.0, 0.0)
        for _ in range(10_000):
            tile = tiles[int(rng.integers(len(tiles)))]
            source = int(rng.integers(n_beams))
            action = int(rng.integers(n_beams))
            beta = float(rng.uniform(0.0, 1.0))
            means = [rem.rsrp.query_rsrp(tile, b) for b in range(n_beams)]
            state = State(tile, 25.0, 0.0, source)
            assert reward(state, action, rem, RewardParams(beta=beta)) == \
                oracle(means, source, action, beta, 8.0)
        assert time.perf_counter() - start < 1.0


def test_criterion_3_rsrp_max_policy_is_rem_argmax(desk):
    with criterion(3, "beta=0 policy equals REM argmax in 100% of states"):
        rem = desk["rem"]
        policy = desk["policies"][0.0]
        mismatches = sum(
            1 for state, action in policy.actions.items()
            if action != int(np.argmax(rem.rsrp.tile_means(state.tile))))
        assert mismatches == 0
        assert len(policy.actions) > 0


def test_criterion_4_shadowing_statistics(desk):
    with criterion(4, "shadowing autocorr at 10 m = e^-1 +/- 0.05, std sigma +/- 0.5"):
        cfg = desk["config"]
        sigma = cfg.get("channel", "shadowing_sigma_db")
        field = generate_shadowing(seed=CHANNEL_SEED, area=(500.0, 500.0),
                                   resolution=1.0, d_corr=10.0, sigma=sigma,
                                   n_beams=cfg.get("channel", "n_beams"))
        stds = field.values_db.std(axis=(1, 2))
        assert np.all(np.abs(stds - sigma) <= 0.5)
        lags = []
        for b in range(field.n_beams):
            for v in (field.values_db[b], field.values_db[b].T):
                a = v[:-10, :].ravel()
                c = v[10:, :].ravel()
                a = a - a.mean()
                c = c - c.mean()
                lags.append((a * c).mean() / (a.std() * c.std()))
        assert np.mean(lags) == pytest.approx(np.exp(-1.0), abs=0.05)


def test_criterion_5_codebook_orthonormality(desk):
    with criterion(5, "all beam pairs orthogonal < 1e-9, unit norm +/- 1e-12"):
        cfg = desk["config"]
        codebook = build_codebook(cfg.array_config(), cfg.get("channel", "n_beams"))
        gram = codebook.weights @ codebook.weights.conj().T
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() < 1e-9
        assert np.abs(np.linalg.norm(codebook.weights, axis=1) - 1.0).max() < 1e-12


def test_criterion_6_pipeline_determinism(tmp_path):
    with criterion(6, "two identical-seed pipeline runs give identical kpi.csv"):
        cfg_text = ("[scenario]\nn_ues = 12\nduration_s = 5\n\n"
                    "[seeds]\nchannel_seed = 4\ntraffic_seed = 5\n")
        digests = []
        for attempt in ("a", "b"):
            root = tmp_path / attempt
            root.mkdir()
            cfg_path = root / "run.ini"
            cfg_path.write_text(cfg_text)
            assert main(["build-rem", "--config", str(cfg_path), "--passes", "10",
                         "--out", str(root / "rem.txt")]) == 0
            assert main(["train", "--config", str(cfg_path),
                         "--rem", str(root / "rem.txt"), "--beta", "1",
                         "--out", str(root / "p.pol")]) == 0
            assert main(["simulate", "--config", str(cfg_path),
                         "--controller", "policy", "--policy", str(root / "p.pol"),
                         "--out", str(root / "out")]) == 0
            digests.append(hashlib.sha256(
                (root / "out" / "kpi.csv").read_bytes()).hexdigest())
        assert digests[0] == digests[1]


def test_criterion_7_brmin_reduces_reselections(desk):
    with criterion(7, "BR-MIN reselection rate >= 15% below baseline 3 dB"):
        brmin = desk["runs"]["br-min"].reselections_per_user_s
        base3 = desk["runs"]["baseline3"].reselections_per_user_s
        assert brmin <= 0.85 * base3, f"br-min {brmin:.3f} vs baseline3 {base3:.3f}"


def test_criterion_8_rlf_ordering(desk):
    with criterion(8, "baseline RLF > 1.3x BR-MIN at 3/5/7 dB and non-decreasing"):
        runs = desk["runs"]
        brmin = runs["br-min"].rlf_per_user_s
        rates = [runs[f"baseline{d:g}"].rlf_per_user_s for d in (3.0, 5.0, 7.0)]
        assert brmin > 0
        for delta_ho, rate in zip((3.0, 5.0, 7.0), rates):
            assert rate / brmin > 1.3, \
                f"ratio at {delta_ho:g} dB = {rate / brmin:.2f}"
        assert rates[0] <= rates[1] <= rates[2], f"not monotone: {rates}"


def test_criterion_9_cell_edge_rsrp(desk):
    with criterion(9, "RSRP-MAX 10th percentile >= baseline 3 dB + 1 dB"):
        p10_max = rsrp_cdf(desk["runs"]["rsrp-max"], 0.10)
        p10_base = rsrp_cdf(desk["runs"]["baseline3"], 0.10)
        assert p10_max > p10_base
        assert p10_max - p10_base >= 1.0, f"gap {p10_max - p10_base:.2f} dB"


def test_criterion_10_reselection_ordering(desk):
    with criterion(10, "RSRP-MAX reselects more than BR-MIN"):
        rs_max = desk["runs"]["rsrp-max"].reselections_per_user_s
        rs_min = desk["runs"]["br-min"].reselections_per_user_s
        assert rs_max > rs_min, f"rsrp-max {rs_max:.3f} vs br-min {rs_min:.3f}"
