"""Acceptance gate: one test per stated criterion, each emitting a
single [PASS]/[FAIL] line with the measured values behind the verdict.

The statistical criteria consume full-scale batches (2000 episodes x 5
repeats per configuration). Those metric tables are cached under
.acceptance_cache keyed by a hash of the package sources and the exact
config, so re-running the gate on unchanged code is instant while any
source change invalidates every cached table.
"""

import hashlib
from pathlib import Path

import numpy as np
import pytest

import ipdsim
from ipdsim.config import PLAY_HP, PUNISH_HP, SELECT_HP, SimulationConfig
from ipdsim.dqn import QNetwork, epsilon_at, td_gradients
from ipdsim.game import (
    Action,
    Mode,
    PAYOFF_TABLE,
    PunishDecision,
    RewardScheme,
    payoff,
    play_reputation_delta,
    punishment_deltas,
)
from ipdsim.metrics import METRIC_NAMES, metric_table
from ipdsim.orchestrator import Simulation, build_models, pair_agents, run_simulation
from ipdsim.runio import read_raw_csv, write_raw_csv

from test_dqn import fd_gradient, make_batch

EPISODES = 2000
REPEATS = 5
WINDOW = 100
MAIN_MODES = (Mode.TPP_S, Mode.TPP, Mode.DP_S, Mode.DP, Mode.TPPDP_S, Mode.TPPDP)
SELECTION_MODES = (Mode.TPP_S, Mode.DP_S, Mode.TPPDP_S)

CACHE_ROOT = Path(__file__).parent / ".acceptance_cache"


def _fingerprint() -> str:
    root = Path(ipdsim.__file__).parent
    digest = hashlib.sha256()
    for path in sorted(root.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


def cached_table(cfg: SimulationConfig, key: str) -> np.ndarray:
    path = CACHE_ROOT / _fingerprint() / f"{key}.csv"
    if path.exists():
        return read_raw_csv(path).table
    table = metric_table(run_simulation(cfg).counts)
    path.parent.mkdir(parents=True, exist_ok=True)
    repeat = cfg.spawn_key[1] if len(cfg.spawn_key) > 1 else 0
    write_raw_csv(path, table, cfg, repeat)
    return table


def final_mean(table: np.ndarray, metric: str) -> float:
    """Mean of a metric over the last rolling window, nulls excluded."""
    col = table[-WINDOW:, METRIC_NAMES.index(metric)]
    finite = col[np.isfinite(col)]
    return float(finite.mean()) if finite.size else float("nan")


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


# ------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def main_six():
    batch = {}
    for i, mode in enumerate(MAIN_MODES):
        batch[mode] = [
            cached_table(
                SimulationConfig(mode=mode, episodes=EPISODES, seed=0).with_repeat(i, r),
                f"main_{mode.value}_r{r}")
            for r in range(REPEATS)
        ]
    return batch


@pytest.fixture(scope="module")
def scheme1_six():
    batch = {}
    for i, mode in enumerate(MAIN_MODES):
        batch[mode] = [
            cached_table(
                SimulationConfig(mode=mode, scheme=RewardScheme.SCHEME1,
                                 episodes=EPISODES, seed=0).with_repeat(i, r),
                f"s1_{mode.value}_r{r}")
            for r in range(REPEATS)
        ]
    return batch


@pytest.fixture(scope="module")
def none_runs():
    return [
        cached_table(
            SimulationConfig(mode=Mode.NONE, episodes=EPISODES, seed=0).with_repeat(0, r),
            f"none_r{r}")
        for r in range(REPEATS)
    ]


@pytest.fixture(scope="module")
def pop_runs(main_six):
    batch = {(Mode.TPP_S, 5): main_six[Mode.TPP_S], (Mode.DP_S, 5): main_six[Mode.DP_S]}
    index = 0
    for mode in (Mode.TPP_S, Mode.DP_S):
        for n in (10, 15):
            batch[(mode, n)] = [
                cached_table(
                    SimulationConfig(mode=mode, pop_size=n, episodes=EPISODES,
                                     seed=0).with_repeat(index, r),
                    f"pop_{mode.value}_n{n:02d}_r{r}")
                for r in range(REPEATS)
            ]
            index += 1
    return batch


# ------------------------------------------------------------- criteria


def test_criterion_exact_unit_values():
    problems = []
    if PAYOFF_TABLE.tolist() != [[3, 0], [4, 1]]:
        problems.append(f"payoff table {PAYOFF_TABLE.tolist()}")
    expected_payoffs = {
        (Action.COOPERATE, Action.COOPERATE): (3, 3),
        (Action.COOPERATE, Action.DEFECT): (0, 4),
        (Action.DEFECT, Action.COOPERATE): (4, 0),
        (Action.DEFECT, Action.DEFECT): (1, 1),
    }
    for pair, want in expected_payoffs.items():
        if payoff(*pair) != want:
            problems.append(f"payoff{pair} = {payoff(*pair)} != {want}")
    if play_reputation_delta(Action.COOPERATE) != 1:
        problems.append("cooperate rep delta != +1")
    if play_reputation_delta(Action.DEFECT) != -1:
        problems.append("defect rep delta != -1")
    for scheme in RewardScheme:
        just = punishment_deltas(scheme, PunishDecision.PUNISH, Action.DEFECT)
        unjust = punishment_deltas(scheme, PunishDecision.PUNISH, Action.COOPERATE)
        if just[2] != 2 or unjust[2] != -3:
            problems.append(f"{scheme} punisher rep deltas {just[2]}/{unjust[2]}")
        if unjust[1] != -3 or just[1] != -3:
            problems.append(f"{scheme} punished delta != -3")
    net1 = punishment_deltas(RewardScheme.SCHEME1, PunishDecision.PUNISH, Action.DEFECT)[0]
    net2 = punishment_deltas(RewardScheme.SCHEME2, PunishDecision.PUNISH, Action.DEFECT)[0]
    if net1 != -3:
        problems.append(f"scheme1 net just delta {net1} != -3")
    if net2 != 2:
        problems.append(f"scheme2 net just delta {net2} != +2")
    for hp, want_min in ((SELECT_HP, 0.0001), (PLAY_HP, 0.01), (PUNISH_HP, 0.2)):
        schedule = hp.schedule(EPISODES)
        if epsilon_at(schedule, 0) != 0.8889:
            problems.append(f"eps at episode 0 is {epsilon_at(schedule, 0)}")
        if epsilon_at(schedule, EPISODES - 1) != want_min:
            problems.append(f"eps floor {epsilon_at(schedule, EPISODES - 1)} != {want_min}")
    _report("exact unit values", not problems,
            "payoffs, reputation deltas, net punisher deltas, eps endpoints all exact"
            if not problems else "; ".join(problems))


def test_criterion_gradient_check():
    # central differences are a valid oracle only where the loss is
    # differentiable: resample any draw whose hidden preactivations sit
    # within the perturbation radius of the ReLU hinge
    rng = np.random.default_rng(20240814)
    worst = 0.0
    trials = 0
    while trials < 100:
        net = QNetwork.init(rng, 4, 8, 2)
        target = QNetwork.init(rng, 4, 8, 2)
        gamma = float(rng.choice([0.0, 0.9]))
        batch = make_batch(rng, 1, 7, 4, 2)
        z = batch.s[0] @ net.W1[0] + net.b1[0]
        if np.abs(z).min() < 1e-4:
            continue
        trials += 1
        _, grads = td_gradients(net, target, batch, gamma)
        fd = fd_gradient(net, target, batch, gamma)
        for g_ana, g_num in zip(grads, fd):
            denom = np.maximum(np.abs(g_ana) + np.abs(g_num), 1e-8)
            worst = max(worst, float((np.abs(g_ana - g_num) / denom).max()))
    _report("gradient check", worst <= 1e-4,
            f"worst relative error {worst:.3e} over 100 random 4->8->2 nets")


def test_criterion_structural_properties():
    problems = []

    # 10^5 sampled pairings, both pairing code paths, no self-partner
    cfg = SimulationConfig(mode=Mode.NONE, episodes=1)
    models = build_models(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(7)
    selectors = np.arange(cfg.pop_size)
    for _ in range(16000):
        partners = pair_agents(cfg, models, np.zeros(5, np.int64), 0, rng)
        if np.any(partners == selectors):
            problems.append("self-pairing in random mode")
            break
    sel_cfg = SimulationConfig(mode=Mode.TPP_S, episodes=1)
    sel_models = build_models(sel_cfg, rng)
    reps = np.array([3, -1, 0, 5, -2], dtype=np.int64)
    for episode in range(4000):
        partners = pair_agents(sel_cfg, sel_models, reps, episode % 2, rng)
        if np.any(partners == selectors):
            problems.append("self-pairing in selection mode")
            break

    # logged runs: judge disjointness, per-pairing opportunity counts,
    # and both accounting identities, every episode
    per_pairing = {Mode.DP: 2, Mode.TPP: 2, Mode.TPPDP_S: 4, Mode.NONE: 0}
    for mode, want in per_pairing.items():
        cfg = SimulationConfig(mode=mode, episodes=300, seed=1)
        result = Simulation(cfg, collect_logs=True).run()
        n = cfg.pop_size
        prev_rep_total = 0.0
        for log in result.logs:
            seat_agent = np.concatenate([np.arange(n), log.partners])
            reward = 0.0
            rep_total = float(log.rep_before.sum())
            for rnd in log.rounds:
                per_seat = np.bincount(rnd.target_seat, minlength=2 * n)
                pair_counts = per_seat[:n] + per_seat[n:]
                if rnd.target_seat.size and not np.all(pair_counts == want):
                    problems.append(f"{mode.value}: opportunity counts {pair_counts}")
                if want == 0 and rnd.target_seat.size:
                    problems.append(f"{mode.value}: unexpected assignments")
                tp = rnd.third_party
                if tp.size and tp.any():
                    judged = seat_agent[rnd.target_seat[tp]]
                    mates = seat_agent[(rnd.target_seat[tp] + n) % (2 * n)]
                    if np.any(rnd.punisher[tp] == judged) or np.any(rnd.punisher[tp] == mates):
                        problems.append(f"{mode.value}: third party inside pair")
                reward += float(rnd.payoffs.sum()) + float(rnd.punisher_rewards.sum()) \
                    - 3.0 * float(rnd.punished_hits.sum())
                rep_total += float(rnd.rep_delta.sum())
            e = log.episode
            if result.counts.reward_total[e] != reward:
                problems.append(f"{mode.value} ep {e}: reward identity "
                                f"{result.counts.reward_total[e]} != {reward}")
            if result.counts.reputation_total[e] != rep_total:
                problems.append(f"{mode.value} ep {e}: reputation identity")
            if e > 0 and float(log.rep_before.sum()) != prev_rep_total:
                problems.append(f"{mode.value} ep {e}: reputation not cumulative")
            prev_rep_total = float(log.rep_after.sum())
        if problems:
            break
    _report("structural properties", not problems,
            "pairing, judge disjointness, opportunity counts, accounting identities"
            if not problems else "; ".join(problems[:3]))


def test_criterion_determinism(tmp_path):
    cfg = SimulationConfig(mode=Mode.TPPDP_S, episodes=200, seed=123).with_repeat(0, 0)
    paths = []
    for tag in ("a", "b"):
        table = metric_table(run_simulation(cfg).counts)
        path = tmp_path / f"{tag}.csv"
        write_raw_csv(path, table, cfg, 0)
        paths.append(path)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    _report("determinism", same,
            "identical seed gives byte-identical 200-episode metrics CSV")


def test_criterion_scheme2_convergence(main_six):
    details = []
    ok = True
    finals = {mode: [final_mean(t, "cooperation_pct") for t in tables]
              for mode, tables in main_six.items()}
    for mode in MAIN_MODES:
        hits = sum(f >= 60.0 for f in finals[mode])
        details.append(f"{mode.value} {np.mean(finals[mode]):.1f}% ({hits}/5)")
        if hits < 4:
            ok = False
    for combined in (Mode.TPPDP, Mode.TPPDP_S):
        for direct in (Mode.DP, Mode.DP_S):
            if np.mean(finals[combined]) < np.mean(finals[direct]):
                ok = False
                details.append(f"{combined.value} < {direct.value}")
    _report("scheme 2 convergence", ok, "; ".join(details))


def test_criterion_reward_ordering(main_six):
    finals = {mode: [final_mean(t, "societal_reward") for t in tables]
              for mode, tables in main_six.items()}
    third_party = (Mode.TPP, Mode.TPP_S, Mode.TPPDP, Mode.TPPDP_S)
    wins = 0
    for r in range(REPEATS):
        tpp_max = max(finals[m][r] for m in third_party)
        if finals[Mode.DP][r] > tpp_max and finals[Mode.DP_S][r] > tpp_max:
            wins += 1
    detail = ("direct-only reward exceeds every third-party variant in "
              f"{wins}/{REPEATS} repeats; means "
              + ", ".join(f"{m.value} {np.mean(finals[m]):.0f}" for m in MAIN_MODES))
    _report("societal reward ordering", wins >= 3, detail)


def test_criterion_scheme1_failure(scheme1_six):
    details = []
    ok = True
    for mode, tables in scheme1_six.items():
        coop = [final_mean(t, "cooperation_pct") for t in tables]
        pun = [final_mean(t, "punishment_pct") for t in tables]
        hits = sum(c < 30.0 and p < 10.0 for c, p in zip(coop, pun))
        details.append(f"{mode.value} coop {np.mean(coop):.1f}% pun "
                       f"{np.mean(pun):.1f}% ({hits}/5)")
        if hits < 3:
            ok = False
    _report("scheme 1 failure", ok, "; ".join(details))


def test_criterion_baseline_collapse(none_runs):
    finals = [final_mean(t, "cooperation_pct") for t in none_runs]
    hits = sum(f < 10.0 for f in finals)
    _report("baseline collapse", hits >= 3,
            f"NONE final cooperation {np.mean(finals):.1f}% ({hits}/5 below 10%)")


def test_criterion_just_punishment(main_six):
    just = {mode: [final_mean(t, "just_ratio_pct") for t in tables]
            for mode, tables in main_six.items()}
    high = sum(just[Mode.DP][r] >= 95.0 and just[Mode.DP_S][r] >= 95.0
               for r in range(REPEATS))
    below = sum(just[Mode.TPP][r] < just[Mode.DP][r] for r in range(REPEATS))
    ok = high >= 3 and below >= 3
    _report("just punishment dynamics", ok,
            f"DP {np.mean(just[Mode.DP]):.1f}%, DP-S {np.mean(just[Mode.DP_S]):.1f}% "
            f"(>=95 in {high}/5); TPP {np.mean(just[Mode.TPP]):.1f}% below DP in "
            f"{below}/5")


def test_criterion_selection_learning(main_six):
    details = []
    ok = True
    for mode in SELECTION_MODES:
        finals = [final_mean(t, "cooperator_selection_pct") for t in main_six[mode]]
        mean = float(np.mean(finals))
        details.append(f"{mode.value} {mean:.1f}%")
        if mean < 90.0:
            ok = False
    _report("selection learning", ok, "cooperator selection " + ", ".join(details))


def test_criterion_population_robustness(pop_runs):
    details = []
    ok = True
    for (mode, n), tables in pop_runs.items():
        finals = [final_mean(t, "cooperation_pct") for t in tables]
        hits = sum(f >= 60.0 for f in finals)
        details.append(f"{mode.value} n={n} {np.mean(finals):.1f}% ({hits}/5)")
        if hits < 3:
            ok = False
    _report("population size robustness", ok, "; ".join(details))
