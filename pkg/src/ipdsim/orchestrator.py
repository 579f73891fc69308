"""Episode pipeline for one simulation: partner pairing, dilemma rounds,
punishment assignment and resolution, transition construction, and the
training cadence.

Every stochastic draw goes through a single numpy Generator in a frozen
order, so a (config, seed, spawn_key) triple fully determines every output
byte. The population's models are stacked along a leading agent axis (see
dqn.Learner); each round is a handful of vectorized array ops over the 2N
seats of the N pairings.

Seats: pairing k seats its selector (agent k) at index k and its chosen
partner at index N+k. An agent selected by several pairings occupies
several seats and generates experiences for each; all of them feed its
single set of models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agents import RepSources, condition_reputations
from .config import SimulationConfig
from .dqn import Learner, NumericalFailure
from .game import Action, Mode, PAYOFF_TABLE
from .metrics import EpisodeCounts


@dataclass
class PopulationModels:
    """The population's stacked ability models; select and punish are None
    when the mechanism config disables them."""

    select: Learner | None
    play: Learner
    punish: Learner | None


def build_models(cfg: SimulationConfig, rng: np.random.Generator) -> PopulationModels:
    """Initialize the population's model stacks. Construction order
    (select, play, punish) is part of the determinism contract."""
    n = cfg.pop_size
    enc = cfg.encoding
    select = None
    if cfg.mode.selection_active:
        hp = cfg.select_hp
        select = Learner(rng, n, n, cfg.hidden_dim, n,
                         hp.schedule(cfg.episodes), hp.trainer(), hp.buffer_capacity)
    hp = cfg.play_hp
    play = Learner(rng, n, enc.play_dim, cfg.hidden_dim, 2,
                   hp.schedule(cfg.episodes), hp.trainer(), hp.buffer_capacity)
    punish = None
    if cfg.mode.punishment_active:
        hp = cfg.punish_hp
        punish = Learner(rng, n, enc.punish_dim, cfg.hidden_dim, 2,
                         hp.schedule(cfg.episodes), hp.trainer(), hp.buffer_capacity)
    return PopulationModels(select=select, play=play, punish=punish)


def pair_agents(
    cfg: SimulationConfig,
    models: PopulationModels,
    reputations: np.ndarray,
    episode: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stage 1: one partner index per selector agent, shape (N,).

    Selection modes ask each agent's select model (epsilon-greedy over the
    shared reputation vector, own index masked); other modes draw
    uniformly from the N-1 other agents. Nothing restricts how many
    pairings pick the same partner.
    """
    n = cfg.pop_size
    selectors = np.arange(n)
    if cfg.mode.selection_active:
        state = condition_reputations(cfg.encoding, reputations, episode)
        states = np.tile(state, (n, 1))
        return models.select.decide_rows(selectors, states, episode, rng, forbid=selectors)
    draw = rng.integers(0, n - 1, size=n)
    return draw + (draw >= selectors)


@dataclass
class PunishmentAssignments:
    """One round's judge list: who judges which seat, and whether the
    assignment is third-party (judge outside the pair) or direct (judge is
    the seat's own partner)."""

    target_seat: np.ndarray
    punisher: np.ndarray
    third_party: np.ndarray

    def __len__(self) -> int:
        return self.target_seat.shape[0]


def _third_party_draws(first: np.ndarray, second: np.ndarray, n: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two distinct uniform draws outside each pair, via index shifting
    past the sorted exclusions."""
    lo = np.minimum(first, second)
    hi = np.maximum(first, second)
    m = first.shape[0]
    p = (rng.random(m) * (n - 2)).astype(np.int64)
    p += p >= lo
    p += p >= hi
    excl = np.sort(np.stack([lo, hi, p]), axis=0)
    k = (rng.random(m) * (n - 3)).astype(np.int64)
    k += k >= excl[0]
    k += k >= excl[1]
    k += k >= excl[2]
    return p, k


def assign_punishers(
    cfg: SimulationConfig,
    partners: np.ndarray,
    rng: np.random.Generator,
) -> PunishmentAssignments:
    """Stage 3 judge list for one round over all pairings.

    Direct modes: each seat is judged by its partner (2 per pairing).
    Third-party modes: distinct judges P and K from outside the pair, P on
    the selector seat and K on the partner seat, resampled every round
    (2 per pairing). Combined modes concatenate both blocks, direct first
    (4 per pairing).
    """
    n = partners.shape[0]
    mode = cfg.mode
    if not mode.punishment_active:
        empty = np.empty(0, dtype=np.int64)
        return PunishmentAssignments(empty, empty.copy(), np.empty(0, dtype=bool))
    seats = np.arange(2 * n)
    blocks_t, blocks_p, blocks_k = [], [], []
    if mode.direct_punishment:
        seat_agent = np.concatenate([np.arange(n), partners])
        blocks_t.append(seats)
        blocks_p.append(seat_agent[(seats + n) % (2 * n)])
        blocks_k.append(np.zeros(2 * n, dtype=bool))
    if mode.third_party_punishment:
        p, k = _third_party_draws(np.arange(n), partners, n, rng)
        blocks_t.append(seats)
        blocks_p.append(np.concatenate([p, k]))
        blocks_k.append(np.ones(2 * n, dtype=bool))
    return PunishmentAssignments(
        target_seat=np.concatenate(blocks_t),
        punisher=np.concatenate(blocks_p),
        third_party=np.concatenate(blocks_k),
    )


@dataclass
class RoundLog:
    """One round's full event record, only kept on log-collecting runs."""

    actions: np.ndarray
    payoffs: np.ndarray
    target_seat: np.ndarray
    punisher: np.ndarray
    third_party: np.ndarray
    decisions: np.ndarray
    just: np.ndarray
    punisher_rewards: np.ndarray
    punished_hits: np.ndarray
    rep_delta: np.ndarray


@dataclass
class EpisodeLog:
    episode: int
    partners: np.ndarray
    rep_before: np.ndarray
    rep_after: np.ndarray
    reward_by_agent: np.ndarray
    rounds: list[RoundLog] = field(default_factory=list)


@dataclass
class SimulationResult:
    config: SimulationConfig
    counts: EpisodeCounts
    snapshot: dict
    logs: list[EpisodeLog] | None = None


class Simulation:
    """Mutable run state for one repeat; `run()` drives all episodes."""

    def __init__(self, cfg: SimulationConfig, collect_logs: bool = False):
        self.cfg = cfg
        self.rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=cfg.spawn_key))
        self.models = build_models(cfg, self.rng)
        n = cfg.pop_size
        self.n = n
        self.reputations = np.zeros(n, dtype=np.int64)
        self.collect_logs = collect_logs
        self.logs: list[EpisodeLog] | None = [] if collect_logs else None
        self.counts = EpisodeCounts.empty(cfg.episodes)

        enc = cfg.encoding
        self.play_rep = enc.rep_in_play_state
        self.punish_rep = enc.rep_in_punish_state
        self.play_rep_source = enc.rep_sources is not RepSources.PUNISH_ONLY
        self.punish_rep_source = enc.rep_sources is not RepSources.PLAY_ONLY

        # per-episode seat layout and reusable round buffers
        self.seat_agent = np.empty(2 * n, dtype=np.int64)
        self.seat_agent[:n] = np.arange(n)
        self.partner_seat = (np.arange(2 * n) + n) % (2 * n)
        self.prev_actions = np.zeros(2 * n, dtype=np.int64)
        self.play_s = np.empty((2 * n, enc.play_dim), dtype=np.float64)
        self.play_s2 = np.empty((2 * n, enc.play_dim), dtype=np.float64)
        if cfg.mode.punishment_active:
            per_round = 4 * n if cfg.mode.direct_punishment and cfg.mode.third_party_punishment \
                else 2 * n
            self.punish_s = np.empty((per_round, enc.punish_dim), dtype=np.float64)
            self.pend_state = np.zeros((n, enc.punish_dim), dtype=np.float64)
            self.pend_action = np.zeros(n, dtype=np.int64)
            self.pend_reward = np.zeros(n, dtype=np.float64)
            self.pend_flag = np.zeros(n, dtype=bool)

        # previous-episode behavior flags for the selection metrics
        self.flag_cooperator = np.zeros(n, dtype=bool)
        self.flag_punisher = np.zeros(n, dtype=bool)
        self.flag_just_punisher = np.zeros(n, dtype=bool)

    # ------------------------------------------------------------ episode

    def run(self) -> SimulationResult:
        try:
            for episode in range(self.cfg.episodes):
                self.run_episode(episode)
        except NumericalFailure as err:
            err.snapshot = self.snapshot()
            raise
        return SimulationResult(config=self.cfg, counts=self.counts,
                                snapshot=self.snapshot(), logs=self.logs)

    def snapshot(self) -> dict:
        out = {"reputations": self.reputations.copy()}
        for name in ("select", "play", "punish"):
            learner = getattr(self.models, name)
            if learner is not None:
                out[name] = learner.snapshot()
        return out

    def run_episode(self, episode: int) -> None:
        cfg = self.cfg
        n = self.n
        rng = self.rng
        partners = pair_agents(cfg, self.models, self.reputations, episode, rng)
        self.seat_agent[n:] = partners
        self.prev_actions[:] = Action.COOPERATE
        self.seats_per_agent = np.bincount(self.seat_agent, minlength=n)

        if cfg.mode.selection_active:
            self.select_state = condition_reputations(cfg.encoding, self.reputations, episode)
            self.select_action = partners

        # selection metrics judge this episode's choices by last episode's behavior
        c = self.counts
        if episode > 0:
            c.selections[episode] = n
            c.coop_selected[episode] = int(self.flag_cooperator[partners].sum())
            c.punisher_selected[episode] = int(self.flag_punisher[partners].sum())
            c.just_punisher_selected[episode] = int(self.flag_just_punisher[partners].sum())

        self.agent_reward = np.zeros(n, dtype=np.float64)
        self.ep_coop_by_agent = np.zeros(n, dtype=np.int64)
        self.ep_pun_opps_by_agent = np.zeros(n, dtype=np.int64)
        self.ep_pun_by_agent = np.zeros(n, dtype=np.int64)
        self.ep_just_by_agent = np.zeros(n, dtype=np.int64)
        if self.logs is not None:
            self.current_log = EpisodeLog(episode=episode, partners=partners.copy(),
                                          rep_before=self.reputations.copy(),
                                          rep_after=None, reward_by_agent=None)

        rounds = cfg.rounds
        for r in range(rounds):
            self.run_round(episode, partners, terminal=(r == rounds - 1))

        self._finish_episode(episode)

    def _finish_episode(self, episode: int) -> None:
        cfg = self.cfg
        n = self.n
        rng = self.rng
        models = self.models

        # flush punish chains: last pending decision of the episode is terminal
        if models.punish is not None:
            self._flush_punish_chains()

        # the selection transition: episode return for the chosen partner,
        # next state is the reputation vector the next pairing will see
        if models.select is not None:
            next_state = condition_reputations(cfg.encoding, self.reputations, episode + 1)
            agents = np.arange(n)
            models.select.buffer.push_rows(
                agents,
                np.tile(self.select_state, (n, 1)),
                self.select_action,
                self.agent_reward,
                np.tile(next_state, (n, 1)),
                np.zeros(n, dtype=np.float64),
            )
            models.select.train_ready(rng)

        c = self.counts
        c.reward_total[episode] = self.agent_reward.sum()
        c.reputation_total[episode] = int(self.reputations.sum())

        plays = self.seats_per_agent * cfg.rounds
        self.flag_cooperator = 2 * self.ep_coop_by_agent > plays
        self.flag_punisher = self.ep_pun_by_agent > 0
        self.flag_just_punisher = 2 * self.ep_just_by_agent > self.ep_pun_opps_by_agent

        if self.logs is not None:
            self.current_log.rep_after = self.reputations.copy()
            self.current_log.reward_by_agent = self.agent_reward.copy()
            self.logs.append(self.current_log)

    # -------------------------------------------------------------- round

    def run_round(self, episode: int, partners: np.ndarray, terminal: bool) -> None:
        cfg = self.cfg
        n = self.n
        rng = self.rng
        models = self.models
        scheme = cfg.scheme
        seat_agent = self.seat_agent
        pseat = self.partner_seat
        rep_in = condition_reputations(cfg.encoding, self.reputations, episode)

        # ---- all decisions first
        s = self.play_s
        self._encode_play(s, self.prev_actions, rep_in)
        actions = models.play.decide_rows(seat_agent, s, episode, rng)

        if models.punish is not None:
            asg = assign_punishers(cfg, partners, rng)
            tgt_agent = seat_agent[asg.target_seat]
            q = self.punish_s
            t_act = actions[asg.target_seat]
            p_act = actions[pseat[asg.target_seat]]
            if self.punish_rep:
                q[:, 0] = rep_in[tgt_agent]
                q[:, 1] = rep_in[seat_agent[pseat[asg.target_seat]]]
                q[:, 2] = t_act
                q[:, 3] = p_act
            else:
                q[:, 0] = t_act
                q[:, 1] = p_act
            decisions = models.punish.decide_rows(asg.punisher, q, episode, rng)
        else:
            asg = None

        # ---- then all deltas
        payoffs = PAYOFF_TABLE[actions, actions[pseat]].astype(np.float64)
        reward_by_agent = np.bincount(seat_agent, weights=payoffs, minlength=n)
        coop_by_agent = np.bincount(seat_agent[actions == Action.COOPERATE], minlength=n)
        rep_delta = np.zeros(n, dtype=np.int64)
        if self.play_rep_source:
            rep_delta += 2 * coop_by_agent - self.seats_per_agent

        seat_hits = np.zeros(2 * n, dtype=np.int64)
        if asg is not None:
            punished = decisions == 1
            just = t_act == Action.DEFECT
            pun_rewards = np.where(
                punished,
                float(scheme.just_bonus) * just - float(scheme.punisher_cost),
                0.0,
            )
            seat_hits = np.bincount(asg.target_seat[punished], minlength=2 * n)
            hit_agents = tgt_agent[punished]
            reward_by_agent -= float(scheme.punished_penalty) * np.bincount(hit_agents, minlength=n)
            reward_by_agent += np.bincount(asg.punisher, weights=pun_rewards, minlength=n)
            if self.punish_rep_source:
                rep_delta += scheme.just_rep_delta * np.bincount(
                    asg.punisher[punished & just], minlength=n)
                rep_delta += scheme.unjust_rep_delta * np.bincount(
                    asg.punisher[punished & ~just], minlength=n)

        self.reputations += rep_delta
        self.agent_reward += reward_by_agent

        # ---- transitions, then train steps
        play_rewards = payoffs - float(scheme.punished_penalty) * seat_hits
        self.prev_actions[:] = actions
        s2 = self.play_s2
        self._encode_play(s2, actions, condition_reputations(cfg.encoding, self.reputations, episode))
        models.play.buffer.push_rows(
            seat_agent, s, actions, play_rewards, s2,
            np.full(2 * n, 1.0 if terminal else 0.0))
        if asg is not None:
            self._chain_punish_transitions(q, decisions, asg.punisher, pun_rewards)

        models.play.train_ready(rng)
        if asg is not None:
            acted = np.bincount(asg.punisher, minlength=n) > 0
            models.punish.train_ready(rng, acted=acted)

        # ---- tallies
        c = self.counts
        c.play_actions[episode] += 2 * n
        c.coop_actions[episode] += int(coop_by_agent.sum())
        self.ep_coop_by_agent += coop_by_agent
        if asg is not None:
            c.punish_opportunities[episode] += len(asg)
            c.punish_count[episode] += int(punished.sum())
            c.just_count[episode] += int((punished & just).sum())
            self.ep_pun_opps_by_agent += np.bincount(asg.punisher, minlength=n)
            self.ep_pun_by_agent += np.bincount(asg.punisher[punished], minlength=n)
            self.ep_just_by_agent += np.bincount(asg.punisher[punished & just], minlength=n)

        if self.logs is not None:
            if asg is not None:
                log = RoundLog(actions.copy(), payoffs.copy(), asg.target_seat.copy(),
                               asg.punisher.copy(), asg.third_party.copy(), decisions.copy(),
                               just.copy(), pun_rewards.copy(), seat_hits.copy(), rep_delta.copy())
            else:
                empty = np.empty(0, dtype=np.int64)
                log = RoundLog(actions.copy(), payoffs.copy(), empty, empty,
                               np.empty(0, dtype=bool), empty, np.empty(0, dtype=bool),
                               np.empty(0, dtype=np.float64), seat_hits.copy(), rep_delta.copy())
            self.current_log.rounds.append(log)

    def _encode_play(self, out: np.ndarray, prev: np.ndarray, rep_in: np.ndarray) -> None:
        seat_agent = self.seat_agent
        pseat = self.partner_seat
        if self.play_rep:
            out[:, 0] = rep_in[seat_agent]
            out[:, 1] = rep_in[seat_agent[pseat]]
            out[:, 2] = prev
            out[:, 3] = prev[pseat]
        else:
            out[:, 0] = prev
            out[:, 1] = prev[pseat]

    def _chain_punish_transitions(self, states: np.ndarray, decisions: np.ndarray,
                                  punishers: np.ndarray, rewards: np.ndarray) -> None:
        """Thread each judge's decisions into its running chain: pending
        decision -> first decision this round -> ... -> last decision this
        round, which becomes the new pending head."""
        buffer = self.models.punish.buffer
        order = np.argsort(punishers, kind="stable")
        ag = punishers[order]
        m = ag.shape[0]
        first = np.ones(m, dtype=bool)
        first[1:] = ag[1:] != ag[:-1]

        first_idx = order[first]
        first_agents = ag[first]
        have = self.pend_flag[first_agents]
        if have.any():
            pa = first_agents[have]
            buffer.push_rows(pa, self.pend_state[pa], self.pend_action[pa],
                             self.pend_reward[pa], states[first_idx[have]],
                             np.zeros(pa.size, dtype=np.float64))

        cont = ~first[1:]
        if cont.any():
            src = order[:-1][cont]
            dst = order[1:][cont]
            buffer.push_rows(punishers[src], states[src], decisions[src],
                             rewards[src], states[dst],
                             np.zeros(src.size, dtype=np.float64))

        last = np.ones(m, dtype=bool)
        last[:-1] = ag[:-1] != ag[1:]
        last_idx = order[last]
        last_agents = ag[last]
        self.pend_state[last_agents] = states[last_idx]
        self.pend_action[last_agents] = decisions[last_idx]
        self.pend_reward[last_agents] = rewards[last_idx]
        self.pend_flag[last_agents] = True

    def _flush_punish_chains(self) -> None:
        """Close every open chain: the pending decision is pushed as a
        terminal transition (next state repeats the stored state; it is
        ignored by training on terminal rows)."""
        open_chains = np.flatnonzero(self.pend_flag)
        if open_chains.size:
            self.models.punish.buffer.push_rows(
                open_chains,
                self.pend_state[open_chains],
                self.pend_action[open_chains],
                self.pend_reward[open_chains],
                self.pend_state[open_chains],
                np.ones(open_chains.size, dtype=np.float64),
            )
        self.pend_flag[:] = False


def run_simulation(cfg: SimulationConfig, collect_logs: bool = False) -> SimulationResult:
    """One full deterministic repeat: all episodes, metrics tallies, and a
    final parameter snapshot. With collect_logs, every round's events are
    recorded for inspection (memory scales with episodes)."""
    return Simulation(cfg, collect_logs=collect_logs).run()
