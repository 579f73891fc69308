"""From-scratch deep Q-learning stack on numpy.

A QNetwork is a single-hidden-layer MLP (ReLU hidden, linear output) whose
parameters carry a leading `count` axis so that the N identically shaped
networks of a population train through one batched code path. count=1 is an
ordinary single network; nothing in the math depends on count. All
parameters and Q-values are float64.

Training is plain SGD on the mean squared TD error with targets
y = r if terminal else r + gamma * max_a' Q_target(s', a').
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class NumericalFailure(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


class _Insufficient:
    """Singleton no-op signal: buffer smaller than the requested batch."""

    def __repr__(self) -> str:  # pragma: no cover
        return "INSUFFICIENT"


INSUFFICIENT = _Insufficient()


# ------------------------------------------------------------- schedules


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear per-episode decay from eps_max to eps_min.

    eps_min is reached at episode decay_fraction * horizon_episodes and
    held constant afterwards.
    """

    eps_max: float
    eps_min: float
    decay_fraction: float
    horizon_episodes: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValueError(f"need 0 <= eps_min <= eps_max <= 1, got {self}")
        if not 0.0 < self.decay_fraction <= 1.0:
            raise ValueError(f"decay_fraction must be in (0, 1], got {self.decay_fraction}")
        if self.horizon_episodes < 1:
            raise ValueError("horizon_episodes must be positive")


def epsilon_at(schedule: EpsilonSchedule, episode: int) -> float:
    """Exploration rate for a given episode index (0-based)."""
    cutoff = schedule.decay_fraction * schedule.horizon_episodes
    if episode >= cutoff:
        return schedule.eps_min
    return schedule.eps_max + (schedule.eps_min - schedule.eps_max) * (episode / cutoff)


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float
    gamma: float = 0.9
    batch_size: int = 100
    target_update_interval: int = 200

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.batch_size < 1 or self.target_update_interval < 1:
            raise ValueError("batch_size and target_update_interval must be positive")


# -------------------------------------------------------------- networks


class QNetwork:
    """Stacked single-hidden-layer MLPs.

    W1: (count, input_dim, hidden_dim)   b1: (count, hidden_dim)
    W2: (count, hidden_dim, output_dim)  b2: (count, output_dim)
    """

    __slots__ = ("input_dim", "hidden_dim", "output_dim", "count", "W1", "b1", "W2", "b2")

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int, count: int = 1):
        if min(input_dim, hidden_dim, output_dim, count) < 1:
            raise ValueError("all dimensions must be positive")
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim
        self.count = count
        self.W1 = np.zeros((count, input_dim, hidden_dim))
        self.b1 = np.zeros((count, hidden_dim))
        self.W2 = np.zeros((count, hidden_dim, output_dim))
        self.b2 = np.zeros((count, output_dim))

    @classmethod
    def init(
        cls, rng: np.random.Generator, input_dim: int, hidden_dim: int,
        output_dim: int, count: int = 1,
    ) -> "QNetwork":
        """Seeded uniform init of weights and biases in +-1/sqrt(fan_in)."""
        net = cls(input_dim, hidden_dim, output_dim, count)
        lim1 = 1.0 / np.sqrt(input_dim)
        lim2 = 1.0 / np.sqrt(hidden_dim)
        net.W1 = rng.uniform(-lim1, lim1, net.W1.shape)
        net.b1 = rng.uniform(-lim1, lim1, net.b1.shape)
        net.W2 = rng.uniform(-lim2, lim2, net.W2.shape)
        net.b2 = rng.uniform(-lim2, lim2, net.b2.shape)
        return net

    def copy(self) -> "QNetwork":
        dup = QNetwork(self.input_dim, self.hidden_dim, self.output_dim, self.count)
        dup.W1 = self.W1.copy()
        dup.b1 = self.b1.copy()
        dup.W2 = self.W2.copy()
        dup.b2 = self.b2.copy()
        return dup

    @property
    def params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.W1, self.b1, self.W2, self.b2


def forward(net: QNetwork, state: np.ndarray) -> np.ndarray:
    """Q-values for a state (input_dim,), a batch (B, input_dim), or a
    stacked batch (count, B, input_dim)."""
    x = np.asarray(state, dtype=np.float64)
    if x.ndim == 1:
        if net.count != 1 or x.shape[0] != net.input_dim:
            raise ValueError(f"state shape {x.shape} does not match input_dim {net.input_dim}")
        h = np.maximum(x @ net.W1[0] + net.b1[0], 0.0)
        return h @ net.W2[0] + net.b2[0]
    if x.ndim == 2:
        if net.count != 1 or x.shape[1] != net.input_dim:
            raise ValueError(f"batch shape {x.shape} does not match input_dim {net.input_dim}")
        h = np.maximum(x @ net.W1[0] + net.b1[0], 0.0)
        return h @ net.W2[0] + net.b2[0]
    if x.shape[0] != net.count or x.shape[2] != net.input_dim:
        raise ValueError(f"stacked shape {x.shape} does not match net ({net.count}, {net.input_dim})")
    h = np.maximum(np.matmul(x, net.W1) + net.b1[:, None, :], 0.0)
    return np.matmul(h, net.W2) + net.b2[:, None, :]


def q_rows(net: QNetwork, agents: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Q-values for M (agent, state) rows, each row using its agent's
    parameters: states (M, input_dim) -> (M, output_dim)."""
    z = np.matmul(states[:, None, :], net.W1[agents])[:, 0]
    z += net.b1[agents]
    np.maximum(z, 0.0, out=z)
    q = np.matmul(z[:, None, :], net.W2[agents])[:, 0]
    q += net.b2[agents]
    return q


def sync_target(net: QNetwork, target_net: QNetwork, only: np.ndarray | None = None) -> None:
    """Copy online parameters into the target network (bitwise). `only`
    restricts the copy to a boolean subset of the stacked networks."""
    if only is None:
        np.copyto(target_net.W1, net.W1)
        np.copyto(target_net.b1, net.b1)
        np.copyto(target_net.W2, net.W2)
        np.copyto(target_net.b2, net.b2)
    else:
        target_net.W1[only] = net.W1[only]
        target_net.b1[only] = net.b1[only]
        target_net.W2[only] = net.W2[only]
        target_net.b2[only] = net.b2[only]


# ---------------------------------------------------------------- policy


def select_actions(
    qvalues: np.ndarray,
    epsilon: float | np.ndarray,
    rng: np.random.Generator,
    forbid: np.ndarray | None = None,
) -> np.ndarray:
    """Row-wise epsilon-greedy over (M, A) Q-values.

    With probability epsilon a uniform random action is taken, otherwise the
    argmax (ties to lowest index). `forbid` marks one action per row as
    never selectable (masked from both argmax and random draws). Consumes
    exactly two rng draws of length M regardless of epsilon.
    """
    q = np.asarray(qvalues, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] < 1:
        raise ValueError(f"need a (M, A>=1) Q-value matrix, got shape {q.shape}")
    m, n_actions = q.shape
    if forbid is not None:
        if n_actions < 2:
            raise ValueError("cannot mask the only action")
        forbid = np.asarray(forbid, dtype=np.int64)
        q = q.copy()
        q[np.arange(m), forbid] = -np.inf
    greedy = q.argmax(axis=1)
    u = rng.random(m)
    if forbid is None:
        rand = rng.integers(0, n_actions, m)
    else:
        rand = rng.integers(0, n_actions - 1, m)
        rand += rand >= forbid
    return np.where(u < epsilon, rand, greedy)


def select_action(
    qvalues: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    forbid: int | None = None,
) -> int:
    """Epsilon-greedy action for one Q-value vector."""
    q = np.asarray(qvalues, dtype=np.float64)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("qvalues must be a non-empty vector")
    fb = None if forbid is None else np.array([forbid])
    return int(select_actions(q[None, :], epsilon, rng, forbid=fb)[0])


# ---------------------------------------------------------------- replay


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    """Stacked training batch: s (count, B, dim), a (count, B) int,
    r (count, B), s2 (count, B, dim), term (count, B) in {0.0, 1.0}."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    term: np.ndarray


class ReplayBuffer:
    """Bounded FIFO transition store for `count` agents of one ability.

    Rows are packed as [state | next_state | action | reward | terminal]
    in one float64 array (count, capacity, 2*state_dim+3), grown
    geometrically up to capacity. Sampling is uniform with replacement
    over each agent's currently stored rows.
    """

    def __init__(self, capacity: int, state_dim: int, count: int = 1):
        if capacity < 1 or state_dim < 1 or count < 1:
            raise ValueError("capacity, state_dim and count must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self.count = count
        self._width = 2 * state_dim + 3
        self._alloc = min(capacity, 1024)
        self._storage = np.zeros((count, self._alloc, self._width))
        self._heads = np.zeros(count, dtype=np.int64)
        self._totals = np.zeros(count, dtype=np.int64)

    @property
    def sizes(self) -> np.ndarray:
        return np.minimum(self._totals, self.capacity)

    @property
    def size(self) -> int:
        if self.count != 1:
            raise ValueError("size is defined for count=1; use sizes")
        return int(self.sizes[0])

    def contents(self) -> list[np.ndarray]:
        """Stored rows per agent (test/debug surface, arbitrary order
        once the ring has wrapped)."""
        return [self._storage[i, : int(s)].copy() for i, s in enumerate(self.sizes)]

    def _grow_to(self, required: int) -> None:
        new_alloc = self._alloc
        while new_alloc < required:
            new_alloc = min(self.capacity, new_alloc * 2)
        if new_alloc != self._alloc:
            bigger = np.zeros((self.count, new_alloc, self._width))
            bigger[:, : self._alloc] = self._storage
            self._storage = bigger
            self._alloc = new_alloc

    def push_rows(
        self,
        agents: np.ndarray,
        s: np.ndarray,
        a: np.ndarray,
        r: np.ndarray,
        s2: np.ndarray,
        term: np.ndarray,
    ) -> None:
        """Append one transition per row; repeated agents keep row order."""
        agents = np.asarray(agents, dtype=np.int64)
        m = agents.shape[0]
        if m == 0:
            return
        dim = self.state_dim
        packed = np.empty((m, self._width))
        packed[:, :dim] = s
        packed[:, dim : 2 * dim] = s2
        packed[:, 2 * dim] = a
        packed[:, 2 * dim + 1] = r
        packed[:, 2 * dim + 2] = term
        order = np.argsort(agents, kind="stable")
        sorted_agents = agents[order]
        uniq, counts = np.unique(sorted_agents, return_counts=True)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        rank = np.arange(m) - np.repeat(starts, counts)
        self._grow_to(int(min(self.capacity, (self._totals[uniq] + counts).max())))
        pos = (self._heads[sorted_agents] + rank) % self.capacity
        self._storage[sorted_agents, pos] = packed[order]
        self._heads[uniq] = (self._heads[uniq] + counts) % self.capacity
        self._totals[uniq] += counts

    def push(self, t: Transition, agent: int = 0) -> None:
        """Single-transition append (the unit surface)."""
        s = np.asarray(t.state, dtype=np.float64)
        s2 = np.asarray(t.next_state, dtype=np.float64)
        if s.shape != (self.state_dim,) or s2.shape != (self.state_dim,):
            raise ValueError(f"transition state dims must be ({self.state_dim},)")
        self.push_rows(
            np.array([agent]), s[None, :], np.array([t.action]),
            np.array([float(t.reward)]), s2[None, :], np.array([float(t.terminal)]),
        )

    def sample_arrays(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[Batch, np.ndarray]:
        """Uniform-with-replacement batch per agent plus a readiness mask
        (size >= batch_size). Rows of non-ready agents are filler and must
        be discarded via the mask. Always consumes one (count, batch_size)
        rng draw."""
        sizes = self.sizes
        ready = sizes >= batch_size
        u = rng.random((self.count, batch_size))
        idx = (u * np.maximum(sizes, 1)[:, None]).astype(np.int64)
        rows = np.take_along_axis(self._storage, idx[:, :, None], axis=1)
        dim = self.state_dim
        return (
            Batch(
                s=rows[:, :, :dim],
                a=rows[:, :, 2 * dim].astype(np.int64),
                r=rows[:, :, 2 * dim + 1],
                s2=rows[:, :, dim : 2 * dim],
                term=rows[:, :, 2 * dim + 2],
            ),
            ready,
        )

    def sample_batch(self, batch_size: int, rng: np.random.Generator):
        """count=1 sampling surface: a Batch, or INSUFFICIENT when the
        buffer holds fewer than batch_size transitions."""
        batch, ready = self.sample_arrays(batch_size, rng)
        if not ready.all():
            return INSUFFICIENT
        return batch


# -------------------------------------------------------------- training


def _as_batch(batch) -> Batch:
    if isinstance(batch, Batch):
        return batch
    if isinstance(batch, Sequence) and batch and isinstance(batch[0], Transition):
        s = np.stack([t.state for t in batch])[None, :, :].astype(np.float64)
        a = np.array([[t.action for t in batch]], dtype=np.int64)
        r = np.array([[t.reward for t in batch]], dtype=np.float64)
        s2 = np.stack([t.next_state for t in batch])[None, :, :].astype(np.float64)
        term = np.array([[float(t.terminal) for t in batch]])
        return Batch(s, a, r, s2, term)
    raise TypeError(f"cannot interpret batch of type {type(batch)}")


def td_loss(net: QNetwork, target_net: QNetwork, batch, gamma: float) -> np.ndarray:
    """Mean squared TD error per stacked network, shape (count,)."""
    b = _as_batch(batch)
    q = forward(net, b.s)
    qt = forward(target_net, b.s2)
    y = b.r + gamma * (1.0 - b.term) * qt.max(axis=2)
    qa = np.take_along_axis(q, b.a[:, :, None], axis=2)[:, :, 0]
    return np.mean((qa - y) ** 2, axis=1)


class Scratch:
    """Reusable training buffers for one (count, batch, dims) shape.

    The hidden-layer intermediates are large enough to fall through the
    allocator's small-object cache; reusing them keeps the train step free
    of per-call mmap traffic.
    """

    def __init__(self, count: int, batch: int, in_dim: int, hidden: int, out: int):
        self.shape_key = (count, batch, in_dim, hidden, out)
        self.s = np.empty((count, batch, in_dim))
        self.s2 = np.empty((count, batch, in_dim))
        self.h = np.empty((count, batch, hidden))
        self.ht = np.empty((count, batch, hidden))
        self.dh = np.empty((count, batch, hidden))
        self.mask = np.empty((count, batch, hidden), dtype=bool)
        self.q = np.empty((count, batch, out))
        self.qt = np.empty((count, batch, out))
        self.dz2 = np.empty((count, batch, out))
        self.dw1 = np.empty((count, in_dim, hidden))
        self.db1 = np.empty((count, hidden))
        self.dw2 = np.empty((count, hidden, out))
        self.db2 = np.empty((count, out))


def td_gradients(
    net: QNetwork, target_net: QNetwork, batch, gamma: float, scratch: Scratch | None = None
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Pre-step loss per network and analytic gradients of the TD loss.

    Non-finite inputs propagate into the returned loss rather than
    warning here; train_step raises NumericalFailure on them. With a
    Scratch the returned gradient arrays are views into it, valid until
    the next call.
    """
    b = _as_batch(batch)
    count, batch_size = b.r.shape
    if scratch is None or scratch.shape_key != (
        count, batch_size, net.input_dim, net.hidden_dim, net.output_dim,
    ):
        scratch = Scratch(count, batch_size, net.input_dim, net.hidden_dim, net.output_dim)
    with np.errstate(invalid="ignore", over="ignore"):
        return _td_gradients_core(net, target_net, b, gamma, batch_size, scratch)


def _td_gradients_core(net, target_net, b, gamma, batch_size, sc: Scratch):
    # contiguous copies of the (possibly strided) batch views: each is
    # consumed by two matmuls, so one explicit copy beats two implicit ones
    np.copyto(sc.s, b.s)
    np.copyto(sc.s2, b.s2)

    h = np.matmul(sc.s, net.W1, out=sc.h)
    h += net.b1[:, None, :]
    np.maximum(h, 0.0, out=h)
    q = np.matmul(h, net.W2, out=sc.q)
    q += net.b2[:, None, :]

    ht = np.matmul(sc.s2, target_net.W1, out=sc.ht)
    ht += target_net.b1[:, None, :]
    np.maximum(ht, 0.0, out=ht)
    qt = np.matmul(ht, target_net.W2, out=sc.qt)
    qt += target_net.b2[:, None, :]

    y = b.r + gamma * (1.0 - b.term) * qt.max(axis=2)
    qa = np.take_along_axis(q, b.a[:, :, None], axis=2)[:, :, 0]
    diff = qa - y
    loss = np.mean(diff * diff, axis=1)

    g = (2.0 / batch_size) * diff
    dz2 = sc.dz2
    dz2[...] = 0.0
    np.put_along_axis(dz2, b.a[:, :, None], g[:, :, None], axis=2)

    dw2 = np.matmul(h.transpose(0, 2, 1), dz2, out=sc.dw2)
    db2 = dz2.sum(axis=1, out=sc.db2)
    dh = np.matmul(dz2, net.W2.transpose(0, 2, 1), out=sc.dh)
    np.greater(h, 0.0, out=sc.mask)
    dh *= sc.mask
    dw1 = np.matmul(sc.s.transpose(0, 2, 1), dh, out=sc.dw1)
    db1 = dh.sum(axis=1, out=sc.db1)
    return loss, (dw1, db1, dw2, db2)


def train_step(
    net: QNetwork,
    target_net: QNetwork,
    batch,
    cfg: TrainerConfig,
    mask: np.ndarray | None = None,
    steps: np.ndarray | None = None,
    scratch: Scratch | None = None,
):
    """One SGD step on the TD loss; returns the pre-step loss.

    `mask` gates which stacked networks receive the update (used when some
    agents' buffers are not yet at batch size). `steps` is an optional
    per-network train-step counter incremented for updated networks; the
    caller handles target syncs from it. Returns a float for count=1 nets,
    else the (count,) loss vector of the updated networks (others NaN-free
    but unmasked entries are meaningless when mask is given).
    """
    loss, (dw1, db1, dw2, db2) = td_gradients(net, target_net, batch, cfg.gamma, scratch)
    checked = loss if mask is None else loss[mask]
    if not np.isfinite(checked).all():
        raise NumericalFailure(f"non-finite training loss: {loss}")
    lr = cfg.learning_rate
    if mask is not None:
        lane = mask.astype(np.float64)
        dw1 *= lane[:, None, None]
        db1 *= lane[:, None]
        dw2 *= lane[:, None, None]
        db2 *= lane[:, None]
    net.W1 -= lr * dw1
    net.b1 -= lr * db1
    net.W2 -= lr * dw2
    net.b2 -= lr * db2
    if steps is not None:
        steps += mask.astype(np.int64) if mask is not None else 1
    if net.count == 1:
        return float(loss[0])
    return loss


# --------------------------------------------------------------- learner


class Learner:
    """One ability's models for a whole population: stacked online and
    target networks, per-agent replay buffers, shared epsilon schedule,
    trainer config, and per-agent train-step counters for target syncs."""

    def __init__(
        self,
        rng: np.random.Generator,
        count: int,
        input_dim: int,
        hidden_dim: int,
        output_dim: int,
        schedule: EpsilonSchedule,
        trainer: TrainerConfig,
        buffer_capacity: int,
    ):
        self.net = QNetwork.init(rng, input_dim, hidden_dim, output_dim, count)
        self.target = self.net.copy()
        self.buffer = ReplayBuffer(buffer_capacity, input_dim, count)
        self.schedule = schedule
        self.trainer = trainer
        self.steps = np.zeros(count, dtype=np.int64)
        self.scratch = Scratch(count, trainer.batch_size, input_dim, hidden_dim, output_dim)

    def epsilon(self, episode: int) -> float:
        return epsilon_at(self.schedule, episode)

    def decide_rows(
        self,
        agents: np.ndarray,
        states: np.ndarray,
        episode: int,
        rng: np.random.Generator,
        forbid: np.ndarray | None = None,
    ) -> np.ndarray:
        """Epsilon-greedy decision per (agent, state) row."""
        q = q_rows(self.net, agents, states)
        return select_actions(q, epsilon_at(self.schedule, episode), rng, forbid=forbid)

    def train_ready(self, rng: np.random.Generator, acted: np.ndarray | None = None) -> None:
        """One train step for every agent whose buffer is at batch size
        (optionally intersected with an `acted this round` mask), then any
        due target syncs (every target_update_interval train steps)."""
        batch, ready = self.buffer.sample_arrays(self.trainer.batch_size, rng)
        if acted is not None:
            ready = ready & acted
        if not ready.any():
            return
        mask = None if ready.all() else ready
        train_step(self.net, self.target, batch, self.trainer,
                   mask=mask, steps=self.steps, scratch=self.scratch)
        due = ready & (self.steps % self.trainer.target_update_interval == 0)
        if due.any():
            sync_target(self.net, self.target, only=due)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {
            "W1": self.net.W1.copy(),
            "b1": self.net.b1.copy(),
            "W2": self.net.W2.copy(),
            "b2": self.net.b2.copy(),
            "steps": self.steps.copy(),
        }
