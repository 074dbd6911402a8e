"""Double deep Q-learning with prioritized replay over allocation episodes."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import substream
from .graph import BIDIRECTIONAL, REMOVAL_MODES, Assignment, JobAllocationGraph, apply_assignment
from .optim import AdamWState, optimizer_step, soft_update
from .qnet import DEFAULT_DIMS, MSG_IN, GraphBatch, QNetworkParams, backward_batch, forward_batch, init_params, q_values
from .replay import ReplayBuffer, TransitionSample

logger = logging.getLogger(__name__)

SOFTMAX = "softmax"
EPS_GREEDY = "eps-greedy"
_EXPLORATION_ALIASES = {"eps": EPS_GREEDY, "epsilon": EPS_GREEDY}

LOG_COLUMNS = ("update_idx", "episode", "loss", "mean_abs_q", "episode_return")


class EmptyActionSet(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 2048
    episodes: int = 200
    gamma: float = 1.0
    tau: float = 0.025
    epsilon: float = 0.10
    exploration: str = SOFTMAX
    temperature: float = 1.0
    alpha: float = 0.6
    beta: float = 0.4
    per_eps: float = 1e-6
    buffer_size: int = 10**6
    weight_decay: float = 0.01
    average_grad: bool = True
    removal_mode: str = BIDIRECTIONAL
    dims: tuple = DEFAULT_DIMS
    conflict_msg_dir: str = MSG_IN
    seed: int = 0

    def __post_init__(self):
        self.exploration = _EXPLORATION_ALIASES.get(self.exploration, self.exploration)
        self.dims = tuple(int(d) for d in self.dims)
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau={self.tau} must lie in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma={self.gamma} must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.exploration not in (SOFTMAX, EPS_GREEDY):
            raise ValueError(f"unknown exploration {self.exploration!r}")
        if self.removal_mode not in REMOVAL_MODES:
            raise ValueError(f"unknown removal mode {self.removal_mode!r}")

    def to_dict(self):
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)

    @property
    def losses(self):
        return [r[2] for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            w.writerows(self.rows)


def _as_action_arrays(q):
    if isinstance(q, dict):
        keys = sorted(q)
        return keys, np.array([q[k] for k in keys], dtype=np.float64)
    return None, np.asarray(q, dtype=np.float64)


def softmax_probabilities(q, temperature=1.0):
    _, values = _as_action_arrays(q)
    z = values / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def select_action_softmax(q, rng, temperature=1.0):
    """Draw an action with probability proportional to ``exp(q / temperature)``.

    ``q`` is an array (returns an index) or an edge -> value map (returns the edge).
    """
    keys, values = _as_action_arrays(q)
    if values.size == 0:
        raise EmptyActionSet("no actions to choose from")
    i = int(rng.choice(values.size, p=softmax_probabilities(values, temperature)))
    return Assignment(*keys[i]) if keys is not None else i


def select_action_eps_greedy(q, rng, epsilon=0.10):
    """Uniform action with probability ``epsilon``, else the first maximiser."""
    keys, values = _as_action_arrays(q)
    if values.size == 0:
        raise EmptyActionSet("no actions to choose from")
    if rng.random() < epsilon:
        i = int(rng.integers(values.size))
    else:
        i = int(np.argmax(values))
    return Assignment(*keys[i]) if keys is not None else i


def _action_positions(batch: GraphBatch, actions):
    return np.array([
        sl.start + g.edge_index[(int(a[0]), int(a[1]))]
        for g, sl, a in zip(batch.graphs, batch.q_slices, actions)
    ], dtype=np.int64)


def double_dqn_bootstrap(next_graphs, online: QNetworkParams, target: QNetworkParams):
    """``Q_target(s', argmax_a Q_online(s', a))`` for each non-terminal ``s'``."""
    if not next_graphs:
        return np.zeros(0)
    batch = GraphBatch(next_graphs, online.conflict_msg_dir)
    q_on = batch.split(forward_batch(batch, online))
    q_tg = batch.split(forward_batch(batch, target))
    return np.array([qt[int(np.argmax(qo))] for qo, qt in zip(q_on, q_tg)])


def td_errors(transitions, online: QNetworkParams, target: QNetworkParams, gamma=1.0, keep_tape=False):
    """Double-DQN errors ``r + gamma * bootstrap - Q_online(s, a)`` (bootstrap 0 when done).

    With ``keep_tape`` also returns ``(q_sa, positions, tape)`` for the
    online forward pass over the ``s`` graphs.
    """
    batch = GraphBatch([t.s for t in transitions], online.conflict_msg_dir)
    out = forward_batch(batch, online, keep_tape=keep_tape)
    q_s, tape = out if keep_tape else (out, None)
    pos = _action_positions(batch, [t.a for t in transitions])
    q_sa = q_s[pos]
    live = [i for i, t in enumerate(transitions) if not t.done]
    boot = np.zeros(len(transitions))
    boot[live] = double_dqn_bootstrap([transitions[i].s_next for i in live], online, target)
    rewards = np.array([t.r for t in transitions], dtype=np.float64)
    delta = rewards + gamma * boot - q_sa
    if keep_tape:
        return delta, (q_sa, pos, tape)
    return delta


def td_error(t: TransitionSample, online, target, gamma=1.0):
    return float(td_errors([t], online, target, gamma)[0])


def replay_update(buf: ReplayBuffer, online, target, opt_state, cfg: TrainConfig, rng):
    """Sample a prioritized batch, refresh its priorities and take one optimizer step.

    Returns ``(online, opt_state, loss, mean_abs_q)``.
    """
    idx, w = buf.sample(cfg.batch_size, rng)
    uniq, inverse = np.unique(idx, return_inverse=True)
    transitions = [buf.transition(i) for i in uniq]
    delta_u, (q_sa_u, pos, tape) = td_errors(transitions, online, target, cfg.gamma, keep_tape=True)
    buf.update_priority(uniq, delta_u)

    delta = delta_u[inverse]
    # d/dtheta of sum_k w_k * delta_k**2 / 2 is -sum_k w_k * delta_k * grad Q(s_k, a_k)
    coef = np.bincount(inverse, weights=w * delta, minlength=len(uniq))
    scale = 1.0 / cfg.batch_size if cfg.average_grad else 1.0
    cot = np.zeros(tape[0].q_person.shape[0])
    np.add.at(cot, pos, -scale * coef)
    grads = backward_batch(tape, cot)
    online, opt_state = optimizer_step(online, grads, opt_state, cfg.learning_rate, cfg.weight_decay)
    loss = float(np.mean(w * delta**2))
    return online, opt_state, loss, float(np.mean(np.abs(q_sa_u[inverse])))


def _instance_sampler(source, rng):
    if callable(source):
        return lambda: source(rng)
    graphs = list(source)
    if not graphs:
        raise ValueError("empty instance source")
    return lambda: graphs[int(rng.integers(len(graphs)))]


def train(source, cfg: TrainConfig, params: QNetworkParams | None = None, progress=None):
    """Run the training pipeline; returns ``(online_params, TrainingLog)``.

    ``source`` is a list of graphs (sampled uniformly) or a callable taking an
    rng and returning a graph.  ``progress`` is called after every episode
    with ``(episode, episode_return, last_loss)``.
    """
    policy_rng = substream(cfg.seed, "policy")
    replay_rng = substream(cfg.seed, "replay")
    sample_graph = _instance_sampler(source, substream(cfg.seed, "generation"))
    if params is None:
        params = init_params(substream(cfg.seed, "init"), cfg.dims, cfg.conflict_msg_dir)
    online = params.copy()
    target = online.copy()
    buf = ReplayBuffer(cfg.buffer_size, cfg.alpha, cfg.beta, cfg.per_eps)
    opt_state = AdamWState()
    log = TrainingLog()
    update = 0
    for episode in range(cfg.episodes):
        s = sample_graph()
        ret = 0.0
        loss = math.nan
        while not s.is_terminal:
            q = q_values(s, online)
            if cfg.exploration == SOFTMAX:
                i = select_action_softmax(q, policy_rng, cfg.temperature)
            else:
                i = select_action_eps_greedy(q, policy_rng, cfg.epsilon)
            a = Assignment(*s.selection[i])
            s_next = apply_assignment(s, a, cfg.removal_mode)
            buf.insert(TransitionSample(s, a, 1.0, s_next, s_next.is_terminal))
            ret += 1.0
            online, opt_state, loss, mean_abs_q = replay_update(buf, online, target, opt_state, cfg, replay_rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at update {update} (episode {episode})", log)
            target = soft_update(target, online, cfg.tau)
            log.rows.append((update, episode, loss, mean_abs_q, ret))
            update += 1
            s = s_next
        log.episode_returns.append(ret)
        logger.debug("episode %d return %.0f loss %.4g", episode, ret, loss)
        if progress is not None:
            progress(episode, ret, loss)
    return online, log
