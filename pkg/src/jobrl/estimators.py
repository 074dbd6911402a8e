"""Allocators with a scikit-learn style interface.

``fit(graphs)`` learns (or does nothing for the heuristics),
``predict(graph_or_graphs)`` returns :class:`Allocation` objects, and
``score(graphs)`` gives the mean approximation ratio against the exact
oracle.  Hyper-parameters are constructor arguments so ``get_params`` /
``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._rng import substream
from .baselines import exact_optimum, greedy_policy, random_policy
from .env import rollout
from .graph import BIDIRECTIONAL
from .qnet import DEFAULT_DIMS, MSG_IN, QNetworkParams, init_params, q_values
from .trainer import SOFTMAX, TrainConfig, train
from .validation import check_graphs, is_single_graph


def argmax_q_policy(params: QNetworkParams):
    """Deterministic policy taking the highest-Q edge (lowest canonical index on ties)."""

    def policy(state):
        g = state.graph
        return g.actions[int(np.argmax(q_values(g, params)))]

    return policy


class AllocatorMixin:
    removal_mode = BIDIRECTIONAL

    def _policy(self):
        raise NotImplementedError

    def _allocate(self, graphs):
        # one policy object per call, so seeded policies continue one stream
        policy = self._policy()
        return [rollout(g, policy, self.removal_mode)[0] for g in graphs]

    def predict(self, X):
        single = is_single_graph(X)
        out = self._allocate(check_graphs(X))
        return out[0] if single else out

    def ratios(self, X, optima=None):
        graphs = check_graphs(X)
        if optima is None:
            optima = [exact_optimum(g).size for g in graphs]
        sizes = [len(a) for a in self._allocate(graphs)]
        return np.array([1.0 if best == 0 else size / best for size, best in zip(sizes, optima)])

    def score(self, X, y=None):
        """Mean approximation ratio; ``y`` may hold precomputed optimum sizes."""
        return float(np.mean(self.ratios(X, y)))


class GreedyAllocator(AllocatorMixin, BaseEstimator):
    def __init__(self, degree="selection", removal_mode=BIDIRECTIONAL):
        self.degree = degree
        self.removal_mode = removal_mode

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def _policy(self):
        return greedy_policy(self.degree)


class RandomAllocator(AllocatorMixin, BaseEstimator):
    """Uniformly random assignments; every ``predict`` call restarts from ``random_state``."""

    def __init__(self, random_state=None, removal_mode=BIDIRECTIONAL):
        self.random_state = random_state
        self.removal_mode = removal_mode

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def _policy(self):
        return random_policy(self.random_state)


class ExactAllocator(AllocatorMixin, BaseEstimator):
    def __init__(self, budget=10**7):
        self.budget = budget

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def _allocate(self, graphs):
        return [exact_optimum(g, self.budget).witness for g in graphs]


class DQNAllocator(AllocatorMixin, BaseEstimator):
    """Graph-attention Q-network trained by double DQN with prioritized replay.

    ``fit`` accepts a list of training graphs (sampled uniformly per episode)
    or a callable ``rng -> graph``.  With ``episodes=0`` the fitted model is
    the untrained network for ``random_state``.
    """

    def __init__(self, learning_rate=1e-3, batch_size=2048, episodes=200, gamma=1.0, tau=0.025,
                 epsilon=0.10, exploration=SOFTMAX, temperature=1.0, alpha=0.6, beta=0.4,
                 per_eps=1e-6, buffer_size=10**6, weight_decay=0.01, average_grad=True,
                 removal_mode=BIDIRECTIONAL, dims=DEFAULT_DIMS, conflict_msg_dir=MSG_IN,
                 random_state=0):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.episodes = episodes
        self.gamma = gamma
        self.tau = tau
        self.epsilon = epsilon
        self.exploration = exploration
        self.temperature = temperature
        self.alpha = alpha
        self.beta = beta
        self.per_eps = per_eps
        self.buffer_size = buffer_size
        self.weight_decay = weight_decay
        self.average_grad = average_grad
        self.removal_mode = removal_mode
        self.dims = dims
        self.conflict_msg_dir = conflict_msg_dir
        self.random_state = random_state

    def train_config(self):
        seed = self.random_state if self.random_state is not None else 0
        return TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size, episodes=self.episodes,
            gamma=self.gamma, tau=self.tau, epsilon=self.epsilon, exploration=self.exploration,
            temperature=self.temperature, alpha=self.alpha, beta=self.beta, per_eps=self.per_eps,
            buffer_size=self.buffer_size, weight_decay=self.weight_decay, average_grad=self.average_grad,
            removal_mode=self.removal_mode, dims=tuple(self.dims), conflict_msg_dir=self.conflict_msg_dir,
            seed=int(seed),
        )

    def fit(self, X, y=None, progress=None):
        cfg = self.train_config()
        source = X if callable(X) else check_graphs(X)
        self.params_, self.log_ = train(source, cfg, progress=progress)
        self.train_config_ = cfg
        return self

    @classmethod
    def from_params(cls, params: QNetworkParams, **kwargs):
        est = cls(dims=params.dims, conflict_msg_dir=params.conflict_msg_dir, **kwargs)
        est.params_ = params
        return est

    @classmethod
    def untrained(cls, seed, **kwargs):
        """The randomly initialised network that ``fit`` would start from."""
        est = cls(episodes=0, random_state=seed, **kwargs)
        cfg = est.train_config()
        est.params_ = init_params(substream(cfg.seed, "init"), cfg.dims, cfg.conflict_msg_dir)
        return est

    def q_values(self, g):
        check_is_fitted(self, "params_")
        return q_values(check_graphs(g)[0], self.params_)

    def _policy(self):
        check_is_fitted(self, "params_")
        return argmax_q_policy(self.params_)
