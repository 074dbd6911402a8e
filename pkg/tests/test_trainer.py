import math

import numpy as np
import pytest

from jobrl.generators import PRESETS, generate_many
from jobrl.graph import Assignment, JobAllocationGraph, apply_assignment
from jobrl.optim import AdamWState, soft_update
from jobrl.qnet import (
    AttentionLayerParams,
    CaeModuleParams,
    MergerParams,
    QNetworkParams,
    init_params,
)
from jobrl.replay import ReplayBuffer, TransitionSample
from jobrl import trainer
from jobrl.trainer import (
    LOG_COLUMNS,
    EmptyActionSet,
    TrainConfig,
    TrainingDiverged,
    double_dqn_bootstrap,
    replay_update,
    select_action_eps_greedy,
    select_action_softmax,
    softmax_probabilities,
    td_error,
    td_errors,
    train,
)


def scalar_net(w):
    """One module, width 1, flat attention and lambda = 0.

    Job embeddings are then exactly 1 and a person's embedding is ``w`` times
    the mean selection degree over the person and its remaining jobs, so
    Q(p, j) can be worked out by hand.
    """
    zeros = np.zeros((2, 1))
    sel = AttentionLayerParams(np.array([[w], [0.0]]), np.zeros(2))
    conf = AttentionLayerParams(zeros.copy(), np.zeros(2))
    return QNetworkParams([CaeModuleParams(sel, conf, MergerParams(np.zeros((2, 1)), np.zeros(1), np.array(0.0)))])


def transition(s, a):
    nxt = apply_assignment(s, a)
    return TransitionSample(s, Assignment(*a), 1.0, nxt, nxt.is_terminal)


# p0 may do j0, j1; p1 may do j2, j3; no conflicts
CHAIN = JobAllocationGraph(2, 4, [(0, 0), (0, 1), (1, 2), (1, 3)])


class TestActionSelection:
    def test_equal_values_uniform(self):
        assert np.allclose(softmax_probabilities(np.zeros(4)), 0.25)

    def test_dominant_value(self, rng):
        q = np.array([-20.0, 20.0, -20.0])
        assert softmax_probabilities(q)[1] > 0.999
        assert softmax_probabilities(np.array([1e4, 0.0]))[0] == 1.0

    def test_monte_carlo_frequencies(self):
        q = np.array([0.3, -1.0, 2.0, 0.0, 1.1])
        rng = np.random.default_rng(1)
        draws = [select_action_softmax(q, rng) for _ in range(10**5)]
        freq = np.bincount(draws, minlength=5) / 10**5
        ref = np.exp(q) / np.exp(q).sum()
        assert np.abs(freq - ref).sum() < 0.01

    def test_temperature(self):
        q = np.array([1.0, 0.0])
        assert softmax_probabilities(q, 0.5)[0] == pytest.approx(np.exp(2) / (np.exp(2) + 1))

    def test_map_input_returns_assignment(self, rng):
        out = select_action_softmax({(0, 1): 5.0, (1, 0): -50.0}, rng)
        assert out == Assignment(0, 1)

    def test_empty(self, rng):
        with pytest.raises(EmptyActionSet):
            select_action_softmax({}, rng)
        with pytest.raises(EmptyActionSet):
            select_action_eps_greedy(np.zeros(0), rng)

    def test_eps_zero_argmax_with_lowest_tie(self, rng):
        q = np.array([0.0, 3.0, 1.0, 3.0])
        assert {select_action_eps_greedy(q, rng, 0.0) for _ in range(50)} == {1}

    def test_eps_one_uniform(self):
        rng = np.random.default_rng(2)
        draws = [select_action_eps_greedy(np.array([9.0, 0.0, 0.0, 0.0]), rng, 1.0) for _ in range(40000)]
        assert np.abs(np.bincount(draws, minlength=4) / 40000 - 0.25).sum() < 0.02


class TestTdError:
    def test_scalar_net_values_by_hand(self):
        # p0 selection degree 2, its jobs degree 1: mean 4/3
        from jobrl.qnet import q_forward

        q = q_forward(CHAIN, scalar_net(3.0))
        assert q[(0, 0)] == pytest.approx(4.0, abs=1e-12)

    def test_crafted_transitions(self):
        single = JobAllocationGraph(1, 1, [(0, 0)])
        clash = JobAllocationGraph(1, 2, [(0, 0), (0, 1)], [(0, 1)])
        cases = [
            # terminal: delta = r - Q, Q = 0.4 * mean(1, 1)
            (transition(single, (0, 0)), 0.4, 0.4, 1.0, 0.6),
            # s' = {(0,0), (0,1), (1,2)}; online picks p0, target values it at 2.25 * 4/3 = 3
            # Q(s, (1,3)) = 2.625 * 4/3 = 3.5, so delta = 1 + 3 - 3.5
            (transition(CHAIN, (1, 3)), 2.625, 2.25, 1.0, 0.5),
            (transition(CHAIN, (1, 3)), 2.625, 2.25, 0.5, 1 + 1.5 - 3.5),
            (transition(CHAIN, (1, 3)), 2.625, 2.25, 0.0, 1 - 3.5),
            # taking j0 also removes the conflicting j1, so the episode ends
            (transition(clash, (0, 0)), 0.75, 5.0, 1.0, 1 - 1.0),
        ]
        for t, w_on, w_tg, gamma, expected in cases:
            assert td_error(t, scalar_net(w_on), scalar_net(w_tg), gamma) == pytest.approx(expected, abs=1e-12)
        assert cases[0][0].done and cases[4][0].done and not cases[1][0].done

    def test_online_chooses_target_values(self):
        # online (w > 0) prefers p0's edges, target (w < 0) prefers p1's
        s_next = apply_assignment(CHAIN, (1, 3))
        boot = double_dqn_bootstrap([s_next], scalar_net(1.0), scalar_net(-1.0))
        assert boot[0] == pytest.approx(-4 / 3, abs=1e-12)
        # not the target's own maximum, which would be -1
        assert boot[0] != pytest.approx(-1.0)

    def test_batch_matches_single(self):
        ts = [transition(CHAIN, e) for e in CHAIN.selection]
        on, tg = init_params(0), init_params(1)
        batch = td_errors(ts, on, tg)
        assert np.allclose(batch, [td_error(t, on, tg) for t in ts], atol=1e-12)

    def test_two_step_chain_converges(self):
        s0 = JobAllocationGraph(1, 2, [(0, 0), (0, 1)])
        ts = []
        for a in s0.selection:
            first = transition(s0, a)
            ts += [first, transition(first.s_next, first.s_next.selection[0])]
        buf = ReplayBuffer()
        for t in ts:
            buf.insert(t)
        cfg = TrainConfig(batch_size=8, learning_rate=0.01, weight_decay=0.0, tau=0.1)
        online, target, state = init_params(0), init_params(0), AdamWState()
        rng = np.random.default_rng(0)
        for _ in range(400):
            online, state, _, _ = replay_update(buf, online, target, state, cfg, rng)
            target = soft_update(target, online, cfg.tau)
        # exact values are 2 from the root and 1 from the last step
        assert np.abs(td_errors(ts, online, target)).max() < 1e-3


class TestTrain:
    graphs = generate_many(PRESETS["er-desk"].with_seed(0), 4)

    def test_zero_episodes_returns_init(self):
        init = init_params(3)
        params, log = train(self.graphs, TrainConfig(episodes=0, seed=3), params=init)
        assert params.array_equal(init) and log.rows == []

    def test_log_and_reproducibility(self, tmp_path):
        cfg = TrainConfig(episodes=2, batch_size=4, seed=5)
        p1, log1 = train(self.graphs, cfg)
        p2, log2 = train(self.graphs, cfg)
        assert p1.array_equal(p2) and log1.rows == log2.rows
        assert len(log1.episode_returns) == 2
        assert len(log1.rows) == sum(log1.episode_returns)
        assert all(math.isfinite(r[2]) and r[2] >= 0 for r in log1.rows)
        path = tmp_path / "log.csv"
        log1.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(LOG_COLUMNS)
        assert len(lines) == len(log1.rows) + 1

    def test_eps_greedy_path(self):
        _, log = train(self.graphs[:1], TrainConfig(episodes=1, batch_size=2, exploration="eps", seed=1))
        assert log.rows

    def test_callable_source(self):
        g = self.graphs[0]
        _, log = train(lambda rng: g, TrainConfig(episodes=1, batch_size=2))
        assert log.episode_returns[0] > 0

    def test_nan_guard(self, monkeypatch):
        real = trainer.replay_update

        def poisoned(*args):
            online, state, _, q = real(*args)
            return online, state, float("nan"), q

        monkeypatch.setattr(trainer, "replay_update", poisoned)
        with pytest.raises(TrainingDiverged) as info:
            train(self.graphs, TrainConfig(episodes=1, batch_size=2))
        assert info.value.log is not None

    @pytest.mark.parametrize("kw", [{"tau": 0.0}, {"tau": 1.5}, {"gamma": 1.1}, {"batch_size": 0},
                                    {"exploration": "boltzmann"}, {"removal_mode": "x"}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.learning_rate, cfg.batch_size, cfg.episodes, cfg.gamma, cfg.tau) == (1e-3, 2048, 200, 1.0, 0.025)
        assert (cfg.epsilon, cfg.alpha, cfg.beta, cfg.buffer_size) == (0.10, 0.6, 0.4, 10**6)
        assert cfg.exploration == "softmax"
