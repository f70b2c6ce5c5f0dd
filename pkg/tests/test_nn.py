"""Tests for the neural substrate: forward passes, TD math, Adam, soft
updates, gradient verification, and checkpointing."""

import numpy as np
import pytest

from qarbiter.nn import (AdamState, KnowledgeEmbedderNet, QNetwork,
                         RecurrentQNetwork, adam_step, clone_network,
                         finite_diff_check, finite_diff_check_recurrent,
                         greedy_action, load_checkpoint, q_forward, rq_forward,
                         save_checkpoint, soft_update, td_loss_and_grads,
                         td_targets)
from qarbiter.nn.gradcheck import relu_kink_margin
from qarbiter.nn.qlearning import sequence_td_loss_and_grads


def rng(seed=0):
    return np.random.default_rng(seed)


def toy_scalar_net(theta=1.0):
    """Q(x) = theta * x: one dense 1->1 layer, no conv, no hidden fc."""
    arch = {"type": "q", "view_size": 1, "in_channels": 1, "conv_spec": [],
            "fc_widths": [], "action_count": 1}
    net = QNetwork(arch, rng(0))
    net.param_arrays()[0][...] = theta
    net.param_arrays()[1][...] = 0.0
    return net


class TestQForward:
    def test_zero_head_gives_zero_q(self):
        net = QNetwork.build(5, 4, 8, rng(1))
        head_w, head_b = net.param_arrays()[-2:]
        head_w[...] = 0.0
        head_b[...] = 0.0
        obs = rng(2).integers(0, 7, size=(3, 5, 5, 3))
        assert np.all(q_forward(net, obs) == 0.0)

    def test_identical_observations_identical_rows(self):
        net = QNetwork.build(7, 5, 16, rng(3))
        obs = rng(4).integers(0, 7, size=(1, 7, 7, 3))
        batch = np.concatenate([obs, obs])
        q = q_forward(net, batch)
        assert np.array_equal(q[0], q[1])

    def test_golden_output(self):
        net = QNetwork.build(5, 4, 8, rng(12345))
        obs = rng(999).integers(0, 7, size=(2, 5, 5, 3))
        golden = np.array([
            [0.01332284098467709, -0.00523871914237057,
             -0.00353805310180167, -0.01754668776895933],
            [0.01485640782229035, -0.00922544087003688,
             0.0078565826720821, -0.0189238515373691],
        ])
        assert np.allclose(q_forward(net, obs), golden, atol=1e-6)

    def test_shape_mismatch_rejected(self):
        net = QNetwork.build(5, 4, 8, rng(5))
        with pytest.raises(ValueError, match=r"\(7, 7, 3\).*\(5, 5, 3\)"):
            q_forward(net, rng(6).integers(0, 7, size=(2, 7, 7, 3)))

    def test_empty_batch_rejected(self):
        net = QNetwork.build(5, 4, 8, rng(5))
        with pytest.raises(ValueError):
            q_forward(net, np.zeros((0, 5, 5, 3), dtype=np.int64))


class TestRecurrentForward:
    def test_single_step_equals_length_one_sequence(self):
        net = RecurrentQNetwork.build(5, 3, 6, rng(7))
        obs = rng(8).integers(0, 7, size=(5, 5, 3))
        h0, c0 = net.zero_hidden()
        q_step, (h1, c1) = net.step(obs, h0, c0)
        q_seq, (h2, c2) = rq_forward(net, obs[None, None], *net.zero_hidden(1))
        assert np.allclose(q_step, q_seq[0, 0], atol=1e-12)
        assert np.allclose(h1, h2[0], atol=1e-12)
        assert np.allclose(c1, c2[0], atol=1e-12)

    def test_split_sequence_equals_full_sequence(self):
        net = RecurrentQNetwork.build(5, 3, 6, rng(9))
        obs = rng(10).integers(0, 7, size=(1, 8, 5, 5, 3))
        q_full, (h_full, c_full) = rq_forward(net, obs, *net.zero_hidden(1))
        q_a, (h_a, c_a) = rq_forward(net, obs[:, :3], *net.zero_hidden(1))
        q_b, (h_b, c_b) = rq_forward(net, obs[:, 3:], h_a, c_a)
        joined = np.concatenate([q_a, q_b], axis=1)
        assert np.max(np.abs(joined - q_full)) <= 1e-6
        assert np.max(np.abs(h_b - h_full)) <= 1e-6

    def test_hidden_state_changes_output(self):
        net = RecurrentQNetwork.build(5, 3, 6, rng(11))
        obs = rng(12).integers(0, 7, size=(5, 5, 3))
        h0, c0 = net.zero_hidden()
        q_zero, _ = net.step(obs, h0, c0)
        q_other, _ = net.step(obs, h0 + 0.5, c0 + 0.5)
        assert not np.allclose(q_zero, q_other)

    def test_hidden_size_mismatch_rejected(self):
        net = RecurrentQNetwork.build(5, 3, 6, rng(13))
        with pytest.raises(ValueError, match="hidden"):
            net.step(rng(14).integers(0, 7, size=(5, 5, 3)), np.zeros(4), np.zeros(4))


class TestTDTargets:
    def test_terminal_transition_truncates_bootstrap(self):
        net = QNetwork.build(5, 4, 8, rng(15))
        next_obs = rng(16).integers(0, 7, size=(1, 5, 5, 3))
        y = td_targets([1.0], [True], next_obs, net, 0.99)
        assert y[0] == 1.0

    def test_bootstrap_value(self):
        net = toy_scalar_net(theta=1.0)
        next_obs = np.array([[[[1.0]]]])  # Q(s') = 1
        y = td_targets([0.0], [False], next_obs, net, 0.99)
        assert np.isclose(y[0], 0.99)

    def test_gamma_zero_is_myopic(self):
        net = QNetwork.build(5, 4, 8, rng(17))
        next_obs = rng(18).integers(0, 7, size=(4, 5, 5, 3))
        r = np.array([0.3, -0.1, 2.0, 0.0])
        y = td_targets(r, [False] * 4, next_obs, net, 0.0)
        assert np.allclose(y, r)

    def test_nonfinite_reward_rejected(self):
        net = QNetwork.build(5, 4, 8, rng(19))
        next_obs = rng(20).integers(0, 7, size=(1, 5, 5, 3))
        with pytest.raises(ValueError, match="finite"):
            td_targets([np.nan], [False], next_obs, net, 0.99)

    def test_target_bounds_property(self):
        # rewards in [0, R], Q_target in [0, Qmax]  =>  y in [0, R + gamma*Qmax]
        g = rng(21)
        net = toy_scalar_net(theta=1.0)
        for _ in range(50):
            r_max, q_max, gamma = g.uniform(0.1, 5), g.uniform(0.1, 5), g.uniform(0, 1)
            rewards = g.uniform(0, r_max, size=8)
            dones = g.integers(0, 2, size=8).astype(bool)
            next_obs = g.uniform(0, q_max, size=(8, 1, 1, 1))  # Q(s') = input value
            y = td_targets(rewards, dones, next_obs, net, gamma)
            assert np.all(y >= 0.0) and np.all(y <= r_max + gamma * q_max + 1e-12)


class TestTDLoss:
    def test_zero_loss_zero_grads_at_minimum(self):
        net = QNetwork.build(5, 4, 8, rng(22))
        obs = rng(23).integers(0, 7, size=(4, 5, 5, 3))
        acts = np.array([0, 1, 2, 3])
        q = q_forward(net, obs)
        loss, grads = td_loss_and_grads(net, obs, acts, q[np.arange(4), acts])
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads)

    def test_scalar_toy_net_hand_derivation(self):
        # Q = theta * x with theta=1, x=1, y=2: loss=(y-Q)^2=1, dL/dtheta=-2
        net = toy_scalar_net(theta=1.0)
        obs = np.array([[[[1.0]]]])
        loss, grads = td_loss_and_grads(net, obs, [0], [2.0])
        assert np.isclose(loss, 1.0)
        assert np.isclose(grads[0][0, 0], -2.0)

    def test_out_of_range_action_rejected(self):
        net = QNetwork.build(5, 4, 8, rng(24))
        obs = rng(25).integers(0, 7, size=(1, 5, 5, 3))
        with pytest.raises(ValueError, match="out of range"):
            td_loss_and_grads(net, obs, [4], [0.0])

    def test_gradient_flows_only_through_taken_action(self):
        net = toy_scalar_net()
        arch = {"type": "q", "view_size": 1, "in_channels": 1, "conv_spec": [],
                "fc_widths": [], "action_count": 2}
        net = QNetwork(arch, rng(26))
        obs = np.array([[[[1.0]]]])
        _, grads = td_loss_and_grads(net, obs, [0], [5.0])
        w_grad = grads[0]
        assert w_grad[0, 0] != 0.0
        assert w_grad[0, 1] == 0.0  # untaken action's column untouched


class TestAdam:
    def test_zero_grads_leave_params_unchanged(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.zeros(2)], state, lr=0.01)
        assert np.array_equal(p[0], [1.0, -2.0])
        assert state.t == 1

    def test_first_step_moves_by_about_lr(self):
        # bias correction makes m_hat/sqrt(v_hat) ~ sign(g) at t=1
        p = [np.array([0.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.array([0.5])], state, lr=0.0036)
        assert np.isclose(p[0][0], -0.0036, atol=1e-6)

    def test_two_steps_match_independent_recurrence(self):
        g = rng(27)
        p = [g.normal(size=(3, 2))]
        g1, g2 = g.normal(size=(3, 2)), g.normal(size=(3, 2))
        state = AdamState.for_params(p)
        start = p[0].copy()
        adam_step(p, [g1], state, lr=0.01)
        adam_step(p, [g2], state, lr=0.01)

        # independent re-derivation of the recurrence
        b1, b2, eps = 0.9, 0.999, 1e-8
        m = np.zeros((3, 2))
        v = np.zeros((3, 2))
        theta = start.copy()
        for t, grad in enumerate([g1, g2], start=1):
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad ** 2
            theta -= 0.01 * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert np.allclose(p[0], theta, atol=1e-15)

    def test_nonfinite_grads_rejected_before_mutation(self):
        p = [np.array([1.0])]
        state = AdamState.for_params(p)
        with pytest.raises(ValueError, match="non-finite"):
            adam_step(p, [np.array([np.inf])], state, lr=0.01)
        assert p[0][0] == 1.0
        assert state.t == 0


class TestSoftUpdate:
    def test_table_value_blend(self):
        online = toy_scalar_net(theta=1.0)
        target = toy_scalar_net(theta=0.0)
        soft_update(online, target, tau=0.0012)
        assert np.isclose(target.param_arrays()[0][0, 0], 0.0012)

    def test_tau_one_copies(self):
        online = QNetwork.build(5, 4, 8, rng(28))
        target = QNetwork.build(5, 4, 8, rng(29))
        soft_update(online, target, tau=1.0)
        for o, t in zip(online.param_arrays(), target.param_arrays()):
            assert np.array_equal(o, t)

    def test_repeated_updates_converge_monotonically(self):
        online = toy_scalar_net(theta=3.0)
        target = toy_scalar_net(theta=0.0)
        gaps = []
        for _ in range(5):
            soft_update(online, target, tau=0.25)
            gaps.append(abs(3.0 - target.param_arrays()[0][0, 0]))
        assert all(a > b for a, b in zip(gaps, gaps[1:]))

    def test_identity_when_equal(self):
        online = QNetwork.build(5, 4, 8, rng(30))
        target = clone_network(online)
        soft_update(online, target, tau=0.37)
        for o, t in zip(online.param_arrays(), target.param_arrays()):
            assert np.allclose(o, t, atol=1e-15)

    def test_architecture_mismatch_rejected(self):
        online = QNetwork.build(5, 4, 8, rng(31))
        target = QNetwork.build(5, 4, 16, rng(32))
        with pytest.raises(ValueError, match="architecture"):
            soft_update(online, target, tau=0.5)


class TestGradientChecks:
    def test_linear_toy_net_near_exact(self):
        net = toy_scalar_net(theta=0.7)
        err = finite_diff_check(net, np.array([[[[1.0]]]]), [0], [2.0])
        assert err <= 1e-8

    def test_random_conv_fc_net(self):
        g = rng(33)
        while True:  # redraw until pre-activations clear the kink margin
            net = QNetwork.build(5, 4, 8, g)
            obs = g.uniform(0.0, 0.7, size=(4, 5, 5, 3))
            if relu_kink_margin(net, obs) > 1e-3:
                break
        acts = g.integers(0, 4, size=4)
        q = q_forward(net, obs)
        tgts = q[np.arange(4), acts] + 0.1 * g.normal(size=4)
        assert finite_diff_check(net, obs, acts, tgts) <= 1e-4

    def test_corrupted_gradient_detected(self):
        g = rng(34)
        net = QNetwork.build(5, 4, 8, g)
        obs = g.uniform(0.0, 0.7, size=(2, 5, 5, 3))
        acts = g.integers(0, 4, size=2)
        tgts = g.normal(size=2)

        from qarbiter.nn import qlearning
        from qarbiter.nn.gradcheck import max_relative_gradient_error
        _, grads = qlearning.td_loss_and_grads(net, obs, acts, tgts)
        analytic = [x.copy() for x in grads]
        analytic[0] *= 2.0  # corrupt one tensor
        err = max_relative_gradient_error(
            lambda: qlearning.td_loss(net, obs, acts, tgts),
            net.param_arrays(), analytic)
        assert err > 0.3  # doubling shows up as ~0.5 relative error

    def test_recurrent_gradients(self):
        g = rng(35)
        net = RecurrentQNetwork.build(5, 3, 5, g, conv_spec=[(6, 2)])
        obs_seq = g.uniform(0.0, 0.7, size=(2, 4, 5, 5, 3))
        acts = g.integers(0, 3, size=(2, 4))
        h0, c0 = net.zero_hidden(2)
        q, _ = rq_forward(net, obs_seq, h0, c0)
        idx_b = np.arange(2)[:, None]
        idx_l = np.arange(4)[None, :]
        tgts = q[idx_b, idx_l, acts] + 0.1 * g.normal(size=(2, 4))
        assert finite_diff_check_recurrent(net, obs_seq, acts, tgts) <= 1e-4

    def test_sequence_loss_rejects_bad_action(self):
        net = RecurrentQNetwork.build(5, 3, 5, rng(36))
        obs_seq = rng(37).integers(0, 7, size=(1, 2, 5, 5, 3))
        with pytest.raises(ValueError, match="out of range"):
            sequence_td_loss_and_grads(net, obs_seq, np.array([[0, 3]]), np.zeros((1, 2)))


class TestDeterminism:
    def test_identical_seeds_identical_parameter_trajectories(self):
        def run(seed):
            g = np.random.default_rng(seed)
            net = QNetwork.build(5, 4, 8, g)
            state = AdamState.for_params(net.param_arrays())
            for _ in range(5):
                obs = g.integers(0, 7, size=(4, 5, 5, 3))
                acts = g.integers(0, 4, size=4)
                tgts = g.normal(size=4)
                _, grads = td_loss_and_grads(net, obs, acts, tgts)
                adam_step(net.param_arrays(), grads, state, lr=0.001)
            return [a.copy() for a in net.param_arrays()]

        a, b = run(42), run(42)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        g = rng(38)
        net = QNetwork.build(7, 5, 16, g)
        state = AdamState.for_params(net.param_arrays())
        obs = g.integers(0, 7, size=(4, 7, 7, 3))
        _, grads = td_loss_and_grads(net, obs, g.integers(0, 5, size=4), g.normal(size=4))
        adam_step(net.param_arrays(), grads, state, lr=0.003)

        path = tmp_path / "net.npz"
        save_checkpoint(path, net, adam=state, extra={"note": "test"})
        loaded, adam2, extra = load_checkpoint(path)
        assert extra == {"note": "test"}
        for a, b in zip(net.param_arrays(), loaded.param_arrays()):
            assert np.array_equal(a, b)
        assert adam2.t == state.t
        for a, b in zip(state.m, adam2.m):
            assert np.array_equal(a, b)
        # loaded net computes identically
        assert np.array_equal(q_forward(net, obs), q_forward(loaded, obs))

    def test_recurrent_roundtrip(self, tmp_path):
        net = RecurrentQNetwork.build(7, 5, 10, rng(39))
        path = tmp_path / "rnet.npz"
        save_checkpoint(path, net)
        loaded, adam, _ = load_checkpoint(path)
        assert adam is None
        obs = rng(40).integers(0, 7, size=(1, 3, 7, 7, 3))
        q1, _ = rq_forward(net, obs, *net.zero_hidden(1))
        q2, _ = rq_forward(loaded, obs, *loaded.zero_hidden(1))
        assert np.array_equal(q1, q2)

    def test_embedder_roundtrip(self, tmp_path):
        net = KnowledgeEmbedderNet.build(
            5, 4, rng(41), knowledge_dim=4, latent_dim=64, state_embedding=40,
            knowledge_latent=64, knowledge_embedding=8, combined_dim=16)
        path = tmp_path / "knet.npz"
        save_checkpoint(path, net)
        loaded, _, _ = load_checkpoint(path)
        obs = rng(42).integers(0, 7, size=(2, 5, 5, 3))
        know = rng(43).uniform(size=(2, 4))
        assert np.array_equal(net.forward(obs * 0.1, know), loaded.forward(obs * 0.1, know))


class TestEmbedderShapes:
    def test_joint_input_is_state_plus_knowledge_embedding(self):
        net = KnowledgeEmbedderNet.build(
            5, 4, rng(44), knowledge_dim=4, latent_dim=64, state_embedding=40,
            knowledge_latent=64, knowledge_embedding=8, combined_dim=16)
        first_joint = net.joint_stack.layers[0]
        assert first_joint.W.shape[0] == 40 + 8

    def test_zeroed_knowledge_branch_reduces_to_state_function(self):
        net = KnowledgeEmbedderNet.build(
            5, 4, rng(45), knowledge_dim=4, latent_dim=16, state_embedding=8,
            knowledge_latent=8, knowledge_embedding=4, combined_dim=8)
        for name, arr in net.params():
            if name.startswith("know."):
                arr[...] = 0.0
        obs = rng(46).integers(0, 7, size=(3, 5, 5, 3))
        k1 = rng(47).uniform(size=(3, 4))
        k2 = rng(48).uniform(size=(3, 4))
        assert np.array_equal(net.forward(obs * 0.1, k1), net.forward(obs * 0.1, k2))
