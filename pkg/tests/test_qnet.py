import numpy as np
import pytest

from advicegrid import nn
from advicegrid.encoders import make_encoder
from advicegrid.goals import enumerate_goal_space, render_instruction
from advicegrid.gridworld import N_CHANNELS, EnvConfig, new_env
from advicegrid.qnet import NET_PRESETS, QModel, conv_output_size

GS = enumerate_goal_space("singleton")
GS_COMP = enumerate_goal_space("compositional")


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


def tiny_model(grid_size=4, dim=8, n_actions=2, history_dim=0, vocab=None):
    enc = make_encoder("recurrent", dim, vocab=vocab or GS.vocab, word_dim=4)
    model = QModel(
        grid_size=grid_size,
        in_channels=N_CHANNELS,
        n_actions=n_actions,
        encoder=enc,
        conv_channels=(3, 4),
        conv_strides=(1, 2),
        hidden=6,
        history_dim=history_dim,
    )
    return model, model.init_params(rng(42))


def random_obs_planes(r, grid_size, n=1):
    return r.normal(size=(n, N_CHANNELS, grid_size, grid_size))


class TestAssembly:
    def test_presets_cover_reference_widths(self):
        assert NET_PRESETS["reference"]["conv_channels"] == (32, 64, 64, 128)
        assert NET_PRESETS["reference"]["hidden"] == 256
        assert conv_output_size(9, (1, 2, 1, 2)) == 3

    def test_action_count_singleton(self):
        env = new_env(EnvConfig(grid_size=7), rng(1), GS)
        model, store = tiny_model(grid_size=7, n_actions=4)
        obs = env.reset(GS.desired_goals[0])
        q = model.q_values(store, obs, "Reach red goal")
        assert q.shape == (4,)

    def test_action_count_compositional(self):
        env = new_env(EnvConfig(grid_size=7, mode="compositional"), rng(1), GS_COMP)
        enc = make_encoder("recurrent", 8, vocab=GS_COMP.vocab, word_dim=4)
        model = QModel(7, N_CHANNELS, 5, enc, conv_channels=(3, 4), conv_strides=(1, 2),
                       hidden=6, history_dim=4)
        store = model.init_params(rng(0))
        obs = env.reset(GS_COMP.desired_goals[0])
        q = model.q_values(store, obs, "Reach red goal")
        assert q.shape == (5,)

    def test_q_values_pure(self):
        model, store = tiny_model()
        planes = random_obs_planes(rng(3), 4)[0]

        class Obs:
            pass

        obs = Obs()
        obs.planes = planes
        obs.history = None
        q1 = model.q_values(store, obs, "Reach red goal")
        q2 = model.q_values(store, obs, "Reach red goal")
        assert np.array_equal(q1, q2)

    def test_history_required_when_configured(self):
        model, store = tiny_model(history_dim=4, vocab=GS_COMP.vocab)
        planes = random_obs_planes(rng(4), 4, n=2)
        emb = nn.Tensor(rng(5).normal(size=(2, 8)))
        with pytest.raises(nn.ShapeMismatch):
            model.forward(store, planes, emb, None)

    def test_deterministic_init(self):
        _, s1 = tiny_model()
        _, s2 = tiny_model()
        for name in s1.names():
            assert np.array_equal(s1[name].data, s2[name].data)


class TestFullNetworkGradient:
    def test_matches_finite_differences(self):
        # 4x4 grid, embedding dim 8, 2 actions; loss through conv, gate,
        # dense head and Huber, checked against central differences
        model, store = tiny_model(grid_size=4, dim=8, n_actions=2)
        r = rng(7)
        planes = random_obs_planes(r, 4, n=3)
        texts = ["Reach red goal", "Reach blue goal", "Reach red goal"]
        actions = [0, 1, 1]
        targets = r.normal(size=3) * 0.3

        def forward():
            embs = {t: model.encode_goal(store, t) for t in dict.fromkeys(texts)}
            goal_embs = nn.stack_rows([embs[t] for t in texts])
            q = model.forward(store, planes, goal_embs)
            return nn.huber(nn.gather_actions(q, actions), targets)

        store.zero_grads()
        forward().backward()
        eps = 1e-5
        worst = 0.0
        for name, tensor in store.items():
            analytic = tensor.grad.copy()
            fd = np.zeros_like(tensor.data)
            flat, fd_flat = tensor.data.reshape(-1), fd.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                fp = float(forward().data)
                flat[i] = old - eps
                fm = float(forward().data)
                flat[i] = old
                fd_flat[i] = (fp - fm) / (2 * eps)
            scale = max(np.abs(fd).max(), 1e-8)
            err = np.abs(analytic - fd).max() / scale
            worst = max(worst, err)
            assert err < 1e-3, f"{name}: {err:.2e}"
            tensor.grad[...] = 0.0
        assert worst < 1e-3

    def test_every_parameter_participates(self):
        model, store = tiny_model(grid_size=4, dim=8, n_actions=2)
        r = rng(8)
        planes = random_obs_planes(r, 4, n=4)
        texts = ["Reach red goal", "Avoid any lava", "Reach green lava", "Reach blue goal"]
        embs = {t: model.encode_goal(store, t) for t in dict.fromkeys(texts)}
        goal_embs = nn.stack_rows([embs[t] for t in texts])
        q = model.forward(store, planes, goal_embs)
        loss = nn.huber(nn.gather_actions(q, [0, 1, 0, 1]), r.normal(size=4))
        store.zero_grads()
        loss.backward()
        for name, tensor in store.items():
            assert np.any(tensor.grad != 0.0), f"parameter {name} received no gradient"
