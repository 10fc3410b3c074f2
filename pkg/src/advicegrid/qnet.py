"""Goal-conditioned Q-network: conv stack over the grid planes, channel
gating by the goal embedding, dense head over the fused maps.

In compositional mode the episode's reached-goal history vector is
concatenated to the goal embedding before the gate projection.
"""

from __future__ import annotations

import numpy as np

from . import nn

# conv kernels are 3x3 with same-padding; strides per layer
NET_PRESETS = {
    "desk": {"conv_channels": (16, 32), "conv_strides": (1, 2), "hidden": 64},
    "reference": {
        "conv_channels": (32, 64, 64, 128),
        "conv_strides": (1, 2, 1, 2),
        "hidden": 256,
    },
}
KERNEL = 3
PADDING = 1


def conv_output_size(size, strides):
    for s in strides:
        size = (size + 2 * PADDING - KERNEL) // s + 1
    return size


class QModel:
    """Network shape plus its encoder; parameters live in a ParamStore."""

    def __init__(
        self,
        grid_size,
        in_channels,
        n_actions,
        encoder,
        conv_channels=(16, 32),
        conv_strides=(1, 2),
        hidden=64,
        history_dim=0,
    ):
        if len(conv_channels) != len(conv_strides):
            raise ValueError("one stride per conv layer")
        self.grid_size = grid_size
        self.in_channels = in_channels
        self.n_actions = n_actions
        self.encoder = encoder
        self.conv_channels = tuple(conv_channels)
        self.conv_strides = tuple(conv_strides)
        self.hidden = hidden
        self.history_dim = history_dim
        self.out_size = conv_output_size(grid_size, conv_strides)
        if self.out_size < 1:
            raise ValueError("conv stack shrinks the grid below 1x1")
        self.flat_dim = self.conv_channels[-1] * self.out_size * self.out_size

    def init_params(self, rng) -> nn.ParamStore:
        store = nn.ParamStore()
        c_in = self.in_channels
        for i, c_out in enumerate(self.conv_channels):
            fan_in = c_in * KERNEL * KERNEL
            store.add(
                f"conv{i}_w",
                rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(c_out, c_in, KERNEL, KERNEL)),
            )
            store.add(f"conv{i}_b", np.zeros(c_out))
            c_in = c_out
        gate_in = self.encoder.dim + self.history_dim
        store.add("gate_w", rng.uniform(-1, 1, size=(gate_in, c_in)) * np.sqrt(6.0 / (gate_in + c_in)))
        store.add("gate_b", np.zeros(c_in))
        store.add(
            "fc_w", rng.normal(0.0, np.sqrt(2.0 / self.flat_dim), size=(self.flat_dim, self.hidden))
        )
        store.add("fc_b", np.zeros(self.hidden))
        store.add("out_w", rng.normal(0.0, 0.01, size=(self.hidden, self.n_actions)))
        store.add("out_b", np.zeros(self.n_actions))
        self.encoder.init_params(store, rng)
        return store

    def encode_goal(self, store, text, train=False):
        """Pre-attention instruction embedding, as a tensor."""
        return self.encoder.encode(store, text, train=train)

    def forward(self, store, planes, goal_embs, histories=None):
        """Q-values for a batch.

        planes: (B, C, g, g) array; goal_embs: (B, D) tensor or array;
        histories: (B, history_dim) array in compositional mode.
        """
        x = nn.Tensor(planes)
        for i, stride in enumerate(self.conv_strides):
            x = nn.relu(
                nn.conv2d(x, store[f"conv{i}_w"], stride=stride, padding=PADDING, bias=store[f"conv{i}_b"])
            )
        goal_side = goal_embs if isinstance(goal_embs, nn.Tensor) else nn.Tensor(goal_embs)
        if self.history_dim:
            if histories is None:
                raise nn.ShapeMismatch("model expects a history vector")
            goal_side = nn.concat([goal_side, nn.Tensor(histories)], axis=1)
        fused = nn.gated_attention(x, goal_side, store["gate_w"], store["gate_b"])
        h = nn.relu(nn.dense(nn.flatten(fused), store["fc_w"], store["fc_b"]))
        return nn.dense(h, store["out_w"], store["out_b"])

    def q_values(self, store, obs, goal_text):
        """Action values for a single observation and goal string (no grad)."""
        with nn.no_grad():
            emb = self.encode_goal(store, goal_text)
            hist = obs.history[None, :] if self.history_dim else None
            q = self.forward(store, obs.planes[None], nn.stack_rows([emb]), hist)
        return q.data[0]

    def q_batch(self, store, planes, goal_embs, histories=None):
        """Fast inference path over precomputed goal embeddings (no grad)."""
        with nn.no_grad():
            q = self.forward(store, planes, goal_embs, histories)
        return q.data
