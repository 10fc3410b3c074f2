"""Double-DQN pieces: episodic replay with sequential minibatches, the
epsilon-greedy behaviour policy, n-step double-Q targets, and the
gradient-averaged training step."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nn


class EmptyBuffer(RuntimeError):
    pass


@dataclass
class Transition:
    obs: object
    goal_text: str
    goal_tokens: tuple
    action: int
    reward: float
    next_obs: object
    terminal: bool

    def __post_init__(self):
        if self.reward != 0.0 and not self.terminal:
            raise ValueError("reward must be 0 on non-terminal transitions")


class ReplayBuffer:
    """Episode-grouped ring buffer; whole episodes are evicted FIFO."""

    def __init__(self, capacity=10_000):
        self.capacity = capacity
        self.episodes = deque()
        self.n_transitions = 0

    def __len__(self):
        return self.n_transitions

    def n_episodes(self):
        return len(self.episodes)

    def add_episode(self, transitions):
        if not transitions:
            return
        self.episodes.append(list(transitions))
        self.n_transitions += len(transitions)
        while self.n_transitions > self.capacity and len(self.episodes) > 1:
            evicted = self.episodes.popleft()
            self.n_transitions -= len(evicted)

    def positive_fraction(self):
        """Fraction of stored episodes whose terminal reward is 1."""
        if not self.episodes:
            return 0.0
        pos = sum(1 for ep in self.episodes if ep[-1].reward == 1.0)
        return pos / len(self.episodes)

    def sample_sequential(self, batch_len=32, rng=None):
        """Up to ``batch_len`` storage-consecutive transitions.

        Starts at the beginning of a random episode and runs across episode
        boundaries in storage order; each transition is flagged when it
        opens a new episode (recurrent-state reset points). Truncated only
        at the buffer tail.
        """
        if not self.episodes:
            raise EmptyBuffer("no episodes stored")
        start_ep = int(rng.integers(len(self.episodes)))
        batch, starts = [], []
        for ep in list(self.episodes)[start_ep:]:
            for i, tr in enumerate(ep):
                batch.append(tr)
                starts.append(i == 0)
                if len(batch) == batch_len:
                    return batch, starts
        return batch, starts


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.01
    decay_frames: int = 10_000


def epsilon_at(frame, sched: EpsilonSchedule) -> float:
    if frame >= sched.decay_frames:
        return sched.end
    frac = frame / sched.decay_frames
    return sched.start + frac * (sched.end - sched.start)


def select_action(q, epsilon, rng) -> int:
    """Epsilon-greedy over a value vector; greedy ties break to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def _batch_arrays(batch, use_next=False):
    obs = [(t.next_obs if use_next else t.obs) for t in batch]
    planes = np.stack([o.planes for o in obs])
    hist = None
    if obs[0].history is not None:
        hist = np.stack([o.history for o in obs])
    return planes, hist


def goal_embedding_rows(model, store, texts, train=False):
    """No-grad embedding rows per text, cached until the store next mutates."""
    if not isinstance(store, nn.ParamStore):
        with nn.no_grad():
            unique = {t: model.encode_goal(store, t, train=train).data
                      for t in dict.fromkeys(texts)}
        return np.stack([unique[t] for t in texts])
    version, cache = getattr(store, "_emb_cache", (-1, {}))
    if version != store.version:
        cache = {}
    with nn.no_grad():
        for t in dict.fromkeys(texts):
            if t not in cache:
                cache[t] = model.encode_goal(store, t, train=train).data
    store._emb_cache = (store.version, cache)
    return np.stack([cache[t] for t in texts])


def _targets_from_q(batch, starts, q_online_next, q_target_next, gamma, n_step):
    size = len(batch)
    targets = np.zeros(size)
    for i in range(size):
        acc, disc, j = 0.0, 1.0, i
        bootstrap = None
        while True:
            acc += disc * batch[j].reward
            disc *= gamma
            if batch[j].terminal:
                break
            if (j - i + 1) >= n_step or j + 1 >= size or starts[j + 1]:
                bootstrap = j
                break
            j += 1
        if bootstrap is not None:
            a_star = int(np.argmax(q_online_next[bootstrap]))
            acc += disc * q_target_next[bootstrap, a_star]
        targets[i] = acc
    return targets


def td_targets(model, online, target, batch, starts, gamma=0.99, n_step=1):
    """n-step double-Q targets for a sequential batch.

    Bootstrap actions come from the online net, their values from the
    target net (each with its own goal encoding). Returns accumulate within
    episode segments only; terminal transitions never bootstrap.
    """
    if not batch:
        raise nn.ShapeMismatch("empty batch")
    if n_step < 1:
        raise ValueError("n_step must be >= 1")
    texts = [t.goal_text for t in batch]
    next_planes, next_hist = _batch_arrays(batch, use_next=True)
    q_online_next = model.q_batch(
        online, next_planes, goal_embedding_rows(model, online, texts), next_hist)
    q_target_next = model.q_batch(
        target, next_planes, goal_embedding_rows(model, target, texts), next_hist)
    return _targets_from_q(batch, starts, q_online_next, q_target_next, gamma, n_step)


def train_event(
    model,
    online,
    target,
    batches,
    lr,
    gamma=0.99,
    n_step=1,
    delta=1.0,
    beta1=0.9,
    beta2=0.999,
):
    """One optimizer step from the average gradient over worker batches.

    ``batches`` is a list of (batch, starts) pairs, one per worker; the loss
    is the mean over batches of each batch's mean Huber loss, so its
    gradient is the average of the per-worker gradients. The target network
    is read-only here.
    """
    if not batches:
        raise EmptyBuffer("no batches to train on")
    # encode each unique goal once with gradients (new one-hot rows appear here)
    unique_texts = dict.fromkeys(t.goal_text for batch, _ in batches for t in batch)
    emb_tensors = {
        text: model.encode_goal(online, text, train=True) for text in unique_texts
    }
    flat = [t for batch, _ in batches for t in batch]
    texts = [t.goal_text for t in flat]
    next_planes, next_hist = _batch_arrays(flat, use_next=True)
    q_online_next = model.q_batch(
        online, next_planes, goal_embedding_rows(model, online, texts), next_hist)
    q_target_next = model.q_batch(
        target, next_planes, goal_embedding_rows(model, target, texts), next_hist)
    targets = np.zeros(len(flat))
    weights = np.zeros(len(flat))
    offset = 0
    for batch, starts in batches:
        n = len(batch)
        targets[offset : offset + n] = _targets_from_q(
            batch, starts, q_online_next[offset : offset + n],
            q_target_next[offset : offset + n], gamma, n_step)
        weights[offset : offset + n] = 1.0 / (len(batches) * n)
        offset += n
    planes, hist = _batch_arrays(flat)
    goal_embs = nn.stack_rows([emb_tensors[t] for t in texts])
    q = model.forward(online, planes, goal_embs, hist)
    qa = nn.gather_actions(q, [t.action for t in flat])
    loss = nn.huber(qa, targets, delta, weights=weights)
    loss.backward()
    nn.adam_step(online, lr, beta1, beta2)
    return float(loss.data)


def train_step(model, online, target, batch, starts, lr, gamma=0.99, n_step=1, delta=1.0):
    """Single-batch training step (the one-worker case of ``train_event``)."""
    return train_event(model, online, target, [(batch, starts)], lr, gamma, n_step, delta)


def sync_target(online, target, every=500, frame=0):
    """Deep-copy online parameters into the target net on schedule frames."""
    if frame % every == 0:
        target.copy_values_from(online)
        return True
    return False
