"""Run orchestration: JSON config, multi-environment collection, hindsight
relabeling, gradient-averaged training, periodic evaluation, metrics CSV.

Collection steps a set of environment instances in lockstep (round-robin,
single-threaded, fully deterministic per seed): each round samples fresh
layouts, plays one episode per instance, stores the original plus relabeled
copies, then runs the training updates owed for the frames collected.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .agent import (
    EpsilonSchedule,
    ReplayBuffer,
    Transition,
    epsilon_at,
    goal_embedding_rows,
    select_action,
    train_event,
)
from .encoders import (
    ENCODER_KINDS,
    ONE_HOT,
    PRETRAINED,
    RECURRENT,
    load_pretrained_table,
    make_encoder,
)
from .goals import (
    GoalSpace,
    OutOfVocabulary,
    UnknownInstruction,
    apply_synonyms,
    constituents,
    enumerate_goal_space,
    is_composition,
    parse_instruction,
    render_instruction,
    tokenize,
)
from .gridworld import HISTORY_DIM, N_CHANNELS, EnvConfig, n_actions, new_env
from .qnet import NET_PRESETS, QModel
from .relabel import EpisodeRecord, relabel_episode, store_episode
from .teachers import DEFAULT_ENSEMBLE, TEACHER_KINDS

EVAL_EPSILON = 0.01  # floor of the behaviour schedule


class ConfigError(ValueError):
    pass


class UnsatisfiableSplit(ValueError):
    pass


class UnsupportedEncoder(RuntimeError):
    pass


def _strict_fields(cls, data, what):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


@dataclass(frozen=True)
class EncoderCfg:
    kind: str = RECURRENT
    dim: int = 64
    word_dim: int = None
    pretrained_path: str = None

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"unknown encoder kind: {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("encoder dim must be positive")
        if self.kind == PRETRAINED:
            if not self.pretrained_path:
                raise ConfigError("pretrained encoder needs pretrained_path")
            if not os.path.exists(self.pretrained_path):
                raise ConfigError(f"pretrained_path not found: {self.pretrained_path}")


@dataclass(frozen=True)
class AgentCfg:
    gamma: float = 0.99
    lr: float = 3e-4
    buffer_capacity: int = 10_000
    batch_len: int = 32
    n_step: int = 1
    train_every: int = 4
    target_sync_every: int = 500
    learn_start: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_frames: int = 10_000
    net_preset: str = "desk"
    net_channels: tuple = None
    net_strides: tuple = None
    net_hidden: int = None

    def __post_init__(self):
        if self.net_preset not in NET_PRESETS:
            raise ConfigError(f"unknown net preset: {self.net_preset!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.n_step < 1 or self.batch_len < 1 or self.train_every < 1:
            raise ConfigError("n_step, batch_len and train_every must be >= 1")

    def net_shape(self):
        preset = NET_PRESETS[self.net_preset]
        return {
            "conv_channels": tuple(self.net_channels or preset["conv_channels"]),
            "conv_strides": tuple(self.net_strides or preset["conv_strides"]),
            "hidden": self.net_hidden or preset["hidden"],
        }

    def schedule(self):
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epsilon_decay_frames)


@dataclass(frozen=True)
class Phase1Cfg:
    teachers: tuple
    frames: int


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    encoder: EncoderCfg = field(default_factory=EncoderCfg)
    agent: AgentCfg = field(default_factory=AgentCfg)
    teachers: tuple = DEFAULT_ENSEMBLE
    advice_fraction: float = 1.0
    n_envs: int = 16
    total_frames: int = 100_000
    eval_every: int = 10_000
    mt_eval_episodes: int = 100
    holdout_fraction: float = 0.0
    phase1: Phase1Cfg = None
    seed: int = 0
    output_dir: str = "runs/run"

    def __post_init__(self):
        if not isinstance(self.teachers, tuple):
            object.__setattr__(self, "teachers", tuple(self.teachers))
        if isinstance(self.phase1, dict):
            object.__setattr__(self, "phase1", Phase1Cfg(
                teachers=tuple(self.phase1["teachers"]), frames=int(self.phase1["frames"])))
        for kind in self.teachers:
            if kind not in TEACHER_KINDS:
                raise ConfigError(f"unknown teacher kind: {kind!r}")
        if not 0.0 <= self.advice_fraction <= 1.0:
            raise ConfigError("advice_fraction must lie in [0, 1]")
        if self.total_frames <= 0:
            raise ConfigError("total_frames must be positive")
        if self.n_envs < 1:
            raise ConfigError("n_envs must be >= 1")
        if self.phase1 is not None:
            for kind in self.phase1.teachers:
                if kind not in TEACHER_KINDS:
                    raise ConfigError(f"unknown phase1 teacher kind: {kind!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        _strict_fields(cls, data, "run config")
        if "env" in data:
            _strict_fields(EnvConfig, data["env"], "env")
            data["env"] = EnvConfig(**data["env"])
        if "encoder" in data:
            _strict_fields(EncoderCfg, data["encoder"], "encoder")
            data["encoder"] = EncoderCfg(**data["encoder"])
        if "agent" in data:
            _strict_fields(AgentCfg, data["agent"], "agent")
            agent = dict(data["agent"])
            for key in ("net_channels", "net_strides"):
                if agent.get(key) is not None:
                    agent[key] = tuple(agent[key])
            data["agent"] = AgentCfg(**agent)
        if data.get("phase1") is not None:
            _strict_fields(Phase1Cfg, data["phase1"], "phase1")
            data["phase1"] = Phase1Cfg(
                teachers=tuple(data["phase1"]["teachers"]),
                frames=int(data["phase1"]["frames"]),
            )
        if "teachers" in data:
            data["teachers"] = tuple(data["teachers"])
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"{path}: {err}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MetricsRow:
    frame: int
    mt_success: float
    mean_episode_length: float
    loss: float
    buffer_positive_fraction: float

    HEADER = "frame,mt_success,mean_episode_length,loss,buffer_positive_fraction"

    def line(self):
        return (
            f"{self.frame},{self.mt_success:.6f},{self.mean_episode_length:.6f},"
            f"{self.loss:.8g},{self.buffer_positive_fraction:.6f}"
        )


@dataclass
class EvalReport:
    rate: float
    per_goal: dict
    episodes: list  # (success, length) pairs
    mean_length: float
    status: str = "ok"


# -- model construction -------------------------------------------------------


def build_model(cfg: RunConfig, gs: GoalSpace) -> QModel:
    enc_cfg = cfg.encoder
    if enc_cfg.kind == RECURRENT:
        encoder = make_encoder(RECURRENT, enc_cfg.dim, vocab=gs.vocab, word_dim=enc_cfg.word_dim)
    elif enc_cfg.kind == PRETRAINED:
        table = load_pretrained_table(enc_cfg.pretrained_path)
        encoder = make_encoder(PRETRAINED, enc_cfg.dim, table=table)
    else:
        encoder = make_encoder(ONE_HOT, enc_cfg.dim)
    shape = cfg.agent.net_shape()
    history_dim = HISTORY_DIM if cfg.env.mode == "compositional" else 0
    return QModel(
        grid_size=cfg.env.grid_size,
        in_channels=N_CHANNELS,
        n_actions=n_actions(cfg.env.mode),
        encoder=encoder,
        history_dim=history_dim,
        **shape,
    )


# -- instruction splits --------------------------------------------------------


def split_instructions(gs: GoalSpace, holdout_fraction, rng):
    """Split the desired goals into (train, zsl) sets.

    Only compositions are ever held out, and every constituent of a held-out
    composition must still appear in some training instruction.
    """
    if not 0.0 <= holdout_fraction < 1.0:
        raise UnsatisfiableSplit("holdout_fraction must lie in [0, 1)")
    if holdout_fraction == 0.0:
        return gs.desired_goals, ()
    if gs.mode != "compositional":
        raise UnsatisfiableSplit("singleton desired set is too small to split")
    k = round(holdout_fraction * len(gs.desired_goals))
    comps = [g for g in gs.desired_goals if is_composition(g)]
    if k > len(comps):
        raise UnsatisfiableSplit(f"cannot hold out {k} of {len(comps)} compositions")
    for _ in range(1000):
        chosen = rng.choice(len(comps), size=k, replace=False)
        zsl = {comps[int(i)] for i in chosen}
        train = tuple(g for g in gs.desired_goals if g not in zsl)
        seen = {c for g in train for c in constituents(g)}
        if all(c in seen for z in zsl for c in constituents(z)):
            zsl_ordered = tuple(g for g in gs.desired_goals if g in zsl)
            return train, zsl_ordered
    raise UnsatisfiableSplit("no valid split found")


# -- lockstep episode runner ----------------------------------------------------


def _embed_goals(model, store, texts, train):
    return goal_embedding_rows(model, store, texts, train=train)


def _safe_tokens(text, vocab):
    try:
        return tuple(tokenize(text, vocab))
    except OutOfVocabulary:
        return ()


def run_episodes(model, store, envs, goals, gs, rng, sched=None, epsilon=None,
                 start_frame=0, train_mode=False, goal_texts=None):
    """Play one episode per environment in lockstep.

    Either a fixed ``epsilon`` or an ``EpsilonSchedule`` (evaluated at the
    global frame) drives exploration. ``goal_texts`` overrides the encoded
    instruction (used for synonym evaluation); the environment reward is
    always judged against ``goals``. Returns (records, end_frame).
    """
    n = len(envs)
    if goal_texts is None:
        goal_texts = [render_instruction(g) for g in goals]
    tokens = [_safe_tokens(t, gs.vocab) for t in goal_texts]
    embs = _embed_goals(model, store, goal_texts, train_mode)
    obs = [env.reset(goal) for env, goal in zip(envs, goals)]
    transitions = [[] for _ in range(n)]
    records = [None] * n
    active = list(range(n))
    frame = start_frame
    compositional = gs.mode == "compositional"
    while active:
        planes = np.stack([obs[i].planes for i in active])
        hist = np.stack([obs[i].history for i in active]) if compositional else None
        q = model.q_batch(store, planes, embs[active], hist)
        still = []
        for row, i in enumerate(active):
            eps = epsilon if epsilon is not None else epsilon_at(frame, sched)
            a = select_action(q[row], eps, rng)
            next_obs, terminated, _ = envs[i].step(a)
            frame += 1
            reward = float(envs[i].episode_reward(goals[i])) if terminated else 0.0
            transitions[i].append(
                Transition(obs[i], goal_texts[i], tokens[i], a, reward, next_obs, terminated)
            )
            obs[i] = next_obs
            if terminated:
                records[i] = EpisodeRecord(
                    transitions=transitions[i],
                    goal=goals[i],
                    events=envs[i].events(),
                    frame_index=frame,
                )
            else:
                still.append(i)
        active = still
    return records, frame


# -- evaluation -----------------------------------------------------------------


def _report_from_records(records):
    per_goal = {}
    episodes = []
    for rec in records:
        text = render_instruction(rec.goal)
        success = rec.transitions[-1].reward == 1.0
        episodes.append((success, len(rec.transitions)))
        wins, total = per_goal.get(text, (0, 0))
        per_goal[text] = (wins + int(success), total + 1)
    rate = sum(s for s, _ in episodes) / len(episodes)
    mean_length = sum(l for _, l in episodes) / len(episodes)
    return EvalReport(rate, per_goal, episodes, mean_length)


def evaluate_mt(model, store, cfg: RunConfig, gs, train_goals, n=100, rng=None,
                goal_texts_fn=None) -> EvalReport:
    """Success rate over fresh layouts with goals drawn from the training set."""
    goal_list = list(train_goals)
    envs = [new_env(cfg.env, rng, gs) for _ in range(n)]
    goals = [goal_list[int(rng.integers(len(goal_list)))] for _ in range(n)]
    texts = [goal_texts_fn(g) for g in goals] if goal_texts_fn else None
    records, _ = run_episodes(model, store, envs, goals, gs, rng,
                              epsilon=EVAL_EPSILON, goal_texts=texts)
    return _report_from_records(records)


def evaluate_zsl(model, store, cfg: RunConfig, gs, zsl_goals, n_per_goal, rng) -> EvalReport:
    """Success rate over the held-out instruction set.

    One-hot encoders cannot represent unseen instructions; the report comes
    back with status ``unsupported_encoder`` instead of a rate.
    """
    if model.encoder.kind == ONE_HOT:
        return EvalReport(float("nan"), {}, [], float("nan"), status="unsupported_encoder")
    if not zsl_goals:
        return EvalReport(float("nan"), {}, [], float("nan"), status="empty")
    envs, goals = [], []
    for g in zsl_goals:
        for _ in range(n_per_goal):
            envs.append(new_env(cfg.env, rng, gs))
            goals.append(g)
    records, _ = run_episodes(model, store, envs, goals, gs, rng, epsilon=EVAL_EPSILON)
    return _report_from_records(records)


def evaluate_synonyms(model, store, cfg: RunConfig, gs, train_goals, synonym_table,
                      n=100, rng=None, syn_rng=None) -> EvalReport:
    """Multitask evaluation with one word of each instruction swapped for a
    synonym before encoding; the environment still judges the original goal."""

    def swap(goal):
        text = apply_synonyms(render_instruction(goal), synonym_table, syn_rng)
        try:
            with nn.no_grad():
                model.encode_goal(store, text)
        except (UnknownInstruction, OutOfVocabulary) as err:
            raise UnsupportedEncoder(
                f"{model.encoder.kind} encoder cannot represent {text!r}"
            ) from err
        return text

    return evaluate_mt(model, store, cfg, gs, train_goals, n, rng, goal_texts_fn=swap)


# -- training -------------------------------------------------------------------


@dataclass
class RunResult:
    final_mt: float
    frames: int
    out_dir: str
    metrics_path: str
    checkpoint_path: str
    zsl_report: EvalReport = None


def _teachers_at(cfg: RunConfig, frame):
    if cfg.phase1 is not None and frame < cfg.phase1.frames:
        return cfg.phase1.teachers
    return cfg.teachers


def _spawn_rngs(seed_material, keys):
    ss = np.random.SeedSequence(seed_material)
    return {k: np.random.Generator(np.random.PCG64(c)) for k, c in zip(keys, ss.spawn(len(keys)))}


class _Trainer:
    """State shared by fresh and resumed training loops."""

    def __init__(self, cfg, gs, model, online, target, train_goals, rngs,
                 metrics_fh, events_fh, start_frame=0, quiet=True, label=""):
        self.cfg = cfg
        self.gs = gs
        self.model = model
        self.online = online
        self.target = target
        self.train_goals = train_goals
        self.rngs = rngs
        self.metrics_fh = metrics_fh
        self.events_fh = events_fh
        self.quiet = quiet
        self.label = label
        self.buffer = ReplayBuffer(cfg.agent.buffer_capacity)
        self.sched = cfg.agent.schedule()
        self.frame = start_frame
        self.frames_per_event = cfg.agent.train_every * cfg.n_envs
        self.next_train = start_frame + cfg.agent.learn_start
        self.next_sync = self._next_multiple(start_frame, cfg.agent.target_sync_every)
        self.next_eval = self._next_multiple(start_frame, cfg.eval_every)
        self.losses = []
        self.ep_lengths = []
        self.last_row_frame = -1
        self.report = None

    @staticmethod
    def _next_multiple(frame, every):
        return (frame // every + 1) * every

    def log_event(self, payload):
        self.events_fh.write(json.dumps(payload) + "\n")
        self.events_fh.flush()

    def write_row(self):
        cfg = self.cfg
        self.report = evaluate_mt(self.model, self.online, cfg, self.gs,
                                  self.train_goals, cfg.mt_eval_episodes, self.rngs["eval"])
        row = MetricsRow(
            frame=self.frame,
            mt_success=self.report.rate,
            mean_episode_length=(sum(self.ep_lengths) / len(self.ep_lengths))
            if self.ep_lengths else float("nan"),
            loss=(sum(self.losses) / len(self.losses)) if self.losses else float("nan"),
            buffer_positive_fraction=self.buffer.positive_fraction(),
        )
        self.metrics_fh.write(row.line() + "\n")
        self.metrics_fh.flush()
        self.log_event({"type": "eval", "frame": self.frame, "mt_success": self.report.rate,
                        "mean_eval_length": self.report.mean_length})
        if not self.quiet:
            print(f"[{self.label}] frame={self.frame} mt={self.report.rate:.3f} "
                  f"loss={row.loss:.5g} buf+={row.buffer_positive_fraction:.3f}")
        self.losses, self.ep_lengths = [], []
        self.last_row_frame = self.frame

    def run(self):
        cfg = self.cfg
        while self.frame < cfg.total_frames:
            envs = [new_env(cfg.env, self.rngs["env"], self.gs) for _ in range(cfg.n_envs)]
            goals = [self.train_goals[int(self.rngs["goal"].integers(len(self.train_goals)))]
                     for _ in range(cfg.n_envs)]
            records, self.frame = run_episodes(
                self.model, self.online, envs, goals, self.gs, self.rngs["action"],
                sched=self.sched, start_frame=self.frame, train_mode=True,
            )
            for rec in records:
                relabeled = relabel_episode(
                    rec, _teachers_at(cfg, rec.frame_index), self.gs,
                    cfg.advice_fraction, cfg.total_frames, self.rngs["teacher"],
                )
                store_episode(self.buffer, rec, relabeled)
                self.ep_lengths.append(len(rec.transitions))
            while self.frame >= self.next_train and len(self.buffer) > 0:
                batches = [self.buffer.sample_sequential(cfg.agent.batch_len, self.rngs["train"])
                           for _ in range(cfg.n_envs)]
                self.losses.append(train_event(
                    self.model, self.online, self.target, batches,
                    cfg.agent.lr, cfg.agent.gamma, cfg.agent.n_step,
                ))
                self.next_train += self.frames_per_event
            if self.frame >= self.next_sync:
                self.target.copy_values_from(self.online)
                self.next_sync = self._next_multiple(self.frame, cfg.agent.target_sync_every)
            if self.frame >= self.next_eval:
                self.write_row()
                self.next_eval = self._next_multiple(self.frame, cfg.eval_every)
        if self.last_row_frame != self.frame:
            self.write_row()


def run_training(cfg: RunConfig, seed=None, out_dir=None, quiet=True) -> RunResult:
    """Train one agent per the config; writes metrics, events, and a checkpoint.

    Deterministic per (config, seed): collection is lockstep round-robin over
    ``n_envs`` instances and all randomness flows from named child seeds.
    """
    seed = cfg.seed if seed is None else seed
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)

    gs = enumerate_goal_space(cfg.env.mode)
    rngs = _spawn_rngs(seed, ("init", "env", "goal", "action", "teacher", "train",
                              "eval", "split"))
    train_goals, zsl_goals = split_instructions(gs, cfg.holdout_fraction, rngs["split"])
    model = build_model(cfg, gs)
    online = model.init_params(rngs["init"])
    target = online.clone()

    snapshot = cfg.to_dict()
    snapshot["seed"] = seed
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(snapshot, fh, indent=2)

    metrics_path = os.path.join(out_dir, "metrics.csv")
    events_path = os.path.join(out_dir, "events.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as metrics_fh, \
            open(events_path, "w", encoding="utf-8") as events_fh:
        metrics_fh.write(MetricsRow.HEADER + "\n")
        trainer = _Trainer(cfg, gs, model, online, target, train_goals, rngs,
                           metrics_fh, events_fh, quiet=quiet, label=out_dir)
        trainer.run()
        zsl_report = None
        if zsl_goals:
            zsl_report = evaluate_zsl(model, online, cfg, gs, zsl_goals, 10, rngs["eval"])
            trainer.log_event({"type": "zsl", "frame": trainer.frame,
                               "rate": zsl_report.rate, "status": zsl_report.status})
        checkpoint_path = os.path.join(out_dir, "checkpoint.bin")
        save_run_checkpoint(checkpoint_path, cfg, seed, trainer.frame, model,
                            online, target, train_goals, zsl_goals)
        trainer.log_event({"type": "final", "frame": trainer.frame,
                           "mt_success": trainer.report.rate})
    return RunResult(
        final_mt=trainer.report.rate,
        frames=trainer.frame,
        out_dir=out_dir,
        metrics_path=metrics_path,
        checkpoint_path=checkpoint_path,
        zsl_report=zsl_report,
    )


def resume_training(checkpoint_path, quiet=True) -> RunResult:
    """Continue a run from its checkpoint until ``total_frames``.

    The replay buffer is not serialized, so collection restarts fresh; rng
    streams are re-derived from (seed, saved frame).
    """
    cfg, gs, model, online, target, meta = load_run_checkpoint(checkpoint_path)
    start_frame = meta["frame"]
    if start_frame >= cfg.total_frames:
        raise ConfigError("run already reached total_frames; nothing to resume")
    out_dir = os.path.dirname(os.path.abspath(checkpoint_path))
    seed = meta["seed"]
    rngs = _spawn_rngs((seed, start_frame), ("env", "goal", "action", "teacher",
                                             "train", "eval"))
    train_goals = meta["train_goal_asts"]
    zsl_goals = meta["zsl_goal_asts"]

    metrics_path = os.path.join(out_dir, "metrics.csv")
    events_path = os.path.join(out_dir, "events.jsonl")
    with open(metrics_path, "a", encoding="utf-8") as metrics_fh, \
            open(events_path, "a", encoding="utf-8") as events_fh:
        trainer = _Trainer(cfg, gs, model, online, target, train_goals, rngs,
                           metrics_fh, events_fh, start_frame=start_frame,
                           quiet=quiet, label=f"resume {out_dir}")
        trainer.run()
        path = os.path.join(out_dir, "checkpoint.bin")
        save_run_checkpoint(path, cfg, seed, trainer.frame, model, online, target,
                            train_goals, zsl_goals)
        trainer.log_event({"type": "final", "frame": trainer.frame,
                           "mt_success": trainer.report.rate})
    return RunResult(trainer.report.rate, trainer.frame, out_dir, metrics_path, path)


# -- checkpoint wiring -----------------------------------------------------------


def save_run_checkpoint(path, cfg, seed, frame, model, online, target, train_goals, zsl_goals):
    arrays = {}
    for name, t in online.items():
        arrays[f"online/{name}"] = t.data
    m, v = online.moment_arrays()
    for name in online.names():
        arrays[f"adam_m/{name}"] = m[name]
        arrays[f"adam_v/{name}"] = v[name]
    for name, t in target.items():
        arrays[f"target/{name}"] = t.data
    meta = {
        "config": cfg.to_dict(),
        "seed": seed,
        "frame": frame,
        "adam_step": online.step,
        "train_goals": [render_instruction(g) for g in train_goals],
        "zsl_goals": [render_instruction(g) for g in zsl_goals],
    }
    if model.encoder.kind == ONE_HOT:
        meta["onehot_registry"] = model.encoder.registry_meta()
    nn.save_checkpoint(path, arrays, meta)


def load_run_checkpoint(path):
    """Rebuild (cfg, gs, model, online, target, meta) from a checkpoint file."""
    arrays, meta = nn.load_checkpoint(path)
    cfg = RunConfig.from_dict(meta["config"])
    gs = enumerate_goal_space(cfg.env.mode)
    model = build_model(cfg, gs)
    if model.encoder.kind == ONE_HOT:
        model.encoder.load_registry(meta.get("onehot_registry", {}))
    online = nn.ParamStore()
    target = nn.ParamStore()
    for key, arr in arrays.items():
        section, _, name = key.partition("/")
        if section == "online":
            online.add(name, arr)
        elif section == "target":
            target.add(name, arr)
    m, v = online.moment_arrays()
    for key, arr in arrays.items():
        section, _, name = key.partition("/")
        if section == "adam_m":
            np.copyto(m[name], arr)
        elif section == "adam_v":
            np.copyto(v[name], arr)
    online.step = meta.get("adam_step", 0)
    meta = dict(meta)
    meta["train_goal_asts"] = tuple(parse_instruction(t) for t in meta["train_goals"])
    meta["zsl_goal_asts"] = tuple(parse_instruction(t) for t in meta["zsl_goals"])
    return cfg, gs, model, online, target, meta
