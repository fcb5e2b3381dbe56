"""Training orchestration: PPO, BC baselines, and their synergistic combination.

``run_training`` executes one seeded run of a chosen method:

* ``ppo``            - plain PPO.
* ``static_bc``      - the pre-trained cloning policy acting in the env,
                       never updated (flat baseline curve).
* ``dynamic_bc``     - the cloning policy alone, retrained online on its
                       own evaluation rollouts that beat the reward
                       threshold.
* ``ppo_static_bc``  - PPO plus the cross-entropy pull toward a frozen
                       expert.
* ``ppo_dynamic_bc`` - PPO plus the pull toward an expert that is
                       retrained on harvested high-reward evaluation
                       trajectories (the full synergistic loop).

Rollouts and updates alternate strictly every ``horizon`` steps; one
metrics row is emitted per rollout. Every ``eval_every`` steps (realized
at the first rollout boundary past each multiple) the acting policy is
evaluated; qualifying evaluation trajectories are harvested into the
demonstration dataset for dynamic methods, and the expert weight w3
drops from 1.0 to 0.2 (latched) once the agent's evaluation mean beats
the expert's.

A full-state checkpoint (nets, optimizers, dataset, env and RNG states,
metrics so far) is written after every evaluation, so interrupted runs
resume bit-exactly.
"""

from __future__ import annotations

import pickle
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from trackrl import rng as rngmod
from trackrl.bc import DemoDataset, Trajectory, train_bc
from trackrl.envs import make_env
from trackrl.envs.cliff import CliffCircularEnv
from trackrl.nets import Mlp, MultiCategorical, policy_net, save_weights, value_net
from trackrl.ppo import PpoConfig, PpoLearner, RolloutBuffer

METHODS = ("ppo", "static_bc", "dynamic_bc", "ppo_static_bc", "ppo_dynamic_bc")
GUIDED = ("ppo_static_bc", "ppo_dynamic_bc")
DYNAMIC = ("dynamic_bc", "ppo_dynamic_bc")
NEEDS_EXPERT = ("static_bc", "dynamic_bc", "ppo_static_bc", "ppo_dynamic_bc")

METRICS_SCHEMA = "trackrl-metrics-1"
METRICS_COLUMNS = ("step", "mean_ep_reward_100", "mean_ep_len_100", "eval_mean",
                   "eval_len", "w3", "dataset_transitions", "loss_policy",
                   "loss_value", "loss_action")

ENV_DEFAULTS = {
    "cliff": {"t_reward": 18.0, "eval_every": 10_000, "hidden": (64, 64), "time_limit": 128},
    "river": {"t_reward": 4.0, "eval_every": 5_000, "hidden": (256, 256), "time_limit": 400},
}


@dataclass
class SynergyConfig:
    env_id: str
    method: str
    seed: int
    total_steps: int
    t_reward: float | None = None
    eval_every: int | None = None
    eval_episodes: int = 10
    hidden: tuple[int, ...] | None = None
    time_limit: int | None = None
    map_path: str | None = None
    demos_path: str | None = None
    # PPO
    horizon: int = 1024
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    entropy_coef: float = 0.0
    value_coef: float = 1.0
    lr: float = 3e-4
    # BC
    bc_epochs: int = 50
    bc_retrain_epochs: int = 20
    bc_lr: float = 3e-4
    bc_minibatch: int = 64
    window: int = 2000
    bc_warm_start: bool = True
    # synergy
    w3_high: float = 1.0
    w3_low: float = 0.2
    harvest_enabled: bool = True
    expert_ce_mode: str = "distribution"

    def __post_init__(self):
        if self.env_id not in ENV_DEFAULTS:
            raise ValueError(f"unknown env {self.env_id!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.total_steps <= 0 or self.eval_episodes < 1:
            raise ValueError("total_steps and eval_episodes must be positive")
        if self.expert_ce_mode not in ("distribution", "sampled"):
            raise ValueError("expert_ce_mode must be 'distribution' or 'sampled'")
        d = ENV_DEFAULTS[self.env_id]
        if self.t_reward is None:
            self.t_reward = d["t_reward"]
        if self.eval_every is None:
            self.eval_every = d["eval_every"]
        if self.hidden is None:
            self.hidden = d["hidden"]
        if self.time_limit is None:
            self.time_limit = d["time_limit"]
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.eval_every <= 0 or self.time_limit <= 0:
            raise ValueError("cadences must be positive")
        if self.method in NEEDS_EXPERT and not self.demos_path:
            raise ValueError(f"method {self.method!r} needs a demonstration file (demos_path)")


@dataclass
class W3Schedule:
    """Expert-loss weight: high until the agent beats the expert, then low, latched."""

    high: float = 1.0
    low: float = 0.2
    latched: bool = False

    @property
    def value(self) -> float:
        return self.low if self.latched else self.high

    def update(self, eval_agent_mean: float, eval_expert_mean: float) -> float:
        if not self.latched and eval_agent_mean > eval_expert_mean:
            self.latched = True
        return self.value


@dataclass
class EvalResult:
    mean_reward: float
    mean_length: float
    trajectories: list[Trajectory]
    terminated_flags: list[bool]


def evaluate(actor, env, episodes: int, env_seed: int,
             sample_rng: np.random.Generator) -> EvalResult:
    """Seeded rollouts with stochastic action sampling.

    `actor(obs, rng) -> action` is whatever policy is being measured;
    full trajectories come back for harvesting.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    trajectories: list[Trajectory] = []
    flags: list[bool] = []
    obs = env.reset(seed=env_seed)
    for _ in range(episodes):
        obs_list, act_list, rew_list = [], [], []
        while True:
            action = actor(obs, sample_rng)
            result = env.step(action)
            obs_list.append(obs)
            act_list.append(action)
            rew_list.append(result.reward)
            obs = result.observation
            if result.terminated or result.truncated:
                flags.append(result.terminated)
                obs = env.reset()
                break
        trajectories.append(Trajectory(np.array(obs_list), np.array(act_list),
                                       np.array(rew_list)))
    rewards = [t.episodic_reward for t in trajectories]
    lengths = [len(t) for t in trajectories]
    return EvalResult(float(np.mean(rewards)), float(np.mean(lengths)), trajectories, flags)


def harvest(trajectories: list[Trajectory], t_reward: float) -> list[Trajectory]:
    """Trajectories whose episodic reward strictly exceeds the threshold."""
    return [t for t in trajectories if t.episodic_reward > t_reward]


@dataclass
class RunMetrics:
    rows: list[dict] = field(default_factory=list)

    def add(self, **kwargs) -> None:
        self.rows.append({k: kwargs[k] for k in METRICS_COLUMNS})

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def to_csv(self, path: str | Path) -> None:
        lines = [f"# schema: {METRICS_SCHEMA}", ",".join(METRICS_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row[c]) for c in METRICS_COLUMNS))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunMetrics":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != f"# schema: {METRICS_SCHEMA}":
            raise ValueError(f"{path}: unknown metrics schema")
        m = cls()
        for line in lines[2:]:
            vals = line.split(",")
            m.rows.append({c: (int(vals[i]) if c == "step" else float(vals[i]))
                           for i, c in enumerate(METRICS_COLUMNS)})
        return m


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class Trainer:
    """One seeded run; all mutable state lives here for checkpointing."""

    def __init__(self, cfg: SynergyConfig):
        self.cfg = cfg
        self.env = self._make_env()
        spec = self.env.spec
        self.cards = spec.action_branch_cardinalities
        self.obs_dim = spec.observation_dim
        self.is_ppo = cfg.method in ("ppo", *GUIDED)
        self.is_dynamic = cfg.method in DYNAMIC
        self.uses_expert = cfg.method in NEEDS_EXPERT

        self.sample_rng = rngmod.stream(cfg.seed, "policy-sample")
        self.minibatch_rng = rngmod.stream(cfg.seed, "minibatch")
        self.expert_ce_rng = rngmod.stream(cfg.seed, "expert-ce-sample")

        self.expert: Mlp | None = None
        self.dataset: DemoDataset | None = None
        self.eval_expert_mean = float("nan")
        if self.uses_expert:
            discrete = isinstance(self.env.env, CliffCircularEnv)
            self.dataset = DemoDataset.load_jsonl(cfg.demos_path, discrete_obs=discrete)
            obs, acts = self.dataset.all_transitions()
            self.expert, self.bc_accuracy = train_bc(
                obs, acts, self.cards, rngmod.stream(cfg.seed, "bc-train", 0),
                dims=[self.obs_dim, *cfg.hidden], epochs=cfg.bc_epochs,
                lr=cfg.bc_lr, batch_size=cfg.bc_minibatch,
            )
            self.eval_expert_mean = self._eval_expert(0).mean_reward

        if self.is_ppo:
            self.learner = PpoLearner(
                policy_net(self.obs_dim, cfg.hidden, self.cards,
                           rngmod.stream(cfg.seed, "policy-init")),
                value_net(self.obs_dim, cfg.hidden, rngmod.stream(cfg.seed, "value-init")),
                self.cards,
                PpoConfig(gamma=cfg.gamma, gae_lambda=cfg.gae_lambda, clip=cfg.clip,
                          epochs=cfg.epochs, minibatch=cfg.minibatch,
                          entropy_coef=cfg.entropy_coef, value_coef=cfg.value_coef,
                          lr=cfg.lr, horizon=cfg.horizon),
            )
            self.buffer = RolloutBuffer(cfg.horizon, self.obs_dim, len(self.cards))
        else:
            self.learner = None
            self.buffer = None

        self.w3 = W3Schedule(high=cfg.w3_high, low=cfg.w3_low)
        self.steps_done = 0
        self.evals_done = 0
        self.retrains_done = 0
        self.ep_rewards: deque[float] = deque(maxlen=100)
        self.ep_lengths: deque[int] = deque(maxlen=100)
        self.cur_ep_reward = 0.0
        self.cur_ep_len = 0
        self.last_eval_mean = float("nan")
        self.last_eval_len = float("nan")
        self.best_eval_mean = float("-inf")
        self.metrics = RunMetrics()
        self.obs = self.env.reset(seed=rngmod.stream_seed(cfg.seed, "env-train"))

    # -- environment helpers ----------------------------------------------------

    def _make_env(self):
        return make_env(self.cfg.env_id, map_path=self.cfg.map_path,
                        time_limit=self.cfg.time_limit)

    def _eval_expert(self, index: int) -> EvalResult:
        env = self._make_env()
        return evaluate(self._expert_actor, env, self.cfg.eval_episodes,
                        rngmod.stream_seed(self.cfg.seed, "env-eval-expert", index),
                        rngmod.stream(self.cfg.seed, "eval-sample-expert", index))

    # -- actors -------------------------------------------------------------------

    def _expert_actor(self, obs, rng):
        head = MultiCategorical(self.expert.forward1(obs), self.cards)
        return head.sample(rng)[0]

    def _acting_policy(self, obs, rng):
        if self.is_ppo:
            logits = self.learner.policy.forward1(obs)
        else:
            logits = self.expert.forward1(obs)
        return MultiCategorical(logits, self.cards).sample(rng)[0]

    @property
    def acting_net(self) -> Mlp:
        return self.learner.policy if self.is_ppo else self.expert

    # -- main loop ------------------------------------------------------------------

    def run(self, on_row=None) -> RunMetrics:
        """Alternate rollout collection and updates until total_steps."""
        while self.steps_done + self.cfg.horizon <= self.cfg.total_steps:
            stats = self._rollout_and_update()
            self._write_row(stats)
            if on_row is not None:
                on_row(self)
            while (self.steps_done // self.cfg.eval_every) > self.evals_done:
                self._evaluation_round()
        return self.metrics

    def _rollout_and_update(self):
        cfg = self.cfg
        if self.is_ppo:
            self.buffer.reset()
            for _ in range(cfg.horizon):
                action, log_prob, value = self.learner.act(self.obs, self.sample_rng)
                result = self.env.step(action)
                self._track_episode(result)
                bootstrap = 0.0
                if result.truncated:
                    bootstrap = self.learner.value_of(result.observation)
                self.buffer.add(self.obs, action, result.reward, value, log_prob,
                                result.terminated, result.truncated, bootstrap)
                if result.terminated or result.truncated:
                    self.obs = self.env.reset()
                else:
                    self.obs = result.observation
            self.buffer.last_value = self.learner.value_of(self.obs)
            self.steps_done += cfg.horizon
            use_expert = self.cfg.method in GUIDED
            return self.learner.update(
                self.buffer, self.minibatch_rng,
                expert=self.expert if use_expert else None,
                w3=self.w3.value if use_expert else 0.0,
                expert_ce_mode=cfg.expert_ce_mode,
                expert_rng=self.expert_ce_rng,
            )
        for _ in range(cfg.horizon):
            action = self._expert_actor(self.obs, self.sample_rng)
            result = self.env.step(action)
            self._track_episode(result)
            self.obs = self.env.reset() if (result.terminated or result.truncated) \
                else result.observation
        self.steps_done += cfg.horizon
        return None

    def _track_episode(self, result) -> None:
        self.cur_ep_reward += result.reward
        self.cur_ep_len += 1
        if result.terminated or result.truncated:
            self.ep_rewards.append(self.cur_ep_reward)
            self.ep_lengths.append(self.cur_ep_len)
            self.cur_ep_reward = 0.0
            self.cur_ep_len = 0

    def _write_row(self, stats) -> None:
        self.metrics.add(
            step=self.steps_done,
            mean_ep_reward_100=float(np.mean(self.ep_rewards)) if self.ep_rewards else float("nan"),
            mean_ep_len_100=float(np.mean(self.ep_lengths)) if self.ep_lengths else float("nan"),
            eval_mean=self.last_eval_mean,
            eval_len=self.last_eval_len,
            w3=self.w3.value if self.cfg.method in GUIDED else 0.0,
            dataset_transitions=self.dataset.n_transitions if self.dataset else 0,
            loss_policy=stats.loss_policy if stats else float("nan"),
            loss_value=stats.loss_value if stats else float("nan"),
            loss_action=stats.loss_action if stats else float("nan"),
        )

    def _evaluation_round(self) -> None:
        cfg = self.cfg
        self.evals_done += 1
        env = self._make_env()
        result = evaluate(self._acting_policy, env, cfg.eval_episodes,
                          rngmod.stream_seed(cfg.seed, "env-eval", self.evals_done),
                          rngmod.stream(cfg.seed, "eval-sample", self.evals_done))
        self.last_eval_mean = result.mean_reward
        self.last_eval_len = result.mean_length

        if self.is_dynamic and cfg.harvest_enabled:
            accepted = harvest(result.trajectories, cfg.t_reward)
            if accepted:
                for traj in accepted:
                    self.dataset.append_trajectory(traj)
                self.dataset.dedup()
                self.retrains_done += 1
                obs, acts = self.dataset.latest_window(cfg.window)
                self.expert, self.bc_accuracy = train_bc(
                    obs, acts, self.cards,
                    rngmod.stream(cfg.seed, "bc-train", self.retrains_done),
                    net=self.expert if cfg.bc_warm_start else None,
                    dims=[self.obs_dim, *cfg.hidden],
                    epochs=cfg.bc_retrain_epochs, lr=cfg.bc_lr,
                    batch_size=cfg.bc_minibatch,
                )
                if cfg.method in GUIDED and not self.w3.latched:
                    self.eval_expert_mean = self._eval_expert(self.retrains_done).mean_reward

        if cfg.method in GUIDED:
            self.w3.update(result.mean_reward, self.eval_expert_mean)

        if result.mean_reward > self.best_eval_mean:
            self.best_eval_mean = result.mean_reward
            self._on_best()
        self._on_checkpoint()

    # Hooks the run driver overrides to write files.
    def _on_best(self) -> None:
        pass

    def _on_checkpoint(self) -> None:
        pass

    # -- checkpointing -----------------------------------------------------------------

    def state_dict(self) -> dict:
        state = {
            "config": {f.name: getattr(self.cfg, f.name) for f in fields(self.cfg)},
            "steps_done": self.steps_done,
            "evals_done": self.evals_done,
            "retrains_done": self.retrains_done,
            "env": self.env.get_state(),
            "obs": self.obs.copy(),
            "sample_rng": rngmod.get_state(self.sample_rng),
            "minibatch_rng": rngmod.get_state(self.minibatch_rng),
            "expert_ce_rng": rngmod.get_state(self.expert_ce_rng),
            "ep_rewards": list(self.ep_rewards),
            "ep_lengths": list(self.ep_lengths),
            "cur_ep_reward": self.cur_ep_reward,
            "cur_ep_len": self.cur_ep_len,
            "last_eval_mean": self.last_eval_mean,
            "last_eval_len": self.last_eval_len,
            "best_eval_mean": self.best_eval_mean,
            "w3_latched": self.w3.latched,
            "eval_expert_mean": self.eval_expert_mean,
            "metrics_rows": list(self.metrics.rows),
        }
        if self.is_ppo:
            state["policy"] = [p.copy() for p in self.learner.policy.params]
            state["value"] = [p.copy() for p in self.learner.value.params]
            state["policy_opt"] = self.learner.policy_opt.state_dict()
            state["value_opt"] = self.learner.value_opt.state_dict()
        if self.uses_expert:
            state["expert"] = [p.copy() for p in self.expert.params]
            state["dataset"] = {
                "trajectories": [(t.observations, t.actions, t.rewards)
                                 for t in self.dataset.trajectories],
                "flat_obs": list(self.dataset._flat_obs),
                "flat_acts": list(self.dataset._flat_acts),
            }
        return state

    def load_state_dict(self, state: dict) -> None:
        cfg_now = {f.name: getattr(self.cfg, f.name) for f in fields(self.cfg)}
        if state["config"] != cfg_now:
            raise ValueError("checkpoint config does not match the run config")
        self.steps_done = state["steps_done"]
        self.evals_done = state["evals_done"]
        self.retrains_done = state["retrains_done"]
        self.env.set_state(state["env"])
        self.obs = np.array(state["obs"])
        rngmod.set_state(self.sample_rng, state["sample_rng"])
        rngmod.set_state(self.minibatch_rng, state["minibatch_rng"])
        rngmod.set_state(self.expert_ce_rng, state["expert_ce_rng"])
        self.ep_rewards = deque(state["ep_rewards"], maxlen=100)
        self.ep_lengths = deque(state["ep_lengths"], maxlen=100)
        self.cur_ep_reward = state["cur_ep_reward"]
        self.cur_ep_len = state["cur_ep_len"]
        self.last_eval_mean = state["last_eval_mean"]
        self.last_eval_len = state["last_eval_len"]
        self.best_eval_mean = state["best_eval_mean"]
        self.w3.latched = state["w3_latched"]
        self.eval_expert_mean = state["eval_expert_mean"]
        self.metrics.rows = list(state["metrics_rows"])
        if self.is_ppo:
            for p, saved in zip(self.learner.policy.params, state["policy"]):
                p[...] = saved
            for p, saved in zip(self.learner.value.params, state["value"]):
                p[...] = saved
            self.learner.policy_opt.load_state_dict(state["policy_opt"])
            self.learner.value_opt.load_state_dict(state["value_opt"])
        if self.uses_expert:
            for p, saved in zip(self.expert.params, state["expert"]):
                p[...] = saved
            ds = self.dataset
            ds.trajectories = [Trajectory(o, a, r) for o, a, r in state["dataset"]["trajectories"]]
            ds._flat_obs = list(state["dataset"]["flat_obs"])
            ds._flat_acts = list(state["dataset"]["flat_acts"])
            ds._seen = {ds._key(o, a) for o, a in zip(ds._flat_obs, ds._flat_acts)}


def run_training(cfg: SynergyConfig, out_dir: str | Path, resume: bool = False,
                 log=None) -> RunMetrics:
    """Execute one run, writing metrics, checkpoints, and weight files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    ckpt_path = ckpt_dir / "latest.ckpt"

    trainer = Trainer(cfg)

    def save_checkpoint():
        tmp = ckpt_path.with_suffix(".tmp")
        with open(tmp, "wb") as f:
            pickle.dump(trainer.state_dict(), f)
        tmp.replace(ckpt_path)

    def save_best():
        save_weights(out / "weights_best.wts", trainer.acting_net, trainer.cards)

    trainer._on_checkpoint = save_checkpoint
    trainer._on_best = save_best

    if resume:
        if not ckpt_path.exists():
            raise FileNotFoundError(f"no checkpoint to resume from in {ckpt_dir}")
        with open(ckpt_path, "rb") as f:
            trainer.load_state_dict(pickle.load(f))

    def on_row(t: Trainer):
        t.metrics.to_csv(out / "metrics.csv")
        if log is not None and (len(t.metrics.rows) % 10 == 0):
            row = t.metrics.rows[-1]
            log(f"step {row['step']}: reward100={row['mean_ep_reward_100']:.2f} "
                f"len100={row['mean_ep_len_100']:.1f} eval={row['eval_mean']:.2f} "
                f"w3={row['w3']:.1f} D={row['dataset_transitions']}")

    metrics = trainer.run(on_row=on_row)
    metrics.to_csv(out / "metrics.csv")
    save_weights(out / "weights_final.wts", trainer.acting_net, trainer.cards)
    if not (out / "weights_best.wts").exists():
        save_best()
    if trainer.uses_expert:
        save_weights(out / "weights_expert.wts", trainer.expert, trainer.cards)
    return metrics
