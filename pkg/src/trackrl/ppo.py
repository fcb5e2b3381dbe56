"""PPO learner: rollout buffer, GAE, clipped losses, expert guidance term.

The policy and value losses are standard clipped-surrogate PPO. When an
expert policy is supplied, its full per-branch action distribution is
queried on each minibatch and a cross-entropy pull toward it is added
with weight w3 (sampled-action one-hot targets are available as a
fallback switch); the total objective is
``w1 * L_policy + w2 * L_value + w3 * L_action``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trackrl import kernels
from trackrl.nets import Adam, Mlp, MultiCategorical


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 10
    minibatch: int = 64
    entropy_coef: float = 0.0
    value_coef: float = 1.0   # w2
    policy_coef: float = 1.0  # w1
    lr: float = 3e-4
    horizon: int = 1024

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip <= 0.0:
            raise ValueError("clip must be positive")


class RolloutBuffer:
    """Fixed-horizon transition store; episodes may span buffer boundaries.

    ``bootstrap_values`` holds V(s_{t+1}) for time-limit truncated steps
    (terminated steps bootstrap 0); ``last_value`` is V of the
    observation after the final step when the buffer ends mid-episode.
    """

    def __init__(self, horizon: int, obs_dim: int, n_branches: int):
        self.horizon = horizon
        self.obs = np.zeros((horizon, obs_dim))
        self.actions = np.zeros((horizon, n_branches), dtype=np.int64)
        self.rewards = np.zeros(horizon)
        self.values = np.zeros(horizon)
        self.log_probs = np.zeros(horizon)
        self.terminated = np.zeros(horizon, dtype=bool)
        self.truncated = np.zeros(horizon, dtype=bool)
        self.bootstrap_values = np.zeros(horizon)
        self.last_value = 0.0
        self.pos = 0

    @property
    def full(self) -> bool:
        return self.pos == self.horizon

    def add(self, obs, action, reward, value, log_prob, terminated, truncated,
            bootstrap_value=0.0) -> None:
        i = self.pos
        if i >= self.horizon:
            raise ValueError("rollout buffer is full")
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.values[i] = value
        self.log_probs[i] = log_prob
        self.terminated[i] = terminated
        self.truncated[i] = truncated
        self.bootstrap_values[i] = bootstrap_value
        self.pos += 1

    def reset(self) -> None:
        self.pos = 0
        self.last_value = 0.0


def compute_gae(rewards, values, terminated, truncated, bootstrap_values,
                last_value: float, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns (advantage + value) over one rollout."""
    arrays = [np.asarray(a, dtype=np.float64) for a in (rewards, values, bootstrap_values)]
    n = arrays[0].shape[0]
    for a in arrays:
        if a.shape[0] != n:
            raise ValueError("length mismatch between GAE inputs")
    term = np.asarray(terminated, dtype=bool)
    trunc = np.asarray(truncated, dtype=bool)
    if term.shape[0] != n or trunc.shape[0] != n:
        raise ValueError("length mismatch between GAE inputs")
    adv = kernels.gae_scan(arrays[0], arrays[1], term, trunc, arrays[2],
                           last_value, gamma, lam)
    return adv, adv + arrays[1]


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std per minibatch (SB3-style); guards zero variance."""
    std = adv.std()
    return (adv - adv.mean()) / max(std, 1e-8)


def clipped_losses(new_log_probs, old_log_probs, advantages, value_preds, returns,
                   clip: float) -> tuple[float, float]:
    """Clipped surrogate policy loss and value MSE (forward only)."""
    ratio = np.exp(new_log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    l_policy = -np.minimum(unclipped, clipped).mean()
    l_value = np.mean((returns - value_preds) ** 2)
    return float(l_policy), float(l_value)


def policy_value_losses(policy: Mlp, value: Mlp, cards: tuple[int, ...],
                        obs, actions, old_log_probs, advantages, returns,
                        clip: float) -> tuple[float, float, float]:
    """Forward-only loss evaluation on a batch: (L_policy, L_value, mean entropy)."""
    logits, _ = policy.forward(obs)
    head = MultiCategorical(logits, cards)
    new_lp = head.log_prob(actions)
    v_pred, _ = value.forward(obs)
    l_policy, l_value = clipped_losses(new_lp, old_log_probs, advantages,
                                       v_pred[:, 0], returns, clip)
    return l_policy, l_value, float(head.entropy().mean())


def action_loss(expert_probs: list[np.ndarray], policy_log_probs: list[np.ndarray]) -> float:
    """Mean cross entropy from the expert's to the policy's distribution.

    Per sample: -sum over branches and actions of pi_E(a|s) log pi(a|s).
    """
    if len(expert_probs) != len(policy_log_probs):
        raise ValueError("branch count mismatch between expert and policy")
    total = 0.0
    for ep, lp in zip(expert_probs, policy_log_probs):
        if ep.shape != lp.shape:
            raise ValueError("branch support mismatch between expert and policy")
        total += -(ep * lp).sum(axis=1).mean()
    return float(total)


def combined_loss(l_policy: float, l_value: float, l_action: float,
                  w1: float, w2: float, w3: float) -> float:
    return w1 * l_policy + w2 * l_value + w3 * l_action


@dataclass
class UpdateStats:
    loss_policy: float
    loss_value: float
    loss_action: float
    entropy: float
    approx_kl: float
    clip_fraction: float


class PpoLearner:
    """Owns the policy/value nets and their optimizers."""

    def __init__(self, policy: Mlp, value: Mlp, cards: tuple[int, ...], config: PpoConfig):
        self.policy = policy
        self.value = value
        self.cards = cards
        self.config = config
        self.policy_opt = Adam(policy.params, lr=config.lr)
        self.value_opt = Adam(value.params, lr=config.lr)

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float, float]:
        """(action, log_prob, value estimate) for a single observation."""
        logits = self.policy.forward1(obs)
        head = MultiCategorical(logits, self.cards)
        action = head.sample(rng)[0]
        log_prob = float(head.log_prob(action[None, :])[0])
        value = float(self.value.forward1(obs)[0])
        return action, log_prob, value

    def value_of(self, obs: np.ndarray) -> float:
        return float(self.value.forward1(obs)[0])

    def update(self, buffer: RolloutBuffer, rng: np.random.Generator,
               expert: Mlp | None = None, w3: float = 0.0,
               expert_ce_mode: str = "distribution",
               expert_rng: np.random.Generator | None = None) -> UpdateStats:
        """Epochs x minibatch sweeps over a full buffer.

        Advantages are normalized per minibatch. With an expert present
        and w3 != 0, the expert's distributions are queried on minibatch
        observations and the cross-entropy term joins the policy gradient.
        """
        if buffer.pos == 0:
            raise ValueError("empty rollout buffer")
        cfg = self.config
        n = buffer.pos
        adv_all, ret_all = compute_gae(
            buffer.rewards[:n], buffer.values[:n], buffer.terminated[:n],
            buffer.truncated[:n], buffer.bootstrap_values[:n], buffer.last_value,
            cfg.gamma, cfg.gae_lambda,
        )

        use_expert = expert is not None and w3 != 0.0
        sums = np.zeros(6)
        count = 0
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                mb = order[start:start + cfg.minibatch]
                b = len(mb)
                obs = buffer.obs[mb]
                actions = buffer.actions[mb]
                old_lp = buffer.log_probs[mb]
                adv = normalize_advantages(adv_all[mb]) if b > 1 else adv_all[mb]
                ret = ret_all[mb]

                logits, cache = self.policy.forward(obs)
                head = MultiCategorical(logits, self.cards)
                new_lp = head.log_prob(actions)
                ratio = np.exp(new_lp - old_lp)
                unclipped = ratio * adv
                clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
                l_policy = -np.minimum(unclipped, clipped).mean()
                entropy = head.entropy()

                # d l_policy / d new_lp: gradient flows only where the
                # unclipped branch is active (ties included). w1 scales
                # the surrogate term here; w3 scales the expert term below.
                active = unclipped <= clipped
                dlp = np.where(active, -adv * ratio, 0.0) * (cfg.policy_coef / b)

                dlogits = np.empty_like(logits)
                start_col = 0
                rows = np.arange(b)
                probs = head.probs
                for i, c in enumerate(self.cards):
                    p = probs[i]
                    one_hot = np.zeros_like(p)
                    one_hot[rows, actions[:, i]] = 1.0
                    dlogits[:, start_col:start_col + c] = dlp[:, None] * (one_hot - p)
                    if cfg.entropy_coef != 0.0:
                        lp_b = head.branch_log_probs[i]
                        h_b = -(p * lp_b).sum(axis=1, keepdims=True)
                        dlogits[:, start_col:start_col + c] += (
                            cfg.entropy_coef / b) * p * (lp_b + h_b)
                    start_col += c

                l_action = 0.0
                if use_expert:
                    e_logits, _ = expert.forward(obs)
                    e_head = MultiCategorical(e_logits, self.cards)
                    if expert_ce_mode == "sampled":
                        e_actions = e_head.sample(expert_rng)
                        e_probs = []
                        for i, c in enumerate(self.cards):
                            oh = np.zeros((b, c))
                            oh[rows, e_actions[:, i]] = 1.0
                            e_probs.append(oh)
                    else:
                        e_probs = e_head.probs
                    start_col = 0
                    for i, c in enumerate(self.cards):
                        p = probs[i]
                        l_action += -(e_probs[i] * head.branch_log_probs[i]).sum(axis=1).mean()
                        dlogits[:, start_col:start_col + c] += (w3 / b) * (p - e_probs[i])
                        start_col += c

                grads = self.policy.backward(cache, dlogits)
                self.policy_opt.step(self.policy.params, grads)

                v_pred, v_cache = self.value.forward(obs)
                l_value = np.mean((ret - v_pred[:, 0]) ** 2)
                dv = (cfg.value_coef * 2.0 / b) * (v_pred[:, 0] - ret)
                v_grads = self.value.backward(v_cache, dv[:, None])
                self.value_opt.step(self.value.params, v_grads)

                with np.errstate(over="ignore"):
                    approx_kl = float(np.mean(old_lp - new_lp))
                clip_frac = float(np.mean(np.abs(ratio - 1.0) > cfg.clip))
                sums += (l_policy, l_value, l_action, entropy.mean(), approx_kl, clip_frac)
                count += 1

        means = sums / count
        return UpdateStats(
            loss_policy=float(means[0]),
            loss_value=float(means[1]),
            loss_action=float(means[2]) if use_expert else float("nan"),
            entropy=float(means[3]),
            approx_kl=float(means[4]),
            clip_fraction=float(means[5]),
        )
