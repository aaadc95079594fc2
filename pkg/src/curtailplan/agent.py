"""From-scratch PPO for the two-axis dispatch action space.

Policy and value networks are plain numpy MLPs (three 256-unit hidden
layers; tanh, tanh, then relu ahead of the linear heads). Actions are
sampled from a diagonal Gaussian and squashed into the action box with
tanh, so log-densities stay exact for the clipped surrogate. Updates run
minibatch gradient steps with Adam over manually backpropagated
gradients; no autograd framework is involved.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import Action, Environment
from .errors import FormatError, NumericalError, ValidationError

HIDDEN = (256, 256, 256)
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)

CURVE_HEADER = "iteration,steps,return,profit,overactions"

# Checkpoint layout: magic, little-endian u32 array count, a shape table
# (u32 ndim then u32 dims per array), then the raw float64 little-endian
# row-major blocks in table order. Policy arrays precede value arrays.
CHECKPOINT_MAGIC = b"CURTPPO1"


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyParams:
    """Trunk weights/biases, the 2-wide mean head, and a state-independent
    log standard deviation clamped to [-20, 2]."""

    weights: tuple
    biases: tuple
    log_std: np.ndarray

    def violations(self) -> list[str]:
        out = _net_violations(self.weights, self.biases, head_dim=2)
        if self.log_std.shape != (2,):
            out.append(f"log_std shape {self.log_std.shape} != (2,)")
        elif not np.all(np.isfinite(self.log_std)):
            out.append("log_std has non-finite entries")
        return out

    @property
    def obs_dim(self) -> int:
        return self.weights[0].shape[0]


@dataclass(frozen=True)
class ValueParams:
    """Same trunk shape as the policy with a scalar linear head."""

    weights: tuple
    biases: tuple

    def violations(self) -> list[str]:
        return _net_violations(self.weights, self.biases, head_dim=1)

    @property
    def obs_dim(self) -> int:
        return self.weights[0].shape[0]


def _net_violations(weights, biases, head_dim: int) -> list[str]:
    out = []
    dims = (None,) + HIDDEN + (head_dim,)
    if len(weights) != 4 or len(biases) != 4:
        return [f"expected 4 layers, got {len(weights)} weights/{len(biases)} biases"]
    for k, (w, b) in enumerate(zip(weights, biases)):
        if dims[k] is not None and w.shape[0] != dims[k]:
            out.append(f"layer {k} input width {w.shape[0]} != {dims[k]}")
        if w.shape[1] != dims[k + 1] or b.shape != (dims[k + 1],):
            out.append(f"layer {k} output width mismatch")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            out.append(f"layer {k} has non-finite entries")
    return out


def _orthogonal(rng, m: int, n: int, gain: float) -> np.ndarray:
    """Orthogonal-style init: QR of a Gaussian draw, sign-fixed, scaled."""
    a = rng.standard_normal((max(m, n), min(m, n)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if m < n:
        q = q.T
    return gain * q[:m, :n]


def init_policy(obs_dim: int, rng) -> PolicyParams:
    if obs_dim < 1:
        raise ValidationError(f"obs_dim must be positive, got {obs_dim}")
    dims = (obs_dim,) + HIDDEN
    weights = [_orthogonal(rng, dims[k], dims[k + 1], math.sqrt(2.0))
               for k in range(3)]
    weights.append(_orthogonal(rng, HIDDEN[-1], 2, 0.01))
    biases = [np.zeros(d) for d in HIDDEN] + [np.zeros(2)]
    return PolicyParams(tuple(weights), tuple(biases), np.zeros(2))


def init_value(obs_dim: int, rng) -> ValueParams:
    if obs_dim < 1:
        raise ValidationError(f"obs_dim must be positive, got {obs_dim}")
    dims = (obs_dim,) + HIDDEN
    weights = [_orthogonal(rng, dims[k], dims[k + 1], math.sqrt(2.0))
               for k in range(3)]
    weights.append(_orthogonal(rng, HIDDEN[-1], 1, 1.0))
    biases = [np.zeros(d) for d in HIDDEN] + [np.zeros(1)]
    return ValueParams(tuple(weights), tuple(biases))


def _policy_list(p: PolicyParams) -> list:
    return [p.weights[0], p.biases[0], p.weights[1], p.biases[1],
            p.weights[2], p.biases[2], p.weights[3], p.biases[3], p.log_std]


def _policy_from_list(arrs: list) -> PolicyParams:
    return PolicyParams(
        weights=(arrs[0], arrs[2], arrs[4], arrs[6]),
        biases=(arrs[1], arrs[3], arrs[5], arrs[7]),
        log_std=arrs[8],
    )


def _value_list(p: ValueParams) -> list:
    return [p.weights[0], p.biases[0], p.weights[1], p.biases[1],
            p.weights[2], p.biases[2], p.weights[3], p.biases[3]]


def _value_from_list(arrs: list) -> ValueParams:
    return ValueParams(
        weights=(arrs[0], arrs[2], arrs[4], arrs[6]),
        biases=(arrs[1], arrs[3], arrs[5], arrs[7]),
    )


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _as_batch(obs, in_dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != in_dim:
        raise ValidationError(
            f"observation width {x.shape[1]} != network input {in_dim}"
        )
    return x, single


def _trunk(weights, biases, x):
    h1 = np.tanh(x @ weights[0] + biases[0])
    h2 = np.tanh(h1 @ weights[1] + biases[1])
    h3 = np.maximum(h2 @ weights[2] + biases[2], 0.0)
    return h1, h2, h3


def policy_forward(params: PolicyParams, obs):
    """Action mean(s) and the clamped log standard deviation."""
    x, single = _as_batch(obs, params.obs_dim)
    _, _, h3 = _trunk(params.weights, params.biases, x)
    mean = h3 @ params.weights[3] + params.biases[3]
    log_std = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)
    return (mean[0], log_std) if single else (mean, log_std)


def value_forward(params: ValueParams, obs):
    x, single = _as_batch(obs, params.obs_dim)
    _, _, h3 = _trunk(params.weights, params.biases, x)
    v = (h3 @ params.weights[3] + params.biases[3])[:, 0]
    return float(v[0]) if single else v


# ---------------------------------------------------------------------------
# squashed-Gaussian action distribution
# ---------------------------------------------------------------------------

def _log1m_tanh_sq(z):
    # log(1 - tanh(z)^2) in the overflow-safe form 2(log 2 - z - softplus(-2z)).
    z = np.asarray(z, dtype=np.float64)
    return 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


def squash(z) -> tuple[float, float]:
    """Map a pre-squash sample to the action box: bess in [-1, 1] by tanh,
    awe in [0, 1] by shifted tanh."""
    z = np.asarray(z, dtype=np.float64)
    return float(np.tanh(z[..., 0])), float(0.5 * (np.tanh(z[..., 1]) + 1.0))


def unsquash(action: Action) -> np.ndarray:
    """Recover the pre-squash sample; inverse of :func:`squash`."""
    return np.array([math.atanh(action.bess), math.atanh(2.0 * action.awe - 1.0)])


def action_log_prob(mean, log_std, z):
    """Squash-corrected log-density of pre-squash samples ``z`` under the
    Gaussian with the given mean and (clamped) log std. Batched over
    leading dimensions."""
    mean = np.asarray(mean, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    zc = (z - mean) * np.exp(-log_std)
    gauss = -0.5 * np.sum(zc * zc, axis=-1) - np.sum(log_std) - LOG_2PI
    correction = (_log1m_tanh_sq(z[..., 0])
                  + math.log(0.5) + _log1m_tanh_sq(z[..., 1]))
    return gauss - correction


def sample_action(mean, log_std, rng) -> tuple[Action, float]:
    """Draw one action; returns it with its squash-corrected log-density."""
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
        raise ValidationError("non-finite policy outputs")
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    z = mean + np.exp(log_std) * rng.standard_normal(2)
    bess, awe = squash(z)
    return Action(bess=bess, awe=awe), float(action_log_prob(mean, log_std, z))


def gaussian_entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian (the exploration bonus term)."""
    log_std = np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
    return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


# ---------------------------------------------------------------------------
# generalized advantage estimation
# ---------------------------------------------------------------------------

def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """advantage_t = sum_k (gamma*lam)^k delta_{t+k} with
    delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t; returns = adv + values.

    ``values`` aligns with ``rewards``; ``last_value`` bootstraps past the
    final step and is ignored when that step terminates."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if not (len(r) == len(v) == len(d)):
        raise ValidationError("rewards, values, and dones lengths differ")
    adv = np.empty(len(r))
    next_value = float(last_value)
    next_adv = 0.0
    for t in range(len(r) - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * next_value * live - v[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = v[t]
    return adv, adv + v


# ---------------------------------------------------------------------------
# batches and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RolloutBatch:
    """One update's worth of transitions. ``actions`` holds the pre-squash
    Gaussian samples so densities can be recomputed exactly under new
    parameters; advantages are normalized to zero mean/unit variance."""

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    def violations(self) -> list[str]:
        out = []
        n = len(self.rewards)
        for name in ("observations", "actions", "log_probs", "values",
                     "dones", "advantages", "returns"):
            arr = getattr(self, name)
            if len(arr) != n:
                out.append(f"{name} length {len(arr)} != {n}")
            elif not np.all(np.isfinite(arr)):
                out.append(f"{name} has non-finite entries")
        if n > 1 and not out:
            if abs(float(np.mean(self.advantages))) > 1e-6:
                out.append("advantages are not zero-mean")
        return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-5
    train_batch_size: int = 8000
    minibatch_size: int = 512
    epochs_per_batch: int = 10
    clip_epsilon: float = 0.2
    gamma: float = 0.999
    gae_lambda: float = 0.95
    entropy_coefficient: float = 0.0
    value_coefficient: float = 0.5
    total_steps: int = 2_000_000
    seed: int = 0
    rollout_streams: int = 8
    # Rewards are dollars per hour (1e4-1e5 scale); this factor brings
    # value-regression targets to order one without touching reported
    # profits, which stay in dollars.
    reward_scale: float = 1e-5

    def violations(self) -> list[str]:
        out = []
        if not 0.0 < self.clip_epsilon < 1.0:
            out.append(f"clip_epsilon {self.clip_epsilon} outside (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            out.append(f"gamma {self.gamma} outside (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            out.append(f"gae_lambda {self.gae_lambda} outside [0, 1]")
        if self.train_batch_size < 1 or self.minibatch_size < 1:
            out.append("batch sizes must be positive")
        if self.learning_rate <= 0:
            out.append(f"learning_rate {self.learning_rate} must be positive")
        if self.epochs_per_batch < 0:
            out.append("epochs_per_batch must be >= 0")
        if self.rollout_streams < 1:
            out.append("rollout_streams must be >= 1")
        if self.train_batch_size % self.rollout_streams != 0:
            out.append("rollout_streams must divide train_batch_size")
        if self.reward_scale <= 0:
            out.append("reward_scale must be positive")
        if self.total_steps < 0:
            out.append("total_steps must be >= 0")
        return out

    def validate(self) -> None:
        errs = self.violations()
        if errs:
            raise ValidationError("; ".join(errs))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class _AdamState:
    m: list
    v: list
    step: int = 0


def _adam_init(params: list) -> _AdamState:
    return _AdamState(m=[np.zeros_like(p) for p in params],
                      v=[np.zeros_like(p) for p in params])


def _adam_step(params: list, grads: list, state: _AdamState, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> list:
    state.step += 1
    t = state.step
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = state.m[k] / (1.0 - beta1 ** t)
        v_hat = state.v[k] / (1.0 - beta2 ** t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


# ---------------------------------------------------------------------------
# PPO loss with manual backpropagation
# ---------------------------------------------------------------------------

def ppo_loss_and_grads(policy: PolicyParams, value: ValueParams,
                       obs: np.ndarray, z: np.ndarray, old_log_probs: np.ndarray,
                       advantages: np.ndarray, returns: np.ndarray,
                       cfg: TrainConfig):
    """Total loss (clipped surrogate + value regression - entropy bonus)
    and its exact gradients in ``_policy_list``/``_value_list`` order."""
    n = len(obs)
    wp, bp = policy.weights, policy.biases

    h1 = np.tanh(obs @ wp[0] + bp[0])
    h2 = np.tanh(h1 @ wp[1] + bp[1])
    h3 = np.maximum(h2 @ wp[2] + bp[2], 0.0)
    mean = h3 @ wp[3] + bp[3]

    log_std = np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)
    inv_std = np.exp(-log_std)
    zc = (z - mean) * inv_std
    gauss = -0.5 * np.sum(zc * zc, axis=1) - np.sum(log_std) - LOG_2PI
    correction = (_log1m_tanh_sq(z[:, 0]) + math.log(0.5)
                  + _log1m_tanh_sq(z[:, 1]))
    new_lp = gauss - correction

    ratio = np.exp(new_lp - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * advantages
    take_unclipped = unclipped <= clipped
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))

    entropy = gaussian_entropy(log_std)

    wv, bv = value.weights, value.biases
    g1 = np.tanh(obs @ wv[0] + bv[0])
    g2 = np.tanh(g1 @ wv[1] + bv[1])
    g3 = np.maximum(g2 @ wv[2] + bv[2], 0.0)
    v_pred = (g3 @ wv[3] + bv[3])[:, 0]
    value_loss = float(np.mean((v_pred - returns) ** 2))

    loss = (policy_loss + cfg.value_coefficient * value_loss
            - cfg.entropy_coefficient * entropy)

    # d loss / d new_lp: the clipped branch has zero derivative in rho.
    dlp = np.where(take_unclipped, -advantages * ratio / n, 0.0)
    gmean = dlp[:, None] * (zc * inv_std)
    glogstd = np.sum(dlp[:, None] * (zc * zc - 1.0), axis=0)
    glogstd -= cfg.entropy_coefficient * np.ones(2)
    # Clamped components are insensitive to the raw parameter.
    glogstd *= (policy.log_std > LOG_STD_MIN) & (policy.log_std < LOG_STD_MAX)

    gw3 = h3.T @ gmean
    gb3 = gmean.sum(axis=0)
    gh3 = (gmean @ wp[3].T) * (h3 > 0.0)
    gw2 = h2.T @ gh3
    gb2 = gh3.sum(axis=0)
    gh2 = (gh3 @ wp[2].T) * (1.0 - h2 * h2)
    gw1 = h1.T @ gh2
    gb1 = gh2.sum(axis=0)
    gh1 = (gh2 @ wp[1].T) * (1.0 - h1 * h1)
    gw0 = obs.T @ gh1
    gb0 = gh1.sum(axis=0)
    policy_grads = [gw0, gb0, gw1, gb1, gw2, gb2, gw3, gb3, glogstd]

    dv = (cfg.value_coefficient * 2.0 * (v_pred - returns) / n)[:, None]
    vw3 = g3.T @ dv
    vb3 = dv.sum(axis=0)
    vg3 = (dv @ wv[3].T) * (g3 > 0.0)
    vw2 = g2.T @ vg3
    vb2 = vg3.sum(axis=0)
    vg2 = (vg3 @ wv[2].T) * (1.0 - g2 * g2)
    vw1 = g1.T @ vg2
    vb1 = vg2.sum(axis=0)
    vg1 = (vg2 @ wv[1].T) * (1.0 - g1 * g1)
    vw0 = obs.T @ vg1
    vb0 = vg1.sum(axis=0)
    value_grads = [vw0, vb0, vw1, vb1, vw2, vb2, vw3, vb3]

    diagnostics = {
        "loss": float(loss),
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(~take_unclipped)),
    }
    return float(loss), diagnostics, policy_grads, value_grads


def ppo_update(policy: PolicyParams, value: ValueParams, batch: RolloutBatch,
               cfg: TrainConfig, rng=None, opt_state=None):
    """Epochs of shuffled minibatch Adam steps over one rollout batch.

    Returns refreshed parameter sets and averaged loss diagnostics. A
    non-finite loss aborts with the offending minibatch named; the input
    parameters are never mutated, so the caller's copies stay usable.
    """
    errs = batch.violations()
    if errs:
        raise ValidationError("; ".join(errs))
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    pol = _policy_list(policy)
    val = _value_list(value)
    if opt_state is None:
        opt_state = (_adam_init(pol), _adam_init(val))
    opt_pol, opt_val = opt_state

    n = len(batch)
    totals: dict[str, float] = {}
    count = 0
    for epoch in range(cfg.epochs_per_batch):
        perm = rng.permutation(n)
        for k, lo in enumerate(range(0, n, cfg.minibatch_size)):
            sel = perm[lo : lo + cfg.minibatch_size]
            loss, diag, gp, gv = ppo_loss_and_grads(
                _policy_from_list(pol), _value_from_list(val),
                batch.observations[sel], batch.actions[sel],
                batch.log_probs[sel], batch.advantages[sel],
                batch.returns[sel], cfg,
            )
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch} minibatch {k}"
                )
            pol = _adam_step(pol, gp, opt_pol, cfg.learning_rate)
            val = _adam_step(val, gv, opt_val, cfg.learning_rate)
            for key, v in diag.items():
                totals[key] = totals.get(key, 0.0) + v
            count += 1
    diagnostics = {key: v / count for key, v in totals.items()} if count else {}
    diagnostics["minibatches"] = float(count)
    return _policy_from_list(pol), _value_from_list(val), diagnostics


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    steps: int
    mean_return: float
    mean_profit: float
    overactions: int


def curve_to_csv(curve) -> str:
    lines = [CURVE_HEADER]
    for p in curve:
        lines.append(f"{p.iteration},{p.steps},{p.mean_return!r},"
                     f"{p.mean_profit!r},{p.overactions}")
    return "\n".join(lines) + "\n"


class _Stream:
    """One rollout environment with its own sampling rng and running
    episode accumulators."""

    def __init__(self, env: Environment, rng):
        self.env = env
        self.rng = rng
        self.obs = np.asarray(env.reset().vector)
        self.episode_return = 0.0
        self.episode_profit = 0.0


def train(env_factory, cfg: TrainConfig):
    """Alternate rollout collection and clipped-surrogate updates.

    ``env_factory(i)`` must build the i-th independent environment.
    Returns (policy params, value params, learning curve); the curve
    logs one point per iteration with the mean completed-episode return,
    the mean completed-episode profit with the penalty term removed, and
    the count of penalized steps in the batch.
    """
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.rollout_streams + 2)
    init_rng = np.random.default_rng(seeds[-2])
    update_rng = np.random.default_rng(seeds[-1])

    streams = [_Stream(env_factory(i), np.random.default_rng(seeds[i]))
               for i in range(cfg.rollout_streams)]
    obs_dim = streams[0].env.observation_size
    for s in streams[1:]:
        if s.env.observation_size != obs_dim:
            raise ValidationError("environments disagree on observation size")

    policy = init_policy(obs_dim, init_rng)
    value = init_value(obs_dim, init_rng)
    curve: list[CurvePoint] = []
    if cfg.total_steps == 0:
        return policy, value, curve

    opt_state = (_adam_init(_policy_list(policy)), _adam_init(_value_list(value)))
    penalty_factor = streams[0].env.cfg.penalty_factor
    per_stream = cfg.train_batch_size // cfg.rollout_streams
    n_streams = cfg.rollout_streams
    steps_done = 0
    iteration = 0

    while steps_done < cfg.total_steps:
        obs_buf = np.empty((n_streams, per_stream, obs_dim))
        z_buf = np.empty((n_streams, per_stream, 2))
        lp_buf = np.empty((n_streams, per_stream))
        rew_buf = np.empty((n_streams, per_stream))
        val_buf = np.empty((n_streams, per_stream))
        done_buf = np.zeros((n_streams, per_stream))
        finished_returns: list[float] = []
        finished_profits: list[float] = []
        overactions = 0

        for t in range(per_stream):
            stacked = np.stack([s.obs for s in streams])
            means, log_std = policy_forward(policy, stacked)
            vals = value_forward(value, stacked)
            std = np.exp(log_std)
            for i, s in enumerate(streams):
                z = means[i] + std * s.rng.standard_normal(2)
                bess, awe = squash(z)
                result = s.env.step(Action(bess=bess, awe=awe))

                obs_buf[i, t] = s.obs
                z_buf[i, t] = z
                lp_buf[i, t] = action_log_prob(means[i], log_std, z)
                rew_buf[i, t] = result.reward * cfg.reward_scale
                val_buf[i, t] = vals[i]
                done_buf[i, t] = 1.0 if result.done else 0.0

                pen_dollars = result.penalty_raw * penalty_factor
                s.episode_return += result.reward
                s.episode_profit += result.reward + pen_dollars
                if result.penalty_raw > 0.0:
                    overactions += 1
                if result.done:
                    finished_returns.append(s.episode_return)
                    finished_profits.append(s.episode_profit)
                    s.episode_return = 0.0
                    s.episode_profit = 0.0
                    s.obs = np.asarray(s.env.reset().vector)
                else:
                    s.obs = np.asarray(result.observation.vector)

        tails = value_forward(value, np.stack([s.obs for s in streams]))
        adv_parts, ret_parts = [], []
        for i in range(n_streams):
            adv, ret = gae(rew_buf[i], val_buf[i], done_buf[i],
                           cfg.gamma, cfg.gae_lambda, last_value=float(tails[i]))
            adv_parts.append(adv)
            ret_parts.append(ret)
        advantages = np.concatenate(adv_parts)
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        batch = RolloutBatch(
            observations=obs_buf.reshape(-1, obs_dim),
            actions=z_buf.reshape(-1, 2),
            log_probs=lp_buf.ravel(),
            rewards=rew_buf.ravel(),
            values=val_buf.ravel(),
            dones=done_buf.ravel(),
            advantages=advantages,
            returns=np.concatenate(ret_parts),
        )
        policy, value, _ = ppo_update(policy, value, batch, cfg,
                                      rng=update_rng, opt_state=opt_state)

        steps_done += cfg.train_batch_size
        iteration += 1
        curve.append(CurvePoint(
            iteration=iteration,
            steps=steps_done,
            mean_return=float(np.mean(finished_returns)) if finished_returns else 0.0,
            mean_profit=float(np.mean(finished_profits)) if finished_profits else 0.0,
            overactions=overactions,
        ))
    return policy, value, curve


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, policy: PolicyParams, value: ValueParams) -> None:
    arrays = _policy_list(policy) + _value_list(value)
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(arrays))]
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
    for a in arrays:
        parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[PolicyParams, ValueParams]:
    blob = Path(path).read_bytes()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a parameter checkpoint")
    off = len(CHECKPOINT_MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, blob, off)
        off += size
        return out

    (count,) = take("<I")
    if count != 17:
        raise FormatError(f"{path}: expected 17 arrays, found {count}")
    shapes = []
    for _ in range(count):
        (ndim,) = take("<I")
        shapes.append(take(f"<{ndim}I"))
    arrays = []
    for shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        end = off + 8 * size
        if end > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        arrays.append(np.frombuffer(blob[off:end], dtype="<f8").reshape(shape).copy())
        off = end
    if off != len(blob):
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")

    policy = _policy_from_list(arrays[:9])
    value = _value_from_list(arrays[9:])
    errs = policy.violations() + value.violations()
    if errs:
        raise FormatError(f"{path}: malformed parameters: " + "; ".join(errs))
    return policy, value
