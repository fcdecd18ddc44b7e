"""Hybrid discrete-continuous soft actor-critic.

The policy factorizes as pi(d, c | s) = pi_d(d|s) * pi_c(c|d, s): a categorical
head over gate placements and, per placement, a tanh-squashed Gaussian over the
angle, bounded to (-pi, pi). Twin critics take (observation, angle) and emit one
Q value per discrete action; per-action evaluation reuses the observation part
of the first layer so the expectation over all placements costs one batched
pass through the remaining layers.

All loss gradients are derived by hand and validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .env import HybridAction, Transition
from .nn import Adam, Mlp

U_A = -math.pi
U_B = math.pi
_HALF_RANGE = (U_B - U_A) / 2.0
_CENTER = (U_B + U_A) / 2.0
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _log1m_tanh2(z):
    """log(1 - tanh(z)^2), stable for large |z|."""
    return 2.0 * (math.log(2.0) - z - _softplus(-2.0 * z))


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def squash(z):
    """Affine-tanh map from pre-squash values onto (U_A, U_B)."""
    return _CENTER + _HALF_RANGE * np.tanh(z)


@lru_cache(maxsize=None)
def max_squashed_entropy(log_std_min: float = LOG_STD_MIN, log_std_max: float = LOG_STD_MAX) -> float:
    """Largest differential entropy a squashed Gaussian can reach under the log-std clamp.

    Maximized over the zero-mean scale range by quadrature; the mean only moves
    probability mass toward a boundary, which cannot raise the entropy.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(200)
    best = -np.inf
    for log_sigma in np.linspace(log_std_min, log_std_max, 600):
        sigma = math.exp(log_sigma)
        z = math.sqrt(2.0) * sigma * nodes
        jac = float(weights @ _log1m_tanh2(z)) / math.sqrt(math.pi)
        h = 0.5 * math.log(2.0 * math.pi * math.e * sigma**2) + math.log(_HALF_RANGE) + jac
        best = max(best, h)
    return best


@dataclass
class TargetEntropySchedule:
    """Exponential decay of the two target entropies over the training horizon."""

    h_start_d: float
    h_end_d: float
    beta_d: float
    h_start_c: float
    h_end_c: float
    beta_c: float
    t_total: int

    @classmethod
    def from_deductions(
        cls,
        n_actions: int,
        deduction_d: float,
        deduction_c: float,
        h_end_d: float,
        h_end_c: float,
        beta_d: float,
        beta_c: float,
        t_total: int,
    ) -> "TargetEntropySchedule":
        """Start values sit a configured deduction below the maximal entropies."""
        return cls(
            h_start_d=math.log(n_actions) - deduction_d,
            h_end_d=h_end_d,
            beta_d=beta_d,
            h_start_c=max_squashed_entropy() - deduction_c,
            h_end_c=h_end_c,
            beta_c=beta_c,
            t_total=t_total,
        )

    def targets(self, t_current: int) -> tuple[float, float]:
        frac = t_current / self.t_total if self.t_total > 0 else 1.0
        h_d = self.h_end_d + (self.h_start_d - self.h_end_d) * math.exp(-self.beta_d * frac)
        h_c = self.h_end_c + (self.h_start_c - self.h_end_c) * math.exp(-self.beta_c * frac)
        return h_d, h_c


class Temperatures:
    """Learned entropy coefficients, kept positive through log parameterization."""

    def __init__(self, lr_d: float, lr_c: float, init_d: float = 1.0, init_c: float = 1.0):
        self.log_alpha_d = np.array(math.log(init_d))
        self.log_alpha_c = np.array(math.log(init_c))
        self._adam_d = Adam([self.log_alpha_d], lr=lr_d)
        self._adam_c = Adam([self.log_alpha_c], lr=lr_c)

    @property
    def alpha_d(self) -> float:
        return float(np.exp(self.log_alpha_d))

    @property
    def alpha_c(self) -> float:
        return float(np.exp(self.log_alpha_c))

    def step(self, loss_d: float, loss_c: float) -> None:
        """One descent step on each temperature loss.

        With J(alpha) = alpha * (H - H_target), the gradient with respect to
        log alpha equals J itself, so the loss doubles as its own gradient.
        """
        self._adam_d.step([self.log_alpha_d], [np.array(loss_d)])
        self._adam_c.step([self.log_alpha_c], [np.array(loss_c)])


class Actor:
    """Trunk network emitting, per discrete action, a logit, an angle mean, and a log-std."""

    def __init__(self, obs_size: int, n_actions: int, hidden, rng, dtype=np.float32):
        self.n_actions = n_actions
        self.net = Mlp([obs_size, *hidden, 3 * n_actions], rng, dtype=dtype)

    def heads(self, obs: np.ndarray):
        """(logits, mu, clamped log-std, clamp-interior mask, trunk cache) for a batch."""
        out, cache = self.net.forward_cached(obs)
        k = self.n_actions
        logits = out[..., :k]
        mu = out[..., k : 2 * k]
        raw = out[..., 2 * k :]
        interior = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        return logits, mu, log_std, interior, cache


def log_pdf_squashed(log_std, eps, z):
    """log pi_c of the squashed sample u(z); includes the tanh change of variables."""
    return (
        -0.5 * eps**2
        - log_std
        - 0.5 * _LOG_2PI
        - math.log(_HALF_RANGE)
        - _log1m_tanh2(z)
    )


def sample_action(actor: Actor, obs: np.ndarray, rng: np.random.Generator):
    """Draw one hybrid action; returns (action, log pi_d(d|s), log pi_c(c|d,s))."""
    logits, mu, log_std, _, _ = actor.heads(obs)
    lp = _log_softmax(logits.astype(np.float64))
    p = np.exp(lp)
    d = int(np.searchsorted(np.cumsum(p), rng.random()))
    d = min(d, actor.n_actions - 1)
    eps = rng.standard_normal()
    sigma = math.exp(float(log_std[d]))
    z = float(mu[d]) + sigma * eps
    c = float(squash(z))
    log_pc = float(log_pdf_squashed(float(log_std[d]), eps, z))
    return HybridAction(d=d, c=c), float(lp[d]), log_pc


def deterministic_action(actor: Actor, obs: np.ndarray) -> HybridAction:
    """Most likely placement with the squashed mean angle (zero noise)."""
    logits, mu, _, _, _ = actor.heads(obs)
    d = int(np.argmax(logits))
    return HybridAction(d=d, c=float(squash(float(mu[d]))))


def random_action(n_actions: int, rng: np.random.Generator) -> HybridAction:
    """Uniform warm-up action: any placement, any angle in (-pi, pi]."""
    d = int(rng.integers(n_actions))
    c = U_B - rng.uniform(0.0, U_B - U_A)
    return HybridAction(d=d, c=float(c))


def entropies(actor: Actor, obs: np.ndarray, rng: np.random.Generator):
    """Exact discrete entropy and a one-sample-per-action continuous entropy estimate."""
    single = np.asarray(obs).ndim == 1
    batch = np.atleast_2d(obs)
    eps = rng.standard_normal((batch.shape[0], actor.n_actions))
    h_d, h_c, _ = _entropy_terms(actor, batch, eps)
    if single:
        return float(h_d[0]), float(h_c[0])
    return h_d, h_c


def _entropy_terms(actor: Actor, obs: np.ndarray, eps: np.ndarray):
    logits, mu, log_std, _, _ = actor.heads(obs)
    lp = _log_softmax(logits)
    p = np.exp(lp)
    z = mu + np.exp(log_std) * eps
    log_pc = log_pdf_squashed(log_std, eps, z)
    h_d = -(p * lp).sum(axis=1)
    h_c = -(p * log_pc).sum(axis=1)
    return h_d, h_c, (lp, p, z, log_pc)


class CriticPair:
    """Twin online value networks plus target copies used for bootstrap estimates."""

    def __init__(self, obs_size: int, n_actions: int, hidden, rng, dtype=np.float32):
        self.n_actions = n_actions
        self.q1 = Mlp([obs_size + 1, *hidden, n_actions], rng, dtype=dtype)
        self.q2 = Mlp([obs_size + 1, *hidden, n_actions], rng, dtype=dtype)
        self.t1 = self.q1.copy()
        self.t2 = self.q2.copy()


def polyak_update(critic: CriticPair, rho: float) -> None:
    """Blend target parameters as rho * target + (1 - rho) * online, both targets."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    for target, online in ((critic.t1, critic.q1), (critic.t2, critic.q2)):
        for pt, po in zip(target.parameters(), online.parameters()):
            pt *= rho
            pt += (1.0 - rho) * po


def _per_d_forward(net: Mlp, obs: np.ndarray, c: np.ndarray, want_cache: bool):
    """Q values for every discrete action with its own continuous input.

    ``obs`` is (B, O), ``c`` is (B, K): row b is evaluated K times, once per
    action column d with input (obs_b, c[b, d]), reading output component d.
    The observation part of the first layer is computed once per row, and only
    the diagonal of the output layer is formed.
    """
    b_rows, k = c.shape
    w1, b1 = net.weights[0], net.biases[0]
    obs = np.asarray(obs, dtype=net.dtype)
    base = obs @ w1[:-1] + b1
    h = np.multiply(c.astype(net.dtype).reshape(-1, 1), w1[-1])
    h3 = h.reshape(b_rows, k, -1)
    h3 += base[:, None, :]
    n_layers = len(net.weights)
    if n_layers == 1:
        cols = np.arange(k)
        q = h.reshape(b_rows, k, k)[:, cols, cols]
        return q, ([h] if want_cache else None)
    np.maximum(h, 0.0, out=h)
    hs = [h]
    for i in range(1, n_layers - 1):
        h = h @ net.weights[i]
        h += net.biases[i]
        np.maximum(h, 0.0, out=h)
        hs.append(h)
    w_rows = _output_rows(net, b_rows, k)
    q = np.einsum("rh,rh->r", hs[-1], w_rows).reshape(b_rows, k)
    q += net.biases[-1][None, :]
    return q, ((hs, w_rows) if want_cache else None)


def _output_rows(net: Mlp, b_rows: int, k: int) -> np.ndarray:
    """Output-layer weight column for each (row, d) pair, rows ordered (b, d)."""
    drow = np.tile(np.arange(k), b_rows)
    return net.weights[-1].T[drow]


def _per_d_dqdc(net: Mlp, cache, b_rows: int, k: int, rows: np.ndarray | None = None):
    """d q[b, d] / d c[b, d] for the per-action evaluation of :func:`_per_d_forward`.

    ``rows`` restricts the backward pass to a subset of flat (b, d) rows;
    entries outside it are returned as zero.
    """
    n_layers = len(net.weights)
    w_c = net.weights[0][-1]
    if n_layers == 1:
        drow = np.tile(np.arange(k), b_rows)
        out = w_c[drow]
        if rows is not None:
            keep = np.zeros(b_rows * k, dtype=bool)
            keep[rows] = True
            out = np.where(keep, out, 0.0)
        return out.reshape(b_rows, k)
    hs, w_rows = cache
    if rows is None:
        rows = slice(None)
        flat = np.empty(b_rows * k, dtype=net.dtype)
    else:
        flat = np.zeros(b_rows * k, dtype=net.dtype)
    delta = w_rows[rows] * (hs[n_layers - 2][rows] > 0)
    for i in range(n_layers - 2, 0, -1):
        delta = (delta @ net.weights[i].T) * (hs[i - 1][rows] > 0)
    flat[rows] = delta @ w_c
    return flat.reshape(b_rows, k)


def critic_target(
    actor: Actor,
    critic: CriticPair,
    temps: Temperatures,
    obs_next: np.ndarray,
    rewards: np.ndarray,
    done: np.ndarray,
    gamma: float,
    eps: np.ndarray,
):
    """Bootstrap target y = r + gamma(1-done) E[min_j Q_target_j + entropy bonuses].

    The expectation over the next action sums over every discrete action with
    one shared squashed sample per (state, action) fed to both target networks.
    Returns (y, parts) where parts carries the per-network pieces for checks.
    """
    logits, mu, log_std, _, _ = actor.heads(obs_next)
    lp = _log_softmax(logits)
    p = np.exp(lp)
    z = mu + np.exp(log_std) * eps
    u = squash(z)
    log_pc = log_pdf_squashed(log_std, eps, z)
    q1t, _ = _per_d_forward(critic.t1, obs_next, u, want_cache=False)
    q2t, _ = _per_d_forward(critic.t2, obs_next, u, want_cache=False)
    qmin = np.minimum(q1t, q2t)
    h_d = -(p * lp).sum(axis=1)
    not_done = 1.0 - done.astype(np.float64)

    def assemble(qv):
        inner = (p * (qv - temps.alpha_c * log_pc)).sum(axis=1) + temps.alpha_d * h_d
        return rewards + gamma * not_done * inner.astype(np.float64)

    y = assemble(qmin)
    parts = {"q1t": q1t, "q2t": q2t, "y1": assemble(q1t), "y2": assemble(q2t)}
    return y, parts


def critic_loss_and_grads(
    critic: CriticPair,
    obs: np.ndarray,
    action_d: np.ndarray,
    action_c: np.ndarray,
    y: np.ndarray,
):
    """Mean squared Bellman error 0.5 (Q_i(s, a) - y)^2 for both online critics."""
    b_rows = len(obs)
    x = np.concatenate([obs, action_c[:, None]], axis=1)
    rows = np.arange(b_rows)
    losses = []
    grads = []
    for net in (critic.q1, critic.q2):
        out, cache = net.forward_cached(x)
        err = out[rows, action_d].astype(np.float64) - y
        losses.append(float(0.5 * np.mean(err**2)))
        upstream = np.zeros_like(out)
        upstream[rows, action_d] = (err / b_rows).astype(net.dtype)
        g, _ = net.backward_cached(cache, upstream)
        grads.append(g)
    return losses[0], losses[1], grads[0], grads[1]


def policy_loss_and_grads(
    actor: Actor,
    critic: CriticPair,
    temps: Temperatures,
    obs: np.ndarray,
    eps: np.ndarray,
):
    """Reparameterized policy loss and its exact gradients for the actor trunk.

    Per state the loss sums pi_d(d|s) * (alpha_d log pi_d + alpha_c log pi_c -
    min_j Q_j(s, u_d, d)) over all discrete actions; gradients flow through the
    softmax, the squashed samples, and the continuous input of the minimum
    critic, whose parameters stay fixed.
    """
    b_rows = len(obs)
    logits, mu, log_std, interior, cache = actor.heads(obs)
    lp = _log_softmax(logits)
    p = np.exp(lp)
    sigma = np.exp(log_std)
    z = mu + sigma * eps
    tanh_z = np.tanh(z)
    u = _CENTER + _HALF_RANGE * tanh_z
    log_pc = log_pdf_squashed(log_std, eps, z)

    q1v, cache1 = _per_d_forward(critic.q1, obs, u, want_cache=True)
    q2v, cache2 = _per_d_forward(critic.q2, obs, u, want_cache=True)
    use1 = q1v <= q2v
    qmin = np.where(use1, q1v, q2v)
    rows1 = np.flatnonzero(use1.ravel())
    rows2 = np.flatnonzero(~use1.ravel())
    dqdc = _per_d_dqdc(critic.q1, cache1, b_rows, actor.n_actions, rows1)
    dqdc += _per_d_dqdc(critic.q2, cache2, b_rows, actor.n_actions, rows2)

    advantage = temps.alpha_d * lp + temps.alpha_c * log_pc - qmin
    loss = float(np.mean((p * advantage).sum(axis=1)))

    mean_adv = (p * advantage).sum(axis=1, keepdims=True)
    g_logits = p * (advantage - mean_adv) / b_rows
    dlogp_dz = 2.0 * tanh_z
    du_dz = _HALF_RANGE * (1.0 - tanh_z**2)
    g_mu = p * (temps.alpha_c * dlogp_dz - dqdc * du_dz) / b_rows
    sig_eps = sigma * eps
    g_tau = p * (temps.alpha_c * (dlogp_dz * sig_eps - 1.0) - dqdc * du_dz * sig_eps) / b_rows
    g_tau = g_tau * interior
    upstream = np.concatenate(
        [g_logits, g_mu, g_tau], axis=1, dtype=actor.net.dtype, casting="same_kind"
    )
    grads, _ = actor.net.backward_cached(cache, upstream)
    return loss, grads


def temperature_losses(
    actor: Actor,
    temps: Temperatures,
    obs: np.ndarray,
    eps: np.ndarray,
    h_target_d: float,
    h_target_c: float,
):
    """J(alpha) = alpha * (measured entropy - target entropy), per action part."""
    h_d, h_c, _ = _entropy_terms(actor, obs, eps)
    loss_d = temps.alpha_d * (float(h_d.mean()) - h_target_d)
    loss_c = temps.alpha_c * (float(h_c.mean()) - h_target_c)
    return loss_d, loss_c


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform with-replacement sampling."""

    def __init__(self, capacity: int, obs_size: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size), dtype=np.float32)
        self.obs_next = np.zeros((capacity, obs_size), dtype=np.float32)
        self.action_d = np.zeros(capacity, dtype=np.int64)
        self.action_c = np.zeros(capacity, dtype=np.float64)
        self.e_before = np.zeros(capacity, dtype=np.float64)
        self.e_after = np.zeros(capacity, dtype=np.float64)
        self.done = np.zeros(capacity, dtype=bool)
        self.r_key = np.zeros(capacity, dtype=np.float64)
        self.cursor = 0
        self.size = 0

    def push(self, tr: Transition) -> None:
        i = self.cursor
        self.obs[i] = tr.obs
        self.obs_next[i] = tr.obs_next
        self.action_d[i] = tr.action.d
        self.action_c[i] = tr.action.c
        self.e_before[i] = tr.e_before
        self.e_after[i] = tr.e_after
        self.done[i] = tr.done
        self.r_key[i] = tr.r_key
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "obs_next": self.obs_next[idx],
            "action_d": self.action_d[idx],
            "action_c": self.action_c[idx],
            "e_before": self.e_before[idx],
            "e_after": self.e_after[idx],
            "done": self.done[idx],
            "r_key": self.r_key[idx],
        }


class SacAgent:
    """Actor, twin critics with targets, temperatures, and their update steps."""

    def __init__(
        self,
        obs_size: int,
        n_actions: int,
        rng: np.random.Generator,
        schedule: TargetEntropySchedule,
        actor_hidden=(256, 128),
        critic_hidden=(256, 128, 128),
        lr_actor: float = 0.001,
        lr_critic: float = 0.001,
        lr_alpha_d: float = 0.003,
        lr_alpha_c: float = 0.003,
        dtype=np.float32,
    ):
        self.obs_size = obs_size
        self.n_actions = n_actions
        self.schedule = schedule
        self.actor = Actor(obs_size, n_actions, actor_hidden, rng, dtype=dtype)
        self.critic = CriticPair(obs_size, n_actions, critic_hidden, rng, dtype=dtype)
        self.temps = Temperatures(lr_d=lr_alpha_d, lr_c=lr_alpha_c)
        self.adam_actor = Adam(self.actor.net.parameters(), lr=lr_actor)
        self.adam_q1 = Adam(self.critic.q1.parameters(), lr=lr_critic)
        self.adam_q2 = Adam(self.critic.q2.parameters(), lr=lr_critic)

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> HybridAction:
        return sample_action(self.actor, obs, rng)[0]

    def act_deterministic(self, obs: np.ndarray) -> HybridAction:
        return deterministic_action(self.actor, obs)

    def update(
        self,
        batch: dict,
        rewards: np.ndarray,
        gamma: float,
        t_current: int,
        rho: float,
        rng: np.random.Generator,
    ) -> dict:
        """One update iteration: both critics, the policy, both temperatures, then Polyak.

        ``rho`` is the literal blend weight kept on the old target parameters.
        """
        b_rows = len(batch["obs"])
        eps_dtype = self.actor.net.dtype if self.actor.net.dtype in ("float32", "float64") else np.float64
        eps_next = rng.standard_normal((b_rows, self.n_actions), dtype=eps_dtype)
        y, _ = critic_target(
            self.actor, self.critic, self.temps,
            batch["obs_next"], rewards, batch["done"], gamma, eps_next,
        )
        loss_q1, loss_q2, grads_q1, grads_q2 = critic_loss_and_grads(
            self.critic, batch["obs"], batch["action_d"], batch["action_c"], y
        )
        self.adam_q1.step(self.critic.q1.parameters(), grads_q1)
        self.adam_q2.step(self.critic.q2.parameters(), grads_q2)

        eps_policy = rng.standard_normal((b_rows, self.n_actions), dtype=eps_dtype)
        loss_pi, grads_pi = policy_loss_and_grads(
            self.actor, self.critic, self.temps, batch["obs"], eps_policy
        )
        self.adam_actor.step(self.actor.net.parameters(), grads_pi)

        h_target_d, h_target_c = self.schedule.targets(t_current)
        eps_temp = rng.standard_normal((b_rows, self.n_actions), dtype=eps_dtype)
        loss_ad, loss_ac = temperature_losses(
            self.actor, self.temps, batch["obs"], eps_temp, h_target_d, h_target_c
        )
        self.temps.step(loss_ad, loss_ac)

        polyak_update(self.critic, rho)
        return {
            "critic": 0.5 * (loss_q1 + loss_q2),
            "policy": loss_pi,
            "alpha_d": loss_ad,
            "alpha_c": loss_ac,
            "alpha_d_value": self.temps.alpha_d,
            "alpha_c_value": self.temps.alpha_c,
        }
