"""Policy sampling, entropies, loss gradients, targets, temperatures, buffer."""

import math

import numpy as np
import pytest

from circuitsac.env import HybridAction, Transition
from circuitsac.nn import Adam, Mlp
from circuitsac.sac import (
    Actor,
    CriticPair,
    ReplayBuffer,
    TargetEntropySchedule,
    Temperatures,
    critic_loss_and_grads,
    critic_target,
    deterministic_action,
    entropies,
    log_pdf_squashed,
    max_squashed_entropy,
    policy_loss_and_grads,
    polyak_update,
    random_action,
    sample_action,
    squash,
    temperature_losses,
)

from util import fd_gradient_worst_error


def _const_actor(logits, mu, log_std, obs_size=3):
    """Actor whose heads ignore the observation (zero trunk, biased output)."""
    k = len(logits)
    actor = Actor(obs_size, k, (4,), np.random.default_rng(0), dtype=np.float64)
    for p in actor.net.parameters():
        p[...] = 0.0
    actor.net.biases[-1][...] = np.concatenate([logits, mu, log_std])
    return actor


def test_sampled_angle_strictly_inside_bounds():
    rng = np.random.default_rng(1)
    actor = Actor(4, 6, (8,), rng, dtype=np.float64)
    obs = rng.standard_normal(4)
    for _ in range(1000):
        action, logp_d, logp_c = sample_action(actor, obs, rng)
        assert -math.pi < action.c < math.pi
        assert math.isfinite(logp_c) and math.isfinite(logp_d)
        assert 0 <= action.d < 6


def test_uniform_logits_sample_uniformly():
    k = 8
    actor = _const_actor(np.zeros(k), np.zeros(k), np.zeros(k))
    rng = np.random.default_rng(2)
    obs = np.zeros(3)
    n = 100_000
    counts = np.zeros(k)
    for _ in range(n):
        counts[sample_action(actor, obs, rng)[0].d] += 1
    p = 1.0 / k
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma)


def test_log_density_matches_histogram():
    mu, log_std = 0.4, -0.3
    k = 2
    actor = _const_actor(np.zeros(k), np.full(k, mu), np.full(k, log_std))
    rng = np.random.default_rng(3)
    n = 1_000_000
    eps = rng.standard_normal(n)
    z = mu + math.exp(log_std) * eps
    c = squash(z)
    hist, edges = np.histogram(c, bins=60, range=(-math.pi, math.pi), density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    z_at = np.arctanh(np.clip(centers / math.pi, -0.999999, 0.999999))
    eps_at = (z_at - mu) / math.exp(log_std)
    density = np.exp(log_pdf_squashed(log_std, eps_at, z_at))
    interior = hist > 0.05  # bins with enough mass for a stable estimate
    assert interior.sum() > 10
    rel = np.abs(hist[interior] - density[interior]) / density[interior]
    assert np.max(rel) < 0.05


def test_deterministic_action():
    actor = _const_actor(np.array([1.0, 5.0, 2.0]), np.array([0.3, 0.0, -0.2]), np.zeros(3))
    a = deterministic_action(actor, np.zeros(3))
    assert a.d == 1
    assert a.c == 0.0  # squashed zero mean is the interval midpoint
    b = deterministic_action(actor, np.zeros(3))
    assert (a.d, a.c) == (b.d, b.c)


def test_entropy_one_hot_and_uniform():
    k = 24
    rng = np.random.default_rng(4)
    one_hot = np.zeros(k)
    one_hot[3] = 60.0
    actor = _const_actor(one_hot, np.zeros(k), np.zeros(k))
    h_d, _ = entropies(actor, np.zeros(3), rng)
    assert abs(h_d) < 1e-12
    actor = _const_actor(np.zeros(k), np.zeros(k), np.zeros(k))
    h_d, _ = entropies(actor, np.zeros(3), rng)
    assert h_d == pytest.approx(math.log(24), abs=1e-12)


def _squashed_entropy_quadrature(mu, log_std):
    nodes, weights = np.polynomial.hermite.hermgauss(200)
    sigma = math.exp(log_std)
    z = mu + math.sqrt(2.0) * sigma * nodes
    from circuitsac.sac import _log1m_tanh2

    jac = float(weights @ _log1m_tanh2(z)) / math.sqrt(math.pi)
    return 0.5 * math.log(2 * math.pi * math.e * sigma**2) + math.log(math.pi) + jac


def test_continuous_entropy_estimator_unbiased():
    mu, log_std = 0.2, -0.4
    k = 4
    actor = _const_actor(np.zeros(k), np.full(k, mu), np.full(k, log_std))
    rng = np.random.default_rng(5)
    obs = np.tile(np.zeros(3), (10_000, 1))
    _, h_c = entropies(actor, obs, rng)
    exact = _squashed_entropy_quadrature(mu, log_std)
    assert float(np.mean(h_c)) == pytest.approx(exact, rel=0.01)


def test_max_squashed_entropy_bounds():
    h = max_squashed_entropy()
    assert h < math.log(2 * math.pi)  # uniform distribution upper-bounds it
    assert h > 1.5


def _random_setup(rng, obs_size=5, k=4, batch=3):
    actor = Actor(obs_size, k, (8, 6), rng, dtype=np.float64)
    critic = CriticPair(obs_size, k, (7, 5), rng, dtype=np.float64)
    temps = Temperatures(0.01, 0.01, init_d=0.6, init_c=1.1)
    obs = rng.standard_normal((batch, obs_size))
    eps = rng.standard_normal((batch, k))
    return actor, critic, temps, obs, eps


def test_policy_gradients_match_finite_differences():
    rng = np.random.default_rng(6)
    for _ in range(10):
        actor, critic, temps, obs, eps = _random_setup(rng)

        def loss():
            return policy_loss_and_grads(actor, critic, temps, obs, eps)[0]

        _, grads = policy_loss_and_grads(actor, critic, temps, obs, eps)
        assert fd_gradient_worst_error(loss, actor.net, grads, rng, n_coords=25) < 1e-4


def test_critic_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(10):
        actor, critic, temps, obs, eps = _random_setup(rng)
        batch = len(obs)
        action_d = rng.integers(4, size=batch)
        action_c = rng.uniform(-3, 3, batch)
        y = rng.standard_normal(batch)

        _, _, g1, g2 = critic_loss_and_grads(critic, obs, action_d, action_c, y)
        for net, grads, pick in ((critic.q1, g1, 0), (critic.q2, g2, 1)):

            def loss():
                out = critic_loss_and_grads(critic, obs, action_d, action_c, y)
                return out[pick]

            assert fd_gradient_worst_error(loss, net, grads, rng, n_coords=20) < 1e-4


def test_temperature_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    actor, critic, temps, obs, eps = _random_setup(rng)
    loss_d, loss_c = temperature_losses(actor, temps, obs, eps, 0.9, -0.4)
    h = 1e-6
    for log_alpha, loss_val, idx in (
        (temps.log_alpha_d, loss_d, 0),
        (temps.log_alpha_c, loss_c, 1),
    ):
        orig = float(log_alpha)
        log_alpha[...] = orig + h
        up = temperature_losses(actor, temps, obs, eps, 0.9, -0.4)[idx]
        log_alpha[...] = orig - h
        dn = temperature_losses(actor, temps, obs, eps, 0.9, -0.4)[idx]
        log_alpha[...] = orig
        fd = (up - dn) / (2 * h)
        assert loss_val == pytest.approx(fd, rel=1e-4)


def test_target_zeroes_bootstrap_on_done():
    rng = np.random.default_rng(9)
    actor, critic, temps, obs, eps = _random_setup(rng)
    rewards = rng.standard_normal(3)
    done = np.array([True, True, True])
    y, _ = critic_target(actor, critic, temps, obs, rewards, done, 0.9, eps)
    assert np.allclose(y, rewards)


def test_target_gamma_scaling():
    rng = np.random.default_rng(10)
    actor, critic, temps, obs, eps = _random_setup(rng)
    rewards = np.zeros(3)
    done = np.zeros(3, dtype=bool)
    y1, _ = critic_target(actor, critic, temps, obs, rewards, done, 1.0, eps)
    y2, _ = critic_target(actor, critic, temps, obs, rewards, done, 0.5, eps)
    assert np.allclose(y2, 0.5 * y1)


def test_target_clipped_double_q():
    rng = np.random.default_rng(11)
    for _ in range(10):
        actor, critic, temps, obs, eps = _random_setup(rng)
        rewards = rng.standard_normal(3)
        done = np.zeros(3, dtype=bool)
        y, parts = critic_target(actor, critic, temps, obs, rewards, done, 1.0, eps)
        assert np.all(y <= parts["y1"] + 1e-9)
        assert np.all(y <= parts["y2"] + 1e-9)


def _craft_linear_critic(obs_size, k, favored, slope=2.0):
    """Single-layer pair whose favored action's value grows with the angle."""
    critic = CriticPair(obs_size, k, (), np.random.default_rng(0), dtype=np.float64)
    for net in (critic.q1, critic.q2):
        net.weights[0][...] = 0.0
        net.biases[0][...] = 0.0
        net.weights[0][-1, favored] = slope
    return critic


def test_policy_update_moves_mass_to_preferred_action():
    rng = np.random.default_rng(12)
    obs_size, k, favored = 3, 4, 2
    critic = _craft_linear_critic(obs_size, k, favored)
    actor = Actor(obs_size, k, (8,), rng, dtype=np.float64)
    temps = Temperatures(0.01, 0.01, init_d=1e-8, init_c=1e-8)
    opt = Adam(actor.net.parameters(), lr=0.02)
    obs = np.tile(rng.standard_normal(obs_size), (16, 1))
    logits0, mu0, *_ = actor.heads(obs[:1])
    p0 = np.exp(logits0 - logits0.max())
    p0 /= p0.sum()
    for _ in range(400):
        eps = rng.standard_normal((16, k))
        _, grads = policy_loss_and_grads(actor, critic, temps, obs, eps)
        opt.step(actor.net.parameters(), grads)
    logits1, mu1, *_ = actor.heads(obs[:1])
    p1 = np.exp(logits1 - logits1.max())
    p1 /= p1.sum()
    assert p1[favored] > p0[favored]
    assert p1[favored] > 0.6
    # the favored angle climbs toward the upper bound where Q is largest
    assert squash(mu1[favored]) > squash(mu0[favored])
    assert squash(mu1[favored]) > 1.5


def test_policy_update_entropy_only_limit():
    rng = np.random.default_rng(13)
    obs_size, k = 3, 5
    critic = CriticPair(obs_size, k, (), np.random.default_rng(0), dtype=np.float64)
    for net in (critic.q1, critic.q2):
        for p in net.parameters():
            p[...] = 0.0
    actor = Actor(obs_size, k, (8,), rng, dtype=np.float64)
    temps = Temperatures(0.01, 0.01, init_d=1.0, init_c=1e-8)
    opt = Adam(actor.net.parameters(), lr=0.02)
    obs = np.tile(rng.standard_normal(obs_size), (8, 1))
    for _ in range(500):
        eps = rng.standard_normal((8, k))
        _, grads = policy_loss_and_grads(actor, critic, temps, obs, eps)
        opt.step(actor.net.parameters(), grads)
    logits, *_ = actor.heads(obs[:1])
    p = np.exp(logits - logits.max())
    p /= p.sum()
    assert np.max(np.abs(p - 1.0 / k)) < 0.02


def test_temperature_descends_when_entropy_above_target():
    k = 4
    actor = _const_actor(np.zeros(k), np.zeros(k), np.zeros(k))
    rng = np.random.default_rng(14)
    obs = np.tile(np.zeros(3), (8, 1))
    temps = Temperatures(0.05, 0.05)
    h_d, h_c = entropies(actor, obs, rng)
    target_d = float(np.mean(h_d)) - 0.5  # measured entropy sits above the target
    target_c = float(np.mean(h_c)) - 0.5
    a0_d, a0_c = temps.alpha_d, temps.alpha_c
    for _ in range(50):
        eps = rng.standard_normal((8, k))
        ld, lc = temperature_losses(actor, temps, obs, eps, target_d, target_c)
        temps.step(ld, lc)
    assert temps.alpha_d < a0_d
    assert temps.alpha_c < a0_c
    # entropy below the target drives the temperatures back up
    target_d = float(np.mean(h_d)) + 0.5
    target_c = float(np.mean(h_c)) + 0.5
    a1_d, a1_c = temps.alpha_d, temps.alpha_c
    for _ in range(50):
        eps = rng.standard_normal((8, k))
        ld, lc = temperature_losses(actor, temps, obs, eps, target_d, target_c)
        temps.step(ld, lc)
    assert temps.alpha_d > a1_d
    assert temps.alpha_c > a1_c
    assert temps.alpha_d > 0 and temps.alpha_c > 0


def test_schedule_boundaries_and_monotone():
    sched = TargetEntropySchedule.from_deductions(
        n_actions=24, deduction_d=0.1, deduction_c=0.05,
        h_end_d=0.5, h_end_c=-2.0, beta_d=1.2, beta_c=2.1, t_total=1000,
    )
    h_d0, h_c0 = sched.targets(0)
    assert h_d0 == pytest.approx(math.log(24) - 0.1)
    assert h_c0 == pytest.approx(max_squashed_entropy() - 0.05)
    h_d1, h_c1 = sched.targets(1000)
    assert h_d1 == pytest.approx(0.5 + (h_d0 - 0.5) * math.exp(-1.2))
    assert h_c1 == pytest.approx(-2.0 + (h_c0 + 2.0) * math.exp(-2.1))
    prev = sched.targets(0)
    for t in range(1, 11):
        cur = sched.targets(t * 100)
        assert cur[0] <= prev[0] and cur[1] <= prev[1]
        prev = cur


def test_polyak_endpoints_and_geometric_rate():
    rng = np.random.default_rng(15)
    critic = CriticPair(4, 3, (6,), rng, dtype=np.float64)
    for t in (critic.t1, critic.t2):
        for p in t.parameters():
            p += rng.standard_normal(p.shape)
    snapshot = [p.copy() for p in critic.t1.parameters()]
    polyak_update(critic, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(snapshot, critic.t1.parameters()))
    diff0 = np.linalg.norm(critic.t1.get_flat() - critic.q1.get_flat())
    polyak_update(critic, 0.9)
    diff1 = np.linalg.norm(critic.t1.get_flat() - critic.q1.get_flat())
    polyak_update(critic, 0.9)
    diff2 = np.linalg.norm(critic.t1.get_flat() - critic.q1.get_flat())
    assert diff1 == pytest.approx(0.9 * diff0, rel=1e-9)
    assert diff2 == pytest.approx(0.9 * diff1, rel=1e-9)
    polyak_update(critic, 0.0)
    assert np.array_equal(critic.t1.get_flat(), critic.q1.get_flat())
    assert np.array_equal(critic.t2.get_flat(), critic.q2.get_flat())
    with pytest.raises(ValueError):
        polyak_update(critic, 1.5)


def test_targets_initialized_as_copies():
    critic = CriticPair(4, 3, (6,), np.random.default_rng(16))
    assert np.array_equal(critic.t1.get_flat(), critic.q1.get_flat())
    assert np.array_equal(critic.t2.get_flat(), critic.q2.get_flat())


def _transition(r_key, obs_size=4):
    z = np.zeros(obs_size)
    return Transition(z, HybridAction(0, 0.1), 0.0, -1.0, z, False, r_key)


def test_buffer_ring_eviction():
    buf = ReplayBuffer(3, 4)
    for i in range(4):
        buf.push(_transition(float(i)))
    assert buf.size == 3
    assert set(buf.r_key.tolist()) == {1.0, 2.0, 3.0}


def test_buffer_uniform_sampling():
    buf = ReplayBuffer(50, 4)
    for i in range(50):
        buf.push(_transition(float(i)))
    rng = np.random.default_rng(17)
    n = 100_000
    batch = buf.sample(n, rng)
    counts = np.bincount(batch["r_key"].astype(int), minlength=50)
    p = 1.0 / 50
    sigma = math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 4 * sigma)


def test_buffer_batch_size_and_underfill():
    buf = ReplayBuffer(600, 4)
    with pytest.raises(ValueError):
        buf.sample(1, np.random.default_rng(0))
    for i in range(600):
        buf.push(_transition(float(i)))
    batch = buf.sample(512, np.random.default_rng(0))
    assert len(batch["obs"]) == 512


def test_random_action_domain():
    rng = np.random.default_rng(18)
    for _ in range(500):
        a = random_action(10, rng)
        assert 0 <= a.d < 10
        assert -math.pi < a.c <= math.pi
