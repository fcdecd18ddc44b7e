"""Circuit-building MDP: featurized observations, indexed hybrid actions, curriculum reward."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .pauli import HamiltonianFamily
from .sim import Circuit, Gate, StateVector, apply_gate, expectation, init_state

_EXP_CLIP = 700.0  # keeps exp() finite for pathological sigma_min settings


class GaussianFeaturizer:
    """Radial-basis encoding of the family parameter R.

    Centers are J equally spaced points over [a, b] (endpoints included) and all
    kernels share width (b - a) / J. Values of R outside [a, b] are allowed; the
    features simply decay.
    """

    def __init__(self, j_count: int, a: float, b: float):
        if j_count < 2:
            raise ValueError(f"need at least 2 feature centers, got {j_count}")
        if not a < b:
            raise ValueError(f"featurization interval [{a}, {b}] is empty")
        self.j_count = j_count
        self.a = float(a)
        self.b = float(b)
        self.mu = np.linspace(a, b, j_count)
        self.sigma = (b - a) / j_count

    def featurize(self, r: float) -> np.ndarray:
        return np.exp(-0.5 * ((r - self.mu) / self.sigma) ** 2)


class ActionTable:
    """Indexed hybrid-action entries [control, target, rot_qubit, rot_axis].

    A value of n in the control slot means "no CNOT" (rotation action); n in the
    rotation slot means "no rotation" (CNOT action). Axes are 1=x, 2=y, 3=z.
    CNOT entries come first, pairwise with the higher-control direction leading,
    followed by rotations grouped by qubit with axes in x, y, z order.
    """

    _AXIS_KIND = {1: "RX", 2: "RY", 3: "RZ"}

    def __init__(self, n: int):
        if n < 2:
            raise ValueError(f"action table needs n >= 2, got {n}")
        entries = []
        for i in range(n):
            for j in range(i + 1, n):
                entries.append((j, i, n, 0))
                entries.append((i, j, n, 0))
        for q in range(n):
            for axis in (1, 2, 3):
                entries.append((n, 0, q, axis))
        self.n = n
        self.entries = np.array(entries, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)

    def is_cnot(self, d: int) -> bool:
        return self.entries[d][0] != self.n

    def decode(self, action: "HybridAction") -> Gate:
        """Gate for one hybrid action; the angle is discarded on CNOT entries."""
        if not 0 <= action.d < len(self.entries):
            raise IndexError(f"discrete action {action.d} outside 0..{len(self.entries) - 1}")
        control, target, rot_qubit, rot_axis = self.entries[action.d]
        if control != self.n:
            return Gate.cnot(int(control), int(target))
        return Gate(self._AXIS_KIND[int(rot_axis)], int(rot_qubit), angle=float(action.c))


def build_action_table(n: int) -> ActionTable:
    return ActionTable(n)


@dataclass(frozen=True)
class HybridAction:
    """Discrete gate-placement index paired with a rotation angle in (-pi, pi]."""

    d: int
    c: float


@dataclass(frozen=True, eq=False)
class Transition:
    """Replay record; the reward is derived later from the stored energies."""

    obs: np.ndarray
    action: HybridAction
    e_before: float
    e_after: float
    obs_next: np.ndarray
    done: bool
    r_key: float


class RewardEngine:
    """Dynamic shaping of energies against the best values seen per R.

    Per R, a sorted pool keeps the m + k lowest energies observed (seeded with
    two copies of the configured anchor energy ``e0``, one for each buffer). The
    first m define the center mu_R; the next k set the scale
    sigma_R = |mu_R - mean(next k)| + sigma_min. The shaping value of an energy E
    is c_exp * exp(-(E - mu_R) / sigma_R) - c_lin * E and a transition's reward
    is the shaping difference between its two energies, so episode rewards
    telescope while engine parameters are frozen.
    """

    def __init__(
        self,
        e0: float,
        m: int,
        k: int,
        sigma_min: float,
        c_exp: float,
        c_lin: float,
    ):
        if m < 1 or k < 1:
            raise ValueError("pool sizes m and k must be positive")
        if sigma_min <= 0:
            raise ValueError(f"sigma_min must be positive, got {sigma_min}")
        self.e0 = float(e0)
        self.m = m
        self.k = k
        self.sigma_min = float(sigma_min)
        self.c_exp = float(c_exp)
        self.c_lin = float(c_lin)
        self._pools: dict[float, list[float]] = {}

    def _pool(self, r: float) -> list[float]:
        pool = self._pools.get(r)
        if pool is None:
            pool = [self.e0, self.e0]
            self._pools[r] = pool
        return pool

    def observe_energy(self, r: float, e: float) -> None:
        """Insert one observed energy into R's sorted pool (ties kept)."""
        pool = self._pool(r)
        bisect.insort(pool, float(e))
        del pool[self.m + self.k :]

    def mu_sigma(self, r: float) -> tuple[float, float]:
        pool = self._pool(r)
        mu = float(np.mean(pool[: self.m]))
        tail = pool[self.m : self.m + self.k]
        if tail:
            sigma = abs(mu - float(np.mean(tail))) + self.sigma_min
        else:
            sigma = self.sigma_min
        return mu, sigma

    def shaping(self, r: float, e) -> float | np.ndarray:
        mu, sigma = self.mu_sigma(r)
        exponent = np.minimum(-(np.asarray(e, dtype=float) - mu) / sigma, _EXP_CLIP)
        return self.c_exp * np.exp(exponent) - self.c_lin * np.asarray(e, dtype=float)

    def reward(self, transition: Transition) -> float:
        """Shaping difference f(E_after) - f(E_before) at current pool statistics."""
        return float(
            self.shaping(transition.r_key, transition.e_after)
            - self.shaping(transition.r_key, transition.e_before)
        )

    def rewards(
        self, r_keys: np.ndarray, e_before: np.ndarray, e_after: np.ndarray
    ) -> np.ndarray:
        """Vectorized on-the-fly rewards for a sampled batch."""
        out = np.empty(len(r_keys))
        for r in np.unique(r_keys):
            mask = r_keys == r
            mu, sigma = self.mu_sigma(float(r))
            fa = np.exp(np.minimum(-(e_after[mask] - mu) / sigma, _EXP_CLIP))
            fb = np.exp(np.minimum(-(e_before[mask] - mu) / sigma, _EXP_CLIP))
            out[mask] = self.c_exp * (fa - fb) - self.c_lin * (e_after[mask] - e_before[mask])
        return out


def prelude_for_bitstring(bitstring: str) -> tuple[Gate, ...]:
    """RX(pi) on every 1-bit, preparing the labeled basis state from vacuum."""
    return tuple(Gate.rx(q, math.pi) for q, bit in enumerate(bitstring) if bit == "1")


class CircuitEnv:
    """Deterministic T-step episode environment over a Hamiltonian family.

    Episodes build a circuit gate by gate from a fixed prelude; energies are
    evaluated against the family Hamiltonian nearest to the requested R.
    """

    def __init__(
        self,
        family: HamiltonianFamily,
        featurizer: GaussianFeaturizer,
        budget: int,
        initial_bitstring: str,
    ):
        if budget < 1:
            raise ValueError(f"gate budget must be positive, got {budget}")
        if len(initial_bitstring) != family.n:
            raise ValueError(
                f"initial state has {len(initial_bitstring)} bits, family has n={family.n}"
            )
        self.family = family
        self.featurizer = featurizer
        self.budget = budget
        self.n = family.n
        self.initial_bitstring = initial_bitstring
        self.prelude = prelude_for_bitstring(initial_bitstring)
        self.actions = ActionTable(family.n)
        self.obs_size = 2 ** (self.n + 1) + 1 + featurizer.j_count
        self._vacuum = init_state(self.n, "0" * self.n)
        self.psi: StateVector | None = None
        self.t = 0
        self.r = None
        self.r_key = None
        self.energy = None
        self._h = None
        self._gates: list[Gate] = []

    @property
    def circuit(self) -> Circuit:
        return Circuit(self.n, self.prelude, tuple(self._gates))

    def _observe(self) -> np.ndarray:
        obs = np.empty(self.obs_size)
        dim = 1 << self.n
        obs[:dim] = self.psi.amps.real
        obs[dim : 2 * dim] = self.psi.amps.imag
        obs[2 * dim] = self.t / (self.budget - 1) if self.budget > 1 else float(self.t)
        obs[2 * dim + 1 :] = self.featurizer.featurize(self.r)
        return obs

    def reset(self, r: float) -> np.ndarray:
        """Start an episode at parameter r; returns the step-0 observation."""
        if not self.family.r_min <= r <= self.family.r_max:
            raise ValueError(f"R={r} outside family bounds [{self.family.r_min}, {self.family.r_max}]")
        self.r = float(r)
        self.r_key, self._h = self.family.nearest(r)
        self.psi = self._vacuum.copy()
        for gate in self.prelude:
            apply_gate(self.psi, gate)
        self.t = 0
        self._gates = []
        self.energy = expectation(self.psi, self._h)
        return self._observe()

    def step(self, action: HybridAction) -> tuple[Transition, np.ndarray]:
        """Apply one hybrid action; rewards are not computed here."""
        if self.psi is None:
            raise RuntimeError("step before reset")
        if self.t >= self.budget:
            raise RuntimeError(f"episode already finished ({self.budget} gates placed)")
        obs = self._observe()
        gate = self.actions.decode(action)
        self._gates.append(gate)
        apply_gate(self.psi, gate)
        e_before = self.energy
        e_after = expectation(self.psi, self._h)
        self.t += 1
        self.energy = e_after
        obs_next = self._observe()
        transition = Transition(
            obs=obs,
            action=action,
            e_before=e_before,
            e_after=e_after,
            obs_next=obs_next,
            done=self.t == self.budget,
            r_key=self.r_key,
        )
        return transition, obs_next
