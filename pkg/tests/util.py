"""Shared test helpers: independent dense oracles and random generators."""

import numpy as np

from circuitsac.pauli import PauliSum
from circuitsac.sim import Circuit, Gate, StateVector

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def random_state(rng, n):
    amps = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    amps /= np.linalg.norm(amps)
    return StateVector(n, amps)


def random_pauli_sum(rng, n, n_terms):
    terms = []
    for _ in range(n_terms):
        ops = "".join(rng.choice(list("IXYZ")) for _ in range(n))
        terms.append((float(rng.uniform(-2, 2)), ops))
    return PauliSum(n, terms)


def dense_gate_matrix(gate, n):
    """2^n x 2^n unitary for one gate, built by kron products (qubit 0 leftmost)."""
    if gate.kind == "CNOT":
        dim = 1 << n
        m = np.zeros((dim, dim), dtype=complex)
        cbit = 1 << (n - 1 - gate.control)
        tbit = 1 << (n - 1 - gate.target)
        for i in range(dim):
            j = i ^ tbit if i & cbit else i
            m[j, i] = 1.0
        return m
    theta = gate.angle
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if gate.kind == "RX":
        u = np.array([[c, -1j * s], [-1j * s, c]])
    elif gate.kind == "RY":
        u = np.array([[c, -s], [s, c]])
    else:
        u = np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])
    m = np.array([[1.0 + 0j]])
    for q in range(n):
        m = np.kron(m, u if q == gate.target else PAULI["I"])
    return m


def random_gate(rng, n):
    if rng.random() < 0.4:
        control, target = rng.choice(n, size=2, replace=False)
        return Gate.cnot(int(control), int(target))
    kind = ("RX", "RY", "RZ")[rng.integers(3)]
    angle = np.pi - rng.uniform(0, 2 * np.pi)
    return Gate(kind, int(rng.integers(n)), angle=float(angle))


def random_circuit(rng, n, n_gates, prelude=()):
    return Circuit(n, tuple(prelude), tuple(random_gate(rng, n) for _ in range(n_gates)))


def fd_gradient_worst_error(loss_fn, net, analytic, rng, n_coords=40, h=1e-6):
    """Worst relative error of analytic gradients vs central differences.

    ``loss_fn`` is re-evaluated after perturbing single parameters of ``net``;
    ``analytic`` is the gradient list aligned with net.parameters().
    """
    flat = net.get_flat()
    g_flat = np.concatenate([np.asarray(g).ravel() for g in analytic])
    worst = 0.0
    coords = rng.choice(len(flat), size=min(n_coords, len(flat)), replace=False)
    for i in coords:
        v = flat.copy()
        v[i] += h
        net.set_flat(v)
        lp = loss_fn()
        v[i] -= 2 * h
        net.set_flat(v)
        lm = loss_fn()
        net.set_flat(flat)
        fd = (lp - lm) / (2 * h)
        denom = max(abs(fd), abs(g_flat[i]), 1e-8)
        worst = max(worst, abs(fd - g_flat[i]) / denom)
    return worst
