"""Pauli-sum Hamiltonians, parameterized families, job-shop encoding, exact diagonalization."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .sim import StateVector

PAULI_SYMBOLS = "IXYZ"
COEFF_CUTOFF = 1e-12
MAX_DENSE_QUBITS = 12

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, one symbol per qubit (qubit 0 leftmost)."""

    ops: str

    def __post_init__(self):
        if not self.ops:
            raise ValueError("empty Pauli string")
        bad = set(self.ops) - set(PAULI_SYMBOLS)
        if bad:
            raise ValueError(f"illegal Pauli symbol(s) {sorted(bad)} in '{self.ops}'")

    def __len__(self) -> int:
        return len(self.ops)

    def __str__(self) -> str:
        return self.ops

    @property
    def is_diagonal(self) -> bool:
        return all(c in "IZ" for c in self.ops)


class PauliSum:
    """Real-weighted sum of Pauli strings on ``n`` qubits (Hermitian by construction).

    Construction canonicalizes: duplicate strings are merged by exact summation,
    coefficients below ``COEFF_CUTOFF`` in magnitude are dropped, and terms are
    sorted, so two sums with the same content compare equal.
    """

    def __init__(self, n: int, terms: Iterable[tuple[float, PauliString | str]]):
        if n < 1:
            raise ValueError(f"qubit count must be positive, got {n}")
        buckets: dict[str, list[float]] = {}
        for coeff, pauli in terms:
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError(f"non-finite coefficient {coeff!r}")
            ops = pauli.ops if isinstance(pauli, PauliString) else PauliString(str(pauli)).ops
            if len(ops) != n:
                raise ValueError(
                    f"Pauli string '{ops}' has length {len(ops)}, expected {n}"
                )
            buckets.setdefault(ops, []).append(coeff)
        merged = []
        for ops in sorted(buckets):
            c = math.fsum(buckets[ops])
            if abs(c) >= COEFF_CUTOFF:
                merged.append((c, PauliString(ops)))
        self.n = n
        self.terms: tuple[tuple[float, PauliString], ...] = tuple(merged)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"PauliSum(n={self.n}, terms={len(self.terms)})"

    @property
    def is_diagonal(self) -> bool:
        return all(p.is_diagonal for _, p in self.terms)

    @cached_property
    def diagonal(self) -> np.ndarray:
        """Diagonal of the implied matrix; only valid for I/Z-only sums."""
        if not self.is_diagonal:
            raise ValueError("PauliSum has off-diagonal terms")
        dim = 1 << self.n
        idx = np.arange(dim)
        diag = np.zeros(dim)
        for coeff, pauli in self.terms:
            signs = np.full(dim, coeff)
            for q, sym in enumerate(pauli.ops):
                if sym == "Z":
                    bits = (idx >> (self.n - 1 - q)) & 1
                    signs = signs * (1 - 2 * bits)
            diag += signs
        return diag

    def to_matrix(self) -> np.ndarray:
        """Dense matrix (qubit 0 is the most significant / leftmost tensor factor)."""
        if self.n > MAX_DENSE_QUBITS:
            raise ValueError(
                f"dense matrix for n={self.n} exceeds the {MAX_DENSE_QUBITS}-qubit cap"
            )
        dim = 1 << self.n
        out = np.zeros((dim, dim), dtype=complex)
        for coeff, pauli in self.terms:
            term = np.array([[coeff]], dtype=complex)
            for sym in pauli.ops:
                term = np.kron(term, _PAULI_MATRICES[sym])
            out += term
        return out


def parse_hamiltonian_file(text: str) -> PauliSum:
    """Parse "<coefficient> <pauli string>" lines into a canonical PauliSum.

    '#' starts a comment; blank lines are ignored; the qubit count is inferred
    from the first term and enforced on the rest.
    """
    terms: list[tuple[float, str]] = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(
                f"line {lineno}: expected '<coefficient> <paulis>', got {raw!r}"
            )
        try:
            coeff = float(parts[0])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed coefficient {parts[0]!r}") from None
        ops = parts[1].upper()
        bad = set(ops) - set(PAULI_SYMBOLS)
        if bad:
            raise ValueError(f"line {lineno}: illegal symbol(s) {sorted(bad)} in {parts[1]!r}")
        if n is None:
            n = len(ops)
        elif len(ops) != n:
            raise ValueError(
                f"line {lineno}: string length {len(ops)} does not match first term ({n})"
            )
        terms.append((coeff, ops))
    if n is None:
        raise ValueError("no Hamiltonian terms found")
    return PauliSum(n, terms)


class HamiltonianFamily:
    """Hamiltonians indexed by a scalar parameter R inside [r_min, r_max]."""

    def __init__(self, r_min: float, r_max: float, samples: dict[float, PauliSum]):
        if not samples:
            raise ValueError("family has no samples")
        if r_min > r_max:
            raise ValueError(f"r_min={r_min} exceeds r_max={r_max}")
        ns = {h.n for h in samples.values()}
        if len(ns) > 1:
            raise ValueError(f"inconsistent qubit counts across family: {sorted(ns)}")
        for r in samples:
            if not (r_min <= r <= r_max):
                raise ValueError(f"sample R={r} outside [{r_min}, {r_max}]")
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.samples = {float(r): samples[r] for r in sorted(samples)}
        self.n = ns.pop()

    @property
    def rs(self) -> tuple[float, ...]:
        return tuple(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def nearest(self, r: float) -> tuple[float, PauliSum]:
        """Sampled (R, Hamiltonian) closest to r; exact sample when present."""
        if r in self.samples:
            return r, self.samples[r]
        best = min(self.samples, key=lambda rs: abs(rs - r))
        return best, self.samples[best]


def load_family(manifest: str, base: str) -> HamiltonianFamily:
    """Load a family from a manifest: 'r_min = ...', 'r_max = ...', then '<R> <path>' lines.

    Paths are resolved relative to ``base``. '#' comments and blank lines are ignored.
    """
    bounds: dict[str, float] = {}
    entries: list[tuple[float, str]] = []
    for lineno, raw in enumerate(manifest.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in ("r_min", "r_max"):
                raise ValueError(f"line {lineno}: unknown manifest key {key!r}")
            try:
                bounds[key] = float(value.strip())
            except ValueError:
                raise ValueError(f"line {lineno}: malformed value for {key}") from None
        else:
            parts = line.split(maxsplit=1)
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected '<R> <path>', got {raw!r}")
            try:
                r = float(parts[0])
            except ValueError:
                raise ValueError(f"line {lineno}: malformed R value {parts[0]!r}") from None
            entries.append((r, parts[1].strip()))
    for key in ("r_min", "r_max"):
        if key not in bounds:
            raise ValueError(f"manifest is missing {key}")
    if not entries:
        raise ValueError("manifest lists no (R, path) entries")
    samples: dict[float, PauliSum] = {}
    for r, rel in entries:
        if r in samples:
            raise ValueError(f"duplicate manifest entry for R={r}")
        path = os.path.join(base, rel)
        with open(path, "r", encoding="utf-8") as fh:
            samples[r] = parse_hamiltonian_file(fh.read())
    return HamiltonianFamily(bounds["r_min"], bounds["r_max"], samples)


@dataclass(frozen=True)
class JSPInstance:
    """Job-shop instance: N jobs with integer lengths on m machines.

    Machine 1 is constrained to run longest; ``max_diff`` bounds the runtime gap
    between machine 1 and any other machine. ``a_weight`` scales the constraint
    penalties, ``b_weight`` the makespan objective; 0 < b_weight*max(lengths) < a_weight.
    """

    n_jobs: int
    n_machines: int
    lengths: tuple[int, ...]
    max_diff: int
    a_weight: float
    b_weight: float

    def __post_init__(self):
        if self.n_jobs < 1 or self.n_machines < 1 or self.max_diff < 1:
            raise ValueError("n_jobs, n_machines and max_diff must be positive")
        if len(self.lengths) != self.n_jobs:
            raise ValueError(f"expected {self.n_jobs} job lengths, got {len(self.lengths)}")
        if any(length < 1 for length in self.lengths):
            raise ValueError("job lengths must be positive integers")
        if not 0 < self.b_weight * max(self.lengths) < self.a_weight:
            raise ValueError(
                "pre-factors must satisfy 0 < b_weight*max(lengths) < a_weight, got "
                f"b*Lmax={self.b_weight * max(self.lengths)}, a={self.a_weight}"
            )

    @property
    def n_qubits(self) -> int:
        return self.n_jobs * self.n_machines + (self.n_machines - 1) * self.max_diff

    def x_qubit(self, job: int, machine: int) -> int:
        """Qubit of assignment bit x_{job,machine}; 1-based job/machine indices."""
        return (machine - 1) * self.n_jobs + (job - 1)

    def y_qubit(self, slot: int, machine: int) -> int:
        """Qubit of runtime-gap bit y_{slot,machine}; machine >= 2, slot in 1..max_diff."""
        return (
            self.n_jobs * self.n_machines
            + (machine - 2) * self.max_diff
            + (slot - 1)
        )


def jsp_objective(inst: JSPInstance, bits: Sequence[int]) -> float:
    """Cost of one bit assignment under the scheduling Hamiltonian, evaluated directly."""
    if len(bits) != inst.n_qubits:
        raise ValueError(f"expected {inst.n_qubits} bits, got {len(bits)}")
    x = lambda i, a: bits[inst.x_qubit(i, a)]
    y = lambda s, a: bits[inst.y_qubit(s, a)]
    total = 0.0
    for i in range(1, inst.n_jobs + 1):
        assigned = sum(x(i, a) for a in range(1, inst.n_machines + 1))
        total += inst.a_weight * (1 - assigned) ** 2
    for a in range(2, inst.n_machines + 1):
        gap = sum(s * y(s, a) for s in range(1, inst.max_diff + 1))
        load_diff = sum(
            inst.lengths[i - 1] * (x(i, a) - x(i, 1)) for i in range(1, inst.n_jobs + 1)
        )
        total += inst.a_weight * (gap + load_diff) ** 2
    total += inst.b_weight * sum(
        inst.lengths[i - 1] * x(i, 1) for i in range(1, inst.n_jobs + 1)
    )
    return total


def _square_binary_linear(const: float, lin: dict[int, float]):
    """Expand (const + sum a_q x_q)^2 over binary x (x^2 = x)."""
    out_const = const * const
    out_lin = {q: 2.0 * const * a + a * a for q, a in lin.items()}
    out_quad: dict[frozenset, float] = {}
    for (q1, a1), (q2, a2) in combinations(lin.items(), 2):
        out_quad[frozenset((q1, q2))] = 2.0 * a1 * a2
    return out_const, out_lin, out_quad


def build_jsp_hamiltonian(inst: JSPInstance) -> PauliSum:
    """Diagonal qubit Hamiltonian for a JSPInstance via x -> (I - Z)/2.

    Qubit layout: assignment register first (machine-major, job-minor), then the
    runtime-gap register for machines 2..m. Eigenvalues equal ``jsp_objective``
    on the corresponding bitstrings, constant offset included.
    """
    zpoly: dict[frozenset, float] = {}

    def add_monomial(support: frozenset, coeff: float):
        # map prod_{q in S} x_q -> prod (I - Z_q)/2, expanded over Z subsets
        scale = coeff / (1 << len(support))
        for k in range(len(support) + 1):
            for sub in combinations(sorted(support), k):
                key = frozenset(sub)
                zpoly[key] = zpoly.get(key, 0.0) + scale * ((-1) ** len(sub))

    def add_squared(const: float, lin: dict[int, float], weight: float):
        c, l, q = _square_binary_linear(const, lin)
        add_monomial(frozenset(), weight * c)
        for qu, a in l.items():
            add_monomial(frozenset((qu,)), weight * a)
        for pair, a in q.items():
            add_monomial(pair, weight * a)

    for i in range(1, inst.n_jobs + 1):
        lin = {inst.x_qubit(i, a): -1.0 for a in range(1, inst.n_machines + 1)}
        add_squared(1.0, lin, inst.a_weight)
    for a in range(2, inst.n_machines + 1):
        lin = {inst.y_qubit(s, a): float(s) for s in range(1, inst.max_diff + 1)}
        for i in range(1, inst.n_jobs + 1):
            length = float(inst.lengths[i - 1])
            lin[inst.x_qubit(i, a)] = lin.get(inst.x_qubit(i, a), 0.0) + length
            lin[inst.x_qubit(i, 1)] = lin.get(inst.x_qubit(i, 1), 0.0) - length
        add_squared(0.0, lin, inst.a_weight)
    for i in range(1, inst.n_jobs + 1):
        add_monomial(frozenset((inst.x_qubit(i, 1),)), inst.b_weight * inst.lengths[i - 1])

    n = inst.n_qubits
    terms = []
    for support, coeff in zpoly.items():
        ops = "".join("Z" if q in support else "I" for q in range(n))
        terms.append((coeff, ops))
    return PauliSum(n, terms)


def exact_diagonalize(h: PauliSum) -> tuple[float, StateVector]:
    """Ground energy and a unit-norm ground state of a PauliSum.

    Diagonal sums are scanned directly; general sums use a dense Hermitian
    eigendecomposition, capped at MAX_DENSE_QUBITS qubits.
    """
    if h.n > MAX_DENSE_QUBITS:
        raise ValueError(f"n={h.n} exceeds the {MAX_DENSE_QUBITS}-qubit diagonalization cap")
    if h.is_diagonal:
        diag = h.diagonal
        idx = int(np.argmin(diag))
        amps = np.zeros(1 << h.n, dtype=complex)
        amps[idx] = 1.0
        return float(diag[idx]), StateVector(h.n, amps)
    matrix = h.to_matrix()
    vals, vecs = np.linalg.eigh(matrix)
    return float(vals[0]), StateVector(h.n, vecs[:, 0].astype(complex))
