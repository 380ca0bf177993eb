"""Seeded random PVMs, kernels and commuting POVMs for tests and demos."""
from __future__ import annotations

import numpy as np

from .povm import DiscretePOVM, DiscretePVM, OutcomeGrid
from .reconstruction import KernelMatrix, smear


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_pvm(rng: np.random.Generator, d: int, K: int) -> DiscretePVM:
    """``K`` projectors of random ranks (each at least 1) in a random basis."""
    if not 1 <= K <= d:
        raise ValueError("need 1 <= K <= d")
    cuts = np.sort(rng.choice(np.arange(1, d), size=K - 1, replace=False)) if K > 1 else []
    sizes = np.diff(np.concatenate([[0], cuts, [d]])).astype(int)
    u = random_unitary(rng, d)
    projs, start = [], 0
    for s in sizes:
        cols = u[:, start:start + s]
        projs.append(cols @ cols.conj().T)
        start += s
    points = tuple(float(k) for k in range(K))
    return DiscretePVM(points, np.array(projs))


def random_stochastic(rng: np.random.Generator, K: int, m: int, min_gap: float = 1e-3) -> np.ndarray:
    """Row-stochastic ``K x m`` matrix with rows at least ``min_gap`` apart in max-norm."""
    if m == 1 and K > 1:
        raise ValueError("a single cell admits only one probability vector")
    while True:
        rows = rng.dirichlet(np.ones(m), size=K)
        if K < 2:
            return rows
        gaps = [np.max(np.abs(rows[i] - rows[k])) for i in range(K) for k in range(i)]
        if min(gaps) > min_gap:
            return rows


def random_commuting_povm(rng: np.random.Generator, d: int, m: int, K: int | None = None):
    """Smear a random PVM by a random kernel with distinct rows.

    Returns ``(povm, pvm, kernel)``.
    """
    if K is None:
        K = 1 if m == 1 else int(rng.integers(1, d + 1))
    pvm = random_pvm(rng, d, K)
    grid = OutcomeGrid.uniform(0.0, 1.0, m)
    mu = KernelMatrix(random_stochastic(rng, K, m), grid)
    return smear(pvm, mu), pvm, mu


def noncommuting_fixture() -> DiscretePOVM:
    """Two qubit cells ``diag(1, 0)`` and ``[[.5, .5], [.5, .5]]``; commutator norm 0.5.

    Two cells ``E, 1 - E`` of a normalized POVM always commute, so this pair is
    deliberately not normalized; the commutativity gate runs first and rejects it.
    """
    p = np.array([[1.0, 0.0], [0.0, 0.0]])
    q = np.array([[0.5, 0.5], [0.5, 0.5]])
    return DiscretePOVM(OutcomeGrid((0.0, 0.5, 1.0)), np.array([p, q]))
