"""Von Neumann triplets for commuting discrete POVMs.

Pipeline: :func:`joint_diagonalize` finds the joint eigenspaces of all cell
effects, :func:`build_generator` labels them injectively with base-3 encoded
bit patterns to obtain a self-adjoint generator ``A``, and
:func:`extract_kernel` reads off the Markov kernel ``mu`` so that
``F(cell_j) = sum_k mu[k, j] P_k``. :func:`smear` goes the other way.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .operators import cluster_sorted, projector_onto
from .povm import (
    DiscretePOVM,
    DiscretePVM,
    MalformedPOVM,
    OutcomeGrid,
    RingSet,
    is_commutative,
)
from .operators import matrix_from_json, matrix_to_json

TOL_ROW = 1e-10


class NonCommuting(ValueError):
    """The POVM's cell effects do not commute; no triplet exists."""

    def __init__(self, max_commutator_norm: float, worst_pair):
        self.max_commutator_norm = max_commutator_norm
        self.worst_pair = worst_pair
        super().__init__(
            f"cells {worst_pair} do not commute (commutator norm {max_commutator_norm:.6g})")


class RefinementFailure(RuntimeError):
    pass


class SeparationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class JointEigenstructure:
    """Joint eigenspace projectors and the eigenvalue of each cell effect on each.

    ``eigen_table[k, j]`` is the eigenvalue of cell ``j`` on eigenspace ``k``.
    Rows are sorted lexicographically.
    """

    projectors: np.ndarray = field(repr=False)
    eigen_table: np.ndarray

    @property
    def K(self) -> int:
        return len(self.projectors)

    def reassemble(self) -> np.ndarray:
        """Cell effects rebuilt as ``sum_k eigen_table[k, j] P_k``, shape (m, d, d)."""
        return np.einsum("kj,kab->jab", self.eigen_table, self.projectors)


def _split_block(basis: np.ndarray, op: np.ndarray, cluster_tol: float) -> list[np.ndarray]:
    """Diagonalize ``op`` compressed to ``basis`` and split the basis by eigenvalue clusters."""
    sub = basis.conj().T @ op @ basis
    sub = 0.5 * (sub + sub.conj().T)
    ev, vecs = np.linalg.eigh(sub)
    rotated = basis @ vecs
    return [rotated[:, g] for g in cluster_sorted(ev, cluster_tol)]


def joint_diagonalize(povm: DiscretePOVM, tol: float = 1e-9, cluster_tol: float = 1e-8,
                      seed: int = 0, max_refine: int = 8) -> JointEigenstructure:
    """Maximal common refinement of the eigenspaces of all cell effects.

    A seeded random combination ``sum_j c_j F_j`` is diagonalized first; every
    resulting block on which some cell effect is not a scalar (within ``tol``)
    is re-diagonalized with that effect. Blocks whose eigenvalue rows agree
    within ``cluster_tol`` are merged at the end so rows are pairwise distinct.
    """
    report = is_commutative(povm, tol)
    if not report:
        raise NonCommuting(report.max_commutator_norm, report.worst_pair)

    d = povm.dim
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(1.0, 2.0, size=povm.m)
    combo = np.einsum("j,jab->ab", coeffs, povm.effects)
    blocks = _split_block(np.eye(d, dtype=complex), combo, cluster_tol)

    for _ in range(max_refine):
        refined, changed = [], False
        for basis in blocks:
            pieces = [basis]
            for eff in povm.effects:
                sub = basis.conj().T @ eff @ basis
                scalar = np.trace(sub).real / basis.shape[1]
                if np.linalg.norm(sub - scalar * np.eye(basis.shape[1]), 2) > tol:
                    pieces = _split_block(basis, eff, cluster_tol)
                    changed = True
                    break
            refined.extend(pieces)
        blocks = refined
        if not changed:
            break
    else:
        raise RefinementFailure(f"cell effects still not scalar on blocks after {max_refine} passes")

    # Block-diagonality: F_j maps every block into itself.
    for basis in blocks:
        for j, eff in enumerate(povm.effects):
            image = eff @ basis
            leak = image - basis @ (basis.conj().T @ image)
            if np.linalg.norm(leak, 2) > tol:
                raise RefinementFailure(f"cell {j} is not block diagonal (leak {np.linalg.norm(leak, 2):.3e})")

    rows = np.array([[np.trace(b.conj().T @ eff @ b).real / b.shape[1] for eff in povm.effects]
                     for b in blocks])

    merged: list[tuple[np.ndarray, list[np.ndarray]]] = []
    for row, basis in zip(rows, blocks):
        for entry in merged:
            if np.max(np.abs(entry[0] - row)) <= cluster_tol:
                entry[1].append(basis)
                break
        else:
            merged.append((row, [basis]))

    projectors, table = [], []
    for _, bases in merged:
        span = np.hstack(bases)
        proj = projector_onto(span)
        projectors.append(proj)
        rank = span.shape[1]
        table.append([np.trace(proj @ eff).real / rank for eff in povm.effects])
    table = np.array(table)
    order = np.lexsort(table.T[::-1])
    return JointEigenstructure(np.array(projectors)[order], table[order])


def cantor_encode(digits: Sequence[int]) -> Fraction:
    """Exact ``sum_i x_i / 3**i`` for a finite 0/1 sequence (``i`` from 1)."""
    total = Fraction(0)
    for i, x in enumerate(digits, start=1):
        if x not in (0, 1):
            raise ValueError(f"non-binary digit {x!r} at position {i}")
        if x:
            total += Fraction(1, 3**i)
    return total


def quantize_bits(value: float, bits: int) -> list[int]:
    """Binary digits (most significant first) of ``floor(value * 2**bits)``, capped at ``2**bits - 1``."""
    v = min(max(float(value), 0.0), 1.0)
    q = min(int(np.floor(v * 2**bits)), 2**bits - 1)
    return [int(c) for c in format(q, f"0{bits}b")]


@dataclass(frozen=True)
class Generator:
    """Self-adjoint ``A = sum_k labels[k] P_k`` with exact rational labels."""

    labels: tuple[Fraction, ...]
    projectors: np.ndarray = field(repr=False)
    bits_per_effect: int | None = None

    def __post_init__(self):
        labels = tuple(Fraction(x) for x in self.labels)
        if len(set(labels)) != len(labels):
            raise SeparationFailure("generator labels must be pairwise distinct")
        if len(labels) != len(self.projectors):
            raise ValueError("need one projector per label")
        object.__setattr__(self, "labels", labels)

    @property
    def operator(self) -> np.ndarray:
        return np.einsum("k,kab->ab", np.array([float(x) for x in self.labels]), self.projectors)

    @property
    def pvm(self) -> DiscretePVM:
        return DiscretePVM(tuple(float(x) for x in self.labels), self.projectors)

    @property
    def gamma(self) -> tuple[Fraction, ...]:
        # Every projector is nonzero in finite dimensions, so Gamma = sigma(A).
        return self.labels


def build_generator(je: JointEigenstructure, bits_per_effect: int = 16,
                    max_doublings: int = 6) -> Generator:
    """Cantor-encode each eigenspace's quantized eigenvalue row into a label in ``[0, 1/2]``.

    Each entry of a row is quantized to ``bits_per_effect`` binary digits; the
    digits of all cells are concatenated in cell order and base-3 encoded.
    On a label collision between different rows the bit depth is doubled.
    """
    table = je.eigen_table
    for i, k in combinations(range(je.K), 2):
        if np.array_equal(table[i], table[k]):
            raise SeparationFailure(f"eigenspaces {i} and {k} have identical rows")
    bits = bits_per_effect
    for _ in range(max_doublings + 1):
        labels = [cantor_encode([b for v in row for b in quantize_bits(v, bits)]) for row in table]
        if len(set(labels)) == len(labels):
            return Generator(tuple(labels), je.projectors, bits)
        bits *= 2
    raise SeparationFailure(f"labels still collide at {bits // 2} bits per effect")


@dataclass(frozen=True)
class KernelMatrix:
    """``values[k, j] = mu_{cell_j}(lambda_k)``; rows are probability vectors over ``grid``."""

    values: np.ndarray
    grid: OutcomeGrid
    tol_row: float = TOL_ROW

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != self.grid.m:
            raise ValueError(f"kernel must have shape (K, {self.grid.m}), got {vals.shape}")
        if np.any(vals < -self.tol_row) or np.any(vals > 1 + self.tol_row):
            raise MalformedPOVM("kernel entries outside [0, 1]")
        dev = np.max(np.abs(vals.sum(axis=1) - 1.0), initial=0.0)
        if dev > self.tol_row:
            raise MalformedPOVM(f"kernel rows are not probability vectors (max deviation {dev:.3e})")
        vals = np.clip(vals, 0.0, 1.0)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def __call__(self, delta: RingSet) -> np.ndarray:
        """``mu_delta`` at every label."""
        if delta.grid != self.grid:
            raise ValueError("ring set refers to a different grid")
        return self.values[:, list(delta.cells)].sum(axis=1)


def extract_kernel(povm: DiscretePOVM, je: JointEigenstructure,
                   tol_row: float = TOL_ROW) -> KernelMatrix:
    """``mu_{cell_j}(lambda_k) = tr(P_k F_j) / tr(P_k)``."""
    ranks = np.einsum("kaa->k", je.projectors).real
    traces = np.einsum("kab,jba->kj", je.projectors, povm.effects).real
    return KernelMatrix(traces / ranks[:, None], povm.grid, tol_row)


def smear(pvm: DiscretePVM, mu: KernelMatrix) -> DiscretePOVM:
    """``F(cell_j) = sum_k mu[k, j] P_k``."""
    if mu.K != len(pvm.points):
        raise ValueError(f"kernel has {mu.K} rows but the PVM has {len(pvm.points)} projectors")
    effects = np.einsum("kj,kab->jab", mu.values, pvm.projectors)
    return DiscretePOVM(mu.grid, effects)


@dataclass(frozen=True)
class SeparationReport:
    separated: bool
    min_gap: float
    closest_pair: tuple[int, int] | None

    def __bool__(self) -> bool:
        return self.separated


def check_separation(mu: KernelMatrix, tol: float = 1e-12) -> SeparationReport:
    """Rows pairwise distinct: some column differs by more than ``tol`` for every pair."""
    best, pair = np.inf, None
    for i, k in combinations(range(mu.K), 2):
        gap = float(np.max(np.abs(mu.values[i] - mu.values[k])))
        if gap < best:
            best, pair = gap, (i, k)
    return SeparationReport(bool(best > tol), float(best), pair)


@dataclass(frozen=True)
class VonNeumannTriplet:
    """``(F, A, mu)`` with ``F(delta) = mu_delta(A)``."""

    povm: DiscretePOVM
    generator: Generator
    kernel: KernelMatrix

    @property
    def pvm(self) -> DiscretePVM:
        return self.generator.pvm

    def reconstruct(self) -> DiscretePOVM:
        return smear(self.pvm, self.kernel)

    def residual(self) -> float:
        """Largest cell-wise spectral-norm distance between ``F`` and its smearing."""
        diff = self.reconstruct().effects - self.povm.effects
        return max(float(np.linalg.norm(e, 2)) for e in diff)

    def to_json(self) -> dict:
        return {
            "dim": self.povm.dim,
            "grid": self.povm.grid.to_json(),
            "labels": [f"{x.numerator}/{x.denominator}" for x in self.generator.labels],
            "projectors": [matrix_to_json(p) for p in self.generator.projectors],
            "kernel": self.kernel.values.tolist(),
            "bits_per_effect": self.generator.bits_per_effect,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VonNeumannTriplet":
        grid = OutcomeGrid.from_json(obj["grid"])
        projectors = np.array([matrix_from_json(p) for p in obj["projectors"]])
        gen = Generator(tuple(Fraction(s) for s in obj["labels"]), projectors,
                        obj.get("bits_per_effect"))
        kernel = KernelMatrix(np.asarray(obj["kernel"], dtype=float), grid)
        return cls(smear(gen.pvm, kernel), gen, kernel)


def build_triplet(povm: DiscretePOVM, tol: float = 1e-9, bits: int = 16,
                  cluster_tol: float = 1e-8, seed: int = 0) -> VonNeumannTriplet:
    """Reconstruct a generator and Markov kernel for a commuting POVM.

    Raises
    ------
    NonCommuting
        Some pair of cell effects fails to commute within ``tol``.
    MalformedPOVM
        The extracted kernel rows are not probability vectors.
    """
    je = joint_diagonalize(povm, tol=tol, cluster_tol=cluster_tol, seed=seed)
    gen = build_generator(je, bits)
    mu = extract_kernel(povm, je)
    return VonNeumannTriplet(povm, gen, mu)


def function_of_generator(gen: Generator, values: Sequence[float]) -> np.ndarray:
    """``p(A)`` for the interpolating polynomial with ``p(lambda_k) = values[k]``.

    Evaluated in Lagrange form by matrix products of ``A - lambda_i``; the
    label differences in the denominators are taken from the exact labels.
    """
    a = gen.operator
    d = a.shape[0]
    out = np.zeros((d, d), dtype=complex)
    for k, (lam_k, y) in enumerate(zip(gen.labels, values)):
        if y == 0:
            continue
        basis = np.eye(d, dtype=complex)
        for i, lam_i in enumerate(gen.labels):
            if i != k:
                basis = basis @ (a - float(lam_i) * np.eye(d)) / float(lam_k - lam_i)
        out += y * basis
    return out
