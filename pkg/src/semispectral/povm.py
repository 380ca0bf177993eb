"""Discrete POVMs on a partition of an interval into half-open cells.

Set arguments are :class:`RingSet` objects: finite unions of grid cells,
closed under union, intersection and difference. Cell indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .operators import (
    TOL_HERM,
    as_hermitian,
    commutator_norm,
    is_projection,
    matrix_from_json,
    matrix_to_json,
    operator_norm,
    validate_effect,
)

TOL_NORM = 1e-10
TOL_SPECTRUM = 1e-12


class MalformedPOVM(ValueError):
    """Input that cannot be a normalized POVM (bad effects, row sums, normalization)."""


@dataclass(frozen=True)
class OutcomeGrid:
    """Cells ``[e_{j}, e_{j+1})`` for strictly increasing edges."""

    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) < 2:
            raise ValueError("a grid needs at least two edges")
        if not all(np.isfinite(edges)):
            raise ValueError("grid edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("grid edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, a: float, b: float, m: int) -> "OutcomeGrid":
        if m < 1:
            raise ValueError("need at least one cell")
        return cls(tuple(np.linspace(a, b, m + 1)))

    @property
    def a(self) -> float:
        return self.edges[0]

    @property
    def b(self) -> float:
        return self.edges[-1]

    @property
    def m(self) -> int:
        return len(self.edges) - 1

    @property
    def midpoints(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return 0.5 * (e[:-1] + e[1:])

    def cell(self, j: int) -> tuple[float, float]:
        return self.edges[j], self.edges[j + 1]

    def locate(self, x: float) -> int:
        """Index of the cell containing ``x``; ``ValueError`` outside ``[a, b)``."""
        if not self.a <= x < self.b:
            raise ValueError(f"{x} lies outside the grid [{self.a}, {self.b})")
        return int(np.searchsorted(self.edges, x, side="right") - 1)

    def refine(self, factor: int) -> "OutcomeGrid":
        """Split every cell into ``factor`` equal sub-cells."""
        if factor < 1:
            raise ValueError("factor must be positive")
        e = np.asarray(self.edges)
        pieces = [np.linspace(lo, hi, factor + 1)[:-1] for lo, hi in zip(e[:-1], e[1:])]
        return OutcomeGrid(tuple(np.concatenate(pieces + [e[-1:]])))

    def everything(self) -> "RingSet":
        return RingSet(self, range(self.m))

    def empty(self) -> "RingSet":
        return RingSet(self, ())

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "edges": list(self.edges)}

    @classmethod
    def from_json(cls, obj: dict) -> "OutcomeGrid":
        grid = cls(tuple(obj["edges"]))
        if "a" in obj and float(obj["a"]) != grid.a or "b" in obj and float(obj["b"]) != grid.b:
            raise ValueError("grid a/b disagree with edges")
        return grid


@dataclass(frozen=True)
class RingSet:
    """A finite union of cells of ``grid``, stored as sorted indices."""

    grid: OutcomeGrid
    cells: tuple[int, ...] = ()

    def __post_init__(self):
        cells = tuple(sorted(set(int(j) for j in self.cells)))
        if cells and (cells[0] < 0 or cells[-1] >= self.grid.m):
            raise IndexError(f"cell index out of range for a grid of {self.grid.m} cells")
        object.__setattr__(self, "cells", cells)

    def _check(self, other: "RingSet"):
        if other.grid != self.grid:
            raise ValueError("ring sets refer to different grids")

    def __or__(self, other: "RingSet") -> "RingSet":
        self._check(other)
        return RingSet(self.grid, set(self.cells) | set(other.cells))

    def __and__(self, other: "RingSet") -> "RingSet":
        self._check(other)
        return RingSet(self.grid, set(self.cells) & set(other.cells))

    def __sub__(self, other: "RingSet") -> "RingSet":
        self._check(other)
        return RingSet(self.grid, set(self.cells) - set(other.cells))

    def __le__(self, other: "RingSet") -> bool:
        self._check(other)
        return set(self.cells) <= set(other.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def intervals(self) -> list[tuple[float, float]]:
        """Maximal runs of adjacent cells as ``(lo, hi)`` pairs."""
        out: list[tuple[float, float]] = []
        for j in self.cells:
            lo, hi = self.grid.cell(j)
            if out and out[-1][1] == lo:
                out[-1] = (out[-1][0], hi)
            else:
                out.append((lo, hi))
        return out


def _stack_effects(effects, tol_herm: float) -> np.ndarray:
    arr = np.asarray(effects, dtype=complex)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise MalformedPOVM(f"effects must have shape (m, d, d), got {arr.shape}")
    try:
        return np.array([as_hermitian(e, tol_herm) for e in arr])
    except ValueError as exc:
        raise MalformedPOVM(str(exc)) from exc


@dataclass(frozen=True)
class DiscretePOVM:
    """One effect per grid cell.

    Construction checks shapes and hermiticity only; positivity and
    normalization are reported by :func:`check_normalization` and
    :meth:`validate` so that defective inputs can still be inspected.
    """

    grid: OutcomeGrid
    effects: np.ndarray = field(repr=False)

    def __post_init__(self):
        effects = _stack_effects(self.effects, TOL_HERM)
        if effects.shape[0] != self.grid.m:
            raise MalformedPOVM(
                f"{effects.shape[0]} effects for a grid of {self.grid.m} cells")
        effects.setflags(write=False)
        object.__setattr__(self, "effects", effects)

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def m(self) -> int:
        return self.grid.m

    def __call__(self, delta: RingSet) -> np.ndarray:
        return evaluate(self, delta)

    def validate(self, tol: float = TOL_NORM) -> "DiscretePOVM":
        """Raise :class:`MalformedPOVM` unless every cell is an effect and the sum is 1."""
        for j, e in enumerate(self.effects):
            v = validate_effect(e, tol)
            if not v:
                raise MalformedPOVM(
                    f"cell {j} is not an effect (spectrum [{v.min_eigenvalue:.3g}, "
                    f"{v.max_eigenvalue:.3g}])")
        norm = check_normalization(self, tol)
        if not norm:
            raise MalformedPOVM(f"effects do not sum to identity (residual {norm.residual:.3e})")
        return self

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "grid": self.grid.to_json(),
            "effects": [matrix_to_json(e) for e in self.effects],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiscretePOVM":
        grid = OutcomeGrid.from_json(obj["grid"])
        effects = np.array([matrix_from_json(e) for e in obj["effects"]])
        povm = cls(grid, effects)
        if "dim" in obj and int(obj["dim"]) != povm.dim:
            raise MalformedPOVM(f"declared dim {obj['dim']} but effects are {povm.dim}x{povm.dim}")
        return povm


@dataclass(frozen=True)
class DiscretePVM:
    """Distinct real labels with mutually orthogonal projectors summing to 1."""

    points: tuple[float, ...]
    projectors: np.ndarray = field(repr=False)
    tol: float = 1e-9

    def __post_init__(self):
        points = tuple(float(p) for p in self.points)
        projs = np.asarray(self.projectors, dtype=complex)
        if len(set(points)) != len(points):
            raise ValueError("PVM points must be distinct")
        if projs.ndim != 3 or projs.shape[0] != len(points):
            raise ValueError("need one projector per point")
        d = projs.shape[1]
        for p in projs:
            if not is_projection(p, self.tol):
                raise ValueError("PVM entries must be projections")
        for i, j in combinations(range(len(points)), 2):
            if np.linalg.norm(projs[i] @ projs[j], 2) > self.tol:
                raise ValueError(f"projectors {i} and {j} are not orthogonal")
        if np.linalg.norm(projs.sum(axis=0) - np.eye(d), 2) > self.tol:
            raise ValueError("projectors do not sum to identity")
        projs = np.array([0.5 * (p + p.conj().T) for p in projs])
        projs.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "projectors", projs)

    @property
    def dim(self) -> int:
        return self.projectors.shape[1]

    @property
    def operator(self) -> np.ndarray:
        """``sum_k lambda_k P_k``."""
        return np.einsum("k,kij->ij", np.asarray(self.points), self.projectors)

    def as_povm(self, grid: OutcomeGrid | None = None) -> DiscretePOVM:
        """View as a POVM.

        Without a grid, each point gets its own cell centred on it (so that
        midpoint quadrature is exact) and the gaps between points become
        zero-effect cells. With a grid, each projector is added to the cell
        containing its point.
        """
        d = self.dim
        if grid is None:
            pts = np.sort(np.asarray(self.points))
            gaps = np.diff(pts)
            h = 0.25 * gaps.min() if len(gaps) else 0.5
            order = np.argsort(self.points)
            edges: list[float] = []
            effects = []
            for rank, k in enumerate(order):
                p = pts[rank]
                if rank > 0:
                    effects.append(np.zeros((d, d)))  # gap cell
                edges.extend([p - h, p + h])
                effects.append(self.projectors[k])
            return DiscretePOVM(OutcomeGrid(tuple(edges)), np.array(effects))
        effects = np.zeros((grid.m, d, d), dtype=complex)
        for p, proj in zip(self.points, self.projectors):
            effects[grid.locate(p)] += proj
        return DiscretePOVM(grid, effects)


def evaluate(povm: DiscretePOVM, delta: RingSet) -> np.ndarray:
    """``F(delta)``: sum of the cell effects in ascending index order."""
    if delta.grid != povm.grid:
        raise ValueError("ring set refers to a different grid")
    out = np.zeros((povm.dim, povm.dim), dtype=complex)
    for j in delta.cells:
        out = out + povm.effects[j]
    return out


@dataclass(frozen=True)
class CommutativityReport:
    verdict: bool
    max_commutator_norm: float
    worst_pair: tuple[int, int] | None

    def __bool__(self) -> bool:
        return self.verdict


def is_commutative(povm: DiscretePOVM, tol: float = 1e-9) -> CommutativityReport:
    """Pairwise commutator scan over cells.

    Commutativity of the cells implies commutativity on every ring set by
    bilinearity of the commutator, so ring sets are not scanned.
    """
    worst, pair = 0.0, None
    for i, j in combinations(range(povm.m), 2):
        c = commutator_norm(povm.effects[i], povm.effects[j])
        if c > worst:
            worst, pair = c, (i, j)
    return CommutativityReport(worst <= tol, worst, pair)


def is_pvm(povm: DiscretePOVM, tol: float = 1e-9) -> bool:
    if not all(is_projection(e, tol) for e in povm.effects):
        return False
    return all(
        np.linalg.norm(povm.effects[i] @ povm.effects[j], 2) <= tol
        for i, j in combinations(range(povm.m), 2)
    )


def povm_spectrum(povm: DiscretePOVM, tol: float = TOL_SPECTRUM) -> list[int]:
    """Cells carrying a nonzero effect: the grid-resolution stand-in for the spectrum."""
    return [j for j, e in enumerate(povm.effects) if operator_norm(e) > tol]


def integrate(povm: DiscretePOVM, func: Callable[[float], float]) -> np.ndarray:
    """``sum_j func(midpoint_j) F(cell_j)``."""
    values = np.array([float(func(x)) for x in povm.grid.midpoints])
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand must be finite on the grid")
    return np.einsum("j,jkl->kl", values, povm.effects)


@dataclass(frozen=True)
class NormalizationVerdict:
    accepted: bool
    residual: float

    def __bool__(self) -> bool:
        return self.accepted


def check_normalization(povm: DiscretePOVM, tol: float = TOL_NORM) -> NormalizationVerdict:
    total = evaluate(povm, povm.grid.everything())
    residual = float(np.linalg.norm(total - np.eye(povm.dim), 2))
    return NormalizationVerdict(residual <= tol, residual)


def coarsen(povm: DiscretePOVM, edges: Sequence[float]) -> DiscretePOVM:
    """Re-grid onto a coarser partition whose edges are a subset of the current ones."""
    old = np.asarray(povm.grid.edges)
    new = OutcomeGrid(tuple(edges))
    if new.a != old[0] or new.b != old[-1]:
        raise ValueError("coarse grid must span the same interval")
    idx = np.searchsorted(old, new.edges)
    if not np.array_equal(old[np.minimum(idx, len(old) - 1)], np.asarray(new.edges)):
        raise ValueError("coarse edges must be a subset of the current edges")
    effects = [povm.effects[lo:hi].sum(axis=0) for lo, hi in zip(idx[:-1], idx[1:])]
    return DiscretePOVM(new, np.array(effects))
