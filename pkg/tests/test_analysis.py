import json
import math

import numpy as np
import pytest

from semispectral.analysis import (
    DiniHypothesisError,
    DominatingMeasure,
    FunctionKernel,
    KernelModel,
    PropertyReport,
    absolute_continuity_constant,
    cell_partitions,
    dini_check,
    dyadic_family,
    halflines_family,
    norm1_check,
    shrinking_family,
    sigma_additivity_check,
    strong_feller_check,
    uniform_continuity_check,
)
from semispectral.kernels import ConvolutionKernel, IntervalSet, KernelProfile
from semispectral.povm import DiscretePVM, OutcomeGrid, RingSet
from semispectral.random_models import random_commuting_povm
from semispectral.reconstruction import build_triplet


def model(prof, spectrum=(0.0, 1.0)):
    return KernelModel(ConvolutionKernel(prof), spectrum)


GAUSS = model(KernelProfile.gaussian(1.0), (-math.inf, math.inf))
BOX = model(KernelProfile.box())
TRIANGLE = model(KernelProfile.triangle())


class TestReport:
    def test_fails_needs_witness(self):
        with pytest.raises(ValueError):
            PropertyReport("x", "fails")
        with pytest.raises(ValueError):
            PropertyReport("x", "maybe")

    def test_serialization(self):
        rep = PropertyReport("x", "holds", [(1, 0.5)], details={"v": np.float64(math.inf)})
        obj = json.loads(rep.dumps())
        assert obj["details"]["v"] == "inf"
        assert rep.to_csv() == "n,residual\n1,0.5\n"
        assert rep.ok


class TestUniformContinuity:
    def test_gaussian_halflines_fail(self):
        fam, lim = halflines_family(10)
        rep = uniform_continuity_check(GAUSS, fam, lim)
        assert rep.verdict == "fails" and rep.witness
        expected = 1 - 0.5 * math.erfc(5 / math.sqrt(2))
        assert [r for _, r in rep.residuals] == pytest.approx([expected] * 10, abs=1e-12)
        assert rep.details["argmax"][-1] == pytest.approx(-15.0)

    @pytest.mark.parametrize("target", [BOX, TRIANGLE], ids=["box", "triangle"])
    def test_compact_profiles_hold(self, target):
        fam, lim = dyadic_family(30)
        rep = uniform_continuity_check(target, fam, lim)
        assert rep.verdict == "holds"
        assert rep.details["bound_ok"]

    @pytest.mark.parametrize("target", [BOX, TRIANGLE], ids=["box", "triangle"])
    def test_slow_family_inconclusive(self, target):
        fam, lim = shrinking_family(100)
        rep = uniform_continuity_check(target, fam, lim)
        assert rep.verdict == "inconclusive"
        assert rep.details["bound_ok"]

    def test_box_residuals_are_widths(self):
        fam, lim = shrinking_family(20)
        rep = uniform_continuity_check(BOX, fam, lim)
        assert [r for _, r in rep.residuals] == pytest.approx([1 / n for n in range(1, 21)], abs=1e-12)

    def test_rejects_non_descending(self):
        fam = [IntervalSet.interval(0, 1), IntervalSet.interval(0, 2)]
        with pytest.raises(ValueError):
            uniform_continuity_check(BOX, fam, IntervalSet.empty())

    def test_finite_povm(self, rng):
        povm, _, _ = random_commuting_povm(rng, 3, 4)
        g = povm.grid
        fam = [RingSet(g, range(k, 4)) for k in range(4)]
        rep = uniform_continuity_check(povm, fam, g.empty())
        # a finite family ends at a nonempty set; the last residual is ||F(cell 3)||
        assert rep.residuals[-1][1] == pytest.approx(np.linalg.norm(povm.effects[3], 2))


class TestStrongFeller:
    def test_gaussian_fails_by_escape(self):
        rep = strong_feller_check(GAUSS, [IntervalSet.interval(0, 1)])
        assert rep.verdict == "fails"
        assert "half-line" in rep.witness

    @pytest.mark.parametrize("target", [BOX, TRIANGLE], ids=["box", "triangle"])
    def test_compact_profiles_hold(self, target):
        rep = strong_feller_check(target, [IntervalSet.interval(0, 1), IntervalSet.interval(0.2, 0.3)])
        assert rep.verdict == "holds"

    def test_jump_kernel_fails(self):
        def jump(delta, xs):
            return np.where(xs < 0.5, 1.0, 0.0)

        rep = strong_feller_check(KernelModel(FunctionKernel(jump)), [IntervalSet.interval(0, 1)])
        assert rep.verdict == "fails"
        assert "x=" in rep.witness

    def test_finite_target_holds(self, pvm2):
        assert strong_feller_check(pvm2).verdict == "holds"


class TestSigmaAdditivity:
    def test_extracted_kernel(self, rng):
        povm, _, _ = random_commuting_povm(rng, 4, 6)
        mu = build_triplet(povm).kernel
        rep = sigma_additivity_check(mu, cell_partitions(mu.grid))
        assert rep.verdict == "holds"
        assert max(r for _, r in rep.residuals) <= 1e-12

    def test_detects_defect(self):
        g = OutcomeGrid.uniform(0, 1, 2)

        def bad(delta):
            return np.array([0.6 * len(delta.cells)])

        rep = sigma_additivity_check(bad, [[RingSet(g, (0,)), RingSet(g, (1,))]])
        assert rep.verdict == "fails"

    def test_overlap_rejected(self):
        g = OutcomeGrid.uniform(0, 1, 2)
        with pytest.raises(ValueError):
            sigma_additivity_check(lambda d: np.zeros(1), [[RingSet(g, (0, 1)), RingSet(g, (1,))]])

    def test_partition_count(self):
        # m(m+1)/2 runs plus m-1 cuts
        assert len(cell_partitions(OutcomeGrid.uniform(0, 1, 5))) == 15 + 4


class TestNorm1:
    def test_pvm_holds(self, pvm2):
        assert norm1_check(pvm2).verdict == "holds"
        pvm = DiscretePVM((0.0, 2.0), np.array([np.diag([1.0, 0]), np.diag([0, 1.0])]))
        assert norm1_check(pvm).verdict == "holds"

    def test_unsharp_fails(self, rng):
        povm, _, _ = random_commuting_povm(rng, 3, 4, K=3)
        rep = norm1_check(povm)
        assert rep.verdict == "fails"

    def test_gaussian_impossible(self):
        rep = norm1_check(GAUSS)
        assert rep.verdict == "impossible"
        for (_, r), h in zip(rep.residuals, rep.details["widths"]):
            assert r <= h / math.sqrt(2 * math.pi) + 1e-12

    def test_box_impossible(self):
        rep = norm1_check(BOX, points=[0.0, 0.5])
        assert rep.verdict == "impossible"
        assert [r for _, r in rep.residuals] == pytest.approx(rep.details["widths"], abs=1e-12)

    def test_widths_must_decrease(self):
        with pytest.raises(ValueError):
            norm1_check(BOX, widths=(1e-2, 1e-1))


class TestAbsoluteContinuity:
    def test_box(self):
        rep = absolute_continuity_constant(BOX, DominatingMeasure.lebesgue(-1, 1))
        assert rep.verdict == "holds"
        assert rep.details["c"] <= 1 + 1e-9
        assert rep.details["uniform_continuity"] == "holds"

    def test_triangle_against_scaled_lebesgue(self):
        rep = absolute_continuity_constant(TRIANGLE, DominatingMeasure.lebesgue(-1, 1, 2.0))
        assert rep.verdict == "holds" and rep.details["c"] <= 1 + 1e-9

    def test_pvm_against_lebesgue_fails(self, pvm2):
        pvm = DiscretePVM((0.0, 1.0), pvm2.effects)
        rep = absolute_continuity_constant(pvm, DominatingMeasure.lebesgue(-1, 2))
        assert rep.verdict == "fails"

    def test_gaussian_against_bounded_lebesgue_fails(self):
        rep = absolute_continuity_constant(GAUSS, DominatingMeasure.lebesgue(-1, 1))
        assert rep.verdict == "fails"

    def test_finite_povm_counting(self, rng):
        povm, _, _ = random_commuting_povm(rng, 3, 5)
        rep = absolute_continuity_constant(povm, DominatingMeasure.counting_cells(povm.grid))
        assert rep.verdict == "holds" and rep.details["c"] <= 1 + 1e-12
        assert rep.details["uniform_continuity"] == "holds"


class TestDini:
    def test_powers_on_compact_subinterval(self):
        lam = np.linspace(0, 0.9, 1000)
        n = np.arange(1, 301)[:, None]
        rep = dini_check(lam[None, :] ** n, lam)
        assert rep.verdict == "holds"
        sups = np.array([r for _, r in rep.residuals])
        assert np.max(np.abs(sups - 0.9 ** np.arange(1, 301))) <= 1e-12

    def test_endpoint_one_rejected(self):
        lam = np.linspace(0, 1, 1000)
        with pytest.raises(DiniHypothesisError) as info:
            dini_check(lam[None, :] ** np.arange(1, 301)[:, None], lam)
        assert info.value.witness == (300, 999)

    def test_increasing_rejected(self):
        with pytest.raises(DiniHypothesisError):
            dini_check(np.array([[0.1], [0.2]]))

    def test_out_of_range_rejected(self):
        with pytest.raises(DiniHypothesisError):
            dini_check(np.array([[1.5], [0.2]]))

    def test_slow_convergence_inconclusive(self):
        lam = np.linspace(0, 0.9, 50)
        rep = dini_check(lam[None, :] ** np.arange(1, 11)[:, None], lam)
        assert rep.verdict == "inconclusive"
