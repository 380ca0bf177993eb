import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from semispectral.povm import MalformedPOVM, OutcomeGrid
from semispectral.kernels import (
    ConvolutionKernel,
    IntervalSet,
    KernelProfile,
    kernel_eval,
    kernel_eval_quad,
    kernel_row,
    lipschitz_scan,
    modulus_scan,
    unsharp_position,
    weak_convergence_check,
)

PROFILES = [KernelProfile.gaussian(0.7), KernelProfile.box(), KernelProfile.triangle(),
            KernelProfile.tabulated([-1.0, 0.0, 0.5, 2.0], [0.0, 1.0, 0.3, 0.0])]


class TestIntervalSet:
    def test_merges_overlaps(self):
        s = IntervalSet(((2.0, 3.0), (0.0, 1.0), (0.5, 1.5)))
        assert s.components == ((0.0, 1.5), (2.0, 3.0))
        assert s.measure() == pytest.approx(2.5)

    def test_rejects_reversed(self):
        with pytest.raises(ValueError):
            IntervalSet.interval(1.0, 0.0)

    def test_set_algebra(self):
        a = IntervalSet.interval(0.0, 2.0)
        b = IntervalSet.interval(1.0, 3.0)
        assert (a & b).components == ((1.0, 2.0),)
        assert (a - b).components == ((0.0, 1.0),)
        assert (a | b).components == ((0.0, 3.0),)
        assert IntervalSet.interval(0.5, 1.0) <= a
        assert 1.5 in a and 2.5 not in a

    def test_point_removal_keeps_interval(self):
        a = IntervalSet.interval(0.0, 1.0)
        assert (a - IntervalSet.point(0.5)).measure() == 1.0
        assert not (IntervalSet.point(0.0) - IntervalSet.point(0.0))

    def test_unbounded(self):
        s = IntervalSet.below(-1.0) | IntervalSet.above(1.0)
        assert s.finite_endpoints == [-1.0, 1.0]
        assert math.isinf(s.measure())
        assert s.shift(2.0).finite_endpoints == [1.0, 3.0]


class TestProfiles:
    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.family)
    def test_unit_mass(self, prof):
        assert float(prof.mass(-math.inf, math.inf)) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.family)
    def test_cdf_matches_quadrature(self, prof):
        kern = ConvolutionKernel(prof)
        for hi in np.linspace(-1.5, 2.5, 17):
            delta = IntervalSet.interval(-5.0, float(hi))
            assert kernel_eval(kern, delta, 0.0) == pytest.approx(
                kernel_eval_quad(kern, delta, 0.0), abs=1e-12)

    def test_triangle_values(self):
        prof = KernelProfile.triangle()
        assert float(prof.cdf(0.25)) == 0.125
        assert float(prof.cdf(0.5)) == 0.5
        assert float(prof.cdf(0.75)) == 0.875
        assert prof.density_bound == 2.0

    def test_gaussian_tails_against_scipy(self):
        prof = KernelProfile.gaussian(1.0)
        for z in (5.0, 10.0, 20.0):
            assert float(prof.mass(z, math.inf)) == pytest.approx(stats.norm.sf(z), rel=1e-12)
            assert float(prof.mass(-math.inf, -z)) == pytest.approx(stats.norm.cdf(-z), rel=1e-12)

    @pytest.mark.parametrize("l", [0.0, -1.0, math.inf])
    def test_gaussian_width_validated(self, l):
        with pytest.raises(ValueError):
            KernelProfile.gaussian(l)

    def test_tabulated_validation(self):
        with pytest.raises(ValueError):
            KernelProfile.tabulated([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(ValueError):
            KernelProfile.tabulated([0.0, 1.0], [-1.0, 1.0])
        with pytest.raises(ValueError):
            KernelProfile.tabulated([0.0, 1.0], [0.0, 0.0])

    def test_amplitude_marginal(self):
        xs = np.linspace(-6, 6, 2001)
        prof = KernelProfile.from_amplitude(xs, np.exp(-xs**2 / 4) * np.exp(1j * xs))
        # |exp(-x^2/4)|^2 is the standard normal density up to scale
        assert float(prof.mass(-1.0, 1.0)) == pytest.approx(math.erf(1 / math.sqrt(2)), abs=1e-5)

    @pytest.mark.parametrize("prof", PROFILES, ids=lambda p: p.family)
    def test_json_round_trip(self, prof):
        back = KernelProfile.from_json(prof.to_json())
        assert back.to_json() == prof.to_json()

    def test_continuity_modulus(self):
        assert KernelProfile.box().continuity_modulus(0.1) is None
        assert KernelProfile.triangle().continuity_modulus(0.1) == pytest.approx(0.4)


class TestConvolutionKernel:
    def test_gaussian_closed_form(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        assert kernel_eval(kern, IntervalSet.interval(-1, 1), 0.0) == pytest.approx(
            math.erf(1 / math.sqrt(2)), abs=1e-15)

    def test_box_and_halfline(self):
        assert kernel_eval(ConvolutionKernel(KernelProfile.box()), IntervalSet.interval(0, 2), 0.5) == 0.5
        g = ConvolutionKernel(KernelProfile.gaussian(2.0))
        assert kernel_eval(g, IntervalSet.below(3.0), 3.0) == pytest.approx(0.5, abs=1e-15)

    def test_vectorized(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        xs = np.linspace(-3, 3, 7)
        vals = kernel_eval(kern, IntervalSet.interval(-1, 1), xs)
        assert vals.shape == (7,)
        assert np.allclose(vals, vals[::-1], atol=1e-15)

    @given(st.floats(-3, 3), st.floats(0, 2), st.floats(-2, 2))
    @settings(max_examples=60, deadline=None)
    def test_additive_over_disjoint_pieces(self, lo, width, x):
        kern = ConvolutionKernel(KernelProfile.triangle())
        mid = lo + width / 2
        whole = kernel_eval(kern, IntervalSet.interval(lo, lo + width), x)
        parts = (kernel_eval(kern, IntervalSet.interval(lo, mid), x)
                 + kernel_eval(kern, IntervalSet.interval(mid, lo + width), x))
        assert whole == pytest.approx(parts, abs=1e-14)

    def test_lipschitz_bound(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(0.5))
        bound = math.sqrt(2) / (0.5 * math.sqrt(math.pi))
        assert kern.lipschitz_bound(IntervalSet.interval(-1, 1)) == pytest.approx(bound)
        assert kern.lipschitz_bound(IntervalSet.below(0.0)) == pytest.approx(bound / 2)

    def test_lipschitz_scan_below_bound(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        delta = IntervalSet.interval(-0.01, 0.01)
        slope = lipschitz_scan(kern, delta, (-math.inf, math.inf), 1e-3)
        assert 0 < slope <= kern.lipschitz_bound(delta)
        with pytest.raises(ValueError):
            lipschitz_scan(kern, delta, (0, 1), 0.0)

    def test_modulus_scan_detects_jump(self):
        def step(delta, xs):
            return (np.asarray(xs) >= 0.3).astype(float)

        mod, (x, y) = modulus_scan(step, None, (0.0, 1.0), 1e-2)
        assert mod == 1.0 and x < 0.3 <= y


class TestKernelRow:
    def test_policies(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        grid = OutcomeGrid.uniform(-1.0, 1.0, 4)
        rep = kernel_row(kern, 0.0, grid, "report-deficit")
        assert rep.values.sum() + rep.deficit == pytest.approx(1.0, abs=1e-15)
        assert rep.deficit == pytest.approx(math.erfc(1 / math.sqrt(2)), abs=1e-15)
        ab = kernel_row(kern, 0.0, grid, "absorb")
        assert ab.values.sum() == pytest.approx(1.0, abs=1e-15) and ab.deficit == 0.0
        rn = kernel_row(kern, 0.0, grid, "renormalize")
        assert rn.values.sum() == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(ValueError):
            kernel_row(kern, 0.0, grid, "drop")

    def test_gaussian_five_sigma_deficit(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        row = kernel_row(kern, 0.0, OutcomeGrid.uniform(-5.0, 5.0, 50))
        assert row.deficit == pytest.approx(math.erfc(5 / math.sqrt(2)), rel=1e-12)
        assert row.deficit < 6e-7


class TestUnsharpPosition:
    def test_compact_profile(self):
        kern = ConvolutionKernel(KernelProfile.box())
        trip = unsharp_position(kern, [0.0, 0.5, 1.0], OutcomeGrid.uniform(-1.0, 1.0, 8))
        trip.povm.validate()
        assert trip.residual() == 0.0
        assert np.allclose(trip.kernel.values[0], [0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0])
        assert np.allclose(trip.kernel.values[2], [0, 0, 0, 0, 0.25, 0.25, 0.25, 0.25])

    def test_deficit_rejected(self):
        kern = ConvolutionKernel(KernelProfile.gaussian(1.0))
        with pytest.raises(MalformedPOVM):
            unsharp_position(kern, [0.0], OutcomeGrid.uniform(-1.0, 1.0, 4))
        trip = unsharp_position(kern, [0.0], OutcomeGrid.uniform(-1.0, 1.0, 4), tail_policy="absorb")
        trip.povm.validate()

    def test_duplicate_points(self):
        with pytest.raises(ValueError):
            unsharp_position(ConvolutionKernel(KernelProfile.box()), [0.0, 0.0],
                             OutcomeGrid.uniform(-1, 1, 4))


class TestWeakConvergence:
    @pytest.mark.parametrize("prof", [KernelProfile.gaussian(1.0), KernelProfile.box()],
                             ids=["gaussian", "box"])
    def test_dyadic_sequence(self, prof):
        rep = weak_convergence_check(ConvolutionKernel(prof), [2.0**-n for n in range(1, 40)], 0.0)
        assert rep.holds, rep.failing
        assert np.all(rep.differences[0] < 1e-9)  # g = 1 integrates to 1 everywhere

    def test_non_convergent_sequence(self):
        rep = weak_convergence_check(ConvolutionKernel(KernelProfile.box()), [1.0] * 5, 0.0)
        assert not rep.holds
        assert "sin" in rep.failing
