"""Tests for the semi-analytical success probability and its bounds."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from clustalign.analysis import (
    DEFAULT_QUAD,
    NetworkParams,
    QuadratureError,
    QuadratureParams,
    QuadResult,
    beta_tilde,
    c_alpha,
    delta_coeff,
    jensen_bound,
    ppp_baseline,
    success_prob_ia,
    success_prob_siso,
    upper_bound_1d,
    upper_bound_closed_form,
    xi,
)

BASE = NetworkParams(
    lambda_p=0.25, cbar=3, sigma=0.25, alpha=4.0, threshold=0.1, d_ii=1.0
)


class TestNetworkParams:
    def test_field_validation(self):
        with pytest.raises(ValueError):
            replace(BASE, lambda_p=0.0)
        with pytest.raises(ValueError):
            replace(BASE, cbar=0)
        with pytest.raises(ValueError):
            replace(BASE, sigma=-0.1)
        with pytest.raises(ValueError):
            replace(BASE, alpha=1.9)
        with pytest.raises(ValueError):
            replace(BASE, threshold=-0.1)
        with pytest.raises(ValueError):
            replace(BASE, d_ii=0.0)
        with pytest.raises(ValueError):
            replace(BASE, noise_var=-1.0)

    def test_quadrature_params_validation(self):
        with pytest.raises(ValueError):
            QuadratureParams(rel_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureParams(engine="simpson")
        with pytest.raises(ValueError):
            QuadratureParams(outer_radius=-1.0)


class TestBetaTilde:
    def test_zero_threshold_gives_one(self):
        p = replace(BASE, threshold=0.0)
        res = beta_tilde(p, np.array([0.3, -0.4]))
        assert res.value == 1.0 and res.error == 0.0

    def test_distant_cluster_is_harmless(self):
        """A cluster 100 units away leaves less than 1e-6 of failure mass."""
        res = beta_tilde(BASE, np.array([100.0, 0.0]))
        assert 1.0 - res.value < 1e-6

    def test_noise_rejected(self):
        with pytest.raises(ValueError):
            beta_tilde(replace(BASE, noise_var=0.1), np.zeros(2))

    def test_monte_carlo_oracle(self):
        """Kernel average agrees with a 1e7-draw Monte-Carlo estimate."""
        y = np.array([-0.4, 0.3])
        quad_val = beta_tilde(BASE, y).value
        rng = np.random.default_rng(2024)
        total, n_total = 0.0, 0
        center = np.array([y[0] + BASE.d_ii, y[1]])
        r_t4 = BASE.threshold * BASE.d_ii**4
        for _ in range(10):
            x = rng.normal(scale=BASE.sigma, size=(1_000_000, 2))
            d2 = (x[:, 0] - center[0]) ** 2 + (x[:, 1] - center[1]) ** 2
            total += np.sum(1.0 / (1.0 + r_t4 / (d2 * d2)))
            n_total += x.shape[0]
        mc_val = total / n_total
        # MC standard error is below 2e-4 at this size
        assert abs(quad_val - mc_val) < 8e-4

    def test_never_exceeds_jensen_bound(self):
        for y in ([0.0, 0.0], [0.3, -0.2], [-0.5, 0.1], [1.0, 1.0], [-1.0, 0.0]):
            arr = np.array(y)
            assert beta_tilde(BASE, arr).value <= jensen_bound(BASE, arr) + 1e-12

    def test_engines_agree(self):
        gh = QuadratureParams(engine="gauss_hermite")
        for y in ([0.0, 0.0], [0.3, -0.2], [-0.5, 0.1]):
            a = beta_tilde(BASE, np.array(y))
            b = beta_tilde(BASE, np.array(y), gh)
            assert abs(a.value - b.value) <= a.error + b.error + 1e-9

    def test_gauss_hermite_reports_failure_honestly(self):
        """Wide kernels with a tiny interference core defeat the tensor
        rule; it must raise with its partial estimate instead of
        returning garbage."""
        gh = QuadratureParams(engine="gauss_hermite")
        p = replace(BASE, sigma=1.0, d_ii=0.25)
        with pytest.raises(QuadratureError) as excinfo:
            beta_tilde(p, np.zeros(2), gh)
        assert math.isfinite(excinfo.value.partial)


class TestJensenBound:
    def test_zero_threshold(self):
        assert jensen_bound(replace(BASE, threshold=0.0), np.zeros(2)) == 1.0

    def test_alpha_above_four_rejected(self):
        with pytest.raises(ValueError):
            jensen_bound(replace(BASE, alpha=4.5), np.zeros(2))

    def test_small_sigma_limit(self):
        p = replace(BASE, sigma=1e-9)
        y = np.array([0.5, 0.2])
        v = (y[0] + p.d_ii) ** 2 + y[1] ** 2
        expected = 1.0 / (1.0 + p.threshold * p.d_ii**4 / v**2)
        assert jensen_bound(p, y) == pytest.approx(expected, rel=1e-9)

    def test_moment_formula(self):
        y = np.zeros(2)
        s2, v = 0.0625, 1.0
        m2 = (2 * s2 + v) ** 2 + 4 * s2**2 + 4 * s2 * v
        expected = 1.0 / (1.0 + 0.1 * 1.0 / m2)
        assert jensen_bound(BASE, y) == pytest.approx(expected, rel=1e-12)


class TestXi:
    def test_zero_threshold(self):
        res = xi(replace(BASE, threshold=0.0))
        assert res.value == 0.0 and res.error == 0.0

    def test_monotone_in_threshold(self):
        vals = [xi(replace(BASE, threshold=t)).value for t in (0.05, 0.1, 0.2)]
        assert vals[0] < vals[1] < vals[2]

    def test_monotone_in_cluster_size(self):
        vals = [xi(replace(BASE, cbar=c)).value for c in (1, 2, 3)]
        assert vals[0] < vals[1] < vals[2]

    def test_alpha_boundary_rejected(self):
        with pytest.raises(ValueError):
            xi(replace(BASE, alpha=2.0))

    def test_escalates_on_impossible_tolerance(self):
        quad = QuadratureParams(rel_tol=1e-300, abs_tol=1e-300)
        with pytest.raises(QuadratureError) as excinfo:
            xi(BASE, quad)
        assert excinfo.value.partial > 0

    def test_float_protocol(self):
        res = xi(BASE)
        assert isinstance(res, QuadResult)
        assert float(res) == res.value


class TestSuccessProbabilities:
    def test_zero_threshold_gives_certainty(self):
        p = replace(BASE, threshold=0.0)
        assert success_prob_ia(p).value == 1.0
        assert success_prob_siso(p).value == 1.0

    def test_sparse_network_limit(self):
        p = replace(BASE, lambda_p=1e-9)
        assert success_prob_ia(p).value > 1.0 - 1e-6

    def test_decreasing_in_distance(self):
        vals = [
            success_prob_ia(replace(BASE, d_ii=d)).value for d in (0.25, 0.5, 1.0, 1.5)
        ]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_decreasing_in_threshold_and_density(self):
        assert (
            success_prob_ia(replace(BASE, threshold=0.2)).value
            < success_prob_ia(BASE).value
        )
        assert (
            success_prob_ia(replace(BASE, lambda_p=0.5)).value
            < success_prob_ia(BASE).value
        )

    def test_single_point_cluster_makes_modes_equal(self):
        p = replace(BASE, cbar=1)
        assert success_prob_siso(p).value == success_prob_ia(p).value

    def test_siso_never_beats_ia(self):
        for d in (0.25, 0.75, 1.25):
            p = replace(BASE, d_ii=d)
            assert success_prob_siso(p).value <= success_prob_ia(p).value

    def test_mu_never_enters(self):
        """Identical bits for any mean fading power, as the expressions
        must not depend on mu at all."""
        a = success_prob_ia(BASE)
        b = success_prob_ia(replace(BASE, mu=7.0))
        assert a.value == b.value and a.error == b.error

    def test_noise_rejected(self):
        with pytest.raises(ValueError):
            success_prob_ia(replace(BASE, noise_var=0.01))


class TestOneDimensionalBound:
    def test_zero_threshold(self):
        assert upper_bound_1d(replace(BASE, threshold=0.0)).value == 1.0

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            upper_bound_1d(replace(BASE, alpha=4.5))
        with pytest.raises(ValueError):
            upper_bound_1d(replace(BASE, alpha=2.0))

    def test_bounds_the_exact_probability(self):
        p = replace(BASE, sigma=0.0625, d_ii=1.2)
        bound = upper_bound_1d(p)
        exact = success_prob_ia(p)
        assert bound.value >= exact.value - bound.error - exact.error

    def test_single_point_small_sigma_equals_ppp(self):
        """c=1 clusters with a collapsing kernel form a plain PPP of
        intensity lambda_p, and the bound becomes exact."""
        tight = QuadratureParams(rel_tol=1e-10, abs_tol=1e-12)
        p = replace(BASE, cbar=1, sigma=1e-7)
        bound = upper_bound_1d(p, tight)
        reference = math.exp(
            -p.lambda_p * math.pi**2 / 2.0 * math.sqrt(p.threshold) * p.d_ii**2
        )
        assert abs(bound.value - reference) < 1e-9

    def test_noise_rejected(self):
        with pytest.raises(ValueError):
            upper_bound_1d(replace(BASE, noise_var=0.5))


class TestClosedFormPieces:
    def test_delta_values_exact(self):
        assert delta_coeff(1) == 1.0
        assert delta_coeff(2) == 1.5
        assert delta_coeff(3) == 1.875

    def test_delta_increasing_and_validated(self):
        vals = [delta_coeff(c) for c in range(1, 8)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        with pytest.raises(ValueError):
            delta_coeff(0)

    def test_closed_form_reference_value(self):
        """exp(-0.41994) at the documented parameter point."""
        p = replace(BASE, d_ii=1.0)
        val = upper_bound_closed_form(p)
        exponent = (
            0.25 * math.pi * 1.875 * math.sqrt(0.1) * math.atan(math.sqrt(0.1) / 0.25)
        )
        assert val == pytest.approx(math.exp(-exponent), rel=1e-12)
        assert val == pytest.approx(0.6571, abs=5e-4)

    def test_closed_form_zero_threshold(self):
        assert upper_bound_closed_form(replace(BASE, threshold=0.0)) == 1.0

    def test_closed_form_alpha_restriction(self):
        with pytest.raises(ValueError):
            upper_bound_closed_form(replace(BASE, alpha=3.0))

    def test_closed_form_warns_outside_small_sigma_regime(self):
        with pytest.warns(UserWarning):
            upper_bound_closed_form(replace(BASE, sigma=0.6))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            upper_bound_closed_form(replace(BASE, sigma=0.5))

    def test_closed_form_ppp_limit(self):
        p = replace(BASE, cbar=1, sigma=1e-9)
        assert upper_bound_closed_form(p) == pytest.approx(
            ppp_baseline(p), rel=1e-9
        )

    def test_c_alpha_values(self):
        assert abs(c_alpha(4.0) - math.pi**2 / 2.0) < 1e-12
        assert c_alpha(3.0) == pytest.approx(4.0 * math.pi**2 / (3.0 * math.sqrt(3.0)), rel=1e-12)
        assert c_alpha(2.001) > 1000.0

    def test_c_alpha_domain(self):
        with pytest.raises(ValueError):
            c_alpha(2.0)
        with pytest.raises(ValueError):
            c_alpha(1.5)

    def test_ppp_baseline_reference_value(self):
        assert ppp_baseline(replace(BASE, d_ii=1.0)) == pytest.approx(0.3102, abs=2e-4)

    def test_ppp_baseline_limits(self):
        assert ppp_baseline(replace(BASE, d_ii=1e-6)) > 1.0 - 1e-9
        assert ppp_baseline(replace(BASE, threshold=1e9)) < 1e-9


class TestOrderingChain:
    """success_prob_siso <= success_prob_ia <= upper_bound_1d."""

    @pytest.mark.parametrize(
        "lambda_p,cbar,sigma,alpha,threshold,d_ii",
        [
            (0.25, 3, 0.25, 4.0, 0.1, 0.5),
            (0.25, 3, 0.25, 4.0, 0.1, 1.0),
            (0.1, 2, 0.5, 3.0, 0.3, 0.8),
            (0.4, 4, 0.1, 3.5, 0.05, 1.2),
            (0.05, 1, 0.75, 2.5, 1.0, 0.6),
        ],
    )
    def test_chain(self, lambda_p, cbar, sigma, alpha, threshold, d_ii):
        p = NetworkParams(
            lambda_p=lambda_p,
            cbar=cbar,
            sigma=sigma,
            alpha=alpha,
            threshold=threshold,
            d_ii=d_ii,
        )
        siso = success_prob_siso(p)
        ia = success_prob_ia(p)
        bound = upper_bound_1d(p)
        assert siso.value <= ia.value + siso.error + ia.error
        assert ia.value <= bound.value + ia.error + bound.error


class TestBoundAgreement:
    def test_closed_form_tracks_integral_bound_at_small_sigma(self):
        """The neglected residual stays below 0.02 for sigma <= 0.0625."""
        p0 = replace(BASE, sigma=0.0625)
        for d in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5):
            p = replace(p0, d_ii=d)
            gap = abs(upper_bound_closed_form(p) - upper_bound_1d(p).value)
            assert gap <= 0.02, f"gap {gap:.4f} at d_ii={d}"

    def test_large_sigma_approaches_ppp(self):
        """The gap to the equal-density PPP shrinks as the clusters
        spread out (conjecture check at three spreads)."""
        p0 = replace(BASE, d_ii=0.75)
        gaps = []
        for sigma in (1.0, 2.0, 4.0):
            p = replace(p0, sigma=sigma)
            gaps.append(abs(success_prob_ia(p).value - ppp_baseline(p)))
        assert gaps[0] > gaps[1] > gaps[2]
