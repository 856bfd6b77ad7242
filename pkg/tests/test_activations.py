"""Activation derivatives, interval constants, and g'' inversion."""

import math

import numpy as np
import pytest

from netrecover import ConfigError, invert_g2, make_activation, slope_sign_certificate


class TestConstants:
    def test_tanh_interval(self, tanh_act):
        assert tanh_act.tau_inf == 0.6

    def test_sigmoid_interval(self, sigmoid_act):
        assert sigmoid_act.tau_inf == 1.5

    def test_tanh_third_derivative_at_zero(self, tanh_act):
        # -2 (1 - t^2)(1 - 3 t^2) evaluated at t = tanh(0) = 0
        assert tanh_act.g3(0.0) == pytest.approx(-2.0, abs=1e-15)

    def test_sigmoid_third_derivative_at_zero(self, sigmoid_act):
        assert sigmoid_act.g3(0.0) == pytest.approx(-0.125, abs=1e-15)

    def test_tanh_kappa(self, tanh_act):
        # kappa = max(sup|g'|, sup|g''|, sup|g'''|) = sup|g'''| = 2 at the origin
        assert tanh_act.kappa == pytest.approx(2.0, rel=1e-6)

    def test_monotone_direction(self, tanh_act, sigmoid_act):
        assert tanh_act.g2_monotone_sign == -1
        assert sigmoid_act.g2_monotone_sign == -1

    def test_tanh_monotone_on_full_interval(self, tanh_act):
        # the true monotonicity boundary atanh(1/sqrt(3)) ~ 0.658 lies outside
        assert tanh_act.g2_monotone_radius == tanh_act.tau_inf
        x = np.linspace(-0.6, 0.6, 1000)
        diffs = np.diff(tanh_act.g2(x))
        assert np.all(diffs * tanh_act.g2_monotone_sign > 0)

    def test_sigmoid_monotone_core(self, sigmoid_act):
        # sigmoid g'' turns around at |x| = log((3+sqrt(3))/(3-sqrt(3))) ~ 1.317,
        # inside the declared 1.5 radius; the detected core must sit just below it
        turn = math.log((3 + math.sqrt(3)) / (3 - math.sqrt(3)))
        assert 1.25 < sigmoid_act.g2_monotone_radius < turn + 0.01
        r = sigmoid_act.g2_monotone_radius
        x = np.linspace(-r, r, 1000)
        assert np.all(np.diff(sigmoid_act.g2(x)) < 0)


class TestDerivativeConsistency:
    @pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
    def test_central_differences(self, kind):
        act = make_activation(kind)
        rng = np.random.default_rng(0)
        x = rng.uniform(-3, 3, size=1000)
        h = 1e-4
        for low, high in ((act.g, act.g1), (act.g1, act.g2), (act.g2, act.g3)):
            fd = (low(x + h) - low(x - h)) / (2 * h)
            assert np.max(np.abs(fd - high(x))) < 10 * h * h

    @pytest.mark.parametrize("kind", ["tanh", "sigmoid"])
    def test_kappa_bounds_derivatives(self, kind):
        act = make_activation(kind)
        x = np.linspace(-10, 10, 5000)
        for n in (1, 2, 3):
            assert np.max(np.abs(act.derivative(n)(x))) <= act.kappa + 1e-12


class TestInvertG2:
    def test_zero_maps_to_zero(self, tanh_act):
        assert invert_g2(tanh_act, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_forward_backward(self, tanh_act):
        t = invert_g2(tanh_act, float(tanh_act.g2(0.3)))
        assert t == pytest.approx(0.3, abs=1e-10)

    def test_clamps_below_image(self, tanh_act):
        # tanh g'' decreases, so its minimum over the interval sits at +0.6;
        # anything below that image value must clamp to the +0.6 boundary
        y = float(tanh_act.g2(0.6)) - 1.0
        assert invert_g2(tanh_act, y) == 0.6

    def test_clamps_above_image(self, tanh_act):
        y = float(tanh_act.g2(-0.6)) + 1.0
        assert invert_g2(tanh_act, y) == -0.6

    def test_in_image_value_inverts_exactly(self, tanh_act):
        # g''(-0.6) - 1 = -0.235 still lies inside the image, so the exact
        # interior preimage wins over any endpoint
        y = float(tanh_act.g2(-0.6)) - 1.0
        t = invert_g2(tanh_act, y)
        assert abs(t) < 0.6
        assert float(tanh_act.g2(t)) == pytest.approx(y, abs=1e-12)

    def test_round_trip_sweep(self, tanh_act):
        rng = np.random.default_rng(42)
        for tau in rng.uniform(-0.59, 0.59, size=100):
            assert invert_g2(tanh_act, float(tanh_act.g2(tau))) == pytest.approx(
                tau, abs=1e-9)

    def test_round_trip_sigmoid_core(self, sigmoid_act):
        r = sigmoid_act.g2_monotone_radius
        rng = np.random.default_rng(43)
        for tau in rng.uniform(-r + 0.01, r - 0.01, size=100):
            assert invert_g2(sigmoid_act, float(sigmoid_act.g2(tau))) == pytest.approx(
                tau, abs=1e-9)

    def test_residual_tolerance(self, tanh_act):
        rng = np.random.default_rng(44)
        for tau in rng.uniform(-0.55, 0.55, size=50):
            y = float(tanh_act.g2(tau))
            t = invert_g2(tanh_act, y)
            assert abs(float(tanh_act.g2(t)) - y) <= 1e-12

    def test_rejects_non_finite(self, tanh_act):
        with pytest.raises(ConfigError):
            invert_g2(tanh_act, float("nan"))


class TestCustomBundle:
    def test_valid_custom_accepted(self):
        act = make_activation("custom", custom=dict(
            g=np.tanh,
            g1=lambda x: 1 - np.tanh(x) ** 2,
            g2=lambda x: -2 * np.tanh(x) * (1 - np.tanh(x) ** 2),
            g3=lambda x: -2 * (1 - np.tanh(x) ** 2) * (1 - 3 * np.tanh(x) ** 2),
            tau_inf=0.5,
        ))
        assert act.kind == "custom"
        assert act.g2_monotone_radius == 0.5

    def test_nonmonotone_custom_rejected_with_location(self):
        # g = sin has g'' = -sin, which turns around at |x| = pi/2 ~ 1.571
        with pytest.raises(ConfigError, match="violation near"):
            make_activation("custom", custom=dict(
                g=np.sin, g1=np.cos,
                g2=lambda x: -np.sin(x), g3=lambda x: -np.cos(x),
                tau_inf=2.5,
            ))

    def test_incomplete_bundle_rejected(self):
        with pytest.raises(ConfigError):
            make_activation("custom", custom=dict(g=np.tanh, tau_inf=0.5))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            make_activation("relu")


class TestSlopeSignCertificate:
    def test_tanh_positive_mean_slope(self, tanh_act):
        sign, min_abs = slope_sign_certificate(tanh_act)
        assert sign == 1
        assert min_abs > 0

    def test_sigmoid_positive_mean_slope(self, sigmoid_act):
        sign, _ = slope_sign_certificate(sigmoid_act)
        assert sign == 1

    def test_quadrature_matches_direct_integral(self, tanh_act):
        # scipy quadrature oracle at tau = -0.6 (the single grid point)
        from scipy.integrate import quad
        ref, _ = quad(lambda t: (1 - np.tanh(t - 0.6) ** 2) * np.exp(-t * t / 2),
                      -12, 12)
        _, min_abs = slope_sign_certificate(tanh_act, n_tau=1)
        assert min_abs == pytest.approx(ref, rel=1e-10)
