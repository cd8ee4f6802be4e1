import math

import numpy as np
import pytest
from scipy.integrate import quad

from bobylev.quadrature import (
    composite_rule, filon_sine_transform, gauss_legendre, grading_for_exponent, panel_edges,
    power_graded_rule, refine, segment_rule,
)


@pytest.mark.parametrize("order", [2, 5, 8, 16])
def test_gauss_legendre_exact_for_polynomials(order):
    x, w = gauss_legendre(order)
    for k in range(2 * order):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.dot(w, x**k) == pytest.approx(exact, abs=1e-13)


def test_composite_rule_integrates_exponential():
    nodes, w = composite_rule(np.linspace(0.0, 3.0, 7), 8)
    assert np.dot(w, np.exp(nodes)) == pytest.approx(math.expm1(3.0), rel=1e-14)


@pytest.mark.parametrize("beta", [-0.5, -0.9, 0.5, 2.0])
def test_graded_rule_resolves_endpoint_power(beta):
    m = grading_for_exponent(beta)
    nodes, w = power_graded_rule(1.0, 16, 8, m)
    assert np.dot(w, nodes**beta * np.cos(nodes)) == pytest.approx(
        quad(lambda x: x**beta * math.cos(x), 0, 1, epsrel=1e-13, limit=200)[0], rel=1e-10)


def test_segment_rule_switches_grading():
    n1, w1 = segment_rule(0.1, 0.12, 4, 8, 4.0)
    n2, w2 = segment_rule(0.01, 1.0, 4, 8, 4.0)
    assert np.sum(w1) == pytest.approx(0.02, rel=1e-14)
    assert np.sum(w2) == pytest.approx(0.99, rel=1e-14)


def test_refine_converges_and_flags_divergence():
    def conv(panels):
        nodes, w = power_graded_rule(1.0, panels, 8, grading_for_exponent(-0.5))
        f = nodes**-0.5
        return float(np.dot(w, f)), float(np.dot(w, np.abs(f)))

    res = refine(conv, panels0=4)
    assert not res.divergent and res.value == pytest.approx(2.0, rel=1e-12)

    def div(panels):
        nodes, w = power_graded_rule(1.0, panels, 8, grading_for_exponent(-1.5))
        f = nodes**-1.5
        return float(np.dot(w, f)), float(np.dot(w, np.abs(f)))

    res = refine(div, panels0=4)
    assert res.divergent and math.isinf(res.flagged_value)


@pytest.mark.parametrize("v", [0.5, 3.0, 40.0])
def test_filon_sine_transform_against_closed_form(v):
    # int_0^inf exp(-r) sin(r v) dr = v / (1 + v^2)
    edges = panel_edges(60.0)
    got = filon_sine_transform(lambda r: np.exp(-r), edges, np.array([v]))[0]
    assert got == pytest.approx(v / (1 + v * v), abs=1e-13)
