import math

import numpy as np
import pytest

from aceflow.quadrature import collapsed_gauss, dunavant_16, rule_for_degree, strang_fix_7


def exact_monomial(a, b):
    # integral of x^a y^b over the reference triangle
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("rule,deg", [(strang_fix_7(), 5), (dunavant_16(), 8), (collapsed_gauss(10), 10), (collapsed_gauss(3), 3)])
def test_exact_on_monomials(rule, deg):
    x, y = rule.points.T
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            approx = 0.5 * rule.weights @ (x**a * y**b)
            assert abs(approx - exact_monomial(a, b)) < 1e-15


def test_weights_and_degree():
    for rule in (strang_fix_7(), dunavant_16()):
        assert abs(rule.weights.sum() - 1.0) < 1e-15
        assert np.allclose(rule.barycentric.sum(axis=1), 1.0)
    assert rule_for_degree(5).degree >= 5
    assert rule_for_degree(9).degree >= 9
