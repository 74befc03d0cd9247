import math

import numpy as np
import pytest
from scipy.signal import lfilter

from laguerre_ebd.engine.basis import BasisSpec, eval_basis, gram_schmidt
from laguerre_ebd.engine.errors import DomainError, UnsupportedConfiguration
from laguerre_ebd.engine.synth import (
    FilterSpec,
    LdeCoeffs,
    NoncausalPair,
    analysis_filter,
    derivative_filter,
    realize_polynomial_kernel,
    synthesis_filter,
    table_analysis_filter,
    table_synthesis_filter,
    weight_filter,
    weighted_component_tf,
)
from laguerre_ebd.engine.types import Direction, FilterRole, Sidedness

P_QUARTER = math.exp(-0.25)
P_HALF = math.exp(-0.5)
TABLE_TOL = 5e-5

CUBIC_A_QUARTER = [1.0, -2.3364, 1.8196, -0.4724]
CUBIC_A_HALF = [1.0, -1.8196, 1.1036, -0.2231]


def _same(r1, r2, atol=1e-10):
    halves1 = [r1.fwd, r1.bwd] if isinstance(r1, NoncausalPair) else [r1]
    halves2 = [r2.fwd, r2.bwd] if isinstance(r2, NoncausalPair) else [r2]
    assert len(halves1) == len(halves2)
    for c1, c2 in zip(halves1, halves2):
        order = max(c1.order, c2.order)
        for v1, v2 in zip(c1.dense(order), c2.dense(order)):
            np.testing.assert_allclose(v1, v2, rtol=0, atol=atol)


def test_stage_one_causal_table():
    b, a = table_synthesis_filter(P_QUARTER, 4).dense(3)
    np.testing.assert_allclose(b, [0.0920, -0.0913, 0.0102, 0.0], atol=TABLE_TOL)
    np.testing.assert_allclose(a, CUBIC_A_QUARTER, atol=TABLE_TOL)


def test_stage_one_noncausal_table():
    pair = table_synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED)
    assert pair.kind is Direction.SHARED
    for half in (pair.fwd, pair.bwd):
        b, a = half.dense(3)
        np.testing.assert_allclose(b, [0.1463, -0.0925, -0.0561, 0.0327], atol=TABLE_TOL)
        np.testing.assert_allclose(a, CUBIC_A_HALF, atol=TABLE_TOL)


@pytest.mark.parametrize("k, b, a", [
    (0, [0.4703], [1.0, -0.7788]),
    (1, [-0.4151, 0.4151], [1.0, -1.5576, 0.6065]),
    (2, [0.3663, -0.7326, 0.3663, 0.0], CUBIC_A_QUARTER),
])
def test_stage_two_causal_table(k, b, a):
    got_b, got_a = table_analysis_filter(k, P_QUARTER).dense(k + 1)
    np.testing.assert_allclose(got_b, np.pad(b, (0, k + 2 - len(b))), atol=TABLE_TOL)
    np.testing.assert_allclose(got_a, a, atol=TABLE_TOL)


def test_stage_two_noncausal_table():
    k0 = table_analysis_filter(0, P_HALF, Sidedness.TWO_SIDED)
    assert k0.kind is Direction.SHARED
    np.testing.assert_allclose(k0.fwd.b, [0.2474, 0.1501], atol=TABLE_TOL)
    np.testing.assert_allclose(k0.fwd.a, [1.0, -0.6065], atol=TABLE_TOL)

    k1 = table_analysis_filter(1, P_HALF, Sidedness.TWO_SIDED)
    assert k1.kind is Direction.ANTISYMMETRIC
    np.testing.assert_allclose(k1.fwd.b[:2], [0.0, 0.1072], atol=TABLE_TOL)
    np.testing.assert_allclose(k1.bwd.b[:2], [0.0, -0.1072], atol=TABLE_TOL)
    np.testing.assert_allclose(k1.fwd.a, [1.0, -1.2131, 0.3679], atol=TABLE_TOL)

    k2 = table_analysis_filter(2, P_HALF, Sidedness.TWO_SIDED)
    np.testing.assert_allclose(k2.fwd.b, [-0.1093, 0.0832, 0.0505, -0.0244], atol=TABLE_TOL)
    np.testing.assert_allclose(k2.fwd.a, CUBIC_A_HALF, atol=TABLE_TOL)


@pytest.mark.parametrize("sidedness", list(Sidedness))
@pytest.mark.parametrize("p", [0.3, P_HALF, P_QUARTER, 0.9])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_numeric_analysis_matches_closed_form(k, p, sidedness):
    _same(analysis_filter(k, p, sidedness), table_analysis_filter(k, p, sidedness))


@pytest.mark.parametrize("p", [0.3, P_HALF, P_QUARTER])
@pytest.mark.parametrize("q", [0.0, 2.0, 4.0, 4.6, -2.0])
def test_numeric_synthesis_matches_closed_form(p, q):
    _same(synthesis_filter(p, q), table_synthesis_filter(p, q))


def test_numeric_noncausal_synthesis_matches_closed_form():
    _same(synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED),
          table_synthesis_filter(P_HALF, 0, Sidedness.TWO_SIDED))


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4])
@pytest.mark.parametrize("q", [0.0, 3.0])
def test_synthesis_has_unit_dc_gain(degree, q):
    assert synthesis_filter(P_QUARTER, q, degree=degree).dc_gain == pytest.approx(1.0, abs=1e-10)
    pair = synthesis_filter(P_QUARTER, 0, Sidedness.TWO_SIDED, degree=degree)
    assert pair.dc_gain == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("q", [0.0, 4.0, -3.0])
def test_synthesis_reproduces_quadratics(q):
    n = np.arange(400, dtype=np.float64)
    x = 0.5 * n ** 2 - 3 * n + 7
    c = synthesis_filter(P_QUARTER, q)
    y = lfilter(c.b, c.a, x)
    m = n[-1] - q
    assert y[-1] == pytest.approx(0.5 * m ** 2 - 3 * m + 7, rel=1e-9)


def test_analysis_impulse_response_is_weighted_basis():
    p = P_QUARTER
    alpha = gram_schmidt(BasisSpec(degree=3, p=p))
    m = np.arange(50, dtype=np.float64)
    impulse = np.zeros(50)
    impulse[0] = 1.0
    for k in range(4):
        c = analysis_filter(k, p)
        h = lfilter(c.b, c.a, impulse)
        np.testing.assert_allclose(h, eval_basis(alpha, k, m) * p ** m, atol=1e-10)


def test_analysis_poles_have_multiplicity_k_plus_one():
    for k in range(4):
        c = analysis_filter(k, P_HALF)
        assert c.order == k + 1
        assert c.is_stable()


@pytest.mark.parametrize("q", [0.0, 4.0])
def test_derivative_of_ramp_is_plus_one(q):
    n = np.arange(500, dtype=np.float64)
    d = derivative_filter(P_QUARTER, q)
    y = lfilter(d.b, d.a, 2.0 + n)
    assert y[-1] == pytest.approx(1.0, abs=1e-8)


def test_derivative_is_minus_offset_derivative_of_synthesis():
    p, q, eps = P_QUARTER, 2.0, 1e-5
    impulse = np.zeros(200)
    impulse[0] = 1.0

    def h(c):
        return lfilter(c.b, c.a, impulse)

    fd = (h(synthesis_filter(p, q + eps)) - h(synthesis_filter(p, q - eps))) / (2 * eps)
    np.testing.assert_allclose(h(derivative_filter(p, q)), -fd, atol=1e-7)


def test_weighted_component_transfer_functions():
    p = 0.5
    c0 = weighted_component_tf(0, p)
    np.testing.assert_allclose(c0.b, [1.0, 0.0])
    np.testing.assert_allclose(c0.a, [1.0, -p])
    c1 = weighted_component_tf(1, p)
    np.testing.assert_allclose(c1.b, [0.0, p, 0.0])
    np.testing.assert_allclose(c1.a, [1.0, -2 * p, p * p])


def test_weight_filter_impulse_response():
    c = weight_filter(0.5)
    impulse = np.zeros(6)
    impulse[0] = 1.0
    np.testing.assert_allclose(lfilter(c.b, c.a, impulse), 0.5 ** np.arange(6))


def test_two_sided_polynomial_kernel_kind():
    assert realize_polynomial_kernel([1.0, 0.0, 2.0], 0.5, Sidedness.TWO_SIDED).kind is Direction.SHARED
    assert realize_polynomial_kernel([0.0, 1.0], 0.5, Sidedness.TWO_SIDED).kind is Direction.ANTISYMMETRIC
    with pytest.raises(UnsupportedConfiguration):
        realize_polynomial_kernel([1.0, 1.0], 0.5, Sidedness.TWO_SIDED)


def test_noncausal_synthesis_requires_zero_offset():
    with pytest.raises(UnsupportedConfiguration):
        synthesis_filter(P_HALF, 1.0, Sidedness.TWO_SIDED)
    with pytest.raises(UnsupportedConfiguration):
        table_synthesis_filter(P_HALF, 1.0, Sidedness.TWO_SIDED)


def test_lde_coeffs_normalizes_and_pads():
    c = LdeCoeffs(b=[2.0], a=[2.0, -1.0])
    np.testing.assert_allclose(c.b, [1.0, 0.0])
    np.testing.assert_allclose(c.a, [1.0, -0.5])
    assert c.order == 1
    assert c.dc_gain == pytest.approx(2.0)
    with pytest.raises(DomainError):
        LdeCoeffs(b=[1.0], a=[0.0, 1.0])
    with pytest.raises(DomainError):
        LdeCoeffs(b=[1.0, 1.0, 1.0], a=[1.0, 0.5, 0.25]).dense(1)


def test_table_poles_sit_at_p():
    c = table_synthesis_filter(P_QUARTER, 4)
    np.testing.assert_allclose(np.abs(c.poles), P_QUARTER, atol=1e-4)
    assert c.is_stable()


def test_filter_spec_dispatch_and_validation():
    spec = FilterSpec.from_sigma(-0.25, q=4.0)
    assert spec.p == pytest.approx(P_QUARTER)
    _same(spec.realize(), table_synthesis_filter(P_QUARTER, 4))
    spec = FilterSpec(p=P_HALF, role=FilterRole.ANALYSIS, k=1, sidedness=Sidedness.TWO_SIDED)
    assert spec.realize().kind is Direction.ANTISYMMETRIC
    with pytest.raises(DomainError):
        FilterSpec.from_sigma(0.1)
    with pytest.raises(DomainError):
        FilterSpec(p=0.5, role=FilterRole.ANALYSIS, k=3)
    with pytest.raises(UnsupportedConfiguration):
        FilterSpec(p=0.5, role=FilterRole.DERIVATIVE, sidedness=Sidedness.TWO_SIDED)
