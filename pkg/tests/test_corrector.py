import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exeuler.conformal import BodyShape
from exeuler.corrector import CorrectorCutoff, corrector_lambda, tangent_residual
from exeuler.fieldkernels import VortexParticle
from exeuler.scenario import SHIPPED, load_shipped
from exeuler.state import BodyModel, BodyState, FlowState
from exeuler.validation import reference_shape

CUT = CorrectorCutoff(1.1, 2.2)
BODY = BodyState(h=(0.3, -0.2), hdot=(0.7, -1.3), theta=0.4, r=0.9)


def _lam_c(body, x):
    out = corrector_lambda(body, CUT, np.stack([x.real, x.imag], axis=-1))
    return out[..., 0] + 1j * out[..., 1]


def test_cutoff_validation():
    for a, b in ((0.0, 1.0), (2.0, 1.0), (1.0, 1.0), (1.0, np.inf)):
        with pytest.raises(ValueError):
            CorrectorCutoff(a, b)
    c = CorrectorCutoff.for_body(2.0)
    assert (c.inner, c.outer) == pytest.approx((2.2, 4.4))


def test_profile_is_c2():
    rho = np.linspace(0.5, 3.0, 20001)
    phi, dphi = CUT.profile(rho)
    assert phi[0] == 0.0 and phi[-1] == 1.0
    assert np.all(np.diff(phi) >= 0)
    h = rho[1] - rho[0]
    np.testing.assert_allclose(np.gradient(phi, h)[1:-1], dphi[1:-1], atol=1e-6)
    d2 = np.gradient(dphi, h)
    # phi'' is O(distance) at both ends, so it is continuous there
    for edge in (CUT.inner, CUT.outer):
        near = np.abs(rho - edge) < 5 * h
        assert np.max(np.abs(d2[near])) < 300 * h


def test_zero_beyond_outer_radius(rng):
    r = rng.uniform(2.2 + 1e-9, 50, 500)
    x = BODY.h_c + r * np.exp(2j * np.pi * rng.random(500))
    assert np.max(np.abs(_lam_c(BODY, x))) == 0.0


def test_rigid_velocity_inside_inner_radius(rng):
    r = rng.uniform(0, 1.1, 500)
    d = r * np.exp(2j * np.pi * rng.random(500))
    v = BODY.hdot_c + 1j * BODY.r * d
    np.testing.assert_allclose(_lam_c(BODY, BODY.h_c + d), v, atol=1e-15)


@pytest.mark.parametrize("shape", [BodyShape.disk(1.0), BodyShape.ellipse(1.5, 1.0), reference_shape()], ids=["disk", "ellipse", "blob"])
def test_normal_trace_on_boundary(shape):
    model = BodyModel.from_shape(shape)
    cut = CorrectorCutoff.for_body(shape.circumradius)
    zeta = np.exp(2j * np.pi * np.arange(400) / 400)
    zb = model.cmap.inverse_c(zeta)
    n = zeta * model.cmap.dinverse_c(zeta)
    rot = np.exp(1j * BODY.theta)
    x, n = BODY.h_c + rot * zb, rot * n / np.abs(n)
    lam = corrector_lambda(BODY, cut, np.stack([x.real, x.imag], axis=1))
    lam = lam[:, 0] + 1j * lam[:, 1]
    v = BODY.hdot_c + 1j * BODY.r * (x - BODY.h_c)
    assert np.max(np.abs(np.real((lam - v) * np.conj(n)))) < 1e-12


def test_divergence_free(rng):
    x = BODY.h_c + rng.uniform(0, 3, 10_000) * np.exp(2j * np.pi * rng.random(10_000))
    e = 1e-5
    dx = (_lam_c(BODY, x + e) - _lam_c(BODY, x - e)).real / (2 * e)
    dy = (_lam_c(BODY, x + 1j * e) - _lam_c(BODY, x - 1j * e)).imag / (2 * e)
    assert np.max(np.abs(dx + dy)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(0, 2 * np.pi))
def test_translation_covariance(sx, sy, rad, ang):
    # Lambda depends on x - h only
    shift = complex(sx, sy)
    x = BODY.h_c + rad * np.exp(1j * ang) * np.array([0.5, 1.0, 1.5, 2.0])
    moved = BodyState(h=(BODY.h[0] + sx, BODY.h[1] + sy), hdot=BODY.hdot, theta=BODY.theta, r=BODY.r)
    np.testing.assert_allclose(_lam_c(moved, x + shift), _lam_c(BODY, x), atol=1e-12)


def test_residual_static_body():
    s = FlowState.build(BodyModel.from_shape(BodyShape.disk(1.0)), BodyState())
    assert tangent_residual(s) == 0.0


def test_residual_moving_body():
    s = FlowState.build(BodyModel.from_shape(BodyShape.ellipse(1.5, 1.0)), BodyState(hdot=(1.0, 0.5), theta=0.7, r=-0.4))
    assert tangent_residual(s) < 1e-8


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_residual_shipped(name):
    assert tangent_residual(load_shipped(name).initial_state()) < 1e-10


def test_residual_random_flow(rng):
    model = BodyModel.from_shape(reference_shape())
    ang = 2 * np.pi * rng.random(20)
    rad = rng.uniform(1.6, 4.0, 20)
    ps = [VortexParticle((r * np.cos(a), r * np.sin(a)), g) for r, a, g in zip(rad, ang, rng.normal(size=20))]
    body = BodyState(h=(0.4, 1.0), hdot=tuple(rng.normal(size=2)), theta=1.3, r=0.6)
    s = FlowState.build(model, body, ps, gamma_bound=0.8)
    assert tangent_residual(s) < 1e-6
