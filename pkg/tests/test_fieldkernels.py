import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from exeuler.conformal import as_complex, exterior_samples
from exeuler.errors import CoincidentPoints, InsideBody
from exeuler.fieldkernels import (
    BlobParameter,
    BodyMotion,
    VortexParticle,
    green_function,
    harmonic_circulation_field,
    inversion_point,
    kernel_K,
    kernel_Kstar,
    kirchhoff_velocity,
    self_conj_velocity_c,
    total_velocity,
    velocity_from_particles,
)
from exeuler.oracle import AnnularGrid, GridField, solve_exterior
from exeuler.validation import milne_thomson_conj_velocity


def pts(z):
    z = np.atleast_1d(z)
    return np.stack([z.real, z.imag], axis=-1)


def boundary(cmap, n=256):
    zeta = np.exp(2j * np.pi * np.arange(n) / n)
    z = cmap.inverse_c(zeta)
    nrm = zeta * cmap.dinverse_c(zeta)
    return z, nrm / np.abs(nrm)


# -- scalar kernels ---------------------------------------------------------


@pytest.mark.parametrize(
    "xi, out", [((2, 0), (0.5, 0)), ((1, 0), (1, 0)), ((3, 4), (0.12, 0.16))]
)
def test_inversion_point(xi, out):
    np.testing.assert_allclose(inversion_point(np.array(xi, float)), out, atol=1e-15)


def test_inversion_point_domain():
    with pytest.raises(ValueError):
        inversion_point([0.5, 0.0])


def test_green_vanishes_on_unit_disk(disk_map, rng):
    xb = pts(np.exp(2j * np.pi * rng.random(100)))
    y = pts(exterior_samples(disk_map, 100, rng))
    assert np.max(np.abs(green_function(disk_map, xb, y))) < 1e-12


def test_green_vanishes_on_general_body(blob_map, rng):
    z, _ = boundary(blob_map, 100)
    y = pts(exterior_samples(blob_map, 100, rng))
    assert np.max(np.abs(green_function(blob_map, pts(z), y))) < 1e-12


def test_green_symmetry(blob_map, rng):
    x = pts(exterior_samples(blob_map, 100, rng))
    y = pts(exterior_samples(blob_map, 100, rng))
    g1, g2 = green_function(blob_map, x, y), green_function(blob_map, y, x)
    assert np.max(np.abs(g1 - g2)) < 1e-12


def test_green_matches_discrete_green_function(disk_map):
    grid = AnnularGrid(6.0, 100, 400)
    om = np.zeros(grid.shape)
    i, j = 40, 100  # r = 3, theta = pi/2
    om[i, j] = 1.0 / grid.weights()[i, j]
    psi = solve_exterior(grid, GridField(om, grid)).values
    exact = green_function(disk_map, [[2.0, 0.0]], [[0.0, 3.0]])
    assert abs(psi[20, 0] - exact) / abs(exact) < 1e-3


def test_green_coincident(disk_map):
    with pytest.raises(CoincidentPoints):
        green_function(disk_map, [[2.0, 0.0]], [[2.0, 0.0]])


def test_kernel_K_direct(disk_map):
    np.testing.assert_allclose(kernel_K(disk_map, [[3.0, 0.0]], [[2.0, 0.0]]), [[1 / (2 * np.pi), 0.0]])
    with pytest.raises(InsideBody):
        kernel_K(disk_map, [[2.0, 0.0]], [[0.0, 0.0]])
    with pytest.raises(CoincidentPoints):
        kernel_K(disk_map, [[2.0, 0.0]], [[2.0, 0.0]])


def _slope(ys, xs):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def test_kernel_difference_decay(blob_map):
    radii = 2.0 ** np.arange(4, 10)
    y = np.array([[1.7, 0.4]])
    fixed = [np.linalg.norm(kernel_K(blob_map, [[R, 0]], y) - kernel_Kstar(blob_map, [[R, 0]], y)) for R in radii]
    # y fixed: the image pair acts as a dipole, |x|^-2
    assert _slope(fixed, radii) == pytest.approx(-2.0, abs=0.05)
    scaled = []
    for R in radii:
        ys = [[0.5 * R, 0.3 * R]]
        scaled.append(np.linalg.norm(kernel_K(blob_map, [[R, 0]], ys) - kernel_Kstar(blob_map, [[R, 0]], ys)))
    assert _slope(scaled, radii) == pytest.approx(-1.0, abs=0.05)


# -- particle field ---------------------------------------------------------


def test_no_particles_gives_zero(blob_map):
    np.testing.assert_array_equal(velocity_from_particles(blob_map, [], [[3.0, 1.0]]), [[0.0, 0.0]])


def test_mirror_pair_velocity_on_axis(disk_map):
    ps = [VortexParticle((2.0, 0.7), 1.3), VortexParticle((2.0, -0.7), -1.3)]
    x = np.stack([np.linspace(-5, 5, 41), np.zeros(41)], axis=1)
    x = x[np.abs(x[:, 0]) > 1.1]
    u = velocity_from_particles(disk_map, ps, x)
    assert np.max(np.abs(u[:, 1])) < 1e-12


def test_self_advection_matches_milne_thomson(disk_map):
    pos = np.array([2.0 + 0j])
    w = self_conj_velocity_c(disk_map, pos, np.array([2 * np.pi]), 0.0)
    exact = milne_thomson_conj_velocity(2.0, 2 * np.pi, 0.0)
    assert abs(w[0] - exact) / abs(exact) < 1e-8


def test_coincident_evaluation_point(disk_map):
    with pytest.raises(CoincidentPoints):
        velocity_from_particles(disk_map, [VortexParticle((2.0, 0.0), 1.0)], [[2.0, 0.0]])
    u = velocity_from_particles(disk_map, [VortexParticle((2.0, 0.0), 1.0)], [[2.0, 0.0]], BlobParameter(0.1))
    assert np.all(np.isfinite(u))


def test_evaluation_inside_body_raises(blob_map):
    with pytest.raises(InsideBody):
        velocity_from_particles(blob_map, [VortexParticle((2.0, 0.0), 1.0)], [[0.0, 0.0]])


particle_sets = st.lists(
    st.tuples(st.floats(1.3, 5.0), st.floats(0, 2 * np.pi), st.floats(-3, 3).filter(lambda g: abs(g) > 1e-3)),
    min_size=1,
    max_size=6,
)


@settings(max_examples=25, deadline=None)
@given(particle_sets)
def test_particle_field_tangent_on_boundary(blob_map, spec):
    eta = np.array([r * np.exp(1j * t) for r, t, _ in spec])
    y = blob_map.inverse_c(eta)
    ps = [VortexParticle((p.real, p.imag), g) for p, (_, _, g) in zip(y, spec)]
    z, n = boundary(blob_map)
    u = as_complex(velocity_from_particles(blob_map, ps, pts(z)))
    scale = max(1.0, np.max(np.abs(u)))
    assert np.max(np.abs(np.real(u * np.conj(n)))) < 1e-7 * scale


@settings(max_examples=25, deadline=None)
@given(particle_sets, st.floats(-4, 4))
def test_linearity(blob_map, spec, c):
    eta = np.array([r * np.exp(1j * t) for r, t, _ in spec])
    y = blob_map.inverse_c(eta)
    ps = [VortexParticle((p.real, p.imag), g) for p, (_, _, g) in zip(y, spec)]
    x = pts(blob_map.inverse_c(np.array([6.0 + 1j, -4.0 - 5j, 0.5 + 7j])))
    total = velocity_from_particles(blob_map, ps, x)
    parts = sum(velocity_from_particles(blob_map, [p], x) for p in ps)
    np.testing.assert_allclose(total, parts, atol=1e-13 * max(1.0, np.max(np.abs(total))))
    scaled = [VortexParticle(p.pos, c * p.gamma) for p in ps]
    np.testing.assert_allclose(velocity_from_particles(blob_map, scaled, x), c * total, atol=1e-13 * max(1.0, abs(c)) * max(1.0, np.max(np.abs(total))))


@settings(max_examples=25, deadline=None)
@given(particle_sets, st.floats(0, 2 * np.pi))
def test_rotation_equivariance_disk(disk_map, spec, a):
    rot = np.exp(1j * a)
    y = np.array([r * np.exp(1j * t) for r, t, _ in spec])
    gam = [g for _, _, g in spec]
    x = np.array([3.0 + 2j, -6.0 + 0.5j, 0.2 - 4j])
    u1 = as_complex(velocity_from_particles(disk_map, [VortexParticle((p.real, p.imag), g) for p, g in zip(y, gam)], pts(x)))
    u2 = as_complex(velocity_from_particles(disk_map, [VortexParticle(((rot * p).real, (rot * p).imag), g) for p, g in zip(y, gam)], pts(rot * x)))
    assert np.max(np.abs(u2 - rot * u1)) < 1e-10 * max(1.0, np.max(np.abs(u1)))


# -- harmonic field ---------------------------------------------------------


def test_harmonic_field_point_value(disk_map):
    np.testing.assert_allclose(harmonic_circulation_field(disk_map, [[2.0, 0.0]]), [[0.0, 1 / (4 * np.pi)]], atol=1e-15)


@pytest.mark.parametrize("name", ["disk_map", "blob_map"])
def test_harmonic_circulation_is_one(name, request):
    cmap = request.getfixturevalue(name)
    n = 512
    t = 2 * np.pi * np.arange(n) / n
    z = 5.0 * np.exp(1j * t)
    u = as_complex(harmonic_circulation_field(cmap, pts(z)))
    circ = np.sum(np.real(u * np.conj(1j * z))) * (2 * np.pi / n)
    assert circ == pytest.approx(1.0, abs=1e-10)


def test_harmonic_field_not_square_integrable(disk_map):
    # ||H||^2 over 1 < |x| < R equals ln(R) / (2 pi)
    radii = np.array([4.0, 8.0, 16.0, 32.0, 64.0])
    t = 2 * np.pi * (np.arange(128) + 0.5) / 128
    energies = []
    for R in radii:
        s = np.linspace(0, np.log(R), 2001)
        r = np.exp(s)
        z = r[:, None] * np.exp(1j * t)[None, :]
        u = as_complex(harmonic_circulation_field(disk_map, pts(z.ravel()))).reshape(z.shape)
        integrand = (np.abs(u) ** 2).sum(axis=1) * (2 * np.pi / 128) * r**2
        energies.append(trapezoid(integrand, s))
    slope = np.polyfit(np.log(radii), energies, 1)[0]
    assert 2 * np.pi * slope == pytest.approx(1.0, abs=0.05)


# -- Kirchhoff potentials ---------------------------------------------------


def test_disk_dipole_value(disk_map):
    # classical dipole a^2 (2 (l.x^) x^ - l) / |x|^2 at (2, 0)
    np.testing.assert_allclose(kirchhoff_velocity(disk_map, BodyMotion((1.0, 0.0)), [[2.0, 0.0]]), [[0.25, 0.0]], atol=1e-14)


def test_rotating_disk_induces_nothing(disk_map, rng):
    x = pts(exterior_samples(disk_map, 50, rng))
    assert np.max(np.abs(kirchhoff_velocity(disk_map, BodyMotion((0.0, 0.0), 1.0), x))) < 1e-14


@pytest.mark.parametrize("name", ["disk_map", "ellipse_map", "blob_map"])
def test_kirchhoff_normal_trace(name, request):
    cmap = request.getfixturevalue(name)
    motion = BodyMotion((0.3, -1.1), 0.7)
    z, n = boundary(cmap)
    u = as_complex(kirchhoff_velocity(cmap, motion, pts(z)))
    rigid = motion.ell_c + 1j * motion.r * z
    assert np.max(np.abs(np.real((u - rigid) * np.conj(n)))) < 1e-8


def test_kirchhoff_far_field_decay(blob_map):
    motion = BodyMotion((1.0, 0.5), 0.3)
    for R in (1e2 * 2.5, 1e3 * 2.5):
        x = R * np.exp(1j * np.linspace(0, 2 * np.pi, 16, endpoint=False))
        u = np.abs(as_complex(kirchhoff_velocity(blob_map, motion, pts(x))))
        assert np.max(u) * R**2 < 10.0


# -- total field ------------------------------------------------------------


def test_total_velocity_zero(blob_map):
    np.testing.assert_array_equal(total_velocity(blob_map, [], BodyMotion(), 0.0, [[3.0, 0.0]]), [[0.0, 0.0]])


def test_total_velocity_disk_normal_trace(disk_map):
    z, n = boundary(disk_map)
    u = as_complex(total_velocity(disk_map, [], BodyMotion((1.0, 0.0)), 0.0, pts(z)))
    assert np.max(np.abs(np.real((u - 1.0) * np.conj(n)))) < 1e-8


def test_large_contour_circulation_is_gamma_bound(blob_map):
    ps = [VortexParticle((2.0, 0.3), 1.2), VortexParticle((-1.5, 2.0), -0.4), VortexParticle((0.5, -3.0), 2.1)]
    n = 4096
    t = 2 * np.pi * np.arange(n) / n
    z = 40.0 * np.exp(1j * t)
    u = as_complex(total_velocity(blob_map, ps, BodyMotion((0.2, 0.1), 0.3), 0.75, pts(z)))
    circ = np.sum(np.real(u * np.conj(1j * z))) * (2 * np.pi / n)
    assert circ == pytest.approx(0.75, abs=1e-6)
