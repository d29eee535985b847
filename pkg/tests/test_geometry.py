import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from sps_lab.errors import DegenerateError, GeometryError
from sps_lab.fields import CartesianField, CartesianGrid, embed_radial, h1_norm_sq, mass
from sps_lab.geometry import Orbit, asymmetry, centroid, distance_to_orbit, peak_center

TAU0 = np.array([0.3, -0.2, 0.1])


@pytest.fixture(scope="module")
def orbit(gs, ell):
    return Orbit(gs, CartesianGrid(24 * ell, 64))


def _gram(grid, fields):
    return np.array([[grid.inner(a.values, b.values) for b in fields] for a in fields])


def test_tangent_basis_orthogonality(orbit, gs):
    grid = orbit.grid
    basis = orbit.tangent_basis()
    gram = _gram(grid, basis)
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) <= 1e-10
    q = orbit.point()
    for b in basis:
        assert abs(grid.inner(q.values, b.values)) <= 1e-10
    # |d_i Q|^2 = |grad Q|^2 / 3 for a radial Q
    assert np.allclose(np.diag(gram), gram[0, 0], rtol=1e-12)


def test_tangent_basis_translates(orbit):
    # basis at a lattice vector tau equals the basis at 0 shifted by tau
    k = np.array([2, -1, 3])
    tau = k * orbit.grid.spacing
    b0 = orbit.tangent_basis()
    bt = orbit.tangent_basis(tau)
    for a, b in zip(b0, bt):
        # b(x) = a(x + tau): with [z, y, x] indexing, shift indices by (k_z, k_y, k_x)
        lhs = b.values[3:-3, 3:-3, 3:-3]
        rhs = a.values[3 + k[2]:a.values.shape[0] - 3 + k[2], 3 + k[1]:a.values.shape[1] - 3 + k[1],
                       3 + k[0]:a.values.shape[2] - 3 + k[0]]
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(a.values))


def test_decompose_translate(orbit, ell):
    tau0 = TAU0 * ell
    dec = orbit.decompose(orbit.point(tau0))
    assert np.max(np.abs(dec.tau - tau0)) / ell <= 1e-8
    assert math.sqrt(orbit.grid.inner(dec.remainder.values, dec.remainder.values)) <= 1e-8
    assert np.max(np.abs(dec.ortho_residuals)) <= 1e-10


def test_decompose_reconstructs(orbit, ell):
    rng = np.random.default_rng(0)
    u = orbit.point(TAU0 * ell)
    u = u.with_values(u.values * (1 + 0.05 * rng.standard_normal(u.values.shape)))
    dec = orbit.decompose(u)
    rebuilt = orbit.point(dec.tau).values + dec.remainder.values
    assert np.max(np.abs(rebuilt - u.values)) <= 1e-12 * np.max(np.abs(u.values))
    assert np.max(np.abs(dec.ortho_residuals)) <= 1e-10


def test_decompose_radial_input(orbit, gs):
    # any field radial about the origin decomposes with tau = 0
    r = gs.grid.nodes / gs.length_scale
    near = gs.q.with_values(1.01 * gs.q.values + 1e-3 * gs.q.values[0] * np.exp(-0.5 * r * r))
    dec = orbit.decompose(embed_radial(near, orbit.grid))
    assert np.max(np.abs(dec.tau)) / gs.length_scale <= 1e-8


def test_decompose_perturbation_in_complement(orbit, gs, ell):
    grid = orbit.grid
    X, Y, Z = grid.coords()
    bump = np.exp(-((X - ell) ** 2 + 2 * (Y + 0.5 * ell) ** 2 + Z * Z) / (4 * ell * ell))
    h = orbit.project_tangent_complement(CartesianField(grid, np.broadcast_to(bump, (grid.m,) * 3)))
    h = h.with_values(h.values / math.sqrt(grid.inner(h.values, h.values)) * math.sqrt(mass(orbit.point())))
    eps = 1e-2
    dec = orbit.decompose(orbit.point().with_values(orbit.point().values + eps * h.values))
    assert np.max(np.abs(dec.tau)) / ell <= 1e-6
    diff = dec.remainder.values - eps * h.values
    assert math.sqrt(grid.inner(diff, diff)) <= 1e-6


def test_projector(orbit):
    grid = orbit.grid
    b = orbit.tangent_basis()
    p1 = orbit.project_tangent_complement(b[0])
    assert math.sqrt(grid.inner(p1.values, p1.values)) <= 1e-10
    rng = np.random.default_rng(1)
    h = CartesianField(grid, rng.standard_normal((grid.m,) * 3) * orbit.point().values)
    ph = orbit.project_tangent_complement(h)
    pph = orbit.project_tangent_complement(ph)
    assert np.max(np.abs(pph.values - ph.values)) <= 1e-12 * np.max(np.abs(ph.values))
    for bi in b:
        assert abs(grid.inner(ph.values, bi.values)) <= 1e-12 * math.sqrt(grid.inner(h.values, h.values) * grid.inner(bi.values, bi.values))


def test_distance_to_orbit(orbit, gs, ell):
    tau, d = orbit.distance_to_orbit(orbit.point())
    assert np.max(np.abs(tau)) <= 1e-10 * ell and d <= 1e-10
    tau, d = orbit.distance_to_orbit(orbit.point(TAU0 * ell))
    assert np.max(np.abs(tau - TAU0 * ell)) <= 1e-8 * ell and d <= 1e-8


def test_radial_distance(gs):
    tau, d = distance_to_orbit(gs.q, gs)
    assert d == 0.0 and np.all(tau == 0)
    other = gs.q.with_values(1.1 * gs.q.values)
    assert distance_to_orbit(other, gs)[1] == pytest.approx(0.1 * math.sqrt(h1_norm_sq(gs.q, gs.omega0)), rel=1e-12)


# --- asymmetry -----------------------------------------------------------------

def _asymmetry_oracle(center_x: float) -> float:
    """Asymmetry of exp(-|x|^2)(1 + 0.1 x_1) about (center_x, 0, 0) by direct quadrature.

    The function depends on x_1 and |x| only, so about a point on the x_1 axis the
    spherical average reduces to a Gauss-Legendre sum in cos(theta).
    """
    mu, wm = leggauss(64)
    s, ws = leggauss(400)
    s, ws = 3.0 * (s + 1.0), 3.0 * ws
    S, M = np.meshgrid(s, mu, indexing="ij")
    x1 = center_x + S * M
    u = np.exp(-(center_x**2 + 2 * center_x * S * M + S * S)) * (1 + 0.1 * x1)
    avg = (u * wm).sum(1) / 2.0
    num = ((((u - avg[:, None]) ** 2) * wm).sum(1) * s * s * ws).sum()
    den = (((u * u) * wm).sum(1) * s * s * ws).sum()
    return math.sqrt(num / den)


@pytest.fixture(scope="module")
def dipole_field():
    g = CartesianGrid(10.0, 64)
    X, Y, Z = g.coords()
    return CartesianField(g, np.broadcast_to(np.exp(-(X * X + Y * Y + Z * Z)) * (1 + 0.1 * X), (64,) * 3))


def test_asymmetry_dipole_oracle(dipole_field):
    # [DERIVED] direct quadrature; the centroid of |u|^2 is (0.05 / 1.0025, 0, 0)
    c = centroid(dipole_field)
    assert c[0] == pytest.approx(0.05 / 1.0025, rel=1e-10)
    assert asymmetry(dipole_field) == pytest.approx(_asymmetry_oracle(c[0]), rel=1e-3)
    # without recentring the dipole itself is visible
    fixed = asymmetry(dipole_field, center=(0.0, 0.0, 0.0))
    assert fixed == pytest.approx(_asymmetry_oracle(0.0), rel=1e-3)
    assert 0.03 < fixed < 0.07


def test_asymmetry_lattice_translation(dipole_field):
    g = dipole_field.grid
    X, Y, Z = g.coords()
    t = np.array([2, -1, 3]) * g.spacing
    shifted = np.exp(-((X - t[0]) ** 2 + (Y - t[1]) ** 2 + (Z - t[2]) ** 2)) * (1 + 0.1 * (X - t[0]))
    a = asymmetry(dipole_field)
    b = asymmetry(CartesianField(g, np.broadcast_to(shifted, (64,) * 3)))
    assert abs(a - b) <= 1e-12


def test_asymmetry_radial_inputs(gs, ell):
    g = CartesianGrid(16 * ell, 64)
    assert asymmetry(embed_radial(gs.q, g)) <= 1e-10
    # radial about an off-lattice point: limited by the cubic-spline profile fit
    c = np.array([0.13, -0.21, 0.07]) * ell
    assert asymmetry(embed_radial(gs.q, g, c)) <= 1e-5


def test_asymmetry_errors(dipole_field):
    g = dipole_field.grid
    with pytest.raises(DegenerateError):
        asymmetry(CartesianField(g, np.zeros((64,) * 3)))
    with pytest.raises(GeometryError):
        asymmetry(dipole_field, center=(100.0, 0.0, 0.0))


def test_peak_center(orbit):
    assert np.allclose(peak_center(orbit.point()), -0.5 * orbit.grid.spacing)
