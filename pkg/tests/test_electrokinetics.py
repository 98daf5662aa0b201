import numpy as np
import pytest
import sympy
from scipy.integrate import quad

from vehd import electrokinetics as ek
from vehd import fem
from vehd.errors import CompatibilityError
from vehd.mesh import build_unit_square

from _symbolic import X, Y, grad, sym_p2_basis


@pytest.fixture(scope="module")
def disc16():
    return fem.Discretization(build_unit_square(16))


def species_from_values(disc, c, z):
    return ek.Species.from_concentration(disc, c, z)


def interp(disc, f):
    return disc.P2.interpolate(f).values


# -- symbolic assembly oracle ------------------------------------------------

def test_step_eta_matches_symbolic_assembly():
    disc = fem.Discretization(build_unit_square(1))
    Pe, dt, z = sympy.Rational(3, 2), sympy.Rational(1, 10), 1
    eta_n = X * Y / 2 + X / 5
    V = X**2 / 3 - Y / 4
    ux, uy = Y / 2, -X / 3
    n = disc.P2.n_scalar
    A = sympy.zeros(n, n)
    b = sympy.zeros(n, 1)
    for t, dofs in enumerate(disc.P2.cell_dofs):
        verts = disc.mesh.vertices[disc.mesh.triangles[t]]
        basis, integrate = sym_p2_basis(verts)
        a = (grad(eta_n) + z * grad(V)) / Pe
        for i, phi_i in enumerate(basis):
            gi = grad(phi_i)
            b[dofs[i]] += integrate(eta_n * phi_i / dt - z / Pe * grad(V).dot(gi))
            for j, phi_j in enumerate(basis):
                gj = grad(phi_j)
                A[dofs[i], dofs[j]] += integrate(
                    phi_j * phi_i / dt
                    - phi_j * (ux * gi[0] + uy * gi[1])
                    - a.dot(gj) * phi_i
                    + gj.dot(gi) / Pe)
    expected = np.array(A.LUsolve(b), dtype=float).ravel()

    def fn(e):
        return sympy.lambdify((X, Y), e, "numpy")

    def field(e):
        return interp(disc, lambda x, y: np.broadcast_to(fn(e)(x, y), x.shape).astype(float))

    sp_ = ek.Species(z, field(eta_n), np.exp(field(eta_n)))
    u = disc.P2vec.interpolate(lambda x, y: fn(ux)(x, y), lambda x, y: fn(uy)(x, y))
    eta, rep = ek.step_eta(disc, sp_, u, field(V), float(Pe), float(dt))
    assert rep.converged
    np.testing.assert_allclose(eta, expected, atol=1e-12)


# -- step_eta -----------------------------------------------------------------

def test_steady_state(disc16):
    c = np.full(disc16.P2.n_scalar, 0.7)
    sp_ = species_from_values(disc16, c, 1)
    V = np.full(disc16.P2.n_scalar, 2.0)
    eta, _ = ek.step_eta(disc16, sp_, disc16.P2vec.zeros(), V, 2.0, 0.01)
    np.testing.assert_allclose(eta, np.log(0.7), atol=1e-12)


def test_linear_decay_of_cosine_mode(disc16):
    eps, Pe, dt = 1e-6, 1.0, 0.01
    mode = interp(disc16, lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y))
    sp_ = ek.Species(0, eps * mode, np.exp(eps * mode))
    eta, _ = ek.step_eta(disc16, sp_, disc16.P2vec.zeros(), np.zeros_like(mode), Pe, dt)
    M = disc16.mass()
    factor = (mode @ M @ eta) / (mode @ M @ (eps * mode))
    expected = 1.0 / (1.0 + dt * 2 * np.pi**2 / Pe)
    assert abs(factor / expected - 1) < 0.01


def test_dirichlet_eta_rows(disc16):
    left = disc16.P2.boundary_dofs("left")
    c = np.ones(disc16.P2.n_scalar)
    sp_ = species_from_values(disc16, c, 1)
    bc = (left, np.full(len(left), np.log(3.0)))
    eta, _ = ek.step_eta(disc16, sp_, disc16.P2vec.zeros(), np.zeros_like(c), 1.0, 0.01, bc=bc)
    np.testing.assert_allclose(eta[left], np.log(3.0), atol=1e-14)
    assert eta.max() <= np.log(3.0) + 1e-12 and eta.min() >= -1e-12


# -- renormalisation ------------------------------------------------------------

def test_renormalize_factor_one_and_half(disc16):
    n = disc16.P2.n_scalar
    sp_ = species_from_values(disc16, np.full(n, 2.0), 1)
    out = ek.renormalize_concentration(disc16, sp_, np.full(n, np.log(2.0)))
    assert out.scale == pytest.approx(1.0, abs=1e-14)
    sp1 = species_from_values(disc16, np.ones(n), 1)
    out = ek.renormalize_concentration(disc16, sp1, np.full(n, np.log(2.0)))
    np.testing.assert_allclose(out.c, 1.0, atol=1e-14)
    assert out.scale == pytest.approx(0.5)


def test_renormalize_random_field_conserves_mass():
    d = fem.Discretization(build_unit_square(8))
    rng = np.random.default_rng(0)
    sp_ = species_from_values(d, 1 + rng.uniform(0, 1, d.P2.n_scalar), -1)
    out = ek.renormalize_concentration(d, sp_, rng.normal(size=d.P2.n_scalar))
    assert abs(out.mass(d) / sp_.mass(d) - 1) <= 1e-14
    assert out.c.min() > 0


def test_renormalize_disabled_for_dirichlet(disc16):
    n = disc16.P2.n_scalar
    sp_ = species_from_values(disc16, np.ones(n), 1)
    out = ek.renormalize_concentration(disc16, sp_, np.full(n, 0.5), conserve=False)
    np.testing.assert_allclose(out.c, np.exp(0.5))


# -- potential ------------------------------------------------------------------

def test_balanced_charge_gives_zero_potential(disc16):
    c = 1 + 0.5 * interp(disc16, lambda x, y: np.sin(x + y))
    sp = [species_from_values(disc16, c, 1), species_from_values(disc16, c, -1)]
    V, rep = ek.solve_potential(disc16, sp, 0.3)
    assert np.abs(V).max() < 1e-14


@pytest.mark.parametrize("lam", [1.0, 0.1])
def test_manufactured_potential_third_order(lam):
    errs = []
    for n in (8, 16):
        d = fem.Discretization(build_unit_square(n))
        rho = interp(d, lambda x, y: 2 * lam * np.pi**2 * np.cos(np.pi * x) * np.cos(np.pi * y))
        sp_ = ek.Species(1, np.zeros_like(rho), rho)
        V, _ = ek.solve_potential(d, [sp_], lam)
        exact = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)
        err = d.integrate((d.qp_values(V) - exact(d.xq[..., 0], d.xq[..., 1])) ** 2)
        errs.append(np.sqrt(err))
    assert errs[1] < 1e-3
    assert np.log2(errs[0] / errs[1]) > 2.7


def test_dirichlet_potential_is_linear(disc16):
    c = np.ones(disc16.P2.n_scalar)
    sp = [species_from_values(disc16, c, 1), species_from_values(disc16, c, -1)]
    left, right = disc16.P2.boundary_dofs("left"), disc16.P2.boundary_dofs("right")
    dofs, vals = fem.merge_dirichlet((left, 0.0), (right, 1.0))
    V, _ = ek.solve_potential(disc16, sp, 0.5, bc=(dofs, vals))
    np.testing.assert_allclose(V, disc16.P2.dof_coordinates()[:, 0], atol=1e-8)


def test_incompatible_net_charge(disc16):
    sp_ = species_from_values(disc16, np.ones(disc16.P2.n_scalar), 1)
    with pytest.raises(CompatibilityError):
        ek.solve_potential(disc16, [sp_], 1.0)


def test_roundoff_net_charge_is_absorbed(disc16):
    # balanced masses whose charge density nearly vanishes pointwise
    c = np.full(disc16.P2.n_scalar, 1.0)
    cp = species_from_values(disc16, c, 1)
    cn = species_from_values(disc16, c * (1 + 1e-15), -1)
    V, rep = ek.solve_potential(disc16, [cp, cn], 1.0)
    assert rep.converged and np.abs(V).max() < 1e-12
    assert abs(disc16.integral(V)) < 1e-15


# -- ionic dissipation ---------------------------------------------------------

def test_dissipation_zero_cases(disc16):
    n = disc16.P2.n_scalar
    sp_ = species_from_values(disc16, np.full(n, 1.3), 1)
    assert abs(ek.ionic_dissipation(disc16, [sp_], np.full(n, 0.4), 2.0, 3.0)) < 1e-24
    Vbar = interp(disc16, lambda x, y: x**2 - y)
    for z in (1, -1):
        eq = ek.Species(z, -z * Vbar, np.exp(-z * Vbar))
        assert abs(ek.ionic_dissipation(disc16, [eq], Vbar, 1.0, 1.0)) < 1e-24


def test_dissipation_matches_dense_quadrature():
    d = fem.Discretization(build_unit_square(64))
    c = interp(d, lambda x, y: 1 + 0.5 * np.cos(np.pi * x))
    sp_ = ek.Species(0, np.log(c), c)
    got = ek.ionic_dissipation(d, [sp_], np.zeros_like(c), 1.0, 1.0)
    exact, _ = quad(lambda x: (0.5 * np.pi * np.sin(np.pi * x)) ** 2 / (1 + 0.5 * np.cos(np.pi * x)),
                    0, 1, epsabs=1e-14, epsrel=1e-14)
    assert abs(got - exact) < 1e-6
    assert ek.ionic_dissipation(d, [sp_], np.zeros_like(c), 3.0, 2.0) == pytest.approx(1.5 * got)
