"""Time stepping: one step runs the six sub-steps in order.

1. log concentrations and mass renormalisation,
2. electric potential,
3. log-conformation tensor,
4. the two velocity pieces,
5. auxiliary variable and rescaled potential,
6. pressure projection and velocity correction.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import conformation, electrokinetics as ek, fem, flow, sav
from . import tensor2 as t2
from .cases import CASES, build_case
from .errors import ConfigurationError
from .linalg import DEFAULT_TOL, solve_spd
from .mesh import build_unit_square
from .transport import backtrack

logger = logging.getLogger(__name__)

ENERGY_TOL = 1e-10
N_SPECIES = 2
FIELDS = ("u", "p", "c_p", "c_n", "V", "psi", "r")


@dataclass
class Params:
    """Nondimensional parameters and run controls."""

    case: str
    n: int
    dt: float
    T: float
    Re: float
    Pe: float
    Co: float
    lam: float
    Wi: float
    M: float
    kappa: float
    B: float | None = None
    zp: int = 1
    zn: int = -1
    snapshot_every: int = 0
    output_dir: str | None = None
    solver_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigurationError(f"unknown case {self.case!r}; expected one of {', '.join(CASES)}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n}")
        self.n = int(self.n)
        for name in ("dt", "T", "Re", "Pe", "Co", "lam", "Wi", "M", "kappa", "solver_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be a positive number, got {v!r}")
        if self.dt > self.T:
            raise ConfigurationError(f"dt = {self.dt} exceeds T = {self.T}")
        if self.B is None:
            # each species' entropy density c(log c - 1) is bounded below by -1
            self.B = 1.0 + N_SPECIES * self.Co
        if not self.B > 0:
            raise ConfigurationError(f"B must be positive, got {self.B}")
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be non-negative")

    @property
    def z(self):
        return (int(self.zp), int(self.zn))

    @property
    def n_steps(self):
        steps = int(round(self.T / self.dt))
        if abs(steps * self.dt - self.T) > 1e-9 * self.T:
            logger.warning("T = %g is not a multiple of dt = %g; running %d steps", self.T, self.dt, steps)
        return steps

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SimState:
    species: list
    Vbar: np.ndarray
    V: np.ndarray
    u: fem.Field
    p: np.ndarray
    psi: fem.Field
    sigma: fem.Field
    r: float
    xi: float
    t: float = 0.0
    step: int = 0
    energy: float = float("nan")
    EP: float = float("nan")
    zeta2: float = float("nan")


@dataclass
class StepDiagnostics:
    step: int
    time: float
    energy: float
    E_P: float
    r: float
    xi: float
    mass_p: float
    mass_n: float
    min_c: float
    min_sigma_eig: float
    zeta2: float
    div_residual: float
    denominator: float = float("nan")
    kappa_term: float = float("nan")
    seconds: float = 0.0

    CSV_FIELDS = ("step", "time", "energy", "E_P", "r", "xi", "mass_p", "mass_n",
                  "min_c", "min_sigma_eig", "zeta2", "div_residual")


class Simulation:
    """A run of one case: discretisation, boundary data and current state."""

    def __init__(self, params, disc=None):
        self.params = params
        self.disc = disc if disc is not None else fem.Discretization(build_unit_square(params.n))
        self.setup = build_case(params.case, self.disc)
        self.state = self.initial_state()

    # -- initial data ---------------------------------------------------------
    def initial_state(self):
        P, disc, setup = self.params, self.disc, self.setup
        species = [ek.Species.from_concentration(disc, c, z) for c, z in zip(setup.c0, P.z)]
        Vbar, _ = ek.solve_potential(disc, species, P.lam, setup.potential_bc, tol=P.solver_tol)
        psi = disc.P2sym.interpolate(*setup.psi0)
        sigma = conformation.sigma_from_psi(psi)
        u = disc.P2vec.zeros()
        u = fem.Field(disc.P2vec, self._wall_values(u.values, 0.0))
        p = np.zeros(disc.P1.dof_count)
        EP = sav.compute_EP(disc, species, Vbar, psi, P.Co, P.lam, P.M, P.B)
        r = math.sqrt(EP + P.B)
        state = SimState(species, Vbar, Vbar.copy(), u, p, psi, sigma, r, 1.0, EP=EP)
        state.energy = sav.discrete_energy(disc, u, r, p, P.dt, setup.velocity_bc)
        return state

    def _wall_values(self, values, t):
        bc = self.setup.velocity_bc
        n = self.disc.P2.n_scalar
        vx, vy = bc.values(t)
        values = values.copy()
        values[bc.dofs] = vx
        values[n + bc.dofs] = vy
        return values

    # -- one step -------------------------------------------------------------
    def advance(self, state=None):
        """Return the state one time step after ``state`` (default: current)."""
        P, disc, setup = self.params, self.disc, self.setup
        s = self.state if state is None else state
        dt, tol = P.dt, P.solver_tol
        t_new = (s.step + 1) * dt

        # 1. log concentrations
        species = []
        for sp_, bc in zip(s.species, setup.eta_bc):
            eta, _ = ek.step_eta(disc, sp_, s.u, s.V, P.Pe, dt, bc=bc, tol=tol)
            species.append(ek.renormalize_concentration(disc, sp_, eta, conserve=bc is None))

        # 2. potential
        Vbar, _ = ek.solve_potential(disc, species, P.lam, setup.potential_bc, tol=tol)

        # 3. log-conformation, transported along characteristics of u^n
        dep = backtrack(disc, s.u, dt)
        samples = conformation.build_rotation_samples(disc, s.u, s.psi)
        psi, _ = conformation.step_psi(disc, s.psi, s.u, dep, P.Wi, P.kappa, dt,
                                       samples=samples, tol=tol)
        sigma = conformation.sigma_from_psi(psi)

        # 4. velocity pieces
        vbc = setup.velocity_bc
        u1, _ = flow.solve_u1(disc, s.u, s.p, P.Re, dt, bc=vbc, t_new=t_new, tol=tol)
        u2, load, _ = flow.solve_u2(disc, s.u, sigma, species, Vbar, P.Co, P.M, P.Re, dt,
                                    bc=vbc, tol=tol)

        # 5. auxiliary variable
        EP = sav.compute_EP(disc, species, Vbar, psi, P.Co, P.lam, P.M, P.B)
        kappa_term = sav.diffusive_dissipation(disc, psi, sigma, P.kappa, P.M)
        dissipation = (ek.ionic_dissipation(disc, species, Vbar, P.Co, P.Pe)
                       + sav.polymer_dissipation(disc, psi, P.Wi, P.M) + kappa_term)
        zeta1, zeta2 = sav.compute_zetas(disc, u1, u2, load, EP, P.B, dissipation)
        xi, r = sav.update_xi_r(s.r, EP, zeta1, zeta2, dt, P.B)
        V = sav.rescale_potential(Vbar, xi) if setup.rescale_potential else Vbar.copy()
        ubar = fem.Field(disc.P2vec, u1.values + xi * u2.values)

        # 6. projection
        p, dp, _ = flow.project_pressure(disc, ubar, s.p, dt, bc=vbc, tol=tol)
        u, _ = flow.correct_velocity(disc, ubar, dp, dt, bc=vbc, tol=tol)

        new = SimState(species, Vbar, V, u, p, psi, sigma, r, xi, t_new, s.step + 1,
                       EP=EP, zeta2=zeta2)
        new.energy = sav.discrete_energy(disc, u, r, p, dt, vbc)
        self._last = dict(denominator=math.sqrt(EP + P.B) + dt * zeta2, kappa_term=kappa_term)
        if state is None:
            self.state = new
        return new

    # -- diagnostics ----------------------------------------------------------
    def diagnostics(self, state=None, seconds=0.0):
        s = self.state if state is None else state
        disc = self.disc
        masses = [sp_.mass(disc) for sp_ in s.species]
        extra = getattr(self, "_last", {}) if s.step > 0 else {}
        return StepDiagnostics(
            step=s.step, time=s.t, energy=s.energy, E_P=s.EP, r=s.r, xi=s.xi,
            mass_p=masses[0], mass_n=masses[1],
            min_c=float(min(sp_.c.min() for sp_ in s.species)),
            min_sigma_eig=float(t2.min_eigenvalue(conformation.nodal(s.sigma)).min()),
            zeta2=s.zeta2,
            div_residual=flow.divergence_residual(disc, s.u),
            denominator=extra.get("denominator", float("nan")),
            kappa_term=extra.get("kappa_term", float("nan")),
            seconds=seconds,
        )

    def run(self, progress=True, writer=None):
        """Run to ``T``; returns the list of :class:`StepDiagnostics` (step 0 first).

        ``writer(sim, state)`` is called after every step and at step 0.
        """
        P = self.params
        rows = [self.diagnostics()]
        if writer is not None:
            writer(self, self.state)
        n_steps = P.n_steps
        report_every = max(1, n_steps // 20)
        e0 = rows[0].energy
        for k in range(n_steps):
            t0 = time.perf_counter()
            prev = self.state.energy
            self.advance()
            row = self.diagnostics(seconds=time.perf_counter() - t0)
            rows.append(row)
            if self.setup.energy_law and row.energy > prev + ENERGY_TOL * e0:
                logger.warning("step %d: energy increased by %.3e", row.step, row.energy - prev)
            if writer is not None:
                writer(self, self.state)
            if progress and ((k + 1) % report_every == 0 or k + 1 == n_steps):
                logger.info("%s step %d/%d t=%.4f E=%.10g xi-1=%.2e (%.3fs/step)",
                            P.case, k + 1, n_steps, row.time, row.energy, row.xi - 1.0, row.seconds)
        return rows


@dataclass
class RunResult:
    params: Params
    diagnostics: list
    state: SimState
    simulation: Simulation = field(repr=False)


def run_case(params, progress=True, write_output=True):
    """Run a case; writes CSV diagnostics and VTK snapshots when ``output_dir`` is set."""
    from .output import snapshot_writer, write_diagnostics_csv

    sim = Simulation(params)
    writer = None
    out = Path(params.output_dir) if (write_output and params.output_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if params.snapshot_every > 0:
            writer = snapshot_writer(out, params.snapshot_every)
    rows = sim.run(progress=progress, writer=writer)
    if out is not None:
        write_diagnostics_csv(out / "diagnostics.csv", rows)
    return RunResult(params, rows, sim.state, sim)


# ---------------------------------------------------------------------------
# temporal convergence


def field_errors(disc, a, b):
    """L2 differences between two states on the same mesh, keyed by field name."""
    M2, M1 = disc.mass(2), disc.mass(1)

    def n2(M, x):
        return math.sqrt(max(float(x @ (M @ x)), 0.0))

    du = a.u.values - b.u.values
    n = disc.P2.n_scalar
    dpsi = a.psi.values - b.psi.values
    psi_sq = sum(w * float(dpsi[c * n:(c + 1) * n] @ (M2 @ dpsi[c * n:(c + 1) * n]))
                 for c, w in enumerate((1.0, 2.0, 1.0)))
    return {
        "u": math.sqrt(sum(float(du[c * n:(c + 1) * n] @ (M2 @ du[c * n:(c + 1) * n]))
                           for c in range(2))),
        "p": n2(M1, a.p - b.p),
        "c_p": n2(M2, a.species[0].c - b.species[0].c),
        "c_n": n2(M2, a.species[1].c - b.species[1].c),
        "V": n2(M2, a.V - b.V),
        "psi": math.sqrt(max(psi_sq, 0.0)),
        "r": abs(a.r - b.r),
    }


def observed_orders(dts, errors):
    """``log(e_prev / e) / log(dt_prev / dt)`` between successive levels; None if undefined."""
    orders = [None]
    for k in range(1, len(dts)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 > 0 and e1 > 0:
            orders.append(math.log(e0 / e1) / math.log(dts[k - 1] / dts[k]))
        else:
            orders.append(None)
    return orders


@dataclass
class ConvergenceResult:
    dts: list
    errors: dict        # field -> list of errors, one per dt
    orders: dict        # field -> list of orders (None for the first level)
    max_xi_dev: list    # max_n |xi^n - 1| per dt
    runs: list = field(repr=False, default_factory=list)
    reference_run: list = field(repr=False, default_factory=list)


def convergence_study(params, dt_list, reference_dt=None, progress=True):
    """Errors at ``T`` against a fine-step reference on the same mesh.

    ``reference_dt`` defaults to ``min(dt_list) / 32`` and must not exceed
    ``min(dt_list) / 4``.
    """
    dts = sorted((float(d) for d in dt_list), reverse=True)
    if not dts:
        raise ConfigurationError("need at least one time step")
    if reference_dt is None:
        reference_dt = dts[-1] / 32.0
    if reference_dt > dts[-1] / 4.0 * (1 + 1e-12):
        raise ConfigurationError(
            f"reference dt {reference_dt} must be at most a quarter of the finest dt {dts[-1]}")

    disc = fem.Discretization(build_unit_square(params.n))

    def run(dt):
        logger.info("convergence run dt=%g", dt)
        try:
            sim = Simulation(params.with_(dt=dt), disc=disc)
            rows = sim.run(progress=progress)
        except Exception as exc:
            raise type(exc)(f"run with dt={dt} failed: {exc}") from exc
        return sim, rows

    ref_sim, ref_rows = run(reference_dt)
    errors = {f: [] for f in FIELDS}
    xi_dev, runs = [], []
    for dt in dts:
        sim, rows = run(dt)
        e = field_errors(disc, sim.state, ref_sim.state)
        for f in FIELDS:
            errors[f].append(e[f])
        xi_dev.append(max(abs(r.xi - 1.0) for r in rows))
        runs.append(rows)
    orders = {f: observed_orders(dts, errors[f]) for f in FIELDS}
    return ConvergenceResult(dts, errors, orders, xi_dev, runs, ref_rows)


# ---------------------------------------------------------------------------
# vortex diagnostics


def stream_function(disc, u):
    """Solve ``-lap s = curl u`` with ``s = 0`` on the boundary (P2)."""
    K = disc.stiffness()
    curl = disc.qp_gradients(u.component(1))[..., 0] - disc.qp_gradients(u.component(0))[..., 1]
    b = fem.assemble_vector(disc.P2, fem.load_kernel(disc, curl))
    dofs = disc.P2.boundary_dofs(("left", "right", "bottom", "top"))
    A, rhs = fem.apply_dirichlet(K, b, dofs, np.zeros(len(dofs)))
    s, _ = solve_spd(A, rhs)
    return s


def vortex_center(disc, u):
    """Coordinates of the P2 node where the stream function magnitude peaks."""
    s = stream_function(disc, u)
    k = int(np.argmax(np.abs(s)))
    return disc.P2.dof_coordinates()[k]
