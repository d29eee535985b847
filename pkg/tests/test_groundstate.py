import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sps_lab.energy import EnergyParams
from sps_lab.errors import ParameterError, ShootingBracketError
from sps_lab.fields import RadialField, RadialGrid, mass
from sps_lab.groundstate import (
    compute_groundstate,
    equation_residual,
    scale_to_unit_mass,
    shoot_profile,
    verify_groundstate,
)
from sps_lab.minimize import MinimizeConfig, minimize

from conftest import P


def _scan_verdict(a: float, p: float, r_max: float = 15.0) -> int:
    """Independent shooting classifier: +1 crosses zero, -1 turns back up, 0 neither."""

    def rhs(r, y):
        return [y[1], -2.0 * y[1] / r + y[0] - abs(y[0]) ** (p - 1.0) * np.sign(y[0])]

    def cross(r, y):
        return y[0]

    def turn(r, y):
        return y[1]

    cross.terminal = True
    cross.direction = -1
    turn.terminal = True
    turn.direction = 1
    r0 = 1e-4
    c = (a - a ** (p - 1.0)) / 6.0
    sol = solve_ivp(rhs, (r0, r_max), [a + c * r0 * r0, 2 * c * r0], method="DOP853",
                    rtol=1e-10, atol=1e-12, events=(cross, turn))
    if sol.t_events[0].size:
        return 1
    if sol.t_events[1].size:
        return -1
    return 0


@pytest.fixture(scope="module")
def scan_bracket():
    # [DERIVED] brute-force scan of a in [1, 10] with step 0.01
    grid = np.round(np.arange(1.01, 10.0 + 1e-9, 0.01), 2)
    verdicts = [_scan_verdict(a, P) for a in grid]
    flips = [i for i in range(len(grid) - 1) if verdicts[i] == -1 and verdicts[i + 1] == 1]
    assert len(flips) == 1
    i = flips[0]
    return grid[i], grid[i + 1]


def test_shoot_value_inside_scan_bracket(gs, scan_bracket):
    lo, hi = scan_bracket
    assert lo <= gs.shoot_value <= hi


def test_profile_positive_decreasing(gs):
    phi = gs.profile_unit_freq.values
    assert np.all(phi > 0)
    assert np.all(np.diff(phi) < 0)


def test_phi_equation_residual(gs):
    assert equation_residual(gs.profile_unit_freq, gs.p, 1.0) <= 1e-6


def test_shoot_profile_direct():
    phi, a = shoot_profile(P, grid=RadialGrid(20.0, 1024))
    assert equation_residual(phi, P, 1.0) <= 1e-6
    assert phi.values[0] == pytest.approx(a, rel=1e-3)


def test_bad_bracket():
    with pytest.raises(ShootingBracketError):
        shoot_profile(P, bracket=(1.5, 2.0))
    with pytest.raises(ParameterError):
        shoot_profile(10.0 / 3.0)


def test_unit_mass_and_equation(gs):
    assert mass(gs.q) == pytest.approx(1.0, abs=1e-10)
    assert equation_residual(gs.q, gs.p, gs.omega0) <= 1e-6


def test_unit_mass_profile_gives_unit_frequency(gs):
    phi = gs.profile_unit_freq
    unit = phi.with_values(phi.values / math.sqrt(mass(phi)))
    _, omega0 = scale_to_unit_mass(unit, gs.p)
    assert omega0 == 1.0


def test_scale_exponents_by_covariance(gs):
    # [DERIVED] Q(x) = w^{1/(p-2)} phi(sqrt(w) x) has mass w^{2/(p-2) - 3/2} |phi|^2
    p = gs.p
    e = 2.0 / (p - 2.0) - 1.5
    assert gs.omega0**e * mass(gs.profile_unit_freq) == pytest.approx(1.0, rel=1e-12)


def test_frequency_matches_gradient_flow(gs):
    # [DERIVED] cross-method oracle: the normalized gradient flow never shoots
    rep = minimize(EnergyParams(0.0, gs.p), MinimizeConfig(init="gaussian", tol=1e-9))
    assert rep.omega == pytest.approx(gs.omega0, abs=1e-4)


def test_verify_groundstate_passes(gs):
    diag = verify_groundstate(gs)
    assert diag.passed()
    assert diag.multiplier_error <= 1e-6


def test_fault_injection(gs):
    vals = gs.q.values.copy()
    vals[100] = -vals[100]
    bad = type(gs)(gs.profile_unit_freq, RadialField(gs.grid, vals), gs.omega0, gs.p,
                   gs.shoot_value, gs.residual_h1, gs.shoot_residual_h1)
    diag = verify_groundstate(bad)
    assert not diag.positive
    assert not diag.passed()


def test_refinement_residual():
    # the RK4 orbit solves the continuous equation; its residual against the discrete
    # operator is the O(h^2) discretization error
    res = [compute_groundstate(P, n=n).shoot_residual_h1 for n in (1024, 2048, 4096)]
    for a, b in zip(res, res[1:]):
        assert b <= a / 3.0


def test_uniqueness_probe():
    grid = RadialGrid(20.0, 2048)
    values = [shoot_profile(P, grid=grid, bracket=b, polish=False)[1]
              for b in [(1.0, 50.0), (1.5, 10.0), (2.0, 6.0), (1.1, 20.0), (3.0, 40.0)]]
    assert max(values) - min(values) <= 1e-8


def test_exponential_decay(gs):
    # Q ~ C exp(-sqrt(w0) r) / r, so the linear fit is done on log(r Q); log Q alone
    # carries the -1/r slope of the algebraic prefactor
    r, q = gs.grid.nodes, gs.q.values
    sel = (r >= 0.5 * r[-1]) & (r <= 0.9 * r[-1])
    slope = np.polyfit(r[sel], np.log(r[sel] * q[sel]), 1)[0]
    assert abs(slope / -math.sqrt(gs.omega0) - 1.0) <= 0.02
