from fractions import Fraction

import pytest

from overpinn import expr
from overpinn.expr import NonlinearTargetError, PDESystem, SystemError_, derive_auxiliary, eliminate


def test_load_shipped_systems(ac_system, ns_system):
    assert ac_system.variables == ("t", "x")
    assert ac_system.residual_names == ("allen_cahn",)
    assert ns_system.parameters == {"nu": 0.01, "rho": 1.0}
    assert ns_system.constraint_names == ("continuity",)
    assert "omega" in ns_system.fields


def test_system_text_round_trip(ns_system):
    again = expr.loads(ns_system.to_text())
    assert again.residuals == ns_system.residuals
    assert again.constraints == ns_system.constraints
    assert again.definitions == ns_system.definitions
    assert again.parameters == ns_system.parameters


def test_undeclared_field_rejected():
    with pytest.raises((SystemError_, expr.ParseError)):
        expr.loads("[variables]\nnames = t, x\n[fields]\nu = t, x\n[residuals]\nr = dt(w)\n")


def test_undeclared_parameter_rejected():
    with pytest.raises((SystemError_, expr.ParseError)):
        expr.loads("[variables]\nnames = t, x\n[fields]\nu = t, x\n[residuals]\nr = dt(u) - k*u\n")


def test_parse_error_reports_line():
    text = "[variables]\nnames = t, x\n[fields]\nu = t, x\n[residuals]\nr = dt(u) +* u\n"
    with pytest.raises(expr.ParseError) as ei:
        expr.loads(text)
    assert (ei.value.line, ei.value.column) == (6, 12)


# derive_auxiliary ----------------------------------------------------------------

def test_derive_allen_cahn_auxiliary(ac_system):
    aug = derive_auxiliary(ac_system, [(0, "x")])
    assert len(aug.residuals) == 2
    want = ac_system.parse("dtx(u) - 0.0001*dxxx(u) + 15*u^2*dx(u) - 5*dx(u)")
    assert aug.residuals[1] == want
    assert len(ac_system.residuals) == 1  # original untouched


def test_derive_empty_plan_is_identity(ac_system):
    assert derive_auxiliary(ac_system, []).residuals == ac_system.residuals


def test_derive_ns_cross_derivatives(ns_system):
    aug = derive_auxiliary(ns_system, [(0, "y"), (1, "x")])
    assert len(aug.residuals) == 4
    assert aug.residuals[2] == expr.differentiate(ns_system.residuals[0], "y", ns_system.fields)
    assert aug.residuals[3] == expr.differentiate(ns_system.residuals[1], "x", ns_system.fields)


def test_derive_invalid_index(ac_system):
    with pytest.raises(IndexError):
        derive_auxiliary(ac_system, [(3, "x")])


def test_derive_undeclared_variable(ac_system):
    with pytest.raises(ValueError):
        derive_auxiliary(ac_system, [(0, "y")])


# eliminate -----------------------------------------------------------------------

def test_eliminate_pressure_from_momentum(ns_system):
    res = eliminate(ns_system, ["p"], ["y", "x"])
    assert res is not None
    assert res.alpha == (Fraction(1), Fraction(-1))
    assert not any(a.field == "p" for a in res.residual.derivs())
    manual = (expr.differentiate(ns_system.residuals[0], "y", ns_system.fields)
              - expr.differentiate(ns_system.residuals[1], "x", ns_system.fields))
    assert res.residual == manual


def test_vorticity_golden_derivation(ns_system):
    res = expr.eliminate_and_reduce(ns_system, ["p"], ["y", "x"])
    want = ns_system.parse("dt(omega) + u*dx(omega) + v*dy(omega) - nu*(dxx(omega) + dyy(omega))")
    assert res.residual == want


def test_single_residual_not_eliminable():
    sys_ = expr.loads("[variables]\nnames = x\n[fields]\nu = x\np = x\n[residuals]\nr = u + dx(p)\n")
    assert eliminate(sys_, ["p"], ["x"]) is None


def test_identical_residuals_eliminable():
    sys_ = expr.loads("[variables]\nnames = x\n[fields]\nu = x\np = x\n"
                      "[residuals]\na = u*u + 2*dx(p)\nb = u*u + 2*dx(p)\n")
    res = eliminate(sys_, ["p"], [None, None])
    assert res.alpha == (Fraction(1), Fraction(-1))
    assert res.residual.is_zero()


def test_eliminate_nonlinear_target_rejected():
    sys_ = expr.loads("[variables]\nnames = x\n[fields]\nu = x\np = x\n"
                      "[residuals]\na = p*dx(p)\nb = dx(p)\n")
    with pytest.raises(NonlinearTargetError):
        eliminate(sys_, ["p"], [None, None])


def test_eliminate_direction_count_mismatch(ns_system):
    with pytest.raises(ValueError):
        eliminate(ns_system, ["p"], ["x"])


def test_eliminate_with_parameter_coefficients():
    # nu*dx(p) and 2*nu*dx(p): alpha must be (2, -1) in primitive integer form
    sys_ = expr.loads("[variables]\nnames = x\n[fields]\nu = x\np = x\n[parameters]\nnu = 0.5\n"
                      "[residuals]\na = u + nu*dx(p)\nb = dx(u) + 2*nu*dx(p)\n")
    res = eliminate(sys_, ["p"], [None, None])
    assert res.alpha == (Fraction(2), Fraction(-1))
    assert res.residual == sys_.parse("2*u - dx(u)")


def test_elimination_result_is_sound_for_random_combinations():
    # three residuals, two pressure columns -> a 1-D null space
    sys_ = expr.loads("[variables]\nnames = x, y\n[fields]\nu = x, y\np = x, y\n"
                      "[residuals]\na = u + dx(p)\nb = u*u + dy(p)\nc = dx(u) + 3*dx(p) - 2*dy(p)\n")
    res = eliminate(sys_, ["p"], [None, None, None])
    assert res is not None and any(res.alpha)
    assert not any(a.field == "p" for a in res.residual.derivs())
