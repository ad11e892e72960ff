import numpy as np
import pytest

from overpinn import expr, model, residuals
from overpinn.autodiff import IndexSet, jet_eval
from overpinn.model import NetworkConfig
from overpinn.residuals import MissingCoefficientError, UnboundSymbolError
from overpinn.training import vorticity_residual

NS_VARS = ("t", "x", "y")
NS_PARAMS = {"nu": 0.01, "rho": 1.0}


def ac_eval(e):
    return residuals.compile(e, {"u": 0}, variables=("t", "x"))


def ns_eval(e, **bind):
    return residuals.compile(e, bind or {"u": 0, "v": 1, "p": 2, "omega": 3}, NS_PARAMS, NS_VARS)


class FourierField:
    """exp(c t) * sum_j a_j cos(k_j . (x, y) + phi_j) with exact partials of any order."""

    def __init__(self, rng, n_modes=4, c=-0.3, kmax=3):
        self.a = rng.normal(size=n_modes)
        self.k = rng.integers(-kmax, kmax + 1, size=(n_modes, 2)).astype(float)
        self.phi = rng.uniform(0, 2 * np.pi, n_modes)
        self.c = c

    def d(self, point, counts):
        t, x, y = point
        nt, nx, ny = counts
        theta = self.k[:, 0] * x + self.k[:, 1] * y + self.phi + (nx + ny) * np.pi / 2
        s = np.sum(self.a * self.k[:, 0] ** nx * self.k[:, 1] ** ny * np.cos(theta))
        return self.c ** nt * np.exp(self.c * t) * s


def shift(c, d):
    return tuple(a + b for a, b in zip(c, d))


def ns_jets(psi, p, point, order=3):
    """u = psi_y, v = -psi_x, omega = v_x - u_y and pressure, all from exact partials."""
    iset = IndexSet.full(3, order)
    jets = {"u": {}, "v": {}, "p": {}, "omega": {}}
    for c in iset:
        jets["u"][c] = psi.d(point, shift(c, (0, 0, 1)))
        jets["v"][c] = -psi.d(point, shift(c, (0, 1, 0)))
        jets["omega"][c] = -psi.d(point, shift(c, (0, 2, 0))) - psi.d(point, shift(c, (0, 0, 2)))
        jets["p"][c] = p.d(point, c)
    return jets


# compile -------------------------------------------------------------------------------

def test_compile_constant(ac_ctx):
    ev = ac_eval(expr.parse("3", ac_ctx))
    assert residuals.evaluate(ev, {"u": {}}) == 3.0
    assert ev.orders == {}
    p = model.init(NetworkConfig(hidden_dim=4, hidden_layers=1, embedding_dim=4))
    assert residuals.residual_field(ev, p, np.zeros((5, 2))).tolist() == [3.0] * 5


def test_compile_allen_cahn_plan(ac_system):
    ev = ac_eval(ac_system.residuals[0])
    assert ev.orders == {"u": frozenset({(0, 0), (1, 0), (0, 2)})}
    referenced = {ins[2] for ins in ev.program if ins[0] == "coef"}
    assert referenced == {(0, 0), (1, 0), (0, 2)}


def test_compile_vorticity_plan(ns_system):
    ev = ns_eval(vorticity_residual(ns_system))
    assert ev.orders["omega"] == frozenset({(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 0), (0, 0, 2)})
    assert ev.orders["u"] == ev.orders["v"] == frozenset({(0, 0, 0)})
    assert "p" not in ev.orders


def test_compile_deterministic(ns_system):
    a = ns_eval(ns_system.residuals[0])
    b = ns_eval(ns_system.residuals[0])
    assert a.program == b.program


def test_unbound_field_and_parameter(ns_system):
    with pytest.raises(UnboundSymbolError):
        residuals.compile(ns_system.residuals[0], {"u": 0, "v": 1}, NS_PARAMS, NS_VARS)
    with pytest.raises(UnboundSymbolError):
        residuals.compile(ns_system.residuals[0], {"u": 0, "v": 1, "p": 2}, {"nu": 0.01}, NS_VARS)


# evaluate ------------------------------------------------------------------------------

def test_allen_cahn_equilibrium(ac_system):
    ev = ac_eval(ac_system.residuals[0])
    jets = {"u": {(0, 0): 1.0, (1, 0): 0.0, (0, 2): 0.0}}
    assert residuals.evaluate(ev, jets) == 0.0


def test_allen_cahn_auxiliary_on_linear_field(ac_system):
    aux = expr.derive_auxiliary(ac_system, [(0, "x")]).residuals[1]
    ev = ac_eval(aux)
    jets = {"u": {(0, 0): 1.0, (0, 1): 1.0, (1, 1): 0.0, (0, 3): 0.0}}
    assert residuals.evaluate(ev, jets) == 10.0


def test_missing_coefficient(ac_system):
    ev = ac_eval(ac_system.residuals[0])
    with pytest.raises(MissingCoefficientError):
        residuals.evaluate(ev, {"u": {(0, 0): 1.0}})
    p = model.init(NetworkConfig(hidden_dim=4, hidden_layers=1, embedding_dim=4))
    with pytest.raises(MissingCoefficientError):
        residuals.evaluate(ev, jet_eval(p, [0.1, 0.2], 1))


@pytest.mark.parametrize("point", [(0.0, 0.3, -1.2), (1.5, 2.0, 0.7), (0.2, -3.0, 4.0)])
def test_rigid_rotation_momentum(ns_system, point):
    _, x, y = point
    rho = NS_PARAMS["rho"]
    jets = {"u": {(0, 0, 0): -y, (1, 0, 0): 0.0, (0, 1, 0): 0.0, (0, 0, 1): -1.0, (0, 2, 0): 0.0, (0, 0, 2): 0.0},
            "v": {(0, 0, 0): x, (1, 0, 0): 0.0, (0, 1, 0): 1.0, (0, 0, 1): 0.0, (0, 2, 0): 0.0, (0, 0, 2): 0.0},
            "p": {(0, 1, 0): rho * x, (0, 0, 1): rho * y}}
    for e in ns_system.residuals:
        assert residuals.evaluate(ns_eval(e), jets) == pytest.approx(0.0, abs=1e-15)


def test_jet_and_mapping_inputs_agree(ac_system):
    p = model.init(NetworkConfig(hidden_dim=8, hidden_layers=2, embedding_dim=8, seed=3))
    ev = ac_eval(ac_system.residuals[0])
    jet = jet_eval(p, [0.4, -0.3], 2)
    as_map = {"u": jet.as_dict(0)}
    assert residuals.evaluate(ev, jet) == residuals.evaluate(ev, as_map)
    field = residuals.residual_field(ev, p, [[0.4, -0.3]])
    assert field[0] == pytest.approx(residuals.evaluate(ev, jet), rel=1e-14)


# residual_field --------------------------------------------------------------------------

def test_residual_field_empty(ac_system):
    p = model.init(NetworkConfig(hidden_dim=4, hidden_layers=1, embedding_dim=4))
    out = residuals.residual_field(ac_eval(ac_system.residuals[0]), p, np.zeros((0, 2)))
    assert out.shape == (0,)


def test_residual_field_finite_and_ordered(ac_system):
    p = model.init(NetworkConfig(hidden_dim=16, hidden_layers=2, embedding_dim=16, seed=1))
    ev = ac_eval(ac_system.residuals[0])
    pts = np.random.default_rng(0).uniform([0, -1], [1, 1], size=(50, 2))
    out = residuals.residual_field(ev, p, pts)
    assert out.shape == (50,) and np.all(np.isfinite(out))
    for i in (0, 17, 49):
        assert out[i] == pytest.approx(residuals.evaluate(ev, jet_eval(p, pts[i], 2)), rel=1e-12, abs=1e-14)


# identities ---------------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_auxiliary_equals_x_derivative_of_residual(ac_system, seed):
    p = model.init(NetworkConfig(hidden_dim=32, hidden_layers=3, embedding_dim=32, seed=seed))
    ev = ac_eval(ac_system.residuals[0])
    aux = ac_eval(expr.derive_auxiliary(ac_system, [(0, "x")]).residuals[1])
    h = 1e-3
    xs = np.linspace(-0.9, 0.9, 181)
    t = 0.37
    r = lambda dx: residuals.residual_field(ev, p, np.column_stack([np.full_like(xs, t), xs + dx]))  # noqa: E731
    fd = (r(-2 * h) - 8 * r(-h) + 8 * r(h) - r(2 * h)) / (12 * h)
    exact = residuals.residual_field(aux, p, np.column_stack([np.full_like(xs, t), xs]))
    assert np.max(np.abs(fd - exact)) < 1e-5


@pytest.mark.parametrize("seed", range(4))
def test_vorticity_derivation_identity(ns_system, seed):
    rng = np.random.default_rng(seed)
    psi, p1, p2 = FourierField(rng), FourierField(rng, c=0.5), FourierField(rng, c=-1.0)
    fields = ns_system.fields
    combined = (expr.differentiate(ns_system.residuals[1], "x", fields)
                - expr.differentiate(ns_system.residuals[0], "y", fields))
    ev_comb = ns_eval(combined)
    ev_vort = ns_eval(vorticity_residual(ns_system))
    for point in rng.uniform(0, 2 * np.pi, size=(5, 3)):
        a = ns_jets(psi, p1, point)
        b = ns_jets(psi, p2, point)
        r_omega = residuals.evaluate(ev_vort, a)
        r_comb = residuals.evaluate(ev_comb, a)
        assert abs(r_comb - r_omega) < 1e-8
        # pressure independence: swapping p leaves the combination unchanged
        assert abs(residuals.evaluate(ev_comb, b) - r_comb) < 1e-8
        # but the individual momentum residuals do depend on p
        assert abs(residuals.evaluate(ns_eval(ns_system.residuals[0]), a)
                   - residuals.evaluate(ns_eval(ns_system.residuals[0]), b)) > 1e-6


def test_stream_function_field_is_divergence_free(ns_system):
    psi, p = FourierField(np.random.default_rng(9)), FourierField(np.random.default_rng(10))
    ev = ns_eval(ns_system.constraints[0])
    for point in np.random.default_rng(0).uniform(0, 6, size=(5, 3)):
        assert abs(residuals.evaluate(ev, ns_jets(psi, p, point))) < 1e-12
