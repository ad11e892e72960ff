"""Sampling, composite loss assembly, Adam with exponential decay, and the training loop."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib.resources import files
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import expr
from . import model as M
from . import residuals as R
from .autodiff import IndexSet, NonFiniteError, loss_gradient, tape
from .report import relative_l2

MODES = ("pinn-original", "overpinn", "ns-only", "vorticity-only", "ns-combined")
AC_MODES = MODES[:2]
NS_MODES = MODES[2:]
COMPONENTS = ("L_OE", "L_HE", "L_IC", "L_BC")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step: int, component: str, value: float):
        super().__init__(f"non-finite {component} = {value} at step {step}")
        self.step = step
        self.component = component


def system_path(name: str):
    return files("overpinn") / "systems" / f"{name}.sys"


# domains and sampling ----------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Axis-aligned space-time box; the first variable is time."""

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    periodic: tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * len(self.names))
        if not len(self.names) == len(self.lower) == len(self.upper) == len(self.periodic):
            raise ValueError("domain lengths differ")

    @property
    def dim(self) -> int:
        return len(self.names)

    def check(self) -> None:
        for n, lo, hi in zip(self.names, self.lower, self.upper):
            if not hi > lo:
                raise ValueError(f"degenerate interval for {n}: [{lo}, {hi}]")


def sample(domain: Domain, kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random points.

    ``collocation`` fills the box, ``initial`` fixes time at its lower
    bound, and ``boundary-pair`` returns an array of shape (2, n, d) whose
    two slabs share every coordinate except one periodic axis, which sits
    at its lower and upper end respectively.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    domain.check()
    lo, hi = np.asarray(domain.lower, dtype=float), np.asarray(domain.upper, dtype=float)
    pts = lo + (hi - lo) * rng.random((n, domain.dim))
    if kind == "collocation":
        return pts
    if kind == "initial":
        pts[:, 0] = lo[0]
        return pts
    if kind == "boundary-pair":
        axes = [i for i in range(1, domain.dim) if domain.periodic[i]]
        if not axes:
            raise ValueError("domain has no periodic spatial axis")
        left, right = pts.copy(), pts.copy()
        for k in range(n):
            a = axes[k % len(axes)]
            left[k, a], right[k, a] = lo[a], hi[a]
        return np.stack([left, right])
    raise ValueError(f"unknown sample kind {kind!r}")


# problems ----------------------------------------------------------------------

@dataclass
class Problem:
    """A PDE system bound to a network head, domain, initial data and reference."""

    name: str
    system: expr.PDESystem
    outputs: tuple[str, ...]
    domain: Domain
    network: M.NetworkConfig
    initial_outputs: tuple[str, ...]
    initial_target: Callable[[np.ndarray], np.ndarray]
    boundary_orders: tuple[tuple[int, ...], ...] = ()
    reference: dict = field(default_factory=dict)

    @property
    def bindings(self) -> dict[str, int]:
        return {f: i for i, f in enumerate(self.outputs)}


def allen_cahn_problem(reference=None, hidden_dim: int = 256, hidden_layers: int = 4,
                       embedding_dim: int = 256, embedding_scale: float = 1.0, seed: int = 0) -> Problem:
    """u_t = 1e-4 u_xx - 5 (u^3 - u) on t in [0, 1], x in [-1, 1], u(0, x) = x^2 cos(pi x)."""
    system = expr.load(system_path("allen_cahn"))
    net = M.NetworkConfig(2, 1, hidden_dim, hidden_layers, embedding_dim, embedding_scale,
                          "gaussian", None, seed)
    return Problem(
        "allen-cahn", system, ("u",),
        Domain(("t", "x"), (0.0, -1.0), (1.0, 1.0), (False, True)), net, ("u",),
        lambda p: (p[:, 1] ** 2 * np.cos(np.pi * p[:, 1]))[:, None],
        boundary_orders=((0, 0), (0, 1)),
        reference={} if reference is None else {"u": reference},
    )


NS_OUTPUTS = {
    "ns-only": ("u", "v", "p"),
    "vorticity-only": ("u", "v", "omega"),
    "ns-combined": ("u", "v", "omega", "p"),
}


def navier_stokes_problem(mode: str, initial: dict, reference: dict | None = None, t_end: float = 2.0,
                          hidden_dim: int = 64, hidden_layers: int = 2, embedding_dim: int = 64,
                          seed: int = 0) -> Problem:
    """Periodic 2-D incompressible flow; ``initial`` maps output names to t=0 grids."""
    from .oracle import spectral_interpolate
    if mode not in NS_OUTPUTS:
        raise ValueError(f"mode {mode!r} is not a Navier-Stokes mode")
    system = expr.load(system_path("navier_stokes"))
    outputs = NS_OUTPUTS[mode]
    net = M.NetworkConfig(3, len(outputs), hidden_dim, hidden_layers, embedding_dim, 1.0,
                          "integer-periodic", (1, 2), seed)
    ic_outputs = tuple(o for o in outputs if o != "p")
    grids = {k: np.asarray(getattr(initial[k], "values", initial[k])) for k in ic_outputs}

    def target(p):
        return np.stack([spectral_interpolate(grids[k], p[:, 1:]) for k in ic_outputs], axis=-1)

    two_pi = 2 * np.pi
    ref = {k: v for k, v in (reference or {}).items() if k in outputs}
    return Problem(f"navier-stokes/{mode}", system, outputs,
                   Domain(("t", "x", "y"), (0.0, 0.0, 0.0), (t_end, two_pi, two_pi), (False, True, True)),
                   net, ic_outputs, target, (), ref)


# loss terms --------------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    oe: float = 1.0
    he: float = 1.0
    ic: float = 1.0
    bc: float = 1.0

    def __post_init__(self):
        for v in (self.oe, self.he, self.ic, self.bc):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError("loss weights must be finite and non-negative")

    def of(self, component: str) -> float:
        return {"L_OE": self.oe, "L_HE": self.he, "L_IC": self.ic, "L_BC": self.bc}[component]


@dataclass
class LossTerms:
    """Compiled residual groups for one (problem, mode) pair."""

    mode: str
    groups: dict[str, list[R.ResidualEvaluator]]
    names: dict[str, list[str]]
    index_set: IndexSet | None
    use_ic: bool = True
    use_bc: bool = False


def vorticity_residual(system: expr.PDESystem) -> expr.Expression:
    """Pressure-free residual from the momentum equations (cross-differentiation)."""
    result = expr.eliminate_and_reduce(system, ["p"], ["y", "x"])
    if result is None:
        raise ValueError("pressure is not eliminable from this system")
    return result.residual


def build_terms(problem: Problem, mode: str, omega_coupling: bool | None = None,
                he_directions: Sequence[str] = ("x",)) -> LossTerms:
    """Residual groups per mode.

    AC: ``L_OE`` holds the primal residual; ``overpinn`` adds the
    derivative of it along each of ``he_directions`` as ``L_HE``.
    NS: ``L_OE`` holds momentum (or vorticity transport) plus continuity;
    ``ns-combined`` places vorticity transport and the vorticity coupling in
    ``L_HE``.
    """
    system = problem.system
    params = system.parameters
    variables = system.variables
    groups: dict[str, list] = {"L_OE": [], "L_HE": []}
    names: dict[str, list] = {"L_OE": [], "L_HE": []}

    def add(group, name, e):
        groups[group].append(R.compile(e, problem.bindings, params, variables))
        names[group].append(name)

    if mode in AC_MODES:
        if problem.name != "allen-cahn" and len(system.residuals) != 1:
            raise ValueError("AC modes expect a single-residual system")
        add("L_OE", system.residual_names[0], system.residuals[0])
        if mode == "overpinn":
            aug = expr.derive_auxiliary(system, [(0, d) for d in he_directions])
            for name, e in zip(aug.residual_names[1:], aug.residuals[1:]):
                add("L_HE", name, e)
        use_bc = bool(problem.boundary_orders)
    elif mode in NS_MODES:
        if set(NS_OUTPUTS[mode]) != set(problem.outputs):
            raise ValueError(f"problem outputs {problem.outputs} do not match mode {mode!r}")
        coupling = (mode == "ns-combined") if omega_coupling is None else omega_coupling
        continuity = system.constraints[system.constraint_names.index("continuity")]
        if mode in ("ns-only", "ns-combined"):
            for name, e in zip(system.residual_names, system.residuals):
                add("L_OE", name, e)
        vort = vorticity_residual(system)
        if mode == "vorticity-only":
            add("L_OE", "vorticity", vort)
        add("L_OE", "continuity", continuity)
        if mode == "ns-combined":
            add("L_HE", "vorticity", vort)
        if coupling and "omega" in problem.outputs:
            body = system.definitions["omega"]
            add("L_HE" if mode == "ns-combined" else "L_OE", "omega_coupling",
                expr.Expression.deriv("omega") - body)
        use_bc = False
    else:
        raise ValueError(f"unknown mode {mode!r}")
    evs = groups["L_OE"] + groups["L_HE"]
    iset = R.union_index_set(evs) if evs else None
    return LossTerms(mode, groups, names, iset, True, use_bc)


@dataclass
class Batches:
    collocation: np.ndarray
    initial: np.ndarray | None = None
    boundary: np.ndarray | None = None


def draw_batches(problem: Problem, terms: LossTerms, sizes: tuple[int, int, int],
                 rng: np.random.Generator) -> Batches:
    nc, ni, nb = sizes
    col = sample(problem.domain, "collocation", nc, rng)
    ini = sample(problem.domain, "initial", ni, rng) if terms.use_ic else None
    bnd = sample(problem.domain, "boundary-pair", nb, rng) if terms.use_bc else None
    return Batches(col, ini, bnd)


@dataclass
class LossBreakdown:
    total: float
    components: dict[str, float]
    present: dict[str, bool]

    def row(self) -> dict[str, float]:
        return {"total": self.total, **{c: self.components.get(c, 0.0) for c in COMPONENTS}}


def _mean_square_sum(values):
    out = 0.0
    for r in values:
        out = tape.add(out, tape.mean(tape.square(r)))
    return out


def loss_graph(params, problem: Problem, terms: LossTerms, batches: Batches,
               weights: LossWeights = LossWeights()):
    """Weighted total and components, as tape values when ``params`` is traced."""
    comps = {}
    if terms.index_set is not None:
        J = M.network_jet(params, batches.collocation, terms.index_set)
        for g in ("L_OE", "L_HE"):
            if terms.groups[g]:
                comps[g] = _mean_square_sum(R.evaluate_batch(ev, J, terms.index_set)
                                            for ev in terms.groups[g])
    if terms.use_ic and batches.initial is not None:
        nd = problem.network.input_dim
        out = M.network_jet(params, batches.initial, IndexSet([], nd))
        target = problem.initial_target(batches.initial)
        cols = [problem.outputs.index(o) for o in problem.initial_outputs]
        comps["L_IC"] = _mean_square_sum(tape.getitem(out, (0, slice(None), c)) - target[:, k]
                                         for k, c in enumerate(cols))
    if terms.use_bc and batches.boundary is not None:
        iset = IndexSet(problem.boundary_orders, problem.network.input_dim)
        n = batches.boundary.shape[1]
        J = M.network_jet(params, batches.boundary.reshape(2 * n, -1), iset)
        diffs = []
        for counts in problem.boundary_orders:
            m = iset.ids[tuple(counts)]
            for k in range(len(problem.outputs)):
                if problem.outputs[k] == "p":
                    continue
                diffs.append(tape.getitem(J, (m, slice(0, n), k)) - tape.getitem(J, (m, slice(n, 2 * n), k)))
        comps["L_BC"] = _mean_square_sum(diffs)
    total = None
    for c in COMPONENTS:
        if c in comps:
            term = tape.mul(comps[c], weights.of(c))
            total = term if total is None else tape.add(total, term)
    return (0.0 if total is None else total), comps


def _breakdown(total, comps) -> LossBreakdown:
    vals = {c: float(tape.value(comps[c])) if c in comps else 0.0 for c in COMPONENTS}
    return LossBreakdown(float(tape.value(total)), vals, {c: c in comps for c in COMPONENTS})


def assemble_loss(params, problem: Problem, terms: LossTerms, batches: Batches,
                  weights: LossWeights = LossWeights()) -> LossBreakdown:
    return _breakdown(*loss_graph(params, problem, terms, batches, weights))


def loss_and_gradient(params, problem, terms, batches, weights=LossWeights(), step: int = 0):
    """LossBreakdown plus flat gradient; aborts on non-finite components."""
    box = {}

    def f(p):
        total, comps = loss_graph(p, problem, terms, batches, weights)
        box["b"] = b = _breakdown(total, comps)
        for c in COMPONENTS:
            if b.present[c] and not math.isfinite(b.components[c]):
                raise TrainingDivergedError(step, c, b.components[c])
        if not math.isfinite(b.total):
            raise TrainingDivergedError(step, "total", b.total)
        return total

    g = loss_gradient(f, params)
    return box["b"], g.gradient


# optimizer ---------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_steps: int = 2000
    decay_rate: float = 0.9

    def __post_init__(self):
        if not 0 < self.decay_rate <= 1:
            raise ValueError("decay rate must lie in (0, 1]")
        if self.decay_steps <= 0 or self.learning_rate <= 0:
            raise ValueError("learning rate and decay steps must be positive")

    def lr(self, step: int) -> float:
        return self.learning_rate * self.decay_rate ** (step / self.decay_steps)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> OptimizerState:
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: M.Parameters, grads: np.ndarray, state: OptimizerState,
              opt: OptimizerConfig = OptimizerConfig()):
    """One bias-corrected Adam update at learning rate ``opt.lr(state.step)``.

    Entries outside ``params.trainable_mask()`` (the embedding) never move.
    """
    grads = np.asarray(grads, dtype=np.float64)
    theta = params.flatten()
    if grads.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("gradient/state shape does not match parameters")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteError("non-finite gradient")
    mask = params.trainable_mask()
    g = np.where(mask, grads, 0.0)
    t = state.step + 1
    m = opt.beta1 * state.m + (1 - opt.beta1) * g
    v = opt.beta2 * state.v + (1 - opt.beta2) * g * g
    m_hat = m / (1 - opt.beta1 ** t)
    v_hat = v / (1 - opt.beta2 ** t)
    update = opt.lr(state.step) * m_hat / (np.sqrt(v_hat) + opt.eps)
    theta = theta - np.where(mask, update, 0.0)
    return M.Parameters.unflatten(params.config, theta), OptimizerState(m, v, t)


# training loop -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    mode: str = "overpinn"
    weights: LossWeights = LossWeights()
    n_collocation: int = 64
    n_initial: int = 64
    n_boundary: int = 64
    steps: int = 1000
    optimizer: OptimizerConfig = OptimizerConfig()
    seed: int = 0
    eval_every: int = 1000
    checkpoint_every: int = 0
    omega_coupling: bool | None = None
    he_directions: tuple[str, ...] = ("x",)
    strict: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if min(self.n_collocation, self.n_initial, self.n_boundary) < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.steps < 0 or self.eval_every < 1 or self.checkpoint_every < 0:
            raise ValueError("invalid step counts")

    def to_dict(self) -> dict:
        from dataclasses import asdict
        d = asdict(self)
        d["he_directions"] = list(self.he_directions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if "weights" in d:
            d["weights"] = LossWeights(**d["weights"])
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        if "he_directions" in d:
            d["he_directions"] = tuple(d["he_directions"])
        return cls(**d)


def evaluate_reference(params: M.Parameters, problem: Problem, chunk: int = 16384) -> dict[str, float]:
    """Relative L2 of each referenced output over the reference raster."""
    out = {}
    if not problem.reference:
        return out
    first = next(iter(problem.reference.values()))
    pts = first.points()
    pred = np.concatenate([M.forward(params, pts[i:i + chunk]) for i in range(0, len(pts), chunk)])
    for name, series in problem.reference.items():
        k = problem.outputs.index(name)
        out[name] = relative_l2(pred[:, k], series.frames.ravel())
    return out


def eval_columns(problem: Problem) -> list[str]:
    return [f"eval_rel_l2_{n}" for n in problem.reference]


def metrics_columns(problem: Problem) -> list[str]:
    return ["step", "lr", "total", *COMPONENTS, *eval_columns(problem)]


def train(config: TrainConfig, problem: Problem, out_dir=None, params: M.Parameters | None = None,
          callback: Callable[[dict], None] | None = None):
    """Run ``config.steps`` Adam steps; returns (final params, metric rows).

    Row ``k < steps`` reports the loss of the parameters entering step ``k``;
    a final row at ``step == steps`` reports the trained parameters.
    Evaluation columns are filled every ``eval_every`` steps and at the end.
    """
    network = replace(problem.network, seed=config.seed)
    params = M.init(network) if params is None else params
    terms = build_terms(problem, config.mode, config.omega_coupling, config.he_directions)
    rng = np.random.default_rng(config.seed)
    sizes = (config.n_collocation, config.n_initial, config.n_boundary)
    state = OptimizerState.zeros(network.parameter_count())
    history: list[dict] = []
    if config.steps == 0:
        return params, history
    out_dir = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = open(out_dir / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=metrics_columns(problem))
        writer.writeheader()
    try:
        for step in range(config.steps + 1):
            batches = draw_batches(problem, terms, sizes, rng)
            final = step == config.steps
            if final:
                breakdown = assemble_loss(params, problem, terms, batches, config.weights)
            else:
                breakdown, grad = loss_and_gradient(params, problem, terms, batches, config.weights, step)
            row = {"step": step, "lr": config.optimizer.lr(step), **breakdown.row()}
            if step % config.eval_every == 0 or final:
                for name, err in evaluate_reference(params, problem).items():
                    row[f"eval_rel_l2_{name}"] = err
            history.append(row)
            if writer is not None:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
            if callback is not None:
                callback(row)
            if final:
                break
            params, state = adam_step(params, grad, state, config.optimizer)
            if out_dir is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                M.save(params, out_dir / f"checkpoint_{step + 1:07d}.bin")
        if out_dir is not None:
            M.save(params, out_dir / "final.bin")
    finally:
        if fh is not None:
            fh.close()
    return params, history


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV back into typed rows (empty cells dropped)."""
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k == "step" else float(v)) for k, v in r.items() if v != ""})
    return rows
