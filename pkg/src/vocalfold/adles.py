"""Adjoint least-squares estimation of the fold model parameters.

The model is integrated forward, the mismatch between predicted and measured
glottal flow is pushed backward through the adjoint system, and the adjoint
multipliers give the gradient of the residual energy with respect to
``(alpha, beta, delta)`` in one backward sweep.

Two adjoint routes are provided. ``"discrete"`` is the exact transpose of the
forward RK4 step, so its gradient is the exact derivative of the sampled
residual energy. ``"continuous"`` integrates the second-order multiplier
equations backward with RK4 and converges to the same gradient as the step
shrinks. In both cases the gradient is assembled from the same three integrands;
only the quadrature nodes differ.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from . import _kernels as _k
from .glottal import GlottalWaveform, normalize_peak
from .vfmodel import (
    DEFAULT_BLOWUP,
    NORMAL_VOICE,
    BoundaryConditions,
    DivergenceError,
    FoldTrajectory,
    ModelParams,
    PhysicalConstants,
    integrate_forward,
    model_step,
    raw_flow,
)

log = logging.getLogger(__name__)

#: Projection box applied after every parameter update.
PARAM_BOX = ((0.0, 2.0), (1e-4, 2.0), (-2.0, 2.0))


@dataclass(frozen=True)
class ResidualSeries:
    values: np.ndarray
    step: float
    energy: float

    def __len__(self):
        return len(self.values)

    @property
    def mean_abs(self) -> float:
        return float(np.mean(np.abs(self.values)))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True)
class Gradients:
    g_alpha: float
    g_beta: float
    g_delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.g_alpha, self.g_beta, self.g_delta])


@dataclass(frozen=True)
class AdjointTrajectory:
    """Backward solution on the forward grid.

    ``lambdas`` has columns ``(lam_l, dlam_l, lam_r, dlam_r)``. The
    ``quad_*`` arrays hold the nodes, multipliers ``(lam_l, lam_r)`` and
    weights of the quadrature used to assemble parameter gradients.
    """

    times: np.ndarray
    lambdas: np.ndarray
    params: ModelParams
    quad_states: np.ndarray
    quad_lambdas: np.ndarray
    quad_weights: np.ndarray
    method: str = "discrete"


@dataclass(frozen=True)
class OptimizerConfig:
    step_size: float = 0.01
    max_iters: int = 100
    rel_tol: float = 1e-6
    init: ModelParams = field(default_factory=ModelParams)
    backtracking: bool = True
    max_halvings: int = 20
    max_lag_s: float = 0.005
    nominal_f0: float = 150.0
    adjoint: str = "discrete"
    blowup_bound: float = DEFAULT_BLOWUP

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")
        if self.max_lag_s < 0:
            raise ValueError("max_lag_s must be >= 0")
        if not self.nominal_f0 > 0:
            raise ValueError("nominal_f0 must be positive")
        if not self.blowup_bound > 0:
            raise ValueError("blowup_bound must be positive")
        if self.adjoint not in ("discrete", "continuous"):
            raise ValueError(f"unknown adjoint method {self.adjoint!r}")


@dataclass(frozen=True)
class EstimationResult:
    params: ModelParams
    residual: ResidualSeries
    iterations: int
    converged: bool
    energy_trace: tuple
    initial_energy: float = math.nan
    lag: int = 0


def residual(u0: GlottalWaveform, u0m: GlottalWaveform, step: float | None = None) -> ResidualSeries:
    """``R = u0 - u0m`` with rectangle-rule energy ``step * sum(R**2)``.

    ``step`` defaults to the sample period of the waveforms.
    """
    if len(u0) != len(u0m):
        raise ValueError(f"waveform lengths differ: {len(u0)} vs {len(u0m)}")
    if u0.sample_rate != u0m.sample_rate:
        raise ValueError("waveform sample rates differ")
    if step is None:
        step = 1.0 / u0.sample_rate
    r = np.asarray(u0.samples, float) - np.asarray(u0m.samples, float)
    return ResidualSeries(r, float(step), float(step * np.sum(r * r)))


def project(theta) -> np.ndarray:
    lo = np.array([b[0] for b in PARAM_BOX])
    hi = np.array([b[1] for b in PARAM_BOX])
    return np.clip(np.asarray(theta, float), lo, hi)


# ---------------------------------------------------------------------------
# adjoint sweeps


def _discrete_adjoint(traj: FoldTrajectory, force: np.ndarray, bound: float) -> AdjointTrajectory:
    """Exact transpose of the forward RK4 map.

    ``force[n]`` is dE/dx at node ``n``; it applies to both ``xl`` and ``xr``
    because the predicted flow depends on their sum. Quadrature nodes are the
    RK4 stages with weights ``h * b_s``; the stage multipliers there are minus
    the velocity part of dE/dk_s divided by that weight.
    """
    p = traj.params
    lam, qs, ql, qw, failed = _k.discrete_adjoint(
        np.ascontiguousarray(traj.states), force, p.alpha, p.beta, p.delta / 2.0, traj.step, bound
    )
    if failed >= 0:
        raise DivergenceError(int(failed), bound)
    return AdjointTrajectory(traj.times, lam, p, qs.reshape(-1, 4), ql.reshape(-1, 2), qw.reshape(-1), "discrete")


def _continuous_adjoint(traj: FoldTrajectory, force: np.ndarray, bound: float) -> AdjointTrajectory:
    """RK4 on the second-order multiplier equations, backward from zero terminal data.

    ``force`` becomes a forcing density after division by the step; states and
    forcing at half steps are linear interpolants of the nodes. Gradients then
    use the left rectangle rule on the grid.
    """
    p = traj.params
    h = traj.step
    lam, failed = _k.continuous_adjoint(
        np.ascontiguousarray(traj.states), force / h, p.alpha, p.beta, p.delta / 2.0, h, bound
    )
    if failed >= 0:
        raise DivergenceError(int(failed), bound)
    n = len(traj) - 1
    return AdjointTrajectory(
        traj.times, lam, p, np.array(traj.states[:-1]), lam[:-1][:, [0, 2]].copy(), np.full(n, h), "continuous"
    )


def integrate_adjoint(
    traj: FoldTrajectory,
    res: ResidualSeries,
    p: ModelParams | None = None,
    consts: PhysicalConstants = PhysicalConstants(),
    *,
    offset: int = 0,
    sensitivity=None,
    method: str = "discrete",
    bound: float = DEFAULT_BLOWUP,
) -> AdjointTrajectory:
    """Backward sweep of the adjoint system for a given residual.

    The residual covers trajectory nodes ``offset .. offset + len(res) - 1``,
    all of which must precede the final node (the energy is a left rectangle
    rule), so the multipliers vanish exactly at the final time.
    ``sensitivity`` is dE/du per residual sample; it defaults to
    ``2 * step * R``, the derivative of the plain rectangle-rule energy. Pass
    the output of :meth:`FlowObjective.evaluate` to account for clamping and
    peak normalisation.
    """
    if p is not None and p != traj.params:
        raise ValueError("params differ from those of the trajectory")
    if offset < 0 or offset + len(res) > len(traj) - 1:
        raise ValueError("residual must lie on the left endpoints of the trajectory steps")
    if sensitivity is None:
        sensitivity = 2.0 * res.step * res.values
    force = np.zeros(len(traj))
    force[offset : offset + len(res)] = consts.flow_scale * np.asarray(sensitivity, float)
    if method == "discrete":
        return _discrete_adjoint(traj, force, bound)
    if method == "continuous":
        return _continuous_adjoint(traj, force, bound)
    raise ValueError(f"unknown adjoint method {method!r}")


def gradients(traj: FoldTrajectory, adj: AdjointTrajectory) -> Gradients:
    """dE/d(alpha, beta, delta) from the adjoint multipliers.

    Integrands: ``-(vr + vl)(lam_r + lam_l)``,
    ``(1 + xr^2) vr lam_r + (1 + xl^2) vl lam_l`` and
    ``(xl lam_l - xr lam_r) / 2``, summed over the adjoint's quadrature nodes.
    """
    if len(adj.times) != len(traj.times):
        raise ValueError("adjoint and trajectory grids differ")
    xl, vl, xr, vr = adj.quad_states.T
    ll, lr = adj.quad_lambdas.T
    w = adj.quad_weights
    ga = np.sum(w * (-(vr + vl) * (lr + ll)))
    gb = np.sum(w * ((1.0 + xr * xr) * vr * lr + (1.0 + xl * xl) * vl * ll))
    gd = np.sum(w * (0.5 * (xl * ll - xr * lr)))
    return Gradients(float(ga), float(gb), float(gd))


# ---------------------------------------------------------------------------
# objective


@dataclass(frozen=True)
class Evaluation:
    energy: float
    traj: FoldTrajectory
    residual: ResidualSeries
    sensitivity: np.ndarray
    lag: int


class FlowObjective:
    """Residual energy between predicted and measured flow as a function of parameters.

    The model is integrated for ``len(measured) + max_lag`` steps so that the
    predicted window ``[lag, lag + N)`` exists for every admissible lag. Both
    flows are peak-normalised before differencing when ``normalize`` is set.
    """

    def __init__(self, measured, h, bc=BoundaryConditions(), consts=PhysicalConstants(),
                 max_lag=0, normalize=True, bound=DEFAULT_BLOWUP):
        m = np.asarray(measured, float)
        self.measured = normalize_peak(m) if normalize else m
        self.h = float(h)
        self.bc = bc
        self.consts = consts
        self.max_lag = int(max_lag)
        self.normalize = normalize
        self.bound = bound
        self.n_steps = len(self.measured) + self.max_lag

    def simulate(self, params: ModelParams) -> FoldTrajectory:
        return integrate_forward(params, self.bc, self.n_steps, self.h, self.bound)

    def window(self, traj: FoldTrajectory, lag: int):
        N = len(self.measured)
        u = raw_flow(traj, self.consts)[lag : lag + N]
        c = np.maximum(u, 0.0)
        return u, c

    def best_lag(self, traj: FoldTrajectory) -> int:
        """Model advance (in samples) maximising normalised cross-correlation."""
        u = np.maximum(raw_flow(traj, self.consts), 0.0)
        N = len(self.measured)
        win = np.lib.stride_tricks.sliding_window_view(u[: N + self.max_lag], N)
        win = win - win.mean(axis=1, keepdims=True)
        m = self.measured - self.measured.mean()
        num = win @ m
        den = np.sqrt(np.einsum("ij,ij->i", win, win) * float(m @ m))
        scores = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        return int(np.argmax(scores))

    def evaluate(self, params: ModelParams, lag: int, traj: FoldTrajectory | None = None) -> Evaluation:
        if traj is None:
            traj = self.simulate(params)
        u, c = self.window(traj, lag)
        peak = float(c.max())
        scale = peak if (self.normalize and peak > 0) else 1.0
        r = c / scale - self.measured
        h = self.h
        energy = float(h * np.sum(r * r))
        sens = 2.0 * h * r / scale
        if self.normalize and peak > 0:
            imax = int(np.argmax(c))
            sens[imax] -= 2.0 * h * float(np.dot(r, c)) / (scale * scale)
        sens = np.where(u > 0, sens, 0.0)
        res = ResidualSeries(r, h, energy)
        return Evaluation(energy, traj, res, sens, lag)

    def energy(self, params: ModelParams, lag: int = 0) -> float:
        return self.evaluate(params, lag).energy

    def gradient(self, params: ModelParams, lag: int = 0, method: str = "discrete", ev: Evaluation | None = None):
        if ev is None:
            ev = self.evaluate(params, lag)
        adj = integrate_adjoint(
            ev.traj, ev.residual, params, self.consts,
            offset=lag, sensitivity=ev.sensitivity, method=method, bound=self.bound,
        )
        return gradients(ev.traj, adj), ev, adj


# ---------------------------------------------------------------------------
# descent


def estimate(
    u0m: GlottalWaveform,
    bc: BoundaryConditions = BoundaryConditions(),
    consts: PhysicalConstants = PhysicalConstants(),
    cfg: OptimizerConfig = OptimizerConfig(),
) -> EstimationResult:
    """Fit ``(alpha, beta, delta)`` to a measured glottal flow by adjoint gradient descent.

    Each iteration takes one projected gradient step ``theta - step * grad``.
    With backtracking, a step that fails to lower the energy is halved and
    retried up to ``cfg.max_halvings`` times; each iteration starts from twice
    the previously accepted step, capped at ``cfg.step_size``. Iteration stops
    when the relative energy decrease drops below ``cfg.rel_tol`` (a line
    search that finds no decrease at all counts), or after ``cfg.max_iters``
    iterations. The lowest-energy iterate is returned.

    Raises :class:`DivergenceError` if the model diverges at ``cfg.init``.
    """
    h = model_step(u0m.sample_rate, cfg.nominal_f0)
    max_lag = int(round(2 * cfg.max_lag_s * u0m.sample_rate))
    obj = FlowObjective(u0m.samples, h, bc, consts, max_lag=max_lag, bound=cfg.blowup_bound)
    if len(obj.measured) < 2:
        raise ValueError("measured waveform too short")

    theta = project(cfg.init.as_array())
    params = ModelParams.from_array(theta)
    traj = obj.simulate(params)
    lag = obj.best_lag(traj)
    ev = obj.evaluate(params, lag, traj)
    e0 = ev.energy
    best = ev
    trace: list[float] = []
    converged = False
    step = cfg.step_size

    for k in range(cfg.max_iters):
        if ev.energy == 0.0:
            trace.append(ev.energy)
            converged = True
            break
        grad, _, _ = obj.gradient(params, lag, cfg.adjoint, ev)
        g = grad.as_array()
        if not np.all(np.isfinite(g)):
            log.debug("non-finite gradient at iteration %d", k)
            break
        if not np.any(g):
            trace.append(ev.energy)
            converged = True
            break

        accepted = None
        step = min(2.0 * step, cfg.step_size) if cfg.backtracking else cfg.step_size
        for _ in range(cfg.max_halvings + 1 if cfg.backtracking else 1):
            cand = ModelParams.from_array(project(theta - step * g))
            try:
                cand_ev = obj.evaluate(cand, lag)
            except DivergenceError:
                cand_ev = None
            if not cfg.backtracking:
                accepted = (cand, cand_ev)
                break
            if cand_ev is not None and cand_ev.energy < ev.energy:
                accepted = (cand, cand_ev)
                break
            step *= 0.5
        if accepted is None or accepted[1] is None:
            # no descent left after all halvings: past the first iteration this
            # means the attainable relative decrease is zero
            log.debug("no acceptable step at iteration %d", k)
            converged = cfg.backtracking and k > 0
            break

        params, new_ev = accepted
        theta = params.as_array()
        # realign only when it helps, so the accepted energy never rises
        new_lag = obj.best_lag(new_ev.traj)
        if new_lag != lag:
            alt = obj.evaluate(params, new_lag, new_ev.traj)
            if alt.energy < new_ev.energy:
                new_ev, lag = alt, new_lag
        rel = (ev.energy - new_ev.energy) / ev.energy
        ev = new_ev
        trace.append(ev.energy)
        if ev.energy < best.energy:
            best = ev
        if cfg.backtracking and rel < cfg.rel_tol:
            converged = True
            break
        if not cfg.backtracking and abs(rel) < cfg.rel_tol:
            converged = True
            break

    return EstimationResult(
        params=best.traj.params,
        residual=best.residual,
        iterations=len(trace),
        converged=converged,
        energy_trace=tuple(trace),
        initial_energy=e0,
        lag=best.lag,
    )


class ADLESTransformer(BaseEstimator, TransformerMixin):
    """Map measured glottal flows to ``(alpha, beta, delta, E, mean|R|, max|R|)``.

    Stateless: ``fit`` only validates. ``transform`` runs :func:`estimate` on
    each row of an ``(n_segments, n_samples)`` array; the full results are kept
    in ``results_``.
    """

    def __init__(self, sample_rate=8000.0, init=NORMAL_VOICE, step_size=0.01, max_iters=100,
                 rel_tol=1e-6, backtracking=True, max_lag_s=0.005, nominal_f0=150.0,
                 x0=0.1, flow_scale=1.0, cl=0.1, cr=0.1):
        self.sample_rate = sample_rate
        self.init = init
        self.step_size = step_size
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.backtracking = backtracking
        self.max_lag_s = max_lag_s
        self.nominal_f0 = nominal_f0
        self.x0 = x0
        self.flow_scale = flow_scale
        self.cl = cl
        self.cr = cr

    def _setup(self):
        cfg = OptimizerConfig(
            step_size=self.step_size, max_iters=self.max_iters, rel_tol=self.rel_tol,
            init=ModelParams.from_array(self.init), backtracking=self.backtracking,
            max_lag_s=self.max_lag_s, nominal_f0=self.nominal_f0,
        )
        return BoundaryConditions(self.cl, self.cr), PhysicalConstants(self.x0, self.flow_scale), cfg

    def fit(self, X, y=None):
        X = check_array(X)
        self._setup()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        bc, consts, cfg = self._setup()
        self.results_ = [estimate(GlottalWaveform(row, float(self.sample_rate)), bc, consts, cfg) for row in X]
        return np.array([
            [r.params.alpha, r.params.beta, r.params.delta, r.residual.energy, r.residual.mean_abs, r.residual.max_abs]
            for r in self.results_
        ])
