"""Asymmetric one-mass body-cover model of the left and right vocal folds.

State vectors are laid out as ``(xl, vl, xr, vr)``: displacement and velocity
of the left fold followed by the right fold. All quantities are dimensionless
and time is model time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import rk4_forward
from .glottal import GlottalWaveform

#: Normal adult male voice, averaged from videographic measurements.
NORMAL_VOICE = (0.25, 0.32, 0.0)

DEFAULT_BLOWUP = 1e6


class DivergenceError(RuntimeError):
    """The forward or adjoint integration left the configured state bound."""

    def __init__(self, step: int, bound: float):
        super().__init__(f"state magnitude exceeded {bound:g} at step {step}")
        self.step = step
        self.bound = bound


@dataclass(frozen=True)
class ModelParams:
    alpha: float = NORMAL_VOICE[0]
    beta: float = NORMAL_VOICE[1]
    delta: float = NORMAL_VOICE[2]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError(f"non-finite model parameters: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.delta], dtype=float)

    @classmethod
    def from_array(cls, theta) -> "ModelParams":
        a, b, d = (float(v) for v in theta)
        return cls(a, b, d)


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants of the predicted-flow relation ``flow_scale * (2 x0 + xl + xr)``.

    ``flow_scale`` stands for the product of fold length and midpoint air
    particle velocity; neither is observable from audio, so only the product
    is carried.
    """

    x0: float = 0.1
    flow_scale: float = 1.0

    def __post_init__(self):
        if not self.flow_scale > 0:
            raise ValueError("flow_scale must be positive")
        if not self.x0 >= 0:
            raise ValueError("x0 must be non-negative")


@dataclass(frozen=True)
class BoundaryConditions:
    """Initial displacements; both initial velocities are zero."""

    cl: float = 0.1
    cr: float = 0.1

    def __post_init__(self):
        if not (math.isfinite(self.cl) and math.isfinite(self.cr)):
            raise ValueError("boundary displacements must be finite")


class FoldState(NamedTuple):
    xl: float
    vl: float
    xr: float
    vr: float


@dataclass(frozen=True)
class FoldTrajectory:
    """Uniformly sampled forward solution.

    ``states`` has shape ``(n, 4)`` with columns ``xl, vl, xr, vr``.
    """

    times: np.ndarray
    states: np.ndarray
    params: ModelParams

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[1] != 4:
            raise ValueError("states must have shape (n, 4)")
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        self.states.flags.writeable = False
        self.times.flags.writeable = False

    def __len__(self):
        return len(self.times)

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def xl(self):
        return self.states[:, 0]

    @property
    def vl(self):
        return self.states[:, 1]

    @property
    def xr(self):
        return self.states[:, 2]

    @property
    def vr(self):
        return self.states[:, 3]

    def state(self, i: int) -> FoldState:
        return FoldState(*(float(v) for v in self.states[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "xl", "vl", "xr", "vr"])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def model_step(sample_rate: float, nominal_f0: float = 150.0) -> float:
    """Model-time step corresponding to one audio sample.

    The equations oscillate at unit angular frequency, so one nominal glottal
    cycle of ``1 / nominal_f0`` seconds maps to ``2 pi`` units of model time.
    """
    if sample_rate <= 0 or nominal_f0 <= 0:
        raise ValueError("sample_rate and nominal_f0 must be positive")
    return 2.0 * math.pi * nominal_f0 / sample_rate


def accel(state, p: ModelParams) -> tuple[float, float]:
    """Fold accelerations ``(al, ar)`` at ``state``.

    The asymmetry term enters the right fold with a negative sign on its
    stiffness and the left fold with a positive sign.
    """
    xl, vl, xr, vr = state
    a, b, d = p.alpha, p.beta, p.delta
    drive = a * (vr + vl)
    al = drive - b * (1.0 + xl * xl) * vl - xl - (d / 2.0) * xl
    ar = drive - b * (1.0 + xr * xr) * vr - xr + (d / 2.0) * xr
    return al, ar


def integrate_forward(
    p: ModelParams,
    bc: BoundaryConditions,
    n_steps: int,
    h: float,
    bound: float = DEFAULT_BLOWUP,
) -> FoldTrajectory:
    """Classical fixed-step RK4 from ``(cl, 0, cr, 0)``; ``n_steps + 1`` states.

    Raises :class:`DivergenceError` when any state component exceeds ``bound``
    in magnitude (or becomes non-finite).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not h > 0:
        raise ValueError("h must be positive")
    states, failed = rk4_forward(
        float(p.alpha), float(p.beta), float(p.delta) / 2.0,
        float(bc.cl), float(bc.cr), int(n_steps), float(h), float(bound),
    )
    if failed >= 0:
        raise DivergenceError(int(failed), bound)
    times = np.arange(n_steps + 1, dtype=float) * h
    return FoldTrajectory(times, states, p)


def raw_flow(traj: FoldTrajectory, consts: PhysicalConstants) -> np.ndarray:
    """Unclamped ``flow_scale * (2 x0 + xl + xr)``."""
    return consts.flow_scale * (2.0 * consts.x0 + traj.xl + traj.xr)


def predict_flow(
    traj: FoldTrajectory, consts: PhysicalConstants, sample_rate: float | None = None
) -> GlottalWaveform:
    """Glottal volume velocity predicted from the fold displacements.

    Negative values (folds closed past rest) are clamped to zero.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    u = np.maximum(raw_flow(traj, consts), 0.0)
    if sample_rate is None:
        sample_rate = 1.0 / traj.step if traj.step > 0 else 1.0
    return GlottalWaveform(u, float(sample_rate), "predicted")


def phase_portrait(traj: FoldTrajectory, side: str) -> np.ndarray:
    """``(x, xdot)`` pairs for one fold in time order, shape ``(n, 2)``."""
    if side == "left":
        cols = [0, 1]
    elif side == "right":
        cols = [2, 3]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return np.array(traj.states[:, cols])


def write_portrait_csv(portrait: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "xdot"])
        for x, v in portrait:
            w.writerow([repr(float(x)), repr(float(v))])


def _segment_distance(p, a, b):
    # distance from points p (m, 2) to every segment a[j]-b[j]; returns (m,)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    ap = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("mjk,jk->mj", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.sqrt(((p[:, None, :] - proj) ** 2).sum(-1)).min(axis=1)


def cycle_starts(portrait: np.ndarray) -> np.ndarray:
    """Indices where ``x`` crosses its mean upward (one per oscillation cycle)."""
    x = portrait[:, 0] - portrait[:, 0].mean()
    return np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0)) + 1


def closure_error(portrait: np.ndarray) -> float:
    """Relative gap between the last two oscillation cycles of a portrait.

    Every point of the final cycle is measured against the polyline of the
    cycle before it; the worst distance is divided by the orbit diameter of
    the final cycle. Returns ``inf`` when fewer than two full cycles exist.
    """
    starts = cycle_starts(portrait)
    if len(starts) < 3:
        return math.inf
    prev = portrait[starts[-3] : starts[-2] + 1]
    last = portrait[starts[-2] : starts[-1] + 1]
    span = last.max(axis=0) - last.min(axis=0)
    diameter = float(np.hypot(*span))
    if diameter == 0:
        return math.inf
    gap = _segment_distance(last, prev[:-1], prev[1:]).max()
    return float(gap / diameter)


def is_closed_orbit(portrait: np.ndarray, tol: float = 0.02) -> bool:
    return closure_error(portrait) < tol
