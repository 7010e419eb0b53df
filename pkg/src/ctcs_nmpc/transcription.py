"""Uniform grid, first-order-hold control, and exact multiple-shooting data.

Node states and controls are the decision variables; the dynamics between
consecutive nodes are imposed through the exact propagation map of each
sub-interval. Linearizing that map per segment yields the discrete state
map, the two input maps, and an affine offset, which together feed the convex
subproblem.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .integrators import (
    IntegratorConfig,
    foh_interp,
    propagate_segment,
    propagate_with_sensitivities,
)
from .problem import AugmentedSystem, ConfigurationError

Array = np.ndarray


class HorizonRangeError(ValueError):
    """Time query outside the planning horizon."""


@dataclass(frozen=True)
class GridConfig:
    """Uniform grid of ``n_nodes`` nodes covering ``[t_start, t_start + horizon]``."""

    t_start: float
    horizon: float
    n_nodes: int

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ConfigurationError("grid needs at least two nodes")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_nodes - 1)

    @cached_property
    def times(self) -> Array:
        return np.linspace(self.t_start, self.t_start + self.horizon, self.n_nodes)

    @property
    def t_end(self) -> float:
        return self.t_start + self.horizon


@dataclass
class TrajectoryIterate:
    """Node values of the augmented state and control, shared by SCP and NMPC."""

    states: Array  # (N, n_x)
    controls: Array  # (N, n_u)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.states.ndim != 2 or self.controls.ndim != 2:
            raise ConfigurationError("states and controls must be 2-D arrays")
        if self.states.shape[0] != self.controls.shape[0]:
            raise ConfigurationError("states and controls must have equal node counts")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.controls))):
            raise ConfigurationError("trajectory iterate contains non-finite entries")

    @property
    def n_nodes(self) -> int:
        return self.states.shape[0]

    def copy(self) -> "TrajectoryIterate":
        return TrajectoryIterate(self.states.copy(), self.controls.copy())


@dataclass(frozen=True)
class LinearizedSegment:
    """Affine model of one sub-interval's exact propagation map.

    ``offset`` satisfies ``end_state = A @ x_k + B_minus @ u_k
    + B_plus @ u_{k+1} + offset`` by construction.
    """

    A: Array
    B_minus: Array
    B_plus: Array
    offset: Array
    end_state: Array


def foh_control(t: float, grid: GridConfig, controls: Array) -> Array:
    """Interpolated control at time ``t``; exact node values at the nodes."""
    times = grid.times
    tol = 1e-9 * max(1.0, abs(grid.t_end))
    if t < times[0] - tol or t > times[-1] + tol:
        raise HorizonRangeError(
            f"t={t} outside horizon [{times[0]}, {times[-1]}]"
        )
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), grid.n_nodes - 2)
    return foh_interp(t, times[k], times[k + 1], controls[k], controls[k + 1])


def discretize_segment(
    k: int,
    Z: TrajectoryIterate,
    grid: GridConfig,
    system: AugmentedSystem,
    cfg: IntegratorConfig,
) -> Array:
    """Exact (integrator-grade) state at node ``k+1`` from node ``k`` data."""
    if not 0 <= k < grid.n_nodes - 1:
        raise ConfigurationError(f"segment index {k} out of range")
    times = grid.times
    return propagate_segment(
        system.rhs,
        times[k],
        times[k + 1],
        Z.states[k],
        Z.controls[k],
        Z.controls[k + 1],
        cfg,
    )


def _linearize_one(k, Z, times, system, cfg):
    res = propagate_with_sensitivities(
        system.rhs,
        system.jacobians,
        times[k],
        times[k + 1],
        Z.states[k],
        Z.controls[k],
        Z.controls[k + 1],
        cfg,
    )
    offset = (
        res.x_end
        - res.Phi_x @ Z.states[k]
        - res.Phi_u_minus @ Z.controls[k]
        - res.Phi_u_plus @ Z.controls[k + 1]
    )
    return LinearizedSegment(
        A=res.Phi_x,
        B_minus=res.Phi_u_minus,
        B_plus=res.Phi_u_plus,
        offset=offset,
        end_state=res.x_end,
    )


def linearize_all(
    Z: TrajectoryIterate,
    grid: GridConfig,
    system: AugmentedSystem,
    cfg: IntegratorConfig,
    parallel: bool = False,
) -> list:
    """Linearization data for all ``n_nodes - 1`` segments, ordered by index.

    Segments are independent; with ``parallel=True`` they are dispatched to
    worker threads and reassembled in order, giving results identical to the
    serial path.
    """
    if Z.n_nodes != grid.n_nodes:
        raise ConfigurationError("trajectory and grid node counts differ")
    times = grid.times
    ks = range(grid.n_nodes - 1)
    if parallel:
        with ThreadPoolExecutor() as pool:
            segs = list(
                pool.map(lambda k: _linearize_one(k, Z, times, system, cfg), ks)
            )
    else:
        segs = [_linearize_one(k, Z, times, system, cfg) for k in ks]
    return segs
