"""Continuous-time problem definition and state augmentation.

A controlled ODE, its path constraints, and its running cost are bundled into
a single augmented ODE. The augmented state appends two scalar integrators to
the physical state: ``l`` accumulates the running cost and ``y`` accumulates
the squared constraint violation. Everything downstream (discretization, the
convex subproblems, the closed loop) operates on the augmented system, so
inter-sample constraint violation and the running-cost integral are both
captured by node values of the augmented state.

All types are immutable after construction and every operation is a pure
function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class ConfigurationError(ValueError):
    """Inconsistent dimensions or invalid options in problem data."""


def _as_float_vec(x, name: str) -> Array:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ConfigurationError(f"{name} must be a 1-D vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class PhysicalSystem:
    """Controlled ODE ``d(state)/dt = rhs(t, state, u)`` with analytic jacobians.

    ``jac_state`` and ``jac_input`` must return arrays of shape
    ``(n_state, n_state)`` and ``(n_state, n_input)``.
    """

    n_state: int
    n_input: int
    rhs: Callable[[float, Array, Array], Array]
    jac_state: Callable[[float, Array, Array], Array]
    jac_input: Callable[[float, Array, Array], Array]

    def __post_init__(self):
        if self.n_state < 1 or self.n_input < 1:
            raise ConfigurationError("n_state and n_input must be positive")


def _zero_vec_fn(n):
    def fn(t, xi, u):
        return np.zeros(n)

    return fn


@dataclass(frozen=True)
class PathConstraints:
    """Inequality constraints ``ineq(t, state, u) <= 0`` and equalities ``eq(...) = 0``.

    ``tightening`` shrinks the inequalities inside the violation integrator
    (they are penalized as ``max(0, ineq + tightening)^2``); reported
    violations always use the untightened values.
    """

    n_ineq: int = 0
    n_eq: int = 0
    ineq: Optional[Callable[[float, Array, Array], Array]] = None
    # jacobian callables return a pair (d/d_state, d/d_input)
    ineq_jac: Optional[Callable[[float, Array, Array], tuple]] = None
    eq: Optional[Callable[[float, Array, Array], Array]] = None
    eq_jac: Optional[Callable[[float, Array, Array], tuple]] = None
    tightening: float = 0.0

    def __post_init__(self):
        if self.n_ineq < 0 or self.n_eq < 0:
            raise ConfigurationError("constraint counts must be nonnegative")
        if self.tightening < 0:
            raise ConfigurationError("tightening must be nonnegative")
        if self.n_ineq > 0 and (self.ineq is None or self.ineq_jac is None):
            raise ConfigurationError("n_ineq > 0 requires ineq and ineq_jac")
        if self.n_eq > 0 and (self.eq is None or self.eq_jac is None):
            raise ConfigurationError("n_eq > 0 requires eq and eq_jac")

    @staticmethod
    def none() -> "PathConstraints":
        return PathConstraints()


@dataclass(frozen=True)
class TerminalQuadratic:
    """Convex quadratic terminal cost ``0.5 s'Qs + c's`` on the physical state.

    Passed through to the convex subproblem unlinearized.
    """

    Q: Array
    c: Array

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or c.shape != (Q.shape[0],):
            raise ConfigurationError("terminal quadratic shapes inconsistent")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)

    def value(self, xi: Array) -> float:
        return 0.5 * float(xi @ self.Q @ xi) + float(self.c @ xi)

    def grad(self, xi: Array) -> Array:
        return self.Q @ xi + self.c


@dataclass(frozen=True)
class CostSpec:
    """Running cost with gradients, plus optional terminal cost/constraint.

    ``running_grad`` returns ``(d/d_state, d/d_input)``. A convex terminal
    cost may be supplied as a ``TerminalQuadratic`` so the subproblem keeps it
    exactly; otherwise ``terminal_cost``/``terminal_cost_grad`` are linearized
    at each iterate. ``terminal_constraint`` (if present) maps the physical
    state to a vector required ``<= 0`` at the horizon end.
    """

    running: Callable[[float, Array, Array], float]
    running_grad: Callable[[float, Array, Array], tuple]
    terminal_cost: Optional[Callable[[Array], float]] = None
    terminal_cost_grad: Optional[Callable[[Array], Array]] = None
    terminal_quadratic: Optional[TerminalQuadratic] = None
    n_terminal_constraints: int = 0
    terminal_constraint: Optional[Callable[[Array], Array]] = None
    terminal_constraint_jac: Optional[Callable[[Array], Array]] = None

    def __post_init__(self):
        if self.n_terminal_constraints > 0 and (
            self.terminal_constraint is None or self.terminal_constraint_jac is None
        ):
            raise ConfigurationError(
                "n_terminal_constraints > 0 requires terminal_constraint and its jacobian"
            )
        if self.terminal_cost is not None and self.terminal_cost_grad is None:
            if self.terminal_quadratic is None:
                raise ConfigurationError("terminal_cost requires terminal_cost_grad")

    @staticmethod
    def zero() -> "CostSpec":
        def zero_running(t, xi, u):
            return 0.0

        def zero_grad(t, xi, u):
            return np.zeros(xi.shape[0]), np.zeros(u.shape[0])

        return CostSpec(running=zero_running, running_grad=zero_grad)


def augmented_rhs(
    system: PhysicalSystem,
    constraints: PathConstraints,
    cost: CostSpec,
    t: float,
    x: Array,
    u: Array,
    include_violation: bool = True,
) -> Array:
    """Time derivative of the augmented state ``(state, l[, y])``.

    The rate of ``l`` is the running cost; the rate of ``y`` is the sum of
    squared tightened inequality exceedances plus squared equality residuals,
    so it is nonnegative for every argument.
    """
    n = system.n_state
    n_x = n + 2 if include_violation else n + 1
    if x.shape[0] != n_x:
        raise ConfigurationError(f"state has length {x.shape[0]}, expected {n_x}")
    if u.shape[0] != system.n_input:
        raise ConfigurationError(
            f"input has length {u.shape[0]}, expected {system.n_input}"
        )
    xi = x[:n]
    deriv = system.rhs(t, xi, u)
    if deriv.shape[0] != n:
        raise ConfigurationError("system rhs returned wrong dimension")
    l_rate = cost.running(t, xi, u)
    if not include_violation:
        return np.concatenate([deriv, [l_rate]])
    y_rate = 0.0
    if constraints.n_ineq:
        excess = np.maximum(constraints.ineq(t, xi, u) + constraints.tightening, 0.0)
        y_rate += float(excess @ excess)
    if constraints.n_eq:
        resid = constraints.eq(t, xi, u)
        y_rate += float(resid @ resid)
    return np.concatenate([deriv, [l_rate, y_rate]])


def augmented_jacobians(
    system: PhysicalSystem,
    constraints: PathConstraints,
    cost: CostSpec,
    t: float,
    x: Array,
    u: Array,
    include_violation: bool = True,
) -> tuple:
    """Jacobians of the augmented rhs w.r.t. state and input.

    The augmented rhs does not depend on ``l`` or ``y``, so the corresponding
    columns of the state jacobian are zero. The ``y`` row uses the chain rule
    of ``max(0, .)^2``, which has a continuous derivative across the boundary.
    """
    n = system.n_state
    n_u = system.n_input
    n_x = n + 2 if include_violation else n + 1
    if x.shape[0] != n_x or u.shape[0] != n_u:
        raise ConfigurationError("state or input dimension mismatch")
    xi = x[:n]
    A = np.zeros((n_x, n_x))
    B = np.zeros((n_x, n_u))
    A[:n, :n] = system.jac_state(t, xi, u)
    B[:n, :] = system.jac_input(t, xi, u)
    lg_x, lg_u = cost.running_grad(t, xi, u)
    A[n, :n] = lg_x
    B[n, :] = lg_u
    if include_violation:
        row_x = np.zeros(n)
        row_u = np.zeros(n_u)
        if constraints.n_ineq:
            excess = np.maximum(
                constraints.ineq(t, xi, u) + constraints.tightening, 0.0
            )
            jx, ju = constraints.ineq_jac(t, xi, u)
            row_x += 2.0 * excess @ jx
            row_u += 2.0 * excess @ ju
        if constraints.n_eq:
            resid = constraints.eq(t, xi, u)
            jx, ju = constraints.eq_jac(t, xi, u)
            row_x += 2.0 * resid @ jx
            row_u += 2.0 * resid @ ju
        A[n + 1, :n] = row_x
        B[n + 1, :] = row_u
    return A, B


def initial_augmented_state(xi_c: Array, include_violation: bool = True) -> Array:
    """Augmented state at the start of a horizon: integrators reset to zero."""
    xi = _as_float_vec(xi_c, "initial state")
    if not np.all(np.isfinite(xi)):
        raise ConfigurationError("initial state must be finite")
    extra = 2 if include_violation else 1
    return np.concatenate([xi, np.zeros(extra)])


@dataclass(frozen=True)
class AugmentedSystem:
    """Bundle of physical system, constraints, and cost as one augmented ODE.

    ``include_violation=False`` drops the ``y`` integrator (used by the
    node-point baseline, which imposes constraints at grid nodes instead).
    """

    system: PhysicalSystem
    constraints: PathConstraints = field(default_factory=PathConstraints.none)
    cost: CostSpec = field(default_factory=CostSpec.zero)
    include_violation: bool = True

    @property
    def n_physical(self) -> int:
        return self.system.n_state

    @property
    def n_x(self) -> int:
        return self.system.n_state + (2 if self.include_violation else 1)

    @property
    def n_u(self) -> int:
        return self.system.n_input

    @property
    def cost_index(self) -> int:
        return self.system.n_state

    @property
    def violation_index(self) -> Optional[int]:
        return self.system.n_state + 1 if self.include_violation else None

    def cost_row(self) -> Array:
        row = np.zeros(self.n_x)
        row[self.cost_index] = 1.0
        return row

    def violation_row(self) -> Array:
        if not self.include_violation:
            raise ConfigurationError("system has no violation integrator")
        row = np.zeros(self.n_x)
        row[self.violation_index] = 1.0
        return row

    def rhs(self, t: float, x: Array, u: Array) -> Array:
        return augmented_rhs(
            self.system, self.constraints, self.cost, t, x, u, self.include_violation
        )

    def jacobians(self, t: float, x: Array, u: Array) -> tuple:
        return augmented_jacobians(
            self.system, self.constraints, self.cost, t, x, u, self.include_violation
        )

    def initial_state(self, xi_c: Array) -> Array:
        return initial_augmented_state(xi_c, self.include_violation)
