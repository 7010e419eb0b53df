"""Shared test systems and independent numerical oracles."""

from __future__ import annotations

import numpy as np

from ctcs_nmpc.problem import (
    AugmentedSystem,
    CostSpec,
    PathConstraints,
    PhysicalSystem,
)


def drag_double_integrator(c_d: float = 0.05) -> PhysicalSystem:
    """Planar point mass: position/velocity states, quadratic drag on velocity."""

    def rhs(t, xi, u):
        v = xi[2:4]
        speed = np.linalg.norm(v)
        return np.concatenate([v, u - c_d * speed * v])

    def jac_state(t, xi, u):
        v = xi[2:4]
        speed = np.linalg.norm(v)
        J = np.zeros((4, 4))
        J[0:2, 2:4] = np.eye(2)
        if speed > 0:
            J[2:4, 2:4] = -c_d * (speed * np.eye(2) + np.outer(v, v) / speed)
        return J

    def jac_input(t, xi, u):
        J = np.zeros((4, 2))
        J[2:4, :] = np.eye(2)
        return J

    return PhysicalSystem(4, 2, rhs, jac_state, jac_input)


def tracking_cost(reference) -> CostSpec:
    """Squared distance of the position block to a moving reference point."""

    def running(t, xi, u):
        d = xi[0:2] - reference(t)
        return float(d @ d)

    def running_grad(t, xi, u):
        d = xi[0:2] - reference(t)
        gx = np.zeros(xi.shape[0])
        gx[0:2] = 2.0 * d
        return gx, np.zeros(u.shape[0])

    return CostSpec(running=running, running_grad=running_grad)


def smooth_active_constraints(offset: float = 0.5, tightening: float = 0.0) -> PathConstraints:
    """One inequality and one equality, smooth and strictly active everywhere.

    The inequality stays well above zero so the clamped-square penalty is
    twice differentiable along any test trajectory, which keeps central
    finite differences honest.
    """

    def ineq(t, xi, u):
        return np.array([offset + 0.1 * np.sin(xi[0] + 0.3 * t) + 0.05 * u[0]])

    def ineq_jac(t, xi, u):
        jx = np.zeros((1, xi.shape[0]))
        jx[0, 0] = 0.1 * np.cos(xi[0] + 0.3 * t)
        ju = np.zeros((1, u.shape[0]))
        ju[0, 0] = 0.05
        return jx, ju

    def eq(t, xi, u):
        return np.array([xi[2] ** 2 + xi[3] ** 2 - 1.0])

    def eq_jac(t, xi, u):
        jx = np.zeros((1, xi.shape[0]))
        jx[0, 2] = 2.0 * xi[2]
        jx[0, 3] = 2.0 * xi[3]
        return jx, np.zeros((1, u.shape[0]))

    return PathConstraints(
        n_ineq=1,
        n_eq=1,
        ineq=ineq,
        ineq_jac=ineq_jac,
        eq=eq,
        eq_jac=eq_jac,
        tightening=tightening,
    )


def rich_augmented_system(c_d: float = 0.05) -> AugmentedSystem:
    """Drag system + moving-reference cost + always-active smooth constraints."""

    def ref(t):
        return np.array([0.2 * t, 1.0 - 0.1 * t])

    return AugmentedSystem(
        system=drag_double_integrator(c_d),
        constraints=smooth_active_constraints(),
        cost=tracking_cost(ref),
    )


def fd_jacobian(fn, x, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a vector-valued function of a vector."""
    f0 = np.asarray(fn(x), dtype=float)
    J = np.zeros((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        J[:, i] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * step)
    return J


def rel_matrix_error(J_ref: np.ndarray, J: np.ndarray) -> float:
    denom = max(1.0, float(np.linalg.norm(J_ref)))
    return float(np.linalg.norm(J - J_ref)) / denom
