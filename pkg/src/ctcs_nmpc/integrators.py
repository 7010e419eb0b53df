"""Fixed-step integration of the augmented dynamics under interpolated controls.

Two propagation flavors share one RK4 core: a plain state propagation used by
the exact discretization, and a stacked propagation that carries the
variational sensitivity matrices alongside the state. Because both paths run
the identical elementwise arithmetic on the state coordinates, the state
endpoint of the stacked propagation is bit-for-bit equal to the plain one.

A fixed step count keeps cost per closed-loop run deterministic; adaptive
stepping is deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ConfigurationError

Array = np.ndarray


class PropagationDivergedError(RuntimeError):
    """Non-finite state encountered during integration."""

    def __init__(self, time: float):
        super().__init__(f"propagation diverged at t={time!r}")
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    """Step counts: ``substeps_per_interval`` for discretization-grade
    propagation, ``dense_substeps`` for audit/plant propagation."""

    substeps_per_interval: int = 10
    dense_substeps: int = 20

    def __post_init__(self):
        if self.substeps_per_interval < 1 or self.dense_substeps < 1:
            raise ConfigurationError("integrator substep counts must be >= 1")


def foh_interp(t: float, t0: float, t1: float, u0: Array, u1: Array) -> Array:
    """Piecewise-linear control interpolation on ``[t0, t1]``."""
    span = t1 - t0
    return ((t1 - t) / span) * u0 + ((t - t0) / span) * u1


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate_segment(
    rhs,
    t0: float,
    t1: float,
    x0: Array,
    u0: Array,
    u1: Array,
    cfg: IntegratorConfig,
) -> Array:
    """Integrate ``rhs(t, x, u(t))`` over ``[t0, t1]`` with interpolated control."""
    if not t1 > t0:
        raise ConfigurationError("segment must have positive length")
    steps = cfg.substeps_per_interval
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=float)

    def f(t, z):
        return rhs(t, z, foh_interp(t, t0, t1, u0, u1))

    for i in range(steps):
        t = t0 + i * h
        x = _rk4_step(f, t, x, h)
        if not np.all(np.isfinite(x)):
            raise PropagationDivergedError(t + h)
    return x


@dataclass(frozen=True)
class SensitivityResult:
    """Endpoint state plus the discrete input/state maps of one sub-interval."""

    x_end: Array
    Phi_x: Array
    Phi_u_minus: Array
    Phi_u_plus: Array


def propagate_with_sensitivities(
    rhs,
    jacobians,
    t0: float,
    t1: float,
    x0: Array,
    u0: Array,
    u1: Array,
    cfg: IntegratorConfig,
) -> SensitivityResult:
    """Propagate the state together with its variational sensitivities.

    The sensitivity matrices start at identity / zero and evolve under the
    jacobians evaluated along the propagated trajectory, with the input
    sensitivities forced by the interpolation weights of the segment's two
    control nodes. The state block of the stacked integration repeats the
    exact arithmetic of :func:`propagate_segment`, so ``x_end`` matches it
    bit-for-bit.
    """
    if not t1 > t0:
        raise ConfigurationError("segment must have positive length")
    n_x = x0.shape[0]
    n_u = u0.shape[0]
    steps = cfg.substeps_per_interval
    h = (t1 - t0) / steps
    span = t1 - t0

    i_x = n_x
    i_px = i_x + n_x * n_x
    i_pm = i_px + n_x * n_u
    i_pp = i_pm + n_x * n_u

    def f(t, yv):
        x = yv[:i_x]
        u = foh_interp(t, t0, t1, u0, u1)
        dx = rhs(t, x, u)
        A, B = jacobians(t, x, u)
        phi_x = yv[i_x:i_px].reshape(n_x, n_x)
        phi_m = yv[i_px:i_pm].reshape(n_x, n_u)
        phi_p = yv[i_pm:i_pp].reshape(n_x, n_u)
        w_minus = (t1 - t) / span
        w_plus = (t - t0) / span
        d_phi_x = A @ phi_x
        d_phi_m = A @ phi_m + B * w_minus
        d_phi_p = A @ phi_p + B * w_plus
        return np.concatenate(
            [dx, d_phi_x.ravel(), d_phi_m.ravel(), d_phi_p.ravel()]
        )

    y = np.concatenate(
        [
            np.array(x0, dtype=float),
            np.eye(n_x).ravel(),
            np.zeros(n_x * n_u),
            np.zeros(n_x * n_u),
        ]
    )
    for i in range(steps):
        t = t0 + i * h
        y = _rk4_step(f, t, y, h)
        if not np.all(np.isfinite(y[:i_x])):
            raise PropagationDivergedError(t + h)
    return SensitivityResult(
        x_end=y[:i_x],
        Phi_x=y[i_x:i_px].reshape(n_x, n_x),
        Phi_u_minus=y[i_px:i_pm].reshape(n_x, n_u),
        Phi_u_plus=y[i_pm:i_pp].reshape(n_x, n_u),
    )


def propagate_dense(
    rhs,
    times: Array,
    x0: Array,
    controls: Array,
    cfg: IntegratorConfig,
) -> tuple:
    """Single-shooting propagation over a node grid with dense sampling.

    ``times`` are the node instants and ``controls`` the matching node inputs
    (interpolated linearly inside each interval). Returns
    ``(sample_times, sample_states)`` with ``dense_substeps`` samples per
    interval plus the initial point. The final violation-integrator value is
    the continuous-time audit signal for the whole span.
    """
    times = np.asarray(times, dtype=float)
    controls = np.asarray(controls, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise ConfigurationError("need at least two grid nodes")
    if controls.shape[0] != times.shape[0]:
        raise ConfigurationError("controls must align with grid nodes")
    n_int = times.shape[0] - 1
    sub = cfg.dense_substeps
    n_samples = n_int * sub + 1
    ts = np.empty(n_samples)
    xs = np.empty((n_samples, x0.shape[0]))
    ts[0] = times[0]
    xs[0] = np.array(x0, dtype=float)
    x = xs[0].copy()
    idx = 1
    for k in range(n_int):
        t0, t1 = times[k], times[k + 1]
        u0, u1 = controls[k], controls[k + 1]
        h = (t1 - t0) / sub

        def f(t, z):
            return rhs(t, z, foh_interp(t, t0, t1, u0, u1))

        for i in range(sub):
            t = t0 + i * h
            x = _rk4_step(f, t, x, h)
            if not np.all(np.isfinite(x)):
                raise PropagationDivergedError(t + h)
            ts[idx] = t1 if i == sub - 1 else t + h
            xs[idx] = x
            idx += 1
    return ts, xs
