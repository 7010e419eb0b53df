"""Embedded first-order solver for equality-constrained conic QPs.

Canonical problem:

    minimize   0.5 z'Pz + q'z
    subject to H z = b,   z in K

where K is a product of blocks: free space, the nonnegative orthant, the
second-order cone ``{(t, v): ||v|| <= t}``, and the Euclidean norm ball of a
fixed radius (the cross-section used for control bounds, so no auxiliary
bound variable is needed).

The solver is a projected primal-dual iteration: a gradient step on z
followed by the blockwise projection, and an integral update on the equality
multipliers using the extrapolated primal point. Step sizes come from a power
iteration estimate of ||H|| and the curvature bound of P. The data are
Ruiz-equilibrated before iterating, with a single scalar per norm-cone block
so the blocks stay projectable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .problem import ConfigurationError

Array = np.ndarray

_KINDS = ("free", "nonneg", "soc", "ball")


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    dim: int
    radius: float = math.inf

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown cone kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("cone block dim must be >= 1")
        if self.kind == "soc" and self.dim < 2:
            raise ConfigurationError("soc block needs dim >= 2 (bound plus vector part)")
        if self.kind == "ball" and not self.radius > 0:
            raise ConfigurationError("ball block needs a positive radius")


@dataclass(frozen=True)
class ConeSpec:
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for blk in self.blocks:
            if not isinstance(blk, ConeBlock):
                raise ConfigurationError("ConeSpec blocks must be ConeBlock instances")

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)


def _group_blocks(cones: ConeSpec):
    """Collect block index data for vectorized projection."""
    nonneg_idx = []
    ball_groups = {}  # dim -> (starts, radii)
    soc_groups = {}  # dim -> starts
    start = 0
    for blk in cones.blocks:
        if blk.kind == "nonneg":
            nonneg_idx.append(np.arange(start, start + blk.dim))
        elif blk.kind == "ball":
            ball_groups.setdefault(blk.dim, ([], []))
            ball_groups[blk.dim][0].append(start)
            ball_groups[blk.dim][1].append(blk.radius)
        elif blk.kind == "soc":
            soc_groups.setdefault(blk.dim, []).append(start)
        start += blk.dim
    nonneg = np.concatenate(nonneg_idx) if nonneg_idx else np.empty(0, dtype=int)
    balls = []
    for dim, (starts, radii) in ball_groups.items():
        idx = np.asarray(starts, dtype=int)[:, None] + np.arange(dim)[None, :]
        balls.append((idx, np.asarray(radii)))
    socs = []
    for dim, starts in soc_groups.items():
        idx = np.asarray(starts, dtype=int)[:, None] + np.arange(dim)[None, :]
        socs.append(idx)
    return nonneg, balls, socs


@lru_cache(maxsize=64)
def _projector_for(cones: ConeSpec):
    nonneg, balls, socs = _group_blocks(cones)

    def project(v: Array) -> Array:
        w = np.array(v, dtype=float)
        if nonneg.size:
            w[nonneg] = np.maximum(w[nonneg], 0.0)
        for idx, radii in balls:
            seg = w[idx]
            norms = np.sqrt(np.sum(seg * seg, axis=1))
            scale = np.ones_like(norms)
            over = norms > radii
            scale[over] = radii[over] / norms[over]
            w[idx] = seg * scale[:, None]
        for idx in socs:
            seg = w[idx]
            t = seg[:, 0]
            vec = seg[:, 1:]
            norms = np.sqrt(np.sum(vec * vec, axis=1))
            inside = norms <= t
            below = norms <= -t
            middle = ~(inside | below)
            if np.any(below):
                seg[below] = 0.0
            if np.any(middle):
                coef = 0.5 * (t[middle] + norms[middle])
                safe = np.maximum(norms[middle], np.finfo(float).tiny)
                seg[middle, 0] = coef
                seg[middle, 1:] = vec[middle] * (coef / safe)[:, None]
            w[idx] = seg
        return w

    return project


def project_cone(v: Array, cones: ConeSpec) -> Array:
    """Blockwise Euclidean projection onto the cone product."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != cones.dim:
        raise ConfigurationError("vector length does not match cone dimensions")
    return _projector_for(cones)(v)


def estimate_operator_norm(H, inflate: float = 1.05) -> float:
    """Spectral norm estimate of ``H`` by power iteration on ``H'H``.

    Runs at most 50 iterations or until the estimate changes by less than
    1e-6 relatively, then inflates by the safety factor. Returns 0 for an
    all-zero operator.
    """
    if sp.issparse(H):
        n = H.shape[1]
        HT = H.T.tocsr()
        nnz = H.count_nonzero()
    else:
        H = np.asarray(H, dtype=float)
        n = H.shape[1]
        HT = H.T
        nnz = np.count_nonzero(H)
    if nnz == 0:
        return 0.0
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(50):
        w = H @ v
        s = HT @ w
        nrm = np.linalg.norm(s)
        if nrm == 0.0:
            return 0.0
        new_est = math.sqrt(nrm)
        v = s / nrm
        if est > 0 and abs(new_est - est) <= 1e-6 * est:
            est = new_est
            break
        est = new_est
    return inflate * est


@dataclass
class ConicProblem:
    """Quadratic objective over affine equalities and a cone product.

    ``P`` may be a 1-D array (diagonal) or a dense symmetric matrix.
    """

    P: Array
    q: Array
    H: object  # scipy sparse or ndarray, shape (m, n)
    b: Array
    cones: ConeSpec

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = self.q.shape[0]
        P = self.P
        if not sp.issparse(P):
            P = np.asarray(P, dtype=float)
        if P.ndim == 1:
            if P.shape[0] != n:
                raise ConfigurationError("diagonal P has wrong length")
        elif P.shape != (n, n):
            raise ConfigurationError("P has wrong shape")
        self.P = P
        if self.H.shape[1] != n or self.H.shape[0] != self.b.shape[0]:
            raise ConfigurationError("H/b shapes inconsistent with q")
        if self.cones.dim != n:
            raise ConfigurationError("cone dims do not cover the variable vector")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]


@dataclass
class ConicSolution:
    z: Array
    dual: Array
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str  # "solved" | "max-iters"


def _apply_P(P, z):
    if isinstance(P, np.ndarray) and P.ndim == 1:
        return P * z
    return P @ z


def _max_curvature(P) -> float:
    if isinstance(P, np.ndarray) and P.ndim == 1:
        return float(np.max(P, initial=0.0))
    if sp.issparse(P):
        Pd = P.toarray()
    else:
        Pd = P
    if Pd.size == 0:
        return 0.0
    # dense P only appears with small terminal blocks; exact eig is cheap
    return float(max(np.max(np.linalg.eigvalsh(0.5 * (Pd + Pd.T))), 0.0))


def _block_uniform(scale: Array, cones: ConeSpec) -> Array:
    """Force one scalar per norm-cone block (geometric mean of its entries)."""
    out = scale.copy()
    start = 0
    for blk in cones.blocks:
        if blk.kind in ("soc", "ball"):
            seg = out[start : start + blk.dim]
            g = math.exp(float(np.mean(np.log(seg))))
            out[start : start + blk.dim] = g
        start += blk.dim
    return out


def _ruiz_equilibrate(H, cones: ConeSpec, passes: int = 10):
    m, n = H.shape
    d_row = np.ones(m)
    d_col = np.ones(n)
    nnz = H.count_nonzero() if sp.issparse(H) else np.count_nonzero(H)
    if m == 0 or nnz == 0:
        return d_row, d_col
    Hw = sp.csr_matrix(H, dtype=float, copy=True)
    for _ in range(passes):
        absH = abs(Hw)
        row_max = absH.max(axis=1).toarray().ravel()
        col_max = absH.max(axis=0).toarray().ravel()
        with np.errstate(divide="ignore"):
            r = np.where(row_max > 0, 1.0 / np.sqrt(row_max), 1.0)
            c = np.where(col_max > 0, 1.0 / np.sqrt(col_max), 1.0)
        c = _block_uniform(c, cones)
        Hw = sp.diags(r) @ Hw @ sp.diags(c)
        d_row *= r
        d_col *= c
    return d_row, d_col


def _scale_cones(cones: ConeSpec, d_col: Array) -> ConeSpec:
    blocks = []
    start = 0
    for blk in cones.blocks:
        if blk.kind == "ball":
            s = d_col[start]  # uniform within the block by construction
            blocks.append(ConeBlock("ball", blk.dim, blk.radius / s))
        else:
            blocks.append(blk)
        start += blk.dim
    return ConeSpec(tuple(blocks))


def _residuals(prob: ConicProblem, project, z: Array, eta: Array):
    grad = _apply_P(prob.P, z) + prob.q
    if prob.m:
        r_p = float(np.max(np.abs(prob.H @ z - prob.b))) / (
            1.0 + float(np.max(np.abs(prob.b), initial=0.0))
        )
        grad = grad + prob.H.T @ eta
    else:
        r_p = 0.0
    r_d = float(np.max(np.abs(z - project(z - grad)))) / (
        1.0 + float(np.max(np.abs(prob.q), initial=0.0))
    )
    return r_p, r_d


def solve_conic(
    prob: ConicProblem,
    warm: Optional[tuple] = None,
    tol: float = 1e-7,
    max_iters: int = 50_000,
    omega: float = 100.0,
    extrapolation: float = 1.6,
    check_every: int = 25,
    trace: Optional[list] = None,
) -> ConicSolution:
    """Solve the conic QP; returns the projected (cone-feasible) iterate.

    Termination requires both the equality residual and the fixed-point
    stationarity residual to fall below ``tol`` (each normalized by the data
    magnitude). On ``max_iters`` the best-effort iterate is returned and the
    caller decides how to proceed.
    """
    n, m = prob.n, prob.m
    d_row, d_col = _ruiz_equilibrate(prob.H, prob.cones, passes=10)
    Hs = (sp.diags(d_row) @ sp.csr_matrix(prob.H, dtype=float) @ sp.diags(d_col)).tocsr()
    HsT = Hs.T.tocsr()
    bs = d_row * prob.b
    qs = d_col * prob.q
    if isinstance(prob.P, np.ndarray) and prob.P.ndim == 1:
        Ps = d_col * prob.P * d_col
    else:
        Ps = (d_col[:, None] * np.asarray(prob.P)) * d_col[None, :]
    cones_s = _scale_cones(prob.cones, d_col)
    project_s = _projector_for(cones_s)
    project_u = _projector_for(prob.cones)

    sigma = estimate_operator_norm(Hs) if m else 0.0
    lam = max(_max_curvature(Ps), 1e-12)
    alpha = 2.0 / (lam + math.sqrt(lam * lam + 4.0 * omega * sigma * sigma))
    beta = omega * alpha
    rho = extrapolation

    if warm is not None:
        z = np.asarray(warm[0], dtype=float) / d_col
        eta = (np.asarray(warm[1], dtype=float) / d_row) if m else np.zeros(0)
    else:
        z = np.zeros(n)
        eta = np.zeros(m)
    zeta = project_s(z)
    chi = eta

    best = (np.inf, zeta, chi, 0)
    it = 0
    while it < max_iters:
        it += 1
        grad = _apply_P(Ps, z) + qs
        if m:
            grad += HsT @ eta
        zeta = project_s(z - alpha * grad)
        if m:
            chi = eta + beta * (Hs @ (2.0 * zeta - z) - bs)
        z = z + rho * (zeta - z)
        if m:
            eta = eta + rho * (chi - eta)
        if it % check_every == 0 or it == max_iters:
            z_u = d_col * zeta
            eta_u = d_row * chi if m else chi
            r_p, r_d = _residuals(prob, project_u, z_u, eta_u)
            if trace is not None:
                trace.append((it, r_p, r_d))
            score = max(r_p, r_d)
            if score < best[0]:
                best = (score, zeta.copy(), chi.copy(), it)
            if r_p <= tol and r_d <= tol:
                return ConicSolution(
                    z=z_u,
                    dual=eta_u,
                    primal_residual=r_p,
                    dual_residual=r_d,
                    iterations=it,
                    status="solved",
                )
    _, zeta_b, chi_b, _ = best
    z_u = d_col * zeta_b
    eta_u = d_row * chi_b if m else chi_b
    r_p, r_d = _residuals(prob, project_u, z_u, eta_u)
    return ConicSolution(
        z=z_u,
        dual=eta_u,
        primal_residual=r_p,
        dual_residual=r_d,
        iterations=max_iters,
        status="max-iters",
    )


def dump_problem(prob: ConicProblem, directory: str) -> None:
    """Write the problem as portable dense text matrices for external checks."""
    os.makedirs(directory, exist_ok=True)
    P = prob.P
    if isinstance(P, np.ndarray) and P.ndim == 1:
        P = np.diag(P)
    elif sp.issparse(P):
        P = P.toarray()
    H = prob.H.toarray() if sp.issparse(prob.H) else np.asarray(prob.H)
    np.savetxt(os.path.join(directory, "P.txt"), P)
    np.savetxt(os.path.join(directory, "q.txt"), prob.q)
    np.savetxt(os.path.join(directory, "H.txt"), H)
    np.savetxt(os.path.join(directory, "b.txt"), prob.b)
    with open(os.path.join(directory, "cones.txt"), "w") as fh:
        for blk in prob.cones.blocks:
            if blk.kind == "ball":
                fh.write(f"ball {blk.dim} {blk.radius!r}\n")
            else:
                fh.write(f"{blk.kind} {blk.dim}\n")


def load_cones(path: str) -> ConeSpec:
    """Read back a cone list written by :func:`dump_problem`."""
    blocks = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            kind, dim = parts[0], int(parts[1])
            if kind == "ball":
                blocks.append(ConeBlock(kind, dim, float(parts[2])))
            else:
                blocks.append(ConeBlock(kind, dim))
    return ConeSpec(tuple(blocks))
