"""Ensemble state and the per-step kernel workspace.

An :class:`Ensemble` is an immutable snapshot of J particle positions in R^d
plus the pseudo-time t of the transport.  A :class:`FlowWorkspace` gathers the
derived quantities every update rule needs: the kernel matrix, the gradient
tensor of the kernel basis, the Gram-type coupling matrix

    M[l, m] = (1/J) sum_i < grad_1 K(X_i, X_l), grad_1 K(X_i, X_m) >,

and the unweighted kernel mean.  M is symmetric positive semidefinite; a
Tikhonov term lam * I makes it definite for the solves, which use a
symmetric-definite (Cholesky) factorization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NumericalStabilityError
from .kernels import (
    KernelSpec,
    _basis_major_grads,
    _median_bw_from_sq,
    _pair_diff_sq,
    _q_from_sq,
)


@dataclass(frozen=True)
class Ensemble:
    positions: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError(f"positions must be a (J, d) array, got {pos.shape}")
        if not np.isfinite(pos).all():
            bad = np.argwhere(~np.isfinite(pos).all(axis=1)).ravel()
            raise ValueError(f"non-finite coordinates for particles {bad.tolist()}")
        t = float(self.t)
        if not np.isfinite(t) or t < -1e-15:
            raise ValueError(f"time must be finite and >= 0, got {t}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "t", t)

    @property
    def J(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass
class FlowWorkspace:
    """Per-step derived quantities, all computed at one shared bandwidth.

    ``grads[i, l, :]`` is grad_1 K(X_i, X_l); ``basis`` is the same tensor
    reshaped to (J, J*d) with the basis index first, so M = basis basis^T / J.
    ``a`` is the mean of the kernel basis over the unweighted ensemble; ``b``
    (the weighted counterpart) is filled in by :func:`kernel_means` once
    importance weights are known.
    """

    h: float
    Kmat: np.ndarray
    grads: np.ndarray
    basis: np.ndarray = field(repr=False)
    M: np.ndarray
    a: np.ndarray
    b: Optional[np.ndarray] = None


def build_workspace(ensemble, spec: KernelSpec) -> FlowWorkspace:
    x = ensemble.positions if isinstance(ensemble, Ensemble) else np.asarray(ensemble)
    J = x.shape[0]
    diff, d2 = _pair_diff_sq(x, x)
    h = spec.bandwidth if spec.bandwidth is not None else _median_bw_from_sq(d2, spec.h_floor)
    kmat = _q_from_sq(d2, h)
    basis3 = _basis_major_grads(diff, kmat, h)
    basis = basis3.reshape(J, -1)
    return FlowWorkspace(
        h=float(h),
        Kmat=kmat,
        grads=basis3.transpose(1, 0, 2),
        basis=basis,
        M=basis @ basis.T / J,
        a=kmat @ np.full(J, 1.0 / J),
    )


def assemble_M(ensemble, spec: KernelSpec) -> np.ndarray:
    """The J x J coupling matrix M at ``spec``'s bandwidth policy."""
    return build_workspace(ensemble, spec).M


def regularize(M: np.ndarray, lam: float) -> np.ndarray:
    """Tikhonov regularization M + lam * I."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    out = np.array(M, dtype=np.float64, copy=True)
    if lam > 0:
        out[np.diag_indices_from(out)] += lam
    return out


def solve_M(Mreg: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve Mreg x = rhs by Cholesky factorization (Mreg must be SPD)."""
    try:
        chol = np.linalg.cholesky(Mreg)
    except np.linalg.LinAlgError as err:
        raise NumericalStabilityError(
            "coupling matrix is not positive definite; increase the "
            "regularization lambda"
        ) from err
    y = solve_triangular(chol, rhs, lower=True)
    return solve_triangular(chol, y, lower=True, trans=1)


def spd_solve(M: np.ndarray, lam: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (M + lam I) x = rhs with a one-shot fallback regularization.

    If factorization fails at the user's lam, retries once with
    lam' = max(lam, 1e-8 * trace(M)/J) and warns; a second failure raises
    :class:`NumericalStabilityError`.
    """
    try:
        return solve_M(regularize(M, lam), rhs)
    except NumericalStabilityError:
        fallback = max(lam, 1e-8 * float(np.trace(M)) / M.shape[0])
        if fallback <= lam:
            raise
        warnings.warn(
            f"coupling-matrix solve failed at lambda={lam:g}; "
            f"retrying with lambda={fallback:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return solve_M(regularize(M, fallback), rhs)


def importance_weights(ensemble, target, dt: float) -> np.ndarray:
    """Self-normalized importance weights w_j proportional to (pi_1/pi_0)^dt.

    Computed in the log domain with max-subtraction, so no exponent can
    overflow.  The log-ratio vector is pivoted on its first element before
    exponentiation: algebraically a no-op, this makes the weights insensitive
    to the absolute level of log(pi_1/pi_0), which carries no information.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    x = ensemble.positions if isinstance(ensemble, Ensemble) else np.asarray(ensemble)
    r = np.atleast_1d(np.asarray(target.log_ratio(x), dtype=np.float64))
    if not np.isfinite(r).all():
        bad = np.argwhere(~np.isfinite(r)).ravel()
        raise NumericalStabilityError(
            f"non-finite log density ratio for particles {bad.tolist()}"
        )
    z = dt * (r - r[0])
    e = np.exp(z - z.max())
    return e / e.sum()


def kernel_means(workspace: FlowWorkspace, weights: np.ndarray) -> tuple:
    """Unweighted and weighted means (a, b) of the kernel basis.

    a = Kmat @ (1/J, ..., 1/J)^T and b = Kmat @ weights; fills ``workspace.b``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (workspace.Kmat.shape[0],):
        raise ValueError("weights must be a length-J vector")
    b = workspace.Kmat @ weights
    workspace.b = b
    return workspace.a, b
