"""Particle update rules for unit-time transport along the geometric mixture.

Three interacting particle systems move an ensemble from the reference
density pi_0 to the target pi_1 over t in [0, 1], following the tempered path
pi_t propto pi_0^(1-t) pi_1^t:

* :func:`kfrflow_velocity` -- the deterministic ODE velocity field (KFRFlow),
  obtained from a kernelized weak-form solve for the transport potential;
* :func:`kfrflow_i_step` / :func:`sample_ot_newton` -- the importance-weighted
  discrete-time transport map (KFRFlow-I), a Newton approximation to the
  sample-equivalence condition of kernel-parameterized optimal transport;
* :func:`kfrd_drift` -- the drift of the stochastic variant (KFRD), which adds
  a score term and Brownian noise with matching marginals.

All rules consume the target only through log(pi_1/pi_0) evaluated at the
particles (KFRD additionally needs scores).  The log-ratio vector is pivoted
on its first entry before centering or exponentiation, which realizes in
floating point the algebraic fact that constant shifts of the log ratio --
unknown normalizing constants -- cannot affect any update.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, NumericalStabilityError
from .kernels import KernelSpec, _scaled_parts
from .particles import Ensemble, build_workspace, importance_weights, spd_solve


@dataclass(frozen=True)
class FlowConfig:
    lam: float = 0.0
    eps: float = 0.0
    newton_iters: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.newton_iters < 1:
            raise ValueError(f"newton_iters must be >= 1, got {self.newton_iters}")


def _log_ratio_values(target, positions) -> np.ndarray:
    r = np.atleast_1d(np.asarray(target.log_ratio(positions), dtype=np.float64))
    if not np.isfinite(r).all():
        bad = np.argwhere(~np.isfinite(r)).ravel()
        raise NumericalStabilityError(
            f"non-finite log density ratio for particles {bad.tolist()}"
        )
    return r


def kfrflow_velocity(ensemble: Ensemble, target, spec: KernelSpec, lam: float = 0.0) -> np.ndarray:
    """KFRFlow velocity, one (J, d) row per particle.

    Solves (M + lam I) f = (1/J) sum_k c_k K_basis(X_k) with c the centered
    log ratios, then evaluates v_j = Jac(K_basis)(X_j)^T f.
    """
    ws = build_workspace(ensemble, spec)
    J = ws.Kmat.shape[0]
    r = _log_ratio_values(target, ensemble.positions)
    rp = r - r[0]
    c = rp - rp.mean()
    rhs = (c @ ws.Kmat) / J
    f = spd_solve(ws.M, lam, rhs)
    return (f @ ws.basis).reshape(ensemble.positions.shape)


def kfrflow_i_step(
    ensemble: Ensemble, target, spec: KernelSpec, dt: float, lam: float = 0.0
) -> Ensemble:
    """One KFRFlow-I update: the single-Newton transport map from t to t+dt.

    Moves each particle by Jac(K_basis)(X_j)^T s* where
    s* = -(M + lam I)^{-1} sum_k (1/J - w_k) K_basis(X_k) and w are the
    self-normalized importance weights with exponent dt.
    """
    return sample_ot_newton(ensemble, target, spec, dt, lam, iters=1)


def sample_ot_newton(
    ensemble: Ensemble, target, spec: KernelSpec, dt: float, lam: float = 0.0, iters: int = 1
) -> Ensemble:
    """Newton iteration for the sample-equivalence condition G(s) = b.

    G(s) is the mean of the kernel basis over the displaced particles
    X_j + Jac(K_basis)(X_j)^T s; b is the importance-weighted kernel mean.
    ``iters=1`` is exactly :func:`kfrflow_i_step`.  Basis centers stay at the
    original particle positions throughout; only evaluation points move.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if ensemble.t + dt > 1.0 + 1e-12:
        raise ValueError(
            f"step beyond unit time: t={ensemble.t} + dt={dt} exceeds 1"
        )
    x = ensemble.positions
    J = x.shape[0]
    ws = build_workspace(ensemble, spec)
    w = importance_weights(ensemble, target, dt)
    if w.max() > 0.5:
        warnings.warn(
            f"importance weights degenerate: max weight {w.max():.3f} > 0.5",
            RuntimeWarning,
            stacklevel=2,
        )
    uniform = np.full(J, 1.0 / J)
    b = w @ ws.Kmat
    ws.b = b

    def transported(s):
        return x + (s @ ws.basis).reshape(x.shape)

    def residual_parts(s):
        ky, _, basis_y = _scaled_parts(transported(s), x, ws.h)
        return uniform @ ky - b, basis_y

    s = np.zeros(J)
    # at s = 0 the transported ensemble is the original one, so the residual
    # parts are exactly the workspace quantities
    resid, basis_y = uniform @ ws.Kmat - b, ws.basis
    norm = float(np.linalg.norm(resid))
    best_s, best_norm = s, norm
    grew = 0
    for it in range(iters):
        jac = basis_y @ ws.basis.T / J
        if it == 0:
            # at s = 0 the Jacobian is exactly M: symmetric definite solve
            delta = spd_solve(jac, lam, resid)
        else:
            if lam > 0:
                jac = jac + lam * np.eye(J)
            try:
                delta = np.linalg.solve(jac, resid)
            except np.linalg.LinAlgError as err:
                raise NumericalStabilityError(
                    "singular Jacobian in transport Newton iteration; "
                    "increase the regularization lambda"
                ) from err
        s = s - delta
        if iters == 1:
            # single Newton step is the definition of the transport map;
            # the divergence guard cannot trigger, skip the residual pass
            break
        resid, basis_y = residual_parts(s)
        prev_norm, norm = norm, float(np.linalg.norm(resid))
        if norm < best_norm:
            best_norm, best_s = norm, s
        grew = grew + 1 if norm > prev_norm else 0
        if grew >= 2:
            warnings.warn(
                "transport Newton iteration diverging; keeping best iterate",
                RuntimeWarning,
                stacklevel=2,
            )
            s = best_s
            break

    return Ensemble(transported(s), ensemble.t + dt)


def tempered_score(target, x, t: float) -> np.ndarray:
    """Score of the geometric mixture at time t.

    grad log pi_t = (1-t) grad log pi_0 + t grad log pi_1; requires both
    scores on the target.
    """
    if not target.has_scores:
        raise CapabilityError(
            f"target {target.name!r} does not provide scores; "
            "KFRD and tempered diagnostics require them"
        )
    return (1.0 - t) * target.score_reference(x) + t * target.score_target(x)


def kfrd_drift(
    ensemble: Ensemble, target, spec: KernelSpec, cfg: FlowConfig, t: float
) -> tuple:
    """Drift rows and diffusion coefficient of the KFRD SDE.

    drift_j = v_j + eps * grad log pi_t(X_j), diffusion sqrt(2 eps).  With
    eps = 0 this is exactly the KFRFlow ODE.
    """
    v = kfrflow_velocity(ensemble, target, spec, cfg.lam)
    if cfg.eps > 0:
        v = v + cfg.eps * tempered_score(target, ensemble.positions, t)
    return v, float(np.sqrt(2.0 * cfg.eps))
