"""Sample-quality diagnostics and brute-force oracles.

Kernel Stein discrepancy (KSD) uses the Langevin Stein kernel built on the
IMQ base kernel with fixed bandwidth (default h = 1):

    k0(x, y) = trace grad_x grad_y K
             + grad_x K . s(y) + grad_y K . s(x) + K s(x).s(y)

with, for u = x - y and q = (1 + ||u||^2/h^2)^(-1/2),

    grad_x K = -u/h^2 q^3,  grad_y K = +u/h^2 q^3,
    trace grad_x grad_y K = (d/h^2) q^3 - (3 ||u||^2/h^4) q^5.

KSD consumes only the score of the distribution under test, so it is
insensitive to normalizing constants.  The V-statistic is the default; the
U-statistic (diagonal removed) is available via the config.

:func:`velocity_oracle` is a deliberately naive transcription of the KFRFlow
update (explicit loops, dense matrix inverse) used to cross-check the
vectorized implementation; it shares no assembly code with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError
from .flows import tempered_score
from .kernels import KernelSpec, median_bandwidth


@dataclass(frozen=True)
class KsdConfig:
    h: float = 1.0
    estimator: str = "v"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("KSD bandwidth must be > 0")
        if self.estimator not in ("v", "u"):
            raise ValueError(f"estimator must be 'v' or 'u', got {self.estimator!r}")


def stein_kernel_matrix(x: np.ndarray, scores: np.ndarray, h: float) -> np.ndarray:
    """The J x J matrix k0(x_i, x_j) of the IMQ Langevin Stein kernel."""
    x = np.asarray(x, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    d = x.shape[1]
    u = x[:, None, :] - x[None, :, :]
    d2 = np.sum(u**2, axis=-1)
    q = (1.0 + d2 / h**2) ** -0.5
    q3 = q**3
    q5 = q3 * q * q
    us_i = np.einsum("ijk,ik->ij", u, s)
    us_j = np.einsum("ijk,jk->ij", u, s)
    return (
        (d / h**2) * q3
        - (3.0 / h**4) * d2 * q5
        + (us_i - us_j) * q3 / h**2
        + q * (s @ s.T)
    )


def ksd(samples, score_fn, cfg: KsdConfig | None = None) -> float:
    """Kernel Stein discrepancy between samples and the distribution with
    score ``score_fn``."""
    if score_fn is None:
        raise CapabilityError("KSD requires the score of the tested distribution")
    cfg = cfg or KsdConfig()
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    scores = np.atleast_2d(np.asarray(score_fn(x), dtype=np.float64))
    if scores.shape != x.shape:
        raise ValueError(f"score shape {scores.shape} does not match samples {x.shape}")
    J = x.shape[0]
    k0 = stein_kernel_matrix(x, scores, cfg.h)
    if cfg.estimator == "v":
        total = float(k0.sum()) / J**2
        if total < -1e-10:
            raise AssertionError(
                f"V-statistic {total} violates positive semidefiniteness"
            )
    else:
        if J < 2:
            raise ValueError("U-statistic needs at least two samples")
        total = float(k0.sum() - np.trace(k0)) / (J * (J - 1))
    return float(np.sqrt(max(total, 0.0)))


def moments(ensemble) -> tuple:
    """Sample mean and unbiased sample covariance of an ensemble."""
    x = np.asarray(getattr(ensemble, "positions", ensemble), dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("covariance undefined for fewer than two particles")
    mean = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    return mean, cov


def tempered_ksd_trace(snapshots, target, cfg: KsdConfig | None = None) -> list:
    """KSD of each snapshot against the geometric mixture at its time.

    ``snapshots`` is an iterable of (t, positions) pairs or of Ensembles.
    """
    if not target.has_scores:
        raise CapabilityError(
            f"target {target.name!r} does not provide scores for tempered KSD"
        )
    out = []
    for snap in snapshots:
        if hasattr(snap, "positions"):
            t, x = snap.t, snap.positions
        else:
            t, x = snap
        out.append((float(t), ksd(x, lambda y: tempered_score(target, y, t), cfg)))
    return out


def velocity_oracle(ensemble, target, spec: KernelSpec, lam: float = 0.0) -> np.ndarray:
    """Triple-loop KFRFlow velocity with an explicit dense inverse (test oracle)."""

    def k_scalar(a, b, h):
        return (1.0 + np.sum((a - b) ** 2) / h**2) ** -0.5

    def grad1_scalar(a, b, h):
        q = k_scalar(a, b, h)
        return -(a - b) / h**2 * q**3

    x = np.asarray(getattr(ensemble, "positions", ensemble), dtype=np.float64)
    J, d = x.shape
    h = spec.bandwidth if spec.bandwidth is not None else median_bandwidth(x, spec.h_floor)
    r = np.atleast_1d(np.asarray(target.log_ratio(x), dtype=np.float64))
    c = r - r.mean()

    M = np.zeros((J, J))
    for ell in range(J):
        for m in range(J):
            acc = 0.0
            for i in range(J):
                acc += np.dot(grad1_scalar(x[i], x[ell], h), grad1_scalar(x[i], x[m], h))
            M[ell, m] = acc / J
    rhs = np.zeros(J)
    for ell in range(J):
        acc = 0.0
        for k in range(J):
            acc += c[k] * k_scalar(x[k], x[ell], h)
        rhs[ell] = acc / J
    f = np.linalg.inv(M + lam * np.eye(J)) @ rhs
    v = np.zeros((J, d))
    for j in range(J):
        for ell in range(J):
            v[j] += f[ell] * grad1_scalar(x[j], x[ell], h)
    return v
