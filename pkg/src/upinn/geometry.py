"""Latent-space geometry: embedding, induced metric and its determinant.

The body output ``H(x)`` (``d`` components, ``n`` inputs) is viewed as a
hypersurface ``Omega = (x, H(x))``. With ``A[mu, i] = dH_i/dx^mu`` the
induced metric is ``g = I_n + A A^T`` and ``det g >= 1`` with equality only
when ``A = 0``.

Batched functions here take the Jacobian as a list of ``n`` arrays of shape
``(batch, d)``, one per input direction (the tangent slices of a jet), and
work on tape values or plain arrays alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSample:
    point: np.ndarray
    jacobian: np.ndarray  # (n, d)
    metric: np.ndarray  # (n, n)
    det: float
    sqrt_det: float


def embed(x, h) -> np.ndarray:
    """Hypersurface coordinates: inputs followed by latent values."""
    return np.concatenate([np.atleast_1d(np.asarray(x, float)), np.asarray(h, float).ravel()])


def induced_metric(jacobian) -> np.ndarray:
    a = np.atleast_2d(np.asarray(jacobian, dtype=np.float64))
    if not np.all(np.isfinite(a)):
        raise MetricError("jacobian has non-finite entries")
    return np.eye(a.shape[0]) + a @ a.T


def _det_small(m):
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    if n == 2:
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def metric_det(metric) -> float:
    """Determinant of a symmetric positive-definite metric.

    Closed form for ``n <= 3``, Cholesky (an LU variant for SPD input) above.
    """
    m = np.atleast_2d(np.asarray(metric, dtype=np.float64))
    n = m.shape[0]
    if m.shape != (n, n) or not np.allclose(m, m.T, rtol=1e-12, atol=1e-12):
        raise MetricError("metric must be a symmetric square matrix")
    if n <= 3:
        minors = [_det_small(m[:k, :k]) for k in range(1, n + 1)]
        if any(v <= 0 for v in minors):
            raise MetricError("metric is not positive definite")
        return float(minors[-1])
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric is not positive definite") from exc
    return float(np.prod(np.diag(chol)) ** 2)


def metric_sample(point, jacobian) -> MetricSample:
    a = np.atleast_2d(np.asarray(jacobian, dtype=np.float64))
    g = induced_metric(a)
    det = metric_det(g)
    return MetricSample(np.asarray(point, float), a, g, det, float(np.sqrt(det)))


def closed_form_det_2x2(jacobian) -> float:
    """``1 + J^2 + A^2`` for two inputs and a two-dimensional latent space.

    ``J^2`` is the squared Frobenius norm of the Jacobian and ``A`` its
    determinant.
    """
    a = np.asarray(jacobian, dtype=np.float64)
    if a.shape != (2, 2):
        raise ValueError("closed form needs a 2x2 jacobian")
    frob = float(np.sum(a * a))
    minor = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return 1.0 + frob + minor * minor


# ---------------------------------------------------------------- batched, tape-aware


def _as_rows(jac):
    if isinstance(jac, np.ndarray) and jac.ndim == 3:
        # (batch, n, d) -> list of n (batch, d)
        return [jac[:, mu, :] for mu in range(jac.shape[1])]
    return list(jac)


def metric_entries(jac):
    """Batched ``g[mu][nu]`` (each of shape ``(batch,)``)."""
    rows = _as_rows(jac)
    n = len(rows)
    g = [[None] * n for _ in range(n)]
    for mu in range(n):
        for nu in range(mu, n):
            s = ad.sum(ad.mul(rows[mu], rows[nu]), axis=-1)
            if mu == nu:
                s = ad.add(s, 1.0)
            g[mu][nu] = g[nu][mu] = s
    return g


def batched_det(g):
    """Determinant of batched symmetric positive-definite matrices.

    ``g`` is an ``n x n`` nested list of ``(batch,)`` entries. Elimination
    without pivoting is safe for SPD input and stays differentiable.
    """
    n = len(g)
    if n == 1:
        return g[0][0]
    if n == 2:
        return ad.sub(ad.mul(g[0][0], g[1][1]), ad.mul(g[0][1], g[1][0]))
    if n == 3:
        c0 = ad.sub(ad.mul(g[1][1], g[2][2]), ad.mul(g[1][2], g[2][1]))
        c1 = ad.sub(ad.mul(g[1][0], g[2][2]), ad.mul(g[1][2], g[2][0]))
        c2 = ad.sub(ad.mul(g[1][0], g[2][1]), ad.mul(g[1][1], g[2][0]))
        return ad.add(ad.sub(ad.mul(g[0][0], c0), ad.mul(g[0][1], c1)), ad.mul(g[0][2], c2))
    m = [row[:] for row in g]
    det = None
    for k in range(n):
        pivot = m[k][k]
        det = pivot if det is None else ad.mul(det, pivot)
        for i in range(k + 1, n):
            factor = ad.div(m[i][k], pivot)
            for j in range(k + 1, n):
                m[i][j] = ad.sub(m[i][j], ad.mul(factor, m[k][j]))
    return det


def sqrt_det(jac):
    """``sqrt(det g)`` per batch point from the latent Jacobian rows."""
    det = batched_det(metric_entries(jac))
    if np.any(ad.value_of(det) <= 0):
        raise MetricError("metric determinant must be positive")
    return ad.sqrt(det)


def ur_loss(jac, lam: float):
    """``lam * sum_batch (sqrt(g) - 1)^2``.

    Returns the loss and the per-point ``sqrt(g)`` (for logging).
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    sg = sqrt_det(jac)
    dev = ad.sub(sg, 1.0)
    return ad.mul(lam, ad.sum(ad.mul(dev, dev))), ad.value_of(sg)


def ur_loss_samples(samples, lam: float) -> float:
    """UR loss of already evaluated :class:`MetricSample` objects."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    sg = np.array([s.sqrt_det for s in samples])
    if not np.all(np.isfinite(sg)):
        raise MetricError("non-finite sqrt(g)")
    return float(lam * np.sum((sg - 1.0) ** 2))


def jr_loss(jac, lam_jr: float):
    """Jacobian regularization: ``lam_jr * sum_batch ||dH/dx||_F^2``."""
    if lam_jr < 0:
        raise ValueError("lambda must be non-negative")
    total = 0.0
    for row in _as_rows(jac):
        total = ad.add(total, ad.sum(ad.mul(row, row)))
    return ad.mul(lam_jr, total)


def sqrt_g_stats(sg) -> tuple[float, float, float]:
    sg = np.asarray(sg)
    return float(sg.min()), float(sg.mean()), float(sg.max())


def lipschitz_diagnostic(fn, probes) -> float:
    """Largest spectral norm of the solution Jacobian over the probe points.

    ``fn`` maps a ``(batch, n)`` input (tape value) to a ``(batch, m)``
    output using tape operations; rows must not interact.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if probes.shape[0] < 2:
        raise ValueError("need at least two probe points")
    ad.new_graph()
    x = ad.lift(probes)
    u = fn(x)
    if not isinstance(u, ad.Var):
        return 0.0
    if u.ndim == 1:
        u = ad.reshape(u, (-1, 1))
    rows = []
    for c in range(u.shape[1]):
        col = ad.getitem(u, (slice(None), c))
        rows.append(ad.grad(col, x, seed=np.ones(u.shape[0])))
    jac = np.stack(rows, axis=1)  # (batch, m, n)
    norms = np.linalg.norm(jac, ord=2, axis=(1, 2))
    return float(norms.max())
