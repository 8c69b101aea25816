"""Numpy reference for the activation-jet kernels."""

import numpy as np


def _check(kind):
    if kind not in ("tanh", "silu"):
        raise ValueError(f"unknown activation {kind!r}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def act_jet_forward(z, kind):
    """Push a pre-activation jet through the activation.

    ``out[0] = f(z[0])`` and ``out[j] = f'(z[0]) * z[j]``.
    """
    _check(kind)
    z0 = z[0]
    out = np.empty_like(z)
    if kind == "tanh":
        a0 = np.tanh(z0)
        d1 = 1.0 - a0 * a0
    else:
        s = _sigmoid(z0)
        a0 = z0 * s
        d1 = s * (1.0 + z0 * (1.0 - s))
    out[0] = a0
    if z.shape[0] > 1:
        np.multiply(d1, z[1:], out=out[1:])
    return out


def act_jet_backward(z, a, g, kind):
    """Adjoint of :func:`act_jet_forward` with respect to ``z``.

    ``a`` is the forward output (reused for tanh).
    """
    _check(kind)
    z0 = z[0]
    if kind == "tanh":
        a0 = a[0]
        d1 = 1.0 - a0 * a0
        d2 = -2.0 * a0 * d1
    else:
        s = _sigmoid(z0)
        sd = s * (1.0 - s)
        d1 = s + z0 * sd
        d2 = sd * (2.0 + z0 * (1.0 - 2.0 * s))
    out = np.empty_like(z)
    out[0] = g[0] * d1
    if z.shape[0] > 1:
        np.multiply(g[1:], d1, out=out[1:])
        out[0] += d2 * np.einsum("kbw,kbw->bw", g[1:], z[1:])
    return out
