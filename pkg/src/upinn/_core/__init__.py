"""Hot kernels for jet propagation through activation layers.

A jet is an array of shape ``(k + 1, batch, width)``: slice 0 holds values,
slices 1..k hold directional derivatives with respect to the network inputs.
``backend`` names the implementation picked at import: the compiled
extension when it was built, else the numpy fallback. Set
``UPINN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

ACTIVATIONS = ("tanh", "silu")

_force_py = os.environ.get("UPINN_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure python requested")
    from . import _ckernels as _impl

    backend = "cython"
except ImportError:
    _impl = _pykernels
    backend = "python"


def act_jet_forward(z, kind):
    return _impl.act_jet_forward(z, kind)


def act_jet_backward(z, a, g, kind):
    return _impl.act_jet_backward(z, a, g, kind)


__all__ = ["act_jet_forward", "act_jet_backward", "backend", "ACTIVATIONS"]
