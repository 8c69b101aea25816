"""Fully connected bodies and heads, and the multi-head container.

Parameters live in plain numpy arrays outside any graph. A training step
lifts them onto a fresh tape (:meth:`MLP.lift_params`), runs the forward
pass, and hands the gradients to the optimizer. Frozen networks are never
lifted, so they contribute constants and allocate no gradient storage.

Two forward paths exist:

* :func:`forward` composes elementary tape ops and can be differentiated
  twice (used for checking and for small problems);
* :func:`forward_jet` pushes a jet (values plus input-direction tangents,
  shape ``(k + 1, batch, width)``) through fused per-layer nodes. It yields
  the input derivatives as ordinary tape values in one pass, and parameter
  gradients need only one reverse sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from ._core import act_jet_backward, act_jet_forward

ACTIVATIONS = ("tanh", "silu")


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"
    final_linear: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        widths = self.widths
        if any(w < 1 for w in widths):
            raise ValueError(f"all layer widths must be >= 1, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def n_params(self) -> int:
        w = self.widths
        return int(np.sum([w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1)]))

    def layer_activation(self, i: int) -> str | None:
        if i == self.n_layers - 1 and self.final_linear:
            return None
        return self.activation

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "final_linear": self.final_linear,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPSpec":
        return cls(
            int(d["input_dim"]),
            tuple(d["hidden"]),
            int(d["output_dim"]),
            d.get("activation", "tanh"),
            bool(d.get("final_linear", True)),
        )


@dataclass
class MLP:
    spec: MLPSpec
    params: dict[str, np.ndarray]
    frozen: bool = False

    @classmethod
    def init(cls, spec: MLPSpec, seed: int) -> "MLP":
        """Glorot-uniform weights and zero biases, reproducible from ``seed``."""
        rng = np.random.default_rng(seed)
        params = {}
        w = spec.widths
        for i in range(spec.n_layers):
            limit = np.sqrt(6.0 / (w[i] + w[i + 1]))
            params[f"layer{i}.weight"] = rng.uniform(-limit, limit, size=(w[i], w[i + 1]))
            params[f"layer{i}.bias"] = np.zeros(w[i + 1])
        return cls(spec, params)

    def names(self) -> list[str]:
        return [f"layer{i}.{kind}" for i in range(self.spec.n_layers) for kind in ("weight", "bias")]

    def n_params(self) -> int:
        return int(np.sum([p.size for p in self.params.values()]))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.names()])

    def lift_params(self) -> dict:
        """Parameters as tape leaves, or raw arrays when frozen."""
        if self.frozen:
            return dict(self.params)
        return {k: ad.lift(v) for k, v in self.params.items()}

    def copy(self) -> "MLP":
        return MLP(self.spec, {k: v.copy() for k, v in self.params.items()}, self.frozen)


def init(spec: MLPSpec, seed: int) -> MLP:
    return MLP.init(spec, seed)


def freeze(net: MLP) -> MLP:
    net.frozen = True
    return net


def _check_dim(x, expected):
    if np.shape(ad.value_of(x))[-1] != expected:
        raise ValueError(f"expected input dimension {expected}, got {np.shape(ad.value_of(x))}")


def _activate(z, kind):
    return ad.tanh(z) if kind == "tanh" else ad.silu(z)


def forward(net: MLP, x, params=None):
    """Evaluate ``net`` on one point (1-D) or a batch (rows) with tape ops."""
    _check_dim(x, net.spec.input_dim)
    params = net.params if params is None else params
    single = np.ndim(ad.value_of(x)) == 1
    h = ad.reshape(x, (1, -1)) if single else x
    for i in range(net.spec.n_layers):
        h = ad.add(ad.matmul(h, params[f"layer{i}.weight"]), params[f"layer{i}.bias"])
        kind = net.spec.layer_activation(i)
        if kind is not None:
            h = _activate(h, kind)
    return ad.reshape(h, (-1,)) if single else h


def input_jet(x: np.ndarray, directions) -> np.ndarray:
    """Seed jet for raw inputs: unit tangents along the input axes listed."""
    x = np.asarray(x, dtype=np.float64)
    jet = np.zeros((1 + len(directions),) + x.shape)
    jet[0] = x
    for k, mu in enumerate(directions):
        jet[1 + k, :, mu] = 1.0
    return jet


def dense_jet(jet, weight, bias, activation):
    """One fused layer on a jet: ``act(jet @ W + b)`` with tangents.

    The bias only enters the value slice. The backward rule is plain numpy,
    so this node supports a single reverse sweep.
    """
    J = ad.value_of(jet)
    W = ad.value_of(weight)
    b = ad.value_of(bias)
    k1, batch, fan_in = J.shape
    z = (J.reshape(-1, fan_in) @ W).reshape(k1, batch, W.shape[1])
    z[0] += b
    out = z if activation is None else act_jet_forward(z, activation)

    def vjp(g, out_, inputs, needs):
        dz = g if activation is None else act_jet_backward(z, out_, g, activation)
        dz2 = dz.reshape(-1, dz.shape[-1])
        gj = (dz2 @ W.T).reshape(J.shape) if needs[0] else None
        gw = J.reshape(-1, fan_in).T @ dz2 if needs[1] else None
        gb = dz[0].sum(axis=0) if needs[2] else None
        return gj, gw, gb

    return ad.record(out, (jet, weight, bias), vjp, "dense_jet", nested_ok=False)


def forward_jet(net: MLP, jet, params=None):
    """Propagate a jet of shape ``(k + 1, batch, input_dim)`` through ``net``."""
    _check_dim(jet, net.spec.input_dim)
    params = net.params if params is None else params
    h = jet
    for i in range(net.spec.n_layers):
        h = dense_jet(
            h, params[f"layer{i}.weight"], params[f"layer{i}.bias"], net.spec.layer_activation(i)
        )
    return h


@dataclass
class MultiHeadModel:
    """Bodies (one per unknown function) with one head per family element.

    ``heads[b][alpha]`` projects body ``b``'s latent space for the element
    with parameter value ``family[alpha]``.
    """

    bodies: list[MLP]
    heads: list[list[MLP]] = field(default_factory=list)
    family: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.heads:
            self.heads = [[] for _ in self.bodies]
        if len(self.heads) != len(self.bodies):
            raise ValueError("need one head list per body")
        for b, hs in zip(self.bodies, self.heads):
            if len(hs) != len(self.family):
                raise ValueError("each family element needs exactly one head per body")
            for h in hs:
                if h.spec.input_dim != b.spec.output_dim:
                    raise ValueError("head input dimension must equal body output dimension")

    @property
    def n_heads(self) -> int:
        return len(self.family)

    def add_head(self, value: float, head_specs, seed: int) -> int:
        """Attach a freshly initialised head per body; returns its index."""
        if isinstance(head_specs, MLPSpec):
            head_specs = [head_specs] * len(self.bodies)
        for b, (body, spec) in enumerate(zip(self.bodies, head_specs)):
            if spec.input_dim != body.spec.output_dim:
                raise ValueError("head input dimension must equal body output dimension")
            self.heads[b].append(MLP.init(spec, seed + 7919 * b))
        self.family.append(float(value))
        return len(self.family) - 1

    def freeze_bodies(self) -> None:
        for body in self.bodies:
            freeze(body)

    def nets(self):
        """All networks in a fixed order: bodies, then heads by body and index."""
        yield from self.bodies
        for hs in self.heads:
            yield from hs


def latent(model: MultiHeadModel, body_index: int, x, params=None):
    """Latent vector H(x) of one body (its last-layer activations)."""
    return forward(model.bodies[body_index], x, params)


def solution(model: MultiHeadModel, body_index: int, alpha: int, x):
    """Raw head output ``head_alpha(body(x))`` for plain numpy inputs."""
    h = forward(model.bodies[body_index], x)
    return forward(model.heads[body_index][alpha], h)
