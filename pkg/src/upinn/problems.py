"""The three DE families: flame, van der Pol and the holographic EFE system.

Each problem knows its residuals, the reparametrization that makes raw
network outputs satisfy the IC/BC exactly, its input sampler, and an affine
map from physical inputs to the ``[-1, 1]`` coordinates the bodies see.

Residual and constraint functions are written with overloaded arithmetic, so
they accept floats, numpy arrays or tape values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


# ---------------------------------------------------------------- shared helpers


def jitter(base: np.ndarray, amplitude, rng, lo: float, hi: float) -> np.ndarray:
    """Uniform jitter of at most ``amplitude`` (scalar or per point), clipped."""
    if rng is None or np.all(np.asarray(amplitude) == 0):
        return base.copy()
    return np.clip(base + rng.uniform(-1.0, 1.0, base.shape) * amplitude, lo, hi)


def ic_factor(t, t0: float = 0.0):
    """``(1 - exp(-(t - t0)), exp(-(t - t0)))``: the IC mask and its derivative."""
    e = np.exp(-(np.asarray(t, dtype=np.float64) - t0))
    return 1.0 - e, e


def chebyshev_lobatto(m: int) -> np.ndarray:
    """Chebyshev-Gauss-Lobatto nodes mapped to ``[0, 1]``."""
    if m < 2:
        raise ValueError("need at least two nodes")
    k = np.arange(m)
    return 0.5 * (1.0 - np.cos(np.pi * k / (m - 1)))


@dataclass
class Problem:
    """Interface shared by the three families (see subclasses)."""

    name: str = ""
    unknowns: tuple[str, ...] = ()
    family_name: str = ""
    head_grid: tuple[float, ...] = ()
    n_points: int = 100
    noise: float = 0.5  # jitter as a fraction of the grid spacing
    input_lo: tuple[float, ...] = ()
    input_hi: tuple[float, ...] = ()

    @property
    def n_inputs(self) -> int:
        return len(self.input_lo)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.input_lo)
        hi = np.asarray(self.input_hi)
        return 2.0 * (np.asarray(x) - lo) / (hi - lo) - 1.0

    @property
    def input_gain(self) -> np.ndarray:
        """``d x_net / d x`` per input axis."""
        return 2.0 / (np.asarray(self.input_hi) - np.asarray(self.input_lo))

    def domain(self, value: float) -> tuple[float, float]:
        raise NotImplementedError

    def sample(self, value: float, rng=None, domain_value: float | None = None) -> np.ndarray:
        """Physical inputs for one family element, shape ``(batch, n_inputs)``."""
        t0, t1 = self.domain(value if domain_value is None else domain_value)
        base = np.linspace(t0, t1, self.n_points)
        spacing = (t1 - t0) / (self.n_points - 1)
        t = jitter(base, self.noise * spacing, rng, t0, t1)
        return np.stack([t, np.full_like(t, value)], axis=1)

    def constrain(self, x: np.ndarray, value: float, raws: dict):
        raise NotImplementedError

    def residuals(self, x: np.ndarray, value: float, fields: dict, aux=None) -> list:
        raise NotImplementedError


# ---------------------------------------------------------------- flame


def flame_residual(t, delta, y, dydt, rho: float = 300.0):
    return dydt - rho * (y * y - y * y * y)


def flame_constraint(t, delta, raw, draw=None):
    """Trial ``y = delta + (1 - e^{-t}) raw`` and, with ``draw``, its t-derivative."""
    mask, dmask = ic_factor(t)
    y = delta + mask * raw
    if draw is None:
        return y
    return y, dmask * raw + mask * draw


@dataclass
class FlameProblem(Problem):
    rho: float = 300.0
    train_range: tuple[float, float] = (0.02, 0.04)

    def __post_init__(self):
        self.name = "flame"
        self.unknowns = ("y",)
        self.family_name = "delta"
        if not self.head_grid:
            self.head_grid = tuple(np.linspace(*self.train_range, 4))
        lo, hi = self.train_range
        self.input_lo = (0.0, lo)
        self.input_hi = (2.0 / (lo * self.rho), hi)

    def domain(self, value):
        return 0.0, 2.0 / (value * self.rho)

    def constrain(self, x, value, raws):
        r, dr = raws["y"]
        return {"y": flame_constraint(x[:, 0], value, r, dr)}

    def residuals(self, x, value, fields, aux=None):
        y, dy = fields["y"]
        return [flame_residual(x[:, 0], value, y, dy, self.rho)]


# ---------------------------------------------------------------- van der Pol


def vdp_residuals(t, a, x, y, dxdt, dydt, rho: float = 10.0):
    """``x' = rho y`` and ``y' = rho (a (1 - x^2) y - x)``."""
    r1 = dxdt - rho * y
    r2 = dydt - rho * (a * (1.0 - x * x) * y - x)
    return r1, r2


def vdp_constraint(t, a, raw_x, raw_y, draw_x=None, draw_y=None):
    """Trial ``x = 1 + m raw_x``, ``y = m raw_y`` with ``m = 1 - e^{-t}``."""
    mask, dmask = ic_factor(t)
    x = 1.0 + mask * raw_x
    y = mask * raw_y
    if draw_x is None:
        return x, y
    dx = dmask * raw_x + mask * draw_x
    dy = dmask * raw_y + mask * draw_y
    return (x, dx), (y, dy)


@dataclass
class VdPProblem(Problem):
    rho: float = 10.0
    train_range: tuple[float, float] = (0.0, 1.5)
    t_end: float = 1.0

    def __post_init__(self):
        self.name = "vdp"
        self.unknowns = ("x", "y")
        self.family_name = "a"
        if not self.head_grid:
            self.head_grid = tuple(np.linspace(*self.train_range, 5))
        self.input_lo = (0.0, self.train_range[0])
        self.input_hi = (self.t_end, self.train_range[1])

    def domain(self, value):
        return 0.0, self.t_end

    def constrain(self, x, value, raws):
        (rx, drx), (ry, dry) = raws["x"], raws["y"]
        fx, fy = vdp_constraint(x[:, 0], value, rx, ry, drx, dry)
        return {"x": fx, "y": fy}

    def residuals(self, x, value, fields, aux=None):
        (xv, dx), (yv, dy) = fields["x"], fields["y"]
        return list(vdp_residuals(x[:, 0], value, xv, yv, dx, dy, self.rho))


# ---------------------------------------------------------------- EFE

EFE_FUNCTIONS = ("sigma", "a", "phi", "nu_sigma", "nu_a", "nu_phi")


def efe_residuals(u, v, dv, psi, dpsi):
    """The seven first-order EFE residuals.

    ``psi`` and ``dpsi`` are sequences ``(Sigma, A, phi, nu_Sigma, nu_A,
    nu_phi)`` of values and u-derivatives; ``v`` and ``dv`` are the potential
    and its phi-derivative at ``phi(u)``.
    """
    s, a, phi, ns, na, nphi = psi
    ds, da, dphi, dns, dna, dnphi = dpsi
    u2 = u * u
    r1 = ns - ds
    r2 = na - da
    r3 = nphi - dphi
    r4 = dns + (2.0 / 3.0) * s * nphi * nphi
    r5 = u2 * s * dna + (8.0 / 3.0) * v * s + na * (3.0 * u2 * ns - 5.0 * u * s) + a * (8.0 * s - 6.0 * u * ns)
    r6 = u2 * s * a * dnphi - s * dv + nphi * (-3.0 * u * a * s + u2 * s * na + 3.0 * u2 * ns * a)
    r7 = (u * ns - s) * (u2 * s * na + 2.0 * u2 * a * ns - 4.0 * u * a * s) - (2.0 / 3.0) * u * s * s * (
        u2 * a * nphi * nphi - 2.0 * v
    )
    return r1, r2, r3, r4, r5, r6, r7


@dataclass(frozen=True)
class BundlePoint:
    index: int
    T: float
    S: float

    def __post_init__(self):
        if not (self.T > 0 and self.S > 0):
            raise ValueError(f"bundle point {self.index}: T and S must be positive")

    @property
    def sigma_h(self) -> float:
        return (self.S / math.pi) ** (1.0 / 3.0)

    @property
    def nu_a_h(self) -> float:
        return -4.0 * math.pi * self.T


def efe_constraint(u, point: BundlePoint, raws: dict, draws: dict | None = None):
    """Trial functions satisfying every EFE boundary condition exactly.

    Two-point anchors use ``(1-u) left + u right + u (1-u) raw``; one-sided
    anchors at ``u=0`` use ``left + u raw`` and at ``u=1`` use
    ``right + (1-u) raw``. ``nu_Sigma`` is unconstrained.
    Returns a dict of values, or of ``(value, derivative)`` pairs with ``draws``.
    """
    u = np.asarray(u, dtype=np.float64)
    b = u * (1.0 - u)
    db = 1.0 - 2.0 * u
    sh = point.sigma_h
    nah = point.nu_a_h
    out = {}

    def pack(name, val, dval):
        out[name] = val if draws is None else (val, dval)

    def d(name):
        return None if draws is None else draws[name]

    r = raws
    pack("sigma", (1.0 - u) + u * sh + b * r["sigma"], None if draws is None else (sh - 1.0) + db * r["sigma"] + b * d("sigma"))
    pack("a", (1.0 - u) + b * r["a"], None if draws is None else -1.0 + db * r["a"] + b * d("a"))
    pack("phi", u * r["phi"], None if draws is None else r["phi"] + u * d("phi"))
    pack("nu_sigma", r["nu_sigma"] * 1.0, d("nu_sigma"))
    pack("nu_a", nah + (1.0 - u) * r["nu_a"], None if draws is None else -1.0 * r["nu_a"] + (1.0 - u) * d("nu_a"))
    pack("nu_phi", 1.0 + u * r["nu_phi"], None if draws is None else r["nu_phi"] + u * d("nu_phi"))
    return out


def toy_entropy(T, phi_m: float):
    """Analytic stand-in for S(T): conformal ``pi^4 T^3`` with a bump.

    The bump amplitude grows as ``phi_m`` decreases, mimicking the richer
    morphology of stiffer potentials.
    """
    T = np.asarray(T, dtype=np.float64)
    bump = 0.5 * math.exp(-phi_m) * (1.0 - np.tanh((T - 0.3) / 0.05))
    return math.pi**4 * T**3 * (1.0 + bump)


def toy_bundle(phi_m: float, n: int = 70, t_range=(0.2, 0.5)) -> list[BundlePoint]:
    T = np.linspace(*t_range, n)
    S = toy_entropy(T, phi_m)
    return [BundlePoint(i, float(t), float(s)) for i, (t, s) in enumerate(zip(T, S))]


def read_bundle(path) -> list[BundlePoint]:
    """Read a bundle CSV with columns ``i, T, S``; rejects non-positive entries."""
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"i", "T", "S"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"bundle CSV missing columns {sorted(missing)}")
        for row in reader:
            points.append(BundlePoint(int(row["i"]), float(row["T"]), float(row["S"])))
    points.sort(key=lambda p: p.index)
    return points


def write_bundle(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "T", "S"])
        for p in points:
            w.writerow([p.index, repr(p.T), repr(p.S)])


@dataclass
class EFEProblem(Problem):
    """Inverse EFE problem; body inputs are ``(u, bundle position, phi_M)``.

    ``bundles`` maps each ``phi_M`` to its list of boundary points. The
    potential ``V(phi)`` comes from an auxiliary network supplied as ``aux``
    to :meth:`residuals` (returns ``V`` and ``dV/dphi``).
    """

    bundle_size: int = 70
    bundles: dict = field(default_factory=dict)
    phi_range: tuple[float, float] = (1.0, 3.0)

    def __post_init__(self):
        self.name = "efe"
        self.unknowns = EFE_FUNCTIONS
        self.family_name = "phi_m"
        if not self.head_grid:
            self.head_grid = (3.0, 2.0, 1.5, 1.08, 1.0)
        if self.n_points == 100:
            self.n_points = 16
        self.input_lo = (0.0, 0.0, self.phi_range[0])
        self.input_hi = (1.0, 1.0, self.phi_range[1])

    def bundle(self, value: float) -> list[BundlePoint]:
        key = float(value)
        if key not in self.bundles:
            self.bundles[key] = toy_bundle(key, self.bundle_size)
        return self.bundles[key]

    def domain(self, value):
        return 0.0, 1.0

    def sample(self, value, rng=None, domain_value=None):
        base = chebyshev_lobatto(self.n_points)
        gaps = np.diff(base)
        local = np.minimum(np.r_[gaps[0], gaps], np.r_[gaps, gaps[-1]])
        u = jitter(base, self.noise * local, rng, 0.0, 1.0)
        pts = self.bundle(value)
        pos = np.linspace(0.0, 1.0, len(pts)) if len(pts) > 1 else np.zeros(1)
        uu = np.tile(u, len(pts))
        ss = np.repeat(pos, len(u))
        return np.stack([uu, ss, np.full_like(uu, value)], axis=1)

    def point_index(self, value, x):
        """Bundle point for each row of ``x`` (from the position column)."""
        pts = self.bundle(value)
        k = np.rint(x[:, 1] * (len(pts) - 1)).astype(int) if len(pts) > 1 else np.zeros(len(x), int)
        return pts, k

    def boundary_arrays(self, value, x):
        pts, k = self.point_index(value, x)
        sh = np.array([p.sigma_h for p in pts])[k]
        nah = np.array([p.nu_a_h for p in pts])[k]
        return sh, nah

    def constrain(self, x, value, raws):
        sh, nah = self.boundary_arrays(value, x)
        point = _ArrayPoint(sh, nah)
        return efe_constraint(x[:, 0], point, {k: v[0] for k, v in raws.items()}, {k: v[1] for k, v in raws.items()})

    def residuals(self, x, value, fields, aux=None):
        psi = [fields[name][0] for name in EFE_FUNCTIONS]
        dpsi = [fields[name][1] for name in EFE_FUNCTIONS]
        v, dv = aux(psi[2])
        return list(efe_residuals(x[:, 0], v, dv, psi, dpsi))


@dataclass(frozen=True)
class _ArrayPoint:
    """Per-row boundary values, duck-typed like :class:`BundlePoint`."""

    sigma_h: np.ndarray
    nu_a_h: np.ndarray


def make_problem(name: str, **kwargs) -> Problem:
    problems = {"flame": FlameProblem, "vdp": VdPProblem, "efe": EFEProblem}
    if name not in problems:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(problems)}")
    return problems[name](**kwargs)
