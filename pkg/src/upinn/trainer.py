"""Multi-head training, unimodular regularization and transfer learning.

A training step evaluates every head on its own jittered batch, forms the
per-head DE loss (mean squared residual over points and equations), adds the
UR term on epochs divisible by ``ur_every`` and takes one Adam step on all
unfrozen parameters. Input derivatives travel forward as jets, so the UR
term is an ordinary function of parameters and needs a single reverse sweep.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import geometry
from .nn import MLP, MLPSpec, MultiHeadModel, forward, forward_jet, input_jet
from .optim import Adam, StepScheduler
from .problems import EFEProblem, Problem, make_problem
from .reference import flame_problem, relative_error, rk4, rk45, rms, vdp_problem

CHECKPOINT_VERSION = 1
LAMBDA_RANGE = (1e-8, 5e-5)


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingAborted(RuntimeError):
    """Numerical failure during training; ``epoch`` names where it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


# ---------------------------------------------------------------- config


@dataclass
class Schedule:
    lr: float = 1e-3
    decay: float = 0.05
    every: int = 15000
    epochs: int = 1000

    def scheduler(self) -> StepScheduler:
        return StepScheduler(self.lr, self.decay, self.every)


@dataclass
class TrainConfig:
    """Everything that determines a run. Unknown keys are rejected."""

    problem: str = "flame"
    seed: int = 0
    train: Schedule = field(default_factory=Schedule)
    transfer: Schedule = field(default_factory=lambda: Schedule(5e-3, 0.025, 2500, 1000))
    transfer_value: float | None = None
    ur_lambda: float = 0.0
    ur_every: int = 100
    jr_lambda: float = 0.0
    body_hidden: list = field(default_factory=lambda: [64, 64, 64])
    body_output: int = 64
    body_activation: str = "tanh"
    head_hidden: list = field(default_factory=lambda: [32, 32])
    head_activation: str = "tanh"
    potential_hidden: list = field(default_factory=lambda: [32, 32, 32])
    potential_output: int = 128
    potential_head_hidden: list = field(default_factory=lambda: [64, 64])
    potential_activation: str = "silu"
    heads: list | None = None
    n_points: int | None = None
    noise: float = 0.5
    log_every: int = 100
    checkpoint_every: int = 10000
    problem_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = _schedule(self.train, "train")
        if isinstance(self.transfer, dict):
            self.transfer = _schedule(self.transfer, "transfer")
        self.validate()

    def validate(self) -> None:
        if self.problem not in ("flame", "vdp", "efe"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.ur_every < 1:
            raise ConfigError("ur_every must be >= 1")
        if self.ur_lambda < 0 or self.jr_lambda < 0:
            raise ConfigError("regularization weights must be non-negative")
        if self.ur_lambda > 0 and self.jr_lambda > 0:
            raise ConfigError("UR and JR are mutually exclusive")
        if self.ur_lambda > 0 and not LAMBDA_RANGE[0] <= self.ur_lambda <= LAMBDA_RANGE[1]:
            warnings.warn(f"ur_lambda={self.ur_lambda} outside the typical range {LAMBDA_RANGE}", stacklevel=3)
        for sched in (self.train, self.transfer):
            if sched.epochs < 0:
                raise ConfigError("epochs must be non-negative")
            try:
                sched.scheduler()
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if min(self.log_every, self.checkpoint_every) < 1:
            raise ConfigError("log_every and checkpoint_every must be >= 1")
        for act in (self.body_activation, self.head_activation, self.potential_activation):
            if act not in ("tanh", "silu"):
                raise ConfigError(f"unknown activation {act!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def make_problem(self) -> Problem:
        opts = dict(self.problem_options)
        if self.heads is not None:
            opts["head_grid"] = tuple(float(v) for v in self.heads)
        if self.n_points is not None:
            opts["n_points"] = self.n_points
        opts["noise"] = self.noise
        try:
            return make_problem(self.problem, **opts)
        except TypeError as exc:
            raise ConfigError(f"bad problem_options: {exc}") from exc


def _schedule(data: dict, where: str) -> Schedule:
    known = {f.name for f in fields(Schedule)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    return Schedule(**data)


# ---------------------------------------------------------------- model


@dataclass
class PinnModel:
    """Multi-head networks for the unknowns plus, for EFE, the potential."""

    main: MultiHeadModel
    potential: MultiHeadModel | None = None

    @property
    def family(self) -> list[float]:
        return self.main.family

    def nets(self) -> list[MLP]:
        out = list(self.main.nets())
        if self.potential is not None:
            out += list(self.potential.nets())
        return out

    def add_head(self, value: float, cfg: TrainConfig, seed: int) -> int:
        alpha = self.main.add_head(value, _head_spec(cfg, len(self.main.bodies)), seed)
        if self.potential is not None:
            self.potential.add_head(value, _potential_head_spec(cfg), seed + 104729)
        return alpha

    def freeze_bodies(self) -> None:
        self.main.freeze_bodies()
        if self.potential is not None:
            self.potential.freeze_bodies()

    def body_digest(self) -> str:
        h = hashlib.sha256()
        bodies = list(self.main.bodies) + (list(self.potential.bodies) if self.potential else [])
        for body in bodies:
            h.update(body.flat().astype("<f8").tobytes())
        return h.hexdigest()


def _head_spec(cfg: TrainConfig, n_bodies: int) -> list[MLPSpec]:
    return [MLPSpec(cfg.body_output, tuple(cfg.head_hidden), 1, cfg.head_activation, True)] * n_bodies


def _potential_head_spec(cfg: TrainConfig) -> MLPSpec:
    return MLPSpec(cfg.potential_output, tuple(cfg.potential_head_hidden), 1, cfg.potential_activation, True)


def build_model(cfg: TrainConfig, problem: Problem) -> PinnModel:
    body_spec = MLPSpec(problem.n_inputs, tuple(cfg.body_hidden), cfg.body_output, cfg.body_activation, False)
    bodies = [MLP.init(body_spec, cfg.seed * 1000 + b) for b in range(len(problem.unknowns))]
    model = PinnModel(MultiHeadModel(bodies, family=[]))
    if isinstance(problem, EFEProblem):
        pspec = MLPSpec(1, tuple(cfg.potential_hidden), cfg.potential_output, cfg.potential_activation, False)
        model.potential = MultiHeadModel([MLP.init(pspec, cfg.seed * 1000 + 500)], family=[])
    for alpha, value in enumerate(problem.head_grid):
        model.add_head(value, cfg, cfg.seed * 1000 + 100 + alpha)
    return model


# ---------------------------------------------------------------- loss


@dataclass
class StepResult:
    head_losses: list[float]
    l_reg: float
    total: float
    sqrt_g: np.ndarray | None


def _potential_fn(model: PinnModel, alpha: int, params: dict):
    body, head = model.potential.bodies[0], model.potential.heads[0][alpha]

    def fn(phi):
        batch = np.shape(ad.value_of(phi))[0]
        jet = ad.concat([ad.reshape(phi, (1, batch, 1)), np.ones((1, batch, 1))], axis=0)
        out = forward_jet(head, forward_jet(body, jet, params[id(body)]), params[id(head)])
        return out[0, :, 0], out[1, :, 0]

    return fn


def head_loss(problem: Problem, model: PinnModel, alpha: int, x: np.ndarray, params: dict, directions):
    """DE loss of one head plus the latent Jacobian rows of every body.

    Returns ``(loss, rows)`` where ``rows[b]`` lists the ``(batch, d)``
    tangent slices of body ``b`` along ``directions``.
    """
    value = model.family[alpha]
    jet_in = input_jet(problem.normalize(x), directions)
    gain = problem.input_gain[0]
    raws, rows = {}, []
    for b, name in enumerate(problem.unknowns):
        body, head = model.main.bodies[b], model.main.heads[b][alpha]
        latent = forward_jet(body, jet_in, params[id(body)])
        rows.append([latent[1 + k] for k in range(len(directions))])
        out = forward_jet(head, latent, params[id(head)])
        raws[name] = (out[0, :, 0], out[1, :, 0] * gain)
    fields_ = problem.constrain(x, value, raws)
    aux = _potential_fn(model, alpha, params) if model.potential is not None else None
    residuals = problem.residuals(x, value, fields_, aux)
    sq = None
    for r in residuals:
        term = ad.mul(r, r)
        sq = term if sq is None else ad.add(sq, term)
    return ad.mean(ad.div(sq, float(len(residuals)))), rows


def training_step(problem, model, cfg, batches, alphas, epoch, optimizer, lr, stats=False) -> StepResult:
    ad.new_graph()
    params = {id(net): net.lift_params() for net in model.nets()}
    reg_epoch = (cfg.ur_lambda > 0 or cfg.jr_lambda > 0) and epoch % cfg.ur_every == 0
    want_jac = reg_epoch or stats
    directions = list(range(problem.n_inputs)) if want_jac else [0]
    total = 0.0
    head_values = []
    all_rows = [[] for _ in problem.unknowns]
    for alpha, x in zip(alphas, batches):
        loss, rows = head_loss(problem, model, alpha, x, params, directions)
        head_values.append(float(ad.value_of(loss)))
        total = ad.add(total, loss)
        for b, r in enumerate(rows):
            all_rows[b].append(r)
    reg = 0.0
    sg_all = None
    if want_jac:
        sgs = []
        for b in range(len(problem.unknowns)):
            jac = [ad.concat([r[mu] for r in all_rows[b]], axis=0) for mu in range(problem.n_inputs)]
            if reg_epoch and cfg.ur_lambda > 0:
                term, sg = geometry.ur_loss(jac, cfg.ur_lambda)
                reg = ad.add(reg, term)
            else:
                sg = np.sqrt(ad.value_of(geometry.batched_det(geometry.metric_entries([ad.value_of(j) for j in jac]))))
                if reg_epoch and cfg.jr_lambda > 0:
                    reg = ad.add(reg, geometry.jr_loss(jac, cfg.jr_lambda))
            sgs.append(sg)
        sg_all = np.concatenate(sgs)
        total = ad.add(total, reg)
    nets = [net for net in model.nets() if not net.frozen]
    leaves = [params[id(net)][k] for net in nets for k in net.names()]
    grads = ad.grad(total, leaves)
    keys = [f"{id(net)}.{k}" for net in nets for k in net.names()]
    optimizer.step(dict(zip(keys, grads)), lr=lr, epoch=epoch)
    return StepResult(head_values, float(ad.value_of(reg)), float(ad.value_of(total)), sg_all)


def _optimizer(model: PinnModel) -> Adam:
    params = {f"{id(net)}.{k}": net.params[k] for net in model.nets() if not net.frozen for k in net.names()}
    return Adam(params)


# ---------------------------------------------------------------- run record


@dataclass
class RunRecord:
    """Per-log-epoch loss and geometry history; CSV output is deterministic."""

    n_heads: int
    rows: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def columns(self) -> list[str]:
        return (
            ["epoch", "lr"]
            + [f"l_de_head_{a}" for a in range(self.n_heads)]
            + ["l_ur", "l_tot", "sqrtg_min", "sqrtg_mean", "sqrtg_max"]
        )

    def log(self, epoch: int, lr: float, step: StepResult) -> None:
        sg = geometry.sqrt_g_stats(step.sqrt_g) if step.sqrt_g is not None else (math.nan,) * 3
        self.rows.append([epoch, lr, *step.head_losses, step.l_reg, step.total, *sg])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()

    def stats_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "sqrtg_min", "sqrtg_mean", "sqrtg_max"])
        for row in self.rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[-3:]])
        return buf.getvalue()

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)


# ---------------------------------------------------------------- training


def _log_epoch(epoch: int, epochs: int, every: int) -> bool:
    return epoch % every == 0 or epoch == epochs - 1


def train_body(cfg: TrainConfig, progress=None, checkpoint=None) -> tuple[PinnModel, RunRecord, np.random.Generator]:
    """Train bodies and all heads from scratch. Deterministic given ``cfg.seed``.

    ``checkpoint(model, rng, epoch)`` is called every ``cfg.checkpoint_every``
    epochs; on a numerical failure :class:`TrainingAborted` is raised and the
    last checkpoint written stays valid.
    """
    problem = cfg.make_problem()
    model = build_model(cfg, problem)
    rng = np.random.default_rng(cfg.seed)
    alphas = list(range(model.main.n_heads))
    record = fit(problem, model, cfg, cfg.train, alphas, rng, progress=progress, checkpoint=checkpoint)
    return model, record, rng


def fit(problem, model, cfg, sched: Schedule, alphas, rng, domain_value=None, progress=None, checkpoint=None) -> RunRecord:
    optimizer = _optimizer(model)
    scheduler = sched.scheduler()
    record = RunRecord(len(alphas))
    start = time.perf_counter()
    body_domain = problem.head_grid[0] if domain_value is None else domain_value
    for epoch in range(sched.epochs):
        batches = [problem.sample(model.family[a], rng, domain_value=_domain_for(problem, body_domain)) for a in alphas]
        lr = scheduler.lr_at(epoch)
        logging = _log_epoch(epoch, sched.epochs, cfg.log_every)
        try:
            with np.errstate(over="raise", invalid="raise"):
                step = training_step(problem, model, cfg, batches, alphas, epoch, optimizer, lr, stats=logging)
        except (ad.NonFiniteError, ad.DomainError, FloatingPointError, geometry.MetricError) as exc:
            raise TrainingAborted(f"numerical failure at epoch {epoch}: {exc}", epoch) from exc
        if checkpoint is not None and epoch > 0 and epoch % cfg.checkpoint_every == 0:
            checkpoint(model, rng, epoch)
        if logging:
            record.log(epoch, lr, step)
            if progress is not None:
                progress(epoch, step)
    record.wall_time = time.perf_counter() - start
    return record


def _domain_for(problem, value):
    # EFE heads always live on u in [0, 1]; ODE families share the widest domain.
    return None if isinstance(problem, EFEProblem) else value


def transfer(model: PinnModel, cfg: TrainConfig, value: float, seed: int | None = None, progress=None, checkpoint=None):
    """Freeze the bodies and train a fresh head for family element ``value``.

    The time domain is resampled for the new element. Returns the head index
    and the run record.
    """
    problem = cfg.make_problem()
    seed = cfg.seed if seed is None else seed
    model.freeze_bodies()
    for hs in model.main.heads + (model.potential.heads if model.potential else []):
        for h in hs:
            h.frozen = True
    alpha = model.add_head(value, cfg, seed * 1000 + 900)
    tl_cfg = TrainConfig.from_dict({**cfg.to_dict(), "ur_lambda": 0.0, "jr_lambda": 0.0})
    rng = np.random.default_rng(seed + 1)
    record = fit(
        problem, model, tl_cfg, cfg.transfer, [alpha], rng, domain_value=value, progress=progress, checkpoint=checkpoint
    )
    return alpha, record


# ---------------------------------------------------------------- evaluation


def predict(problem: Problem, model: PinnModel, alpha: int, x: np.ndarray) -> dict:
    """Constrained solution values (numpy) for head ``alpha`` at inputs ``x``."""
    value = model.family[alpha]
    xn = problem.normalize(x)
    raws = {}
    for b, name in enumerate(problem.unknowns):
        h = forward(model.main.bodies[b], xn)
        raws[name] = (forward(model.main.heads[b][alpha], h)[:, 0], np.zeros(len(x)))
    return {k: v[0] for k, v in problem.constrain(x, value, raws).items()}


def oracle_trajectory(problem: Problem, value: float, oracle: str):
    if problem.name == "flame":
        ode = flame_problem(value, problem.rho)
    elif problem.name == "vdp":
        ode = vdp_problem(value, problem.rho, problem.t_end)
    else:
        raise ConfigError(f"no ODE oracle for problem {problem.name!r}")
    if oracle == "rk45":
        return rk45(ode, rtol=1e-10, atol=1e-12)
    if oracle == "rk4":
        return rk4(ode, (ode.t1 - ode.t0) / 20000)
    raise ConfigError(f"unknown oracle {oracle!r}")


@dataclass
class Evaluation:
    t: np.ndarray
    y_nn: np.ndarray
    y_oracle: np.ndarray
    re: np.ndarray

    @property
    def rms_percent(self) -> float:
        return rms(self.re)

    @property
    def max_re_percent(self) -> float:
        return float(self.re.max())

    def report(self) -> dict:
        return {"rms_percent": self.rms_percent, "max_re_percent": self.max_re_percent, "n_points": int(len(self.t))}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "y_nn", "y_oracle", "re_percent"])
            for row in zip(self.t, self.y_nn, self.y_oracle, self.re):
                w.writerow([repr(float(v)) for v in row])


def evaluate(problem: Problem, model: PinnModel, alpha: int, oracle: str = "rk45", n: int = 1000) -> Evaluation:
    """Relative error of the first unknown against a classical solution.

    ``oracle="implicit"`` (flame only) solves the implicit relation for y
    by bisection on each grid point instead of integrating.
    """
    if oracle == "implicit" and problem.name != "flame":
        raise ConfigError("the implicit oracle is only available for the flame problem")
    value = model.family[alpha]
    t0, t1 = problem.domain(value)
    t = np.linspace(t0, t1, n)
    x = np.stack([t, np.full_like(t, value)], axis=1)
    y_nn = predict(problem, model, alpha, x)[problem.unknowns[0]]
    if oracle == "implicit":
        y_ref = flame_implicit_solution(t, value, problem.rho)
    else:
        y_ref = oracle_trajectory(problem, value, oracle)(t)[:, 0]
    return Evaluation(t, y_nn, y_ref, relative_error(y_ref, y_nn))


def flame_implicit_solution(t, delta: float, rho: float) -> np.ndarray:
    """Invert ``1/y + ln(1/y - 1) = 1/delta + ln(1/delta - 1) - rho t`` for y."""
    from .reference import flame_implicit_check

    t = np.asarray(t, dtype=np.float64)
    lo = np.full_like(t, delta)
    hi = np.full_like(t, 1.0)
    # The left side is decreasing in y, so plain bisection on (delta, 1).
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        inside = (mid > 0) & (mid < 1)
        f = np.where(inside, flame_implicit_check(t, np.clip(mid, 1e-300, np.nextafter(1, 0)), delta, rho), 0.0)
        lo = np.where(f > 0, mid, lo)
        hi = np.where(f > 0, hi, mid)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- checkpoints


def _net_meta(net: MLP) -> dict:
    return {"spec": net.spec.to_dict(), "frozen": net.frozen}


def save_checkpoint(path, model: PinnModel, cfg: TrainConfig, rng: np.random.Generator | None = None) -> None:
    """Versioned ``.npz`` container, written to a temp file then renamed."""
    arrays = {}
    nets_meta = []
    groups = [("main", model.main)] + ([("potential", model.potential)] if model.potential else [])
    layout = {}
    for gname, group in groups:
        layout[gname] = {"n_bodies": len(group.bodies), "family": list(group.family)}
        for b, body in enumerate(group.bodies):
            key = f"{gname}/body{b}"
            nets_meta.append({"key": key, **_net_meta(body)})
            for k in body.names():
                arrays[f"{key}/{k}"] = body.params[k].astype("<f8")
            for a, head in enumerate(group.heads[b]):
                hkey = f"{gname}/head{b}_{a}"
                nets_meta.append({"key": hkey, **_net_meta(head)})
                for k in head.names():
                    arrays[f"{hkey}/{k}"] = head.params[k].astype("<f8")
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "layout": layout,
        "nets": nets_meta,
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[PinnModel, TrainConfig, dict]:
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    if "__meta__" not in arrays:
        raise CheckpointError(f"{path}: missing metadata")
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    cfg = TrainConfig.from_dict(meta["config"])
    if cfg.digest() != meta["config_hash"]:
        raise CheckpointError(f"{path}: config hash mismatch")
    nets = {}
    for entry in meta["nets"]:
        spec = MLPSpec.from_dict(entry["spec"])
        params = {}
        for k in [f"layer{i}.{kind}" for i in range(spec.n_layers) for kind in ("weight", "bias")]:
            name = f"{entry['key']}/{k}"
            if name not in arrays:
                raise CheckpointError(f"{path}: missing array {name}")
            params[k] = np.array(arrays[name], dtype=np.float64)
        nets[entry["key"]] = MLP(spec, params, entry["frozen"])
    groups = {}
    for gname, lay in meta["layout"].items():
        bodies = [nets[f"{gname}/body{b}"] for b in range(lay["n_bodies"])]
        heads = [[nets[f"{gname}/head{b}_{a}"] for a in range(len(lay["family"]))] for b in range(lay["n_bodies"])]
        groups[gname] = MultiHeadModel(bodies, heads, list(lay["family"]))
    return PinnModel(groups["main"], groups.get("potential")), cfg, meta


# ---------------------------------------------------------------- ablation


@dataclass
class AblationRow:
    seed: int
    rms_ur: float
    rms_plain: float
    sqrtg_ur: float
    sqrtg_plain: float


def _final_sqrtg(record: RunRecord) -> float:
    return float(record.column("sqrtg_mean")[-1])


def ablation_run(args) -> AblationRow:
    cfg_dict, seed, value = args
    out = {}
    for tag, lam in (("ur", cfg_dict["ur_lambda"]), ("plain", 0.0)):
        cfg = TrainConfig.from_dict({**cfg_dict, "seed": seed, "ur_lambda": lam})
        model, record, _ = train_body(cfg)
        alpha, _ = transfer(model, cfg, value, seed)
        ev = evaluate(cfg.make_problem(), model, alpha, "rk45")
        out[tag] = (ev.rms_percent, _final_sqrtg(record))
    return AblationRow(seed, out["ur"][0], out["plain"][0], out["ur"][1], out["plain"][1])


def ablate(cfg: TrainConfig, seeds: int, jobs: int = 1) -> list[AblationRow]:
    """Matched-seed UR vs no-UR comparison of transfer RMS and final mean sqrt(g)."""
    if seeds < 1:
        raise ConfigError("need at least one seed")
    if cfg.ur_lambda <= 0:
        raise ConfigError("ablation needs ur_lambda > 0 in the config")
    if cfg.transfer_value is None:
        raise ConfigError("ablation needs transfer_value in the config")
    tasks = [(cfg.to_dict(), cfg.seed + s, cfg.transfer_value) for s in range(seeds)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(ablation_run, tasks))
    return [ablation_run(t) for t in tasks]


def ablation_summary(rows: list[AblationRow]) -> dict:
    ur = np.array([r.rms_ur for r in rows])
    plain = np.array([r.rms_plain for r in rows])
    return {
        "seeds": len(rows),
        "median_rms_ur": float(np.median(ur)),
        "median_rms_plain": float(np.median(plain)),
        "win_rate_ur": float(np.mean(ur <= plain)),
        "sqrtg_lower_every_run": bool(all(r.sqrtg_ur < r.sqrtg_plain for r in rows)),
    }


# ---------------------------------------------------------------- EFE diagnostics


def evaluate_efe(problem: EFEProblem, model: PinnModel, alpha: int, n_u: int = 33, n_phi: int = 21) -> dict:
    """Residual RMS per EFE equation and the recovered potential on a phi grid."""
    ad.new_graph()
    value = model.family[alpha]
    saved, problem.noise = problem.noise, 0.0
    try:
        n_saved, problem.n_points = problem.n_points, n_u
        x = problem.sample(value, None)
    finally:
        problem.noise = saved
        problem.n_points = n_saved
    params = {id(net): dict(net.params) for net in model.nets()}
    jet_in = input_jet(problem.normalize(x), [0])
    gain = problem.input_gain[0]
    raws = {}
    for b, name in enumerate(problem.unknowns):
        latent = forward_jet(model.main.bodies[b], jet_in, params[id(model.main.bodies[b])])
        out = forward_jet(model.main.heads[b][alpha], latent, params[id(model.main.heads[b][alpha])])
        raws[name] = (out[0, :, 0], out[1, :, 0] * gain)
    fields_ = problem.constrain(x, value, raws)
    res = problem.residuals(x, value, fields_, _potential_fn(model, alpha, params))
    phi = np.linspace(0.0, value, n_phi)
    v, dv = _potential_fn(model, alpha, params)(phi)
    return {
        "residual_rms": [float(np.sqrt(np.mean(np.asarray(r) ** 2))) for r in res],
        "potential": [{"phi": float(p), "V": float(a), "dV": float(b)} for p, a, b in zip(phi, v, dv)],
    }
