"""Compare the compiled activation-jet kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times forward and backward on jets shaped like a training step (3 slices,
batch 400, width 64) and one full flame training epoch per backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

EPOCH_SNIPPET = """
import time
from upinn import trainer, _core
cfg = trainer.TrainConfig.from_dict({"problem": "flame", "train": {"lr": 1e-3, "decay": 0.05, "every": 15000, "epochs": 60},
                                     "ur_lambda": 5e-7, "ur_every": 10, "log_every": 1000})
t = time.perf_counter(); trainer.train_body(cfg); dt = (time.perf_counter() - t) / 60
print(_core.backend, dt)
"""


def kernel_times(repeat: int) -> None:
    from upinn._core import _pykernels

    try:
        from upinn._core import _ckernels
    except ImportError:
        _ckernels = None
    rng = np.random.default_rng(0)
    z = rng.normal(size=(3, 400, 64))
    g = rng.normal(size=z.shape)
    impls = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<10}{'act':<6}{'backend':<8}{'usec/call':>12}")
    for kind in ("tanh", "silu"):
        for name, mod in impls:
            a = np.asarray(mod.act_jet_forward(z, kind))
            fwd = min(timeit.repeat(lambda: mod.act_jet_forward(z, kind), number=repeat, repeat=5)) / repeat
            bwd = min(timeit.repeat(lambda: mod.act_jet_backward(z, a, g, kind), number=repeat, repeat=5)) / repeat
            print(f"{'forward':<10}{kind:<6}{name:<8}{fwd * 1e6:>12.1f}")
            print(f"{'backward':<10}{kind:<6}{name:<8}{bwd * 1e6:>12.1f}")


def epoch_times() -> None:
    for pure in ("0", "1"):
        env = {**os.environ, "UPINN_PURE_PYTHON": pure}
        out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, dt = out.stdout.split()
        print(f"flame epoch (4 heads, batch 100 each) {backend:<7} {float(dt) * 1e3:8.2f} ms")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args()
    kernel_times(args.repeat)
    epoch_times()


if __name__ == "__main__":
    main()
