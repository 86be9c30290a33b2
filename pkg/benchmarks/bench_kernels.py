"""Compare the compiled and numpy tanh-jet kernels.

Times the two elementwise kernels on their own, then a full loss-and-gradient
evaluation of the default network in a subprocess per backend (the backend is
chosen at import, so each needs a fresh interpreter).

    python benchmarks/bench_kernels.py [--points 1000] [--width 64] [--repeats 20]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from afipinn import _kernels_py

try:
    from afipinn import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

FULL_LOSS = """
import json, sys, timeit
import numpy as np
from afipinn import kernels
from afipinn.trainer import TrainConfig, Trainer
from afipinn.problems import make_problem
points, repeats = int(sys.argv[1]), int(sys.argv[2])
trainer = Trainer(make_problem("multipeak2"), TrainConfig(n_c=points, n_b=int(0.8 * points)))
trainer.loss(trainer.net)
best = min(timeit.repeat(lambda: trainer.loss(trainer.net), number=1, repeat=repeats))
print(json.dumps({"backend": kernels.BACKEND, "seconds": best}))
"""


def kernel_times(module, points, width, d, repeats):
    rng = np.random.default_rng(0)
    streams = 1 + 2 * d
    z = rng.normal(size=(streams, points, width))
    h = np.empty_like(z)
    module.jet_tanh_forward(z, h, d, 2)
    dh = rng.normal(size=z.shape)
    dz = np.empty_like(z)
    fwd = min(timeit.repeat(lambda: module.jet_tanh_forward(z, h, d, 2), number=1,
                            repeat=repeats))
    bwd = min(timeit.repeat(lambda: module.jet_tanh_backward(h[0], z, dh, dz, d, 2), number=1,
                            repeat=repeats))
    return fwd, bwd


def full_loss_time(points, repeats, pure):
    env = dict(os.environ)
    if pure:
        env["AFIPINN_PURE_PYTHON"] = "1"
    else:
        env.pop("AFIPINN_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", FULL_LOSS, str(points), str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=1000)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args(argv)

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.append(("cython", _kernels_c))
    else:
        print("compiled extension not built; only the numpy kernels are timed")

    print(f"tanh jet kernels, order 2, {args.points} points x {args.width} units, d={args.dim}")
    results = {}
    for name, module in backends:
        fwd, bwd = kernel_times(module, args.points, args.width, args.dim, args.repeats)
        results[name] = fwd + bwd
        print(f"  {name:7s} forward {fwd * 1e3:8.3f} ms  backward {bwd * 1e3:8.3f} ms")
    if "cython" in results:
        print(f"  kernel speedup: {results['python'] / results['cython']:.2f}x")

    print(f"loss + gradient, multipeak2, default network, {args.points} interior points")
    full = {}
    for pure in (True, False):
        if not pure and _kernels_c is None:
            continue
        res = full_loss_time(args.points, max(args.repeats // 4, 3), pure)
        full[res["backend"]] = res["seconds"]
        print(f"  {res['backend']:7s} {res['seconds'] * 1e3:8.2f} ms")
    if "cython" in full:
        print(f"  end-to-end speedup: {full['python'] / full['cython']:.2f}x")


if __name__ == "__main__":
    main()
