"""Compare the compiled decoder kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--batch 512] [--repeat 20]

Shapes follow one training batch of the default configuration: 8 sequences of
32 frames per hand, so 512 hand tokens, each with 16 joint rotations and the
synthetic hand mesh.
"""

import argparse
import timeit

import numpy as np

from handtok import _kernels_py
from handtok.handmodel import synth_asset
from handtok.kernels import SkinningWeights

try:
    from handtok import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(batch: int, rng: np.random.Generator, dtype):
    asset = synth_asset(0)
    w = SkinningWeights(asset.skinning)
    n_joints = asset.skinning.shape[1]
    r = np.ascontiguousarray(rng.normal(0, 0.6, (batch * n_joints, 3)).astype(dtype))
    gR = np.ascontiguousarray(rng.normal(size=(batch * n_joints, 3, 3)).astype(dtype))
    A = np.ascontiguousarray(rng.normal(size=(batch, n_joints, 3, 4)).astype(dtype))
    p = np.ascontiguousarray(np.broadcast_to(asset.template, (batch,) + asset.template.shape).astype(dtype))
    gp = np.ascontiguousarray(rng.normal(size=p.shape).astype(dtype))
    csr = (w.indptr, w.indices, w.values)
    return {
        "rodrigues_forward": lambda m: m.rodrigues_forward(r),
        "rodrigues_backward": lambda m: m.rodrigues_backward(r, gR),
        "skin_forward": lambda m: m.skin_forward(A, p, *csr),
        "skin_backward": lambda m: m.skin_backward(A, p, gp, *csr),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=512, help="hand tokens per call")
    parser.add_argument("--repeat", type=int, default=20, help="timed calls per kernel (best of)")
    args = parser.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'dtype':<8} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for dtype in (np.float32, np.float64):
        for name, call in _cases(args.batch, rng, dtype).items():
            slow = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
            fast = min(timeit.repeat(lambda: call(_kernels), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<20} {np.dtype(dtype).name:<8} {slow:>10.3f} {fast:>12.3f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
