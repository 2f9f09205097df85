"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both implementations directly.  The training-epoch
timing runs a subprocess per path with EVSUMM_NUMBA set accordingly, since
the switch is read at import time.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from evsumm._accel import HAVE_NUMBA
from evsumm.callgraph import _pagerank_loops, _pagerank_numpy
from evsumm.model import kernels

EPOCH_SNIPPET = """
import time, numpy as np
from evsumm.synthetic import encoded_memorization_corpus
from evsumm.model.config import ModelConfig
from evsumm.model.network import init_params
from evsumm.model.training import train
pairs, cv, mv = encoded_memorization_corpus(n_pairs=200, code_len=(20, 40))
cfg = ModelConfig(code_vocab=len(cv), comment_vocab=len(mv), epochs=1, batch_size=20)
p = init_params(cfg, np.random.default_rng(0))
train(pairs[:20], p, cfg.replace(epochs=1))  # warm-up / JIT compile
t = time.perf_counter(); train(pairs, p, cfg); print(time.perf_counter() - t)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def lstm_case(T, B, H, rng):
    xproj = rng.normal(size=(T, B, 4 * H))
    mask = (rng.random((T, B)) < 0.9).astype(float)
    mask.sort(axis=0)
    mask = mask[::-1].copy()
    Wh = rng.normal(scale=0.3, size=(H, 4 * H))
    return xproj, mask, Wh


def report(name, t_numba, t_numpy):
    ratio = t_numpy / t_numba if t_numba else float("nan")
    print(f"{name:<34} numba {t_numba * 1e3:9.3f} ms   numpy {t_numpy * 1e3:9.3f} ms   x{ratio:5.1f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-epoch", action="store_true")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    for T, B, H in ((20, 8, 32), (60, 32, 32), (100, 64, 64)):
        xproj, mask, Wh = lstm_case(T, B, H, rng)
        out = kernels.lstm_forward_numpy(xproj, mask, Wh, False)
        dhs = rng.normal(size=out[0].shape)
        report(f"lstm forward  T={T} B={B} H={H}",
               best_of(lambda: kernels.lstm_forward_loops(xproj, mask, Wh, False), args.repeat),
               best_of(lambda: kernels.lstm_forward_numpy(xproj, mask, Wh, False), args.repeat))
        report(f"lstm backward T={T} B={B} H={H}",
               best_of(lambda: kernels.lstm_backward_loops(dhs, mask, Wh, *out, False), args.repeat),
               best_of(lambda: kernels.lstm_backward_numpy(dhs, mask, Wh, *out, False), args.repeat))
    for n, e in ((13, 12), (10_000, 50_000), (200_000, 1_000_000)):
        src = rng.integers(0, n, e)
        dst = (src + 1 + rng.integers(0, n - 1, e)) % n
        deg = np.bincount(src, minlength=n).astype(float)
        report(f"pagerank n={n} e={e}",
               best_of(lambda: _pagerank_loops(src, dst, deg, n, 0.85, 1e-10, 1000), args.repeat),
               best_of(lambda: _pagerank_numpy(src, dst, deg, n, 0.85, 1e-10, 1000), args.repeat))
    if not args.skip_epoch:
        timings = {}
        for flag in ("1", "0"):
            env = dict(os.environ, EVSUMM_NUMBA=flag)
            res = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True,
                                 check=True)
            timings[flag] = float(res.stdout.strip().splitlines()[-1])
        report("training epoch (200 pairs)", timings["1"], timings["0"])


if __name__ == "__main__":
    main()
