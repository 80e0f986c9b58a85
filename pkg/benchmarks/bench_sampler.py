"""Time the quadrature sampler with the numba and numpy backends.

Run ``python3 benchmarks/bench_sampler.py [--shots N] [--repeat R]``. The
first numba call includes compilation (or cache loading) and is reported
separately.
"""

import argparse
import time

import numpy as np

from spwitness import _accel, fock, homodyne


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shots", type=int, default=200_000, help="shots per setting")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    state = fock.apply_loss(
        fock.beam_splitter_split(fock.heralded_source_state(0.68, 0.02)), fock.LossParams(0.8, 0.8)
    )
    total = 4 * args.shots
    rows = []
    if _accel.HAVE_NUMBA:
        t0 = time.perf_counter()
        homodyne.sample_batch(state, 10, seed=0, use_numba=True)
        rows.append(("numba (first call)", time.perf_counter() - t0, None))
        t = _time(lambda: homodyne.sample_batch(state, args.shots, seed=1, use_numba=True), args.repeat)
        rows.append(("numba", t, total / t))
    t = _time(lambda: homodyne.sample_batch(state, args.shots, seed=1, use_numba=False), args.repeat)
    rows.append(("numpy", t, total / t))

    if _accel.HAVE_NUMBA:
        a = homodyne.sample_batch(state, 1000, seed=7, use_numba=True)
        b = homodyne.sample_batch(state, 1000, seed=7, use_numba=False)
        diff = max(np.abs(a.x_a - b.x_a).max(), np.abs(a.x_b - b.x_b).max())
        print(f"backend agreement: max |dx| = {diff:.2e}")
    print(f"{'backend':<20}{'seconds':>10}{'shots/s':>14}")
    for name, t, rate in rows:
        print(f"{name:<20}{t:>10.3f}{'' if rate is None else f'{rate:>14.3e}'}")


if __name__ == "__main__":
    main()
