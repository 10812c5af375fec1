"""Spectrum width and h(2) of white noise across seeds.

    python3 scripts/white_noise_width.py --seeds 10 --n 65536
"""

import argparse

import numpy as np

from mfspeak.mfdfa import MfdfaConfig, WidthUndefinedError, run_mfdfa
from mfspeak.signal_io import gen_white_noise


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=10, help="seeds 0..N-1")
    ap.add_argument("--n", type=int, default=2 ** 16)
    ap.add_argument("--spacing", choices=["dyadic", "log"], default="dyadic")
    ap.add_argument("--detrend-order", type=int, default=1)
    ap.add_argument("--forward-only", action="store_true")
    args = ap.parse_args()

    cfg = MfdfaConfig(scale_spacing=args.spacing, detrend_order=args.detrend_order,
                      use_both_ends=not args.forward_only)
    h2, widths, convex = [], [], 0
    for seed in range(args.seeds):
        try:
            res = run_mfdfa(gen_white_noise(args.n, seed), cfg)
        except WidthUndefinedError:
            convex += 1
            continue
        h2.append(res.hurst.h[res.hurst.q == 2.0][0])
        widths.append(res.fit.width)
        print(f"seed {seed:3d}: h(2)={h2[-1]:.4f}  W={widths[-1]:.4f}")
    print(f"mean h(2)={np.mean(h2):.4f}  mean W={np.mean(widths):.4f}  "
          f"sd W={np.std(widths):.4f}  convex fits skipped: {convex}")


if __name__ == "__main__":
    main()
