"""Per-seed CCA accuracy of a generator preset, for checking the calibration band.

    python scripts/calibrate_cca.py --preset paper-like --seeds 0,1,2,3,4 --montages ear
"""
import argparse
import time

import numpy as np

from ssvepnet.baselines import build_references, cca_classify
from ssvepnet.signal import design_highpass, filter_rows
from ssvepnet.synthgen import GenConfig, gen_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="paper-like", help="generator preset")
    ap.add_argument("--seeds", default="0,1,2,3,4", help="comma list of generator seeds")
    ap.add_argument("--montages", default="ear", help="comma list of scalp, ear")
    ap.add_argument("--conditions", default="Standing,Walk08,Walk16", help="comma list of conditions")
    args = ap.parse_args()
    fir, bank = design_highpass(), build_references()
    for seed in (int(s) for s in args.seeds.split(",")):
        t0 = time.time()
        ds = gen_dataset(GenConfig(seed=seed, preset=args.preset))
        cells = []
        for m in args.montages.split(","):
            es = ds.montage(m)
            for c in args.conditions.split(","):
                sel = es.conditions == c
                x, y, s = filter_rows(fir, es.data[sel]), es.labels[sel], es.subject_ids[sel]
                pred = np.array([cca_classify(e, bank)[0] for e in x])
                accs = [np.mean(pred[s == k] == y[s == k]) for k in np.unique(s)]
                cells.append(f"{m}/{c} {np.mean(accs):.3f}+-{np.std(accs, ddof=1):.3f}")
        print(f"seed {seed}: " + "  ".join(cells) + f"  ({time.time() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
