#!/usr/bin/env python3
"""Finite-difference gradient check of the full-size model across step sizes.

Shows the trade-off behind the default step: truncation error shrinks with
eps while float64 round-off in the loss grows like 1/eps.
"""
import argparse

import numpy as np

from g3dgen.geometry import DistanceBinSpec, TypeVocabulary
from g3dgen.model import GenerativeModel, ModelConfig
from g3dgen.toy import water
from g3dgen.trainer import finite_difference_check, record_bonds, sample_trace


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--n-params", type=int, default=200)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-5, 1e-4, 1e-3, 1e-2])
    args = p.parse_args()

    mol = water()
    step = [s for s in sample_trace(mol, record_bonds(mol), np.random.default_rng(0))
            if not s.is_stop][-1:]
    print("seed " + " ".join(f"eps={e:<8g}" for e in args.eps))
    for seed in range(args.seeds):
        model = GenerativeModel(TypeVocabulary(), DistanceBinSpec(), ModelConfig())
        model.reset_parameters(np.random.default_rng(seed))
        errs = [finite_difference_check(model, step, eps=e, n_params=args.n_params,
                                        rng=np.random.default_rng(seed + 1)) for e in args.eps]
        print(f"{seed:4d} " + " ".join(f"{err:<12.2e}" for err in errs))


if __name__ == "__main__":
    main()
