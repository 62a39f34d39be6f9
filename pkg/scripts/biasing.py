#!/usr/bin/env python3
"""Bias a trained checkpoint toward nitrogen-containing molecules by fine-tuning.

Generates seed-paired samples before and after fine-tuning on ammonia and
methylamine and reports a one-sided sign test on the change in the fraction
of samples that contain nitrogen.
"""
import argparse

from g3dgen.experiments import biasing, contains_element
from g3dgen.generator import GenerationConfig
from g3dgen.toy import ammonia, methylamine
from g3dgen.trainer import load_checkpoint, save_checkpoint


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("checkpoint", help="e.g. runs/overfit/overfit.ckpt from overfit_regenerate.py")
    p.add_argument("--out", default="runs/overfit/biased.ckpt")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    base = load_checkpoint(args.checkpoint)
    gen = GenerationConfig(temperature=0.1, n_molecules=args.n, seed=args.seed)
    run = biasing(base, [ammonia(), methylamine()], gen, contains_element("N"))
    save_checkpoint(run.checkpoint, args.out)
    print(f"N-containing samples: {sum(run.before)}/{args.n} before, {sum(run.after)}/{args.n} after")
    print(f"discordant pairs: {run.wins} gained, {run.losses} lost; one-sided sign test p = {run.p_value:.3g}")


if __name__ == "__main__":
    main()
