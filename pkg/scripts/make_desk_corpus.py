"""Regenerate the bundled desk corpus and its probability maps."""

import argparse

from trixelseg.deskcorpus import DATA_DIR, EVAL_SEED, MAP_SEED, write_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default=str(DATA_DIR))
    p.add_argument("-n", type=int, default=20, help="evaluation images")
    p.add_argument("--n-train", type=int, default=40, help="images behind the probability maps")
    p.add_argument("--seed", type=int, default=EVAL_SEED)
    p.add_argument("--map-seed", type=int, default=MAP_SEED)
    a = p.parse_args()
    print(write_corpus(a.out_dir, a.n, a.n_train, a.seed, a.map_seed))


if __name__ == "__main__":
    main()
