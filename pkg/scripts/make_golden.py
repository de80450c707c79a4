"""Freeze the plain-background person fixture and its segment masks for the CLI tests."""

import argparse
from pathlib import Path

import numpy as np

from trixelseg.cli import main as cli_main
from trixelseg.deskcorpus import render_person
from trixelseg.imaging import write_eyes, write_image

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden"


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default=str(OUT))
    p.add_argument("--seed", type=int, default=11)
    a = p.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    person = render_person(np.random.default_rng(a.seed), background=(70, 110, 160))
    write_image(out / "person.png", person.image)
    write_eyes(out / "person.eyes.json", person.eyes)
    for engine in ("pixel", "tritom"):
        code = cli_main(["segment", str(out / "person.png"), "--engine", engine,
                         "--no-timings", "-o", str(out / engine)])
        if code:
            raise SystemExit(code)
    print(out)


if __name__ == "__main__":
    main()
