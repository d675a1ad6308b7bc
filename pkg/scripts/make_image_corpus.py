"""Build the color-transfer corpus in data/images/ from public-domain sample images.

Sources are the sample images bundled with scikit-image and matplotlib. Each is
converted to RGB, downscaled so the longer side is 160 px, and written as PPM.
The pairs file chains the images in a cycle and adds two chords.

Usage: python scripts/make_image_corpus.py [--out data/images] [--size 160]
"""

import argparse
import csv
from pathlib import Path

import matplotlib
import numpy as np
import skimage.data
from PIL import Image

from srot.colortransfer import write_ppm

SKIMAGE = ["astronaut.png", "chelsea.png", "coffee.png", "hubble_deep_field.jpg", "ihc.png",
           "retina.jpg", "rocket.jpg"]
MATPLOTLIB = ["grace_hopper.jpg"]


def sources():
    sk = Path(skimage.data.__file__).parent
    mpl = Path(matplotlib.get_data_path()) / "sample_data"
    return [sk / name for name in SKIMAGE] + [mpl / name for name in MATPLOTLIB]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data" / "images")
    ap.add_argument("--size", type=int, default=160)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    names = []
    for src in sources():
        with Image.open(src) as im:
            im = im.convert("RGB")
            im.thumbnail((args.size, args.size))
            name = src.stem + ".ppm"
            write_ppm(np.asarray(im), args.out / name)
        names.append(name)
        print(f"{src} -> {args.out / name}")
    k = len(names)
    pairs = [(i, (i + 1) % k) for i in range(k)] + [(0, 4), (1, 5)]
    with open(args.out / "pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target"])
        for i, j in pairs:
            w.writerow([names[i], names[j]])
    print(f"{len(pairs)} pairs -> {args.out / 'pairs.csv'}")


if __name__ == "__main__":
    main()
