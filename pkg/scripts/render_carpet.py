"""Sample a trimmed carpet and write PNG and SVG renders next to its JSON.

    python3 scripts/render_carpet.py --seed 14 --out figures
"""
import argparse
import json
import os

from carpetlab.carpet import dagger_sequence, star_trim
from carpetlab.percolation import RetentionConfig, sample
from carpetlab.render import scene_for, to_png, to_svg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=6)
    ap.add_argument("--p", type=float, default=0.999)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--budget", type=int, default=1)
    ap.add_argument("--seed", type=int, default=14)
    ap.add_argument("--size", type=int, default=648)
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()
    tree = sample(RetentionConfig(args.N, args.p, args.depth + args.budget, args.seed))
    doc = star_trim(dagger_sequence(tree, args.depth, args.budget)).to_json()
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"carpet_seed{args.seed}")
    with open(stem + ".json", "w") as f:
        json.dump(doc, f)
    sc = scene_for(doc, args.size)
    to_png(sc, stem + ".png")
    to_svg(sc, stem + ".svg")
    trims = sum(len(lev["trims"]) for lev in doc["levels"])
    print(f"{stem}.png/.svg: {len(sc.rects)} boxes, {trims} corner trims, flags {doc['flags']}")


if __name__ == "__main__":
    main()
