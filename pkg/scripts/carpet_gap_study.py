"""Exact component gaps of trimmed carpets against the N^-k / 5 floor.

    python3 scripts/carpet_gap_study.py --samples 100 --p 0.999
"""
import argparse
from dataclasses import dataclass
from fractions import Fraction

from carpetlab.carpet import dagger_sequence, star_trim, track_components, whyburn_report
from carpetlab.percolation import RetentionConfig, sample


@dataclass
class StudyConfig:
    N: int = 6
    p: float = 0.999
    tree_depth: int = 5
    budget: int = 3
    samples: int = 100


def run(cfg):
    rows = []
    for s in range(cfg.samples):
        tree = sample(RetentionConfig(cfg.N, cfg.p, cfg.tree_depth, s))
        car = star_trim(dagger_sequence(tree, cfg.tree_depth - cfg.budget, cfg.budget))
        cs = track_components(car, check=False)
        rep = whyburn_report(cs, car)
        # smallest gap relative to the floor of the later-born member of each pair
        ratio = min((g * 5 * cfg.N ** max(cs.birth[a], cs.birth[b])
                     for (a, b), h in cs.gap_history().items() for _, g in h), default=None)
        rows.append((s, car.empty, sum(map(len, car.trims)), rep.passed, ratio))
    return rows


def main():
    ap = argparse.ArgumentParser()
    for k, v in vars(StudyConfig()).items():
        ap.add_argument(f"--{k.replace('_', '-')}", dest=k, type=type(v), default=v)
    cfg = StudyConfig(**vars(ap.parse_args()))
    rows = run(cfg)
    print("seed,root_not_good,trimmed_boxes,whyburn_pass,min_gap_over_floor")
    for s, empty, trims, ok, ratio in rows:
        print(f"{s},{int(empty)},{trims},{int(ok)},{'' if ratio is None else float(ratio):.4}")
    ratios = [r for *_, r in rows if r is not None]
    print(f"# min gap / floor over all pairs: {float(min(ratios, default=Fraction(0))):.4f}")


if __name__ == "__main__":
    main()
