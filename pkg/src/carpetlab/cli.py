"""Command-line front end: `carpetlab <subcommand> [options]`.

Every run writes its outputs atomically into --out together with manifest.json, which
echoes the resolved configuration; `carpetlab rerun manifest.json` reproduces the run.
Exit codes: 0 ok, 2 validation, 3 invariant violation, 4 budget exceeded.
"""
import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import BudgetExceeded, CarpetLabError, InvariantViolation

EXIT_OK, EXIT_VALIDATION, EXIT_INVARIANT, EXIT_BUDGET = 0, 2, 3, 4


def workers():
    try:
        return max(1, int(os.environ.get("CARPETLAB_THREADS", "1")))
    except ValueError:
        return 1


def fstr(x):
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


class Writer:
    """Collects outputs and writes each one atomically (temp file, then rename)."""

    def __init__(self, out):
        self.out = out
        self.files = []

    def write(self, name, data):
        os.makedirs(self.out, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=".tmp-")
        try:
            with os.fdopen(fd, mode) as f:
                f.write(data)
            os.replace(tmp, os.path.join(self.out, name))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files.append(name)

    def json(self, name, obj):
        self.write(name, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.write(name, buf.getvalue())


# ---------------------------------------------------------------- validation

def _validate(cmd, cfg):
    bad = []

    def need(cond, msg):
        if not cond:
            bad.append(msg)

    if cmd in ("percolate", "carpet"):
        need(cfg["N"] >= 2, f"N={cfg['N']} must be >= 2")
        need(0 <= cfg["p"] <= 1, f"p={cfg['p']} must lie in [0, 1]")
        need(1 <= cfg["depth"] <= 12, f"depth={cfg['depth']} must lie in 1..12")
    if cmd == "carpet":
        need(cfg["N"] >= 6, f"N={cfg['N']} must be >= 6 for corner trimming")
        need(cfg["budget"] >= 0, f"budget={cfg['budget']} must be >= 0")
        need(cfg["depth"] + cfg["budget"] <= 12, "depth + budget must be <= 12")
        need(cfg["samples"] >= 1, f"samples={cfg['samples']} must be >= 1")
    if cmd == "theta":
        need(cfg["N"] >= 2, f"N={cfg['N']} must be >= 2")
        need(0 <= cfg["p"] <= 1, f"p={cfg['p']} must lie in [0, 1]")
        need(cfg["M"] >= 0, f"M={cfg['M']} must be >= 0")
    if cmd == "paths":
        need(cfg["rho"] >= 1, f"rho={cfg['rho']} must be >= 1")
        need(cfg["N"] >= 2, f"N={cfg['N']} must be >= 2")
        need(cfg["k"] >= 0, f"k={cfg['k']} must be >= 0")
        need(cfg["L"] >= 1, f"L={cfg['L']} must be >= 1")
        need(Fraction(cfg["beta"]) > 0, f"beta={cfg['beta']} must be > 0")
    if cmd == "gff":
        need(1 <= cfg["n"] <= cfg["cap"], f"n={cfg['n']} must lie in 1..{cfg['cap']}")
        need(cfg["trials"] >= 2, f"trials={cfg['trials']} must be >= 2")
        need(4 <= cfg["r"] and 2 * cfg["r"] + 3 <= cfg["n"], f"r={cfg['r']} must be >= 4 and fit grid {cfg['n']}")
    if cmd == "sle":
        need(cfg["kappa"] >= 0, f"kappa={cfg['kappa']} must be >= 0")
        need(cfg["dt"] > 0 and cfg["T"] >= cfg["dt"], "need dt > 0 and T >= dt")
        need(cfg["px"] > 0, f"px={cfg['px']} must be > 0")
        w = cfg["window"]
        need(len(w) == 4 and w[0] < w[1] and 0 <= w[2] < w[3], f"window={w} must be x0<x1, 0<=y0<y1")
    if cmd == "render":
        need(cfg["format"] in ("png", "svg", "both"), f"format={cfg['format']} must be png, svg or both")
        need(cfg["size"] >= 16, f"size={cfg['size']} must be >= 16")
    if bad:
        raise CarpetLabError("validation", "; ".join(bad), fields=bad)


# ---------------------------------------------------------------- subcommands

def run_percolate(cfg, w):
    from .percolation import RetentionConfig, clusters, removed_boxes, sample
    tree = sample(RetentionConfig(cfg["N"], cfg["p"], cfg["depth"], cfg["seed"]))
    w.json("tree.json", tree.to_json())
    w.csv("levels.csv", ["level", "retained", "area"],
          [[n, tree.retained_count(n), fstr(tree.retained_area(n))] for n in range(cfg["depth"] + 1)])
    cs = clusters(removed_boxes(tree), cfg["rule"], base=cfg["N"], depth=cfg["depth"])
    w.json("clusters.json", cs.to_json())
    return {"area": fstr(tree.retained_area(cfg["depth"])), "clusters": len(cs.clusters)}


def _one_carpet(cfg, seed):
    from .carpet import dagger_sequence, star_trim, track_components, whyburn_report
    from .percolation import RetentionConfig, sample
    tree = sample(RetentionConfig(cfg["N"], cfg["p"], cfg["depth"] + cfg["budget"], seed))
    dag = dagger_sequence(tree, cfg["depth"], cfg["budget"])
    car = star_trim(dag)
    comps = track_components(car, check=False)
    return car, comps, whyburn_report(comps, car)


def run_carpet(cfg, w):
    seeds = [cfg["seed"] + s for s in range(cfg["samples"])]
    with ThreadPoolExecutor(workers()) as ex:
        results = list(ex.map(lambda s: _one_carpet(cfg, s), seeds))
    rows = []
    for seed, (car, comps, rep) in zip(seeds, results):
        rows.append([seed, int(rep.passed), "" if rep.min_gap is None else fstr(rep.min_gap),
                     len(comps.violations), len(comps.floor_violations), int(rep.areas_nonincreasing),
                     ";".join(rep.flags)])
        if cfg["checked"]:
            if comps.violations or comps.floor_violations:
                v = (comps.violations or comps.floor_violations)[0]
                raise InvariantViolation("gap-induction", f"seed {seed}: level {v[0]} pair {v[1:3]}",
                                         seed=seed, invariant="gap-induction")
            if not rep.passed or not rep.areas_nonincreasing:
                raise InvariantViolation("whyburn", f"seed {seed}", seed=seed, invariant="whyburn")
    car, comps, rep = results[0]
    w.json("carpet.json", car.to_json())
    w.json("whyburn.json", rep.to_json())
    w.csv("samples.csv", ["seed", "pass", "min_gap", "gap_violations", "floor_violations",
                          "area_nonincreasing", "flags"], rows)
    return {"passed": sum(r[1] for r in rows), "samples": len(rows)}


def run_theta(cfg, w):
    from .goodness import TWO_THIRDS, p0_threshold, theta_sequence
    seq = theta_sequence(cfg["N"], cfg["p"], cfg["M"])
    w.csv("theta.csv", ["m", "theta"], [[m, repr(v)] for m, v in enumerate(seq.values)])
    out = {"min": seq.min, "above_two_thirds": bool(seq.min >= TWO_THIRDS)}
    if cfg["threshold"]:
        t = p0_threshold(cfg["N"])
        out.update(p0=t.p0, nu=t.nu, sufficient_bound=t.sufficient_bound)
    return out


def run_paths(cfg, w):
    from .pathgraph import ScaleFamily, Box, cumulative_weight, enumerate_paths
    fam_doc = {}
    if cfg["family"]:
        with open(cfg["family"]) as f:
            fam_doc = json.load(f)
    fam = ScaleFamily(cfg["rho"], cfg["N"], {int(m): v for m, v in fam_doc.get("sites", {}).items()})
    x, y = cfg["start"]
    start = Box(x, y, 1, 0)
    rows = []
    sums = cumulative_weight(start, fam, Fraction(cfg["beta"]), cfg["L"], k=cfg["k"],
                             budget=cfg["budget"]).partial_sums
    for L in range(1, cfg["L"] + 1):
        e = enumerate_paths(start, cfg["k"], L, fam, budget=cfg["budget"])
        rows.append([cfg["k"], L, e.count, e.s0_fraction_violations(cfg["N"]), fstr(sums[L - 1])])
    w.csv("paths.csv", ["k", "L", "count", "s0_fraction_violations", "weight_partial_sum"], rows)
    return {"count": rows[-1][2]}


def run_gff(cfg, w):
    from .gff import green_matrix, harmonic_oscillation, nice_statistics, sample_fields, tail_fit, LatticeField
    n, T = cfg["n"], cfg["trials"]
    F = sample_fields(n, cfg["seed"], T, cap=cfg["cap"])
    cov_err = ""
    if n <= 32:
        X = F[:, 1:-1, 1:-1].reshape(T, -1)
        G = green_matrix(n)
        C = X.T @ X / T
        se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G ** 2) / T)
        cov_err = float((np.abs(C - G) / se).max())
    S = harmonic_oscillation(F, cfg["r"])
    sigma = S.std()
    fit = tail_fit(S, sigma * np.arange(1, 6))
    bad = ""
    try:
        st = nice_statistics(LatticeField(n, F[0]), cfg["nice_N"], 1, cfg["levels"])
        tab = st.table(cfg["M"])
        bad = ";".join(f"{tab.bad_fraction(j):.6g}" for j in sorted(tab.labels))
    except CarpetLabError:
        pass
    w.csv("gff.csv", ["grid", "window", "trials", "max_cov_error_stderr", "tail_fit_C", "tail_r2",
                      "bad_fraction_by_level"],
          [[n, cfg["r"], T, cov_err, fit.C_hat, fit.r_squared, bad]])
    return {"tail_r2": fit.r_squared}


def run_sle(cfg, w):
    from .loewner import Frame, bubble_graph, sample_driving, trace
    tr = trace(sample_driving(cfg["kappa"], cfg["T"], cfg["dt"], cfg["seed"]))
    w.json("trace.json", tr.to_json())
    w.csv("trace.csv", ["t", "x", "y"],
          [[repr(k * tr.dt), repr(float(p.real)), repr(float(p.imag))] for k, p in enumerate(tr.points)])
    g = bubble_graph(tr, Frame(*cfg["window"]), cfg["px"])
    w.csv("bubbles.csv", ["component", "pixel_diameter", "bounded", "bulk"],
          [[q + 1, int(g.diameters[q]), int(g.bounded[q]), int(g.bulk[q])] for q in range(g.count)])
    return {"capacity": tr.capacity, "components": g.count, "connected": g.connected}


def run_render(cfg, w):
    from .render import scene_for, to_png, to_svg
    with open(cfg["input"]) as f:
        doc = json.load(f)
    sc = scene_for(doc, cfg["size"])
    stem = os.path.splitext(os.path.basename(cfg["input"]))[0]
    if cfg["format"] in ("png", "both"):
        buf = io.BytesIO()
        to_png(sc, buf)
        w.write(stem + ".png", buf.getvalue())
    if cfg["format"] in ("svg", "both"):
        w.write(stem + ".svg", to_svg(sc))
    return {"rects": len(sc.rects)}


COMMANDS = {"percolate": run_percolate, "carpet": run_carpet, "theta": run_theta, "paths": run_paths,
            "gff": run_gff, "sle": run_sle, "render": run_render}


def build_parser():
    ap = argparse.ArgumentParser(prog="carpetlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--checked", action="store_true", help="exit 3 on any invariant violation")
        p.add_argument("--config", help="JSON file of option values (command line wins)")
        return p

    p = common(sub.add_parser("percolate", help="sample fractal percolation"))
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--p", type=float, default=0.8)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--rule", choices=["edge-adjacency", "corner-closure"], default="edge-adjacency")

    p = common(sub.add_parser("carpet", help="extract trimmed carpets and check gaps"))
    p.add_argument("--N", type=int, default=6)
    p.add_argument("--p", type=float, default=0.999)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--samples", type=int, default=1)

    p = common(sub.add_parser("theta", help="goodness recursion"))
    p.add_argument("--N", type=int, default=6)
    p.add_argument("--p", type=float, default=0.999)
    p.add_argument("--M", type=int, default=50)
    p.add_argument("--threshold", action="store_true", help="also compute p0(N)")

    p = common(sub.add_parser("paths", help="enumerate fractal paths"))
    p.add_argument("--rho", type=int, default=1)
    p.add_argument("--N", type=int, default=8)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--beta", default="1/20000")
    p.add_argument("--start", type=lambda s: tuple(int(v) for v in s.split(",")), default=(0, 0))
    p.add_argument("--family", help="JSON with {'sites': {m: [[x, y], ...]}}")
    p.add_argument("--budget", type=int, default=10 ** 7)

    p = common(sub.add_parser("gff", help="GFF sampling and fluctuation statistics"))
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--r", type=int, default=8, help="window half-width for the tail statistic")
    p.add_argument("--cap", type=int, default=128)
    p.add_argument("--nice-N", dest="nice_N", type=int, default=2)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--M", type=float, default=3.0)

    p = common(sub.add_parser("sle", help="Loewner trace and bubbles"))
    p.add_argument("--kappa", type=float, default=6.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--window", type=lambda s: [float(v) for v in s.split(",")], default=[-0.5, 0.5, 0.0, 1.0])
    p.add_argument("--px", type=float, default=0.02)

    p = common(sub.add_parser("render", help="PNG/SVG of a carpet, cluster set or trace"))
    p.add_argument("input")
    p.add_argument("--format", default="both")
    p.add_argument("--size", type=int, default=512)

    p = sub.add_parser("rerun", help="rerun from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's)")
    return ap


def _resolve(args, parser):
    cfg = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if getattr(args, "config", None):
        with open(args.config) as f:
            file_cfg = json.load(f)
        defaults = {a.dest: a.default for a in parser._subparsers._group_actions[0].choices[args.command]._actions}
        for k, v in file_cfg.items():
            if k in cfg and cfg[k] == defaults.get(k):
                cfg[k] = v
    for k, v in cfg.items():
        if isinstance(v, tuple):
            cfg[k] = list(v)
    return cfg


def execute(command, cfg):
    _validate(command, cfg)
    w = Writer(cfg["out"])
    summary = COMMANDS[command](cfg, w)
    w.json("manifest.json", {"format": "carpetlab/manifest", "version": __version__,
                             "command": command, "config": cfg, "outputs": sorted(w.files)})
    return summary


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            with open(args.manifest) as f:
                man = json.load(f)
            command, cfg = man["command"], dict(man["config"])
            if args.out:
                cfg["out"] = args.out
        else:
            command, cfg = args.command, _resolve(args, parser)
        summary = execute(command, cfg)
    except BudgetExceeded as e:
        _report(e)
        return EXIT_BUDGET
    except InvariantViolation as e:
        _report(e)
        return EXIT_INVARIANT
    except CarpetLabError as e:
        _report(e)
        return EXIT_VALIDATION
    print(json.dumps(summary, sort_keys=True, default=str))
    return EXIT_OK


def _report(e):
    print(json.dumps({"error": e.code, "message": str(e), "detail": e.detail}, default=str), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
