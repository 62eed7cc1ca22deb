"""Command-line front end: ``radiomap <command> ...``.

Results go to stdout, diagnostics to stderr; the exit status is 0 only when
the command completed. Options can also come from ``--config file.json``
(keys are option names with dashes replaced by underscores); explicit flags
win over the file, which wins over the built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, inpaint
from .core import ScalarGrid, Scene, Transmitter
from .exemplar import SimilarityWeights
from .io import read_grid, read_mask, render_pgm, write_grid, write_labels, write_mask
from .io import mse as mse_metric
from .io import ne as ne_metric
from .propagation import depth_map
from .superpixel import build_template, ers_segment
from .synth import ScenarioSpec, building_grid, generate, make_mask, random_scenario

METHODS = ("epc", "epd", "ept", "tpi", "mbi", "idw", "rbf", "mean")


def load_scene(path) -> Scene:
    spec = ScenarioSpec.load(path)
    return scene_from_spec(spec)


def scene_from_spec(spec: ScenarioSpec) -> Scene:
    return Scene(building_grid(spec), spec.cell_size_m,
                 tuple(Transmitter(t.position, t.power_dbm) for t in spec.transmitters))


def _add_method_options(p):
    g = p.add_argument_group("method parameters")
    g.add_argument("--patch-size", type=int, default=None,
                   help="patch size n (default 21 for epc/epd, 15 for ept and inside tpi)")
    g.add_argument("--beta", type=float, default=2.0, help="distance exponent of the radio factor")
    g.add_argument("--stride", type=int, default=None, help="exemplar search stride (default by map size)")
    g.add_argument("--lam", type=float, default=0.05, help="lasso weight for dictionary fills")
    g.add_argument("--atoms", type=int, default=500, help="dictionary size K")
    g.add_argument("--sparsity", type=int, default=10, help="OMP sparsity during training")
    g.add_argument("--train-iterations", type=int, default=10)
    g.add_argument("--train-samples", type=int, default=2000)
    g.add_argument("--no-propagation-priority", action="store_true",
                   help="drop the propagation factor (classic exemplar / dictionary inpainting)")
    g.add_argument("--superpixels", type=int, default=None, help="superpixel count (default cells/256)")
    g.add_argument("--balance", type=float, default=0.5, help="superpixel size-balancing strength")
    g.add_argument("--segment-with-map", action="store_true",
                   help="segment on buildings plus observed map values (tpi)")
    g.add_argument("--depth-model", choices=("idw", "ldpl"), default="idw")
    g.add_argument("--sigma", type=float, default=0.01, help="IDW depth-map decay exponent")
    g.add_argument("--m-top", type=int, default=5, help="exemplars kept per template fill")
    g.add_argument("--weights", type=float, nargs=4, default=None, metavar=("A", "B", "C", "D"),
                   help="template similarity weights: spectrum depth landscape distance")
    g.add_argument("--perturbation-method", choices=("epc", "epd"), default="epc")
    g.add_argument("--template-method", choices=("epc", "epd"), default="epc")
    g.add_argument("--eps-s", type=float, default=inpaint.TpiParams.eps_s, help="smoothing epsilon")
    g.add_argument("--smooth-passes", type=int, default=1)
    g.add_argument("--k-neighbors", type=int, default=32, help="IDW neighbor count")
    g.add_argument("--power", type=float, default=2.0, help="IDW power")
    g.add_argument("--kernel", choices=("thin_plate", "gaussian"), default="thin_plate")
    g.add_argument("--rbf-scale", type=float, default=8.0, help="Gaussian RBF width in cells")
    g.add_argument("--centers-cap", type=int, default=2000)
    g.add_argument("--seed", type=int, default=0)


def method_params(a: argparse.Namespace, method: str) -> dict:
    """Parameters actually used by ``method``, for echo and dispatch."""
    if method in ("epc", "epd"):
        return {"n": a.patch_size or 21, "beta": a.beta, "stride": a.stride, "lam": a.lam,
                "K": a.atoms, "sparsity": a.sparsity, "iterations": a.train_iterations,
                "n_train": a.train_samples, "seed": a.seed,
                "use_propagation": not a.no_propagation_priority}
    if method == "ept":
        return {**_template_params(a), "superpixels": a.superpixels, "balance": a.balance,
                "depth_model": a.depth_model, "sigma": a.sigma, "template_method": a.template_method}
    if method == "tpi":
        n = a.patch_size or 15
        return {"n": n, "beta": a.beta, "stride": a.stride, "lam": a.lam, "K": a.atoms,
                "sparsity": a.sparsity, "iterations": a.train_iterations, "n_train": a.train_samples,
                "seed": a.seed, "use_propagation": not a.no_propagation_priority,
                "perturbation_method": a.perturbation_method, "template_method": a.template_method,
                "superpixels": a.superpixels, "balance": a.balance,
                "segment_with_map": a.segment_with_map, "depth_model": a.depth_model,
                "sigma": a.sigma, "m_top": a.m_top, "weights": _weights(a), "eps_s": a.eps_s,
                "smooth_passes": a.smooth_passes}
    if method == "idw":
        return {"power": a.power, "k_neighbors": a.k_neighbors}
    if method == "rbf":
        return {"kernel": a.kernel, "centers_cap": a.centers_cap, "scale": a.rbf_scale, "seed": a.seed}
    return {}


def _weights(a):
    w = SimilarityWeights() if a.weights is None else SimilarityWeights(*a.weights)
    return (w.spectrum, w.depth, w.landscape, w.distance)


def _template_params(a):
    return {"n": a.patch_size or 15, "stride": a.stride, "weights": _weights(a), "m_top": a.m_top,
            "lam": a.lam, "K": a.atoms, "sparsity": a.sparsity, "iterations": a.train_iterations,
            "n_train": a.train_samples, "seed": a.seed}


def run_method(method: str, values: np.ndarray, observed: np.ndarray, scene: Scene,
               a: argparse.Namespace, log: inpaint.RunLog) -> np.ndarray:
    p = method_params(a, method)
    if method in ("epc", "epd"):
        return inpaint.run_small_scale(values, observed, scene, method, inpaint.ExemplarParams(**p), log=log)
    if method == "tpi":
        ex = inpaint.ExemplarParams(n=p["n"], beta=p["beta"], stride=p["stride"], lam=p["lam"], K=p["K"],
                                    sparsity=p["sparsity"], iterations=p["iterations"],
                                    n_train=p["n_train"], seed=p["seed"],
                                    use_propagation=p["use_propagation"])
        tp = inpaint.TemplateParams(**{**_template_params(a), "weights": SimilarityWeights(*p["weights"])})
        params = inpaint.TpiParams(ex, tp, p["perturbation_method"], p["template_method"], p["superpixels"],
                                   p["balance"], p["segment_with_map"], p["depth_model"], p["sigma"],
                                   p["eps_s"], p["smooth_passes"])
        res = inpaint.run_tpi(values, observed, scene, params, full=True)
        log.stages.update(res.log.stages)
        log.rounds.extend(res.log.rounds)
        return res.values
    if method == "ept":
        # template inpainting on its own: cells of superpixels without observations are filled
        seg = log.timed("superpixels", ers_segment, scene.buildings.astype(np.float64), p["superpixels"],
                        balance=p["balance"])
        t, t_def = build_template(values, observed, seg.labels)
        if t_def.all():
            return np.where(observed, values, t)
        dm = log.timed("depth map", depth_map, scene, p["depth_model"], p["sigma"], values, observed)
        tp = inpaint.TemplateParams(**{**_template_params(a), "weights": SimilarityWeights(*p["weights"])})
        out = inpaint.run_template(t, t_def, scene, dm.values, p["template_method"], tp, log=log)
        return np.where(observed, values, out)
    if method == "mbi":
        return baselines.mbi(values, observed, scene)
    if method == "idw":
        return baselines.idw_interp(values, observed, **p)
    if method == "rbf":
        return baselines.rbf_interp(values, observed, **p)
    if method == "mean":
        return baselines.mean_fill(values, observed)
    raise ValueError(f"unknown method {method!r}")


def _observed_of(grid: ScalarGrid, mask_path) -> np.ndarray:
    if mask_path is not None:
        obs = read_mask(mask_path).observed
        if obs.shape != grid.shape:
            raise ValueError(f"mask shape {obs.shape} != map shape {grid.shape}")
        return obs & grid.mask().observed
    return grid.mask().observed


# --- commands -----------------------------------------------------------------

def cmd_scenario(a):
    spec = random_scenario(a.seed, rows=a.rows, cols=a.cols, n_tx=a.n_tx)
    Path(a.out).write_text(spec.to_json() + "\n")
    print(f"wrote {a.out}")


def cmd_generate(a):
    spec = ScenarioSpec.load(a.spec)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth, scene = generate(spec)
    write_grid(out / "truth.rmg", truth)
    (out / "scene.json").write_text(spec.to_json() + "\n")
    write_grid(out / "buildings.rmg", scene.buildings.astype(np.float64), units="unitless")
    written = ["truth.rmg", "scene.json", "buildings.rmg"]
    if a.hole_size:
        mask = make_mask(truth.shape, n_regions=a.holes, size=a.hole_size, seed=a.seed)
    elif a.rect:
        mask = make_mask(truth.shape, rect=a.rect)
    else:
        mask = None
    if mask is not None:
        write_mask(out / "mask.rmg", mask)
        write_grid(out / "observed.rmg", truth.data, observed=mask.observed, units="dBm")
        written += ["mask.rmg", "observed.rmg"]
    for name in written:
        print(out / name)


def cmd_inpaint(a):
    grid = read_grid(a.map)
    obs = _observed_of(grid, a.mask)
    scene = load_scene(a.scene)
    if scene.shape != grid.shape:
        raise ValueError(f"scene shape {scene.shape} != map shape {grid.shape}")
    params = method_params(a, a.method)
    print(f"method={a.method} " + " ".join(f"{k}={v}" for k, v in params.items()))
    log = inpaint.RunLog()
    t0 = time.perf_counter()
    est = run_method(a.method, grid.raw(), obs, scene, a, log)
    total = time.perf_counter() - t0
    write_grid(a.out, est, units=grid.units)
    for name, sec in log.stages.items():
        print(f"stage {name}: {sec:.3f}s")
    print(f"total: {total:.3f}s, rounds: {len(log.rounds)}, missing cells: {int((~obs).sum())}")


def cmd_eval(a):
    truth = read_grid(a.truth)
    est = read_grid(a.estimate)
    if truth.shape != est.shape:
        raise ValueError(f"shape mismatch {truth.shape} vs {est.shape}")
    region = read_mask(a.mask).missing
    if not region.any():
        raise ValueError("mask has no missing cells to evaluate")
    if not (truth.mask().observed[region].all() and est.mask().observed[region].all()):
        raise ValueError("truth and estimate must be defined on every evaluated cell")
    print(f"mse={mse_metric(truth, est, region)!r} ne={ne_metric(truth, est, region)!r}")


SUITE_DEFAULTS = {"seeds": 10, "sizes": [16, 24, 32, 48], "methods": list(METHODS),
                  "rows": 128, "cols": 128, "n_tx": 3, "params": {}}


def load_suite(path) -> dict:
    suite = dict(SUITE_DEFAULTS)
    if path is not None:
        given = json.loads(Path(path).read_text())
        unknown = set(given) - set(SUITE_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown suite fields: {sorted(unknown)}")
        suite.update(given)
    seeds = suite["seeds"]
    suite["seeds"] = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    bad = set(suite["methods"]) - set(METHODS)
    if bad:
        raise ValueError(f"unknown methods in suite: {sorted(bad)}")
    return suite


def bench_rows(suite: dict, base: argparse.Namespace, timing: bool = True):
    """Yield ``(method, seed, size, mse, ne, seconds)`` sorted by seed, size, method order."""
    for seed in suite["seeds"]:
        spec = random_scenario(seed, rows=suite["rows"], cols=suite["cols"], n_tx=suite["n_tx"])
        truth, _ = generate(spec)
        scene = scene_from_spec(spec)
        values = truth.raw()
        for size in suite["sizes"]:
            mask = make_mask(truth.shape, n_regions=1, size=int(size), seed=seed)
            for method in suite["methods"]:
                a = argparse.Namespace(**vars(base))
                for k, v in {**suite["params"].get("*", {}), **suite["params"].get(method, {})}.items():
                    setattr(a, k, v)
                a.seed = seed
                t0 = time.perf_counter()
                est = run_method(method, values, mask.observed, scene, a, inpaint.RunLog())
                sec = time.perf_counter() - t0 if timing else 0.0
                yield (method, seed, int(size), mse_metric(values, est, mask), ne_metric(values, est, mask), sec)


def cmd_bench(a):
    suite = load_suite(a.suite)
    n = 0
    with open(a.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "seed", "size", "mse", "ne", "seconds"])
        for method, seed, size, m, e, sec in bench_rows(suite, a, timing=not a.no_timing):
            w.writerow([method, seed, size, repr(m), repr(e), f"{sec:.3f}"])
            f.flush()
            n += 1
            print(f"{method} seed={seed} size={size} mse={m:.4g}", file=sys.stderr)
    print(f"wrote {n} rows to {a.out}")


def cmd_depthmap(a):
    scene = load_scene(a.scene)
    values = observed = None
    if a.model == "ldpl":
        if a.map is None:
            raise ValueError("--model ldpl needs --map (and optionally --mask)")
        grid = read_grid(a.map)
        observed = _observed_of(grid, a.mask)
        values = grid.raw()
    dm = depth_map(scene, a.model, a.sigma, values, observed)
    write_grid(a.out, dm.values, units="normalized")
    print(f"wrote {a.out}" + (" (degenerate: zero span)" if dm.degenerate else ""))


def cmd_superpixels(a):
    scene = load_scene(a.scene)
    seg = ers_segment(scene.buildings.astype(np.float64), a.superpixels, balance=a.balance)
    write_labels(a.out, seg.labels)
    sizes = seg.sizes()
    print(f"K={seg.K} alpha={seg.alpha:.6g} sizes min={sizes.min()} max={sizes.max()}")


def cmd_render(a):
    grid = read_grid(a.grid)
    render_pgm(grid, a.out, None if a.range is None else tuple(a.range))
    print(f"wrote {a.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radiomap", description="Radiomap inpainting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="write a random urban scenario spec (JSON)")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=128)
    p.add_argument("--cols", type=int, default=128)
    p.add_argument("--n-tx", type=int, default=3)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("generate", help="ground truth, scene and mask files from a scenario spec")
    p.add_argument("spec")
    p.add_argument("out_dir")
    p.add_argument("--hole-size", type=int, default=0, help="side of square random holes")
    p.add_argument("--holes", type=int, default=1, help="number of random holes")
    p.add_argument("--rect", type=int, nargs=4, metavar=("ROW", "COL", "M", "N"), default=None)
    p.add_argument("--seed", type=int, default=0, help="hole placement seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("inpaint", help="reconstruct the missing cells of a map")
    p.add_argument("map")
    p.add_argument("mask", help="mask file (1 observed, 0 missing); '-' to use the map's NA cells")
    p.add_argument("scene")
    p.add_argument("out")
    p.add_argument("--method", choices=METHODS, default="tpi")
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    _add_method_options(p)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("eval", help="MSE and NE over the missing cells of a mask")
    p.add_argument("truth")
    p.add_argument("estimate")
    p.add_argument("mask")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run the seeded benchmark suite and write a CSV")
    p.add_argument("suite", nargs="?", default=None, help="suite JSON (defaults if omitted)")
    p.add_argument("out")
    p.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column")
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    _add_method_options(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("depthmap", help="radio depth map of a scene")
    p.add_argument("scene")
    p.add_argument("out")
    p.add_argument("--model", choices=("idw", "ldpl"), default="idw")
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--map", default=None)
    p.add_argument("--mask", default=None)
    p.set_defaults(func=cmd_depthmap)

    p = sub.add_parser("superpixels", help="superpixel labeling of a scene's building map")
    p.add_argument("scene")
    p.add_argument("out")
    p.add_argument("--superpixels", type=int, default=None)
    p.add_argument("--balance", type=float, default=0.5)
    p.set_defaults(func=cmd_superpixels)

    p = sub.add_parser("render", help="render a grid as a PGM image")
    p.add_argument("grid")
    p.add_argument("out")
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"), default=None)
    p.set_defaults(func=cmd_render)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        cfg = json.loads(Path(cfg_path).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown keys in {cfg_path}: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = _parse(parser, argv)
    if getattr(args, "mask", None) == "-":
        args.mask = None
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"radiomap {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
