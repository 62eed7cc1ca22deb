"""Patch-by-patch radiomap inpainting.

``run_small_scale`` fills the missing region from its front inward with
propagation-aware priorities, ``run_template`` does the same on a superpixel
template using depth-map priorities and similarity-ranked exemplars, and
``run_tpi`` chains both on the template / perturbation split.

Internally each run works on a copy normalized to [0, 1] over the observed
cells; observed cells of the returned array are the input values themselves.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (AffineParams, RegionMask, ScalarGrid, Scene, as_arrays, extract_patch, front_mask,
                   window_offsets)
from .dictionary import PatchDictionary, epd_fill, sample_training_patches, train_ksvd
from .exemplar import (NoExemplarError, SimilarityWeights, default_stride, epc_fill, epc_search,
                       full_window_origins, source_window, template_exemplar_select)
from .priority import (PriorityRecord, boundary_normals, confidence, data_scalar, depth_factor,
                       observed_gradient, propagation_term)
from .propagation import block_map, depth_map, per_tx_weights
from .superpixel import build_perturbation, build_template, ers_segment, segmentation_signal


class InpaintError(RuntimeError):
    """A fill run could not finish; ``state`` carries a diagnostic snapshot."""

    def __init__(self, message: str, state: Optional[dict] = None):
        self.state = state or {}
        if self.state:
            message = message + " | " + ", ".join(f"{k}={v}" for k, v in self.state.items())
        super().__init__(message)


@dataclass(frozen=True)
class ExemplarParams:
    n: int = 21
    beta: float = 2.0
    stride: Optional[int] = None  # None: 1 up to 256x256, 2 above
    lam: float = 0.05
    K: int = 500
    sparsity: int = 10
    iterations: int = 10
    n_train: int = 2000
    seed: int = 0
    use_propagation: bool = True
    tx_weights: Optional[tuple] = None


@dataclass(frozen=True)
class TemplateParams:
    n: int = 15
    stride: Optional[int] = None
    weights: SimilarityWeights = SimilarityWeights()
    m_top: int = 5
    lam: float = 0.05
    K: int = 500
    sparsity: int = 10
    iterations: int = 10
    n_train: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class TpiParams:
    perturbation: ExemplarParams = ExemplarParams(n=15)
    template: TemplateParams = TemplateParams()
    perturbation_method: str = "epc"
    template_method: str = "epc"
    superpixels: Optional[int] = None  # None: one per 256 cells
    balance: float = 0.5
    segment_with_map: bool = False  # add observed map values to the segmentation signal
    depth_model: str = "idw"
    sigma: float = 0.01
    eps_s: float = 0.05  # on the [0, 1] scale of the observed range
    smooth_passes: int = 1


@dataclass
class RunLog:
    """Per-round priority factors and per-stage timings."""

    rounds: list = field(default_factory=list)  # (PriorityRecord, filled cell count)
    stages: dict = field(default_factory=dict)

    def timed(self, name: str, fn: Callable, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0
        return out


def _scale(values, observed) -> AffineParams:
    v = values[observed]
    lo, hi = float(v.min()), float(v.max())
    return AffineParams(lo, hi - lo if hi > lo else 1.0)


def _finish(values, observed, filled_norm, scale: AffineParams) -> np.ndarray:
    out = scale.invert(filled_norm)
    out[observed] = values[observed]
    return out


def _fill_loop(x, known, n, score, fill, log: Optional[RunLog], what: str):
    """Shared front-to-center loop; ``score`` returns records for front cells."""
    conf = known.astype(np.float64)
    start_missing = int((~known).sum())
    rnd = 0
    while not known.all():
        rnd += 1
        front = front_mask(known)
        cells = list(zip(*np.nonzero(front)))
        if not cells:
            raise InpaintError(f"{what}: missing cells are not reachable from the observed region",
                               {"round": rnd, "missing": int((~known).sum())})
        records = score(x, known, conf, cells)
        pr = np.array([r.priority for r in records])
        if not pr.max() > 0:
            # nothing scores: rank by confidence alone so the run still terminates
            pr = np.array([r.confidence for r in records])
        best = records[int(np.argmax(pr))]
        patch = extract_patch(x, known, best.center, n)
        new = fill(x, known, patch)
        gr, gc, pr_, pc = window_offsets(best.center, n, x.shape)
        todo = patch.valid & ~patch.observed
        sub = todo[pr_, pc]
        vals = new[pr_, pc][sub]
        if sub.sum() == 0 or not np.isfinite(vals).all():
            raise InpaintError(f"{what}: fill made no progress", {
                "round": rnd, "center": best.center, "priority": best.priority,
                "missing": int((~known).sum()), "front": len(cells),
                "patch_observed": patch.observed_count()})
        xs, ks, cs = x[gr, gc], known[gr, gc], conf[gr, gc]
        xs[sub] = vals
        cs[sub] = best.confidence
        ks[sub] = True
        if log is not None:
            log.rounds.append((best, int(sub.sum())))
        if rnd > start_missing:
            raise InpaintError(f"{what}: round limit exceeded", {"round": rnd})
    return x


def _train(values, observed, n, K, sparsity, iterations, count, seed, extra=()) -> PatchDictionary:
    samples = sample_training_patches(values, observed, n, count=count, seed=seed, extra=extra)
    if not np.any(samples):
        # flat observed map: every code is zero, so any unit atoms reproduce it
        return PatchDictionary(np.eye(n * n)[:, :min(K, n * n)], n)
    return train_ksvd(samples, min(K, len(samples)), iterations=iterations, sparsity=sparsity,
                      seed=seed, patch_size=n)


def run_small_scale(radiomap, mask=None, scene: Optional[Scene] = None, method: str = "epc",
                    params: ExemplarParams = ExemplarParams(), dictionary: Optional[PatchDictionary] = None,
                    log: Optional[RunLog] = None) -> np.ndarray:
    """Exemplar inpainting with confidence x data x propagation priority.

    ``method`` is ``"epc"`` (copy the best observed window) or ``"epd"``
    (sparse reconstruction over a dictionary learned from observed windows).
    With ``use_propagation=False`` the propagation factor is 1, which is
    classic exemplar (or dictionary) inpainting.
    """
    values, obs = as_arrays(radiomap, mask)
    if method not in ("epc", "epd"):
        raise ValueError(f"unknown small-scale method {method!r}")
    if obs.all():
        return values.copy()
    n = params.n
    scale = _scale(values, obs)
    x = np.where(obs, scale.apply(values), 0.0)
    known = obs.copy()

    if params.use_propagation:
        if scene is None:
            raise ValueError("propagation priority needs a scene")
        scene.require_transmitters()
        if scene.shape != values.shape:
            raise ValueError(f"scene shape {scene.shape} != map shape {values.shape}")
        blocks = [block_map(scene, k) for k in range(len(scene.transmitters))]
        weights = per_tx_weights(scene, params.tx_weights)

    stride = params.stride or default_stride(values.shape)
    if method == "epc":
        origins = full_window_origins(obs, n, stride)
        if len(origins) == 0:
            raise NoExemplarError(f"no fully observed {n}x{n} window; use a smaller patch size")
        source = x.copy()

        def fill(x, known, patch):
            m = epc_search(source, obs, patch, origins=origins)
            return epc_fill(patch, source_window(source, m.origin, n))
    else:
        if dictionary is None:
            dictionary = _time(log, "dictionary", _train, x, obs, n, params.K, params.sparsity,
                               params.iterations, params.n_train, params.seed)

        def fill(x, known, patch):
            return epd_fill(dictionary, patch, params.lam)

    def score(x, known, conf, cells):
        nr, nc = boundary_normals(known)
        grad = observed_gradient(x, known)
        out = []
        for c in cells:
            normal = (float(nr[c]), float(nc[c]))
            cf = confidence(conf, known, c, n)
            d = data_scalar(x, known, c, n, normal=normal, gradient=grad)
            prop = (propagation_term(scene, c, normal, params.beta, blocks, weights)
                    if params.use_propagation else 1.0)
            out.append(PriorityRecord((int(c[0]), int(c[1])), cf, d, prop, cf * d * prop))
        return out

    _time(log, "fill", _fill_loop, x, known, n, score, fill, log, f"{method} inpainting")
    return _finish(values, obs, x, scale)


def _time(log, name, fn, *args, **kw):
    if log is None:
        return fn(*args, **kw)
    return log.timed(name, fn, *args, **kw)


def run_template(template, mask=None, scene: Optional[Scene] = None, depth=None, method: str = "epc",
                 params: TemplateParams = TemplateParams(), landscape=None,
                 log: Optional[RunLog] = None) -> np.ndarray:
    """Template inpainting with confidence x data x depth-smoothness priority.

    Exemplars are ranked by the four-term similarity (template values, depth
    map, landscape, center distance). EPC copies the best one; EPD codes the
    target over the learned dictionary extended by the ``m_top`` exemplars.
    """
    values, obs = as_arrays(template, mask)
    if method not in ("epc", "epd"):
        raise ValueError(f"unknown template method {method!r}")
    if obs.all():
        return values.copy()
    n = params.n
    if depth is None:
        if scene is None:
            raise ValueError("template inpainting needs a depth map or a scene")
        depth = depth_map(scene).values
    depth = np.asarray(getattr(depth, "values", depth), dtype=np.float64)
    if landscape is None:
        landscape = (scene.buildings if scene is not None else np.zeros(values.shape))
    landscape = np.asarray(landscape, dtype=np.float64)
    if depth.shape != values.shape or landscape.shape != values.shape:
        raise ValueError("depth map and landscape must match the template shape")

    scale = _scale(values, obs)
    x = np.where(obs, scale.apply(values), 0.0)
    source = x.copy()
    known = obs.copy()
    stride = params.stride or default_stride(values.shape)
    origins = full_window_origins(obs, n, stride)
    if len(origins) == 0:
        raise NoExemplarError(f"no fully observed {n}x{n} window; use a smaller patch size")
    dictionary = None
    if method == "epd":
        dictionary = _time(log, "dictionary", _train, x, obs, n, params.K, params.sparsity,
                           params.iterations, params.n_train, params.seed)

    def fill(x, known, patch):
        top = template_exemplar_select(origins, patch, source, depth, landscape, params.weights,
                                       params.m_top)
        if method == "epc":
            return epc_fill(patch, source_window(source, top[0].origin, n))
        extra = np.column_stack([source_window(source, m.origin, n).ravel() for m in top])
        norms = np.linalg.norm(extra, axis=0)
        extra = extra[:, norms > 0] / norms[norms > 0]
        atoms = np.hstack([dictionary.atoms, extra])
        return epd_fill(PatchDictionary(atoms, n), patch, params.lam)

    def score(x, known, conf, cells):
        nr, nc = boundary_normals(known)
        grad = observed_gradient(x, known)
        out = []
        for c in cells:
            normal = (float(nr[c]), float(nc[c]))
            cf = confidence(conf, known, c, n)
            d = data_scalar(x, known, c, n, normal=normal, gradient=grad)
            v = depth_factor(depth, known, c, n)
            out.append(PriorityRecord((int(c[0]), int(c[1])), cf, d, v, cf * d * v))
        return out

    _time(log, "template fill", _fill_loop, x, known, n, score, fill, log, f"template {method} inpainting")
    return _finish(values, obs, x, scale)


def giw_smooth(grid, region, eps_s: float = 0.01, passes: int = 1) -> np.ndarray:
    """Gradient-inverse-weighted 3x3 smoothing of the ``region`` cells.

    Neighbor weights are ``1 / (|x_j - x_center| + eps_s)`` (the center gets
    ``1 / eps_s``); out-of-grid neighbors are ignored. Each pass reads the
    previous pass's values. Cells outside ``region`` are returned unchanged.
    """
    if not eps_s > 0:
        raise ValueError("eps_s must be positive")
    x = np.array(grid.raw() if isinstance(grid, ScalarGrid) else grid, dtype=np.float64)
    region = np.asarray(region.missing if isinstance(region, RegionMask) else region, dtype=bool)
    if region.shape != x.shape:
        raise ValueError("region and grid shapes differ")
    rows, cols = x.shape
    for _ in range(passes):
        p = np.pad(x, 1, mode="edge")
        inside = np.pad(np.ones_like(x, dtype=bool), 1, constant_values=False)
        num = np.zeros_like(x)
        den = np.zeros_like(x)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                xj = p[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
                ok = inside[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
                w = np.where(ok, 1.0 / (np.abs(xj - x) + eps_s), 0.0)
                num += w * xj
                den += w
        x = np.where(region, num / den, x)
    return x


@dataclass
class TpiResult:
    values: np.ndarray
    template: np.ndarray  # inpainted template (normalized scale)
    perturbation: np.ndarray  # inpainted perturbation (normalized scale)
    labels: np.ndarray
    log: RunLog


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (InpaintError, NoExemplarError, ValueError) as e:
        raise InpaintError(f"[{name}] {e}", getattr(e, "state", None)) from e


def run_tpi(radiomap, mask=None, scene: Optional[Scene] = None, params: TpiParams = TpiParams(),
            full: bool = False):
    """Template / perturbation inpainting.

    Superpixels of the building map give a piecewise-constant template of the
    (normalized) observed map; template and residual perturbation are
    inpainted separately, summed, and the missing region is smoothed.
    Returns the reconstructed array, or a :class:`TpiResult` with ``full=True``.
    """
    values, obs = as_arrays(radiomap, mask)
    if scene is None:
        raise ValueError("TPI needs a scene")
    scene.require_transmitters()
    log = RunLog()
    if obs.all():
        out = values.copy()
        return TpiResult(out, out, np.zeros_like(out), np.zeros(out.shape, int), log) if full else out

    scale = _scale(values, obs)
    r = np.where(obs, scale.apply(values), 0.0)
    signal = segmentation_signal(scene.buildings, r if params.segment_with_map else None, obs)
    seg = log.timed("superpixels", _stage, "superpixels", ers_segment, signal, params.superpixels,
                    balance=params.balance)
    t, t_def = build_template(r, obs, seg.labels)
    h = build_perturbation(r, t, obs)

    h_fill = log.timed("perturbation", _stage, "perturbation", run_small_scale, h, obs, scene,
                       params.perturbation_method, params.perturbation, log=log)
    if t_def.all():
        t_fill = t
    else:
        dm = log.timed("depth map", depth_map, scene, params.depth_model, params.sigma, r, obs)
        t_fill = log.timed("template", _stage, "template", run_template, t, t_def, scene, dm.values,
                           params.template_method, params.template, None, log)
    combined = t_fill + h_fill
    miss = ~obs
    if params.smooth_passes > 0:
        combined = log.timed("smoothing", giw_smooth, combined, miss, params.eps_s, params.smooth_passes)
    out = _finish(values, obs, combined, scale)
    if full:
        return TpiResult(out, t_fill, h_fill, seg.labels, log)
    return out
