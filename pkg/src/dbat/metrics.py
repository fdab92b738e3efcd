"""Accuracy metrics, boundary-distance estimation and decision-region rasters."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .attacks import pgd
from .inference import attack_surface, predict
from .tensor import as_matrix, forward

EVAL_CHUNK = 4096


def _check_nonempty(dataset):
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")


def natural_accuracy(model, dataset, proj="max"):
    _check_nonempty(dataset)
    pred = predict(model, dataset.features, proj, dataset.num_classes)
    return float(np.mean(pred == dataset.labels))


def adversarial_examples(model, dataset, attack, threat, seed=0):
    """Attack every example through the surface implied by ``threat``."""
    surface = attack_surface(model, threat, dataset.num_classes)
    rng = np.random.default_rng(seed)
    x, y = dataset.features, dataset.labels
    parts = [pgd(surface, x[i:i + EVAL_CHUNK], y[i:i + EVAL_CHUNK], attack, rng) for i in range(0, len(y), EVAL_CHUNK)]
    return np.concatenate(parts, axis=0)


def robust_accuracy(model, dataset, attack, threat, seed=0):
    """Fraction still classified correctly (with the defender's projection) after attack."""
    _check_nonempty(dataset)
    x_adv = adversarial_examples(model, dataset, attack, threat, seed)
    pred = predict(model, x_adv, threat.defender_projection, dataset.num_classes)
    return float(np.mean(pred == dataset.labels))


def f1_robust(natural, robust):
    """Harmonic mean of natural and robust accuracy (0 when both are 0)."""
    for v in (natural, robust):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    if natural + robust == 0:
        return 0.0
    return 2.0 * natural * robust / (natural + robust)


@dataclass
class EvalReport:
    natural_acc: float
    robust_acc: dict = field(default_factory=dict)
    n_examples: int = 0
    seed: int = 0
    config_digest: str = ""

    @property
    def f1_robust(self):
        # scored against the strongest adversary evaluated
        if not self.robust_acc:
            return f1_robust(self.natural_acc, 0.0)
        return f1_robust(self.natural_acc, min(self.robust_acc.values()))

    def columns(self):
        return ["natural_acc"] + [f"robust_acc_{k}" for k in self.robust_acc] + [
            "f1_robust", "n_examples", "seed", "config_digest"]

    def values(self):
        return [repr(self.natural_acc)] + [repr(v) for v in self.robust_acc.values()] + [
            repr(self.f1_robust), str(self.n_examples), str(self.seed), self.config_digest]


def write_reports_csv(reports, path, header_comment=None, extra=None):
    """One row per report; ``extra`` is a list of (column, per-row values) prepended."""
    extra = extra or []
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name for name, _ in extra] + reports[0].columns())
        for i, rep in enumerate(reports):
            w.writerow([str(vals[i]) for _, vals in extra] + rep.values())


@dataclass
class BoundaryHistogram:
    edges: np.ndarray
    counts: np.ndarray
    distances: np.ndarray
    censored: np.ndarray
    max_radius: float

    def write_csv(self, path, header_comment=None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(f"# bins={len(self.counts)} max_radius={self.max_radius!r} censored={int(self.censored.sum())}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def _unit_directions(rng, shape):
    g = rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def boundary_distances(model, x, n_directions=1000, growth_factor=0.002, proj="max", num_classes=None,
                       max_radius=1.0, seed=0, refine_steps=40, chunk_rows=200_000):
    """Distance from each row of ``x`` to the nearest prediction change along random directions.

    All directions are probed at radii growth_factor, 2*growth_factor, ...; at
    the first radius where any direction changes the prediction, the crossing
    on each changed direction is bisected inside the last interval and the
    smallest crossing is kept. Points with no change up to ``max_radius`` are
    censored and reported at ``max_radius``.
    """
    if n_directions < 1:
        raise ValueError("n_directions must be >= 1")
    if not growth_factor > 0:
        raise ValueError("growth_factor must be > 0")
    x = as_matrix(x, "x")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    dirs = _unit_directions(rng, (n, n_directions, d))
    base = predict(model, x, proj, num_classes)
    dist = np.full(n, float(max_radius))
    censored = np.ones(n, dtype=bool)

    def pred_at(pts_idx, radii, dir_sel):
        pts = x[pts_idx][:, None, :] + radii[..., None] * dir_sel
        flat = pts.reshape(-1, d)
        out = np.empty(flat.shape[0], dtype=np.int64)
        for s in range(0, flat.shape[0], chunk_rows):
            out[s:s + chunk_rows] = predict(model, flat[s:s + chunk_rows], proj, num_classes)
        return out.reshape(pts.shape[:2])

    active = np.arange(n)
    n_steps = int(np.ceil(max_radius / growth_factor - 1e-9))
    for k in range(1, n_steps + 1):
        if active.size == 0:
            break
        r = min(k * growth_factor, max_radius)
        flips = pred_at(active, np.full((active.size, n_directions), r), dirs[active]) != base[active][:, None]
        hit = flips.any(axis=1)
        if not hit.any():
            continue
        pts = active[hit]
        lo = np.full((pts.size, n_directions), (k - 1) * growth_factor)
        hi = np.full((pts.size, n_directions), r)
        mask = flips[hit]
        for _ in range(refine_steps):
            mid = 0.5 * (lo + hi)
            changed = pred_at(pts, mid, dirs[pts]) != base[pts][:, None]
            hi = np.where(changed, mid, hi)
            lo = np.where(changed, lo, mid)
        dist[pts] = np.where(mask, hi, np.inf).min(axis=1)
        censored[pts] = False
        active = active[~hit]
    return dist, censored


def data_diameter(features):
    x = as_matrix(features)
    return float(np.linalg.norm(x.max(axis=0) - x.min(axis=0)))


def boundary_distance_histogram(model, dataset, n_directions=1000, growth_factor=0.002, proj="max",
                                max_radius=None, n_points=None, bins=20, seed=0):
    """Histogram of estimated boundary distances over (a seeded sample of) ``dataset``."""
    rng = np.random.default_rng(seed)
    x = dataset.features
    if n_points is not None and n_points < len(dataset):
        x = x[np.sort(rng.choice(len(dataset), n_points, replace=False))]
    if max_radius is None:
        max_radius = 10.0 * max(data_diameter(dataset.features), growth_factor)
    dist, censored = boundary_distances(model, x, n_directions, growth_factor, proj, dataset.num_classes,
                                        max_radius, seed=rng)
    top = float(dist.max()) if dist.size and dist.max() > 0 else 1.0
    counts, edges = np.histogram(dist, bins=bins, range=(0.0, top))
    return BoundaryHistogram(edges, counts, dist, censored, float(max_radius))


def raster_grid(bounds, resolution):
    """Cell centers of a resolution x resolution grid; row 0 is the top (largest y)."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not (xmin < xmax and ymin < ymax):
        raise ValueError(f"degenerate bounds {bounds}")
    cx = xmin + (np.arange(resolution) + 0.5) * (xmax - xmin) / resolution
    cy = ymax - (np.arange(resolution) + 0.5) * (ymax - ymin) / resolution
    gx, gy = np.meshgrid(cx, cy)
    return np.column_stack([gx.ravel(), gy.ravel()])


def decision_boundary_raster(model, bounds, resolution, proj="max", show_all_2C=False, num_classes=None):
    """Class map over a 2-D grid. ``show_all_2C`` gives the raw argmax over every output."""
    if model.in_dim != 2:
        raise ValueError(f"rasters need a 2-D input model, got in_dim={model.in_dim}")
    pts = raster_grid(bounds, resolution)
    if show_all_2C:
        logits, _ = forward(model, pts)
        ids = np.argmax(logits, axis=1)
    else:
        ids = predict(model, pts, proj, num_classes)
    return ids.reshape(resolution, resolution)


def write_raster_csv(grid, path, bounds, header_comment=None):
    """Grid CSV (first row = top of the plot) plus a ``.meta`` sidecar with bounds and resolution."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in grid:
            w.writerow([int(v) for v in row])
    with open(f"{path}.meta", "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        xmin, xmax, ymin, ymax = bounds
        fh.write(f"xmin={xmin!r}\nxmax={xmax!r}\nymin={ymin!r}\nymax={ymax!r}\nresolution={grid.shape[0]}\n")
