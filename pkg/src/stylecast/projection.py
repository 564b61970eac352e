"""Two-stage dimensionality reduction of latents, overlay casting, SVG output.

Stage 1 builds a fuzzy k-nearest-neighbor graph: per-node bisection
finds the kernel width sigma so the neighbor weights sum to log2(k),
then directed weights are symmetrized by fuzzy union. Stage 2 lays the
nodes out in 2-D by stochastic attraction along edges and repulsion
against sampled non-neighbors, with a linearly decaying learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import text
from .fileio import atomic_write_bytes, atomic_write_text
from .model import ModelConfig, extract_latent
from .tensor import Tensor

SIGMA_TOL = 1e-6
SIGMA_ITERS = 128
GRAD_CLIP = 4.0

# 11-color palette, one per news section at full scale.
PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8",
]

OVERLAY_LABEL = -1


class ProjectionError(ValueError):
    pass


@dataclass
class FuzzyGraph:
    """Directed kNN weights plus their fuzzy-union symmetrization."""

    n: int
    k: int
    neighbors: np.ndarray        # [n, k] indices
    weights: np.ndarray          # [n, k] directed weights in (0, 1]
    rhos: np.ndarray
    sigmas: np.ndarray
    sym_edges: list[tuple[int, int, float]] = field(default_factory=list)


@dataclass
class LayoutPoint:
    x: float
    y: float
    label: int
    is_overlay: bool = False


@dataclass
class ProjectionResult:
    """Frozen layout plus the latents that produced it, for overlay casting."""

    points: list[LayoutPoint]
    latents: np.ndarray
    k: int


def smooth_sigma(dists: np.ndarray, k: int) -> tuple[float, float]:
    """rho = nearest distance; sigma solved so sum exp(-(d-rho)+/sigma) = log2(k).

    Bounded bisection; when several neighbors tie at rho the target can be
    unattainable and the closest sigma is returned.
    """
    rho = float(dists.min())
    adj = np.maximum(dists - rho, 0.0)
    target = math.log2(k)
    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(SIGMA_ITERS):
        psum = float(np.exp(-adj / mid).sum())
        if abs(psum - target) < SIGMA_TOL:
            break
        if psum > target:
            hi = mid
            mid = (lo + hi) / 2.0
        else:
            lo = mid
            mid = mid * 2.0 if hi == math.inf else (lo + hi) / 2.0
    return rho, mid


def fuzzy_knn_graph(points: np.ndarray, k: int) -> FuzzyGraph:
    """Brute-force exact kNN graph with locally adaptive weights."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 2:
        raise ProjectionError(f"k must be >= 2, got {k}")
    if n <= k:
        raise ProjectionError(f"need more points ({n}) than neighbors ({k})")
    sq = (pts ** 2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T), 0.0)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, np.inf)

    neighbors = np.zeros((n, k), dtype=np.int64)
    weights = np.zeros((n, k), dtype=np.float64)
    rhos = np.zeros(n)
    sigmas = np.zeros(n)
    for i in range(n):
        idx = np.argpartition(dist[i], k)[:k]
        idx = idx[np.argsort(dist[i][idx], kind="stable")]
        nd = dist[i][idx]
        rho, sigma = smooth_sigma(nd, k)
        neighbors[i] = idx
        weights[i] = np.exp(-np.maximum(nd - rho, 0.0) / sigma)
        rhos[i] = rho
        sigmas[i] = sigma

    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j, w in zip(neighbors[i], weights[i]):
            directed[(i, int(j))] = float(w)
    sym: dict[tuple[int, int], float] = {}
    for (i, j), w in directed.items():
        key = (min(i, j), max(i, j))
        if key in sym:
            continue
        wr = directed.get((j, i), 0.0)
        sym[key] = w + wr - w * wr
    edges = [(i, j, w) for (i, j), w in sorted(sym.items())]
    return FuzzyGraph(n=n, k=k, neighbors=neighbors, weights=weights,
                      rhos=rhos, sigmas=sigmas, sym_edges=edges)


def optimize_layout(graph: FuzzyGraph, dims: int = 2, epochs: int = 200,
                    seed: int = 0, a: float = 1.58, b: float = 0.9,
                    negative_samples: int = 5, initial_lr: float = 1.0,
                    labels: list[int] | None = None) -> list[LayoutPoint]:
    """Stochastic 2-D layout of a symmetrized fuzzy graph.

    Per epoch every edge pulls its endpoints together with strength
    proportional to its weight along the curve a*d^2b / (1 + a*d^2b);
    each edge also fires `negative_samples` repulsions from the head
    against randomly drawn non-neighbors. Deterministic under seed.
    """
    if dims != 2:
        raise ProjectionError("layout emits 2-D scatter points only")
    if not graph.sym_edges:
        raise ProjectionError("cannot lay out an empty graph")
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-10.0, 10.0, size=(graph.n, dims))
    neighbor_sets = [set() for _ in range(graph.n)]
    for i, j, _ in graph.sym_edges:
        neighbor_sets[i].add(j)
        neighbor_sets[j].add(i)

    clip = GRAD_CLIP
    for epoch in range(epochs):
        alpha = initial_lr * (1.0 - epoch / epochs)
        for i, j, w in graph.sym_edges:
            dx = emb[i, 0] - emb[j, 0]
            dy = emb[i, 1] - emb[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2 ** b + 1.0)
                gx = max(-clip, min(clip, coeff * dx)) * w
                gy = max(-clip, min(clip, coeff * dy)) * w
                emb[i, 0] += alpha * gx
                emb[i, 1] += alpha * gy
                emb[j, 0] -= alpha * gx
                emb[j, 1] -= alpha * gy
            for _ in range(negative_samples):
                other = int(rng.integers(graph.n))
                if other == i or other in neighbor_sets[i]:
                    continue
                dx = emb[i, 0] - emb[other, 0]
                dy = emb[i, 1] - emb[other, 1]
                d2 = dx * dx + dy * dy
                coeff = (2.0 * b) / ((0.001 + d2) * (a * d2 ** b + 1.0))
                emb[i, 0] += alpha * max(-clip, min(clip, coeff * dx))
                emb[i, 1] += alpha * max(-clip, min(clip, coeff * dy))

    lab = labels if labels is not None else [0] * graph.n
    return [LayoutPoint(float(emb[i, 0]), float(emb[i, 1]), int(lab[i]))
            for i in range(graph.n)]


def project_latents(latents: np.ndarray, labels: list[int], k: int = 15,
                    epochs: int = 200, seed: int = 0) -> ProjectionResult:
    """Stage 1 + stage 2 over a latent matrix, retaining it for overlays."""
    graph = fuzzy_knn_graph(latents, k)
    points = optimize_layout(graph, epochs=epochs, seed=seed, labels=labels)
    return ProjectionResult(points=points, latents=np.asarray(latents, dtype=np.float64), k=k)


def cast_latent(latent: np.ndarray, result: ProjectionResult) -> LayoutPoint:
    """Interpolate a new latent onto the frozen layout via its kNN kernel weights."""
    if not result.points:
        raise ProjectionError("cannot cast onto an untrained layout")
    vec = np.asarray(latent, dtype=np.float64)
    dist = np.sqrt(((result.latents - vec) ** 2).sum(axis=1))
    k = min(result.k, len(dist))
    idx = np.argpartition(dist, k - 1)[:k] if k < len(dist) else np.arange(len(dist))
    idx = idx[np.argsort(dist[idx], kind="stable")]
    nd = dist[idx]
    rho, sigma = smooth_sigma(nd, max(k, 2))
    w = np.exp(-np.maximum(nd - rho, 0.0) / sigma)
    w /= w.sum()
    x = float(sum(wi * result.points[i].x for wi, i in zip(w, idx)))
    y = float(sum(wi * result.points[i].y for wi, i in zip(w, idx)))
    return LayoutPoint(x, y, OVERLAY_LABEL, is_overlay=True)


def cast_overlay(phrase: str, params: dict[str, Tensor], config: ModelConfig,
                 vocab: text.Vocab, result: ProjectionResult) -> LayoutPoint:
    """Run a phrase through the classifier and cast its latent onto the layout."""
    ids = text.encode_title(phrase, vocab, config.max_seq)
    latent = extract_latent(params, config, ids).data
    return cast_latent(latent, result)


# -- latent file interface ---------------------------------------------------------


def write_latents(path: str | Path, latents: np.ndarray) -> None:
    arr = np.ascontiguousarray(latents, dtype="<f4")
    if arr.ndim != 2:
        raise ProjectionError(f"latents must be 2-D, got shape {arr.shape}")
    header = np.array(arr.shape, dtype="<u4").tobytes()
    atomic_write_bytes(path, header + arr.tobytes())


def read_latents(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise ProjectionError(f"latent file {path} is truncated")
    n, d = np.frombuffer(blob[:8], dtype="<u4")
    body = np.frombuffer(blob[8:], dtype="<f4")
    if body.size != int(n) * int(d):
        raise ProjectionError(f"latent file {path}: expected {n}x{d} floats, got {body.size}")
    return body.reshape(int(n), int(d)).astype(np.float32)


# -- scatter output ----------------------------------------------------------------


def emit_scatter_svg(points: list[LayoutPoint], class_names: list[str],
                     path: str | Path, size: int = 1000, radius: int = 3) -> None:
    """Write an SVG 1.1 scatter: one circle per point, overlays black on top."""
    if not points:
        raise ProjectionError("no points to plot")
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    margin = 0.05 * size
    span = size - 2.0 * margin

    def scaled(v: float, lo: float, hi: float) -> float:
        if hi == lo:
            return size / 2.0
        return margin + (v - lo) / (hi - lo) * span

    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)

    def color(p: LayoutPoint) -> str:
        if p.is_overlay:
            return "#000000"
        return PALETTE[p.label % len(PALETTE)]

    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#ffffff"/>',
    ]
    ordered = [p for p in points if not p.is_overlay] + [p for p in points if p.is_overlay]
    for p in ordered:
        cx = scaled(p.x, x_lo, x_hi)
        cy = size - scaled(p.y, y_lo, y_hi)
        body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius}" fill="{color(p)}"/>')
    lx = size - 190
    ly = 30
    body.append('<g font-family="sans-serif" font-size="14">')
    for i, name in enumerate(class_names):
        cy = ly + 20 * i
        body.append(f'<circle cx="{lx}" cy="{cy - 5}" r="5" fill="{PALETTE[i % len(PALETTE)]}"/>')
        body.append(f'<text x="{lx + 12}" y="{cy}">{escape(name)}</text>')
    if any(p.is_overlay for p in points):
        cy = ly + 20 * len(class_names)
        body.append(f'<circle cx="{lx}" cy="{cy - 5}" r="5" fill="#000000"/>')
        body.append(f'<text x="{lx + 12}" y="{cy}">cast phrase</text>')
    body.append("</g>")
    body.append("</svg>")
    atomic_write_text(path, "\n".join(body) + "\n")
