"""Composite frequency nodes and trapezoid weights shared by noise and filterfn."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Features:
    """Frequency structure of a spectrum that a quadrature grid must resolve.

    windows : list of (lo, hi)
        Bands that get ``window_nodes`` linearly spaced nodes.
    tails : list of (center, inner, outer)
        Geometric offsets ``inner..outer`` placed on both sides of ``center``.
    breaks : list of float
        Discontinuities or kinks; nodes are placed just either side.
    points : list of float
        Extra nodes (e.g. tabulated abscissae).
    support : (lo, hi)
        Lowest and highest frequency that must be covered.
    lowest_scale : float
        Narrowest feature width, used for sampling resolution checks.
    highest : float
        Highest frequency carrying appreciable power.
    """

    windows: list = field(default_factory=list)
    tails: list = field(default_factory=list)
    breaks: list = field(default_factory=list)
    points: list = field(default_factory=list)
    support: tuple = (np.inf, 0.0)
    lowest_scale: float = np.inf
    highest: float = 0.0


def composite_nodes(
    lo: float,
    hi: float,
    features: list[Features],
    per_decade: int = 80,
    window_nodes: int = 200,
    tail_per_decade: int = 40,
    uniform_step: float | None = None,
) -> np.ndarray:
    """Strictly increasing positive nodes on ``[lo, hi]``."""
    if not (0 < lo < hi):
        raise ValueError(f"invalid node range [{lo}, {hi}]")
    n_log = int(np.ceil(np.log10(hi / lo) * per_decade)) + 1
    parts = [np.geomspace(lo, hi, n_log)]
    if uniform_step:
        parts.append(np.arange(uniform_step, hi, uniform_step))
    for feat in features:
        for a, b in feat.windows:
            a, b = max(a, lo), min(b, hi)
            if b > a:
                parts.append(np.linspace(a, b, window_nodes))
        for c, inner, outer in feat.tails:
            if outer <= inner:
                continue
            n = int(np.ceil(np.log10(outer / inner) * tail_per_decade)) + 1
            off = np.geomspace(inner, outer, n)
            parts.extend([c - off, c + off])
        for d in feat.breaks:
            parts.append(np.array([d * (1 - 1e-9), d, d * (1 + 1e-9)]))
        if feat.points:
            parts.append(np.asarray(feat.points, dtype=float))
    nodes = np.concatenate(parts)
    nodes = nodes[(nodes >= lo) & (nodes <= hi)]
    nodes = np.unique(nodes)
    keep = np.concatenate([[True], np.diff(nodes) > 1e-13 * nodes[1:]])
    return nodes[keep]


def trapezoid_weights(nodes: np.ndarray, dc_cap: bool = True) -> np.ndarray:
    """Trapezoid weights; with ``dc_cap`` the first node also covers ``[0, w0]``."""
    w = np.empty_like(nodes)
    gaps = np.diff(nodes)
    w[0] = gaps[0] / 2
    w[-1] = gaps[-1] / 2
    w[1:-1] = (gaps[:-1] + gaps[1:]) / 2
    if dc_cap:
        w[0] += nodes[0]
    return w
