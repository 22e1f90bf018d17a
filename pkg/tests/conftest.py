from __future__ import annotations

import functools

import numpy as np
import pytest
from hypothesis import settings
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from roomforge import fixtures
from roomforge.arrange import Arranger
from roomforge.geometry import OrientedBox

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def solved(name: str, seed: int = 0):
    scene, rules = fixtures.load(name)
    arranger = Arranger(scene, rules)
    return arranger, arranger.solve(seed)


def grid_distances(obst: np.ndarray, start) -> np.ndarray:
    """Path lengths from ``start`` over an explicit 8-connected graph
    (diagonals cost sqrt 2 and may not cut an obstructed corner)."""
    h, w = obst.shape
    free = ~obst
    idx = np.arange(h * w).reshape(h, w)
    rows, cols, vals = [], [], []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if (dr, dc) == (0, 0):
                continue
            r0, r1 = max(0, -dr), h - max(0, dr)
            c0, c1 = max(0, -dc), w - max(0, dc)
            ok = free[r0:r1, c0:c1] & free[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
            if dr and dc:
                ok &= free[r0 + dr:r1 + dr, c0:c1] & free[r0:r1, c0 + dc:c1 + dc]
            rows.append(idx[r0:r1, c0:c1][ok])
            cols.append(idx[r0 + dr:r1 + dr, c0 + dc:c1 + dc][ok])
            vals.append(np.full(ok.sum(), 2 ** 0.5 if dr and dc else 1.0))
    g = coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, h * w))
    return dijkstra(g.tocsr(), indices=start[0] * w + start[1]).reshape(h, w)


def mc_iou(a: OrientedBox, b: OrientedBox, n: int, seed: int) -> float:
    """Monte-Carlo IoU: sample inside the smaller box, count hits inside the other."""
    if b.volume < a.volume:
        a, b = b, a
    rng = np.random.default_rng(seed)
    local = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array(a.half_extents)
    ca, sa = np.cos(a.yaw), np.sin(a.yaw)
    world = np.empty_like(local)
    world[:, 0] = a.center[0] + ca * local[:, 0] - sa * local[:, 1]
    world[:, 1] = a.center[1] + sa * local[:, 0] + ca * local[:, 1]
    world[:, 2] = a.center[2] + local[:, 2]
    d = world - np.array(b.center)
    cb, sb = np.cos(b.yaw), np.sin(b.yaw)
    bx = cb * d[:, 0] + sb * d[:, 1]
    by = -sb * d[:, 0] + cb * d[:, 1]
    hx, hy, hz = b.half_extents
    inside = (np.abs(bx) <= hx) & (np.abs(by) <= hy) & (np.abs(d[:, 2]) <= hz)
    inter = a.volume * inside.mean()
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


def random_box_pair(rng: np.random.Generator) -> tuple[OrientedBox, OrientedBox]:
    def one():
        return OrientedBox(
            tuple(rng.uniform(-0.4, 0.4, 3)),
            tuple(rng.uniform(0.2, 0.8, 3)),
            float(rng.uniform(0, 2 * np.pi)),
        )

    return one(), one()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
