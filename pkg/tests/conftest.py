"""Shared builders for toy networks and demand used across the test suite."""

from __future__ import annotations

import random

import pytest

from poolmarket.network import Network, TravelTimeProfile


def make_line_network(n=10, spacing_m=500.0, speed_mps=10.0, profile=None, zones=None):
    """Nodes 0..n-1 on a line, bidirectional edges of equal length."""
    nodes = {i: (float(i) * spacing_m, 0.0) for i in range(n)}
    tt = spacing_m / speed_mps
    edges = []
    for i in range(n - 1):
        edges.append((i, i + 1, spacing_m, tt))
        edges.append((i + 1, i, spacing_m, tt))
    return Network(nodes, edges, zones=zones, profile=profile)


def make_grid_network(rows=4, cols=5, spacing_m=400.0, speed_mps=10.0, profile=None,
                      zone_split=None):
    """Rectangular grid, bidirectional edges; optional quadrant zones."""
    nodes = {}
    for r in range(rows):
        for c in range(cols):
            nodes[r * cols + c] = (c * spacing_m, r * spacing_m)
    tt = spacing_m / speed_mps
    edges = []
    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c
            if c + 1 < cols:
                edges.append((nid, nid + 1, spacing_m, tt))
                edges.append((nid + 1, nid, spacing_m, tt))
            if r + 1 < rows:
                edges.append((nid, nid + cols, spacing_m, tt))
                edges.append((nid + cols, nid, spacing_m, tt))
    zones = None
    if zone_split:
        zones = {}
        for r in range(rows):
            for c in range(cols):
                zones[r * cols + c] = (0 if c < cols // 2 else 1) + (0 if r < rows // 2 else 2)
    return Network(nodes, edges, profile=profile, zones=zones)


def make_random_network(seed, n_nodes=8, extra_edges=6, profile=None):
    """Strongly connected random graph: a ring plus random chords."""
    rng = random.Random(seed)
    nodes = {i: (rng.uniform(0, 2000), rng.uniform(0, 2000)) for i in range(n_nodes)}
    edges = {}
    for i in range(n_nodes):
        j = (i + 1) % n_nodes
        edges[(i, j)] = (rng.uniform(200, 800), rng.uniform(30, 120))
    added = 0
    while added < extra_edges:
        u = rng.randrange(n_nodes)
        v = rng.randrange(n_nodes)
        if u == v or (u, v) in edges:
            continue
        edges[(u, v)] = (rng.uniform(200, 800), rng.uniform(20, 100))
        added += 1
    edge_list = [(u, v, ln, tt) for (u, v), (ln, tt) in sorted(edges.items())]
    return Network(nodes, edge_list, profile=profile)


def enumerate_min_travel_time(network, origin, dest):
    """Oracle: minimum base travel time over all simple paths (tiny graphs only)."""
    best = [float("inf")]

    def walk(u, t, seen):
        if u == dest:
            best[0] = min(best[0], t)
            return
        for v, tt, _ in network._adj[u]:
            if v not in seen:
                seen.add(v)
                walk(v, t + tt, seen)
                seen.remove(v)

    walk(origin, 0.0, {origin})
    return best[0]


@pytest.fixture
def line10():
    return make_line_network(10)
