"""Synthetic fixture cases.

None of these are published benchmark data.  The 14-bus case reuses the
familiar IEEE 14-bus line list and reactances for its topology, but costs,
capacities and line ratings are made up so that a handful of price regions
appear under moderate load variation.
"""
from __future__ import annotations

import numpy as np

from .grid import GridCase

# A large rating that never binds in the small fixtures.
UNLIMITED = 1e3


def single_bus_case() -> GridCase:
    """Three generators costing 1, 2 and 3 serving one load.

    Modelled as a star of three buses joined by lines that never congest, so
    all prices coincide; the load sits on bus 0.
    """
    return GridCase.from_lines(
        3, [(0, 1, 1.0, UNLIMITED), (0, 2, 1.0, UNLIMITED)],
        cost=[1.0, 2.0, 3.0], xmax=[1.0, 1.0, 1.0], load_nominal=[1.5, 0.0, 0.0],
        name="single_bus")


def two_bus_case() -> GridCase:
    """Cheap generation at bus 0, expensive at bus 1, one line rated 2."""
    return GridCase.from_lines(
        2, [(0, 1, 1.0, 2.0)], cost=[1.0, 3.0], xmax=[10.0, 10.0],
        load_nominal=[1.0, 4.0], name="two_bus")


def triangle_case(susceptance=(1.0, 2.0, 4.0), fmax=(UNLIMITED, UNLIMITED, UNLIMITED)) -> GridCase:
    """Three buses in a loop; lines (0,1), (1,2), (2,0)."""
    b = susceptance
    return GridCase.from_lines(
        3, [(0, 1, b[0], fmax[0]), (1, 2, b[1], fmax[1]), (2, 0, b[2], fmax[2])],
        cost=[1.0, 2.0, 4.0], xmax=[3.0, 3.0, 3.0], load_nominal=[0.5, 0.5, 2.0],
        name="triangle")


def congested_triangle_case() -> GridCase:
    """Triangle where the cheap generator is boxed in by one weak line."""
    return GridCase.from_lines(
        3, [(0, 1, 1.0, 2.0), (1, 2, 1.0, 3.0), (2, 0, 1.0, 1.0)],
        cost=[1.0, 2.0, 4.0], xmax=[4.0, 2.0, 4.0], load_nominal=[0.5, 0.5, 3.0],
        name="congested_triangle")


# IEEE 14-bus topology (0-based buses) with per-unit reactances.
_IEEE14_LINES = [
    (0, 1, 0.05917), (0, 4, 0.22304), (1, 2, 0.19797), (1, 3, 0.17632),
    (1, 4, 0.17388), (2, 3, 0.17103), (3, 4, 0.04211), (3, 6, 0.20912),
    (3, 8, 0.55618), (4, 5, 0.25202), (5, 10, 0.19890), (5, 11, 0.25581),
    (5, 12, 0.13027), (6, 7, 0.17615), (6, 8, 0.11001), (8, 9, 0.08450),
    (8, 13, 0.27038), (9, 10, 0.19207), (11, 12, 0.19988), (12, 13, 0.34802),
]
_IEEE14_LOAD = [0.0, 21.7, 94.2, 47.8, 7.6, 11.2, 0.0, 0.0, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9]


def ieee14_like_case(line_rating=None) -> GridCase:
    """Synthetic 14-bus case on the IEEE 14-bus topology.

    Generators sit at buses 0, 1, 2, 5 and 7 with distinct costs.  Line
    flows use susceptances ``1/x`` in MW per radian at a 100 MVA base.
    """
    rating = {0: 160.0, 1: 60.0, 2: 70.0, 3: 60.0, 4: 50.0, 5: 40.0, 6: 70.0,
              7: 45.0, 8: 35.0, 9: 45.0, 10: 30.0, 11: 30.0, 12: 40.0, 13: 40.0,
              14: 45.0, 15: 30.0, 16: 30.0, 17: 30.0, 18: 30.0, 19: 30.0}
    if line_rating is not None:
        rating.update(line_rating)
    lines = [(i, j, 100.0 / x, rating[e]) for e, (i, j, x) in enumerate(_IEEE14_LINES)]
    cost = np.full(14, 0.0)
    xmax = np.zeros(14)
    for bus, c, cap in [(0, 20.0, 140.0), (1, 30.0, 80.0), (2, 40.0, 60.0),
                        (5, 50.0, 50.0), (7, 60.0, 50.0)]:
        cost[bus] = c
        xmax[bus] = cap
    return GridCase.from_lines(14, lines, cost=cost, xmax=xmax,
                               load_nominal=np.array(_IEEE14_LOAD), name="ieee14_like")


def random_case(n, extra_lines=1, seed=0, congested=True) -> GridCase:
    """Random connected case: a random tree plus ``extra_lines`` chords."""
    rng = np.random.default_rng(seed)
    lines = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        lines.append((u, v))
    existing = set(lines)
    tries = 0
    while len(lines) < n - 1 + extra_lines and tries < 100:
        tries += 1
        u, v = sorted(int(a) for a in rng.choice(n, size=2, replace=False))
        if (u, v) not in existing:
            existing.add((u, v))
            lines.append((u, v))
    b = rng.uniform(0.5, 3.0, size=len(lines))
    fmax = rng.uniform(0.5, 2.0, size=len(lines)) if congested else np.full(len(lines), UNLIMITED)
    cost = rng.uniform(1.0, 10.0, size=n)
    xmax = rng.uniform(1.0, 3.0, size=n)
    load = rng.uniform(0.2, 1.0, size=n)
    return GridCase.from_lines(n, [(u, v, bb, ff) for (u, v), bb, ff in zip(lines, b, fmax)],
                               cost=cost, xmax=xmax, load_nominal=load, name=f"random{n}_{seed}")


FIXTURES = {
    "single_bus": single_bus_case,
    "two_bus": two_bus_case,
    "triangle": triangle_case,
    "congested_triangle": congested_triangle_case,
    "ieee14_like": ieee14_like_case,
}
