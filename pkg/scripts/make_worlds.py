"""Regenerate the bundled ASCII worlds: lava-tube-like passages carved from rock.

    python scripts/make_worlds.py

Each tube is a polyline of (x, y, radius) waypoints in blocks; the carved
width wobbles with a seeded noise so walls are not perfectly smooth.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "teamexplore" / "worlds"


def carve(cols, rows, tubes, boulders, seed):
    rng = np.random.default_rng(seed)
    rock = np.ones((rows, cols), dtype=bool)
    yy, xx = np.mgrid[0:rows, 0:cols] + 0.5
    for tube in tubes:
        for (x0, y0, r0), (x1, y1, r1) in zip(tube, tube[1:]):
            n = int(np.hypot(x1 - x0, y1 - y0) * 2) + 1
            for t in np.linspace(0.0, 1.0, n):
                cx, cy = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
                r = r0 + t * (r1 - r0) + rng.normal(0, 0.25)
                rock[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = False
    for bx, by, bw, bh in boulders:
        rock[by : by + bh, bx : bx + bw] = True
    return rock


def render(rock, spawn, station):
    sx0, sy0, sx1, sy1 = spawn
    chars = np.where(rock, "#", ".")
    chars[sy0:sy1, sx0:sx1] = "S"
    cx, cy = station
    chars[cy, cx] = "C"
    return "\n".join("".join(row) for row in chars) + "\n"


WORLDS = {
    # 20 m x 20 m
    "tube20": dict(
        cols=40,
        rows=40,
        seed=11,
        spawn=(3, 17, 9, 23),
        station=(2, 20),
        tubes=[
            [(5, 20, 4.5), (14, 19, 3), (22, 22, 2.5), (30, 20, 3), (37, 14, 2.5), (36, 5, 2.5)],
            [(14, 19, 2.5), (15, 10, 2), (22, 5, 3), (30, 5, 2)],
            [(22, 22, 2.5), (20, 30, 2), (27, 35, 4), (35, 33, 2)],
            [(8, 24, 2), (8, 33, 2.5), (15, 35, 2)],
        ],
        boulders=[(27, 34, 2, 1), (21, 4, 1, 2), (33, 19, 1, 1)],
    ),
    # 40 m x 40 m
    "tube40": dict(
        cols=80,
        rows=80,
        seed=23,
        spawn=(4, 33, 16, 45),
        station=(3, 39),
        tubes=[
            [(9, 39, 8), (24, 38, 4), (38, 42, 3.5), (52, 38, 4), (66, 30, 3.5), (74, 16, 3), (70, 5, 3)],
            [(24, 38, 3), (26, 24, 3), (36, 14, 4), (50, 10, 3), (60, 6, 2.5)],
            [(38, 42, 3), (34, 56, 3), (44, 66, 5), (58, 70, 3), (72, 72, 3)],
            [(10, 46, 3), (12, 60, 3), (20, 72, 3.5), (32, 74, 2.5)],
            [(26, 24, 2.5), (14, 18, 3), (8, 8, 3.5)],
            [(52, 38, 3), (60, 50, 3), (72, 54, 3)],
            [(44, 66, 3), (50, 54, 2.5), (60, 50, 2.5)],
        ],
        boulders=[(43, 64, 2, 2), (36, 13, 1, 2), (66, 29, 2, 1), (20, 71, 1, 1), (8, 7, 2, 1)],
    ),
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, w in WORLDS.items():
        rock = carve(w["cols"], w["rows"], w["tubes"], w["boulders"], w["seed"])
        sx0, sy0, sx1, sy1 = w["spawn"]
        rock[sy0:sy1, sx0:sx1] = False
        cx, cy = w["station"]
        rock[cy, cx] = False
        (OUT / f"{name}.txt").write_text(render(rock, w["spawn"], w["station"]))
        print(f"{name}: free fraction {1 - rock.mean():.2f}")


if __name__ == "__main__":
    main()
