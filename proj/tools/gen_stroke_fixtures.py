#!/usr/bin/env python3
"""Generate stroke rasterization fixtures with an exact rational-arithmetic oracle.

Each fixture holds a StrokeSet (coordinates on a quarter-pixel grid) and the expected
mask, computed by brute force over every pixel center with exact Fractions.

Usage: gen_stroke_fixtures.py OUT_JSON
"""

import json
import random
import sys
from fractions import Fraction as F


def dist2_to_segment(p, a, b):
    """Exact squared distance from point p to segment ab."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    len2 = dx * dx + dy * dy
    if len2 == 0:
        t = F(0)
    else:
        t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2
        t = min(F(1), max(F(0), t))
    qx, qy = a[0] + t * dx, a[1] + t * dy
    return (p[0] - qx) ** 2 + (p[1] - qy) ** 2


def rasterize(strokeset):
    w, h = strokeset["canvas"]
    rows = []
    for y in range(h):
        row = []
        for x in range(w):
            c = (F(2 * x + 1, 2), F(2 * y + 1, 2))
            hit = False
            for s in strokeset["strokes"]:
                r2 = F(s["radius"]) ** 2
                pts = [(F(px), F(py)) for px, py in s["points"]]
                segs = list(zip(pts, pts[1:])) or [(pts[0], pts[0])]
                if any(dist2_to_segment(c, a, b) <= r2 for a, b in segs):
                    hit = True
                    break
            row.append("1" if hit else "0")
        rows.append("".join(row))
    return rows


def quarter(rng, hi):
    return rng.randint(0, int(hi * 4)) / 4


def random_strokeset(rng, w, h):
    strokes = []
    for _ in range(rng.randint(1, 4)):
        n = rng.randint(1, 5)
        pts = [[quarter(rng, w), quarter(rng, h)] for _ in range(n)]
        strokes.append({"points": pts, "radius": rng.choice([1, 1.25, 1.5, 2, 2.5, 3, 4])})
    return {"canvas": [w, h], "strokes": strokes}


def handmade():
    return [
        ("empty", {"canvas": [8, 6], "strokes": []}),
        ("single_point_center", {"canvas": [9, 9], "strokes": [{"points": [[4.5, 4.5]], "radius": 1}]}),
        ("single_point_corner", {"canvas": [9, 9], "strokes": [{"points": [[0, 0]], "radius": 1}]}),
        ("single_point_far_corner", {"canvas": [9, 7], "strokes": [{"points": [[9, 7]], "radius": 2}]}),
        ("horizontal_on_centers", {"canvas": [24, 8], "strokes": [{"points": [[2.5, 3.5], [20.5, 3.5]], "radius": 1}]}),
        ("vertical_between_centers", {"canvas": [8, 24], "strokes": [{"points": [[4, 2], [4, 21]], "radius": 1}]}),
        ("diagonal", {"canvas": [20, 20], "strokes": [{"points": [[1, 1], [19, 19]], "radius": 1.5}]}),
        ("repeated_point", {"canvas": [12, 12], "strokes": [{"points": [[6, 6], [6, 6], [6, 6]], "radius": 2}]}),
        ("polyline_turn", {"canvas": [24, 24], "strokes": [{"points": [[2, 2], [20, 2], [20, 20]], "radius": 2}]}),
        ("border_edge", {"canvas": [16, 10], "strokes": [{"points": [[0, 5], [16, 5]], "radius": 1}]}),
    ]


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "stroke_fixtures.json"
    rng = random.Random(20241016)
    cases = handmade()
    while len(cases) < 25:
        w, h = rng.randint(8, 40), rng.randint(8, 40)
        cases.append((f"random_{len(cases):02d}", random_strokeset(rng, w, h)))
    fixtures = []
    for name, ss in cases:
        rows = rasterize(ss)
        fixtures.append({"name": name, "strokeset": ss, "popcount": sum(r.count("1") for r in rows), "mask": rows})
    with open(out, "w") as f:
        json.dump(fixtures, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
