"""CSV and minimal SVG emitters (polylines only, no plotting dependency)."""

from __future__ import annotations

import numpy as np


def write_wireframe_csv(path, rows: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write("line_id,t,x1,x2,y1,y2\n")
        for line_id, t, x1, x2, y1, y2 in rows:
            f.write(f"{int(line_id)},{float(t)!r},{float(x1)!r},{float(x2)!r},"
                    f"{float(y1)!r},{float(y2)!r}\n")


def write_surface_csv(path, rows: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write("s1,s2,W,Wquasi\n")
        for s1, s2, w, wq in rows:
            f.write(f"{float(s1)!r},{float(s2)!r},{float(w)!r},{float(wq)!r}\n")


def _polyline(points, color: str, width: float = 1.0) -> str:
    pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in points)
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>')


def write_wireframe_svg(path, rows: np.ndarray, size: int = 540) -> None:
    """Reference grid (black) and deformed grid (red) as SVG polylines."""
    ref = rows[:, 2:4]
    img = rows[:, 4:6]
    allpts = np.vstack([ref, img])
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    margin = 0.06 * size

    def to_px(p):
        x = margin + (p[0] - lo[0]) / span * (size - 2 * margin)
        y = size - margin - (p[1] - lo[1]) / span * (size - 2 * margin)
        return x, y

    lines: dict[int, list] = {}
    for row in rows:
        lines.setdefault(int(row[0]), []).append(row)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for pts in lines.values():
        parts.append(_polyline([to_px(p[2:4]) for p in pts], "black", 0.8))
    for pts in lines.values():
        parts.append(_polyline([to_px(p[4:6]) for p in pts], "red", 1.2))
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))


def write_surface_svg(path, rows: np.ndarray, size: int = 540) -> None:
    """Isometric wireframe of W (black) over W_quasi (blue), polylines only."""
    s1s = np.unique(rows[:, 0])
    s2s = np.unique(rows[:, 1])
    table_w = rows[:, 2].reshape(len(s1s), len(s2s))
    table_q = rows[:, 3].reshape(len(s1s), len(s2s))
    zmax = float(max(table_w.max(), 1e-9))

    def proj(i, j, z):
        # simple isometric projection of (s1, s2, z)
        u = (i - j) * 0.8
        v = (i + j) * 0.4 - z / zmax * (len(s1s) * 0.9)
        return u, v

    pts = []
    for surf in (table_w, table_q):
        for i in range(len(s1s)):
            for j in range(len(s2s)):
                pts.append(proj(i, j, surf[i, j]))
    pts = np.asarray(pts)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    margin = 0.06 * size

    def to_px(p):
        x = margin + (p[0] - lo[0]) / span * (size - 2 * margin)
        y = margin + (p[1] - lo[1]) / span * (size - 2 * margin)
        return x, y

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size}" viewBox="0 0 {size} {size}">']
    for surf, color in ((table_q, "blue"), (table_w, "black")):
        for i in range(len(s1s)):
            parts.append(_polyline(
                [to_px(proj(i, j, surf[i, j])) for j in range(len(s2s))], color, 0.8))
        for j in range(len(s2s)):
            parts.append(_polyline(
                [to_px(proj(i, j, surf[i, j])) for i in range(len(s1s))], color, 0.8))
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
