"""Result persistence: CSV tables, run records, and minimal SVG charts.

Every output file carries the configuration digest so results can always
be traced back to the exact experiment that produced them.  CSV files are
UTF-8 with a header row and provenance comment lines of the form
``# key=value`` above it; floats are written with 17 significant digits so
round-tripping is lossless.  SVG charts are self-contained line plots,
one chart per file, written without any plotting dependency.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path


def config_digest(config: dict) -> str:
    """Stable short hash of a configuration mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows, digest: str, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        f.write(f"# config_digest={digest}\n")
        for k, v in (meta or {}).items():
            f.write(f"# {k}={_fmt(v)}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")
    return path


@dataclass
class RunRecord:
    """Summary of one CLI run: inputs, outputs, and the key scalars."""

    command: str
    config_digest: str
    seed: int
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)
    scalars: dict = field(default_factory=dict)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "wall_time_s": self.wall_time,
            "outputs": [str(p) for p in self.outputs],
            "scalars": {k: v for k, v in sorted(self.scalars.items())},
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path


class StopWatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False


# ---------------------------------------------------------------------------
# minimal SVG line charts

_SVG_COLORS = ("#1f5fa8", "#c0392b", "#1e8449", "#7d3c98", "#b7950b", "#2c3e50")


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** int(f"{raw:e}".split("e")[1])
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if m * mag >= raw:
            step = m * mag
            break
    first = step * int(lo / step + (0.0 if lo <= 0 else 0.9999))
    ticks = []
    t = first
    while t <= hi + 1e-12 * step:
        if t >= lo - 1e-12 * step:
            ticks.append(t)
        t += step
    return ticks or [lo, hi]


def svg_line_chart(path, series, title: str, xlabel: str, ylabel: str,
                   digest: str, log_y: bool = False) -> Path:
    """Write one polyline chart.  ``series`` maps label -> (xs, ys)."""
    import math

    width, height = 720, 480
    ml, mr, mt, mb = 80, 20, 50, 60
    pw, ph = width - ml - mr, height - mt - mb

    def ty(v):
        return math.log10(v) if log_y else v

    all_x = [x for xs, _ in series.values() for x in xs]
    all_y = [ty(y) for _, ys in series.values() for y in ys if (y > 0 or not log_y)]
    if not all_x or not all_y:
        all_x, all_y = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(all_x), max(all_x)
    y0, y1 = min(all_y), max(all_y)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return ml + pw * (x - x0) / (x1 - x0)

    def py(y):
        return mt + ph * (1.0 - (y - y0) / (y1 - y0))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f"<!-- config_digest={digest} -->",
           f'<desc>config_digest={digest}</desc>',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width/2:.0f}" y="24" text-anchor="middle" '
           f'font-family="sans-serif" font-size="16">{title}</text>']
    for tx in _ticks(x0, x1):
        out.append(f'<line x1="{px(tx):.1f}" y1="{mt}" x2="{px(tx):.1f}" '
                   f'y2="{mt+ph}" stroke="#dddddd"/>')
        out.append(f'<text x="{px(tx):.1f}" y="{mt+ph+18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{tx:.4g}</text>')
    for tv in _ticks(y0, y1):
        label = f"1e{tv:.3g}" if log_y else f"{tv:.4g}"
        out.append(f'<line x1="{ml}" y1="{py(tv):.1f}" x2="{ml+pw}" '
                   f'y2="{py(tv):.1f}" stroke="#dddddd"/>')
        out.append(f'<text x="{ml-6}" y="{py(tv)+4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="#555555"/>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(ty(y)):.2f}" for x, y in zip(xs, ys)
                       if (y > 0 or not log_y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.8"/>')
        out.append(f'<text x="{ml+10}" y="{mt+18+16*i}" font-family="sans-serif" '
                   f'font-size="12" fill="{color}">{label}</text>')
    out.append(f'<text x="{ml+pw/2:.0f}" y="{height-16}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{xlabel}</text>')
    out.append(f'<text x="20" y="{mt+ph/2:.0f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 20 {mt+ph/2:.0f})">{ylabel}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
