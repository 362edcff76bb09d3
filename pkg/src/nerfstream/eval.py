"""Rate and distortion measures, RD curves, curve comparison, CSV and plot export."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PSNR_INF = math.inf  # sentinel for identical images; excluded from averages
CSV_COLUMNS = ("strategy", "qp", "bits", "rate_bpp", "psnr_db", "anchor_psnr_db")


def rate_bpp(bits: int, n_images: int, width: int, height: int) -> float:
    """Bits per rendered pixel: B / (N * W * H)."""
    if n_images <= 0 or width <= 0 or height <= 0:
        raise ValueError("image count and dimensions must be positive")
    return float(bits) / float(n_images * width * height)


def psnr(image: np.ndarray, reference: np.ndarray) -> float:
    """PSNR in dB of two [0, 1] images after 8-bit quantization (peak 255).

    Identical quantized images give ``PSNR_INF``.
    """
    a = np.asarray(image, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    qa = np.clip(np.rint(a * 255.0), 0, 255)
    qb = np.clip(np.rint(b * 255.0), 0, 255)
    mse = float(np.mean((qa - qb) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(255.0**2 / mse)


def mean_psnr(values: Iterable[float]) -> float:
    """Arithmetic mean over finite values; infinite only if every value is."""
    vals = list(values)
    finite = [v for v in vals if math.isfinite(v)]
    if finite:
        return float(np.mean(finite))
    if not vals:
        raise ValueError("no PSNR values")
    return PSNR_INF


@dataclass(frozen=True)
class RDPoint:
    rate: float
    psnr: float
    qp: int | None
    strategy: str
    bits: int = 0

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")
        if not (self.psnr > 0):
            raise ValueError("PSNR must be positive (or infinite)")


@dataclass
class RDCurve:
    strategy: str
    points: list[RDPoint] = field(default_factory=list)
    anchor_psnr: float = math.nan

    def __post_init__(self):
        rates = [p.rate for p in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("curve rates must be strictly ascending")

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])

    def __eq__(self, other):
        if not isinstance(other, RDCurve) or self.strategy != other.strategy or self.points != other.points:
            return False
        a, b = self.anchor_psnr, other.anchor_psnr
        return (math.isnan(a) and math.isnan(b)) or a == b


def build_curve(results: Sequence, anchor=None, tag: str | None = None) -> RDCurve:
    """RD curve from StrategyResults of one strategy.

    Rates use N = rendered image count; distortion is the mean test PSNR.
    Of several points with the same rate only the best PSNR is kept.
    """
    if len(results) < 2:
        raise ValueError("a curve needs at least two results")
    tags = {r.strategy for r in results}
    if len(tags) != 1:
        raise ValueError(f"results mix strategies {sorted(tags)}")
    tag = tag or tags.pop()
    pts = []
    for r in results:
        n = len(r.rendered)
        h, w = np.asarray(r.rendered[0]).shape[:2]
        pts.append(RDPoint(rate_bpp(r.total_bits, n, w, h), mean_psnr(r.psnr), r.qp, tag, int(r.total_bits)))
    pts.sort(key=lambda p: (p.rate, -p.psnr))
    kept: list[RDPoint] = []
    for p in pts:
        if kept and kept[-1].rate == p.rate:
            log.warning("duplicate rate %.6g for %s (qp %s); keeping qp %s", p.rate, tag, p.qp, kept[-1].qp)
            continue
        kept.append(p)
    anchor_psnr = mean_psnr(anchor.psnr) if anchor is not None else math.nan
    return RDCurve(tag, kept, anchor_psnr)


@dataclass(frozen=True)
class CurveComparison:
    """Mean PSNR gap of ``a`` over ``b`` on their shared log-rate interval."""

    comparable: bool
    gap_db: float = math.nan
    a_dominates: bool = False
    b_dominates: bool = False
    rate_range: tuple[float, float] | None = None

    @property
    def status(self) -> str:
        return "comparable" if self.comparable else "incomparable"


def _fit(curve: RDCurve):
    logr = np.log10(curve.rates)
    deg = min(3, len(curve.points) - 1)
    return np.polyfit(logr, curve.psnrs, deg)


def compare_curves(a: RDCurve, b: RDCurve, samples: int = 201) -> CurveComparison:
    """Bjontegaard-style comparison: fit PSNR as a cubic in log10(rate) for
    each curve and average the difference over the overlapping rate interval."""
    for c in (a, b):
        if len(c.points) < 2 or np.any(c.rates <= 0) or not np.all(np.isfinite(c.psnrs)):
            return CurveComparison(False)
    lo = max(np.log10(a.rates).min(), np.log10(b.rates).min())
    hi = min(np.log10(a.rates).max(), np.log10(b.rates).max())
    if not hi > lo:
        return CurveComparison(False)
    pa, pb = _fit(a), _fit(b)
    ia, ib = np.polyint(pa), np.polyint(pb)
    gap = ((np.polyval(ia, hi) - np.polyval(ia, lo)) - (np.polyval(ib, hi) - np.polyval(ib, lo))) / (hi - lo)
    grid = np.linspace(lo, hi, samples)
    diff = np.polyval(pa, grid) - np.polyval(pb, grid)
    return CurveComparison(
        True,
        float(gap),
        bool(np.all(diff >= 0)),
        bool(np.all(diff <= 0)),
        (float(10**lo), float(10**hi)),
    )


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)


# --- export -------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def export_csv(curves: Sequence[RDCurve], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for c in curves:
            for p in c.points:
                w.writerow([c.strategy, "" if p.qp is None else p.qp, p.bits, _fmt(p.rate), _fmt(p.psnr), _fmt(c.anchor_psnr)])
    return path


def import_csv(path) -> list[RDCurve]:
    """Inverse of :func:`export_csv`; floats are written with ``repr`` so values round-trip exactly."""
    groups: dict[str, list] = {}
    anchors: dict[str, float] = {}
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        for row in reader:
            s = row["strategy"]
            qp = int(row["qp"]) if row["qp"] else None
            groups.setdefault(s, []).append(RDPoint(float(row["rate_bpp"]), float(row["psnr_db"]), qp, s, int(row["bits"])))
            anchors[s] = float(row["anchor_psnr_db"])
    return [RDCurve(s, pts, anchors[s]) for s, pts in groups.items()]


def export_plot(curves: Sequence[RDCurve], path, title: str | None = None) -> Path:
    """SVG plot: log-rate on x, PSNR on y, one line per curve, dashed anchor lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    drawn_anchor = set()
    for c in curves:
        (line,) = ax.plot(c.rates, c.psnrs, marker="o", label=c.strategy)
        a = c.anchor_psnr
        if math.isfinite(a) and round(a, 6) not in drawn_anchor:
            ax.axhline(a, linestyle="--", color=line.get_color(), linewidth=1, label=f"anchor ({a:.2f} dB)")
            drawn_anchor.add(round(a, 6))
    ax.set_xscale("log")
    ax.set_xlabel("rate (bpp)")
    ax.set_ylabel("PSNR (dB)")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
