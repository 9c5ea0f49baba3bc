"""Correlation and distribution analysis over score reports.

Pearson and Spearman (with average ranks for ties) between non-intrusive
scores and reference metrics, normalized histograms, and Gaussian KDE with
a Silverman default bandwidth. Reports carry signed correlations alongside
|PCC|/|SRCC|: perplexity is lower-better while error rates are
higher-worse, so the sign is meaningful even when the magnitude is what
gets compared. Everything here is pure and concurrent-safe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, UndefinedStatisticError, ValidationError
from .interchange import ScoreReport, read_manifest
from .svgplot import line_plot


@dataclass(frozen=True)
class PairedSamples:
    """Matched (x, y) observations, e.g. log-perplexity vs error rate."""

    ids: tuple[str, ...]
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise ValidationError("xs and ys must be 1-D and the same length")
        if len(self.ids) != xs.shape[0]:
            raise ValidationError("ids length does not match samples")
        if xs.shape[0] < 3:
            raise InsufficientDataError("need at least 3 paired samples")
        if np.isnan(xs).any() or np.isnan(ys).any():
            raise ValidationError("paired samples contain NaN")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "ids", tuple(self.ids))

    @classmethod
    def from_arrays(cls, xs, ys, ids=None) -> "PairedSamples":
        xs = np.asarray(xs, dtype=np.float64)
        if ids is None:
            ids = tuple(str(i) for i in range(xs.shape[0]))
        return cls(ids=tuple(ids), xs=xs, ys=np.asarray(ys, dtype=np.float64))


def _pearson_xy(xs: np.ndarray, ys: np.ndarray) -> float:
    xm = xs - xs.mean()
    ym = ys - ys.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatisticError("correlation undefined: zero variance")
    r = float(xm @ ym) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson(samples: PairedSamples) -> float:
    """Product-moment correlation in [-1, 1]."""
    return _pearson_xy(samples.xs, samples.ys)


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(samples: PairedSamples) -> float:
    """Pearson correlation of the average-rank vectors."""
    return _pearson_xy(average_ranks(samples.xs), average_ranks(samples.ys))


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Histogram:
    """Equal-width normalized histogram; bin masses sum to 1.

    The max boundary is inclusive in the last bin. When all values are
    identical the histogram degenerates to a single zero-width bin holding
    all the mass (density is reported as 0 there).
    """

    edges: np.ndarray
    masses: np.ndarray
    densities: np.ndarray
    sample_count: int
    degenerate: bool = False


def histogram(values, bin_count: int) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise InsufficientDataError("cannot histogram an empty sample")
    if bin_count < 1:
        raise ValidationError("bin_count must be >= 1")
    if np.isnan(values).any():
        raise ValidationError("values contain NaN")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return Histogram(
            edges=np.array([lo, hi]),
            masses=np.array([1.0]),
            densities=np.array([0.0]),
            sample_count=int(values.size),
            degenerate=True,
        )
    counts, edges = np.histogram(values, bins=bin_count, range=(lo, hi))
    masses = counts / values.size
    widths = np.diff(edges)
    return Histogram(
        edges=edges,
        masses=masses,
        densities=masses / widths,
        sample_count=int(values.size),
    )


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    sample_count: int

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        density = np.asarray(self.density, dtype=np.float64)
        if grid.shape != density.shape or grid.ndim != 1:
            raise ValidationError("grid and density must be 1-D and the same length")
        if np.any(np.diff(grid) <= 0):
            raise ValidationError("grid must be strictly ascending")
        if np.any(density < 0):
            raise ValidationError("density must be non-negative")
        if self.bandwidth <= 0:
            raise ValidationError("bandwidth must be positive")
        integral = float(np.trapezoid(density, grid))
        if not 0.98 <= integral <= 1.02:
            raise ValidationError(f"density integrates to {integral:.4f}, expected ~1")
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    @property
    def mode(self) -> float:
        return float(self.grid[int(np.argmax(self.density))])


GRID_POINTS = 512


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(std, IQR/1.34) * n^(-1/5); falls back to std when IQR is 0."""
    n = values.shape[0]
    sigma = float(values.std(ddof=1))
    if sigma == 0.0:
        raise UndefinedStatisticError(
            "zero variance: pass an explicit bandwidth to estimate a density"
        )
    q75, q25 = np.percentile(values, [75.0, 25.0])
    iqr = float(q75 - q25)
    scale = min(sigma, iqr / 1.34) if iqr > 0 else sigma
    return 0.9 * scale * n ** (-1.0 / 5.0)


def kde(values, bandwidth: float | None = None) -> DensityEstimate:
    """Gaussian kernel density on a 512-point grid spanning [min-3h, max+3h]."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise InsufficientDataError("need at least 2 samples for a density estimate")
    if np.isnan(values).any():
        raise ValidationError("values contain NaN")
    h = silverman_bandwidth(values) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValidationError("bandwidth must be positive")
    grid = np.linspace(values.min() - 3.0 * h, values.max() + 3.0 * h, GRID_POINTS)
    norm = 1.0 / (values.size * h * math.sqrt(2.0 * math.pi))
    density = np.empty_like(grid)
    for start in range(0, GRID_POINTS, 64):
        block = grid[start : start + 64, None]
        z = (block - values[None, :]) / h
        density[start : start + 64] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return DensityEstimate(
        grid=grid, density=density, bandwidth=h, sample_count=int(values.size)
    )


# ---------------------------------------------------------------------------
# condition-level analysis


@dataclass(frozen=True)
class ConditionDistribution:
    condition: str
    count: int
    mean: float
    histogram: Histogram
    kde: DensityEstimate | None
    kde_note: str | None = None


@dataclass(frozen=True)
class CorrelationEntry:
    scope: str  # condition name or "pooled"
    n: int
    pcc: float | None = None
    srcc: float | None = None
    note: str | None = None

    @property
    def abs_pcc(self) -> float | None:
        return None if self.pcc is None else abs(self.pcc)

    @property
    def abs_srcc(self) -> float | None:
        return None if self.srcc is None else abs(self.srcc)


@dataclass(frozen=True)
class ConditionAnalysis:
    distributions: tuple[ConditionDistribution, ...]
    correlations: tuple[CorrelationEntry, ...]
    unmatched_scores: tuple[str, ...]
    unmatched_references: tuple[str, ...]


def _correlate(scope: str, ids: list[str], xs: list[float], ys: list[float]) -> CorrelationEntry:
    if len(ids) < 3:
        return CorrelationEntry(scope=scope, n=len(ids), note="fewer than 3 matched pairs")
    try:
        samples = PairedSamples(ids=tuple(ids), xs=np.array(xs), ys=np.array(ys))
        return CorrelationEntry(
            scope=scope, n=len(ids), pcc=pearson(samples), srcc=spearman(samples)
        )
    except UndefinedStatisticError as exc:
        return CorrelationEntry(scope=scope, n=len(ids), note=str(exc))


def condition_report(
    report: ScoreReport,
    reference: dict[str, float] | None = None,
    *,
    bins: int = 30,
    bandwidth: float | None = None,
) -> ConditionAnalysis:
    """Per-condition distributions, plus correlations when references exist.

    Score ids absent from the reference (and vice versa) are excluded from
    the correlations and reported, never silently dropped.
    """
    order: list[str] = []
    groups: dict[str, list] = {}
    for rec in report.records:
        if rec.condition not in groups:
            order.append(rec.condition)
            groups[rec.condition] = []
        groups[rec.condition].append(rec)
    if len(order) < 2 and not reference:
        raise ValidationError(
            "analysis needs at least two conditions or a reference metric"
        )

    distributions = []
    for cond in order:
        scores = np.array([r.score for r in groups[cond]], dtype=np.float64)
        est = None
        note = None
        try:
            est = kde(scores, bandwidth=bandwidth)
        except (InsufficientDataError, UndefinedStatisticError) as exc:
            note = str(exc)
        distributions.append(
            ConditionDistribution(
                condition=cond,
                count=int(scores.size),
                mean=float(scores.mean()),
                histogram=histogram(scores, bins),
                kde=est,
                kde_note=note,
            )
        )

    correlations: list[CorrelationEntry] = []
    unmatched_scores: tuple[str, ...] = ()
    unmatched_references: tuple[str, ...] = ()
    if reference is not None:
        matched_ids = [r.id for r in report.records if r.id in reference]
        matched_set = set(matched_ids)
        unmatched_scores = tuple(r.id for r in report.records if r.id not in reference)
        unmatched_references = tuple(k for k in reference if k not in {r.id for r in report.records})
        pooled_ids: list[str] = []
        pooled_x: list[float] = []
        pooled_y: list[float] = []
        for cond in order:
            ids = [r.id for r in groups[cond] if r.id in matched_set]
            xs = [r.score for r in groups[cond] if r.id in matched_set]
            ys = [reference[r.id] for r in groups[cond] if r.id in matched_set]
            correlations.append(_correlate(cond, ids, xs, ys))
            pooled_ids += ids
            pooled_x += xs
            pooled_y += ys
        if not pooled_ids:
            correlations.append(
                CorrelationEntry(scope="pooled", n=0, note="zero matched pairs")
            )
        else:
            correlations.append(_correlate("pooled", pooled_ids, pooled_x, pooled_y))

    return ConditionAnalysis(
        distributions=tuple(distributions),
        correlations=tuple(correlations),
        unmatched_scores=unmatched_scores,
        unmatched_references=unmatched_references,
    )


def read_reference_metrics(source: str | Path) -> dict[str, float]:
    """Per-id reference metrics from a manifest (reference_metric fields)
    or a two-column `id<TAB>value` text file."""
    source = Path(source)
    with open(source, "r", encoding="utf-8") as f:
        head = ""
        for line in f:
            if line.strip():
                head = line.strip()
                break
    if head.startswith("{"):
        manifest = read_manifest(source)
        return {
            e.id: e.reference_metric for e in manifest if e.reference_metric is not None
        }
    out: dict[str, float] = {}
    with open(source, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise ValidationError(f"{source}:{lineno}: expected `id value`")
            if parts[0] in out:
                raise ValidationError(f"{source}:{lineno}: duplicate id {parts[0]!r}")
            try:
                out[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise ValidationError(f"{source}:{lineno}: bad value {parts[1]!r}") from exc
    return out


# ---------------------------------------------------------------------------
# report emission


def write_analysis(analysis: ConditionAnalysis, out_dir: str | Path, stem: str = "eval") -> list[Path]:
    """Write plot-ready tables, machine-readable correlations, and an SVG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    densities = out_dir / f"{stem}-densities.tsv"
    with open(densities, "w", encoding="utf-8") as f:
        f.write("condition\tx\tdensity\n")
        for dist in analysis.distributions:
            if dist.kde is None:
                continue
            for x, d in zip(dist.kde.grid, dist.kde.density):
                f.write(f"{dist.condition}\t{float(x)!r}\t{float(d)!r}\n")
    written.append(densities)

    hists = out_dir / f"{stem}-histograms.tsv"
    with open(hists, "w", encoding="utf-8") as f:
        f.write("condition\tleft\tright\tmass\tdensity\n")
        for dist in analysis.distributions:
            h = dist.histogram
            for b in range(h.masses.shape[0]):
                f.write(
                    f"{dist.condition}\t{float(h.edges[b])!r}\t{float(h.edges[b + 1])!r}"
                    f"\t{float(h.masses[b])!r}\t{float(h.densities[b])!r}\n"
                )
    written.append(hists)

    summary = out_dir / f"{stem}-summary.jsonl"
    with open(summary, "w", encoding="utf-8") as f:
        for dist in analysis.distributions:
            obj: dict[str, object] = {
                "kind": "condition",
                "condition": dist.condition,
                "count": dist.count,
                "mean_score": dist.mean,
            }
            if dist.kde is not None:
                obj["kde_mode"] = dist.kde.mode
                obj["kde_bandwidth"] = dist.kde.bandwidth
            else:
                obj["kde_note"] = dist.kde_note
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")
        for corr in analysis.correlations:
            obj = {"kind": "correlation", "scope": corr.scope, "n": corr.n}
            if corr.pcc is not None:
                obj.update(
                    {
                        "pcc": corr.pcc,
                        "srcc": corr.srcc,
                        "abs_pcc": corr.abs_pcc,
                        "abs_srcc": corr.abs_srcc,
                    }
                )
            if corr.note:
                obj["note"] = corr.note
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")
        if analysis.unmatched_scores or analysis.unmatched_references:
            f.write(
                json.dumps(
                    {
                        "kind": "unmatched",
                        "scores_without_reference": list(analysis.unmatched_scores),
                        "references_without_score": list(analysis.unmatched_references),
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    written.append(summary)

    curves = [
        (dist.condition, dist.kde.grid.tolist(), dist.kde.density.tolist())
        for dist in analysis.distributions
        if dist.kde is not None
    ]
    if curves:
        svg = out_dir / f"{stem}-density.svg"
        with open(svg, "w", encoding="utf-8") as f:
            f.write(
                line_plot(
                    curves,
                    title="Score distributions by condition",
                    x_label="log-perplexity (nats/token)",
                    y_label="density",
                )
            )
        written.append(svg)
    return written
