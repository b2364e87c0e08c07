"""Inter-observer agreement statistics over rater mask sets.

Overlap metrics (Dice, Jaccard, 95th-percentile Hausdorff), two-way ANOVA
ICC(A,1), the generalized conformity index, majority-vote consensus, and
Bland-Altman volume agreement, assembled into a per-case report with CSV
and plain-text renderings.

Conventions pinned for reproducibility: sample (N-1) standard deviations,
boundary voxels have a 6-face neighbor outside the mask or touch the grid
border, and HD95 takes the nearest-rank element of the pooled bidirectional
surface distance multiset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError, GeometryError
from .grid import Mask, volume_ml

GROUPS = ("expert", "novice", "reference")


def _require_same_geometry(masks) -> None:
    first = masks[0].grid
    for m in masks[1:]:
        if not m.grid.same_geometry(first):
            raise GeometryError("masks must share geometry")


def _overlap_counts(a: Mask, b: Mask):
    _require_same_geometry((a, b))
    av = a.bool_voxels
    bv = b.bool_voxels
    return int((av & bv).sum()), int(av.sum()), int(bv.sum())


def dice(a: Mask, b: Mask) -> float:
    """2|A∩B| / (|A| + |B|); two empty masks agree perfectly (1.0)."""
    inter, na, nb = _overlap_counts(a, b)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def jaccard(a: Mask, b: Mask) -> float:
    """|A∩B| / |A∪B|; 1.0 when both masks are empty."""
    inter, na, nb = _overlap_counts(a, b)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def _boundary_indices(mask: Mask) -> np.ndarray:
    m = mask.bool_voxels
    p = np.pad(m, 1, constant_values=False)
    interior = (
        p[:-2, 1:-1, 1:-1]
        & p[2:, 1:-1, 1:-1]
        & p[1:-1, :-2, 1:-1]
        & p[1:-1, 2:, 1:-1]
        & p[1:-1, 1:-1, :-2]
        & p[1:-1, 1:-1, 2:]
    )
    return np.argwhere(m & ~interior)


def _directed_min_sq(ia: np.ndarray, ib: np.ndarray, spacing: np.ndarray) -> np.ndarray:
    # chunked all-pairs min squared distance from each row of ia to ib
    out = np.empty(len(ia))
    chunk = max(1, (1 << 22) // max(len(ib), 1))
    for start in range(0, len(ia), chunk):
        block = ia[start : start + chunk]
        d2 = (((block[:, None, :] - ib[None, :, :]) * spacing) ** 2).sum(axis=-1)
        out[start : start + chunk] = d2.min(axis=1)
    return out


def hd95(a: Mask, b: Mask) -> float:
    """95th-percentile symmetric surface distance in mm.

    Directed boundary distances are pooled from both directions into one
    multiset; the result is its nearest-rank 95th percentile.
    """
    _require_same_geometry((a, b))
    if not a.bool_voxels.any() or not b.bool_voxels.any():
        raise DegenerateInputError("surface distance undefined for an empty mask")
    ia = _boundary_indices(a)
    ib = _boundary_indices(b)
    s = np.asarray(a.spacing, dtype=np.float64)
    pooled = np.sort(
        np.concatenate(
            [np.sqrt(_directed_min_sq(ia, ib, s)), np.sqrt(_directed_min_sq(ib, ia, s))]
        )
    )
    return float(pooled[int(np.ceil(0.95 * pooled.size)) - 1])


def icc_a1(values) -> float:
    """ICC(A,1): absolute agreement of single ratings, two-way ANOVA.

    (MSR - MSE) / (MSR + (K-1) MSE + (K/N)(MSC - MSE)) over an N-subject by
    K-rater matrix.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError("ratings must form a 2D subjects-by-raters matrix")
    n, k = x.shape
    if n < 2 or k < 2:
        raise ConfigError("ICC needs at least 2 subjects and 2 raters")
    if not np.isfinite(x).all():
        raise ConfigError("ratings must be finite")
    grand = x.mean()
    ssr = k * ((x.mean(axis=1) - grand) ** 2).sum()
    ssc = n * ((x.mean(axis=0) - grand) ** 2).sum()
    sst = ((x - grand) ** 2).sum()
    if sst <= 0.0:
        raise DegenerateInputError("ratings have zero total variance")
    sse = sst - ssr - ssc
    msr = ssr / (n - 1)
    msc = ssc / (k - 1)
    mse = sse / ((n - 1) * (k - 1))
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denom == 0.0:
        raise DegenerateInputError("agreement model variance collapsed")
    return float((msr - mse) / denom)


def gci(masks) -> float:
    """Generalized conformity index: sum of pairwise intersections over
    sum of pairwise unions."""
    masks = list(masks)
    if len(masks) < 2:
        raise ConfigError("conformity index needs at least 2 masks")
    _require_same_geometry(masks)
    inter_total = 0
    union_total = 0
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            inter, na, nb = _overlap_counts(masks[i], masks[j])
            inter_total += inter
            union_total += na + nb - inter
    if union_total == 0:
        raise DegenerateInputError("conformity index undefined: all masks empty")
    return inter_total / union_total


def consensus_majority(masks, min_votes: int = 2) -> Mask:
    """Voxels labeled by at least min_votes raters."""
    masks = list(masks)
    min_votes = int(min_votes)
    if min_votes < 1 or min_votes > len(masks):
        raise ConfigError("min_votes must satisfy 1 <= min_votes <= number of raters")
    _require_same_geometry(masks)
    counts = np.zeros(masks[0].grid.dims, dtype=np.int64)
    for m in masks:
        counts += m.bool_voxels
    return Mask(masks[0].grid, (counts >= min_votes).astype(np.uint8))


@dataclass(frozen=True)
class BlandAltmanSummary:
    points: tuple  # ((x+y)/2, x-y) per pair
    bias: float
    loa_low: float
    loa_high: float


def bland_altman(pairs) -> BlandAltmanSummary:
    """Bias and 1.96-sd limits of agreement for (x, y) volume pairs."""
    pairs = [(float(x), float(y)) for x, y in pairs]
    if len(pairs) < 2:
        raise DegenerateInputError("Bland-Altman needs at least 2 pairs")
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    diffs = xs - ys
    bias = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    points = tuple((float(m), float(dv)) for m, dv in zip((xs + ys) / 2.0, diffs))
    return BlandAltmanSummary(
        points=points, bias=bias, loa_low=bias - 1.96 * sd, loa_high=bias + 1.96 * sd
    )


@dataclass(frozen=True)
class Rater:
    name: str
    group: str

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("rater name must be a non-empty string")
        if self.group not in GROUPS:
            raise ConfigError(f"rater group must be one of {GROUPS}, got {self.group!r}")


@dataclass(frozen=True)
class RaterSet:
    """Complete cases-by-raters grid of masks with shared per-case geometry."""

    case_ids: tuple
    raters: tuple
    masks: tuple

    def __post_init__(self):
        case_ids = tuple(str(c) for c in self.case_ids)
        raters = tuple(self.raters)
        masks = tuple(tuple(row) for row in self.masks)
        if len(set(case_ids)) != len(case_ids):
            raise ConfigError("case ids must be unique")
        if not case_ids or not raters:
            raise ConfigError("rater set needs at least one case and one rater")
        if len(masks) != len(case_ids):
            raise ConfigError("one mask row per case required")
        for row in masks:
            if len(row) != len(raters):
                raise ConfigError("every case needs a mask from every rater")
            _require_same_geometry(row)
        object.__setattr__(self, "case_ids", case_ids)
        object.__setattr__(self, "raters", raters)
        object.__setattr__(self, "masks", masks)

    @property
    def n_cases(self) -> int:
        return len(self.case_ids)

    @property
    def n_raters(self) -> int:
        return len(self.raters)


@dataclass(frozen=True)
class AgreementReport:
    case_ids: tuple
    raters: tuple
    volumes_ml: np.ndarray  # cases x raters
    group_volume_mean: dict
    group_volume_sd: dict
    volume_diff_ml: dict  # group or "inter-group" -> mean absolute difference
    volume_diff_rel: dict
    icc: dict  # "all", groups, "between-groups"
    gci_per_case: dict  # scope -> per-case values
    gci_mean: dict
    pairwise: dict  # metric -> scope -> per-case mean over rater pairs
    bland_altman: dict = field(default_factory=dict)  # group vs reference


def _pair_indices(indices):
    idx = list(indices)
    return [(idx[i], idx[j]) for i in range(len(idx)) for j in range(i + 1, len(idx))]


def _mean_pairwise(values, pairs, fn):
    return float(np.mean([fn(values[i], values[j]) for i, j in pairs]))


def volume_stats(rs: RaterSet) -> AgreementReport:
    """Assemble the agreement report for a complete rater set.

    Volumes per case and rater, per-group volume summaries, within- and
    inter-group volume differences, ICC and GCI per scope, mean pairwise
    overlap metrics per case, and Bland-Altman summaries against the
    reference group when one exists. Cases are sorted by id.
    """
    if rs.n_cases < 2 or rs.n_raters < 2:
        raise ConfigError("agreement statistics need at least 2 cases and 2 raters")
    order = sorted(range(rs.n_cases), key=lambda i: rs.case_ids[i])
    case_ids = tuple(rs.case_ids[i] for i in order)
    rows = [rs.masks[i] for i in order]
    n = len(case_ids)
    k = rs.n_raters
    vols = np.array([[volume_ml(m) for m in row] for row in rows], dtype=np.float64)

    group_idx = {}
    for g in GROUPS:
        idx = [j for j, r in enumerate(rs.raters) if r.group == g]
        if idx:
            group_idx[g] = idx

    group_volume_mean = {}
    group_volume_sd = {}
    for g, idx in group_idx.items():
        rater_means = vols[:, idx].mean(axis=0)
        group_volume_mean[g] = float(rater_means.mean())
        group_volume_sd[g] = float(rater_means.std(ddof=1)) if len(idx) >= 2 else float("nan")

    volume_diff_ml = {}
    volume_diff_rel = {}
    for g, idx in group_idx.items():
        if len(idx) < 2:
            continue
        pairs = _pair_indices(range(len(idx)))
        abs_by_case = []
        rel_by_case = []
        for row in vols[:, idx]:
            pair_abs = np.array([abs(row[i] - row[j]) for i, j in pairs])
            abs_by_case.append(pair_abs.mean())
            mean = row.mean()
            rel_by_case.append(pair_abs.mean() / mean if mean > 0 else 0.0)
        volume_diff_ml[g] = float(np.mean(abs_by_case))
        volume_diff_rel[g] = float(np.mean(rel_by_case))
    if "expert" in group_idx and "novice" in group_idx:
        e = vols[:, group_idx["expert"]].mean(axis=1)
        nv = vols[:, group_idx["novice"]].mean(axis=1)
        gap = np.abs(e - nv)
        mid = (e + nv) / 2.0
        volume_diff_ml["inter-group"] = float(gap.mean())
        volume_diff_rel["inter-group"] = float(
            np.mean([g_ / m if m > 0 else 0.0 for g_, m in zip(gap, mid)])
        )

    icc = {"all": icc_a1(vols)}
    for g, idx in group_idx.items():
        if len(idx) >= 2:
            icc[g] = icc_a1(vols[:, idx])
    if len(group_idx) >= 2:
        means = np.column_stack([vols[:, idx].mean(axis=1) for idx in group_idx.values()])
        icc["between-groups"] = icc_a1(means)

    scopes = {"all": list(range(k))}
    for g, idx in group_idx.items():
        if len(idx) >= 2:
            scopes[g] = idx
    gci_per_case = {}
    gci_mean = {}
    for scope, idx in scopes.items():
        per_case = tuple(gci([row[j] for j in idx]) for row in rows)
        gci_per_case[scope] = per_case
        gci_mean[scope] = float(np.mean(per_case))

    pair_scopes = {scope: _pair_indices(idx) for scope, idx in scopes.items()}
    if "expert" in group_idx and "novice" in group_idx:
        pair_scopes["inter-group"] = [
            (i, j) for i in group_idx["expert"] for j in group_idx["novice"]
        ]
    pairwise = {"dice": {}, "jaccard": {}, "hd95_mm": {}}
    metric_fns = {"dice": dice, "jaccard": jaccard, "hd95_mm": hd95}
    for name, fn in metric_fns.items():
        for scope, pairs in pair_scopes.items():
            pairwise[name][scope] = tuple(_mean_pairwise(row, pairs, fn) for row in rows)

    ba = {}
    if "reference" in group_idx:
        ref = vols[:, group_idx["reference"]].mean(axis=1)
        for g in ("expert", "novice"):
            if g in group_idx:
                gm = vols[:, group_idx[g]].mean(axis=1)
                ba[g] = bland_altman(list(zip(gm, ref)))

    volumes = vols.copy()
    volumes.flags.writeable = False
    return AgreementReport(
        case_ids=case_ids,
        raters=rs.raters,
        volumes_ml=volumes,
        group_volume_mean=group_volume_mean,
        group_volume_sd=group_volume_sd,
        volume_diff_ml=volume_diff_ml,
        volume_diff_rel=volume_diff_rel,
        icc=icc,
        gci_per_case=gci_per_case,
        gci_mean=gci_mean,
        pairwise=pairwise,
        bland_altman=ba,
    )


def _fmt(v: float) -> str:
    return format(float(v), ".9g")


def report_csv(report: AgreementReport) -> str:
    """One row per case, metric, and scope: case_id,metric,group,value."""
    group_idx = {}
    for g in GROUPS:
        idx = [j for j, r in enumerate(report.raters) if r.group == g]
        if idx:
            group_idx[g] = idx
    lines = ["case_id,metric,group,value"]
    metric_scopes = sorted(report.pairwise["dice"])
    for ci, case in enumerate(report.case_ids):
        for g, idx in group_idx.items():
            mean = np.asarray(report.volumes_ml)[ci, idx].mean()
            lines.append(f"{case},volume_ml,{g},{_fmt(mean)}")
        for name in ("dice", "jaccard", "hd95_mm"):
            for scope in metric_scopes:
                lines.append(f"{case},{name},{scope},{_fmt(report.pairwise[name][scope][ci])}")
        for scope in sorted(report.gci_per_case):
            lines.append(f"{case},gci,{scope},{_fmt(report.gci_per_case[scope][ci])}")
    return "\n".join(lines) + "\n"


def bland_altman_csv(report: AgreementReport) -> str:
    lines = ["mean_ml,diff_ml,group"]
    for g in sorted(report.bland_altman):
        for mean, diff in report.bland_altman[g].points:
            lines.append(f"{_fmt(mean)},{_fmt(diff)},{g}")
    return "\n".join(lines) + "\n"


def report_text(report: AgreementReport) -> str:
    """Readable two-part summary: volume statistics, then overlap agreement."""
    out = ["Volume summary (mL)"]
    for g in GROUPS:
        if g in report.group_volume_mean:
            mean = report.group_volume_mean[g]
            sd = report.group_volume_sd[g]
            out.append(f"  {g}: {mean:.2f} +/- {sd:.2f}")
    for key, label in (("expert", "expert"), ("novice", "novice"), ("inter-group", "inter-group")):
        if key in report.volume_diff_ml:
            out.append(
                f"  {label} volume difference: {report.volume_diff_ml[key]:.2f} mL"
                f" ({100.0 * report.volume_diff_rel[key]:.1f}%)"
            )
    out.append("Agreement")
    for scope in sorted(report.icc):
        out.append(f"  ICC ({scope}): {report.icc[scope]:.4f}")
    for scope in sorted(report.gci_mean):
        out.append(f"  GCI ({scope}): {report.gci_mean[scope]:.4f}")
    for name, label in (("dice", "Dice"), ("jaccard", "Jaccard"), ("hd95_mm", "HD95 mm")):
        for scope in sorted(report.pairwise[name]):
            mean = float(np.mean(report.pairwise[name][scope]))
            out.append(f"  {label} ({scope}): {mean:.4f}")
    return "\n".join(out) + "\n"
