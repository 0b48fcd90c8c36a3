"""Domain types and file ingestion.

A transfer experiment is recorded as a table of tuples, one per
(architecture, dataset, scorer) combination, holding the raw
transferability score and, when ground truth is available, the measured
test metric.  Feature matrices extracted by a pre-trained model are
carried by :class:`FeatureSet` and feed the scorers.

Tuple tables travel as CSV (header ``dataset,architecture,scorer,score,
metric``).  Feature sets travel either as the FSET binary container or
as a CSV fallback with columns ``f0..f{D-1},label[,p0..p{C-1}]``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FormatError,
    NormalizationError,
    ParseError,
    ValidationError,
)

TUPLE_CSV_HEADER = ("dataset", "architecture", "scorer", "score", "metric")

FSET_MAGIC = b"FSET"
FSET_VERSION = 1


def _fmt(x: float) -> str:
    """Shortest decimal form that round-trips to the same float64."""
    return repr(float(x))


@dataclass(frozen=True)
class TransferTuple:
    """One (architecture, dataset, scorer) observation.

    ``metric`` is the ground-truth test metric in [0, 1] for raw tables;
    it is ``None`` for prediction-time tuples.  Values in z-normalized
    tables live on the standardized scale instead.
    """

    architecture: str
    dataset: str
    scorer: str
    score: float
    metric: float | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.architecture, self.dataset, self.scorer)


@dataclass(frozen=True)
class GroupStats:
    """Per (scorer, dataset) normalization constants."""

    score_mean: float
    score_sd: float
    metric_mean: float | None = None
    metric_sd: float | None = None


@dataclass(frozen=True)
class TupleTable:
    """Ordered, key-unique collection of :class:`TransferTuple`.

    ``normalized`` marks tables whose score/metric columns are on the
    per-group standardized scale; ``norm_stats`` then carries the
    (mean, sd) pairs used, keyed by (scorer, dataset).
    """

    tuples: tuple[TransferTuple, ...]
    normalized: bool = False
    norm_stats: dict[tuple[str, str], GroupStats] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for t in self.tuples:
            if t.key in seen:
                raise ValidationError(
                    f"duplicate tuple key (architecture={t.architecture!r}, "
                    f"dataset={t.dataset!r}, scorer={t.scorer!r})"
                )
            seen.add(t.key)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self):
        return iter(self.tuples)

    @property
    def datasets(self) -> tuple[str, ...]:
        """Dataset ids in first-appearance order."""
        out: list[str] = []
        for t in self.tuples:
            if t.dataset not in out:
                out.append(t.dataset)
        return tuple(out)

    @property
    def scorers(self) -> tuple[str, ...]:
        """Scorer ids in first-appearance order."""
        out: list[str] = []
        for t in self.tuples:
            if t.scorer not in out:
                out.append(t.scorer)
        return tuple(out)

    def groups(self) -> dict[tuple[str, str], list[TransferTuple]]:
        """Tuples bucketed by (scorer, dataset), order preserved."""
        out: dict[tuple[str, str], list[TransferTuple]] = {}
        for t in self.tuples:
            out.setdefault((t.scorer, t.dataset), []).append(t)
        return out

    def select(self, scorers=None, datasets=None, exclude_datasets=None) -> "TupleTable":
        """Sub-table filtered by scorer and/or dataset ids."""
        kept = []
        for t in self.tuples:
            if scorers is not None and t.scorer not in scorers:
                continue
            if datasets is not None and t.dataset not in datasets:
                continue
            if exclude_datasets is not None and t.dataset in exclude_datasets:
                continue
            kept.append(t)
        stats = {
            k: v
            for k, v in self.norm_stats.items()
            if any(t.scorer == k[0] and t.dataset == k[1] for t in kept)
        }
        return TupleTable(tuple(kept), normalized=self.normalized, norm_stats=stats)


@dataclass(frozen=True)
class FeatureSet:
    """N x D feature matrix with dense class labels in [0, K).

    ``source_probs`` is an optional N x C row-stochastic matrix of
    source-class probabilities produced by the pre-trained model's own
    head.  ``label_names`` maps each dense label back to the original
    label value.
    """

    features: np.ndarray
    labels: np.ndarray
    source_probs: np.ndarray | None = None
    label_names: tuple[str, ...] = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if feats.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        if labels.shape != (feats.shape[0],):
            raise ValidationError("labels must have one entry per feature row")
        object.__setattr__(self, "features", feats)

        uniques, dense = np.unique(labels, return_inverse=True)
        object.__setattr__(self, "labels", dense.astype(np.int64))
        if not self.label_names:
            object.__setattr__(
                self, "label_names", tuple(str(u) for u in uniques)
            )

        if self.source_probs is not None:
            probs = np.asarray(self.source_probs, dtype=np.float64)
            if probs.ndim != 2 or probs.shape[0] != feats.shape[0]:
                raise ValidationError(
                    "source_probs must be an N x C matrix matching the features"
                )
            if np.any(probs < 0):
                raise ValidationError("source_probs entries must be >= 0")
            sums = probs.sum(axis=1)
            bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
            if bad.size:
                raise ValidationError(
                    f"source_probs row {bad[0]} sums to {sums[bad[0]]:.8f}, not 1"
                )
            object.__setattr__(self, "source_probs", probs)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


@dataclass(frozen=True)
class GroupedSeries:
    """Per-dataset paired (score, metric) vectors for rank statistics."""

    groups: tuple[tuple[str, np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        checked = []
        for name, x, y in self.groups:
            x = np.asarray(x, dtype=np.float64)
            y = np.asarray(y, dtype=np.float64)
            if x.shape != y.shape or x.ndim != 1:
                raise ValidationError(
                    f"group {name!r}: x and y must be 1-D vectors of equal length"
                )
            if x.size < 2:
                raise ValidationError(f"group {name!r} has fewer than 2 members")
            checked.append((name, x, y))
        object.__setattr__(self, "groups", tuple(checked))

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)


# ---------------------------------------------------------------------------
# Tuple CSV

def _parse_float(text: str, what: str, line_no: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {line_no}: cannot parse {what} value {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"line {line_no}: non-finite {what} value {text!r}")
    return value


def load_tuples(path, format: str = "csv") -> TupleTable:
    """Read a tuple table, preserving file order.

    The header row must be exactly ``dataset,architecture,scorer,score,
    metric``; an empty metric cell means the metric is absent.
    """
    if format != "csv":
        raise ValidationError(f"unsupported tuple format {format!r}")
    tuples: list[TransferTuple] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        if tuple(h.strip() for h in header) != TUPLE_CSV_HEADER:
            raise ParseError(
                f"{path}: bad header {header!r}, expected {','.join(TUPLE_CSV_HEADER)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"line {line_no}: expected 5 fields, got {len(row)}")
            dataset, architecture, scorer, score_s, metric_s = row
            score = _parse_float(score_s, "score", line_no)
            metric = None
            if metric_s.strip() != "":
                metric = _parse_float(metric_s, "metric", line_no)
                if not 0.0 <= metric <= 1.0:
                    raise ValidationError(
                        f"line {line_no}: metric {metric} outside [0, 1]"
                    )
            tuples.append(TransferTuple(architecture, dataset, scorer, score, metric))
    return TupleTable(tuple(tuples))


def save_tuples(table: TupleTable, path) -> None:
    """Write a tuple table as CSV; inverse of :func:`load_tuples`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TUPLE_CSV_HEADER)
        for t in table:
            writer.writerow(
                [
                    t.dataset,
                    t.architecture,
                    t.scorer,
                    _fmt(t.score),
                    "" if t.metric is None else _fmt(t.metric),
                ]
            )


# ---------------------------------------------------------------------------
# Feature files

def save_features(fs: FeatureSet, path) -> None:
    """Write a FeatureSet in the FSET binary layout.

    Layout: magic ``FSET``, little-endian u32 version=1, u64 N, u64 D,
    u64 C, then N*D row-major f64 features, N u32 labels, and (when
    C > 0) N*C row-major f64 source probabilities.
    """
    n, d = fs.features.shape
    c = 0 if fs.source_probs is None else fs.source_probs.shape[1]
    with open(path, "wb") as fh:
        fh.write(FSET_MAGIC)
        fh.write(struct.pack("<IQQQ", FSET_VERSION, n, d, c))
        fh.write(fs.features.astype("<f8").tobytes(order="C"))
        fh.write(fs.labels.astype("<u4").tobytes(order="C"))
        if c:
            fh.write(fs.source_probs.astype("<f8").tobytes(order="C"))


def _load_features_fset(path) -> FeatureSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    header_size = 4 + 4 + 24
    if len(blob) < header_size:
        raise FormatError(f"{path}: truncated FSET header")
    if blob[:4] != FSET_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {FSET_MAGIC!r}")
    version, n, d, c = struct.unpack_from("<IQQQ", blob, 4)
    if version != FSET_VERSION:
        raise FormatError(f"{path}: unsupported FSET version {version}")
    expected = header_size + n * d * 8 + n * 4 + n * c * 8
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected}"
        )
    off = header_size
    feats = np.frombuffer(blob, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    off += n * d * 8
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=off)
    off += n * 4
    probs = None
    if c:
        probs = np.frombuffer(blob, dtype="<f8", count=n * c, offset=off).reshape(n, c)
    return FeatureSet(feats.copy(), labels.copy(), None if probs is None else probs.copy())


def _load_features_csv(path) -> FeatureSet:
    try:
        return _read_features_csv(path)
    except (csv.Error, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: not an FSET file and not readable as CSV ({e})") from e


def _read_features_csv(path) -> FeatureSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty feature file") from None
        if "label" not in header:
            raise ParseError(f"{path}: feature CSV must have a 'label' column")
        label_col = header.index("label")
        feat_cols = [i for i, h in enumerate(header) if h.startswith("f")]
        prob_cols = [i for i, h in enumerate(header) if h.startswith("p")]
        if header[:label_col] != [f"f{i}" for i in range(label_col)]:
            raise ParseError(
                f"{path}: feature columns must be f0..f{label_col - 1} before 'label'"
            )
        feats, labels, probs = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            feats.append([_parse_float(row[i], "feature", line_no) for i in feat_cols])
            labels.append(row[label_col].strip())
            if prob_cols:
                probs.append(
                    [_parse_float(row[i], "probability", line_no) for i in prob_cols]
                )
    if not feats:
        raise ParseError(f"{path}: feature file has no data rows")
    return FeatureSet(
        np.asarray(feats, dtype=np.float64),
        np.asarray(labels),
        np.asarray(probs, dtype=np.float64) if probs else None,
    )


def load_features(path) -> FeatureSet:
    """Read a FeatureSet from an FSET binary or the CSV fallback."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == FSET_MAGIC:
        return _load_features_fset(path)
    return _load_features_csv(path)


# ---------------------------------------------------------------------------
# Normalization and grouping

def _group_stats(values: np.ndarray, kind: str, scorer: str, dataset: str):
    mean = float(values.mean())
    sd = float(values.std())  # population convention, divide by n
    if sd == 0.0 or not math.isfinite(sd):
        raise NormalizationError(
            f"group (scorer={scorer!r}, dataset={dataset!r}) has zero {kind} variance"
        )
    return mean, sd


def z_normalize(table: TupleTable) -> TupleTable:
    """Standardize scores (and metrics, when present) within each
    (scorer, dataset) group.

    Uses the population standard deviation (divide by n).  The per-group
    constants are retained on the returned table for later reuse.
    Idempotent: normalizing an already-normalized table is the identity
    up to rounding.
    """
    stats: dict[tuple[str, str], GroupStats] = {}
    for (scorer, dataset), members in table.groups().items():
        if len(members) < 2:
            raise NormalizationError(
                f"group (scorer={scorer!r}, dataset={dataset!r}) has fewer than "
                "2 members"
            )
        scores = np.array([t.score for t in members])
        s_mean, s_sd = _group_stats(scores, "score", scorer, dataset)
        has_metric = [t.metric is not None for t in members]
        m_mean = m_sd = None
        if any(has_metric):
            if not all(has_metric):
                raise ValidationError(
                    f"group (scorer={scorer!r}, dataset={dataset!r}) mixes "
                    "present and missing metrics"
                )
            metrics = np.array([t.metric for t in members])
            m_mean, m_sd = _group_stats(metrics, "metric", scorer, dataset)
        stats[(scorer, dataset)] = GroupStats(s_mean, s_sd, m_mean, m_sd)

    out = []
    for t in table:
        gs = stats[(t.scorer, t.dataset)]
        metric = t.metric
        if metric is not None:
            metric = (metric - gs.metric_mean) / gs.metric_sd
        out.append(
            TransferTuple(
                t.architecture,
                t.dataset,
                t.scorer,
                (t.score - gs.score_mean) / gs.score_sd,
                metric,
            )
        )
    return TupleTable(tuple(out), normalized=True, norm_stats=stats)


def group_by_dataset(table: TupleTable, scorer: str) -> GroupedSeries:
    """One (scores, metrics) group per dataset for the given scorer."""
    if scorer not in table.scorers:
        raise ValidationError(f"scorer {scorer!r} not present in table")
    by_dataset: dict[str, list[TransferTuple]] = {}
    for t in table:
        if t.scorer == scorer:
            by_dataset.setdefault(t.dataset, []).append(t)
    groups = []
    for dataset, members in by_dataset.items():
        missing = [t.architecture for t in members if t.metric is None]
        if missing:
            raise ValidationError(
                f"dataset {dataset!r} has tuples without metrics "
                f"(e.g. architecture {missing[0]!r})"
            )
        x = np.array([t.score for t in members])
        y = np.array([t.metric for t in members])
        groups.append((dataset, x, y))
    return GroupedSeries(tuple(groups))
