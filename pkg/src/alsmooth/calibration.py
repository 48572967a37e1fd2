"""Confidence and calibration metrics over sets of prediction records.

Binning convention: ``num_bins`` equal-width intervals over [0, 1], each
right-closed ``(lower, upper]``, with confidence 0.0 assigned to the first
bin.  Per-bin confidence sums accumulate in record order, which makes the
streaming implementation agree exactly with a naive per-bin recomputation
and makes the exported reliability bins satisfy

    sum_b (count_b / N) * |accuracy_b - mean_confidence_b| == ECE

to the last bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import fmt_float


@dataclass(frozen=True)
class PredictionRecord:
    """One evaluated sample."""

    probs: np.ndarray | None
    predicted: int
    confidence: float
    true_class: int
    objectness: float | None = None

    @property
    def correct(self) -> bool:
        return self.predicted == self.true_class


def record_from_probs(probs, true_class: int, objectness: float | None = None) -> PredictionRecord:
    probs = np.asarray(probs, dtype=np.float64)
    predicted = int(np.argmax(probs))
    return PredictionRecord(
        probs=probs,
        predicted=predicted,
        confidence=float(probs[predicted]),
        true_class=int(true_class),
        objectness=objectness,
    )


def _require_records(records) -> list[PredictionRecord]:
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    return records


def bin_index(confidence: float, num_bins: int) -> int:
    """Index of the right-closed bin holding ``confidence``."""
    idx = int(np.ceil(confidence * num_bins)) - 1
    return min(max(idx, 0), num_bins - 1)


def _bin_stats(records, num_bins: int):
    """Per-bin (count, confidence sum, correct count), accumulated in record order."""
    conf = np.array([r.confidence for r in records], dtype=np.float64)
    correct = np.array([1.0 if r.correct else 0.0 for r in records], dtype=np.float64)
    idx = np.clip(np.ceil(conf * num_bins).astype(np.int64) - 1, 0, num_bins - 1)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=num_bins)
    correct_sums = np.bincount(idx, weights=correct, minlength=num_bins)
    return counts, conf_sums, correct_sums


def ece(records, num_bins: int) -> float:
    """Expected calibration error: count-weighted mean |accuracy - confidence| per bin."""
    records = _require_records(records)
    if num_bins < 1:
        raise ValueError(f"need at least one bin, got {num_bins}")
    counts, conf_sums, correct_sums = _bin_stats(records, num_bins)
    n = len(records)
    total = 0.0
    for b in range(num_bins):
        if counts[b] == 0:
            continue
        gap = abs(correct_sums[b] / counts[b] - conf_sums[b] / counts[b])
        total += (counts[b] / n) * gap
    return total


def mce(records, num_bins: int) -> float:
    """Maximum calibration error: largest |accuracy - confidence| over non-empty bins."""
    records = _require_records(records)
    if num_bins < 1:
        raise ValueError(f"need at least one bin, got {num_bins}")
    counts, conf_sums, correct_sums = _bin_stats(records, num_bins)
    worst = 0.0
    for b in range(num_bins):
        if counts[b] == 0:
            continue
        gap = abs(correct_sums[b] / counts[b] - conf_sums[b] / counts[b])
        worst = max(worst, gap)
    return worst


def accuracy(records) -> float:
    records = _require_records(records)
    return sum(1 for r in records if r.correct) / len(records)


def average_confidence(records) -> float:
    records = _require_records(records)
    return float(np.mean([r.confidence for r in records]))


def overconfidence(records) -> float:
    """Mean confidence over the false predictions; 0.0 when there are none."""
    records = _require_records(records)
    wrong = [r.confidence for r in records if not r.correct]
    if not wrong:
        return 0.0
    return float(np.mean(wrong))


def underconfidence(records) -> float:
    """Mean (1 - confidence) over the correct predictions; 0.0 when there are none."""
    records = _require_records(records)
    right = [1.0 - r.confidence for r in records if r.correct]
    if not right:
        return 0.0
    return float(np.mean(right))


def mean_deviation(records) -> float:
    """Mean |confidence - objectness|; how closely confidence tracks object size."""
    records = _require_records(records)
    if any(r.objectness is None for r in records):
        raise ValueError("every record needs an objectness value")
    return float(np.mean([abs(r.confidence - r.objectness) for r in records]))


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    empirical_accuracy: float


def reliability_bins(records, num_bins: int) -> list[ReliabilityBin]:
    """All ``num_bins`` bins in order; empty bins carry zero statistics."""
    records = _require_records(records)
    counts, conf_sums, correct_sums = _bin_stats(records, num_bins)
    bins = []
    for b in range(num_bins):
        c = int(counts[b])
        bins.append(
            ReliabilityBin(
                lower=b / num_bins,
                upper=(b + 1) / num_bins,
                count=c,
                mean_confidence=conf_sums[b] / c if c else 0.0,
                empirical_accuracy=correct_sums[b] / c if c else 0.0,
            )
        )
    return bins


def ece_from_bins(bins, n_records: int) -> float:
    """Recompute ECE from exported bins; equals :func:`ece` exactly."""
    total = 0.0
    for b in bins:
        if b.count == 0:
            continue
        total += (b.count / n_records) * abs(b.empirical_accuracy - b.mean_confidence)
    return total


@dataclass(frozen=True)
class CalibrationReport:
    n_records: int
    accuracy: float
    avg_confidence: float
    eces: dict[int, float]  # num_bins -> ECE
    mce: float
    overconfidence: float
    overconfidence_defined: bool
    underconfidence: float
    underconfidence_defined: bool
    mean_deviation: float | None
    bins: list[ReliabilityBin]
    num_bins_list: tuple[int, ...]


def report(records, num_bins_list=(100, 15)) -> CalibrationReport:
    """The full metric bundle; reliability bins use the first bin count."""
    records = _require_records(records)
    if not num_bins_list:
        raise ValueError("need at least one bin count")
    has_wrong = any(not r.correct for r in records)
    has_right = any(r.correct for r in records)
    has_objectness = all(r.objectness is not None for r in records)
    return CalibrationReport(
        n_records=len(records),
        accuracy=accuracy(records),
        avg_confidence=average_confidence(records),
        eces={n: ece(records, n) for n in num_bins_list},
        mce=mce(records, num_bins_list[0]),
        overconfidence=overconfidence(records),
        overconfidence_defined=has_wrong,
        underconfidence=underconfidence(records),
        underconfidence_defined=has_right,
        mean_deviation=mean_deviation(records) if has_objectness else None,
        bins=reliability_bins(records, num_bins_list[0]),
        num_bins_list=tuple(num_bins_list),
    )


def bootstrap_stddevs(records, num_bins_list=(100, 15), n_resamples: int = 1000, seed: int = 0):
    """Record-level bootstrap standard deviations for the scalar metrics.

    Resampling is over records with replacement, seeded, so repeated calls
    are identical.  Returned keys mirror the report CSV columns.
    """
    records = _require_records(records)
    rng = np.random.default_rng([seed, len(records)])
    samples: dict[str, list[float]] = {f"ece_{n}": [] for n in num_bins_list}
    samples.update({"accuracy": [], "avg_confidence": [], "mce": []})
    n = len(records)
    for _ in range(n_resamples):
        draw = [records[i] for i in rng.integers(0, n, size=n)]
        for nb in num_bins_list:
            samples[f"ece_{nb}"].append(ece(draw, nb))
        samples["accuracy"].append(accuracy(draw))
        samples["avg_confidence"].append(average_confidence(draw))
        samples["mce"].append(mce(draw, num_bins_list[0]))
    return {key: float(np.std(vals)) for key, vals in samples.items()}


# --------------------------------------------------------------------------
# CSV formats
# --------------------------------------------------------------------------


def write_predictions_csv(path, sample_ids, records) -> None:
    records = list(records)
    if len(sample_ids) != len(records):
        raise ValueError("one sample id per record required")
    if any(r.probs is None for r in records):
        raise ValueError("records must carry full probability vectors")
    k = len(records[0].probs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "true_class", "predicted", "confidence", "objectness"]
            + [f"p{i}" for i in range(k)]
        )
        for sid, r in zip(sample_ids, records):
            row = [
                sid,
                r.true_class,
                r.predicted,
                fmt_float(r.confidence),
                "" if r.objectness is None else fmt_float(r.objectness),
            ]
            row.extend(fmt_float(p) for p in r.probs)
            writer.writerow(row)


def read_predictions_csv(path):
    sample_ids, records = [], []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:5] != ["sample_id", "true_class", "predicted", "confidence", "objectness"]:
            raise ValueError(f"{path}: unexpected predictions header {header[:5]}")
        for row in reader:
            sample_ids.append(row[0])
            probs = np.array([float(v) for v in row[5:]], dtype=np.float64)
            records.append(
                PredictionRecord(
                    probs=probs,
                    predicted=int(row[2]),
                    confidence=float(row[3]),
                    true_class=int(row[1]),
                    objectness=float(row[4]) if row[4] else None,
                )
            )
    return sample_ids, records


def write_report_csv(path, rep: CalibrationReport, stddevs: dict[str, float] | None = None) -> None:
    header = ["n_records", "accuracy", "avg_confidence"]
    values = [str(rep.n_records), fmt_float(rep.accuracy), fmt_float(rep.avg_confidence)]
    for n in rep.num_bins_list:
        header.append(f"ece_{n}")
        values.append(fmt_float(rep.eces[n]))
    header += [
        "mce",
        "overconfidence",
        "overconfidence_defined",
        "underconfidence",
        "underconfidence_defined",
        "mean_deviation",
        "mean_deviation_defined",
    ]
    values += [
        fmt_float(rep.mce),
        fmt_float(rep.overconfidence),
        str(int(rep.overconfidence_defined)),
        fmt_float(rep.underconfidence),
        str(int(rep.underconfidence_defined)),
        "" if rep.mean_deviation is None else fmt_float(rep.mean_deviation),
        str(int(rep.mean_deviation is not None)),
    ]
    if stddevs:
        for key in sorted(stddevs):
            header.append(f"{key}_std")
            values.append(fmt_float(stddevs[key]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerow(values)


def write_bins_csv(path, bins) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lower", "upper", "count", "mean_confidence", "empirical_accuracy"])
        for b in bins:
            writer.writerow(
                [
                    fmt_float(b.lower),
                    fmt_float(b.upper),
                    str(b.count),
                    fmt_float(b.mean_confidence),
                    fmt_float(b.empirical_accuracy),
                ]
            )


def read_bins_csv(path) -> list[ReliabilityBin]:
    bins = []
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            bins.append(
                ReliabilityBin(
                    lower=float(row[0]),
                    upper=float(row[1]),
                    count=int(row[2]),
                    mean_confidence=float(row[3]),
                    empirical_accuracy=float(row[4]),
                )
            )
    return bins
