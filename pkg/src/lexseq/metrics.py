"""Span extraction and span-level scores.

Spans are decoded strictly from BIOES sequences: a run only becomes a span
when it is ``S-X`` or ``B-X (I-X)* E-X``; anything else is dropped. ``M-``
(BMES) is read as ``I-``. Percentages are kept as exact fractions and only
rounded for display.

Example:
    >>> [s.model_dump() for s in extract_spans(["B-GPE", "E-GPE", "S-PART"])]
    [{'start': 0, 'end': 1, 'type': 'GPE'}, {'start': 2, 'end': 2, 'type': 'PART'}]
"""

import csv
import logging
from collections.abc import Iterable, Sequence
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import TextIO

from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DataFormatError, VocabularyError

logger = logging.getLogger(__name__)

HUNDRED = Fraction(100)
METRICS_COLUMNS = ("dataset", "span_f1", "type_acc", "typed_f1", "error_reduction_vs_baseline")


class Span(BaseModel):
    """A labelled span; ``end`` is inclusive."""

    model_config = ConfigDict(frozen=True)

    start: int
    end: int
    type: str = ""

    @model_validator(mode="after")
    def _check_order(self) -> "Span":
        if self.start < 0 or self.start > self.end:
            raise ValueError(f"invalid span bounds ({self.start}, {self.end})")
        return self

    @property
    def bounds(self) -> tuple[int, int]:
        return self.start, self.end


def _split_tag(tag: str) -> tuple[str, str]:
    prefix, _, kind = tag.partition("-")
    prefix = prefix.upper()
    if prefix == "M":
        prefix = "I"
    return prefix, kind


def check_label_scheme(labels: Iterable[str], outside: str = "O") -> None:
    """Reject labels that are neither ``outside`` nor a B/I/M/E/S tag.

    Raises:
        VocabularyError: Listing the offending labels.
    """
    bad = []
    for label in labels:
        if label == outside:
            continue
        prefix, sep, kind = label.partition("-")
        if prefix.upper() not in ("B", "I", "M", "E", "S") or (sep and not kind):
            bad.append(label)
    if bad:
        raise VocabularyError(f"labels outside the BIOES scheme: {sorted(set(bad))}")


def extract_spans(labels: Sequence[str]) -> list[Span]:
    """Decode strict BIOES spans from a label sequence.

    Args:
        labels: Label strings such as ``B-GPE``, ``E-GPE``, ``S-PART``, ``O``.

    Returns:
        Spans in left-to-right order.
    """
    spans: list[Span] = []
    open_start: int | None = None
    open_type = ""
    for i, tag in enumerate(labels):
        prefix, kind = _split_tag(tag)
        if prefix in ("I", "E") and open_start is not None and kind == open_type:
            if prefix == "E":
                spans.append(Span(start=open_start, end=i, type=kind))
                open_start = None
            continue
        open_start = None
        if prefix == "B":
            open_start, open_type = i, kind
        elif prefix == "S":
            spans.append(Span(start=i, end=i, type=kind))
    return spans


def labels_from_spans(spans: Iterable[Span], length: int, outside: str = "O") -> list[str]:
    """Encode non-overlapping spans as a BIOES label sequence of ``length``."""
    labels = [outside] * length
    for span in spans:
        if span.end >= length:
            raise ValueError(f"span ({span.start}, {span.end}) outside sequence of {length}")
        if any(labels[i] != outside for i in range(span.start, span.end + 1)):
            raise ValueError(f"span ({span.start}, {span.end}) overlaps another span")
        suffix = f"-{span.type}" if span.type else ""
        if span.start == span.end:
            labels[span.start] = f"S{suffix}"
            continue
        labels[span.start] = f"B{suffix}"
        for i in range(span.start + 1, span.end):
            labels[i] = f"I{suffix}"
        labels[span.end] = f"E{suffix}"
    return labels


def _ratio(numerator: int, denominator: int, empty: Fraction) -> Fraction:
    return empty if denominator == 0 else HUNDRED * numerator / denominator


class SpanScores(BaseModel):
    """Corpus-level span scores, percentages as exact fractions."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gold_spans: int
    pred_spans: int
    boundary_correct: int
    typed_correct: int
    span_f1: Fraction
    type_acc: Fraction
    typed_f1: Fraction
    span_precision: Fraction
    span_recall: Fraction
    typed_precision: Fraction
    typed_recall: Fraction

    def rounded(self, places: int = 2) -> dict[str, float]:
        """Display values rounded half-up."""
        names = (
            "span_f1", "type_acc", "typed_f1",
            "span_precision", "span_recall", "typed_precision", "typed_recall",
        )
        return {name: float(to_decimal(getattr(self, name), places)) for name in names}


def span_f1_type_acc(
    gold: Sequence[Sequence[Span]], pred: Sequence[Sequence[Span]]
) -> SpanScores:
    """Score predicted spans against gold spans, sentence by sentence.

    A boundary match ignores the type. ``type_acc`` is the share of
    boundary-correct predictions whose type is also right. When both sides
    are empty every score is 100; otherwise an empty denominator gives 0.

    Args:
        gold: Gold spans per sentence.
        pred: Predicted spans per sentence, aligned with ``gold``.

    Returns:
        The scores.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    gold_n = pred_n = boundary = typed = 0
    for gold_spans, pred_spans in zip(gold, pred):
        gold_bounds = {s.bounds for s in gold_spans}
        gold_typed = {(s.start, s.end, s.type) for s in gold_spans}
        gold_n += len(gold_spans)
        pred_n += len(pred_spans)
        boundary += sum(1 for s in pred_spans if s.bounds in gold_bounds)
        typed += sum(1 for s in pred_spans if (s.start, s.end, s.type) in gold_typed)

    nothing = gold_n == 0 and pred_n == 0
    empty = HUNDRED if nothing else Fraction(0)
    scores = SpanScores(
        gold_spans=gold_n,
        pred_spans=pred_n,
        boundary_correct=boundary,
        typed_correct=typed,
        span_f1=_ratio(2 * boundary, gold_n + pred_n, empty),
        type_acc=_ratio(typed, boundary, empty),
        typed_f1=_ratio(2 * typed, gold_n + pred_n, empty),
        span_precision=_ratio(boundary, pred_n, empty),
        span_recall=_ratio(boundary, gold_n, empty),
        typed_precision=_ratio(typed, pred_n, empty),
        typed_recall=_ratio(typed, gold_n, empty),
    )
    logger.debug(f"scored {len(gold)} sentences: {gold_n} gold, {pred_n} predicted spans")
    return scores


def score_labels(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> SpanScores:
    """span_f1_type_acc over label sequences."""
    return span_f1_type_acc(
        [extract_spans(labels) for labels in gold], [extract_spans(labels) for labels in pred]
    )


def to_decimal(value: Fraction | float | str | Decimal, places: int = 2) -> Decimal:
    """Round an exact value half-up to ``places`` decimals."""
    exact = value if isinstance(value, Fraction) else Fraction(str(value))
    with localcontext() as context:
        context.prec = 50
        quotient = Decimal(exact.numerator) / Decimal(exact.denominator)
        return quotient.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def error_reduction(base_f1: float | str | Decimal, new_f1: float | str | Decimal) -> Decimal:
    """Relative error reduction ``(new - base) / (100 - base) * 100``, two decimals.

    Raises:
        ValueError: If ``base_f1`` is 100 or more.
    """
    base = Fraction(str(base_f1))
    new = Fraction(str(new_f1))
    if base >= HUNDRED:
        raise ValueError(f"base F1 must be below 100, got {base_f1}")
    return to_decimal((new - base) / (HUNDRED - base) * HUNDRED)


class MetricsRow(BaseModel):
    """One row of the metrics table."""

    dataset: str
    span_f1: float
    type_acc: float
    typed_f1: float
    error_reduction_vs_baseline: float | None = None

    @classmethod
    def from_scores(
        cls, dataset: str, scores: SpanScores, baseline_f1: float | None = None
    ) -> "MetricsRow":
        """Build a row; the reduction is computed on typed F1 against ``baseline_f1``."""
        shown = scores.rounded()
        reduction = None
        if baseline_f1 is not None:
            reduction = float(error_reduction(baseline_f1, to_decimal(scores.typed_f1)))
        return cls(
            dataset=dataset,
            span_f1=shown["span_f1"],
            type_acc=shown["type_acc"],
            typed_f1=shown["typed_f1"],
            error_reduction_vs_baseline=reduction,
        )


def write_metrics_table(rows: Iterable[MetricsRow], stream: TextIO) -> None:
    """Write rows as TSV with a header; a missing reduction is written as ``-``."""
    writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        reduction = row.error_reduction_vs_baseline
        writer.writerow(
            [
                row.dataset,
                f"{row.span_f1:.2f}",
                f"{row.type_acc:.2f}",
                f"{row.typed_f1:.2f}",
                "-" if reduction is None else f"{reduction:.2f}",
            ]
        )


def read_metrics_table(path: str | Path) -> list[MetricsRow]:
    """Read a table written by write_metrics_table."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_COLUMNS:
            raise DataFormatError("missing or unexpected metrics header", str(path), 1)
        rows = []
        for line_number, fields in enumerate(reader, start=2):
            if len(fields) != len(METRICS_COLUMNS):
                raise DataFormatError(
                    f"expected {len(METRICS_COLUMNS)} columns, got {len(fields)}",
                    str(path),
                    line_number,
                )
            values = dict(zip(METRICS_COLUMNS, fields))
            if values["error_reduction_vs_baseline"] == "-":
                values["error_reduction_vs_baseline"] = None  # type: ignore[assignment]
            rows.append(MetricsRow.model_validate(values))
    return rows
