"""OCR evaluation over Unicode text: Levenshtein distance, CER and WER.

Text is NFC-normalized on ingest.  The edit unit is the Unicode scalar
value, so Bengali conjuncts count per code point; pass ``unit="grapheme"``
to cluster combining marks with their base character for sensitivity
analysis (an approximation of grapheme clusters, not full UAX #29).

Convention: 0 means an exact match and larger is worse, consistent with the
usual CER definition (so a 10-character reference with one substituted
character scores CER 0.1).
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass

import numpy as np

from platekit import kernels
from platekit.errors import DataError


@dataclass(frozen=True)
class Transcript:
    text: str
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "text", unicodedata.normalize("NFC", self.text))


@dataclass(frozen=True)
class OcrScore:
    cer: float
    wer: float
    levenshtein: float


def _text(value) -> str:
    if isinstance(value, Transcript):
        return value.text
    return unicodedata.normalize("NFC", value)


def _graphemes(s: str) -> list[str]:
    # Base character plus any following combining marks (Mn/Mc/Me).
    clusters: list[str] = []
    for ch in s:
        if clusters and unicodedata.category(ch) in ("Mn", "Mc", "Me"):
            clusters[-1] += ch
        else:
            clusters.append(ch)
    return clusters


def _symbol_ids(tokens, table: dict) -> np.ndarray:
    # the table must be shared across both compared sequences, otherwise the
    # same symbol would get different ids on each side
    ids = np.empty(len(tokens), dtype=np.uint32)
    for i, tok in enumerate(tokens):
        ids[i] = table.setdefault(tok, len(table))
    return ids


def _unit_pair(a: str, b: str, unit: str):
    if unit == "scalar":
        return (np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32),
                np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32))
    if unit == "grapheme":
        table: dict = {}
        return _symbol_ids(_graphemes(a), table), _symbol_ids(_graphemes(b), table)
    raise ValueError(f"unknown unit {unit!r}")


def _unit_count(s: str, unit: str) -> int:
    if unit == "scalar":
        return len(s)
    if unit == "grapheme":
        return len(_graphemes(s))
    raise ValueError(f"unknown unit {unit!r}")


def levenshtein(a, b, unit: str = "scalar") -> int:
    """Minimum insertions + deletions + substitutions between two strings."""
    ids_a, ids_b = _unit_pair(_text(a), _text(b), unit)
    return kernels.levenshtein_u32(ids_a, ids_b)


def cer(pred, gt, unit: str = "scalar") -> float:
    """Character error rate: edit distance over reference length."""
    gt_text = _text(gt)
    if not gt_text:
        raise ValueError("cer needs a nonempty ground truth")
    return levenshtein(pred, gt_text, unit) / _unit_count(gt_text, unit)


def word_distance(pred, gt) -> int:
    """Word-level edit distance over whitespace-delimited tokens."""
    return _word_distance(_text(pred), _text(gt))


def _word_distance(pred_text: str, gt_text: str) -> int:
    table: dict = {}
    a = _symbol_ids(pred_text.split(), table)
    b = _symbol_ids(gt_text.split(), table)
    return kernels.levenshtein_u32(a, b)


def wer(pred, gt) -> float:
    """Word error rate: word-level edit distance over reference word count."""
    gt_text = _text(gt)
    gt_words = gt_text.split()
    if not gt_words:
        raise ValueError("wer needs a ground truth with at least one word")
    return _word_distance(_text(pred), gt_text) / len(gt_words)


def score_corpus(pairs, mode: str = "micro", unit: str = "scalar") -> OcrScore:
    """Aggregate (prediction, ground_truth) pairs into corpus-level scores.

    micro (default): summed distances over summed reference lengths.
    macro: mean of the per-pair rates.
    Levenshtein is always the mean per-pair character distance.
    """
    if mode not in ("micro", "macro"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("score_corpus needs a nonempty corpus")
    char_dists = []
    word_dists = []
    char_lens = []
    word_lens = []
    for pred, gt in pairs:
        gt_text = _text(gt)
        pred_text = _text(pred)
        if not gt_text or not gt_text.split():
            raise ValueError("corpus contains an empty ground truth")
        char_dists.append(levenshtein(pred_text, gt_text, unit))
        char_lens.append(_unit_count(gt_text, unit))
        word_dists.append(_word_distance(pred_text, gt_text))
        word_lens.append(len(gt_text.split()))
    mean_lev = sum(char_dists) / len(pairs)
    if mode == "micro":
        return OcrScore(
            cer=sum(char_dists) / sum(char_lens),
            wer=sum(word_dists) / sum(word_lens),
            levenshtein=mean_lev,
        )
    return OcrScore(
        cer=sum(d / n for d, n in zip(char_dists, char_lens)) / len(pairs),
        wer=sum(d / n for d, n in zip(word_dists, word_lens)) / len(pairs),
        levenshtein=mean_lev,
    )


def parse_tsv(text: str):
    """Parse corpus ingest TSV: image_id <TAB> prediction <TAB> ground_truth."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError(f"row {lineno}: expected 3 tab-separated columns, got {len(cols)}")
        rows.append((cols[0], cols[1], cols[2]))
    return rows
