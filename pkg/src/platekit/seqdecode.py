"""Beam-search sequence decoder over an abstract per-step log-probability
provider, so it can be driven by logit fixtures or any external model.

Pinned semantics (these make runs reproducible across platforms):

* ranking score = cumulative log-probability / length**length_penalty,
  where length counts generated tokens after BOS (EOS, when emitted,
  counts; BOS never does).  With length_penalty = 1.0 the score is the
  mean per-token log-probability.
* at each step all live beams expand over the whole vocabulary and the top
  ``num_beams`` candidates are kept; a candidate ending in EOS retires to
  the finished pool and gives up its beam slot, which makes beam width 1
  coincide with greedy decoding.
* ties break lexicographically on token ids.
* early stopping halts the search once ``num_beams`` finished hypotheses
  exist and the worst of them already beats every live beam's current
  score normalized at its current length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from platekit.errors import DecodeError, FixtureError
from platekit.textmetrics import Transcript

BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
NORMALIZATION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class GenerationConfig:
    num_beams: int = 3
    max_length: int = 20
    length_penalty: float = 1.0
    no_repeat_ngram_size: int = 0
    early_stopping: bool = True

    def __post_init__(self):
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if self.length_penalty <= 0:
            raise ValueError("length_penalty must be > 0")
        if self.no_repeat_ngram_size < 0:
            raise ValueError("no_repeat_ngram_size must be >= 0")


@dataclass(frozen=True)
class Hypothesis:
    """A partial decode: token ids (starting at BOS) plus cumulative log-score.

    ``finished`` is True iff EOS was emitted; hypotheses cut off at
    max_length stay unfinished but are still ranked and returned.
    """

    tokens: tuple[int, ...]
    log_score: float
    finished: bool = False

    @property
    def length(self) -> int:
        """Generated tokens, excluding BOS."""
        return len(self.tokens) - 1


def ranking_score(hyp: Hypothesis, length_penalty: float) -> float:
    return hyp.log_score / max(hyp.length, 1) ** length_penalty


def ngram_mask(tokens, n: int) -> set[int]:
    """Token ids banned as the next token under no-repeat-n-gram blocking.

    n = 0 disables blocking entirely (repetition allowed, as required for
    plate numbers with legitimately repeated digit runs).
    """
    if n <= 0 or len(tokens) < n:
        return set()
    banned = set()
    tail = tuple(tokens[len(tokens) - n + 1:])
    for i in range(len(tokens) - n + 1):
        if tuple(tokens[i:i + n - 1]) == tail:
            banned.add(tokens[i + n - 1])
    return banned


def _check_distribution(row, vocab_size):
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] != vocab_size:
        raise DecodeError(
            f"provider returned a row of width {row.shape}, expected {vocab_size}"
        )
    total = float(np.exp(row).sum())
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise DecodeError(f"provider distribution sums to {total}, not 1")
    return row


def beam_search(provider, config: GenerationConfig, *, bos_id: int, eos_id: int,
                vocab_size: int | None = None) -> list[Hypothesis]:
    """Run beam search against ``provider`` and return ranked hypotheses.

    ``provider`` maps a token-id prefix (tuple, starting with BOS) to a
    log-probability row over the vocabulary.  The row must exponentiate to
    1 within 1e-6 or the decode aborts.
    """
    first = np.asarray(provider((bos_id,)), dtype=np.float64)
    if first.ndim != 1 or first.shape[0] == 0:
        raise DecodeError("provider returned an empty vocabulary")
    if vocab_size is None:
        vocab_size = first.shape[0]
    penalty = config.length_penalty

    live = [Hypothesis((bos_id,), 0.0)]
    pool: list[Hypothesis] = []
    first_row = _check_distribution(first, vocab_size)

    for step in range(config.max_length):
        candidates = []
        for hyp in live:
            if step == 0 and hyp.tokens == (bos_id,):
                row = first_row
            else:
                row = _check_distribution(provider(hyp.tokens), vocab_size)
            banned = ngram_mask(hyp.tokens, config.no_repeat_ngram_size)
            for token in range(vocab_size):
                lp = row[token]
                if token in banned or lp == -np.inf:
                    continue
                candidates.append((hyp.log_score + lp, hyp.tokens + (token,)))
        if not candidates:
            break
        denom = (step + 1) ** penalty
        candidates.sort(key=lambda c: (-(c[0] / denom), c[1]))
        live = []
        for log_score, tokens in candidates[:config.num_beams]:
            if tokens[-1] == eos_id:
                pool.append(Hypothesis(tokens, log_score, finished=True))
            else:
                live.append(Hypothesis(tokens, log_score))
        pool.sort(key=lambda h: (-ranking_score(h, penalty), h.tokens))
        del pool[config.num_beams:]
        if not live:
            break
        if config.early_stopping and len(pool) >= config.num_beams:
            best_live = max(ranking_score(h, penalty) for h in live)
            if ranking_score(pool[-1], penalty) >= best_live:
                break

    results = pool + live
    results.sort(key=lambda h: (-ranking_score(h, penalty), h.tokens))
    return results


def greedy_decode(provider, config: GenerationConfig, *, bos_id: int, eos_id: int) -> Hypothesis:
    """Argmax decoding; reference behaviour for beam width 1."""
    tokens = (bos_id,)
    log_score = 0.0
    for _ in range(config.max_length):
        row = np.asarray(provider(tokens), dtype=np.float64)
        banned = ngram_mask(tokens, config.no_repeat_ngram_size)
        order = sorted(range(row.shape[0]), key=lambda t: (-row[t], t))
        token = next((t for t in order if t not in banned and row[t] > -np.inf), None)
        if token is None:
            break
        tokens += (token,)
        log_score += float(row[token])
        if token == eos_id:
            return Hypothesis(tokens, log_score, finished=True)
    return Hypothesis(tokens, log_score)


class Vocabulary:
    """Token table from UTF-8 lines "id<TAB>token"; must define <bos> and <eos>."""

    def __init__(self, tokens: list[str]):
        self.tokens = list(tokens)
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise FixtureError("vocabulary contains duplicate tokens")
        for required in (BOS_TOKEN, EOS_TOKEN):
            if required not in self.index:
                raise FixtureError(f"vocabulary is missing the {required} entry")

    def __len__(self):
        return len(self.tokens)

    @property
    def bos_id(self) -> int:
        return self.index[BOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.index[EOS_TOKEN]

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        entries = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FixtureError(f"vocab line {lineno}: expected id<TAB>token")
            try:
                token_id = int(parts[0])
            except ValueError:
                raise FixtureError(f"vocab line {lineno}: non-integer id {parts[0]!r}") from None
            if token_id in entries:
                raise FixtureError(f"vocab line {lineno}: duplicate id {token_id}")
            entries[token_id] = parts[1]
        if not entries:
            raise FixtureError("empty vocabulary")
        if sorted(entries) != list(range(len(entries))):
            raise FixtureError("vocabulary ids must be dense 0..V-1")
        return cls([entries[i] for i in range(len(entries))])

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def detokenize(self, tokens) -> str:
        parts = []
        for t in tokens:
            if t == self.bos_id or t == self.eos_id:
                continue
            if not 0 <= t < len(self.tokens):
                raise FixtureError(f"token id {t} outside vocabulary")
            parts.append(self.tokens[t])
        return "".join(parts)


def parse_logit_fixture(text: str, vocab_size: int):
    """Parse a logit fixture into [(sample_id, {prefix_tuple: log_prob_row})].

    Format, one record per line:
        sample<TAB>sample_id          starts a new sample
        id,id,...<TAB>lp lp lp ...    prefix (comma-joined token ids,
                                      including BOS) -> dense log-prob row
    Blank lines and '#' comments are ignored.
    """
    samples: list[tuple[str, dict]] = []
    current: dict | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FixtureError(f"fixture line {lineno}: expected two tab-separated fields")
        if parts[0] == "sample":
            current = {}
            samples.append((parts[1], current))
            continue
        if current is None:
            raise FixtureError(f"fixture line {lineno}: mapping before any sample header")
        try:
            prefix = tuple(int(v) for v in parts[0].split(","))
            row = np.array([float(v) for v in parts[1].split()], dtype=np.float64)
        except ValueError as exc:
            raise FixtureError(f"fixture line {lineno}: {exc}") from None
        if row.shape[0] != vocab_size:
            raise FixtureError(
                f"fixture line {lineno}: row has {row.shape[0]} entries, vocabulary has {vocab_size}"
            )
        current[prefix] = row
    if not samples:
        raise FixtureError("fixture contains no samples")
    return samples


def decode_fixture(logits_path, vocab_path, config: GenerationConfig):
    """Decode every sample of a logit fixture; returns [(sample_id, Transcript)]."""
    vocab = Vocabulary.load(vocab_path)
    with open(logits_path, encoding="utf-8") as fh:
        samples = parse_logit_fixture(fh.read(), len(vocab))
    out = []
    for sample_id, table in samples:
        def provider(prefix, _table=table):
            try:
                return _table[tuple(prefix)]
            except KeyError:
                raise FixtureError(
                    f"fixture does not cover prefix {','.join(map(str, prefix))}"
                ) from None

        ranked = beam_search(provider, config, bos_id=vocab.bos_id, eos_id=vocab.eos_id)
        text = vocab.detokenize(ranked[0].tokens)
        out.append((sample_id, Transcript(text, source_id=sample_id)))
    return out
