"""Pseudo-probability computation over discretized unit sequences.

Three scoring routes share the PseudoProbability output:

* n-gram models with additive smoothing, scored left to right by the
  chain rule (the classic control models),
* span scoring for masked models: sliding windows of ``m_d + 1`` tokens
  with stride ``delta_t``, each conditioned on the untouched remainder
  of the sequence, log-probabilities summed over windows,
* externally computed per-window log-probabilities loaded from a table,
  for models evaluated out of process.

All log-probabilities are natural logs and may be unnormalized; only
comparisons between paired inputs are meaningful.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError, ValidationError
from .types import UnitSequence

LOG_FLOOR = 1e-300

# sentinels used in n-gram contexts; real units are non-negative
_START = -2
_END = -1


@dataclass(frozen=True)
class PseudoProbability:
    """Natural-log score of a whole input; finite by construction."""

    log_score: float

    def __post_init__(self):
        if not math.isfinite(self.log_score):
            raise ValidationError("non-finite pseudo-probability")


@dataclass(frozen=True)
class SpanConfig:
    """Decoding span size and temporal sliding size for span scoring."""

    m_d: int = 15
    delta_t: int = 5

    def __post_init__(self):
        if self.m_d < 1 or self.delta_t < 1:
            raise ValidationError(
                f"span parameters must be >= 1, got m_d={self.m_d} "
                f"delta_t={self.delta_t}")


# ---------------------------------------------------------------------------
# n-gram models
# ---------------------------------------------------------------------------

class NgramModel:
    """Additively smoothed n-gram model over integer units.

    Conditionals are P(u | h) = (count(h, u) + alpha) / (count(h) +
    alpha * (V + 1)) where the prediction alphabet is the training
    vocabulary plus one end-of-sequence symbol. Sequences are padded
    with n - 1 start symbols; the vocabulary is closed over the
    training units.
    """

    def __init__(self, order: int, alpha: float, vocab, counts: dict):
        if order < 1:
            raise ValidationError(f"order must be >= 1, got {order}")
        if not (alpha > 0):
            raise ValidationError(f"alpha must be positive, got {alpha}")
        self.order = order
        self.alpha = float(alpha)
        self.vocab = tuple(sorted(set(int(u) for u in vocab)))
        self._vocab_set = frozenset(self.vocab)
        self.counts = counts  # context tuple -> {unit or _END: count}
        self._totals = {ctx: sum(c.values()) for ctx, c in counts.items()}

    @classmethod
    def train(cls, corpus, order: int, alpha: float = 1.0) -> "NgramModel":
        corpus = list(corpus)
        if not corpus:
            raise ValidationError("cannot train an n-gram model on an empty corpus")
        counts: dict = {}
        vocab: set[int] = set()
        for seq in corpus:
            units = list(seq.units) if isinstance(seq, UnitSequence) else list(seq)
            vocab.update(units)
            tokens = [_START] * (order - 1) + units + [_END]
            for i in range(order - 1, len(tokens)):
                ctx = tuple(tokens[i - order + 1:i])
                bucket = counts.setdefault(ctx, {})
                bucket[tokens[i]] = bucket.get(tokens[i], 0) + 1
        return cls(order, alpha, vocab, counts)

    def _check_unit(self, unit: int) -> None:
        if unit not in self._vocab_set:
            raise ValidationError(f"unit {unit} not in the model vocabulary")

    def logprob(self, unit: int | None, history) -> float:
        """log P(unit | history); ``None`` queries the end symbol.

        Only the last ``order - 1`` history tokens enter the context;
        those and the target must be in the training vocabulary.
        """
        target = _END if unit is None else int(unit)
        if target != _END:
            self._check_unit(target)
        if self.order > 1:
            tail = [int(h) for h in history][-(self.order - 1):]
            for h in tail:
                self._check_unit(h)
            ctx = tuple([_START] * (self.order - 1 - len(tail)) + tail)
        else:
            ctx = ()
        bucket = self.counts.get(ctx, {})
        count = bucket.get(target, 0)
        total = self._totals.get(ctx, 0)
        denom = total + self.alpha * (len(self.vocab) + 1)
        return math.log((count + self.alpha) / denom)

    # -- JSON persistence ---------------------------------------------------

    @staticmethod
    def _token_str(token: int) -> str:
        if token == _START:
            return "<s>"
        if token == _END:
            return "</s>"
        return str(token)

    @staticmethod
    def _token_int(text: str) -> int:
        if text == "<s>":
            return _START
        if text == "</s>":
            return _END
        return int(text)

    def to_json(self) -> dict:
        counts = {}
        for ctx in sorted(self.counts):
            key = " ".join(self._token_str(t) for t in ctx)
            counts[key] = {self._token_str(u): c
                           for u, c in sorted(self.counts[ctx].items())}
        return {"order": self.order, "alpha": self.alpha,
                "vocab": list(self.vocab), "counts": counts}

    @classmethod
    def from_json(cls, doc: dict) -> "NgramModel":
        counts = {}
        for key, bucket in doc["counts"].items():
            ctx = tuple(cls._token_int(t) for t in key.split()) if key else ()
            counts[ctx] = {cls._token_int(u): int(c) for u, c in bucket.items()}
        return cls(int(doc["order"]), float(doc["alpha"]), doc["vocab"], counts)


def save_ngram_model(model: NgramModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=2, sort_keys=True) + "\n")


def load_ngram_model(path) -> NgramModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid model JSON ({exc})") from None
    for key in ("order", "alpha", "vocab", "counts"):
        if key not in doc:
            raise FormatError(f"{path}: model JSON is missing {key!r}")
    return NgramModel.from_json(doc)


def ngram_train(corpus, order: int, alpha: float = 1.0) -> NgramModel:
    """Train an additively smoothed n-gram model on unit sequences."""
    return NgramModel.train(corpus, order, alpha)


def chain_rule_logprob(model, seq: UnitSequence,
                       per_token: bool = False) -> PseudoProbability:
    """Left-to-right log-probability, including the end-symbol term.

    ``model`` is any causal scorer exposing ``logprob(unit_or_None,
    history)``. Pairs are length-matched by construction, so raw scores
    are the default; ``per_token`` divides by the sequence length for
    callers that want it anyway.
    """
    total = 0.0
    history: list[int] = []
    for unit in seq.units:
        total += model.logprob(unit, history)
        history.append(unit)
    total += model.logprob(None, history)
    if per_token:
        total /= len(seq.units)
    return PseudoProbability(total)


# ---------------------------------------------------------------------------
# masked-window scoring
# ---------------------------------------------------------------------------

def span_windows(length: int, cfg: SpanConfig) -> list[tuple[int, int]]:
    """Half-open, 0-based windows visited by span scoring over T tokens."""
    windows = []
    j = 0
    while j * cfg.delta_t <= length - 1:
        start = j * cfg.delta_t
        windows.append((start, min(start + cfg.m_d + 1, length)))
        j += 1
    return windows


def span_pseudo_logprob(scorer, seq: UnitSequence,
                        cfg: SpanConfig | None = None,
                        per_token: bool = False) -> PseudoProbability:
    """Sum of masked-window log-probabilities over sliding spans.

    ``scorer`` exposes ``window_logprob(seq, start, stop)`` returning
    log P(units[start:stop] | the remaining tokens); windows that would
    run past the end of the sequence are clamped at T. ``per_token``
    divides the sum by the sequence length (off by default; pairs are
    length-matched by construction).
    """
    cfg = cfg or SpanConfig()
    total = 0.0
    for start, stop in span_windows(len(seq.units), cfg):
        total += scorer.window_logprob(seq, start, stop)
    if per_token:
        total /= len(seq.units)
    return PseudoProbability(total)


class JointTableScorer:
    """Masked-window scorer backed by an explicit joint distribution.

    ``table`` maps unit tuples to probabilities; conditioning on the
    window's complement marginalizes the window positions over ``vocab``.
    Intended for small vocabularies and short sequences (tests, toys).
    """

    def __init__(self, table: dict, vocab):
        self.table = {tuple(k): float(v) for k, v in table.items()}
        self.vocab = tuple(sorted(set(int(u) for u in vocab)))

    def joint_prob(self, units) -> float:
        return self.table.get(tuple(units), 0.0)

    def window_logprob(self, seq: UnitSequence, start: int, stop: int) -> float:
        units = tuple(seq.units)
        numer = self.joint_prob(units)
        denom = 0.0
        for filler in itertools.product(self.vocab, repeat=stop - start):
            denom += self.joint_prob(units[:start] + filler + units[stop:])
        return math.log(max(numer, LOG_FLOOR)) - math.log(max(denom, LOG_FLOOR))


class ExternalMaskedScorer:
    """Window scores computed by an external model and loaded from a table.

    Keys are (utt_id, i, j) with i/j 1-based inclusive token positions,
    matching the on-disk masked-score format.
    """

    def __init__(self, table: dict):
        self.table = dict(table)

    def window_logprob(self, seq: UnitSequence, start: int, stop: int) -> float:
        key = (seq.utt_id, start + 1, stop)
        try:
            return self.table[key]
        except KeyError:
            raise ValidationError(
                f"no external masked score for window ({seq.utt_id}, "
                f"{start + 1}, {stop})") from None


def read_masked_scores(path) -> dict:
    """Read a masked-score table: ``utt_id\\ti\\tj\\tlog_p`` per line."""
    table: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise FormatError(
                    f"{path}: line {lineno}: expected 4 columns, got {len(cols)}")
            if lineno == 1 and cols == ["utt_id", "i", "j", "log_p"]:
                continue
            utt_id = cols[0]
            try:
                i, j, logp = int(cols[1]), int(cols[2]), float(cols[3])
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: malformed window row") from None
            key = (utt_id, i, j)
            if key in table:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate window {key}")
            table[key] = logp
    return table


def write_masked_scores(table: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("utt_id\ti\tj\tlog_p\n")
        for utt_id, i, j in sorted(table):
            fh.write(f"{utt_id}\t{i}\t{j}\t{table[(utt_id, i, j)]:.6f}\n")
