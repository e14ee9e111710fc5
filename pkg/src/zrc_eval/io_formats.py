"""Readers and writers for every artifact boundary.

Formats
-------
item file        : whitespace columns with the literal header
                   ``#file onset offset #phone prev-phone next-phone speaker``
feature archive  : one file per utterance inside a directory, either text
                   (``dim=<D> rate=<R>`` header then one row of floats per
                   frame) or binary (magic ``ZRCF``, version u32=1, D u32,
                   rate f32, T u64, then T*D little-endian f32, row-major)
unit sequences   : one line per utterance, ``<utt_id> u1 u2 ... uT``
pair manifest    : TSV with header ``pair_id accepted_id rejected_id`` plus
                   arbitrary extra columns, which become tags
similarity gold  : TSV with header ``word_a word_b score dataset`` plus
                   optional ``refs_a refs_b`` columns (comma-separated
                   ``voice:utt_id`` entries)
external scores  : ``<utt_id>\\t<log_score>`` per line
report           : TSV (row-typed, keys sorted) or JSON (keys sorted);
                   floats printed with 6 decimals in both

All scores are exchanged in the natural-log domain. Parsing is
locale-independent: decimal point only.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .types import FeatureSequence, MetricReport, ScoredPair, SimilarityRecord, TriphoneToken

ITEM_HEADER = "#file onset offset #phone prev-phone next-phone speaker"

_FEATURE_MAGIC = b"ZRCF"
_FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIIfQ")


# ---------------------------------------------------------------------------
# item files
# ---------------------------------------------------------------------------

def read_item_file(path) -> list[TriphoneToken]:
    """Parse a triphone item file into tokens, preserving file order."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].split() != ITEM_HEADER.split():
        raise FormatError(
            f"{path}: line 1: expected item header {ITEM_HEADER!r}")
    tokens = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 7:
            raise FormatError(
                f"{path}: line {lineno}: expected 7 columns, got {len(cols)}")
        file_id, onset_s, offset_s, center, left, right, speaker = cols
        try:
            onset, offset = float(onset_s), float(offset_s)
        except ValueError:
            raise FormatError(
                f"{path}: line {lineno}: non-numeric onset/offset") from None
        token = TriphoneToken(file_id, onset, offset, center, left, right, speaker)
        key = (file_id, onset, offset)
        if key in seen:
            raise ValidationError(
                f"{path}: line {lineno}: duplicate token {key}")
        seen.add(key)
        tokens.append(token)
    return tokens


def write_item_file(tokens, path) -> None:
    with open(path, "w") as fh:
        fh.write(ITEM_HEADER + "\n")
        for t in tokens:
            fh.write(f"{t.file_id} {t.onset} {t.offset} "
                     f"{t.center} {t.left} {t.right} {t.speaker}\n")


# ---------------------------------------------------------------------------
# feature archives
# ---------------------------------------------------------------------------

def _feature_file(root: Path, utt_id: str) -> Path:
    for candidate in (root / f"{utt_id}.zrcf", root / f"{utt_id}.txt", root / utt_id):
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no feature file for {utt_id!r} under {root}")


def read_feature_archive(path, utt_id: str) -> FeatureSequence:
    """Load one utterance from an archive directory, text or binary.

    ``.zrcf`` files must be binary and ``.txt`` files text; a bare file
    is sniffed by its leading magic bytes.
    """
    fpath = _feature_file(Path(path), utt_id)
    if fpath.suffix == ".zrcf":
        return _read_feature_binary(fpath, utt_id)
    if fpath.suffix == ".txt":
        return _read_feature_text(fpath, utt_id)
    with open(fpath, "rb") as fh:
        magic = fh.read(4)
    if magic == _FEATURE_MAGIC:
        return _read_feature_binary(fpath, utt_id)
    return _read_feature_text(fpath, utt_id)


def _read_feature_text(fpath: Path, utt_id: str) -> FeatureSequence:
    try:
        lines = fpath.read_text().splitlines()
    except UnicodeDecodeError:
        raise FormatError(f"{fpath}: not a text feature file") from None
    if not lines:
        raise FormatError(f"{fpath}: empty feature file")
    fields = dict()
    for tok in lines[0].split():
        if "=" not in tok:
            raise FormatError(f"{fpath}: line 1: expected 'dim=<D> rate=<R>'")
        key, _, value = tok.partition("=")
        fields[key] = value
    try:
        dim = int(fields["dim"])
        rate = float(fields["rate"])
    except (KeyError, ValueError):
        raise FormatError(f"{fpath}: line 1: expected 'dim=<D> rate=<R>'") from None
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != dim:
            raise FormatError(
                f"{fpath}: line {lineno}: expected {dim} values, got {len(cols)}")
        try:
            rows.append([float(c) for c in cols])
        except ValueError:
            raise FormatError(f"{fpath}: line {lineno}: non-numeric value") from None
    if not rows:
        raise FormatError(f"{fpath}: no frames after header")
    frames = np.array(rows, dtype=np.float64)
    if not np.isfinite(frames).all():
        raise ValidationError(f"{fpath}: non-finite value in frames")
    return FeatureSequence(utt_id, rate, frames)


def _read_feature_binary(fpath: Path, utt_id: str) -> FeatureSequence:
    blob = fpath.read_bytes()
    if len(blob) < _FEATURE_HEADER.size:
        raise FormatError(f"{fpath}: truncated header")
    magic, version, dim, rate, n_frames = _FEATURE_HEADER.unpack_from(blob)
    if magic != _FEATURE_MAGIC:
        raise FormatError(f"{fpath}: bad magic {magic!r}, expected {_FEATURE_MAGIC!r}")
    if version != _FEATURE_VERSION:
        raise FormatError(f"{fpath}: unsupported version {version}")
    if dim < 1:
        raise FormatError(f"{fpath}: non-positive dimension {dim}")
    body = blob[_FEATURE_HEADER.size:]
    expected = n_frames * dim * 4
    if len(body) < expected:
        raise FormatError(
            f"{fpath}: truncated body, expected {expected} bytes, got {len(body)}")
    if len(body) > expected:
        raise FormatError(
            f"{fpath}: dimension mismatch between header and body "
            f"({len(body)} bytes for {n_frames}x{dim} f32)")
    frames = np.frombuffer(body, dtype="<f4", count=n_frames * dim)
    frames = frames.reshape(n_frames, dim).astype(np.float64)
    if not np.isfinite(frames).all():
        raise ValidationError(f"{fpath}: non-finite value in frames")
    return FeatureSequence(utt_id, rate, frames)


def write_feature_archive(path, fs: FeatureSequence, fmt: str = "binary") -> Path:
    """Write one utterance into an archive directory; returns the file path.

    The binary format stores 32-bit floats, so values outside f32 range or
    precision are rounded on write.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    if fmt == "binary":
        fpath = root / f"{fs.utt_id}.zrcf"
        t, d = fs.frames.shape
        with open(fpath, "wb") as fh:
            fh.write(_FEATURE_HEADER.pack(
                _FEATURE_MAGIC, _FEATURE_VERSION, d, fs.frame_rate, t))
            fh.write(np.ascontiguousarray(fs.frames, dtype="<f4").tobytes())
    elif fmt == "text":
        fpath = root / f"{fs.utt_id}.txt"
        with open(fpath, "w") as fh:
            rate = fs.frame_rate
            fh.write(f"dim={fs.dim} rate={int(rate) if rate == int(rate) else rate}\n")
            for row in fs.frames:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown feature format {fmt!r}")
    return fpath


def list_archive(path) -> list[str]:
    """Sorted utterance ids present in an archive directory."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"feature archive directory {root} not found")
    ids = set()
    for p in root.iterdir():
        if p.is_file():
            ids.add(p.stem if p.suffix in (".zrcf", ".txt") else p.name)
    return sorted(ids)


class FeatureArchive:
    """Lazy, thread-safe view of a feature archive directory."""

    def __init__(self, path):
        self.root = Path(path)
        self._cache: dict[str, FeatureSequence] = {}
        self._lock = threading.Lock()

    def load(self, utt_id: str) -> FeatureSequence:
        with self._lock:
            fs = self._cache.get(utt_id)
        if fs is None:
            fs = read_feature_archive(self.root, utt_id)
            with self._lock:
                self._cache[utt_id] = fs
        return fs


# ---------------------------------------------------------------------------
# unit sequences
# ---------------------------------------------------------------------------

def read_unit_sequences(path) -> list:
    """Parse ``<utt_id> u1 u2 ... uT`` lines into UnitSequence values."""
    from .types import UnitSequence

    sequences = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.split()
            utt_id, units = cols[0], cols[1:]
            if not units:
                raise ValidationError(
                    f"{path}: line {lineno}: no units for {utt_id!r}")
            try:
                parsed = [int(u) for u in units]
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: non-integer unit") from None
            if any(u < 0 for u in parsed):
                raise ValidationError(
                    f"{path}: line {lineno}: negative unit index")
            sequences.append(UnitSequence(utt_id, parsed))
    return sequences


def write_unit_sequences(sequences, path) -> None:
    with open(path, "w") as fh:
        for seq in sequences:
            fh.write(seq.utt_id + " " + " ".join(str(u) for u in seq.units) + "\n")


# ---------------------------------------------------------------------------
# pair manifests, gold tables, score tables
# ---------------------------------------------------------------------------

def _read_tsv(path, required: tuple[str, ...]):
    """Yield (lineno, row-dict) from a TSV with a declared header row."""
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line:
            raise FormatError(f"{path}: empty file, expected a header row")
        header = header_line.rstrip("\n").split("\t")
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"{path}: header is missing columns {missing}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != len(header):
                raise FormatError(
                    f"{path}: line {lineno}: expected {len(header)} columns, "
                    f"got {len(cols)}")
            yield lineno, dict(zip(header, cols))


def read_pair_manifest(path) -> list[ScoredPair]:
    """Read a pair manifest; extra columns become tags."""
    pairs = []
    seen = set()
    for lineno, row in _read_tsv(path, ("pair_id", "accepted_id", "rejected_id")):
        pair_id = row.pop("pair_id")
        if pair_id in seen:
            raise ValidationError(f"{path}: line {lineno}: duplicate pair_id {pair_id!r}")
        seen.add(pair_id)
        accepted = row.pop("accepted_id")
        rejected = row.pop("rejected_id")
        pairs.append(ScoredPair(pair_id, accepted, rejected, tags=dict(row)))
    return pairs


def write_pair_manifest(pairs, path) -> None:
    tag_keys = sorted({k for p in pairs for k in p.tags})
    with open(path, "w") as fh:
        fh.write("\t".join(["pair_id", "accepted_id", "rejected_id"] + tag_keys) + "\n")
        for p in pairs:
            row = [p.pair_id, p.accepted_id, p.rejected_id]
            row += [p.tags.get(k, "") for k in tag_keys]
            fh.write("\t".join(row) + "\n")


def _parse_refs(field: str) -> tuple:
    """``voice:utt_id`` entries, comma separated; bare entries get voice ''."""
    refs = []
    for chunk in field.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        voice, sep, utt = chunk.partition(":")
        refs.append((voice, utt) if sep else ("", chunk))
    return tuple(refs)


def read_similarity_gold(path) -> list[SimilarityRecord]:
    """Read a similarity gold table, merging opposite-order duplicates.

    Rows naming the same unordered word pair within one dataset collapse to
    a single record whose score is the mean of the duplicates.
    """
    merged: dict = {}
    order = []
    for lineno, row in _read_tsv(path, ("word_a", "word_b", "score", "dataset")):
        try:
            score = float(row["score"])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: non-numeric score") from None
        word_a, word_b, dataset = row["word_a"], row["word_b"], row["dataset"]
        refs_a = _parse_refs(row.get("refs_a", ""))
        refs_b = _parse_refs(row.get("refs_b", ""))
        if not (0.0 <= score <= 10.0):
            raise ValidationError(
                f"{path}: line {lineno}: score {score} outside [0, 10]")
        key = (dataset,) + tuple(sorted((word_a, word_b)))
        if key not in merged:
            merged[key] = [word_a, word_b, [score], refs_a, refs_b]
            order.append(key)
        else:
            entry = merged[key]
            entry[2].append(score)
            if word_a == entry[0]:
                extra_a, extra_b = refs_a, refs_b
            else:
                extra_a, extra_b = refs_b, refs_a
            entry[3] += tuple(r for r in extra_a if r not in entry[3])
            entry[4] += tuple(r for r in extra_b if r not in entry[4])
    records = []
    for key in order:
        word_a, word_b, scores, refs_a, refs_b = merged[key]
        records.append(SimilarityRecord(
            word_a, word_b, sum(scores) / len(scores), key[0],
            refs_a=refs_a, refs_b=refs_b))
    return records


def read_external_scores(path) -> dict[str, float]:
    """Read a ``<utt_id>\\t<log_score>`` table into a dict."""
    scores: dict[str, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise FormatError(
                    f"{path}: line {lineno}: expected 2 columns, got {len(cols)}")
            if lineno == 1 and cols == ["utt_id", "log_score"]:
                continue
            utt_id, raw = cols
            try:
                value = float(raw)
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: non-numeric score") from None
            if not math.isfinite(value):
                raise ValidationError(
                    f"{path}: line {lineno}: non-finite score for {utt_id!r}")
            if utt_id in scores:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate utterance {utt_id!r}")
            scores[utt_id] = value
    return scores


def write_external_scores(scores: dict[str, float], path) -> None:
    with open(path, "w") as fh:
        fh.write("utt_id\tlog_score\n")
        for utt_id in sorted(scores):
            fh.write(f"{utt_id}\t{_fmt(scores[utt_id])}\n")


# ---------------------------------------------------------------------------
# metric reports
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_report(report: MetricReport, path, fmt: str | None = None) -> None:
    """Write a MetricReport; keys sorted, floats with 6 decimals.

    ``fmt`` is 'tsv' or 'json'; unset, it is inferred from the extension
    (.json means JSON, anything else TSV).
    """
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "tsv"
    if fmt == "json":
        doc = {
            "metric": report.metric,
            "aggregate": float(_fmt(report.aggregate)),
            "subsets": {k: float(_fmt(v)) for k, v in sorted(report.subsets.items())},
            "counts": {k: int(v) for k, v in sorted(report.counts.items())},
            "config": {k: str(v) for k, v in sorted(report.config.items())},
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    elif fmt == "tsv":
        lines = [f"metric\t{report.metric}", f"aggregate\t{_fmt(report.aggregate)}"]
        for key in sorted(report.config):
            lines.append(f"config\t{key}\t{report.config[key]}")
        for key in sorted(report.subsets):
            count = report.counts.get(key, "")
            lines.append(f"subset\t{key}\t{_fmt(report.subsets[key])}\t{count}")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path, fmt: str | None = None) -> MetricReport:
    """Parse a report written by :func:`write_report`."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "tsv"
    if fmt == "json":
        doc = json.loads(path.read_text())
        return MetricReport(
            metric=doc["metric"],
            aggregate=float(doc["aggregate"]),
            subsets={k: float(v) for k, v in doc.get("subsets", {}).items()},
            counts={k: int(v) for k, v in doc.get("counts", {}).items()},
            config={k: str(v) for k, v in doc.get("config", {}).items()},
        )
    metric, aggregate = None, None
    subsets: dict = {}
    counts: dict = {}
    config: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line:
            continue
        cols = line.split("\t")
        kind = cols[0]
        if kind == "metric" and len(cols) == 2:
            metric = cols[1]
        elif kind == "aggregate" and len(cols) == 2:
            aggregate = float(cols[1])
        elif kind == "config" and len(cols) == 3:
            config[cols[1]] = cols[2]
        elif kind == "subset" and len(cols) == 4:
            subsets[cols[1]] = float(cols[2])
            if cols[3]:
                counts[cols[1]] = int(cols[3])
        else:
            raise FormatError(f"{path}: line {lineno}: unrecognized report row")
    if metric is None or aggregate is None:
        raise FormatError(f"{path}: report missing metric or aggregate row")
    return MetricReport(metric, aggregate, subsets, counts, config)
