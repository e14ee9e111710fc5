"""Shared test fixtures: independent oracles and a synthetic mini-benchmark.

The oracles here deliberately re-derive everything from first principles
(exhaustive enumeration, direct summation) so the engine under test never
checks itself.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from zrc_eval import io_formats, sampler
from zrc_eval.types import FeatureSequence, UnitSequence

# ---------------------------------------------------------------------------
# DTW oracle: exhaustive monotone-path enumeration
# ---------------------------------------------------------------------------

_STEP_PRIORITY = {(1, 1): 0, (1, 0): 1, (0, 1): 2}


@lru_cache(maxsize=None)
def monotone_paths(t: int, s: int) -> tuple:
    """All monotone paths from (0, 0) to (t-1, s-1) with steps
    (1,0), (0,1), (1,1)."""
    if t == 1 and s == 1:
        return (((0, 0),),)
    paths = []
    if t > 1 and s > 1:
        paths += [p + ((t - 1, s - 1),) for p in monotone_paths(t - 1, s - 1)]
    if t > 1:
        paths += [p + ((t - 1, s - 1),) for p in monotone_paths(t - 1, s)]
    if s > 1:
        paths += [p + ((t - 1, s - 1),) for p in monotone_paths(t, s - 1)]
    return tuple(paths)


def _reverse_priorities(path) -> tuple:
    prios = []
    for k in range(len(path) - 1, 0, -1):
        step = (path[k][0] - path[k - 1][0], path[k][1] - path[k - 1][1])
        prios.append(_STEP_PRIORITY[step])
    return tuple(prios)


def dtw_oracle(cost) -> float:
    """Path-averaged DTW distance by exhaustive path enumeration.

    Among minimum-sum paths, picks the one the diagonal-first backtrack
    would (lexicographically smallest reversed step priorities) and
    returns its mean framewise cost.
    """
    cost = np.asarray(cost, dtype=np.float64)
    t, s = cost.shape
    best_total = None
    for path in monotone_paths(t, s):
        total = 0.0
        for i, j in path:
            total += cost[i, j]
        if best_total is None or total < best_total:
            best_total = total
            best = [(path, _reverse_priorities(path))]
        elif total == best_total:
            best.append((path, _reverse_priorities(path)))
    chosen = min(best, key=lambda item: item[1])[0]
    return best_total / len(chosen)


def dtw_oracle_fast(cost) -> float:
    """Same contract as :func:`dtw_oracle`, vectorized for acceptance runs.

    Path sums use numpy's pairwise accumulation rather than the DP's
    left-to-right order, so tie DETECTION can differ by rounding; use it
    only on continuous random inputs where exact ties do not occur.
    """
    cost = np.asarray(cost, dtype=np.float64)
    ii, jj, mask, lengths, prios = _path_arrays(*cost.shape)
    sums = (cost[ii, jj] * mask).sum(axis=1)
    best_total = sums.min()
    candidates = np.flatnonzero(sums == best_total)
    chosen = min(candidates, key=lambda k: prios[k])
    return float(best_total) / int(lengths[chosen])


@lru_cache(maxsize=None)
def _path_arrays(t: int, s: int):
    paths = monotone_paths(t, s)
    length = max(len(p) for p in paths)
    ii = np.zeros((len(paths), length), dtype=np.intp)
    jj = np.zeros((len(paths), length), dtype=np.intp)
    mask = np.zeros((len(paths), length), dtype=np.float64)
    for k, path in enumerate(paths):
        for step, (i, j) in enumerate(path):
            ii[k, step], jj[k, step], mask[k, step] = i, j, 1.0
    lengths = np.array([len(p) for p in paths], dtype=np.intp)
    prios = tuple(_reverse_priorities(p) for p in paths)
    return ii, jj, mask, lengths, prios


# ---------------------------------------------------------------------------
# ABX oracle: direct triple loop
# ---------------------------------------------------------------------------

def abx_oracle(a_tokens, b_tokens, dist, x_tokens=None) -> float:
    """Direct evaluation of the asymmetric cell score."""
    xs = a_tokens if x_tokens is None else x_tokens
    total, count = 0.0, 0
    for xi, x in enumerate(xs):
        d_bx = [dist(b, x) for b in b_tokens]
        for ai, a in enumerate(a_tokens):
            if x_tokens is None and ai == xi:
                continue
            d_ax = dist(a, x)
            for db in d_bx:
                if db < d_ax:
                    total += 1.0
                elif db == d_ax:
                    total += 0.5
                count += 1
    return total / count


# ---------------------------------------------------------------------------
# rank-correlation oracle: average ranks + Pearson
# ---------------------------------------------------------------------------

def average_ranks(values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_oracle(a, b) -> float:
    """Pearson correlation of average ranks, scaled by 100."""
    ra, rb = average_ranks(a), average_ranks(b)
    return float(np.corrcoef(ra, rb)[0, 1]) * 100.0


# ---------------------------------------------------------------------------
# sampler oracles: exhaustive enumeration
# ---------------------------------------------------------------------------

def word_assignment_minimum(cs) -> float:
    """Minimum balance objective over every complete assignment."""
    import itertools

    outcomes = sampler._outcomes(cs)
    n = len(cs.anchors)
    best = None
    for combo in itertools.product(*[range(len(rows)) for rows in outcomes]):
        sums = [0] * cs.n_scores
        for idx, ci in enumerate(combo):
            sums = [s + o for s, o in zip(sums, outcomes[idx][ci])]
        num = sum(abs(s - n) for s in sums)
        if best is None or num < best:
            best = num
    return best / (2.0 * n)


def sentence_subset_minimum(pool, k_target: int) -> float:
    """Minimum balance objective over every k-subset of the pool."""
    import itertools

    outcomes = sampler._outcomes(pool)
    best = None
    for subset in itertools.combinations(range(len(pool.anchors)), k_target):
        sums = [0] * pool.n_scores
        for idx in subset:
            sums = [s + o for s, o in zip(sums, outcomes[idx][0])]
        num = sum(abs(s - k_target) for s in sums)
        if best is None or num < best:
            best = num
    return best / (2.0 * k_target)


# ---------------------------------------------------------------------------
# synthetic mini-benchmark
# ---------------------------------------------------------------------------

def build_mini_benchmark(root: Path, seed: int = 20210) -> Path:
    """Write a small, fully synthetic benchmark bundle under ``root``.

    40 triphone tokens with features, 200 unit sequences, 50 lexical
    pairs, 50 syntactic pairs with an external score table, 20 similarity
    records over two hidden-state layers, and a 60-anchor candidate set.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)

    # --- triphone tokens + features ---------------------------------------
    feat_dir = root / "features"
    centers = ("B", "P")
    contexts = (("AH", "T"), ("IY", "K"))
    speakers = ("spk1", "spk2")
    phone_means = {"B": np.array([3.0, 0.0, 0.0, 0.0]),
                   "P": np.array([0.0, 3.0, 0.0, 0.0])}
    spk_shift = {"spk1": np.zeros(4), "spk2": np.array([0.0, 0.0, 0.5, 0.0])}
    tokens = []
    n_tok = 0
    for left, right in contexts:
        for center in centers:
            for speaker in speakers:
                for _ in range(5):
                    file_id = f"tok{n_tok:03d}"
                    n_frames = int(rng.integers(3, 7))
                    frames = (phone_means[center] + spk_shift[speaker]
                              + 0.05 * rng.standard_normal((n_frames, 4)))
                    fs = FeatureSequence(file_id, 100.0, frames)
                    fmt = "text" if n_tok % 2 else "binary"
                    io_formats.write_feature_archive(feat_dir, fs, fmt)
                    tokens.append(
                        f"{file_id} 0.0 {n_frames / 100.0} "
                        f"{center} {left} {right} {speaker}")
                    n_tok += 1
    item_path = root / "items.item"
    item_path.write_text(io_formats.ITEM_HEADER + "\n" + "\n".join(tokens) + "\n")

    # --- unit sequences -----------------------------------------------------
    sequences = []
    for i in range(200):
        length = int(rng.integers(4, 13))
        units = rng.integers(0, 12, size=length)
        sequences.append(UnitSequence(f"u{i:03d}", units.tolist()))
    io_formats.write_unit_sequences(sequences, root / "units.txt")

    # --- lexical pairs (scored via an n-gram model over units.txt) ---------
    with open(root / "pairs.tsv", "w") as fh:
        fh.write("pair_id\taccepted_id\trejected_id\tparadigm\tvoice\n")
        for i in range(50):
            fh.write(f"p{i:03d}\tu{i:03d}\tu{i + 50:03d}"
                     f"\tbin{i % 3}\tv{i % 4}\n")

    # --- syntactic pairs with an external score table ----------------------
    with open(root / "spairs.tsv", "w") as fh:
        fh.write("pair_id\taccepted_id\trejected_id\tparadigm\n")
        for i in range(50):
            fh.write(f"s{i:03d}\tg{i:03d}\tb{i:03d}\tpara{i % 5}\n")
    scores = {}
    for i in range(50):
        scores[f"g{i:03d}"] = float(-rng.uniform(5.0, 40.0))
        scores[f"b{i:03d}"] = float(-rng.uniform(5.0, 40.0))
    io_formats.write_external_scores(scores, root / "sscores.tsv")

    # --- similarity gold + two hidden-state layers --------------------------
    words = [f"w{i:02d}" for i in range(15)]
    hidden_dirs = (root / "hidden0", root / "hidden1")
    word_vec = {w: rng.standard_normal(8) for w in words}
    for word in words:
        for voice in ("A", "B"):
            utt = f"{word}_{voice}"
            for li, hdir in enumerate(hidden_dirs):
                frames = (word_vec[word] * (li + 1)
                          + 0.1 * rng.standard_normal((int(rng.integers(3, 8)), 8)))
                io_formats.write_feature_archive(hdir, FeatureSequence(utt, 100.0, frames),
                                                 "binary")
    with open(root / "gold.tsv", "w") as fh:
        fh.write("word_a\tword_b\tscore\tdataset\trefs_a\trefs_b\n")
        for i in range(20):
            wa, wb = words[i % 15], words[(i * 7 + 3) % 15]
            if wa == wb:
                wb = words[(i * 7 + 4) % 15]
            score = float(np.round(rng.uniform(0, 10), 2))
            refs_a = f"A:{wa}_A,B:{wa}_B"
            refs_b = f"A:{wb}_A,B:{wb}_B"
            fh.write(f"{wa}\t{wb}\t{score}\tds{i % 2}\t{refs_a}\t{refs_b}\n")

    # --- candidate set -------------------------------------------------------
    anchors = []
    for i in range(60):
        stratum = f"f{i % 2}:l{i % 3}"
        cands = tuple(
            (f"c{i:03d}_{k}", (float(rng.normal()), float(rng.normal())))
            for k in range(3))
        anchors.append(sampler.AnchorEntry(
            f"a{i:03d}", stratum,
            (float(rng.normal()), float(rng.normal())), cands))
    sampler.write_candidate_set(sampler.CandidateSet(anchors),
                                root / "candidates.tsv")
    return root


@pytest.fixture(scope="session")
def mini_benchmark(tmp_path_factory) -> Path:
    return build_mini_benchmark(tmp_path_factory.mktemp("mini"))


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Expose each phase's outcome on the item (acceptance banner lines)."""
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)
