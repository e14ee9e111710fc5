"""ABX cell scores and full evaluation against brute-force oracles."""

import numpy as np
import pytest

from conftest import abx_oracle
from zrc_eval import abx, io_formats
from zrc_eval.distance import dtw_distance
from zrc_eval.errors import ValidationError
from zrc_eval.types import FeatureSequence, TriphoneToken, UnitSequence


def absdiff(a, b):
    """Scalar 1-D single-frame distance used by the hand oracles."""
    return abs(float(np.ravel(a)[0]) - float(np.ravel(b)[0]))


class TestOneHot:
    def test_single_unit(self):
        fs = abx.one_hot_encode(UnitSequence("u", [2]), 4)
        assert fs.frames.tolist() == [[0.0, 0.0, 1.0, 0.0]]
        assert fs.frame_rate == 100.0

    def test_sequence(self):
        fs = abx.one_hot_encode(UnitSequence("u", [0, 0, 1]), 2)
        assert fs.frames.tolist() == [[1, 0], [1, 0], [0, 1]]

    def test_argmax_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            units = rng.integers(0, 7, size=rng.integers(1, 15)).tolist()
            fs = abx.one_hot_encode(UnitSequence("u", units), 7)
            assert np.argmax(fs.frames, axis=1).tolist() == units

    def test_unit_out_of_range(self):
        with pytest.raises(ValidationError):
            abx.one_hot_encode(UnitSequence("u", [4]), 4)


class TestAsymmetricCell:
    def test_all_ties_give_half(self):
        token = np.eye(3)[[0, 0]]
        a = [token.copy() for _ in range(3)]
        b = [token.copy() for _ in range(2)]
        assert abx.asymmetric_abx(a, b, "angular") == 0.5

    def test_separated_scalars_give_zero(self):
        # d(a, x) = 0.1 always beats d(b, x) >= 0.9
        a = [np.array([[0.0]]), np.array([[0.1]])]
        b = [np.array([[1.0]])]
        assert abx.asymmetric_abx(a, b, absdiff) == 0.0
        assert abx_oracle(a, b, absdiff) == 0.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = [rng.standard_normal((rng.integers(1, 5), 3))
                 for _ in range(rng.integers(2, 6))]
            b = [rng.standard_normal((rng.integers(1, 5), 3))
                 for _ in range(rng.integers(1, 6))]
            dist = lambda x, y: dtw_distance(x, y, "angular")
            assert abx.asymmetric_abx(a, b, "angular") == pytest.approx(
                abx_oracle(a, b, dist), abs=1e-12)

    def test_across_pool_matches_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = [rng.standard_normal((3, 2)) for _ in range(rng.integers(1, 4))]
            b = [rng.standard_normal((3, 2)) for _ in range(rng.integers(1, 4))]
            x = [rng.standard_normal((3, 2)) for _ in range(rng.integers(1, 4))]
            dist = lambda u, v: dtw_distance(u, v, "angular")
            assert abx.asymmetric_abx(a, b, "angular", x=x) == pytest.approx(
                abx_oracle(a, b, dist, x_tokens=x), abs=1e-12)

    def test_needs_two_a_tokens(self):
        with pytest.raises(ValidationError, match="2 tokens"):
            abx.asymmetric_abx([np.ones((1, 2))], [np.ones((1, 2))], "angular")

    def test_score_in_unit_interval_and_half_for_constant_distance(self):
        rng = np.random.default_rng(3)
        a = [rng.standard_normal((2, 2)) for _ in range(3)]
        b = [rng.standard_normal((2, 2)) for _ in range(3)]
        assert abx.asymmetric_abx(a, b, lambda x, y: 7.0) == 0.5
        score = abx.asymmetric_abx(a, b, "angular")
        assert 0.0 <= score <= 1.0

    def test_monotone_rescaling_invariance(self):
        rng = np.random.default_rng(4)
        a = [rng.standard_normal((3, 2)) for _ in range(4)]
        b = [rng.standard_normal((3, 2)) for _ in range(3)]
        base_dist = lambda x, y: dtw_distance(x, y, "angular")
        base = abx.asymmetric_abx(a, b, base_dist)
        for _ in range(10):
            alpha = float(rng.uniform(0.1, 3.0))
            beta = float(rng.uniform(0.0, 2.0))
            warped = lambda x, y: np.expm1(alpha * base_dist(x, y)) + beta
            assert abx.asymmetric_abx(a, b, warped) == base

    def test_token_permutation_invariance(self):
        rng = np.random.default_rng(5)
        a = [rng.standard_normal((3, 2)) for _ in range(4)]
        b = [rng.standard_normal((3, 2)) for _ in range(3)]
        base = abx.asymmetric_abx(a, b, "angular")
        perm_a = [a[i] for i in rng.permutation(4)]
        perm_b = [b[i] for i in rng.permutation(3)]
        assert abx.asymmetric_abx(perm_a, perm_b, "angular") == pytest.approx(
            base, abs=1e-12)


class TestSymmetrizedCell:
    def test_trivial_means(self):
        zero = lambda x, y: absdiff(x, y)
        a = [np.array([[0.0]]), np.array([[0.1]])]
        b = [np.array([[1.0]]), np.array([[1.1]])]
        # both directions separate perfectly
        assert abx.symmetrized_cell(a, b, zero) == 0.0

    def test_mean_of_directions(self):
        rng = np.random.default_rng(6)
        a = [rng.standard_normal((2, 3)) for _ in range(3)]
        b = [rng.standard_normal((2, 3)) for _ in range(3)]
        dist = lambda x, y: dtw_distance(x, y, "angular")
        expected = 0.5 * (abx_oracle(a, b, dist) + abx_oracle(b, a, dist))
        assert abx.symmetrized_cell(a, b, "angular") == pytest.approx(
            expected, abs=1e-12)


# ---------------------------------------------------------------------------
# full evaluation
# ---------------------------------------------------------------------------

def write_archive(tmp_path, utterances):
    for utt_id, frames in utterances.items():
        io_formats.write_feature_archive(
            tmp_path, FeatureSequence(utt_id, 100.0, frames), "binary")
    return tmp_path


def one_hot_tokens(unit, n, count, rng):
    return [np.eye(4)[[unit] * int(rng.integers(2, 5))] for _ in range(count)]


def build_items(categories, tmp_path):
    """categories: list of (center, left, right, speaker, [frame matrices])."""
    utterances = {}
    tokens = []
    k = 0
    for center, left, right, speaker, mats in categories:
        for mat in mats:
            utt = f"f{k:03d}"
            utterances[utt] = mat
            tokens.append(TriphoneToken(utt, 0.0, mat.shape[0] / 100.0,
                                        center, left, right, speaker))
            k += 1
    write_archive(tmp_path, utterances)
    return tokens


class TestAbxEvaluate:
    def test_perfectly_separated_is_zero(self, tmp_path):
        rng = np.random.default_rng(7)
        cats = [("B", "A", "T", "s1", one_hot_tokens(0, 4, 3, rng)),
                ("P", "A", "T", "s1", one_hot_tokens(1, 4, 3, rng))]
        tokens = build_items(cats, tmp_path)
        result = abx.abx_evaluate(tokens, tmp_path, "within", "angular")
        assert result.error_rate == 0.0

    def test_all_identical_is_exactly_fifty(self, tmp_path):
        frames = np.eye(4)[[2, 2, 2]]
        cats = [("B", "A", "T", "s1", [frames.copy() for _ in range(3)]),
                ("P", "A", "T", "s1", [frames.copy() for _ in range(3)])]
        tokens = build_items(cats, tmp_path)
        result = abx.abx_evaluate(tokens, tmp_path, "within", "angular")
        assert result.error_rate == 50.0

    def test_kl_metric_on_posteriorgrams(self, tmp_path):
        # one-hot rows are valid probability frames, so KL applies directly
        rng = np.random.default_rng(13)
        cats = [("B", "A", "T", "s1", one_hot_tokens(0, 4, 3, rng)),
                ("P", "A", "T", "s1", one_hot_tokens(1, 4, 3, rng))]
        tokens = build_items(cats, tmp_path)
        result = abx.abx_evaluate(tokens, tmp_path, "within", "kl")
        assert result.error_rate == 0.0

    def test_across_mode_identical_is_fifty(self, tmp_path):
        frames = np.eye(4)[[1, 1]]
        cats = []
        for center in ("B", "P"):
            for speaker in ("s1", "s2"):
                cats.append((center, "A", "T", speaker,
                             [frames.copy() for _ in range(2)]))
        tokens = build_items(cats, tmp_path)
        result = abx.abx_evaluate(tokens, tmp_path, "across", "angular")
        assert result.error_rate == 50.0

    def _random_setup(self, tmp_path, rng, speakers=("s1", "s2")):
        cats = []
        for left, right in (("A", "T"), ("I", "K"), ("A", "K")):
            for center in ("B", "P", "D"):
                for speaker in speakers:
                    if rng.random() < 0.2:
                        continue  # leave some holes to exercise skipping
                    mats = [rng.standard_normal((int(rng.integers(2, 6)), 3))
                            for _ in range(int(rng.integers(2, 5)))]
                    cats.append((center, left, right, speaker, mats))
        return build_items(cats, tmp_path)

    @staticmethod
    def _flat_oracle(tokens, archive_dir, mode):
        """Independent re-aggregation from scratch."""
        archive = io_formats.FeatureArchive(archive_dir)
        cats = {}
        for t in tokens:
            fs = archive.load(t.file_id)
            lo = int(np.floor(t.onset * fs.frame_rate))
            hi = int(np.floor(t.offset * fs.frame_rate))
            cats.setdefault(
                ((t.left, t.right), t.center, t.speaker), []).append(
                    fs.frames[lo:hi])
        dist = lambda x, y: dtw_distance(x, y, "angular")
        contexts = sorted({c for c, _, _ in cats})
        centers = sorted({p for _, p, _ in cats})
        speakers = sorted({s for _, _, s in cats})
        pair_scores = {}
        for i, p1 in enumerate(centers):
            for p2 in centers[i + 1:]:
                context_scores = []
                for ctx in contexts:
                    cell_scores = []
                    if mode == "within":
                        for s in speakers:
                            a = cats.get((ctx, p1, s), [])
                            b = cats.get((ctx, p2, s), [])
                            if len(a) >= 2 and len(b) >= 2:
                                cell_scores.append(0.5 * (
                                    abx_oracle(a, b, dist)
                                    + abx_oracle(b, a, dist)))
                    else:
                        for s1 in speakers:
                            for s2 in speakers:
                                if s1 == s2:
                                    continue
                                a1 = cats.get((ctx, p1, s1), [])
                                b1 = cats.get((ctx, p2, s1), [])
                                x1 = cats.get((ctx, p1, s2), [])
                                x2 = cats.get((ctx, p2, s2), [])
                                if a1 and b1 and x1 and x2:
                                    cell_scores.append(0.5 * (
                                        abx_oracle(a1, b1, dist, x_tokens=x1)
                                        + abx_oracle(b1, a1, dist, x_tokens=x2)))
                    if cell_scores:
                        context_scores.append(sum(cell_scores) / len(cell_scores))
                if context_scores:
                    pair_scores[(p1, p2)] = sum(context_scores) / len(context_scores)
        return 100.0 * sum(pair_scores.values()) / len(pair_scores), pair_scores

    @pytest.mark.parametrize("mode", ["within", "across"])
    def test_matches_flat_aggregation_oracle(self, tmp_path, mode):
        rng = np.random.default_rng(8)
        tokens = self._random_setup(tmp_path, rng)
        result = abx.abx_evaluate(tokens, tmp_path, mode, "angular")
        expected, pair_scores = self._flat_oracle(tokens, tmp_path, mode)
        assert result.error_rate == pytest.approx(expected, abs=1e-12)
        for (p1, p2), score in pair_scores.items():
            assert result.by_phone_pair[f"{p1}-{p2}"] == pytest.approx(
                100.0 * score, abs=1e-12)

    def test_threads_do_not_change_result(self, tmp_path):
        rng = np.random.default_rng(9)
        tokens = self._random_setup(tmp_path, rng)
        r1 = abx.abx_evaluate(tokens, tmp_path, "within", "angular", threads=1)
        r4 = abx.abx_evaluate(tokens, tmp_path, "within", "angular", threads=4)
        assert r1.error_rate == r4.error_rate
        assert r1.by_phone_pair == r4.by_phone_pair

    def test_no_cells_is_error(self, tmp_path):
        rng = np.random.default_rng(10)
        # single category: no contrasting center phone anywhere
        cats = [("B", "A", "T", "s1",
                 [rng.standard_normal((3, 2)) for _ in range(3)])]
        tokens = build_items(cats, tmp_path)
        with pytest.raises(ValidationError, match="no valid ABX cells"):
            abx.abx_evaluate(tokens, tmp_path, "within", "angular")

    def test_missing_utterance_names_token(self, tmp_path):
        rng = np.random.default_rng(11)
        tokens = self._random_setup(tmp_path, rng)
        tokens.append(TriphoneToken("ghost", 0.0, 0.1, "B", "A", "T", "s1"))
        with pytest.raises(ValidationError, match="ghost"):
            abx.abx_evaluate(tokens, tmp_path, "within", "angular")

    def test_empty_extraction_drops_token(self, tmp_path, caplog):
        rng = np.random.default_rng(12)
        cats = [("B", "A", "T", "s1", one_hot_tokens(0, 4, 3, rng)),
                ("P", "A", "T", "s1", one_hot_tokens(1, 4, 3, rng))]
        tokens = build_items(cats, tmp_path)
        # sub-frame token rounds to an empty slice and is dropped
        tokens.append(TriphoneToken("f000", 0.001, 0.002, "B", "A", "T", "s1"))
        with caplog.at_level("WARNING", logger="zrc_eval.abx"):
            result = abx.abx_evaluate(tokens, tmp_path, "within", "angular")
        assert result.error_rate == 0.0
        assert any("dropping token" in r.message for r in caplog.records)

    def test_frame_extraction_uses_floor(self, tmp_path):
        frames = np.arange(10, dtype=float).reshape(10, 1) + 1.0
        io_formats.write_feature_archive(
            tmp_path, FeatureSequence("u", 100.0, frames), "text")
        archive = io_formats.FeatureArchive(tmp_path)
        token = TriphoneToken("u", 0.019, 0.051, "B", "A", "T", "s1")
        got = abx.extract_token_frames(archive, token)
        # floor(0.019*100)=1, floor(0.051*100)=5, exclusive
        assert got.tolist() == [[2.0], [3.0], [4.0], [5.0]]
