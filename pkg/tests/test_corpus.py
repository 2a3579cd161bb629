import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordstyle import inventory
from wordstyle.corpus import (
    CH_CORR,
    CH_PERIOD,
    CorpusError,
    GeneratorConfig,
    PhonemeSequence,
    SAMPLE_RATE,
    Utterance,
    generate_synthetic_corpus,
    load_corpus,
    load_style_factors,
    parse_phoneme_text,
    phoneme_frame_spans,
    pitch_factor_to_period,
    read_f32,
    scaled_duration,
    word_frame_spans,
    write_f32,
    znorm_duration_entries,
    znorm_durations,
)


def test_inventory_is_40_symbols_in_two_classes():
    assert len(inventory.VOWELS) + len(inventory.CONSONANTS) == 40
    assert set(inventory.VOWELS).isdisjoint(inventory.CONSONANTS)
    assert inventory.is_vowel(inventory.VOWELS[0])
    assert not inventory.is_vowel(inventory.CONSONANTS[0])
    with pytest.raises(ValueError):
        inventory.phoneme_to_index("zz")


class TestPhonemeText:
    def test_words_split_on_space_phonemes_on_dot(self):
        text = parse_phoneme_text("p.aa t.eh.s")
        assert text.phonemes == ("p", "aa", "t", "eh", "s")
        assert text.word_ids == (0, 0, 1, 1, 1)
        assert text.n_words == 2

    def test_unknown_symbol_rejected(self):
        with pytest.raises(ValueError, match="unknown phoneme"):
            parse_phoneme_text("p.xx")

    def test_word_ids_must_start_at_zero(self):
        with pytest.raises(CorpusError):
            PhonemeSequence(phonemes=("p",), word_ids=(1,))

    def test_word_ids_must_not_skip(self):
        with pytest.raises(CorpusError):
            PhonemeSequence(phonemes=("p", "t"), word_ids=(0, 2))

    def test_word_ids_must_not_decrease(self):
        with pytest.raises(CorpusError):
            PhonemeSequence(phonemes=("p", "t", "s"), word_ids=(0, 1, 0))

    def test_empty_rejected(self):
        with pytest.raises(CorpusError):
            PhonemeSequence(phonemes=(), word_ids=())


class TestFrameSpans:
    def test_phoneme_spans_partition_frames(self):
        spans = phoneme_frame_spans([2, 3, 1])
        assert spans == [(0, 2), (2, 5), (5, 6)]

    def test_word_spans_merge_phoneme_spans(self):
        spans = word_frame_spans([2, 3, 1], [0, 0, 1])
        assert spans == [(0, 5), (5, 6)]

    @given(
        durations=st.lists(st.integers(min_value=1, max_value=9), min_size=1, max_size=12)
    )
    def test_phoneme_spans_cover_every_frame_once(self, durations):
        spans = phoneme_frame_spans(durations)
        assert spans[0][0] == 0
        assert spans[-1][1] == sum(durations)
        for (a, b), (c, _) in zip(spans, spans[1:]):
            assert b == c


class TestFeatureFiles:
    def test_f32_round_trip_is_bit_exact(self, tmp_path):
        x = np.random.default_rng(0).normal(size=(17, 22)).astype(np.float32)
        path = tmp_path / "x.f32"
        write_f32(path, x)
        y = read_f32(path, 17)
        assert y.dtype == np.float32
        assert np.array_equal(x, y)

    def test_f32_wrong_length_rejected(self, tmp_path):
        x = np.zeros((5, 22), dtype=np.float32)
        path = tmp_path / "x.f32"
        write_f32(path, x)
        with pytest.raises(CorpusError):
            read_f32(path, 6)


class TestGenerator:
    def test_same_seed_gives_byte_identical_corpora(self, tmp_path):
        generate_synthetic_corpus(tmp_path / "a", 5, seed=7)
        generate_synthetic_corpus(tmp_path / "b", 5, seed=7)
        for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_rejects_nonpositive_count(self, tmp_path):
        with pytest.raises(CorpusError):
            generate_synthetic_corpus(tmp_path / "c", 0, seed=1)

    def test_utterance_invariants(self, toy_corpus):
        _, utterances = toy_corpus
        for utt in utterances:
            assert all(d >= 1 for d in utt.durations)
            assert sum(utt.durations) == utt.features.frames.shape[0]
            assert len(utt.durations) == len(utt.text.phonemes)

    def test_correlation_channel_encodes_phone_class(self, toy_corpus):
        _, utterances = toy_corpus
        for utt in utterances[:4]:
            for (a, b), sym in zip(
                phoneme_frame_spans(utt.durations), utt.text.phonemes
            ):
                expected = 0.8 if inventory.is_vowel(sym) else 0.1
                assert np.allclose(utt.features.frames[a:b, CH_CORR], expected)

    def test_period_channel_follows_pitch_factor(self, toy_corpus):
        root, utterances = toy_corpus
        factors = load_style_factors(root)
        for utt in utterances[:4]:
            pitch = factors[utt.id].pitch_factors
            for (a, b), wid in zip(
                word_frame_spans(utt.durations, utt.text.word_ids),
                range(utt.text.n_words),
            ):
                expected = np.float32(pitch_factor_to_period(pitch[wid]))
                assert np.all(utt.features.frames[a:b, CH_PERIOD] == expected)

    def test_cepstra_are_template_plus_small_noise(self, toy_corpus):
        _, utterances = toy_corpus
        residuals = []
        for utt in utterances:
            for (a, b), sym in zip(
                phoneme_frame_spans(utt.durations), utt.text.phonemes
            ):
                template = inventory.TEMPLATES[inventory.phoneme_to_index(sym)]
                residuals.append(utt.features.frames[a:b, :20] - template)
        r = np.concatenate(residuals)
        assert np.abs(r).max() < 0.05 * 6  # six sigma
        assert abs(r.std() - 0.05) < 0.005

    def test_durations_follow_rate_factor(self, toy_corpus):
        root, utterances = toy_corpus
        factors = load_style_factors(root)
        for utt in utterances[:4]:
            rate = factors[utt.id].rate_factors
            for sym, wid, dur in zip(
                utt.text.phonemes, utt.text.word_ids, utt.durations
            ):
                base = inventory.BASE_DURATIONS[inventory.phoneme_to_index(sym)]
                assert dur == scaled_duration(base, rate[wid])

    def test_style_factors_are_per_word_in_unit_interval(self, toy_corpus):
        root, utterances = toy_corpus
        factors = load_style_factors(root)
        for utt in utterances:
            sf = factors[utt.id]
            assert len(sf.pitch_factors) == utt.text.n_words
            assert len(sf.rate_factors) == utt.text.n_words
            assert all(-1 <= v <= 1 for v in sf.pitch_factors + sf.rate_factors)


def test_pitch_factor_zero_is_period_160_f0_150():
    assert pitch_factor_to_period(0.0) == 160.0
    assert SAMPLE_RATE / pitch_factor_to_period(0.0) == 150.0


def test_scaled_duration_identity_at_rate_zero():
    assert scaled_duration(8, 0.0) == 8


def test_scaled_duration_clamps_at_one_frame():
    assert scaled_duration(1, 1.0) >= 1


class TestLoadErrors:
    def _write_minimal(self, tmp_path):
        utterances = generate_synthetic_corpus(tmp_path, 2, seed=3)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        return utterances, manifest

    def test_round_trip(self, tmp_path):
        utterances, _ = self._write_minimal(tmp_path)
        loaded = load_corpus(tmp_path)
        assert [u.id for u in loaded] == sorted(u.id for u in utterances)
        for a, b in zip(utterances, loaded):
            assert np.array_equal(a.features.frames, b.features.frames)
            assert a.durations == b.durations
            assert a.text == b.text

    def test_frame_count_mismatch_names_utterance(self, tmp_path):
        _, manifest = self._write_minimal(tmp_path)
        manifest[0]["n_frames"] += 1
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CorpusError, match=manifest[0]["id"]):
            load_corpus(tmp_path)

    def test_duration_sum_mismatch_names_utterance(self, tmp_path):
        _, manifest = self._write_minimal(tmp_path)
        manifest[1]["durations"][0] += 1
        manifest[1]["n_frames"] += 1
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CorpusError, match=manifest[1]["id"]):
            load_corpus(tmp_path)

    def test_missing_feature_file_names_utterance(self, tmp_path):
        _, manifest = self._write_minimal(tmp_path)
        (tmp_path / manifest[0]["feature_file"]).unlink()
        with pytest.raises(CorpusError, match=manifest[0]["id"]):
            load_corpus(tmp_path)

    def test_utterance_validates_duration_sum(self, toy_corpus):
        _, utterances = toy_corpus
        utt = utterances[0]
        with pytest.raises(CorpusError):
            Utterance(
                id=utt.id,
                text=utt.text,
                durations=tuple([utt.durations[0] + 1, *utt.durations[1:]]),
                features=utt.features,
            )


class TestDurationZNorm:
    def test_two_durations_normalize_to_plus_minus_one(self):
        znorm = znorm_duration_entries([("u0", ["aa", "aa"], [2, 4])])
        assert [e.zscore for e in znorm.entries] == [-1.0, 1.0]

    def test_zero_variance_class_floors_to_zero(self):
        znorm = znorm_duration_entries([("u0", ["aa", "aa", "aa"], [4, 4, 4])])
        assert [e.zscore for e in znorm.entries] == [0.0, 0.0, 0.0]

    def test_single_sample_normalizes_to_zero(self):
        znorm = znorm_duration_entries([("u0", ["aa"], [5])])
        assert [e.zscore for e in znorm.entries] == [0.0]

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError):
            znorm_durations([])

    def test_external_stats_are_honored(self):
        znorm = znorm_duration_entries(
            [("u0", ["aa"], [5])], stats={"aa": (3.0, 2.0)}
        )
        assert znorm.entries[0].zscore == 1.0

    def test_missing_class_in_external_stats_rejected(self):
        with pytest.raises(CorpusError, match="aa"):
            znorm_duration_entries([("u0", ["aa"], [5])], stats={"b": (3.0, 2.0)})

    def test_corpus_normalizes_to_zero_mean_unit_std(self, toy_corpus):
        _, utterances = toy_corpus
        znorm = znorm_durations(list(utterances))
        by_class = {}
        for entry in znorm.entries:
            by_class.setdefault(entry.phoneme, []).append(entry.zscore)
        for sym, zs in by_class.items():
            zs = np.asarray(zs)
            assert abs(zs.mean()) < 1e-6
            if znorm.stats[sym][1] > 1e-6:
                assert abs(zs.std() - 1.0) < 1e-6


@settings(max_examples=25, deadline=None)
@given(
    word_sizes=st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=5)
)
def test_generated_texts_round_trip_through_the_grammar(word_sizes):
    rng = np.random.default_rng(sum(word_sizes))
    words = [
        [inventory.VOWELS[int(rng.integers(len(inventory.VOWELS)))] for _ in range(n)]
        for n in word_sizes
    ]
    line = " ".join(".".join(w) for w in words)
    text = parse_phoneme_text(line)
    assert text.n_words == len(words)
    assert list(text.phonemes) == [p for w in words for p in w]
