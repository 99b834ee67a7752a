"""Back-off n-gram models: estimation, scoring, ARPA round trip, pruning.

The Witten-Bell checks compare against an independent hand oracle written
directly from the interpolation formula over the mini-corpus counts.
"""

import math
import random

import pytest

from wfstdec.ngram import (
    BOS,
    EOS,
    NGramError,
    NGramModel,
    OOVError,
    conditional_mass,
    estimate_witten_bell,
    parse_arpa,
    prune_to_small_lm,
    score_sentence,
    write_arpa,
)

from conftest import MINI_CORPUS


# -- independent oracle: interpolated Witten-Bell on the mini corpus -------

def _mini_counts():
    uni: dict[str, int] = {}
    bi: dict[tuple[str, str], int] = {}
    for sent in MINI_CORPUS:
        toks = [BOS] + sent + [EOS]
        for w in toks[1:]:
            uni[w] = uni.get(w, 0) + 1
        for a, b in zip(toks, toks[1:]):
            bi[(a, b)] = bi.get((a, b), 0) + 1
    return uni, bi


def _oracle_p1(word: str) -> float:
    uni, _ = _mini_counts()
    n1 = sum(uni.values())
    t1 = len(uni)
    v = len(uni)
    return (uni.get(word, 0) + t1 / v) / (n1 + t1)


def _oracle_p2(prev: str, word: str) -> float:
    """P(word | prev): interpolated if the bigram is seen, else bow * P1."""
    uni, bi = _mini_counts()
    seen = {b: c for (a, b), c in bi.items() if a == prev}
    total = sum(seen.values())
    types = len(seen)
    if word in seen:
        return (seen[word] + types * _oracle_p1(word)) / (total + types)
    kept = sum((seen[w] + types * _oracle_p1(w)) / (total + types) for w in seen)
    kept_low = sum(_oracle_p1(w) for w in seen)
    bow = (1.0 - kept) / (1.0 - kept_low)
    return bow * _oracle_p1(word)


class TestWittenBell:
    def test_mini_corpus_vocabulary(self, mini_model):
        assert mini_model.order == 2
        assert mini_model.vocabulary == {
            "vix", "ci", "tin", "cUx", "ti", "kAn", BOS, EOS}

    def test_smoothed_bigram_below_count_ratio(self, mini_model):
        # c(vix ci)/c(vix) = 2/4; smoothing must pull the estimate strictly
        # below that ratio while keeping it positive.
        p = 10.0 ** mini_model.score_word(("vix",), "ci")
        assert 0.0 < p < 0.5

    def test_bigram_matches_hand_oracle(self, mini_model):
        # (c + T*P1(ci)) / (c(vix) + T) with c=2, T=2, c(vix)=4, P1(ci)=3/21.
        assert _oracle_p2("vix", "ci") == pytest.approx(8.0 / 21.0, abs=1e-12)
        for prev in ["vix", "ci", "tin", "cUx", "ti", "kAn", BOS]:
            for word in ["vix", "ci", "tin", "cUx", "ti", "kAn", EOS]:
                got = 10.0 ** mini_model.score_word((prev,), word)
                assert got == pytest.approx(_oracle_p2(prev, word), abs=1e-9), \
                    f"P({word}|{prev})"

    def test_unigram_matches_hand_oracle(self, mini_model):
        for word in ["vix", "ci", "tin", "cUx", "ti", "kAn", EOS]:
            got = 10.0 ** mini_model.score_word((), word)
            assert got == pytest.approx(_oracle_p1(word), abs=1e-12)

    def test_sentence_score_matches_hand_oracle(self, mini_model):
        sent = ["vix", "tin", "cUx"]
        expect = (math.log10(_oracle_p2(BOS, "vix"))
                  + math.log10(_oracle_p2("vix", "tin"))
                  + math.log10(_oracle_p2("tin", "cUx"))
                  + math.log10(_oracle_p2("cUx", EOS)))
        got = score_sentence(mini_model, sent)
        assert math.isfinite(got)
        assert got == pytest.approx(expect, abs=1e-9)

    def test_conditional_mass_sums_to_one(self, mini_model):
        for ctx in sorted(mini_model.contexts()):
            assert conditional_mass(mini_model, ctx) == pytest.approx(1.0, abs=1e-9)

    def test_higher_order_mass_sums_to_one(self, mini_corpus):
        model = estimate_witten_bell(mini_corpus, 3)
        for ctx in sorted(model.contexts()):
            assert conditional_mass(model, ctx) == pytest.approx(1.0, abs=1e-9)

    def test_empty_corpus_rejected(self):
        with pytest.raises(NGramError, match="empty corpus"):
            estimate_witten_bell([], 2)

    def test_bad_order_rejected(self):
        with pytest.raises(NGramError, match="order"):
            estimate_witten_bell([["a"]], 0)


class TestScoring:
    def test_interior_score_with_listed_bigram(self, ab_model):
        # P(a) * P(b|a): -0.5 + -0.3.
        total = ab_model.score_word((), "a") + ab_model.score_word(("a",), "b")
        assert total == pytest.approx(-0.8, abs=1e-12)

    def test_interior_score_through_backoff(self, ab_model):
        # P(b) * bow(b) * P(a): -0.7 + (-0.1 + -0.5).
        total = ab_model.score_word((), "b") + ab_model.score_word(("b",), "a")
        assert total == pytest.approx(-1.3, abs=1e-12)

    def test_context_truncated_to_model_order(self, ab_model):
        assert ab_model.score_word(("b", "a"), "b") == pytest.approx(-0.3)

    def test_oov_raises(self, ab_model):
        with pytest.raises(OOVError):
            ab_model.score_word((), "zzz")


class TestArpa:
    TRIVIAL = """\\data\\
ngram 1=2

\\1-grams:
-0.5\ta
-0.7\tb

\\end\\
"""

    def test_parse_trivial(self):
        model = parse_arpa(self.TRIVIAL)
        assert model.order == 1
        assert model.num_ngrams(1) == 2
        assert model.entry(("a",)).logprob == -0.5
        assert model.entry(("b",)).logprob == -0.7

    def test_round_trip(self, mini_model):
        again = parse_arpa(write_arpa(mini_model))
        assert again.order == mini_model.order
        for n in (1, 2):
            assert again.num_ngrams(n) == mini_model.num_ngrams(n)
            for gram, e in mini_model.ngrams(n):
                e2 = again.entry(gram)
                assert e2.logprob == pytest.approx(e.logprob, abs=1e-6)
                if e.backoff is None:
                    assert e2.backoff is None
                else:
                    assert e2.backoff == pytest.approx(e.backoff, abs=1e-6)

    def test_count_mismatch_rejected(self):
        bad = self.TRIVIAL.replace("ngram 1=2", "ngram 1=3")
        with pytest.raises(NGramError, match="declares 3"):
            parse_arpa(bad)

    def test_missing_header_rejected(self):
        with pytest.raises(NGramError, match="data"):
            parse_arpa("\\1-grams:\n-0.5 a\n\\end\\\n")

    def test_undeclared_section_rejected(self):
        bad = self.TRIVIAL.replace("\\end\\", "\\2-grams:\n-0.2\ta b\n\n\\end\\")
        with pytest.raises(NGramError, match="not declared"):
            parse_arpa(bad)

    def test_backoff_chain_validated(self):
        model = NGramModel(2)
        model.add_entry(("a",), -0.5)
        model.add_entry(("b", "a"), -0.3)  # context "b" never listed
        with pytest.raises(NGramError, match="back-off chain"):
            model.validate()


class TestPruning:
    def test_drops_low_probability_entries(self, mini_corpus):
        big = estimate_witten_bell(mini_corpus * 20, 3)
        small = prune_to_small_lm(big, threshold=0.49, max_order=2)
        assert small.order == 2
        # Unigrams survive untouched.
        assert small.num_ngrams(1) == big.num_ngrams(1)
        assert small.num_ngrams(2) < big.num_ngrams(2)
        for gram, e in small.ngrams(2):
            assert 10.0 ** e.logprob >= 0.49
        small.validate()

    def test_pruned_mass_still_sums_to_one(self, mini_corpus):
        big = estimate_witten_bell(mini_corpus, 3)
        small = prune_to_small_lm(big, threshold=0.1, max_order=3)
        for ctx in sorted(small.contexts()):
            assert conditional_mass(small, ctx) == pytest.approx(1.0, abs=1e-9)

    def test_kept_probabilities_unchanged(self, mini_corpus):
        big = estimate_witten_bell(mini_corpus, 3)
        small = prune_to_small_lm(big, threshold=1e-5, max_order=2)
        for gram, e in small.ngrams(2):
            assert e.logprob == big.entry(gram).logprob

    def test_bad_arguments(self, mini_model):
        with pytest.raises(NGramError, match="max_order"):
            prune_to_small_lm(mini_model, 1e-5, 3)
        with pytest.raises(NGramError, match="threshold"):
            prune_to_small_lm(mini_model, 0.0)

    def test_random_models_score_all_events(self, mini_corpus):
        # Pruning must never break scoring totality.
        rng = random.Random(3)
        big = estimate_witten_bell(mini_corpus * 3, 4)
        small = prune_to_small_lm(big, 1e-3, 3)
        events = small.events()
        for _ in range(200):
            ctx = tuple(rng.choice(events) for _ in range(rng.randrange(3)))
            w = rng.choice(events)
            assert math.isfinite(small.score_word(ctx, w))
