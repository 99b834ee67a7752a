"""LM acceptors, lexicon transducers, composition, search-graph assembly."""

import math
import random

import pytest

from wfstdec.fst import ZERO, Arc, Fst, SymbolTable, find_arc
from wfstdec.graph import (
    BACKOFF_EPS,
    BACKOFF_HASH,
    GraphError,
    Lexicon,
    acceptor_sentence_cost,
    build_search_graph,
    compile_lexicon,
    compose_standard,
    cost_from_log10,
    lm_to_fst,
    linear_acceptor,
    make_morpheme_symbols,
    negate_weights,
)
from wfstdec.ngram import BOS, EOS, score_sentence

from conftest import MINI_LEXICON_TEXT


def context_states(model):
    """State ids assigned by lm_to_fst: contexts sorted by (length, tuple)."""
    contexts = sorted(model.contexts(), key=lambda h: (len(h), h))
    return {h: i for i, h in enumerate(contexts)}


def iter_paths(fst, max_arcs=12):
    """All successful paths with at most max_arcs arcs: (in, out, weight)."""
    if fst.initial < 0:
        return
    stack = [(fst.initial, (), (), 0.0, 0)]
    while stack:
        s, il, ol, w, n = stack.pop()
        fw = fst.final(s)
        if fw != ZERO:
            yield il, ol, w + fw
        if n == max_arcs:
            continue
        for a in fst.arcs(s):
            stack.append((a.nextstate,
                          il + ((a.ilabel,) if a.ilabel else ()),
                          ol + ((a.olabel,) if a.olabel else ()),
                          w + a.weight, n + 1))


def language(fst, max_arcs=12):
    """Min-weight map over (input string, output string) pairs."""
    out = {}
    for il, ol, w in iter_paths(fst, max_arcs):
        key = (il, ol)
        if key not in out or w < out[key]:
            out[key] = w
    return out


class TestLexicon:
    def test_parse_and_write(self):
        lex = Lexicon.parse(MINI_LEXICON_TEXT)
        assert lex.prons["vix"] == [["v", "i", "x"]]
        assert Lexicon.parse(lex.write()).prons == lex.prons

    def test_bad_line(self):
        with pytest.raises(GraphError, match="line 1"):
            Lexicon.parse("justamorpheme\n")

    def test_empty_pronunciation(self):
        with pytest.raises(GraphError, match="empty pronunciation"):
            Lexicon().add("x", [])

    def test_compiled_transducer_spells_words(self):
        lex = Lexicon.parse("vix\tv i x\nci\tc i\n")
        fst = compile_lexicon(lex)
        phones = fst.isyms
        morphs = fst.osyms
        lang = language(fst, max_arcs=5)
        seq = tuple(phones.id_of(p) for p in ["v", "i", "x", "c", "i"])
        out = tuple(morphs.id_of(m) for m in ["vix", "ci"])
        assert lang[(seq, out)] == 0.0

    def test_empty_lexicon_rejected(self):
        with pytest.raises(GraphError, match="empty lexicon"):
            compile_lexicon(Lexicon())


class TestLmToFst:
    def test_begin_state_arcs(self, mini_model):
        # Both corpus sentences start with "vix": exactly one word arc from
        # the sentence-begin state, plus one back-off arc.
        fst = lm_to_fst(mini_model, mode=BACKOFF_EPS)
        states = context_states(mini_model)
        assert fst.initial == states[(BOS,)]
        arcs = fst.arcs(fst.initial)
        assert len(arcs) == 2
        word_arcs = [a for a in arcs if a.ilabel != 0]
        eps_arcs = [a for a in arcs if a.ilabel == 0]
        assert len(word_arcs) == 1 and len(eps_arcs) == 1
        assert fst.isyms.sym_of(word_arcs[0].ilabel) == "vix"
        assert eps_arcs[0].nextstate == states[()]

    def test_direct_path_weights(self, ab_model_eos):
        fst = lm_to_fst(ab_model_eos, mode=BACKOFF_EPS)
        a_id = fst.isyms.id_of("a")
        b_id = fst.isyms.id_of("b")
        arc_a = find_arc(fst, fst.initial, a_id)
        assert arc_a.weight == pytest.approx(cost_from_log10(-0.5))
        arc_b = find_arc(fst, arc_a.nextstate, b_id)
        assert arc_b.weight == pytest.approx(cost_from_log10(-0.3))

    def test_hash_mode_labels_backoff_arcs(self, mini_model):
        fst = lm_to_fst(mini_model, mode=BACKOFF_HASH)
        hash_id = fst.isyms.id_of(BACKOFF_HASH)
        labels = {a.ilabel for s in fst.states() for a in fst.arcs(s)}
        assert hash_id in labels
        assert 0 not in labels

    def test_every_final_weight_finite(self, mini_model):
        fst = lm_to_fst(mini_model)
        for s in fst.states():
            assert math.isfinite(fst.final(s))

    def test_acceptor_matches_sentence_scores(self, mini_model):
        fst = lm_to_fst(mini_model, mode=BACKOFF_EPS)
        rng = random.Random(17)
        words = [w for w in mini_model.events() if w != EOS]
        for _ in range(200):
            sent = [rng.choice(words) for _ in range(rng.randint(1, 6))]
            labels = [fst.isyms.id_of(w) for w in sent]
            got = acceptor_sentence_cost(fst, labels)
            want = cost_from_log10(score_sentence(mini_model, sent))
            assert got == pytest.approx(want, abs=1e-9)

    def test_unknown_mode(self, mini_model):
        with pytest.raises(GraphError, match="mode"):
            lm_to_fst(mini_model, mode="bogus")


class TestNegate:
    def test_involution(self, mini_model):
        g = lm_to_fst(mini_model)
        gg = negate_weights(negate_weights(g))
        for s in g.states():
            assert gg.arcs(s) == g.arcs(s)
        assert gg.finals == g.finals

    def test_best_path_becomes_worst(self, mini_model):
        # From context "vix", reading "ci": the direct bigram arc beats the
        # back-off route in the positive graph; negation flips the order.
        g = lm_to_fst(mini_model, mode=BACKOFF_EPS)
        states = context_states(mini_model)
        s = states[("vix",)]
        ci = g.isyms.id_of("ci")
        direct = find_arc(g, s, ci).weight
        back = g.arcs(s)
        eps = next(a for a in back if a.ilabel == 0)
        relay = eps.weight + find_arc(g, eps.nextstate, ci).weight
        assert direct < relay
        gn = negate_weights(g)
        assert find_arc(gn, s, ci).weight > \
            next(a for a in gn.arcs(s) if a.ilabel == 0).weight + \
            find_arc(gn, eps.nextstate, ci).weight


class TestCompose:
    def test_linear_acceptor_through_lm(self, ab_model_eos):
        g = lm_to_fst(ab_model_eos, mode=BACKOFF_EPS)
        line = linear_acceptor(["a", "b"], g.isyms)
        comp = compose_standard(line, g)
        lang = language(comp, max_arcs=8)
        seq = tuple(g.isyms.id_of(w) for w in ["a", "b"])
        # Path weight: -ln 10^-0.8 arcs plus the end-context final weight.
        end_final = cost_from_log10(ab_model_eos.score_word(("a", "b"), EOS))
        assert lang[(seq, seq)] == pytest.approx(cost_from_log10(-0.8) + end_final)

    def test_matches_brute_force_on_random_dags(self):
        rng = random.Random(23)
        for trial in range(40):
            a = self._random_dag(rng, eps_rate=0.3)
            b = self._random_dag(rng, eps_rate=0.3)
            comp = compose_standard(a, b)
            want = {}
            for il_a, ol_a, wa in iter_paths(a):
                for il_b, ol_b, wb in iter_paths(b):
                    if ol_a != il_b:
                        continue
                    key = (il_a, ol_b)
                    w = wa + wb
                    if key not in want or w < want[key]:
                        want[key] = w
            got = language(comp)
            assert set(got) == set(want), f"trial {trial}"
            for key in want:
                assert got[key] == pytest.approx(want[key], abs=1e-9), f"trial {trial}"

    @staticmethod
    def _random_dag(rng, num_states=5, num_arcs=8, num_labels=2, eps_rate=0.0):
        fst = Fst()
        fst.add_states(num_states)
        for _ in range(num_arcs):
            src = rng.randrange(num_states - 1)
            dst = rng.randrange(src + 1, num_states)
            il = 0 if rng.random() < eps_rate else rng.randint(1, num_labels)
            ol = 0 if rng.random() < eps_rate else rng.randint(1, num_labels)
            fst.add_arc(src, Arc(il, ol, round(rng.uniform(0, 3), 3), dst))
        fst.set_initial(0)
        fst.set_final(num_states - 1, round(rng.uniform(0, 1), 3))
        return fst

    def test_alphabet_mismatch_rejected(self):
        s1 = SymbolTable()
        s1.add("a")
        s2 = SymbolTable()
        s2.add("b")
        left = linear_acceptor(["a"], s1)
        right = linear_acceptor(["b"], s2)
        with pytest.raises(GraphError, match="alphabet mismatch"):
            compose_standard(left, right)


class TestSearchGraph:
    def test_accepts_exactly_lexical_phone_strings(self, mini_model):
        lex = Lexicon.parse(MINI_LEXICON_TEXT)
        graph = build_search_graph(lex, mini_model)
        phones = graph.isyms
        # A phone realization of an in-LM morpheme sequence is accepted at
        # the sentence score plus zero lexicon weight.
        for sent in (["vix", "tin"], ["vix", "ci"], ["cUx", "kAn", "vix"]):
            labels = [phones.id_of(p) for m in sent for p in lex.prons[m][0]]
            got = acceptor_sentence_cost(graph, labels)
            want = cost_from_log10(score_sentence(mini_model, sent))
            assert got == pytest.approx(want, abs=1e-9)
        # A phone string spelling no morpheme sequence is rejected.
        bad = [phones.id_of(p) for p in ["v", "i", "v"]]
        assert acceptor_sentence_cost(graph, bad) == ZERO

    def test_bigger_lm_gives_bigger_graph(self, mini_corpus):
        from wfstdec.ngram import estimate_witten_bell, prune_to_small_lm
        lex = Lexicon.parse(MINI_LEXICON_TEXT)
        big = estimate_witten_bell(mini_corpus * 3, 3)
        small = prune_to_small_lm(big, 0.3, 2)
        syms = make_morpheme_symbols(big, with_hash=True)
        g_big = build_search_graph(lex, big, None, syms)
        g_small = build_search_graph(lex, small, None, syms)
        assert g_big.num_arcs > g_small.num_arcs

    def test_lexicon_must_be_in_vocabulary(self, mini_model):
        lex = Lexicon.parse(MINI_LEXICON_TEXT + "zzz\tz z\n")
        with pytest.raises(GraphError, match="missing from the LM vocabulary"):
            build_search_graph(lex, mini_model)

    def test_backoff_surfaces_as_double_epsilon(self, mini_model):
        lex = Lexicon.parse(MINI_LEXICON_TEXT)
        graph = build_search_graph(lex, mini_model)
        assert any(a.ilabel == 0 and a.olabel == 0
                   for s in graph.states() for a in graph.arcs(s))
        # No #0 labels survive on the output tape.
        hash_id = graph.osyms.id_of(BACKOFF_HASH)
        assert all(a.olabel != hash_id
                   for s in graph.states() for a in graph.arcs(s))
