"""Compiling LMs and lexicons into WFSTs and composing search graphs.

The LM acceptor has one state per context; word arcs carry the word on
both tapes with weight -ln P(word | context) and back-off arcs carry the
back-off penalty with an epsilon (or #0) input label.  End-of-sentence
probabilities become final weights, with the back-off relay folded in so
every context state has a finite final weight.

The desk-scale search graph is lexicon o grammar with single-symbol
monophone emissions: each phone arc consumes exactly one acoustic frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .fst import (
    ZERO,
    Arc,
    Fst,
    FstError,
    SymbolTable,
    connect,
    weight_times,
)
from .ngram import BOS, EOS, NGramModel

LN10 = math.log(10.0)

BACKOFF_EPS = "eps"
BACKOFF_HASH = "#0"


class GraphError(ValueError):
    pass


@dataclass
class Lexicon:
    """Morpheme pronunciations over context-independent phones."""

    prons: dict[str, list[list[str]]] = field(default_factory=dict)
    silence_phone: Optional[str] = None
    silence_cost: float = 0.0

    def add(self, morpheme: str, phones: Sequence[str]) -> None:
        if not phones:
            raise GraphError(f"morpheme {morpheme!r} has an empty pronunciation")
        self.prons.setdefault(morpheme, []).append(list(phones))

    def phones(self) -> list[str]:
        out = set()
        for prons in self.prons.values():
            for p in prons:
                out.update(p)
        if self.silence_phone:
            out.add(self.silence_phone)
        return sorted(out)

    @classmethod
    def parse(cls, text: str) -> "Lexicon":
        lex = cls()
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2 or not parts[1].split():
                raise GraphError(f"line {ln}: bad lexicon line {raw!r}")
            lex.add(parts[0], parts[1].split())
        return lex

    def write(self) -> str:
        lines = []
        for m in sorted(self.prons):
            for p in self.prons[m]:
                lines.append(f"{m}\t{' '.join(p)}")
        return "\n".join(lines) + "\n"


def cost_from_log10(logprob: float) -> float:
    """ARPA log10 value -> natural-log cost."""
    return -logprob * LN10


def make_morpheme_symbols(model: NGramModel, with_hash: bool = False) -> SymbolTable:
    syms = SymbolTable()
    for w in model.events():
        if w != EOS:
            syms.add(w)
    if with_hash:
        syms.add(BACKOFF_HASH)
    return syms


def lm_to_fst(model: NGramModel, syms: Optional[SymbolTable] = None,
              mode: str = BACKOFF_EPS) -> Fst:
    """Compile a back-off model into a context-state acceptor.

    mode "eps" gives back-off arcs epsilon input labels (for the
    on-the-fly decoder's relay matching); mode "#0" labels them with the
    disambiguation symbol instead (for static composition).
    """
    if mode not in (BACKOFF_EPS, BACKOFF_HASH):
        raise GraphError(f"unknown back-off label mode {mode!r}")
    if syms is None:
        syms = make_morpheme_symbols(model, with_hash=(mode == BACKOFF_HASH))
    backoff_ilabel = 0
    if mode == BACKOFF_HASH:
        backoff_ilabel = syms.add(BACKOFF_HASH)

    contexts = sorted(model.contexts(), key=lambda h: (len(h), h))
    state_of = {}
    fst = Fst(syms, syms)
    for h in contexts:
        state_of[h] = fst.add_state()

    def target(seq: tuple[str, ...]) -> int:
        while seq not in state_of:
            seq = seq[1:]
        return state_of[seq]

    max_ctx = model.order - 1
    for n in range(1, model.order + 1):
        for gram, e in model.ngrams(n):
            h, w = gram[:-1], gram[-1]
            if w in (BOS, EOS) or h not in state_of:
                continue
            wid = syms.id_of(w)
            dst = target(gram[-max_ctx:] if max_ctx > 0 else ())
            fst.add_arc(state_of[h], Arc(wid, wid, cost_from_log10(e.logprob), dst))
    for h in contexts:
        if not h:
            continue
        e = model.entry(h)
        bow = e.backoff if e is not None and e.backoff is not None else 0.0
        fst.add_arc(state_of[h],
                    Arc(backoff_ilabel, 0, cost_from_log10(bow), target(h[1:])))
    for h in contexts:
        fst.set_final(state_of[h], cost_from_log10(model.score_word(h, EOS)))

    init = (BOS,) if (BOS,) in state_of else ()
    fst.set_initial(state_of[init])
    fst.arc_sort_input()
    return fst


def negate_weights(g: Fst) -> Fst:
    """Same topology with every arc and final weight negated."""
    out = Fst(g.isyms, g.osyms)
    out.add_states(g.num_states)
    for s in g.states():
        for a in g.arcs(s):
            w = a.weight if a.weight == ZERO else -a.weight
            out.add_arc(s, Arc(a.ilabel, a.olabel, w, a.nextstate))
    for s, w in g.finals.items():
        out.set_final(s, w if w == ZERO else -w)
    out.set_initial(g.initial)
    out.arc_sort_input()
    return out


def compile_lexicon(lex: Lexicon, phone_syms: Optional[SymbolTable] = None,
                    morph_syms: Optional[SymbolTable] = None) -> Fst:
    """Phones-in, morphemes-out transducer closed under concatenation.

    Each pronunciation runs from the loop state back to the loop state,
    emitting the morpheme on its first phone arc.
    """
    if not lex.prons:
        raise GraphError("empty lexicon")
    if phone_syms is None:
        phone_syms = SymbolTable()
        for p in lex.phones():
            phone_syms.add(p)
    if morph_syms is None:
        morph_syms = SymbolTable()
        for m in sorted(lex.prons):
            morph_syms.add(m)
    fst = Fst(phone_syms, morph_syms)
    loop = fst.add_state()
    fst.set_initial(loop)
    fst.set_final(loop, 0.0)
    for m in sorted(lex.prons):
        mid = morph_syms.id_of(m)
        for pron in lex.prons[m]:
            src = loop
            for i, phone in enumerate(pron):
                pid = phone_syms.id_of(phone)
                olabel = mid if i == 0 else 0
                dst = loop if i == len(pron) - 1 else fst.add_state()
                fst.add_arc(src, Arc(pid, olabel, 0.0, dst))
                src = dst
    if lex.silence_phone:
        sid = phone_syms.id_of(lex.silence_phone)
        fst.add_arc(loop, Arc(sid, 0, lex.silence_cost, loop))
    fst.arc_sort_input()
    return fst


def _check_alphabets(a: Fst, b: Fst) -> None:
    if a.osyms is None or b.isyms is None or a.osyms is b.isyms:
        return
    amap = dict(a.osyms.symbols())
    bmap = dict(b.isyms.symbols())
    if amap != bmap:
        raise GraphError("composition alphabet mismatch: "
                         "left output symbols differ from right input symbols")


def compose_standard(a: Fst, b: Fst) -> Fst:
    """Standard composition with the three-state epsilon filter.

    Filter value 0 admits anything, 1 follows a left-only epsilon move,
    2 a right-only move; 1 and 2 block the opposite lone move so each
    logical path has a single epsilon interleaving.
    """
    _check_alphabets(a, b)
    if a.initial < 0 or b.initial < 0:
        return Fst(a.isyms, b.osyms)
    out = Fst(a.isyms, b.osyms)
    start = (a.initial, b.initial, 0)
    state_of = {start: out.add_state()}
    stack = [start]
    # Right-side arcs grouped by input label per state, built lazily.
    b_groups: dict[int, dict[int, list[Arc]]] = {}

    def groups(q2: int) -> dict[int, list[Arc]]:
        g = b_groups.get(q2)
        if g is None:
            g = {}
            for arc in b.arcs(q2):
                g.setdefault(arc.ilabel, []).append(arc)
            b_groups[q2] = g
        return g

    def visit(key) -> int:
        s = state_of.get(key)
        if s is None:
            s = out.add_state()
            state_of[key] = s
            stack.append(key)
        return s

    while stack:
        key = stack.pop()
        q1, q2, f = key
        src = state_of[key]
        grp = groups(q2)
        for a1 in a.arcs(q1):
            if a1.olabel != 0:
                for a2 in grp.get(a1.olabel, ()):
                    dst = visit((a1.nextstate, a2.nextstate, 0))
                    out.add_arc(src, Arc(a1.ilabel, a2.olabel,
                                         weight_times(a1.weight, a2.weight), dst))
            else:
                # Paired epsilon move (resets the filter).
                if f == 0:
                    for a2 in grp.get(0, ()):
                        dst = visit((a1.nextstate, a2.nextstate, 0))
                        out.add_arc(src, Arc(a1.ilabel, a2.olabel,
                                             weight_times(a1.weight, a2.weight), dst))
                # Left-only epsilon move.
                if f != 2:
                    dst = visit((a1.nextstate, q2, 1))
                    out.add_arc(src, Arc(a1.ilabel, 0, a1.weight, dst))
        if f != 1:
            for a2 in grp.get(0, ()):
                dst = visit((q1, a2.nextstate, 2))
                out.add_arc(src, Arc(0, a2.olabel, a2.weight, dst))
        wa, wb = a.final(q1), b.final(q2)
        if wa != ZERO and wb != ZERO:
            out.set_final(src, weight_times(wa, wb))
    out.set_initial(0)
    return connect(out)


def build_search_graph(lex: Lexicon, model: NGramModel,
                       phone_syms: Optional[SymbolTable] = None,
                       morph_syms: Optional[SymbolTable] = None) -> Fst:
    """Trimmed L o G with phone inputs and morpheme outputs.

    G is compiled with #0-labelled back-off arcs and L gets an eps:#0
    self-loop at its word-boundary state, so the composition never pairs
    two bare epsilons; the back-off arcs surface as eps:eps arcs in the
    result.
    """
    if morph_syms is None:
        morph_syms = make_morpheme_symbols(model, with_hash=True)
    lm_vocab = set(model.vocabulary)
    for m in lex.prons:
        if m not in lm_vocab:
            raise GraphError(f"lexicon morpheme {m!r} missing from the LM vocabulary")
    left = compile_lexicon(lex, phone_syms, morph_syms)
    hash_id = morph_syms.add(BACKOFF_HASH)
    left.add_arc(left.initial, Arc(0, hash_id, 0.0, left.initial))
    left.arc_sort_input()
    g = lm_to_fst(model, morph_syms, mode=BACKOFF_HASH)
    graph = compose_standard(left, g)
    if graph.num_states == 0:
        raise GraphError("empty composition: lexicon and LM share no usable vocabulary")
    graph.arc_sort_input()
    return graph


def linear_acceptor(tokens: Sequence[str], syms: SymbolTable) -> Fst:
    """Straight-line acceptor of a token sequence (weight 0 everywhere)."""
    fst = Fst(syms, syms)
    src = fst.add_state()
    fst.set_initial(src)
    for tok in tokens:
        tid = syms.id_of(tok)
        dst = fst.add_state()
        fst.add_arc(src, Arc(tid, tid, 0.0, dst))
        src = dst
    fst.set_final(src, 0.0)
    fst.arc_sort_input()
    return fst


def acceptor_sentence_cost(fst: Fst, labels: Sequence[int]) -> float:
    """Min path weight spelling the label sequence, epsilon arcs allowed.

    Position-indexed relaxation; requires the no-negative-epsilon-cycle
    property that LM acceptors have by construction.
    """
    if fst.initial < 0:
        return ZERO

    def closure(dist: dict[int, float]) -> dict[int, float]:
        work = list(dist.items())
        while work:
            s, d = work.pop()
            if d > dist.get(s, ZERO):
                continue
            for a in fst.arcs(s):
                if a.ilabel == 0:
                    nd = d + a.weight
                    if nd < dist.get(a.nextstate, ZERO) - 1e-15:
                        dist[a.nextstate] = nd
                        work.append((a.nextstate, nd))
        return dist

    dist = closure({fst.initial: 0.0})
    for lab in labels:
        nxt: dict[int, float] = {}
        for s, d in dist.items():
            for a in fst.arcs(s):
                if a.ilabel == lab:
                    nd = d + a.weight
                    if nd < nxt.get(a.nextstate, ZERO):
                        nxt[a.nextstate] = nd
        dist = closure(nxt)
        if not dist:
            return ZERO
    best = ZERO
    for s, d in dist.items():
        w = fst.final(s)
        if w != ZERO and d + w < best:
            best = d + w
    return best
