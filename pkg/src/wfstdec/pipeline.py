"""Synthetic decoding tasks and the three-strategy comparison pipeline.

The task generator builds a morpheme lexicon with fixed-length, pairwise
distinct pronunciations (so phone strings segment uniquely), a Markov
successor chain over the morphemes, a seeded corpus for LM estimation,
and zero-noise (or noisy) synthetic utterances.  Non-initial morphemes
carry a "+" prefix so hypotheses reconstruct into words deterministically.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import acoustic as ac
from . import decoder as dec
from . import graph as gb
from . import metrics
from . import ngram

FRAME_SHIFT_MS = 10.0

_PHONE_NAMES = [
    "a", "e", "i", "o", "u", "b", "c", "d", "f", "g", "h", "k", "l", "m",
    "n", "p", "q", "r", "s", "t", "v", "w", "x", "y", "z", "sh", "ch", "ng",
    "th", "zh",
]


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    seed: int = 7
    num_morphemes: int = 50
    suffix_fraction: float = 0.3
    pron_len: int = 3
    num_phones: int = 15
    branching: int = 2
    num_sentences: int = 5000
    sentence_len: tuple[int, int] = (5, 9)
    order: int = 4
    prune_threshold: float = 1e-5
    max_order: int = 3
    num_utterances: int = 20
    utterance_len: tuple[int, int] = (24, 32)
    noise: float = 0.0
    margin: float = ac.DEFAULT_MARGIN
    frames_per_phone: int = 1
    beam: float = 16.0
    max_active: int = 7000
    lattice_beam: float = 8.0
    acoustic_scale: float = 1.0
    strategies: tuple[str, ...] = ("onthefly", "static", "rescore")
    frame_shift_ms: float = FRAME_SHIFT_MS

    def options(self) -> dec.DecodeOptions:
        return dec.DecodeOptions(beam=self.beam, max_active=self.max_active,
                                 lattice_beam=self.lattice_beam,
                                 acoustic_scale=self.acoustic_scale)


@dataclass
class SynthTask:
    lexicon: gb.Lexicon
    morphemes: list[str]
    chain: dict[str, list[str]]
    starts: list[str]
    corpus: list[list[str]]
    utterances: list[tuple[str, list[str]]]  # (utt_id, morpheme sequence)


def generate_task(cfg: PipelineConfig) -> SynthTask:
    rng = random.Random(cfg.seed)
    phones = _PHONE_NAMES[:cfg.num_phones]
    if len(phones) < cfg.num_phones:
        phones = phones + [f"ph{i}" for i in range(len(phones), cfg.num_phones)]

    capacity = len(phones) ** cfg.pron_len
    if cfg.num_morphemes > capacity:
        raise ValueError(
            f"cannot draw {cfg.num_morphemes} distinct pronunciations from "
            f"{len(phones)} phones at length {cfg.pron_len} ({capacity} possible)")
    num_suffix = int(cfg.num_morphemes * cfg.suffix_fraction)
    prons: set[tuple[str, ...]] = set()
    morphemes: list[str] = []
    lex = gb.Lexicon()
    for i in range(cfg.num_morphemes):
        while True:
            pron = tuple(rng.choice(phones) for _ in range(cfg.pron_len))
            if pron not in prons:
                prons.add(pron)
                break
        name = "".join(pron)
        if i >= cfg.num_morphemes - num_suffix:
            name = metrics.SUFFIX_MARK + name
        if name in lex.prons:  # two prons could spell the same string
            name = f"{name}{i}"
        morphemes.append(name)
        lex.add(name, pron)

    stems = [m for m in morphemes if not m.startswith(metrics.SUFFIX_MARK)]
    starts = sorted(rng.sample(stems, max(2, len(stems) // 8)))
    chain = {m: sorted(rng.sample(morphemes, cfg.branching)) for m in morphemes}

    def walk(r: random.Random, lo: int, hi: int) -> list[str]:
        n = r.randint(lo, hi)
        cur = r.choice(starts)
        sent = [cur]
        while len(sent) < n:
            cur = r.choice(chain[cur])
            sent.append(cur)
        return sent

    corpus = [walk(rng, *cfg.sentence_len) for _ in range(cfg.num_sentences)]
    # Every lexicon morpheme must be in the LM vocabulary: pad the corpus
    # with coverage sentences for morphemes the random walks never hit.
    seen = {tok for sent in corpus for tok in sent}
    missing = [m for m in morphemes if m not in seen]
    hi = max(cfg.sentence_len)
    while missing:
        chunk, missing = missing[:hi - 1], missing[hi - 1:]
        corpus.append([rng.choice(starts)] + chunk)
    utt_rng = random.Random(cfg.seed + 1)
    utterances = [(f"utt{i:04d}", walk(utt_rng, *cfg.utterance_len))
                  for i in range(cfg.num_utterances)]
    return SynthTask(lex, morphemes, chain, starts, corpus, utterances)


@dataclass
class UttResult:
    utt_id: str
    reference: list[str]
    hypothesis: list[str]
    cost: float


@dataclass
class StrategyResult:
    name: str
    utterances: list[UttResult] = field(default_factory=list)
    wer: float = 0.0
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    decode_seconds: float = 0.0
    audio_seconds: float = 0.0
    graph_arcs: int = 0
    graph_states: int = 0
    peak_tokens: int = 0

    @property
    def rtf(self) -> float:
        return self.decode_seconds / self.audio_seconds if self.audio_seconds else 0.0


@dataclass
class DecodeReport:
    config: PipelineConfig
    strategies: dict[str, StrategyResult]
    sizes: list[metrics.SizeRow]
    stats: dec.RelayStats

    def size_ratio(self) -> Optional[float]:
        by_name = {r.name: r for r in self.sizes}
        if "HCLG4" not in by_name:
            return None
        denom = sum(by_name[n].arcs for n in ("HCLG3", "G3neg", "G4") if n in by_name)
        return by_name["HCLG4"].arcs / denom if denom else None

    def render(self, include_timing: bool = True) -> str:
        out = ["== decode report =="]
        for name in sorted(self.strategies):
            sr = self.strategies[name]
            for u in sr.utterances:
                words = " ".join(metrics.morphemes_to_words(u.hypothesis))
                out.append(f"{u.utt_id}\t{name}\t{words}\t{u.cost:.4f}")
        out.append("")
        out.append("== graph sizes ==")
        for row in self.sizes:
            out.append(f"{row.name}\tstates={row.states}\tarcs={row.arcs}\tbytes={row.bytes}")
        ratio = self.size_ratio()
        if ratio is not None:
            out.append(f"static/onthefly arc ratio: {ratio:.3f}")
        out.append("")
        out.append("== summary ==")
        for name in sorted(self.strategies):
            sr = self.strategies[name]
            out.append(f"wer[{name}]={sr.wer:.2f}")
            out.append(f"errors[{name}]=S{sr.substitutions}_I{sr.insertions}_D{sr.deletions}")
            out.append(f"graph_arcs[{name}]={sr.graph_arcs}")
            out.append(f"peak_tokens[{name}]={sr.peak_tokens}")
            if include_timing:
                out.append(f"rtf[{name}]={sr.rtf:.3f}")
        if ratio is not None:
            out.append(f"size_ratio={ratio:.6f}")
        out.append(f"relay_eps_output_matches={self.stats.eps_output_matches}")
        return "\n".join(out) + "\n"


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig,
                 stats: Optional[dec.RelayStats] = None) -> DecodeReport:
    """Build LMs and graphs, decode every utterance per strategy, score."""
    stats = stats if stats is not None else dec.RelayStats()
    task = _stage("generate", generate_task, cfg)
    g4 = _stage("lm-build", ngram.estimate_witten_bell, task.corpus, cfg.order)
    g3 = _stage("lm-prune", ngram.prune_to_small_lm, g4,
                cfg.prune_threshold, cfg.max_order)

    morph_syms = gb.make_morpheme_symbols(g4, with_hash=True)
    phone_syms = None
    need_otf = {"onthefly"} & set(cfg.strategies)
    need_small = ({"onthefly", "rescore"} & set(cfg.strategies))
    need_static = "static" in cfg.strategies

    fsts: dict[str, "gb.Fst"] = {}
    hclg3 = g3neg = g4fst = hclg4 = None
    if need_small:
        hclg3 = _stage("graph-build", gb.build_search_graph, task.lexicon, g3,
                       phone_syms, morph_syms)
        phone_syms = hclg3.isyms
        fsts["HCLG3"] = hclg3
    if need_otf or "rescore" in cfg.strategies:
        g3neg = _stage("graph-build", lambda: gb.negate_weights(
            gb.lm_to_fst(g3, morph_syms, mode=gb.BACKOFF_EPS)))
        g4fst = _stage("graph-build", gb.lm_to_fst, g4, morph_syms, gb.BACKOFF_EPS)
        fsts["G3neg"] = g3neg
        fsts["G4"] = g4fst
    if need_static:
        hclg4 = _stage("graph-build", gb.build_search_graph, task.lexicon, g4,
                       phone_syms, morph_syms)
        phone_syms = phone_syms or hclg4.isyms
        fsts["HCLG4"] = hclg4

    def utt_matrix(i: int, utt_id: str, morphs: Sequence[str]) -> ac.AcousticMatrix:
        phone_ids = []
        for m in morphs:
            for p in task.lexicon.prons[m][0]:
                phone_ids.append(phone_syms.id_of(p))
        return ac.synthesize_utterance(
            phone_ids, len(phone_syms) - 1,
            frames_per_phone=cfg.frames_per_phone, noise=cfg.noise,
            seed=cfg.seed + 1000 + i, margin=cfg.margin, utt_id=utt_id)

    matrices = _stage("synth", lambda: [
        utt_matrix(i, uid, morphs)
        for i, (uid, morphs) in enumerate(task.utterances)])

    opts = cfg.options()
    results: dict[str, StrategyResult] = {}
    for strategy in cfg.strategies:
        sr = StrategyResult(strategy)
        for (utt_id, ref_morphs), matrix in zip(task.utterances, matrices):
            t0 = time.perf_counter()
            try:
                if strategy == "onthefly":
                    lat = dec.decode_onthefly(hclg3, g3neg, g4fst, matrix,
                                              opts, stats, utt_id=utt_id)
                elif strategy == "static":
                    lat = dec.decode_static(hclg4, matrix, opts, utt_id=utt_id)
                elif strategy == "rescore":
                    first = dec.decode_static(hclg3, matrix, opts, utt_id=utt_id)
                    lat = dec.rescore_lattice(first, g3neg, g4fst, stats)
                    lat.peak_tokens = first.peak_tokens
                else:
                    raise ValueError(f"unknown strategy {strategy!r}")
                hyp, cost = dec.best_path(lat)
            except dec.DecodeError as exc:
                raise StageError(f"decode[{strategy}]", exc) from exc
            sr.decode_seconds += time.perf_counter() - t0
            sr.audio_seconds += matrix.num_frames * cfg.frame_shift_ms / 1000.0
            sr.peak_tokens = max(sr.peak_tokens, lat.peak_tokens)
            sr.utterances.append(UttResult(utt_id, list(ref_morphs), hyp, cost))
        _score_strategy(sr)
        graph = {"onthefly": hclg3, "static": hclg4, "rescore": hclg3}[strategy]
        sr.graph_states = graph.num_states
        sr.graph_arcs = graph.num_arcs
        if strategy == "onthefly":
            sr.graph_states += g3neg.num_states + g4fst.num_states
            sr.graph_arcs += g3neg.num_arcs + g4fst.num_arcs
        results[strategy] = sr

    sizes = _stage("report", metrics.size_report, fsts)
    return DecodeReport(cfg, results, sizes, stats)


def _score_strategy(sr: StrategyResult) -> None:
    total_ref = 0
    total_err = 0
    for u in sr.utterances:
        ref_words = metrics.morphemes_to_words(u.reference)
        hyp_words = metrics.morphemes_to_words(u.hypothesis)
        _, s, i, d = metrics.wer_score(ref_words, hyp_words)
        sr.substitutions += s
        sr.insertions += i
        sr.deletions += d
        total_err += s + i + d
        total_ref += len(ref_words)
    sr.wer = 100.0 * total_err / total_ref if total_ref else 0.0
