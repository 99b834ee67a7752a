"""Command-line interface: batch LM, graph, synthesis and decoding tools."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acoustic as ac
from . import decoder as dec
from . import graph as gb
from . import metrics
from . import ngram
from . import pipeline
from .fst import SymbolTable, read_text_fst, write_text_fst


def _read(path: str) -> str:
    return Path(path).read_text()


def _write(path: str, text: str) -> None:
    Path(path).write_text(text)


def cmd_lm_build(args) -> int:
    corpus = [line.split() for line in _read(args.corpus).splitlines() if line.strip()]
    model = ngram.estimate_witten_bell(corpus, args.order)
    _write(args.output, ngram.write_arpa(model))
    print(f"wrote {args.order}-gram model with "
          f"{sum(model.num_ngrams(n) for n in range(1, args.order + 1))} entries")
    return 0


def cmd_lm_prune(args) -> int:
    model = ngram.parse_arpa(_read(args.lm))
    small = ngram.prune_to_small_lm(model, args.prune_threshold, args.max_order)
    _write(args.output, ngram.write_arpa(small))
    return 0


def cmd_graph_build(args) -> int:
    model = ngram.parse_arpa(_read(args.lm))
    if args.lexicon:
        lex = gb.Lexicon.parse(_read(args.lexicon))
        graph = gb.build_search_graph(lex, model)
        isyms, osyms = graph.isyms, graph.osyms
    else:
        mode = gb.BACKOFF_EPS if args.backoff_mode == "eps" else gb.BACKOFF_HASH
        graph = gb.lm_to_fst(model, mode=mode)
        if args.negate:
            graph = gb.negate_weights(graph)
        isyms = osyms = graph.isyms
    _write(args.output, write_text_fst(graph))
    if args.isymbols:
        _write(args.isymbols, isyms.write_text())
    if args.osymbols:
        _write(args.osymbols, osyms.write_text())
    print(f"graph: {graph.num_states} states, {graph.num_arcs} arcs")
    return 0


def cmd_synth(args) -> int:
    phone_syms = SymbolTable.read_text(_read(args.phone_symbols))
    phones = [phone_syms.id_of(p) for p in _read(args.phones).split()]
    m = ac.synthesize_utterance(phones, len(phone_syms) - 1,
                                frames_per_phone=args.frames_per_phone,
                                noise=args.noise, seed=args.seed,
                                margin=args.margin, utt_id=args.utt_id)
    _write(args.output, ac.write_acoustic_text(m))
    return 0


def cmd_decode(args) -> int:
    opts = dec.DecodeOptions(beam=args.beam, max_active=args.max_active,
                             lattice_beam=args.lattice_beam,
                             acoustic_scale=args.acoustic_scale)
    isyms = SymbolTable.read_text(_read(args.isymbols)) if args.isymbols else None
    osyms = SymbolTable.read_text(_read(args.osymbols)) if args.osymbols else None
    graph = read_text_fst(_read(args.graph), isyms, osyms)
    graph.arc_sort_input()
    matrix = ac.read_acoustic_text(_read(args.acoustic))
    if args.strategy == "static":
        lat = dec.decode_static(graph, matrix, opts, utt_id=matrix.utt_id)
    else:
        if not (args.g3neg and args.g4):
            print("error: --g3neg and --g4 are required for this strategy",
                  file=sys.stderr)
            return 2
        g3neg = read_text_fst(_read(args.g3neg), osyms, osyms)
        g3neg.arc_sort_input()
        g4 = read_text_fst(_read(args.g4), osyms, osyms)
        g4.arc_sort_input()
        if args.strategy == "onthefly":
            lat = dec.decode_onthefly(graph, g3neg, g4, matrix, opts,
                                      utt_id=matrix.utt_id)
        else:
            lat = dec.decode_static(graph, matrix, opts, utt_id=matrix.utt_id)
            lat = dec.rescore_lattice(lat, g3neg, g4)
    hyp, cost = dec.best_path(lat)
    print(f"{matrix.utt_id}\t{' '.join(hyp)}\t{cost:.4f}")
    if args.lattice:
        comments = {s: f"frame {f}" for s, f in enumerate(lat.frames)}
        _write(args.lattice, write_text_fst(lat.fst, comments))
    return 0


def cmd_score(args) -> int:
    refs = {}
    for line in _read(args.ref).splitlines():
        if line.strip():
            uid, *toks = line.split()
            refs[uid] = toks
    total_err = total_ref = 0
    for line in _read(args.hyp).splitlines():
        if not line.strip():
            continue
        uid, *toks = line.split()
        if uid not in refs:
            print(f"error: no reference for {uid}", file=sys.stderr)
            return 2
        _, s, i, d = metrics.wer_score(refs[uid], toks)
        total_err += s + i + d
        total_ref += len(refs[uid])
    wer = 100.0 * total_err / total_ref if total_ref else 0.0
    print(f"WER {wer:.2f}% ({total_err} errors / {total_ref} reference tokens)")
    return 0


def cmd_report(args) -> int:
    cfg = pipeline.PipelineConfig()
    if args.config:
        data = json.loads(_read(args.config))
        for key, value in data.items():
            if not hasattr(cfg, key):
                print(f"error: unknown config key {key!r}", file=sys.stderr)
                return 2
            if isinstance(getattr(cfg, key), tuple):
                value = tuple(value)
            setattr(cfg, key, value)
    if args.strategy:
        cfg.strategies = tuple(args.strategy)
    report = pipeline.run_pipeline(cfg)
    print(report.render(include_timing=not args.no_timing))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wfstdec",
        description="WFST toolkit and one-pass morpheme decoder")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lm-build", help="estimate an ARPA model from a corpus")
    p.add_argument("corpus")
    p.add_argument("output")
    p.add_argument("--order", type=int, default=4)
    p.set_defaults(fn=cmd_lm_build)

    p = sub.add_parser("lm-prune", help="prune a big LM into a small LM")
    p.add_argument("lm")
    p.add_argument("output")
    p.add_argument("--prune-threshold", type=float, default=1e-5)
    p.add_argument("--max-order", type=int, default=3)
    p.set_defaults(fn=cmd_lm_prune)

    p = sub.add_parser("graph-build", help="compile LM (and lexicon) into a WFST")
    p.add_argument("--lm", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--backoff-mode", choices=["eps", "#0"], default="eps")
    p.add_argument("--negate", action="store_true")
    p.add_argument("--isymbols")
    p.add_argument("--osymbols")
    p.add_argument("output")
    p.set_defaults(fn=cmd_graph_build)

    p = sub.add_parser("synth", help="synthesize an acoustic cost matrix")
    p.add_argument("phones", help="file with a space-separated phone sequence")
    p.add_argument("phone_symbols")
    p.add_argument("output")
    p.add_argument("--frames-per-phone", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=float, default=ac.DEFAULT_MARGIN)
    p.add_argument("--utt-id", default="utt0")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("decode", help="decode one utterance")
    p.add_argument("--strategy", choices=["onthefly", "static", "rescore"],
                   default="onthefly")
    p.add_argument("--graph", required=True)
    p.add_argument("--g3neg")
    p.add_argument("--g4")
    p.add_argument("--acoustic", required=True)
    p.add_argument("--isymbols")
    p.add_argument("--osymbols")
    p.add_argument("--lattice", help="write the output lattice here")
    p.add_argument("--beam", type=float, default=16.0)
    p.add_argument("--max-active", type=int, default=7000)
    p.add_argument("--lattice-beam", type=float, default=8.0)
    p.add_argument("--acoustic-scale", type=float, default=1.0)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("score", help="score hypothesis file against references")
    p.add_argument("hyp")
    p.add_argument("--ref", required=True)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("report", help="run the three-strategy comparison")
    p.add_argument("--config", help="JSON file of PipelineConfig overrides")
    p.add_argument("--strategy", action="append",
                   choices=["onthefly", "static", "rescore"])
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ngram.NGramError, gb.GraphError, ac.AcousticError,
            dec.DecodeError, metrics.MetricsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
