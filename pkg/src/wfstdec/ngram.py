"""ARPA back-off n-gram models: parsing, estimation, scoring, pruning.

Probabilities are stored as log10 values exactly as in the ARPA format;
conversion to negative natural-log costs happens when a model is compiled
into an acceptor (see graph.py).

The scorer implements the standard back-off recursion

    P(w | h) = p(h, w)                    if (h, w) is listed,
             = bow(h) * P(w | h[1:])      otherwise,

with bow(h) = 1 for contexts carrying no explicit back-off weight.  This
recursion is the analytic ground truth that both the compiled acceptors
and the decoder's relay matching must reproduce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

BOS = "<s>"
EOS = "</s>"

# log10 stand-in for "probability zero" on the sentence-begin unigram.
_BOS_LOGPROB = -99.0


class NGramError(ValueError):
    pass


class OOVError(NGramError):
    def __init__(self, token: str):
        super().__init__(f"out-of-vocabulary token {token!r}")
        self.token = token


@dataclass(frozen=True)
class NGramEntry:
    logprob: float
    backoff: Optional[float] = None


class NGramModel:
    """Back-off n-gram model addressed by token tuples."""

    def __init__(self, order: int):
        if order < 1:
            raise NGramError(f"order must be >= 1, got {order}")
        self.order = order
        # _grams[n] maps an n-tuple of tokens to its entry, n = 1..order.
        self._grams: list[dict[tuple[str, ...], NGramEntry]] = [
            {} for _ in range(order + 1)
        ]
        self.vocabulary: set[str] = set()

    def add_entry(self, gram: Sequence[str], logprob: float,
                  backoff: Optional[float] = None) -> None:
        gram = tuple(gram)
        n = len(gram)
        if not 1 <= n <= self.order:
            raise NGramError(f"entry order {n} outside 1..{self.order}")
        if backoff is not None and n == self.order:
            raise NGramError(f"back-off weight on highest-order entry {gram}")
        self._grams[n][gram] = NGramEntry(logprob, backoff)
        self.vocabulary.update(gram)

    def entry(self, gram: Sequence[str]) -> Optional[NGramEntry]:
        gram = tuple(gram)
        n = len(gram)
        if not 1 <= n <= self.order:
            return None
        return self._grams[n].get(gram)

    def ngrams(self, n: int) -> Iterable[tuple[tuple[str, ...], NGramEntry]]:
        return self._grams[n].items()

    def num_ngrams(self, n: int) -> int:
        return len(self._grams[n])

    def events(self) -> list[str]:
        """Tokens the model can predict: the vocabulary minus <s>."""
        return sorted(self.vocabulary - {BOS})

    def contexts(self) -> set[tuple[str, ...]]:
        """All context tuples: the empty context, every entry prefix, and
        every entry with an explicit back-off weight."""
        out = {()}
        for n in range(2, self.order + 1):
            for gram in self._grams[n]:
                out.add(gram[:-1])
        for n in range(1, self.order):
            for gram, e in self._grams[n].items():
                if e.backoff is not None:
                    out.add(gram)
        return out

    def score_word(self, context: Sequence[str], word: str) -> float:
        """log10 P(word | context) via back-off recursion."""
        if word not in self.vocabulary:
            raise OOVError(word)
        h = tuple(context)
        if self.order > 1:
            h = h[-(self.order - 1):]
        else:
            h = ()
        total = 0.0
        while True:
            e = self.entry(h + (word,))
            if e is not None:
                return total + e.logprob
            if not h:
                raise OOVError(word)
            ce = self.entry(h)
            if ce is not None and ce.backoff is not None:
                total += ce.backoff
            h = h[1:]

    def validate(self) -> None:
        """Check back-off chain closure; raise listing the first offender."""
        for n in range(2, self.order + 1):
            for gram in self._grams[n]:
                if gram[:-1] not in self._grams[n - 1]:
                    raise NGramError(
                        "missing back-off chain: context "
                        f"{' '.join(gram[:-1])!r} of {' '.join(gram)!r} is not listed"
                    )


def score_sentence(model: NGramModel, tokens: Sequence[str]) -> float:
    """log10 probability of a sentence of interior tokens.

    Sentence markers are implicit: the context starts at <s> and the </s>
    probability is included at the end.
    """
    ctx: tuple[str, ...] = (BOS,) if model.order > 1 else ()
    total = 0.0
    for tok in tokens:
        total += model.score_word(ctx, tok)
        if model.order > 1:
            ctx = (ctx + (tok,))[-(model.order - 1):]
    total += model.score_word(ctx, EOS)
    return total


# -- ARPA serialization ----------------------------------------------------

def parse_arpa(text: str) -> NGramModel:
    """Parse standard ARPA text into a model; validates section counts."""
    lines = text.splitlines()
    counts: dict[int, int] = {}
    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        i += 1
    if i == len(lines):
        raise NGramError("missing \\data\\ header")
    i += 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("ngram "):
            decl = line[len("ngram "):]
            n_str, cnt_str = decl.split("=")
            counts[int(n_str)] = int(cnt_str)
            i += 1
        else:
            break
    if not counts:
        raise NGramError("no ngram count declarations")
    order = max(counts)
    model = NGramModel(order)
    seen: dict[int, int] = {n: 0 for n in counts}
    current_n = None
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "\\end\\":
            current_n = None
            break
        m = line
        if m.startswith("\\") and m.endswith("-grams:"):
            current_n = int(m[1:-len("-grams:")])
            if current_n not in counts:
                raise NGramError(f"section \\{current_n}-grams: not declared in \\data\\")
            continue
        if current_n is None:
            raise NGramError(f"unexpected line outside a section: {line!r}")
        parts = line.split()
        if len(parts) == current_n + 1:
            logprob, toks, backoff = float(parts[0]), parts[1:], None
        elif len(parts) == current_n + 2:
            logprob, toks, backoff = float(parts[0]), parts[1:-1], float(parts[-1])
        else:
            raise NGramError(f"bad {current_n}-gram line: {line!r}")
        model.add_entry(toks, logprob, backoff)
        seen[current_n] += 1
    for n, declared in counts.items():
        if seen[n] != declared:
            raise NGramError(
                f"\\data\\ declares {declared} {n}-grams but section lists {seen[n]}"
            )
    model.validate()
    return model


def write_arpa(model: NGramModel) -> str:
    out = ["\\data\\"]
    for n in range(1, model.order + 1):
        out.append(f"ngram {n}={model.num_ngrams(n)}")
    for n in range(1, model.order + 1):
        out.append("")
        out.append(f"\\{n}-grams:")
        for gram in sorted(model._grams[n]):
            e = model._grams[n][gram]
            line = f"{e.logprob:.6f}\t{' '.join(gram)}"
            if e.backoff is not None:
                line += f"\t{e.backoff:.6f}"
            out.append(line)
    out.append("")
    out.append("\\end\\")
    return "\n".join(out) + "\n"


# -- estimation ------------------------------------------------------------

def estimate_witten_bell(corpus: Sequence[Sequence[str]], order: int) -> NGramModel:
    """Estimate a back-off model with Witten-Bell smoothing.

    Seen n-grams get interpolated Witten-Bell probabilities; back-off
    weights are derived from the leftover mass so every context's
    distribution over the event space sums to one exactly.
    """
    if not corpus:
        raise NGramError("empty corpus")
    if order < 1:
        raise NGramError(f"order must be >= 1, got {order}")
    counts: list[dict[tuple[str, ...], int]] = [{} for _ in range(order + 1)]
    for sent in corpus:
        toks = [BOS] + list(sent) + [EOS]
        for n in range(1, order + 1):
            start = 1 if n == 1 else 0  # <s> is never a predicted event
            for j in range(start, len(toks) - n + 1):
                gram = tuple(toks[j:j + n])
                counts[n][gram] = counts[n].get(gram, 0) + 1

    events = sorted({g[0] for g in counts[1]})
    v = len(events)
    model = NGramModel(order)

    # Unigrams: interpolate with a uniform base over the event space.
    n1 = sum(counts[1].values())
    t1 = len(counts[1])
    for w in events:
        p = (counts[1][(w,)] + t1 / v) / (n1 + t1)
        model.add_entry((w,), math.log10(p))
    if order > 1:
        model.add_entry((BOS,), _BOS_LOGPROB)

    # Higher orders, bottom-up; lower-order entries are already in place.
    for n in range(2, order + 1):
        ctx_total: dict[tuple[str, ...], int] = {}
        ctx_types: dict[tuple[str, ...], int] = {}
        for gram, c in counts[n].items():
            h = gram[:-1]
            ctx_total[h] = ctx_total.get(h, 0) + c
            ctx_types[h] = ctx_types.get(h, 0) + 1
        for gram, c in sorted(counts[n].items()):
            h, w = gram[:-1], gram[-1]
            lower = model.entry(gram[1:])
            p_low = 10.0 ** lower.logprob
            t = ctx_types[h]
            p = (c + t * p_low) / (ctx_total[h] + t)
            model.add_entry(gram, math.log10(p))

    _assign_backoffs(model)
    model.validate()
    return model


def _assign_backoffs(model: NGramModel) -> None:
    """Set back-off weights on every entry that serves as a context.

    bow(h) = (1 - sum of listed P(w|h)) / (1 - sum of P(w|h[1:]) over the
    same words), which makes each context distribution sum to one given
    that the next-lower order does.
    """
    for n in range(2, model.order + 1):
        by_ctx: dict[tuple[str, ...], list[str]] = {}
        for gram in model._grams[n]:
            by_ctx.setdefault(gram[:-1], []).append(gram[-1])
        for h, words in by_ctx.items():
            num = 1.0
            den = 1.0
            for w in words:
                num -= 10.0 ** model.entry(h + (w,)).logprob
                den -= 10.0 ** model.score_word(h[1:], w)
            if den <= 1e-12 or num <= 1e-12:
                bow = 1.0 if num <= 1e-12 else 1e-12
            else:
                bow = num / den
            old = model.entry(h)
            if old is None:
                raise NGramError(f"context {h} has no entry")
            model._grams[len(h)][h] = NGramEntry(old.logprob, math.log10(bow))


# -- pruning ---------------------------------------------------------------

def prune_to_small_lm(model: NGramModel, threshold: float = 1e-5,
                      max_order: Optional[int] = None) -> NGramModel:
    """Drop high orders and low-probability entries; renormalize back-offs.

    Unigrams are never pruned so back-off scoring stays total.  An entry
    that is a context of a kept higher-order entry is kept regardless of
    its probability, preserving back-off chain closure.
    """
    if max_order is None:
        max_order = model.order
    if not 1 <= max_order <= model.order:
        raise NGramError(f"max_order {max_order} outside 1..{model.order}")
    if not 0.0 < threshold < 1.0:
        raise NGramError(f"threshold {threshold} outside (0, 1)")
    kept: list[set[tuple[str, ...]]] = [set() for _ in range(max_order + 1)]
    kept[1] = set(model._grams[1])
    for n in range(2, max_order + 1):
        kept[n] = {g for g, e in model.ngrams(n) if 10.0 ** e.logprob >= threshold}
    for n in range(max_order, 2, -1):
        for gram in kept[n]:
            kept[n - 1].add(gram[:-1])

    out = NGramModel(max_order)
    for n in range(1, max_order + 1):
        for gram in sorted(kept[n]):
            out.add_entry(gram, model._grams[n][gram].logprob)
    _assign_backoffs(out)
    out.validate()
    return out


def conditional_mass(model: NGramModel, context: Sequence[str]) -> float:
    """Sum of P(w | context) over the full event space (test helper)."""
    return sum(10.0 ** model.score_word(context, w) for w in model.events())
