"""Weighted finite-state transducers over the tropical semiring.

Weights are plain floats holding costs in the negative-log (natural log)
domain.  The semiring zero is +inf and annihilates under ``times``; the
semiring one is 0.0.  NaN weights are rejected at arc/final insertion.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from typing import Iterable, NamedTuple, Optional

ZERO = math.inf
ONE = 0.0

EPSILON = 0
EPSILON_SYM = "<eps>"


class FstError(ValueError):
    pass


class ParseError(FstError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def weight_plus(a: float, b: float) -> float:
    """Tropical collect: min(a, b)."""
    return a if a <= b else b


def weight_times(a: float, b: float) -> float:
    """Tropical extend: a + b, with +inf annihilating."""
    if a == ZERO or b == ZERO:
        return ZERO
    return a + b


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    nextstate: int


class SymbolTable:
    """Bijective symbol <-> id map with id 0 reserved for epsilon."""

    def __init__(self):
        self._sym2id = {EPSILON_SYM: EPSILON}
        self._id2sym = {EPSILON: EPSILON_SYM}

    def __len__(self) -> int:
        return len(self._sym2id)

    def __contains__(self, sym: str) -> bool:
        return sym in self._sym2id

    def add(self, sym: str) -> int:
        sid = self._sym2id.get(sym)
        if sid is None:
            sid = len(self._sym2id)
            self._sym2id[sym] = sid
            self._id2sym[sid] = sym
        return sid

    def id_of(self, sym: str) -> int:
        try:
            return self._sym2id[sym]
        except KeyError:
            raise FstError(f"unknown symbol {sym!r}") from None

    def sym_of(self, sid: int) -> str:
        try:
            return self._id2sym[sid]
        except KeyError:
            raise FstError(f"unknown symbol id {sid}") from None

    def has_id(self, sid: int) -> bool:
        return sid in self._id2sym

    def symbols(self):
        return iter(self._sym2id.items())

    def write_text(self) -> str:
        lines = [f"{s}\t{i}" for s, i in sorted(self._sym2id.items(), key=lambda kv: kv[1])]
        return "\n".join(lines) + "\n"

    @classmethod
    def read_text(cls, text: str) -> "SymbolTable":
        table = cls()
        entries = []
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(ln, f"bad symbol line {raw!r}")
            sym, sid = parts[0], int(parts[1])
            entries.append((ln, sym, sid))
        entries.sort(key=lambda e: e[2])
        for ln, sym, sid in entries:
            if sid == EPSILON:
                if sym != EPSILON_SYM:
                    raise ParseError(ln, f"id 0 must be {EPSILON_SYM!r}, got {sym!r}")
                continue
            got = table.add(sym)
            if got != sid:
                raise ParseError(ln, f"non-contiguous id {sid} for {sym!r}")
        return table


class Fst:
    """Mutable WFST builder; treated as immutable once handed to consumers."""

    def __init__(self, isyms: Optional[SymbolTable] = None, osyms: Optional[SymbolTable] = None):
        self._arcs: list[list[Arc]] = []
        self.initial: int = -1
        self.finals: dict[int, float] = {}
        self.isyms = isyms
        self.osyms = osyms
        self._sorted = False
        self._ilabels: list[Optional[list[int]]] = []

    # -- structure ---------------------------------------------------------

    def add_state(self) -> int:
        self._arcs.append([])
        self._ilabels.append(None)
        return len(self._arcs) - 1

    def add_states(self, n: int) -> None:
        for _ in range(n):
            self.add_state()

    @property
    def num_states(self) -> int:
        return len(self._arcs)

    @property
    def num_arcs(self) -> int:
        return sum(len(a) for a in self._arcs)

    def states(self) -> Iterable[int]:
        return range(len(self._arcs))

    def arcs(self, state: int) -> list[Arc]:
        self._check_state(state)
        return self._arcs[state]

    def add_arc(self, state: int, arc: Arc) -> None:
        self._check_state(state)
        self._check_state(arc.nextstate)
        if math.isnan(arc.weight):
            raise FstError("NaN arc weight")
        self._arcs[state].append(arc)
        self._sorted = False
        self._ilabels[state] = None
        # Consumers memoize expansions on the object; mutation voids them.
        d = self.__dict__
        d.pop("_decoder_cache", None)
        d.pop("_static_triples", None)
        d.pop("_relay_caches", None)

    def set_initial(self, state: int) -> None:
        self._check_state(state)
        self.initial = state

    def set_final(self, state: int, weight: float = ONE) -> None:
        self._check_state(state)
        if math.isnan(weight):
            raise FstError("NaN final weight")
        self.finals[state] = weight

    def final(self, state: int) -> float:
        return self.finals.get(state, ZERO)

    def is_final(self, state: int) -> bool:
        return state in self.finals

    def _check_state(self, state: int) -> None:
        if not 0 <= state < len(self._arcs):
            raise FstError(f"invalid state id {state}")

    # -- matching ----------------------------------------------------------

    def arc_sort_input(self) -> None:
        """Sort every arc list by (ilabel, weight); required by find_arc."""
        for s, arcs in enumerate(self._arcs):
            arcs.sort(key=lambda a: (a.ilabel, a.weight))
            self._ilabels[s] = [a.ilabel for a in arcs]
        self._sorted = True

    @property
    def input_sorted(self) -> bool:
        return self._sorted


def find_arc(fst: Fst, state: int, ilabel: int) -> Optional[Arc]:
    """Lowest-weight arc with the given input label, or None.

    The arc list must be input-sorted; ties on ilabel resolve to the
    minimum-weight arc because sorting is by (ilabel, weight).
    """
    fst._check_state(state)
    if not fst._sorted:
        raise FstError("find_arc requires input-sorted arcs (call arc_sort_input)")
    labels = fst._ilabels[state]
    if labels is None:
        labels = [a.ilabel for a in fst._arcs[state]]
        fst._ilabels[state] = labels
    i = bisect_left(labels, ilabel)
    if i < len(labels) and labels[i] == ilabel:
        return fst._arcs[state][i]
    return None


# -- serialization ---------------------------------------------------------

def write_text_fst(fst: Fst, state_comments: Optional[dict[int, str]] = None) -> str:
    """Arc lines "src dst ilabel olabel weight" (tab separated), then final lines.

    The initial state's arcs are written first so a round trip restores it.
    """
    if fst.initial < 0:
        raise FstError("fst has no initial state")
    order = [fst.initial] + [s for s in fst.states() if s != fst.initial]
    out = []
    if state_comments:
        for s in order:
            if s in state_comments:
                out.append(f"# state {s} {state_comments[s]}")
    for s in order:
        for a in fst.arcs(s):
            out.append(f"{s}\t{a.nextstate}\t{a.ilabel}\t{a.olabel}\t{a.weight:.12g}")
    for s in order:
        if fst.is_final(s):
            out.append(f"{s}\t{fst.final(s):.12g}")
    return "\n".join(out) + "\n"


def read_text_fst(text: str, isyms: Optional[SymbolTable] = None,
                  osyms: Optional[SymbolTable] = None) -> Fst:
    """Parse the text format written by write_text_fst."""
    arcs: list[tuple[int, int, Arc]] = []  # (lineno, src, arc)
    finals: list[tuple[int, int, float]] = []
    initial = -1
    max_state = -1
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        try:
            if len(parts) in (4, 5):
                src, dst = int(parts[0]), int(parts[1])
                il, ol = int(parts[2]), int(parts[3])
                w = float(parts[4]) if len(parts) == 5 else 0.0
            elif len(parts) == 2:
                src, w = int(parts[0]), float(parts[1])
                dst = il = ol = None
            else:
                raise ValueError(f"expected 2, 4 or 5 fields, got {len(parts)}")
        except ValueError as exc:
            raise ParseError(ln, f"malformed line {raw!r}: {exc}") from None
        if dst is None:
            finals.append((ln, src, w))
            max_state = max(max_state, src)
            continue
        if isyms is not None and not isyms.has_id(il):
            raise ParseError(ln, f"unknown input symbol id {il}")
        if osyms is not None and not osyms.has_id(ol):
            raise ParseError(ln, f"unknown output symbol id {ol}")
        if math.isnan(w):
            raise ParseError(ln, "NaN weight")
        if initial < 0:
            initial = src
        arcs.append((ln, src, Arc(il, ol, w, dst)))
        max_state = max(max_state, src, dst)
    if initial < 0:
        if not finals:
            raise ParseError(0, "empty fst body")
        initial = finals[0][1]
    known = {src for _, src, _ in arcs} | {s for _, s, _ in finals}
    for ln, _, arc in arcs:
        if arc.nextstate not in known:
            raise ParseError(ln, f"dangling nextstate {arc.nextstate}")
    fst = Fst(isyms, osyms)
    fst.add_states(max_state + 1)
    for _, src, arc in arcs:
        fst.add_arc(src, arc)
    for _, s, w in finals:
        fst.set_final(s, w)
    fst.set_initial(initial)
    return fst


# -- trimming --------------------------------------------------------------

def connect(fst: Fst) -> Fst:
    """Remove states not on a successful initial -> final path."""
    n = fst.num_states
    if fst.initial < 0 or n == 0:
        return Fst(fst.isyms, fst.osyms)
    fwd = [False] * n
    stack = [fst.initial]
    fwd[fst.initial] = True
    while stack:
        s = stack.pop()
        for a in fst.arcs(s):
            if not fwd[a.nextstate]:
                fwd[a.nextstate] = True
                stack.append(a.nextstate)
    radj: list[list[int]] = [[] for _ in range(n)]
    for s in fst.states():
        for a in fst.arcs(s):
            radj[a.nextstate].append(s)
    bwd = [False] * n
    stack = [s for s in fst.finals if fwd[s]]
    for s in stack:
        bwd[s] = True
    while stack:
        s = stack.pop()
        for p in radj[s]:
            if not bwd[p]:
                bwd[p] = True
                stack.append(p)
    keep = [s for s in fst.states() if fwd[s] and bwd[s]]
    out = Fst(fst.isyms, fst.osyms)
    if not keep or not bwd[fst.initial]:
        return out
    remap = {}
    for s in keep:
        remap[s] = out.add_state()
    for s in keep:
        for a in fst.arcs(s):
            if a.nextstate in remap:
                out.add_arc(remap[s], Arc(a.ilabel, a.olabel, a.weight, remap[a.nextstate]))
    for s, w in fst.finals.items():
        if s in remap:
            out.set_final(remap[s], w)
    out.set_initial(remap[fst.initial])
    if fst.input_sorted:
        out.arc_sort_input()
    return out
