"""Synthetic acoustic front end: frame cost matrices in place of a DNN."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Floor applied to posteriors so numeric underflow never produces +inf
# costs; the tropical zero stays reserved for structural impossibility.
_POSTERIOR_FLOOR = 1e-10

DEFAULT_MARGIN = 12.0


class AcousticError(ValueError):
    pass


@dataclass(frozen=True)
class AcousticMatrix:
    """Per-frame negative-log-likelihood costs for emitting symbols 1..S.

    costs has shape (T, S); column j holds symbol id j+1 (epsilon has no
    acoustic cost and no column).
    """

    utt_id: str
    costs: np.ndarray

    def __post_init__(self):
        if self.costs.ndim != 2:
            raise AcousticError("costs must be a T x S matrix")
        if not np.all(np.isfinite(self.costs)):
            raise AcousticError("acoustic costs must be finite")

    @property
    def num_frames(self) -> int:
        return self.costs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.costs.shape[1]

    def padded_row(self, frame: int) -> list[float]:
        """Frame costs indexable directly by symbol id (index 0 unused)."""
        if not 0 <= frame < self.num_frames:
            raise AcousticError(f"frame {frame} out of range")
        return [math.inf] + self.costs[frame].tolist()


@dataclass(frozen=True)
class PriorVector:
    priors: np.ndarray

    def __post_init__(self):
        p = self.priors
        if p.ndim != 1 or np.any(p <= 0):
            raise AcousticError("priors must be a positive vector")
        if abs(float(p.sum()) - 1.0) > 1e-6:
            raise AcousticError("priors must sum to 1")


def posterior_to_loglik(posteriors: np.ndarray, priors: PriorVector,
                        utt_id: str = "") -> AcousticMatrix:
    """Pseudo-likelihood costs: -(ln posterior - ln prior).

    The frame-evidence term is independent of the hypothesis and dropped.
    """
    post = np.asarray(posteriors, dtype=float)
    if post.ndim != 2:
        raise AcousticError("posteriors must be a T x S matrix")
    if post.shape[1] != priors.priors.shape[0]:
        raise AcousticError("posterior columns must match the prior length")
    sums = post.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-4):
        raise AcousticError("posterior rows must sum to 1")
    post = np.clip(post, _POSTERIOR_FLOOR, None)
    costs = -(np.log(post) - np.log(priors.priors)[None, :])
    return AcousticMatrix(utt_id, costs)


def synthesize_utterance(phone_sequence: Sequence[int], num_symbols: int,
                         frames_per_phone: int = 1, noise: float = 0.0,
                         seed: int = 0, margin: float = DEFAULT_MARGIN,
                         utt_id: str = "") -> AcousticMatrix:
    """Deterministic cost matrix whose zero-cost symbols spell the phones.

    Every frame gives the scheduled phone cost 0 and all other symbols a
    positive margin, perturbed by seeded Gaussian noise when noise > 0.
    """
    phones = list(phone_sequence)
    if not phones:
        raise AcousticError("empty phone sequence")
    if frames_per_phone < 1:
        raise AcousticError("frames_per_phone must be >= 1")
    for p in phones:
        if not 1 <= p <= num_symbols:
            raise AcousticError(f"phone id {p} outside 1..{num_symbols}")
    if noise < 0:
        raise AcousticError("noise must be non-negative")
    t = len(phones) * frames_per_phone
    rng = np.random.default_rng(seed)
    costs = np.full((t, num_symbols), margin)
    if noise > 0:
        costs = costs + noise * rng.standard_normal((t, num_symbols))
    for i, p in enumerate(phones):
        for k in range(frames_per_phone):
            costs[i * frames_per_phone + k, p - 1] = 0.0
    return AcousticMatrix(utt_id, costs)


def acoustic_cost(m: AcousticMatrix, frame: int, label: int,
                  scale: float = 1.0) -> float:
    """Scaled cost of one emitting symbol at one frame."""
    if label < 1 or label > m.num_symbols:
        raise AcousticError(f"label {label} outside 1..{m.num_symbols} "
                            "(epsilon carries no acoustic cost)")
    if not 0 <= frame < m.num_frames:
        raise AcousticError(f"frame {frame} out of range")
    if scale <= 0:
        raise AcousticError("scale must be positive")
    return scale * float(m.costs[frame, label - 1])


def write_acoustic_text(m: AcousticMatrix) -> str:
    header = f"utt {m.utt_id} frames {m.num_frames} symbols {m.num_symbols}"
    rows = [" ".join(f"{c:.6f}" for c in row) for row in m.costs]
    return header + "\n" + "\n".join(rows) + "\n"


def read_acoustic_text(text: str) -> AcousticMatrix:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise AcousticError("empty acoustic file")
    parts = lines[0].split()
    if len(parts) != 6 or parts[0] != "utt" or parts[2] != "frames" or parts[4] != "symbols":
        raise AcousticError(f"bad acoustic header {lines[0]!r}")
    utt_id, t, s = parts[1], int(parts[3]), int(parts[5])
    if len(lines) - 1 != t:
        raise AcousticError(f"header declares {t} frames but {len(lines) - 1} rows follow")
    costs = np.array([[float(x) for x in l.split()] for l in lines[1:]])
    if costs.shape != (t, s):
        raise AcousticError("row width does not match the symbol count")
    return AcousticMatrix(utt_id, costs)
