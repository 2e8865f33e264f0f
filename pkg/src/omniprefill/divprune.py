"""Pre-LLM diversity pruning.

Each (window, modality) group is thinned independently by greedy max-min
selection over saliency-weighted cosine distances. A candidate's value is its
own saliency times its plain cosine distance to the nearest already-selected
token, so salient tokens look farther away and survive more often. Text
tokens are never touched here.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import (
    AUDIO,
    MODALITY_NAMES,
    TEXT,
    VISUAL,
    RetentionSpec,
    TokenStream,
    WindowLayout,
    validate_stream,
)


@dataclasses.dataclass(frozen=True)
class SelectionResult:
    """Outcome of one pre-LLM pruning pass.

    kept:  original positions of every surviving token (text included),
           ascending.
    rows:  the same survivors as storage-row indices of the input stream.
    kept_v, kept_a: per-window surviving counts per modality.
    notes: diagnostics (currently zero-norm embedding reports).
    """

    kept: np.ndarray
    rows: np.ndarray
    kept_v: np.ndarray
    kept_a: np.ndarray
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("kept", "rows", "kept_v", "kept_a"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _cosine_distances(embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise 1-cos distances; zero-norm rows sit at distance 1 from
    everything (cosine undefined there)."""
    emb = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    unit = emb / safe[:, None]
    dist = 1.0 - unit @ unit.T
    np.clip(dist, 0.0, 2.0, out=dist)
    dist[zero, :] = 1.0
    dist[:, zero] = 1.0
    return dist, zero


def greedy_maxmin(embeddings: np.ndarray, weights: np.ndarray, k: int) -> np.ndarray:
    """Pick k of n tokens greedily maximizing the weighted min distance.

    Seed: the token whose (own weight) * (distance to nearest neighbor) is
    largest. Every later step picks the candidate maximizing
    weight[c] * min over selected of dist(c, s). All ties break toward the
    lowest index, which is the earliest original position.
    Returns ascending indices.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"weights must have length {n}, got shape {w.shape}")
    if np.any(w < 0):
        raise ValueError("saliency weights must be non-negative")
    if not (1 <= k <= n):
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if k == n:
        return np.arange(n, dtype=np.int64)

    dist, _ = _cosine_distances(emb)
    offdiag = dist + np.where(np.eye(n, dtype=bool), np.inf, 0.0)
    nearest = offdiag.min(axis=1)
    seed = int(np.argmax(w * nearest))

    chosen = [seed]
    mind = dist[:, seed].copy()
    value = np.empty(n, dtype=np.float64)
    for _ in range(k - 1):
        np.multiply(w, mind, out=value)
        value[chosen] = -np.inf
        pick = int(np.argmax(value))
        chosen.append(pick)
        np.minimum(mind, dist[:, pick], out=mind)
    return np.array(sorted(chosen), dtype=np.int64)


def keep_count(ratio: float, group_size: int) -> int:
    """Per-group keep count: floor(ratio*n), at least 1 when the group is
    non-empty and the ratio positive."""
    if group_size < 1 or ratio <= 0.0:
        return 0
    return max(1, min(group_size, math.floor(ratio * group_size)))


def win_div_prune(
    stream: TokenStream,
    layout: WindowLayout,
    saliency,
    spec: RetentionSpec,
) -> SelectionResult:
    """Run greedy_maxmin in every (window, modality) group.

    saliency is a mapping (window, modality) -> weight array, or None for
    uniform weights everywhere (which reduces this to plain diversity
    selection). Pre-LLM ratios are min(1, lambda*r_m) per modality.
    """
    problems = validate_stream(stream, layout)
    if problems:
        raise ValueError(f"invalid stream/layout: {problems[0]}")
    r_pre = {
        VISUAL: min(1.0, spec.lambda_ * spec.r_v),
        AUDIO: min(1.0, spec.lambda_ * spec.r_a),
    }

    keep_rows = [stream.rows_of(TEXT)]
    kept_counts = {VISUAL: np.zeros(layout.T, dtype=np.int64),
                   AUDIO: np.zeros(layout.T, dtype=np.int64)}
    notes: list[str] = []
    for m in (VISUAL, AUDIO):
        modality_rows = stream.rows_of(m)
        wins = stream.window_id[modality_rows]
        for t in range(layout.T):
            group = modality_rows[wins == t]
            n_t = group.shape[0]
            k = keep_count(r_pre[m], n_t)
            if k == 0:
                continue
            weights = None if saliency is None else saliency.get((t, m))
            if weights is None:
                weights = np.ones(n_t, dtype=np.float64)
            emb = stream.embeddings[group]
            zero = np.linalg.norm(np.asarray(emb, dtype=np.float64), axis=1) == 0.0
            if zero.any():
                notes.append(
                    f"{int(zero.sum())} zero-norm embeddings in window {t} "
                    f"{MODALITY_NAMES[m]}; treated as distance 1 to everything"
                )
            local = greedy_maxmin(emb, weights, k)
            keep_rows.append(group[local])
            kept_counts[m][t] = k

    rows = np.sort(np.concatenate(keep_rows))
    return SelectionResult(
        kept=stream.position[rows],
        rows=rows,
        kept_v=kept_counts[VISUAL],
        kept_a=kept_counts[AUDIO],
        notes=tuple(notes),
    )
