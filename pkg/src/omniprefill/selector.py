"""Applying budgets inside windows, and the final non-text removal.

Within each (window, modality) group the budgeted number of tokens survives,
chosen by descending query-relevance score with ties to the earlier position.
Selection never reorders anything; text rows pass through untouched. Once
cross-modal fusion is done, late_removal drops every remaining non-text row.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .allocator import BudgetPlan
from .core import AUDIO, TEXT, VISUAL, InfeasibleBudgetError, TokenStream


@dataclasses.dataclass(frozen=True)
class LayerSelection:
    """What one drop layer kept: surviving non-text positions plus per-window
    drop counts."""

    layer: int
    kept: np.ndarray  # original positions of surviving non-text tokens
    dropped_v: np.ndarray
    dropped_a: np.ndarray

    def __post_init__(self):
        for name in ("kept", "dropped_v", "dropped_a"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def select_topk(scores: np.ndarray, budget: int) -> np.ndarray:
    """Indices of the budget highest scores, ascending; ties prefer the
    earlier index."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if budget > n:
        raise InfeasibleBudgetError(f"budget {budget} exceeds group size {n}")
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if budget == n:
        return np.arange(n, dtype=np.int64)
    # stable sort on negated scores keeps the earlier index first among ties
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:budget]).astype(np.int64)


def apply_budget(
    stream: TokenStream,
    plan: BudgetPlan,
    scores_v: np.ndarray,
    scores_a: np.ndarray,
    layer: int = 0,
) -> tuple[TokenStream, LayerSelection]:
    """Per-window per-modality top-k according to a plan built for this
    stream's current layout."""
    scores = {
        VISUAL: np.asarray(scores_v, dtype=np.float64),
        AUDIO: np.asarray(scores_a, dtype=np.float64),
    }
    budgets = {VISUAL: plan.b_v, AUDIO: plan.b_a}
    keep_rows = [stream.rows_of(TEXT)]
    dropped = {VISUAL: np.zeros(plan.T, dtype=np.int64),
               AUDIO: np.zeros(plan.T, dtype=np.int64)}
    for m in (VISUAL, AUDIO):
        rows = stream.rows_of(m)
        if scores[m].shape[0] != rows.shape[0]:
            raise ValueError(
                f"scores length {scores[m].shape[0]} does not match the "
                f"{rows.shape[0]} current tokens of that modality"
            )
        wins = stream.window_id[rows]
        if rows.size and int(wins.max()) >= plan.T:
            raise ValueError("stream window ids exceed the plan's window count")
        for t in range(plan.T):
            in_window = wins == t
            group = rows[in_window]
            budget = int(budgets[m][t])
            if budget > group.shape[0]:
                raise InfeasibleBudgetError(
                    f"plan asks for {budget} of {group.shape[0]} tokens in "
                    f"window {t}"
                )
            local = select_topk(scores[m][in_window], budget)
            keep_rows.append(group[local])
            dropped[m][t] = group.shape[0] - budget

    rows = np.sort(np.concatenate(keep_rows))
    new_stream = stream.take(rows)
    kept_nontext = new_stream.position[new_stream.modality != TEXT]
    return new_stream, LayerSelection(
        layer=layer,
        kept=kept_nontext,
        dropped_v=dropped[VISUAL],
        dropped_a=dropped[AUDIO],
    )


def late_removal(stream: TokenStream) -> TokenStream:
    """Drop every non-text row; text order is preserved. Idempotent."""
    return stream.take(stream.rows_of(TEXT))
