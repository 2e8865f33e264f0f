"""Shared data model: token streams, window layouts, model configuration,
and the retention-ratio arithmetic used everywhere else.

A stream holds already-embedded tokens in original sequence order. Visual and
audio tokens belong to temporal windows; text tokens belong to no window.
All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import dataclasses

import numpy as np

VISUAL = 0
AUDIO = 1
TEXT = 2
MODALITY_NAMES = {VISUAL: "visual", AUDIO: "audio", TEXT: "text"}
NO_WINDOW = -1

# Reporting threshold for audio-intact budgeting: a visual retention ratio
# below this is treated as unusable (reported "--") even when non-negative,
# because the entire reduction would fall on a sliver of the visual tokens.
MIN_PRACTICAL_RV = 0.05


class EngineError(Exception):
    """Base class for domain errors raised by this package."""


class InfeasibleRetentionError(EngineError):
    """A requested retention ratio cannot be met by any selection."""


class InfeasibleScheduleError(EngineError):
    """No valid decay schedule exists for the requested configuration."""


class InfeasibleBudgetError(EngineError):
    """A token budget exceeds the available capacity."""


def _frozen(a, dtype):
    arr = np.asarray(a, dtype=dtype)
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclasses.dataclass(frozen=True)
class TokenStream:
    """Embedded tokens in original sequence order.

    embeddings: (N, d) real matrix.
    modality:   (N,) labels in {VISUAL, AUDIO, TEXT}.
    window_id:  (N,) window index for visual/audio rows, NO_WINDOW for text.
    position:   (N,) original sequence index, strictly increasing.
    """

    embeddings: np.ndarray
    modality: np.ndarray
    window_id: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        emb = _frozen(self.embeddings, np.float32)
        mod = _frozen(self.modality, np.int64)
        win = _frozen(self.window_id, np.int64)
        pos = _frozen(self.position, np.int64)
        if emb.ndim != 2:
            raise ValueError("embeddings must be a 2-d matrix")
        n = emb.shape[0]
        if not (mod.shape == win.shape == pos.shape == (n,)):
            raise ValueError("modality/window_id/position must have one entry per row")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "modality", mod)
        object.__setattr__(self, "window_id", win)
        object.__setattr__(self, "position", pos)

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    def count(self, modality: int, window: int | None = None) -> int:
        mask = self.modality == modality
        if window is not None:
            mask &= self.window_id == window
        return int(np.count_nonzero(mask))

    @property
    def n_visual(self) -> int:
        return self.count(VISUAL)

    @property
    def n_audio(self) -> int:
        return self.count(AUDIO)

    @property
    def n_text(self) -> int:
        return self.count(TEXT)

    def rows_of(self, modality: int, window: int | None = None) -> np.ndarray:
        """Row indices (storage order) of one modality, optionally one window."""
        mask = self.modality == modality
        if window is not None:
            mask &= self.window_id == window
        return np.flatnonzero(mask)

    def take(self, rows) -> "TokenStream":
        """Row subset. Rows must be ascending so original order survives."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size > 1 and np.any(np.diff(rows) <= 0):
            raise ValueError("row subset must be strictly ascending")
        return TokenStream(
            embeddings=self.embeddings[rows],
            modality=self.modality[rows],
            window_id=self.window_id[rows],
            position=self.position[rows],
        )


@dataclasses.dataclass(frozen=True)
class WindowLayout:
    """Per-window visual/audio token counts. May be ragged across windows."""

    n_v: np.ndarray
    n_a: np.ndarray

    def __post_init__(self):
        nv = _frozen(self.n_v, np.int64)
        na = _frozen(self.n_a, np.int64)
        if nv.ndim != 1 or na.ndim != 1 or nv.shape != na.shape:
            raise ValueError("n_v and n_a must be 1-d and the same length")
        if nv.shape[0] < 1:
            raise ValueError("at least one window is required")
        if np.any(nv < 0) or np.any(na < 0):
            raise ValueError("window counts must be non-negative")
        object.__setattr__(self, "n_v", nv)
        object.__setattr__(self, "n_a", na)

    @property
    def T(self) -> int:
        return self.n_v.shape[0]

    @property
    def total_visual(self) -> int:
        return int(self.n_v.sum())

    @property
    def total_audio(self) -> int:
        return int(self.n_a.sum())

    @staticmethod
    def from_stream(stream: TokenStream, T: int | None = None) -> "WindowLayout":
        """Current per-window counts of a stream.

        T defaults to max(window_id)+1; pass it explicitly when trailing
        windows may have been emptied by selection.
        """
        nontext = stream.window_id >= 0
        if T is None:
            T = int(stream.window_id[nontext].max()) + 1 if nontext.any() else 1
        n_v = np.bincount(
            stream.window_id[(stream.modality == VISUAL)], minlength=T
        )
        n_a = np.bincount(
            stream.window_id[(stream.modality == AUDIO)], minlength=T
        )
        return WindowLayout(n_v=n_v, n_a=n_a)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Mock backbone geometry: layer count, widths, and block boundaries.

    boundaries = (L_s, L_m1, L_m2, L_l), 1-based layer indices delimiting the
    shallow block [1, L_s], the middle sub-blocks, and the late block [L_l, L].
    """

    layers: int
    d_model: int
    d_ff: int
    n_heads: int
    boundaries: tuple[int, int, int, int]

    def __post_init__(self):
        L = self.layers
        ls, lm1, lm2, ll = self.boundaries
        if not (1 <= ls < lm1 <= lm2 < ll <= L):
            raise ValueError(
                f"boundaries must satisfy 1 <= L_s < L_m1 <= L_m2 < L_l <= L, "
                f"got ({ls},{lm1},{lm2},{ll}) with L={L}"
            )
        if min(self.d_model, self.d_ff, self.n_heads) <= 0:
            raise ValueError("widths and head count must be positive")
        object.__setattr__(self, "boundaries", (int(ls), int(lm1), int(lm2), int(ll)))


@dataclasses.dataclass(frozen=True)
class RetentionSpec:
    """Retention targets: per-modality ratios, the pre-LLM scale factor, and
    the window-relevance softmax temperature.

    r is the overall non-text retention ratio; when omitted it is derived from
    (r_v, r_a) and a layout via overall_ratio.
    """

    r_v: float
    r_a: float
    lambda_: float
    tau: float
    r: float | None = None

    def __post_init__(self):
        for name, value in (("r_v", self.r_v), ("r_a", self.r_a)):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.r is not None and not (0.0 <= self.r <= 1.0):
            raise ValueError(f"r must lie in [0, 1], got {self.r}")
        if self.lambda_ < 1.0:
            raise ValueError(f"lambda_ must be >= 1, got {self.lambda_}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def overall(self, layout: WindowLayout) -> float:
        if self.r is not None:
            return self.r
        return overall_ratio(self.r_v, self.r_a, layout)


def validate_stream(stream: TokenStream, layout: WindowLayout) -> list[str]:
    """Check every stream/layout invariant; violations come back as strings.

    An empty list means pass. Violations are data, not faults: nothing raises.
    """
    problems: list[str] = []
    pos = stream.position
    if pos.size > 1 and np.any(np.diff(pos) <= 0):
        first = int(np.flatnonzero(np.diff(pos) <= 0)[0])
        problems.append(f"position not strictly increasing at row {first + 1}")

    bad_label = ~np.isin(stream.modality, (VISUAL, AUDIO, TEXT))
    if bad_label.any():
        problems.append(
            f"unknown modality label at row {int(np.flatnonzero(bad_label)[0])}"
        )

    is_text = stream.modality == TEXT
    text_with_window = is_text & (stream.window_id != NO_WINDOW)
    if text_with_window.any():
        problems.append(
            f"text row {int(np.flatnonzero(text_with_window)[0])} carries a window_id"
        )
    nontext_bad_window = (~is_text) & (
        (stream.window_id < 0) | (stream.window_id >= layout.T)
    )
    if nontext_bad_window.any():
        problems.append(
            f"non-text row {int(np.flatnonzero(nontext_bad_window)[0])} has "
            f"window_id outside [0, {layout.T})"
        )

    for m in (VISUAL, AUDIO):
        wins = stream.window_id[stream.modality == m]
        if wins.size > 1 and np.any(np.diff(wins) < 0):
            problems.append(
                f"window_id decreases along {MODALITY_NAMES[m]} rows"
            )

    for m, declared in ((VISUAL, layout.n_v), (AUDIO, layout.n_a)):
        sel = (stream.modality == m) & (stream.window_id >= 0) & (
            stream.window_id < layout.T
        )
        actual = np.bincount(stream.window_id[sel], minlength=layout.T)
        if int(actual.sum()) != int(declared.sum()):
            problems.append(
                f"layout total for {MODALITY_NAMES[m]} is {int(declared.sum())} "
                f"but stream has {int(actual.sum())} rows"
            )
        elif not np.array_equal(actual, declared):
            t = int(np.flatnonzero(actual != declared)[0])
            problems.append(
                f"window {t} holds {int(actual[t])} {MODALITY_NAMES[m]} rows, "
                f"layout declares {int(declared[t])}"
            )
    return problems


def overall_ratio(r_v: float, r_a: float, layout: WindowLayout) -> float:
    """Overall non-text retention implied by per-modality ratios:
    (r_v*N_v + r_a*N_a) / (N_v + N_a)."""
    n_v, n_a = layout.total_visual, layout.total_audio
    if n_v + n_a == 0:
        raise EngineError("overall_ratio needs at least one non-text token")
    return (r_v * n_v + r_a * n_a) / (n_v + n_a)


def audio_intact_rv(
    r: float, layout: WindowLayout, min_practical: float = 0.0
) -> float:
    """Visual retention ratio that meets overall ratio r with audio untouched.

    Solves r_v from r*(N_v+N_a) = r_v*N_v + 1.0*N_a. Raises
    InfeasibleRetentionError when the solution is negative (audio alone
    overshoots the budget) or falls below min_practical; pass
    min_practical=MIN_PRACTICAL_RV to reproduce the reporting convention
    that marks such cells "--".
    """
    n_v, n_a = layout.total_visual, layout.total_audio
    if n_v == 0:
        raise EngineError("audio_intact_rv needs visual tokens")
    r_v = (r * (n_v + n_a) - n_a) / n_v
    if r_v < 0.0:
        raise InfeasibleRetentionError(
            f"audio alone exceeds the budget: r_v would be {r_v:.6f}"
        )
    if r_v < min_practical:
        raise InfeasibleRetentionError(
            f"r_v={r_v:.6f} is below the practical floor {min_practical:g}"
        )
    return r_v
