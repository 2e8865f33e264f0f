"""End-to-end prefill simulation and the seeded synthetic stream generator.

A run walks an L-layer mock prefill: diversity pruning before layer 1, budget
re-allocation at each layer where the retention schedule steps down, and full
non-text removal at the late boundary. The mock model supplies attention
signals only; no hidden states are computed because every selection decision
consumes attention and embeddings alone.

Synthetic streams come from a counter-based generator (Philox, 4x64) keyed by
(seed, purpose, layer, window, modality), so any value can be regenerated
independently of call order and identical seeds give bit-identical streams
and oracle answers. Chosen windows can be given elevated query affinity
(planted_gain added to their tokens' query logits in both modalities) to test
whether the allocator finds them.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .allocator import BudgetPlan, allocate
from .core import (
    AUDIO,
    NO_WINDOW,
    TEXT,
    VISUAL,
    ModelConfig,
    RetentionSpec,
    TokenStream,
    WindowLayout,
)
from .divprune import SelectionResult, win_div_prune
from .relevance import mean_received_attention, window_relevance
from .schedule import SchedulePlan, build_schedule
from .selector import LayerSelection, apply_budget, late_removal

_PURPOSE_EMBED = 1
_PURPOSE_STAGE1 = 2
_PURPOSE_QUERY = 3
_MASK64 = (1 << 64) - 1


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Recipe for a reproducible synthetic omni-modal stream.

    Windows are laid out chronologically, visual rows then audio rows per
    window, with n_q text tokens at the end. planted_windows receive
    planted_gain on their query logits (background logits are standard
    normal, so the gain is in sigma units).
    """

    seed: int
    T: int
    d: int
    n_v: int
    n_a: int
    n_q: int
    planted_windows: tuple[int, ...] = ()
    planted_gain: float = 0.0

    def __post_init__(self):
        if min(self.T, self.d, self.n_q) < 1 or min(self.n_v, self.n_a) < 0:
            raise ValueError("sizes must be positive (n_v, n_a may be zero)")
        planted = tuple(sorted(int(t) for t in set(self.planted_windows)))
        if any(t < 0 or t >= self.T for t in planted):
            raise ValueError(f"planted windows must lie in [0, {self.T})")
        if self.planted_gain < 0:
            raise ValueError("planted_gain must be non-negative")
        object.__setattr__(self, "planted_windows", planted)

    def provenance(self) -> dict:
        return {
            "algorithm": "philox4x64",
            "seed": int(self.seed),
            "keying": "key = (seed mod 2^64) + ((purpose | layer<<8 | "
                      "window<<24 | modality<<40) << 64)",
            "purposes": {"embeddings": _PURPOSE_EMBED,
                         "stage1_attention": _PURPOSE_STAGE1,
                         "query_logits": _PURPOSE_QUERY},
            "planted_windows": list(self.planted_windows),
            "planted_gain": float(self.planted_gain),
        }


def _keyed_rng(seed: int, purpose: int, layer: int = 0, window: int = 0,
               modality: int = 0) -> np.random.Generator:
    context = purpose | (layer << 8) | (window << 24) | (modality << 40)
    return np.random.Generator(
        np.random.Philox(key=(seed & _MASK64) + (context << 64))
    )


class SyntheticOracle:
    """Attention oracle for a generated stream.

    stage1_attention answers with the full original group's row-stochastic
    matrix. Query logits are drawn once per (layer, modality) over the
    original token count and indexed by the survivors, so earlier selections
    never perturb later scores.
    """

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self._logit_cache: dict[tuple[int, int], np.ndarray] = {}

    def stage1_attention(self, window: int, modality: int, n: int) -> np.ndarray:
        expected = self.spec.n_v if modality == VISUAL else self.spec.n_a
        if n != expected:
            raise ValueError(
                f"stage-1 attention requested for {n} tokens, group has {expected}"
            )
        if n == 0:
            return np.zeros((0, 0))
        rng = _keyed_rng(self.spec.seed, _PURPOSE_STAGE1, window=window,
                         modality=modality)
        logits = rng.standard_normal((n, n))
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def _query_logits(self, layer: int, modality: int) -> np.ndarray:
        key = (layer, modality)
        if key not in self._logit_cache:
            per_window = self.spec.n_v if modality == VISUAL else self.spec.n_a
            total = self.spec.T * per_window
            rng = _keyed_rng(self.spec.seed, _PURPOSE_QUERY, layer=layer,
                             modality=modality)
            logits = rng.standard_normal(total)
            if self.spec.planted_windows and self.spec.planted_gain > 0:
                window_of = np.repeat(np.arange(self.spec.T), per_window)
                planted = np.isin(window_of, self.spec.planted_windows)
                logits = logits + self.spec.planted_gain * planted
            self._logit_cache[key] = logits
        return self._logit_cache[key]

    def saliency(self, window: int, modality: int, n: int) -> np.ndarray:
        """Mean received attention inside one original group."""
        return mean_received_attention(self.stage1_attention(window, modality, n))

    def query_probs(self, layer: int, modality: int,
                    ordinals: np.ndarray) -> np.ndarray:
        """Softmax of the surviving tokens' logits; ordinals index the
        modality's original order."""
        ordinals = np.asarray(ordinals, dtype=np.int64)
        if ordinals.size == 0:
            return np.zeros(0)
        logits = self._query_logits(layer, modality)[ordinals]
        z = np.exp(logits - logits.max())
        return z / z.sum()


class UniformOracle:
    """Fallback when no attention source exists: every signal is flat."""

    def saliency(self, window, modality, n):
        return None

    def query_probs(self, layer, modality, ordinals):
        n = np.asarray(ordinals).shape[0]
        return np.full(n, 1.0 / n) if n else np.zeros(0)


class ContainerOracle:
    """Oracle backed by the optional sections of a stream container.

    Expects saliency vectors under "saliency/w{t}/{visual|audio}" and
    full-length query logits under "query_logits/layer{l}/{visual|audio}".
    Missing entries fall back to uniform signals (None).
    """

    def __init__(self, sections: dict[str, np.ndarray], T: int):
        self.sections = sections or {}
        self.T = T

    @staticmethod
    def _name(modality: int) -> str:
        return "visual" if modality == VISUAL else "audio"

    def saliency(self, window, modality, n):
        vec = self.sections.get(f"saliency/w{window}/{self._name(modality)}")
        if vec is None:
            return None
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.shape[0] != n:
            raise ValueError(
                f"saliency section for window {window} has {vec.shape[0]} "
                f"entries, group holds {n}"
            )
        return vec

    def query_probs(self, layer, modality, ordinals):
        logits = self.sections.get(
            f"query_logits/layer{layer}/{self._name(modality)}"
        )
        if logits is None:
            return None
        ordinals = np.asarray(ordinals, dtype=np.int64)
        if ordinals.size == 0:
            return np.zeros(0)
        logits = np.asarray(logits, dtype=np.float64).reshape(-1)
        if ordinals.max() >= logits.shape[0]:
            raise ValueError(
                f"query logits for layer {layer} cover {logits.shape[0]} "
                f"tokens, ordinal {int(ordinals.max())} requested"
            )
        chosen = logits[ordinals]
        z = np.exp(chosen - chosen.max())
        return z / z.sum()


def synth_generate(spec: SynthSpec) -> tuple[TokenStream, SyntheticOracle]:
    """Deterministic stream + oracle from a spec."""
    per_window = spec.n_v + spec.n_a
    n = spec.T * per_window + spec.n_q
    rng = _keyed_rng(spec.seed, _PURPOSE_EMBED)
    embeddings = rng.standard_normal((n, spec.d), dtype=np.float32)

    modality = np.empty(n, dtype=np.int64)
    window_id = np.empty(n, dtype=np.int64)
    row = 0
    for t in range(spec.T):
        modality[row : row + spec.n_v] = VISUAL
        window_id[row : row + spec.n_v] = t
        row += spec.n_v
        modality[row : row + spec.n_a] = AUDIO
        window_id[row : row + spec.n_a] = t
        row += spec.n_a
    modality[row:] = TEXT
    window_id[row:] = NO_WINDOW

    stream = TokenStream(
        embeddings=embeddings,
        modality=modality,
        window_id=window_id,
        position=np.arange(n, dtype=np.int64),
    )
    return stream, SyntheticOracle(spec)


@dataclasses.dataclass(frozen=True)
class PrefillTrace:
    """Everything a run decided, layer by layer.

    seq_len[i] is the input length of 1-based layer i+1, recorded after any
    selection at that layer; it is non-increasing and equals n_q from the
    late boundary on. kept_v / kept_a mirror it per modality.
    """

    seq_len: np.ndarray
    kept_v: np.ndarray
    kept_a: np.ndarray
    kept_text: np.ndarray
    stage1: SelectionResult
    selections: tuple[LayerSelection, ...]
    plans: tuple[tuple[int, BudgetPlan], ...]
    schedule_v: SchedulePlan
    schedule_a: SchedulePlan
    config: ModelConfig
    retention: RetentionSpec
    n_original: tuple[int, int, int]  # (N_v, N_a, N_q)
    T: int

    def __post_init__(self):
        for name in ("seq_len", "kept_v", "kept_a", "kept_text"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def layers(self) -> int:
        return int(self.seq_len.shape[0])

    def seq_at(self, layer: int) -> int:
        return int(self.seq_len[layer - 1])


def _uniform_probs(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n) if n else np.zeros(0)


def run_pipeline(
    source,
    config: ModelConfig,
    retention: RetentionSpec,
    oracle=None,
) -> tuple[TokenStream, PrefillTrace]:
    """Run all three stages over a stream or a SynthSpec.

    The oracle supplies stage-1 attention and per-layer query scores; pass
    None for uniform signals (a SynthSpec brings its own). Returns the final
    text-only stream and the full trace.
    """
    if isinstance(source, SynthSpec):
        stream, oracle = synth_generate(source)
        T = source.T
    else:
        stream = source
        nontext = stream.window_id >= 0
        T = int(stream.window_id[nontext].max()) + 1 if nontext.any() else 1
    if oracle is None:
        oracle = UniformOracle()

    layout0 = WindowLayout.from_stream(stream, T)
    n_v0, n_a0, n_q = layout0.total_visual, layout0.total_audio, stream.n_text
    sched_v = build_schedule(config, retention.r_v, retention.lambda_)
    sched_a = build_schedule(config, retention.r_a, retention.lambda_)
    ls, lm1, lm2, ll = config.boundaries
    alloc_layers = sorted(
        (set(sched_v.drop_layers) | set(sched_a.drop_layers)) - {ll}
    )

    # position -> index within its modality, in original order; query logits
    # are drawn over this order so selection cannot shift them
    ord_map = np.full(int(stream.position.max()) + 1, -1, dtype=np.int64)
    for m in (VISUAL, AUDIO):
        rows = stream.rows_of(m)
        ord_map[stream.position[rows]] = np.arange(rows.size)

    saliency = {}
    for m, counts in ((VISUAL, layout0.n_v), (AUDIO, layout0.n_a)):
        for t in range(T):
            n_t = int(counts[t])
            if n_t == 0:
                continue
            vec = oracle.saliency(t, m, n_t)
            if vec is not None:
                saliency[(t, m)] = vec
    stage1 = win_div_prune(stream, layout0, saliency, retention)
    stream = stream.take(stage1.rows)

    L = config.layers
    seq_len = np.zeros(L, dtype=np.int64)
    kept_v = np.zeros(L, dtype=np.int64)
    kept_a = np.zeros(L, dtype=np.int64)
    kept_text = np.zeros(L, dtype=np.int64)
    selections: list[LayerSelection] = []
    plans: list[tuple[int, BudgetPlan]] = []

    for layer in range(1, L + 1):
        if layer == ll:
            layout_now = WindowLayout.from_stream(stream, T)
            stream = late_removal(stream)
            selections.append(
                LayerSelection(
                    layer=layer,
                    kept=np.zeros(0, dtype=np.int64),
                    dropped_v=layout_now.n_v,
                    dropped_a=layout_now.n_a,
                )
            )
        elif layer in alloc_layers:
            layout_now = WindowLayout.from_stream(stream, T)
            ords_v = ord_map[stream.position[stream.rows_of(VISUAL)]]
            ords_a = ord_map[stream.position[stream.rows_of(AUDIO)]]
            scores_v = oracle.query_probs(layer, VISUAL, ords_v)
            scores_a = oracle.query_probs(layer, AUDIO, ords_a)
            if scores_v is None:
                scores_v = _uniform_probs(ords_v.size)
            if scores_a is None:
                scores_a = _uniform_probs(ords_a.size)
            rel = window_relevance(scores_v, scores_a, layout_now, retention.tau)
            r_v_l = sched_v.trr_at(layer)
            r_a_l = sched_a.trr_at(layer)
            # Per-window keep floors at earlier stages can leave fewer
            # survivors than this layer's nominal budget (small windows lose
            # a large fraction to flooring). Scale both totals down together
            # so the target fits; the common factor keeps every intra-window
            # split ratio unchanged.
            totals = (n_v0, n_a0)
            capacity = layout_now.total_visual + layout_now.total_audio
            nominal = r_v_l * n_v0 + r_a_l * n_a0
            if round(nominal) > capacity:
                shrink = capacity / nominal
                totals = (n_v0 * shrink, n_a0 * shrink)
            plan = allocate(rel, r_v_l, r_a_l, layout_now, totals=totals)
            stream, sel = apply_budget(stream, plan, scores_v, scores_a,
                                       layer=layer)
            selections.append(sel)
            plans.append((layer, plan))
        seq_len[layer - 1] = stream.n
        kept_v[layer - 1] = stream.n_visual
        kept_a[layer - 1] = stream.n_audio
        kept_text[layer - 1] = stream.n_text

    trace = PrefillTrace(
        seq_len=seq_len,
        kept_v=kept_v,
        kept_a=kept_a,
        kept_text=kept_text,
        stage1=stage1,
        selections=tuple(selections),
        plans=tuple(plans),
        schedule_v=sched_v,
        schedule_a=sched_a,
        config=config,
        retention=retention,
        n_original=(n_v0, n_a0, n_q),
        T=T,
    )
    return stream, trace


def mean_retention(trace: PrefillTrace) -> dict[str, float]:
    """Layer-mean realized retention per modality.

    Tracks the configured (r_v, r_a) up to integerization: each layer's kept
    count deviates from schedule*N_m by at most about 2T tokens under
    near-uniform relevance (window flooring plus cross-modal drift), so the
    layer mean stays within 2*T*(L_l-1)/(L*N_m). A modality absent from the
    input reports nan.
    """
    L = trace.layers
    out = {}
    for name, kept, total in (
        ("visual", trace.kept_v, trace.n_original[0]),
        ("audio", trace.kept_a, trace.n_original[1]),
    ):
        out[name] = float(kept.sum() / (L * total)) if total else math.nan
    return out


def retention_slack(trace: PrefillTrace) -> dict[str, float]:
    """The declared tolerance for mean_retention, per modality."""
    ll = trace.config.boundaries[3]
    L = trace.layers
    out = {}
    for name, total in (("visual", trace.n_original[0]),
                        ("audio", trace.n_original[1])):
        out[name] = 2.0 * trace.T * (ll - 1) / (L * total) if total else math.inf
    return out
