"""Block-wise per-layer retention decay schedules.

The model's L layers are split into a shallow block [1, L_s], three middle
sub-blocks (L_s, L_m1), [L_m1, L_m2), [L_m2, L_l), and a late block [L_l, L].
The shallow block keeps ratio r_s = min(1, lambda*R); each middle sub-block
steps down by an exponentially widening decrement delta*e^(i-1); the late
block keeps nothing. delta is fixed so the layer-mean retention equals R:

    L*R = r_s*(L_l - 1) + delta*C,
    C   = L_s + 1 + e*L_m1 + e^2*L_m2 - (1 + e + e^2)*L_l   (always < 0).

With r_s = lambda*R (no clipping) this gives the closed form
delta = (L - L_l*lambda + lambda)*R / C. When lambda*R > 1 the shallow ratio
clips at 1 and delta is re-solved numerically against the same identity.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .core import InfeasibleScheduleError, ModelConfig

_E = math.e
_DECAY = (1.0, 1.0 + _E, 1.0 + _E + _E * _E)  # cumulative step multipliers

BLOCK_LABELS = ("shallow", "middle1", "middle2", "middle3", "late")


@dataclasses.dataclass(frozen=True)
class SchedulePlan:
    """Per-layer retention ratios plus the constants that produced them."""

    per_layer_trr: np.ndarray  # length L, index 0 is layer 1
    delta: float
    r_s: float
    r_m1: float
    r_m2: float
    r_m3: float
    boundaries: tuple[int, int, int, int]
    drop_layers: tuple[int, ...]  # 1-based layers where the ratio strictly falls

    def __post_init__(self):
        arr = np.array(self.per_layer_trr, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "per_layer_trr", arr)

    def trr_at(self, layer: int) -> float:
        """Retention ratio at a 1-based layer index."""
        if not 1 <= layer <= self.per_layer_trr.shape[0]:
            raise ValueError(
                f"layer {layer} outside [1, {self.per_layer_trr.shape[0]}]"
            )
        return float(self.per_layer_trr[layer - 1])

    @property
    def layers(self) -> int:
        return int(self.per_layer_trr.shape[0])


def block_constant(config: ModelConfig) -> float:
    ls, lm1, lm2, ll = config.boundaries
    return ls + 1 + _E * lm1 + _E * _E * lm2 - (1 + _E + _E * _E) * ll


def block_of(layer: int, config: ModelConfig) -> str:
    """Block label of a 1-based layer index."""
    if not 1 <= layer <= config.layers:
        raise ValueError(f"layer {layer} outside [1, {config.layers}]")
    ls, lm1, lm2, ll = config.boundaries
    if layer <= ls:
        return "shallow"
    if layer < lm1:
        return "middle1"
    if layer < lm2:
        return "middle2"
    if layer < ll:
        return "middle3"
    return "late"


def _sub_block_trrs(r_s: float, delta: float) -> tuple[float, float, float]:
    return (r_s - delta * _DECAY[0], r_s - delta * _DECAY[1], r_s - delta * _DECAY[2])


def _validate(r_s: float, delta: float, label: str) -> None:
    if delta < 0.0:
        raise InfeasibleScheduleError(
            f"{label}: delta={delta:.6g} < 0; the shallow ratio cannot cover "
            f"the budget (scale factor too small for this late boundary)"
        )
    r_m3 = r_s - delta * _DECAY[2]
    if r_m3 < 0.0:
        raise InfeasibleScheduleError(
            f"{label}: deepest middle sub-block ratio r_m3={r_m3:.6g} < 0"
        )


def _layer_vector(config: ModelConfig, r_s: float, delta: float) -> np.ndarray:
    """Per-layer ratios for given (r_s, delta), built from layer indices."""
    ls, lm1, lm2, ll = config.boundaries
    r_m1, r_m2, r_m3 = _sub_block_trrs(r_s, delta)
    layer = np.arange(1, config.layers + 1)
    return np.select(
        [layer <= ls, layer < lm1, layer < lm2, layer < ll],
        [r_s, r_m1, r_m2, r_m3],
        default=0.0,
    )


def solve_delta(
    config: ModelConfig, r: float, lambda_: float
) -> tuple[float, float]:
    """Closed-form decay scale for the budget identity; returns (delta, C).

    Falls back to the numeric root when lambda*r clips the shallow ratio
    at 1, since the closed form assumes r_s = lambda*r. Raises
    InfeasibleScheduleError when delta < 0 or the deepest middle ratio
    would go negative.
    """
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if lambda_ < 1.0:
        raise ValueError(f"lambda must be >= 1, got {lambda_}")
    c = block_constant(config)
    if r == 0.0:
        return 0.0, c
    r_s = lambda_ * r
    if r_s > 1.0:
        delta = delta_oracle(config, r, lambda_)
    else:
        ll = config.boundaries[3]
        delta = (config.layers - ll * lambda_ + lambda_) * r / c
        _validate(r_s, delta, "closed form")
    return delta, c


def delta_oracle(config: ModelConfig, r: float, lambda_: float) -> float:
    """Bisection root of the budget identity, independent of the closed form.

    Searches delta in [0, r_s] until the layer-mean of the explicitly built
    per-layer vector matches r to 1e-12. Exists so the algebra above can be
    cross-checked; also the solver of record when the shallow ratio clips.
    """
    if not (0.0 <= r <= 1.0):
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if lambda_ < 1.0:
        raise ValueError(f"lambda must be >= 1, got {lambda_}")
    if r == 0.0:
        return 0.0
    L = config.layers
    r_s = min(1.0, lambda_ * r)

    def mean_gap(delta: float) -> float:
        return float(_layer_vector(config, r_s, delta).mean()) - r

    lo, hi = 0.0, r_s
    g_lo = mean_gap(lo)
    if g_lo < -1e-12:
        raise InfeasibleScheduleError(
            f"oracle: mean ratio {g_lo + r:.6g} at delta=0 already below "
            f"target {r:.6g}; no root in [0, r_s]"
        )
    if mean_gap(hi) > 1e-12:
        raise InfeasibleScheduleError(
            "oracle: no root in [0, r_s]; target unreachable even at "
            "maximal decay"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = mean_gap(mid)
        if abs(g) <= 1e-12:
            lo = hi = mid
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14:
            break
    delta = 0.5 * (lo + hi)
    _validate(r_s, delta, "oracle")
    return delta


def build_schedule(config: ModelConfig, r: float, lambda_: float) -> SchedulePlan:
    """Full per-layer plan for one retention target."""
    delta, _ = solve_delta(config, r, lambda_)
    r_s = min(1.0, lambda_ * r)
    r_m1, r_m2, r_m3 = _sub_block_trrs(r_s, delta)
    per_layer = _layer_vector(config, r_s, delta)
    ls, lm1, lm2, ll = config.boundaries
    # boundaries may coincide when a sub-block is empty, hence the set
    drops = tuple(
        l for l in sorted({ls + 1, lm1, lm2, ll})
        if per_layer[l - 1] < per_layer[l - 2]
    )
    return SchedulePlan(
        per_layer_trr=per_layer,
        delta=delta,
        r_s=r_s,
        r_m1=r_m1,
        r_m2=r_m2,
        r_m3=r_m3,
        boundaries=config.boundaries,
        drop_layers=drops,
    )


@dataclasses.dataclass(frozen=True)
class AblationSchedule:
    """Step schedule used to probe layer importance: one modality (or both)
    is fully kept before remove_at and fully dropped from it onward."""

    trr_v: np.ndarray
    trr_a: np.ndarray
    remove_at: int
    mode: str

    def __post_init__(self):
        for name in ("trr_v", "trr_a"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def ablation_schedule(
    config: ModelConfig, remove_at: int, mode: str
) -> AblationSchedule:
    if mode not in ("visual", "audio", "both"):
        raise ValueError(f"mode must be visual, audio, or both, got {mode!r}")
    if not (1 <= remove_at <= config.layers):
        raise ValueError(
            f"remove_at must lie in [1, {config.layers}], got {remove_at}"
        )
    keep = np.ones(config.layers, dtype=np.float64)
    cut = keep.copy()
    cut[remove_at - 1 :] = 0.0
    trr_v = cut if mode in ("visual", "both") else keep
    trr_a = cut if mode in ("audio", "both") else keep
    return AblationSchedule(trr_v=trr_v, trr_a=trr_a, remove_at=remove_at, mode=mode)
