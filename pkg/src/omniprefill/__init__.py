"""Stage-adaptive token selection for omni-modal LLM prefill.

Three stages shrink an interleaved visual/audio/text token sequence while it
moves through a mock L-layer prefill: saliency-weighted diversity pruning
before the first layer, relevance-guided budget re-allocation wherever the
block-wise retention schedule steps down, and full non-text removal at the
late boundary. A seeded synthetic generator and an analytic FLOPs model make
the whole thing testable on a laptop.
"""

from .allocator import BudgetPlan, allocate
from .core import (
    AUDIO,
    MIN_PRACTICAL_RV,
    TEXT,
    VISUAL,
    EngineError,
    InfeasibleBudgetError,
    InfeasibleRetentionError,
    InfeasibleScheduleError,
    ModelConfig,
    RetentionSpec,
    TokenStream,
    WindowLayout,
    audio_intact_rv,
    overall_ratio,
    validate_stream,
)
from .cost import FLOPS_FORMULA, CostReport, layer_flops, trace_flops
from .divprune import SelectionResult, greedy_maxmin, keep_count, win_div_prune
from .io import (
    ConfigError,
    ContainerFormatError,
    load_model_config,
    load_retention_spec,
    load_synth_spec,
    read_ots,
    read_ots_file,
    write_ots,
    write_ots_file,
)
from .pipeline import (
    ContainerOracle,
    PrefillTrace,
    SynthSpec,
    SyntheticOracle,
    UniformOracle,
    mean_retention,
    retention_slack,
    run_pipeline,
    synth_generate,
)
from .relevance import (
    RelevanceScores,
    mean_received_attention,
    query_scores,
    window_relevance,
)
from .schedule import (
    AblationSchedule,
    SchedulePlan,
    ablation_schedule,
    block_constant,
    build_schedule,
    delta_oracle,
    solve_delta,
)
from .selector import LayerSelection, apply_budget, late_removal, select_topk

__version__ = "0.1.0"

__all__ = [
    "AUDIO",
    "AblationSchedule",
    "BudgetPlan",
    "ConfigError",
    "ContainerFormatError",
    "ContainerOracle",
    "CostReport",
    "EngineError",
    "FLOPS_FORMULA",
    "InfeasibleBudgetError",
    "InfeasibleRetentionError",
    "InfeasibleScheduleError",
    "LayerSelection",
    "MIN_PRACTICAL_RV",
    "ModelConfig",
    "PrefillTrace",
    "RelevanceScores",
    "RetentionSpec",
    "SchedulePlan",
    "SelectionResult",
    "SynthSpec",
    "SyntheticOracle",
    "TEXT",
    "TokenStream",
    "UniformOracle",
    "VISUAL",
    "WindowLayout",
    "ablation_schedule",
    "allocate",
    "apply_budget",
    "audio_intact_rv",
    "block_constant",
    "build_schedule",
    "delta_oracle",
    "greedy_maxmin",
    "keep_count",
    "late_removal",
    "layer_flops",
    "load_model_config",
    "load_retention_spec",
    "load_synth_spec",
    "mean_received_attention",
    "mean_retention",
    "overall_ratio",
    "query_scores",
    "read_ots",
    "read_ots_file",
    "retention_slack",
    "run_pipeline",
    "select_topk",
    "solve_delta",
    "synth_generate",
    "trace_flops",
    "validate_stream",
    "win_div_prune",
    "window_relevance",
    "write_ots",
    "write_ots_file",
]
