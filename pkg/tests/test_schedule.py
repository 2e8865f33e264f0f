import math

import numpy as np
import pytest

from omniprefill.core import InfeasibleScheduleError, ModelConfig
from omniprefill.schedule import (
    ablation_schedule,
    block_constant,
    block_of,
    build_schedule,
    delta_oracle,
    solve_delta,
)

QWEN25 = ModelConfig(layers=28, d_model=3584, d_ff=18944, n_heads=28,
                     boundaries=(16, 19, 21, 24))
QWEN3 = ModelConfig(layers=48, d_model=2048, d_ff=6144, n_heads=16,
                    boundaries=(27, 32, 36, 40))

# Reference values, frozen after cross-checking the closed form against the
# bisection solver at 1e-12.
C_28 = -42.75857743908719
DELTA_28 = 0.029467771742288738
DELTA_28_AUDIO = 0.06384683877495893
DELTA_48 = 0.036491461876971394


class TestSolveDelta:
    def test_reference_constants(self):
        delta, c = solve_delta(QWEN25, 0.3, 1.4)
        assert c == pytest.approx(C_28, abs=1e-9)
        assert delta == pytest.approx(DELTA_28, abs=1e-12)

    def test_block_constant_formula(self):
        ls, lm1, lm2, ll = QWEN25.boundaries
        e = math.e
        want = ls + 1 + e * lm1 + e * e * lm2 - (1 + e + e * e) * ll
        assert block_constant(QWEN25) == pytest.approx(want, abs=1e-12)

    def test_audio_ratio(self):
        delta, _ = solve_delta(QWEN25, 0.65, 1.4)
        assert delta == pytest.approx(DELTA_28_AUDIO, abs=1e-12)

    def test_deeper_backbone(self):
        delta, _ = solve_delta(QWEN3, 0.35, 1.4)
        assert delta == pytest.approx(DELTA_48, abs=1e-12)

    def test_zero_budget(self):
        delta, c = solve_delta(QWEN25, 0.0, 1.4)
        assert delta == 0.0
        assert c == pytest.approx(C_28, abs=1e-9)

    def test_delta_linear_in_ratio(self):
        d1, _ = solve_delta(QWEN25, 0.2, 1.4)
        d2, _ = solve_delta(QWEN25, 0.4, 1.4)
        assert d2 / d1 == pytest.approx(2.0, abs=1e-12)

    def test_lambda_one_is_infeasible_here(self):
        # delta >= 0 requires lambda >= L/(L_l - 1) = 28/23
        with pytest.raises(InfeasibleScheduleError):
            solve_delta(QWEN25, 0.3, 1.0)

    def test_feasibility_edge_in_lambda(self):
        edge = 28 / 23
        delta, _ = solve_delta(QWEN25, 0.3, edge + 1e-9)
        assert delta >= 0.0
        with pytest.raises(InfeasibleScheduleError):
            solve_delta(QWEN25, 0.3, edge - 1e-6)

    def test_deep_subblock_floor(self):
        # large lambda pushes r_m3 below zero: hard error, never clamped
        with pytest.raises(InfeasibleScheduleError):
            solve_delta(QWEN25, 0.3, 1.5)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            solve_delta(QWEN25, -0.1, 1.4)
        with pytest.raises(ValueError):
            solve_delta(QWEN25, 1.1, 1.4)
        with pytest.raises(ValueError):
            solve_delta(QWEN25, 0.3, 0.99)


class TestDeltaOracle:
    def test_agrees_with_closed_form(self):
        delta, _ = solve_delta(QWEN25, 0.3, 1.4)
        assert delta_oracle(QWEN25, 0.3, 1.4) == pytest.approx(delta, abs=1e-9)

    def test_agreement_grid(self):
        for r in (0.05, 0.15, 0.3, 0.45, 0.6):
            for lam in (1.25, 1.3, 1.35, 1.4):
                try:
                    closed, _ = solve_delta(QWEN25, r, lam)
                except InfeasibleScheduleError:
                    with pytest.raises(InfeasibleScheduleError):
                        delta_oracle(QWEN25, r, lam)
                    continue
                assert delta_oracle(QWEN25, r, lam) == pytest.approx(
                    closed, abs=1e-9)

    def test_agreement_near_deep_floor(self):
        # r_m3 crosses zero around lambda=1.462 at R=0.3; both solvers must
        # classify each side identically once safely off the float boundary
        lo, hi = 1.4, 1.5
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            try:
                solve_delta(QWEN25, 0.3, mid)
                lo = mid
            except InfeasibleScheduleError:
                hi = mid
        closed, _ = solve_delta(QWEN25, 0.3, lo)
        assert delta_oracle(QWEN25, 0.3, lo) == pytest.approx(closed, abs=1e-9)
        with pytest.raises(InfeasibleScheduleError):
            delta_oracle(QWEN25, 0.3, hi + 1e-5)

    def test_zero_budget(self):
        assert delta_oracle(QWEN25, 0.0, 1.4) == 0.0


class TestBuildSchedule:
    def test_subblock_ratios(self):
        plan = build_schedule(QWEN25, 0.3, 1.4)
        assert plan.r_s == pytest.approx(0.42, abs=1e-12)
        assert plan.r_m1 == pytest.approx(0.3905322282577112, abs=1e-12)
        assert plan.r_m2 == pytest.approx(0.3104305198054688, abs=1e-12)
        assert plan.r_m3 == pytest.approx(0.09269150129121395, abs=1e-12)

    def test_decay_recurrence(self):
        plan = build_schedule(QWEN25, 0.3, 1.4)
        e = math.e
        assert plan.r_m1 == pytest.approx(plan.r_s - plan.delta, abs=1e-12)
        assert plan.r_m2 == pytest.approx(plan.r_m1 - plan.delta * e, abs=1e-12)
        assert plan.r_m3 == pytest.approx(plan.r_m2 - plan.delta * e * e,
                                          abs=1e-12)

    def test_per_layer_shape(self):
        # 16 shallow layers, then 2/2/3-layer steps, then 5 zeros
        plan = build_schedule(QWEN25, 0.3, 1.4)
        trr = plan.per_layer_trr
        assert trr.shape == (28,)
        assert np.allclose(trr[:16], plan.r_s)
        assert np.allclose(trr[16:18], plan.r_m1)
        assert np.allclose(trr[18:20], plan.r_m2)
        assert np.allclose(trr[20:23], plan.r_m3)
        assert np.all(trr[23:] == 0.0)

    def test_budget_identity(self):
        for r in (0.1, 0.3, 0.65):
            plan = build_schedule(QWEN25, r, 1.4)
            assert plan.per_layer_trr.mean() == pytest.approx(r, abs=1e-9)

    def test_monotone_and_drop_layers(self):
        plan = build_schedule(QWEN25, 0.3, 1.4)
        assert np.all(np.diff(plan.per_layer_trr) <= 0)
        assert plan.drop_layers == (17, 19, 21, 24)
        # drops are exactly the strict decreases
        trr = plan.per_layer_trr
        strict = tuple(l for l in range(2, 29) if trr[l - 1] < trr[l - 2])
        assert plan.drop_layers == strict

    def test_trr_at(self):
        plan = build_schedule(QWEN25, 0.3, 1.4)
        assert plan.trr_at(1) == plan.r_s
        assert plan.trr_at(17) == plan.r_m1
        assert plan.trr_at(24) == 0.0
        with pytest.raises(ValueError):
            plan.trr_at(0)
        with pytest.raises(ValueError):
            plan.trr_at(29)

    def test_zero_budget_plan(self):
        plan = build_schedule(QWEN25, 0.0, 1.4)
        assert np.all(plan.per_layer_trr == 0.0)
        assert plan.drop_layers == ()

    def test_clipped_shallow_ratio(self):
        # lambda*R > 1 clips r_s to 1 and re-solves numerically; the layer
        # mean must still hit R
        plan = build_schedule(QWEN25, 0.75, 1.4)
        assert plan.r_s == 1.0
        assert plan.per_layer_trr.mean() == pytest.approx(0.75, abs=1e-9)
        # identity L*R = r_s*(L_l - 1) + delta*C still pins delta
        want_delta = (1.0 * 23 - 28 * 0.75) / -C_28
        assert plan.delta == pytest.approx(want_delta, abs=1e-9)

    def test_clipped_but_unreachable_mean(self):
        # even at full shallow retention the late block forces the mean
        # below (L_l - 1)/L = 23/28
        with pytest.raises(InfeasibleScheduleError):
            build_schedule(QWEN25, 0.83, 1.3)

    def test_full_retention_is_structurally_infeasible(self):
        # the late block always zeroes non-text tokens, so a mean of 1.0
        # cannot exist for any lambda
        for lam in (1.0, 28 / 23, 1.4):
            with pytest.raises(InfeasibleScheduleError):
                build_schedule(QWEN25, 1.0, lam)

    def test_coincident_boundaries_merge_drops(self):
        cfg = ModelConfig(layers=28, d_model=64, d_ff=256, n_heads=4,
                          boundaries=(16, 17, 17, 24))
        plan = build_schedule(cfg, 0.3, 1.24)
        assert plan.drop_layers[0] == 17
        assert plan.drop_layers[-1] == 24
        assert len(plan.drop_layers) == len(set(plan.drop_layers))
        assert plan.per_layer_trr.mean() == pytest.approx(0.3, abs=1e-9)


class TestBlockOf:
    def test_labels(self):
        assert block_of(1, QWEN25) == "shallow"
        assert block_of(16, QWEN25) == "shallow"
        assert block_of(17, QWEN25) == "middle1"
        assert block_of(19, QWEN25) == "middle2"
        assert block_of(21, QWEN25) == "middle3"
        assert block_of(23, QWEN25) == "middle3"
        assert block_of(24, QWEN25) == "late"
        assert block_of(28, QWEN25) == "late"

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            block_of(0, QWEN25)
        with pytest.raises(ValueError):
            block_of(29, QWEN25)


class TestAblationSchedule:
    def test_full_until_removal(self):
        ab = ablation_schedule(QWEN25, remove_at=10, mode="visual")
        assert np.all(ab.trr_v[:9] == 1.0)
        assert np.all(ab.trr_v[9:] == 0.0)
        assert np.all(ab.trr_a == 1.0)

    def test_both_at_late_boundary_matches_main_schedule(self):
        # removing everything at L_l is the same plan as running the decay
        # schedule at the largest reachable mean, (L_l-1)/L, with the scale
        # factor at its feasibility edge L/(L_l-1)
        ab = ablation_schedule(QWEN25, remove_at=24, mode="both")
        plan = build_schedule(QWEN25, 23 / 28, 28 / 23)
        assert np.allclose(ab.trr_v, plan.per_layer_trr, atol=1e-9)
        assert np.allclose(ab.trr_a, plan.per_layer_trr, atol=1e-9)

    def test_remove_at_first_layer(self):
        ab = ablation_schedule(QWEN25, remove_at=1, mode="both")
        assert np.all(ab.trr_v == 0.0)
        assert np.all(ab.trr_a == 0.0)

    def test_bounds(self):
        with pytest.raises(ValueError):
            ablation_schedule(QWEN25, remove_at=0, mode="both")
        with pytest.raises(ValueError):
            ablation_schedule(QWEN25, remove_at=29, mode="both")
        with pytest.raises(ValueError):
            ablation_schedule(QWEN25, remove_at=5, mode="everything")
