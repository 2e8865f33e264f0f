import numpy as np
import pytest

from omniprefill.core import (
    AUDIO,
    MIN_PRACTICAL_RV,
    TEXT,
    VISUAL,
    InfeasibleRetentionError,
    ModelConfig,
    RetentionSpec,
    TokenStream,
    WindowLayout,
    audio_intact_rv,
    overall_ratio,
    validate_stream,
)


def make_stream(rows, d=4, seed=0):
    """rows: list of (modality, window) in stream order."""
    rng = np.random.default_rng(seed)
    n = len(rows)
    return TokenStream(
        embeddings=rng.normal(size=(n, d)).astype(np.float32),
        modality=np.array([m for m, _ in rows], dtype=np.int64),
        window_id=np.array([w for _, w in rows], dtype=np.int64),
        position=np.arange(n, dtype=np.int64),
    )


MIXED_ROWS = [
    (VISUAL, 0), (VISUAL, 0), (AUDIO, 0),
    (VISUAL, 1), (AUDIO, 1), (AUDIO, 1),
    (TEXT, -1), (TEXT, -1),
]


class TestTokenStream:
    def test_counts_and_shape(self):
        s = make_stream(MIXED_ROWS)
        assert s.n == 8
        assert s.d == 4
        assert s.n_visual == 3
        assert s.n_audio == 3
        assert s.n_text == 2
        assert s.count(VISUAL, 0) == 2
        assert s.count(AUDIO, 1) == 2

    def test_arrays_are_frozen(self):
        s = make_stream(MIXED_ROWS)
        with pytest.raises(ValueError):
            s.embeddings[0, 0] = 9.0
        with pytest.raises(ValueError):
            s.modality[0] = TEXT

    def test_take_preserves_rows(self):
        s = make_stream(MIXED_ROWS)
        sub = s.take(np.array([0, 3, 6]))
        assert sub.n == 3
        assert np.array_equal(sub.position, s.position[[0, 3, 6]])
        assert np.array_equal(sub.embeddings, s.embeddings[[0, 3, 6]])

    def test_take_requires_ascending_rows(self):
        s = make_stream(MIXED_ROWS)
        with pytest.raises(ValueError):
            s.take(np.array([3, 0]))
        with pytest.raises(ValueError):
            s.take(np.array([2, 2]))

    def test_rows_of(self):
        s = make_stream(MIXED_ROWS)
        assert s.rows_of(VISUAL, 1).tolist() == [3]
        assert s.rows_of(AUDIO, 0).tolist() == [2]

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            TokenStream(
                embeddings=np.zeros((3, 2), dtype=np.float32),
                modality=np.zeros(2, dtype=np.int64),
                window_id=np.zeros(3, dtype=np.int64),
                position=np.arange(3, dtype=np.int64),
            )


class TestWindowLayout:
    def test_from_stream(self):
        s = make_stream(MIXED_ROWS)
        lay = WindowLayout.from_stream(s)
        assert lay.T == 2
        assert lay.n_v.tolist() == [2, 1]
        assert lay.n_a.tolist() == [1, 2]
        assert lay.total_visual == 3
        assert lay.total_audio == 3

    def test_from_stream_padded_windows(self):
        s = make_stream(MIXED_ROWS)
        lay = WindowLayout.from_stream(s, T=4)
        assert lay.T == 4
        assert lay.n_v.tolist() == [2, 1, 0, 0]

    def test_text_only_stream(self):
        # a layout always carries at least one (possibly empty) window
        s = make_stream([(TEXT, -1), (TEXT, -1)])
        lay = WindowLayout.from_stream(s)
        assert lay.T == 1
        assert lay.total_visual == 0
        assert lay.total_audio == 0


class TestModelConfig:
    def test_valid(self):
        cfg = ModelConfig(layers=28, d_model=3584, d_ff=18944, n_heads=28,
                          boundaries=(16, 19, 21, 24))
        assert cfg.boundaries == (16, 19, 21, 24)

    @pytest.mark.parametrize("bad", [
        (0, 19, 21, 24),     # shallow boundary below 1
        (19, 16, 21, 24),    # ordering violated
        (16, 22, 21, 24),    # middle boundaries swapped
        (16, 19, 24, 24),    # late boundary not past middle
        (16, 19, 21, 29),    # beyond model depth
    ])
    def test_rejects_bad_boundaries(self, bad):
        with pytest.raises(ValueError):
            ModelConfig(layers=28, d_model=64, d_ff=256, n_heads=4,
                        boundaries=bad)

    def test_rejects_nonpositive_dims(self):
        with pytest.raises(ValueError):
            ModelConfig(layers=0, d_model=64, d_ff=256, n_heads=4,
                        boundaries=(1, 2, 3, 4))


class TestRetentionSpec:
    def test_range_checks(self):
        with pytest.raises(ValueError):
            RetentionSpec(r_v=1.2, r_a=0.5, lambda_=1.4, tau=0.1)
        with pytest.raises(ValueError):
            RetentionSpec(r_v=0.3, r_a=0.5, lambda_=0.9, tau=0.1)
        with pytest.raises(ValueError):
            RetentionSpec(r_v=0.3, r_a=0.5, lambda_=1.4, tau=0.0)

    def test_overall(self):
        spec = RetentionSpec(r_v=0.30, r_a=0.65, lambda_=1.4, tau=0.1)
        lay = WindowLayout(n_v=np.full(4, 288), n_a=np.full(4, 50))
        want = (0.30 * 1152 + 0.65 * 200) / 1352
        assert spec.overall(lay) == pytest.approx(want, abs=1e-12)


class TestValidateStream:
    def test_clean_stream(self):
        s = make_stream(MIXED_ROWS)
        assert validate_stream(s, WindowLayout.from_stream(s)) == []

    def test_text_with_window_id(self):
        s = make_stream([(VISUAL, 0), (TEXT, 0)])
        problems = validate_stream(s, WindowLayout(n_v=np.array([1]),
                                                   n_a=np.array([0])))
        assert any("text" in p for p in problems)

    def test_window_out_of_range(self):
        s = make_stream([(VISUAL, 0), (VISUAL, 5), (TEXT, -1)])
        problems = validate_stream(s, WindowLayout(n_v=np.array([2]),
                                                   n_a=np.array([0])))
        assert problems

    def test_window_order_violation(self):
        # visual tokens of window 1 appear before window 0
        s = make_stream([(VISUAL, 1), (VISUAL, 0), (TEXT, -1)])
        problems = validate_stream(s, WindowLayout(n_v=np.array([1, 1]),
                                                   n_a=np.array([0, 0])))
        assert any("window" in p for p in problems)

    def test_total_mismatch(self):
        s = make_stream(MIXED_ROWS)
        lay = WindowLayout(n_v=np.array([2, 2]), n_a=np.array([1, 2]))
        problems = validate_stream(s, lay)
        assert any("total" in p for p in problems)

    def test_per_window_mismatch(self):
        s = make_stream(MIXED_ROWS)
        lay = WindowLayout(n_v=np.array([1, 2]), n_a=np.array([2, 1]))
        problems = validate_stream(s, lay)
        assert any("declares" in p for p in problems)


class TestRatioArithmetic:
    def test_overall_ratio(self):
        lay = WindowLayout(n_v=np.array([288]), n_a=np.array([50]))
        assert overall_ratio(0.30, 0.65, lay) == pytest.approx(118.9 / 338)

    def test_audio_intact_inverts_overall(self):
        lay = WindowLayout(n_v=np.full(3, 288), n_a=np.full(3, 50))
        for r_v in (0.1, 0.24, 0.5):
            r = overall_ratio(r_v, 1.0, lay)
            assert audio_intact_rv(r, lay) == pytest.approx(r_v, abs=1e-12)

    def test_negative_is_infeasible(self):
        lay = WindowLayout(n_v=np.array([288]), n_a=np.array([50]))
        with pytest.raises(InfeasibleRetentionError):
            audio_intact_rv(0.10, lay)

    def test_practical_floor(self):
        # positive but below the reporting floor
        lay = WindowLayout(n_v=np.array([288]), n_a=np.array([50]))
        r_v = audio_intact_rv(0.15, lay)
        assert 0 < r_v < MIN_PRACTICAL_RV
        with pytest.raises(InfeasibleRetentionError):
            audio_intact_rv(0.15, lay, min_practical=MIN_PRACTICAL_RV)

    def test_no_audio_passthrough(self):
        lay = WindowLayout(n_v=np.array([10, 10]), n_a=np.array([0, 0]))
        assert audio_intact_rv(0.4, lay) == pytest.approx(0.4)
