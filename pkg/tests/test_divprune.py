import numpy as np
import pytest

from omniprefill.core import (
    AUDIO,
    TEXT,
    VISUAL,
    RetentionSpec,
    TokenStream,
    WindowLayout,
)
from omniprefill.divprune import (
    _cosine_distances,
    greedy_maxmin,
    keep_count,
    win_div_prune,
)


def cosine_dist(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(np.clip(1.0 - a @ b / (na * nb), 0.0, 2.0))


def brute_force_greedy(emb, w, k):
    """Reference implementation: literal max-min recursion, O(n^2) per step."""
    n = emb.shape[0]
    if k >= n:
        return list(range(n))
    dist = np.array([[cosine_dist(emb[i], emb[j]) for j in range(n)]
                     for i in range(n)])
    seed_score = np.array([
        w[j] * min(dist[i, j] for i in range(n) if i != j) if n > 1 else w[j]
        for j in range(n)
    ])
    sel = [int(np.argmax(seed_score))]
    while len(sel) < k:
        best, best_val = None, -1.0
        for c in range(n):
            if c in sel:
                continue
            val = w[c] * min(dist[s, c] for s in sel)
            if val > best_val + 1e-15:
                best, best_val = c, val
        sel.append(best)
    return sorted(sel)


class TestGreedyMaxmin:
    def test_identity_when_k_equals_n(self):
        rng = np.random.default_rng(0)
        emb = rng.normal(size=(6, 3))
        assert greedy_maxmin(emb, np.ones(6), 6).tolist() == list(range(6))

    def test_orthogonal_beats_duplicates(self):
        # three identical vectors plus one orthogonal: k=2 must take the
        # orthogonal one and exactly one duplicate
        emb = np.array([
            [1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0],
        ])
        picks = set(greedy_maxmin(emb, np.ones(4), 2).tolist())
        assert 3 in picks
        assert len(picks & {0, 1, 2}) == 1

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(1)
        for trial in range(200):
            n = int(rng.integers(1, 11))
            k = int(rng.integers(1, n + 1))
            emb = rng.normal(size=(n, int(rng.integers(2, 5))))
            w = rng.random(n)
            got = greedy_maxmin(emb, w, k).tolist()
            assert got == brute_force_greedy(emb, w, k), (trial, n, k)

    def test_uniform_weights_match_unweighted(self):
        rng = np.random.default_rng(2)
        for trial in range(100):
            n = int(rng.integers(2, 11))
            k = int(rng.integers(1, n + 1))
            emb = rng.normal(size=(n, 3))
            got = greedy_maxmin(emb, np.ones(n), k).tolist()
            assert got == brute_force_greedy(emb, np.ones(n), k), trial

    def test_saliency_steers_selection(self):
        # two duplicate pairs; weights decide which member of each pair wins
        emb = np.array([[1.0, 0], [1.0, 0], [0, 1.0], [0, 1.0]])
        picks = greedy_maxmin(emb, np.array([9.0, 1.0, 1.0, 9.0]), 2)
        assert picks.tolist() == [0, 3]

    def test_zero_norm_rows_at_unit_distance(self):
        emb = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        dist, zero_mask = _cosine_distances(emb)
        assert zero_mask.tolist() == [True, False, False]
        assert dist[0, 1] == dist[0, 2] == 1.0
        assert dist[1, 2] == pytest.approx(0.0, abs=1e-12)
        # zero row is maximally distant, so it wins a k=2 slot
        picks = greedy_maxmin(emb, np.ones(3), 2)
        assert 0 in picks.tolist()

    def test_ties_resolve_to_lowest_position(self):
        emb = np.tile(np.array([1.0, 1.0]), (5, 1))
        assert greedy_maxmin(emb, np.ones(5), 3).tolist() == [0, 1, 2]

    def test_determinism(self):
        rng = np.random.default_rng(3)
        emb = rng.normal(size=(30, 8))
        w = rng.random(30)
        a = greedy_maxmin(emb, w, 11)
        b = greedy_maxmin(emb, w, 11)
        assert np.array_equal(a, b)

    def test_bounds(self):
        emb = np.ones((3, 2))
        with pytest.raises(ValueError):
            greedy_maxmin(emb, np.ones(3), 4)
        with pytest.raises(ValueError):
            greedy_maxmin(emb, np.ones(3), 0)
        with pytest.raises(ValueError):
            greedy_maxmin(emb, np.ones(2), 2)
        with pytest.raises(ValueError):
            greedy_maxmin(emb, -np.ones(3), 2)


class TestKeepCount:
    def test_floor_rule(self):
        assert keep_count(0.42, 288) == 120
        assert keep_count(0.91, 50) == 45
        assert keep_count(0.5, 4) == 2

    def test_floor_of_one(self):
        assert keep_count(0.01, 3) == 1

    def test_zero_cases(self):
        assert keep_count(0.0, 10) == 0
        assert keep_count(0.5, 0) == 0

    def test_capped_at_group(self):
        assert keep_count(1.0, 7) == 7


def build_stream(T, n_v, n_a, n_q, d=8, seed=0):
    rng = np.random.default_rng(seed)
    mods, wins = [], []
    for t in range(T):
        mods += [VISUAL] * n_v + [AUDIO] * n_a
        wins += [t] * (n_v + n_a)
    mods += [TEXT] * n_q
    wins += [-1] * n_q
    n = len(mods)
    return TokenStream(
        embeddings=rng.normal(size=(n, d)).astype(np.float32),
        modality=np.array(mods, dtype=np.int64),
        window_id=np.array(wins, dtype=np.int64),
        position=np.arange(n, dtype=np.int64),
    )


class TestWinDivPrune:
    def test_small_exact_counts(self):
        # r_s = min(1, 1.0*0.5) = 0.5 for each modality: keep 2 visual + 1
        # audio per window, text untouched
        stream = build_stream(T=2, n_v=4, n_a=2, n_q=3)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.5, r_a=0.5, lambda_=1.0, tau=0.1)
        res = win_div_prune(stream, lay, {}, spec)
        assert res.kept_v.tolist() == [2, 2]
        assert res.kept_a.tolist() == [1, 1]
        assert res.kept.size == 6 + 3

    def test_default_counts_per_window(self):
        # r_s,v = 0.42 -> floor(0.42*288) = 120; r_s,a = 0.91 -> 45
        stream = build_stream(T=2, n_v=288, n_a=50, n_q=16, seed=1)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.30, r_a=0.65, lambda_=1.4, tau=0.1)
        res = win_div_prune(stream, lay, {}, spec)
        assert res.kept_v.tolist() == [120, 120]
        assert res.kept_a.tolist() == [45, 45]

    def test_clipped_ratios_identity(self):
        stream = build_stream(T=2, n_v=5, n_a=3, n_q=2)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.9, r_a=0.8, lambda_=1.4, tau=0.1)
        res = win_div_prune(stream, lay, {}, spec)
        assert res.kept.tolist() == list(range(stream.n))

    def test_aggregate_within_rounding_slack(self):
        T, n_v, n_a = 5, 37, 11
        stream = build_stream(T=T, n_v=n_v, n_a=n_a, n_q=4, seed=2)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.33, r_a=0.6, lambda_=1.4, tau=0.1)
        res = win_div_prune(stream, lay, {}, spec)
        target = min(1, 1.4 * 0.33) * T * n_v + min(1, 1.4 * 0.6) * T * n_a
        nontext = int(res.kept_v.sum() + res.kept_a.sum())
        assert abs(nontext - target) <= 2 * T

    def test_kept_sorted_and_text_preserved(self):
        stream = build_stream(T=3, n_v=6, n_a=4, n_q=5, seed=3)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.4, r_a=0.5, lambda_=1.2, tau=0.1)
        res = win_div_prune(stream, lay, {}, spec)
        kept = res.kept
        assert np.all(np.diff(kept) > 0)
        text_rows = np.flatnonzero(stream.modality == TEXT)
        assert set(text_rows.tolist()) <= set(kept.tolist())

    def test_locality(self):
        # changing window 2 embeddings must not move windows 0/1 selections
        base = build_stream(T=3, n_v=8, n_a=0, n_q=2, seed=4)
        emb = base.embeddings.copy()
        rows_w2 = np.flatnonzero(base.window_id == 2)
        emb[rows_w2] = np.random.default_rng(99).normal(
            size=(rows_w2.size, base.d)).astype(np.float32)
        other = TokenStream(embeddings=emb, modality=base.modality.copy(),
                            window_id=base.window_id.copy(),
                            position=base.position.copy())
        lay = WindowLayout.from_stream(base)
        spec = RetentionSpec(r_v=0.5, r_a=0.5, lambda_=1.0, tau=0.1)
        a = win_div_prune(base, lay, {}, spec)
        b = win_div_prune(other, lay, {}, spec)
        keep_early = lambda r: [i for i in r.kept.tolist()
                                if base.window_id[i] in (0, 1)]
        assert keep_early(a) == keep_early(b)

    def test_saliency_reweights_groups(self):
        stream = build_stream(T=1, n_v=4, n_a=0, n_q=1, seed=5)
        lay = WindowLayout.from_stream(stream)
        spec = RetentionSpec(r_v=0.25, r_a=0.25, lambda_=1.0, tau=0.1)
        picks = {}
        for fav in (0, 3):
            w = np.full(4, 0.05)
            w[fav] = 10.0
            res = win_div_prune(stream, lay, {(0, VISUAL): w}, spec)
            picks[fav] = [i for i in res.kept.tolist()
                          if stream.modality[i] == VISUAL]
        assert picks[0] == [0]
        assert picks[3] == [3]

    def test_invalid_stream_rejected(self):
        stream = build_stream(T=2, n_v=2, n_a=1, n_q=1)
        bad_layout = WindowLayout(n_v=np.array([2, 1]), n_a=np.array([1, 1]))
        spec = RetentionSpec(r_v=0.5, r_a=0.5, lambda_=1.0, tau=0.1)
        with pytest.raises(ValueError):
            win_div_prune(stream, bad_layout, {}, spec)
