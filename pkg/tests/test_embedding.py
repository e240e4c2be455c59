import numpy as np
import pytest

from handtok.embedding import (
    ChiralityEmbedding, GestureEmbedding, TokenEmbedder, build_hand_graph, compose_tokens, temporal_embed,
    to_unit_coords, token_layout,
)
from handtok.numerics import Tensor


class TestHandGraph:
    def test_physical_edges_form_tree(self):
        g = build_hand_graph()
        assert len(g.physical) == 20
        assert g.n_nodes == 21
        # a connected tree: 21 nodes reachable from the wrist through physical edges
        adj = {i: set() for i in range(21)}
        for a, b in g.physical:
            adj[a].add(b)
            adj[b].add(a)
        seen, stack = {0}, [0]
        while stack:
            for n in adj[stack.pop()] - seen:
                seen.add(n)
                stack.append(n)
        assert len(seen) == 21

    def test_symmetric_normalized(self):
        g = build_hand_graph()
        np.testing.assert_array_equal(g.adjacency, g.adjacency.T)
        Ah = g.adjacency + np.eye(21)
        d = Ah.sum(1)
        np.testing.assert_allclose(g.normalized, Ah / np.sqrt(np.outer(d, d)))
        assert (np.linalg.eigvalsh(g.normalized) <= 1 + 1e-12).all()

    def test_symmetric_edges_link_neighbouring_fingers(self):
        g = build_hand_graph()
        extra = set(map(tuple, g.edges)) - set(map(tuple, g.physical))
        assert extra
        for a, b in extra:
            assert (b - a) == 4 and a >= 1  # same position on adjacent fingers


class TestGestureEmbedding:
    def test_zero_input_zero_bias_gives_zero(self, rng):
        emb = GestureEmbedding(256, rng, np.float64)
        emb.proj.bias.data[:] = 0
        out = emb(Tensor(np.zeros((3, 21, 2))))
        assert out.shape == (3, 256)
        np.testing.assert_array_equal(out.data, 0)

    def test_output_dimension(self, rng):
        emb = GestureEmbedding(256, rng)
        assert emb(Tensor(rng.normal(size=(2, 5, 21, 2)).astype(np.float32))).shape == (2, 5, 256)

    def test_rejects_non_finite(self, rng):
        emb = GestureEmbedding(8, rng, np.float64, channels=(4, 4))
        x = np.zeros((1, 21, 2))
        x[0, 3, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            emb(Tensor(x))

    def test_parameter_names(self, rng):
        names = [n for n, _ in GestureEmbedding(8, rng, channels=(4, 6)).named_parameters()]
        assert names == ["gcn.0", "gcn.1", "proj.weight", "proj.bias"]


class TestTemporal:
    def test_zero_time_alternates(self):
        np.testing.assert_array_equal(temporal_embed(0, 8), [0, 1, 0, 1, 0, 1, 0, 1])

    def test_direct_formula(self):
        d, t = 8, 13
        expect = [np.sin(t / 10000 ** (i / d)) if i % 2 == 0 else np.cos(t / 10000 ** ((i - 1) / d))
                  for i in range(d)]
        np.testing.assert_allclose(temporal_embed(t, d), expect, rtol=1e-14)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            temporal_embed(-1, 4)

    def test_same_moment_same_code(self):
        times, hands = token_layout(10)
        codes = temporal_embed(times, 16)
        np.testing.assert_array_equal(codes[7], codes[10 + 7])
        assert hands.tolist() == [0] * 10 + [1] * 10


class TestChirality:
    def test_table_shape_and_lookup(self, rng):
        emb = ChiralityEmbedding(256, rng)
        assert emb.table.shape == (2, 256)
        out = emb(np.ones(5, dtype=int)).data
        np.testing.assert_array_equal(out, np.broadcast_to(emb.table.data[1], (5, 256)))


class TestTokenEmbedder:
    def test_single_frame_gives_two_tokens(self, rng):
        emb = TokenEmbedder(16, rng, np.float64, channels=(4, 8))
        out = compose_tokens(np.full((1, 21, 2), 128.0), np.full((1, 21, 2), 128.0), emb)
        assert out.shape == (2, 16)

    def test_positional_only_when_other_parts_zeroed(self, rng):
        emb = TokenEmbedder(16, rng, np.float64, channels=(4, 8))
        emb.gesture.proj.weight.data[:] = 0
        emb.gesture.proj.bias.data[:] = 0
        emb.chirality.table.data[:] = 0
        out = emb(rng.random((1, 6, 21, 2)) * 256).data
        times, _ = token_layout(3)
        np.testing.assert_allclose(out[0], temporal_embed(times, 16), atol=1e-15)

    def test_recomposition(self, rng):
        emb = TokenEmbedder(16, rng, np.float64, channels=(4, 8))
        crop = rng.random((2, 8, 21, 2)) * 256
        out = emb(crop).data
        times, hands = token_layout(4)
        f_p = emb.gesture(Tensor(to_unit_coords(crop))).data
        expect = f_p + temporal_embed(times, 16) + emb.chirality.table.data[hands]
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_unit_coords(self):
        np.testing.assert_array_equal(to_unit_coords(np.array([0.0, 128.0, 256.0])), [-1.0, 0.0, 1.0])

    def test_mismatched_hands(self, rng):
        emb = TokenEmbedder(8, rng, channels=(4, 4))
        with pytest.raises(ValueError, match="differ"):
            compose_tokens(np.zeros((3, 21, 2)), np.zeros((2, 21, 2)), emb)

    def test_odd_token_count(self, rng):
        emb = TokenEmbedder(8, rng, channels=(4, 4))
        with pytest.raises(ValueError, match="even"):
            emb(np.zeros((1, 3, 21, 2)))
