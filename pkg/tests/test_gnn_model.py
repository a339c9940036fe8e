"""
Unit tests for the layout graph model: configuration, page preparation,
gradients, training and decoding.
"""

import os
import sys
import unittest

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from errors import InvalidConfig, LengthMismatch, MissingLabels, ShapeMismatch, UnsupportedGNN
from layout.doc_model import GoldLabels, Page, TextBox
from layout.sampling import SampledGraph, sample_directional
from models.gnn_model import (
    LayoutGraphModel, ModelConfig, OptimizerConfig, TrainConfig, edgeconv_layer, forward,
    init_model, loss, prepare_page, refresh_graph, residual_max, train, warmup_lr,
)
from models.tensor_nn import constant, grad_check

TWO_LINES = [
    (100, 100, 200, 120), (210, 100, 300, 120), (310, 100, 400, 120),
    (100, 200, 200, 220), (210, 200, 300, 220), (310, 200, 400, 220),
]


def two_line_page(links=(), labeled=True, categories=(0, 0, 0, 1, 1, 1)):
    labels = None
    if labeled:
        labels = GoldLabels(node_category=tuple(categories), groups=((0, 1, 2), (3, 4, 5)), links=links)
    boxes = tuple(TextBox(k, b) for k, b in enumerate(TWO_LINES))
    return Page('two-lines', 1000, 1000, boxes, labels)


def prepared_two_lines(cfg, **page_kwargs):
    page = two_line_page(**page_kwargs)
    return page, prepare_page(page, sample_directional(page.norm_boxes()), cfg)


def edgeconv_oracle(x, edges, params, layer):
    """Per-node restatement of EdgeConv with a numpy MLP."""
    W1, b1 = params[f'gnn.{layer}.W1'].data, params[f'gnn.{layer}.b1'].data
    W2, b2 = params[f'gnn.{layer}.W2'].data, params[f'gnn.{layer}.b2'].data
    out = []
    for i in range(x.shape[0]):
        neighbors = {i} | {b for a, b in edges if a == i} | {a for a, b in edges if b == i}
        messages = [np.maximum(0.0, np.concatenate([x[i], x[j] - x[i]]) @ W1 + b1) @ W2 + b2 for j in neighbors]
        out.append(np.max(messages, axis=0))
    return np.array(out)


def knn_graph_oracle(points, k):
    edges = set()
    for i in range(len(points)):
        ranked = sorted((float(np.sum((points[j] - points[i]) ** 2)), j) for j in range(len(points)) if j != i)
        edges.update((min(i, j), max(i, j)) for _, j in ranked[:k])
    return edges


class TestModelConfig(unittest.TestCase):
    """Test cases for ModelConfig validation."""

    def test_default_schedule(self):
        self.assertEqual(ModelConfig().graph_refresh, ('static', 'union'))
        self.assertEqual(ModelConfig(n_gnn_layers=3).graph_refresh, ('static', 'union', 'union'))

    def test_default_parameter_count(self):
        self.assertEqual(init_model(ModelConfig()).n_parameters(), 45639)

    def test_minimal_config(self):
        cfg = ModelConfig(hidden_dim=1, n_node_classes=2)
        params = init_model(cfg, seed=0)
        self.assertEqual(params.n_parameters(), 84)
        _, prepared = prepared_two_lines(cfg, categories=(0, 0, 0, 1, 1, 1))
        out = forward(prepared, cfg, params)
        self.assertEqual(out.node_logits.shape, (6, 2))
        self.assertEqual(out.edge_logits.shape, (7, 2))
        self.assertTrue(np.isfinite(loss(out, prepared, cfg).item()))

    def test_gravnet_rejected(self):
        with self.assertRaises(UnsupportedGNN):
            ModelConfig(gnn_type='gravnet')

    def test_linking_needs_directed_pairs(self):
        with self.assertRaises(InvalidConfig):
            ModelConfig(task='linking')
        ModelConfig(task='linking', symmetric=False)

    def test_schedule_length(self):
        with self.assertRaises(InvalidConfig):
            ModelConfig(graph_refresh=('static',), n_gnn_layers=2)
        with self.assertRaises(InvalidConfig):
            ModelConfig(graph_refresh=('static', 'radius'))

    def test_from_dict_unknown_key(self):
        with self.assertRaises(InvalidConfig) as ctx:
            ModelConfig.from_dict({'hidden_dim': 8, 'dropout': 0.1})
        self.assertIn('model.dropout', str(ctx.exception))

    def test_dict_round_trip_and_diff(self):
        cfg = ModelConfig(hidden_dim=16, use_polar=True)
        self.assertEqual(ModelConfig.from_dict(cfg.to_dict()), cfg)
        self.assertEqual(cfg.diff(ModelConfig()), ['hidden_dim', 'use_polar'])

    def test_edge_input_dim(self):
        self.assertEqual(ModelConfig().edge_input_dim, 2 * 64 + 32 + 18)
        self.assertEqual(ModelConfig(use_rope=False, use_polar=True).edge_input_dim, 2 * 64 + 18 + 2)


class TestPreparePage(unittest.TestCase):
    """Test cases for page preparation and edge targets."""

    def test_directional_graph(self):
        page = two_line_page()
        graph = sample_directional(page.norm_boxes())
        self.assertEqual(graph.edges, ((0, 1), (0, 3), (1, 2), (1, 4), (2, 5), (3, 4), (4, 5)))

    def test_grouping_targets(self):
        _, prepared = prepared_two_lines(ModelConfig(hidden_dim=8))
        np.testing.assert_array_equal(prepared.edge_targets, [1, 0, 1, 0, 0, 1, 1])
        self.assertEqual(prepared.edge_const.shape, (14, 32 + 18))
        self.assertEqual(prepared.node_input.shape, (6, 8))

    def test_linking_targets(self):
        cfg = ModelConfig(hidden_dim=8, task='linking', symmetric=False)
        _, prepared = prepared_two_lines(cfg, links=((0, 1),))
        self.assertEqual(prepared.pairs.shape, (14, 2))
        self.assertEqual([tuple(p) for p in prepared.pairs], sorted(tuple(p) for p in prepared.pairs))
        self.assertEqual(int(prepared.edge_targets.sum()), 3)
        positives = {tuple(p) for p, t in zip(prepared.pairs, prepared.edge_targets) if t}
        self.assertEqual(positives, {(0, 3), (1, 4), (2, 5)})

    def test_label_length_mismatch(self):
        with self.assertRaises(LengthMismatch):
            prepared_two_lines(ModelConfig(hidden_dim=8), categories=(0, 0, 0, 1, 1))

    def test_unlabeled_page(self):
        _, prepared = prepared_two_lines(ModelConfig(hidden_dim=8), labeled=False)
        self.assertIsNone(prepared.edge_targets)

    def test_graph_size_mismatch(self):
        page = two_line_page()
        with self.assertRaises(ShapeMismatch):
            prepare_page(page, SampledGraph(5, ()), ModelConfig(hidden_dim=8))


class TestGraphLayers(unittest.TestCase):
    """Test cases for EdgeConv and graph refresh."""

    def test_isolated_node_sees_only_itself(self):
        cfg = ModelConfig(hidden_dim=4, n_gnn_layers=1)
        params = init_model(cfg, seed=3)
        x = constant(np.random.default_rng(0).normal(size=(3, 4)))
        out = edgeconv_layer(x, SampledGraph(3, ((0, 1),)), params, 0)
        alone = edgeconv_layer(x, SampledGraph(3, ()), params, 0)
        np.testing.assert_allclose(out.data[2], alone.data[2])
        self.assertTrue(np.all(out.data[0] >= alone.data[0]))

    def test_edgeconv_matches_oracle_on_path(self):
        cfg = ModelConfig(hidden_dim=4, n_gnn_layers=1)
        params = init_model(cfg, seed=5)
        x = np.random.default_rng(1).normal(size=(3, 4))
        out = edgeconv_layer(constant(x), SampledGraph(3, ((0, 1), (1, 2))), params, 0)
        np.testing.assert_allclose(out.data, edgeconv_oracle(x, ((0, 1), (1, 2)), params, 0),
                                   rtol=1e-12, atol=1e-12)

    def test_duplicate_edge_changes_nothing(self):
        cfg = ModelConfig(hidden_dim=4, n_gnn_layers=1)
        params = init_model(cfg, seed=5)
        x = constant(np.random.default_rng(2).normal(size=(3, 4)))
        once = edgeconv_layer(x, SampledGraph(3, ((0, 1), (1, 2))), params, 0)
        twice = edgeconv_layer(x, SampledGraph(3, ((0, 1), (0, 1), (1, 2))), params, 0)
        np.testing.assert_allclose(twice.data, once.data, rtol=0.0, atol=1e-12)

    def test_residual_never_decreases_embeddings(self):
        cfg = ModelConfig(hidden_dim=6, n_gnn_layers=3)
        params = init_model(cfg, seed=4)
        rng = np.random.default_rng(3)
        emb = constant(rng.normal(size=(8, 6)))
        layout = rng.uniform(size=(8, 8))
        base = SampledGraph(8, ((0, 1), (1, 2), (2, 3), (4, 5), (6, 7)))
        for layer, mode in enumerate(cfg.graph_refresh):
            graph = refresh_graph(emb.data, layout, mode, base, cfg.dynamic_k)
            nxt = residual_max(emb, edgeconv_layer(emb, graph, params, layer))
            self.assertTrue(np.all(nxt.data >= emb.data))
            emb = nxt

    def test_residual_max(self):
        x = constant(np.array([[1.0, -2.0], [0.5, 3.0]]))
        y = constant(np.array([[0.0, 4.0], [0.5, -1.0]]))
        np.testing.assert_array_equal(residual_max(x, y).data, [[1.0, 4.0], [0.5, 3.0]])
        self.assertIs(residual_max(x, y, enabled=False), y)
        with self.assertRaises(ShapeMismatch):
            residual_max(x, constant(np.zeros((2, 3))))

    def test_refresh_modes(self):
        base = SampledGraph(4, ((0, 1),))
        emb = np.array([[0.0], [1.0], [10.0], [11.0]])
        layout = np.zeros((4, 1))
        self.assertIs(refresh_graph(emb, layout, 'static', base), base)
        dynamic = refresh_graph(emb, layout, 'dynamic_knn', base, k=1)
        self.assertEqual(dynamic.edges, ((0, 1), (2, 3)))
        union = refresh_graph(np.array([[0.0], [5.0], [10.0], [11.0]]), layout, 'union', base, k=1)
        self.assertTrue(set(base.edges) <= set(union.edges))
        self.assertIn((2, 3), union.edges)

    def test_dynamic_knn_matches_brute_force(self):
        rng = np.random.default_rng(6)
        emb = rng.normal(size=(20, 4))
        layout = rng.uniform(size=(20, 8))
        points = np.concatenate([emb, layout], axis=1)
        base = SampledGraph(20, ((0, 19),))
        for k in (1, 3, 6):
            expected = knn_graph_oracle(points, k)
            self.assertEqual(set(refresh_graph(emb, layout, 'dynamic_knn', base, k=k).edges), expected)
            self.assertEqual(set(refresh_graph(emb, layout, 'union', base, k=k).edges), expected | {(0, 19)})

    def test_forward_is_permutation_equivariant(self):
        cfg = ModelConfig(hidden_dim=8)
        params = init_model(cfg, seed=7)
        perm = [4, 0, 5, 2, 3, 1]
        page = two_line_page(labeled=False)
        shuffled = Page('shuffled', 1000, 1000, tuple(TextBox(p, TWO_LINES[perm[p]]) for p in range(6)))
        outs = []
        for pg in (page, shuffled):
            prepared = prepare_page(pg, sample_directional(pg.norm_boxes()), cfg)
            outs.append(forward(prepared, cfg, params))
        out, out_shuffled = outs
        np.testing.assert_allclose(out_shuffled.node_logits.data, out.node_logits.data[perm], rtol=1e-12, atol=1e-12)
        edge_logits = {(int(pair[0]), int(pair[1])): row for pair, row in zip(out.pairs, out.edge_logits.data)}
        self.assertEqual(len(out_shuffled.pairs), len(out.pairs))
        for (i, j), row in zip(out_shuffled.pairs, out_shuffled.edge_logits.data):
            a, b = sorted((perm[i], perm[j]))
            np.testing.assert_allclose(row, edge_logits[(a, b)], rtol=1e-12, atol=1e-12)


class TestGradients(unittest.TestCase):
    """Test cases for end-to-end gradients."""

    def test_loss_gradients_match_finite_differences(self):
        cfg = ModelConfig(hidden_dim=8)
        _, prepared = prepared_two_lines(cfg)
        params = init_model(cfg, seed=1)
        error = grad_check(lambda: loss(forward(prepared, cfg, params), prepared, cfg), params, eps=1e-6)
        self.assertLess(error, 1e-4)

    def test_loss_needs_labels(self):
        cfg = ModelConfig(hidden_dim=8)
        _, prepared = prepared_two_lines(cfg, labeled=False)
        out = forward(prepared, cfg, init_model(cfg))
        with self.assertRaises(MissingLabels):
            loss(out, prepared, cfg)


class TestTraining(unittest.TestCase):
    """Test cases for the training loop."""

    def setUp(self):
        self.cfg = ModelConfig(hidden_dim=16)
        _, prepared = prepared_two_lines(self.cfg)
        self.pages = [prepared]
        self.hyper = TrainConfig(epochs=40, batch_size=1, warmup_epochs=0)
        self.optimizer = OptimizerConfig(lr=1e-2, weight_decay=0.0)

    def test_warmup(self):
        self.assertEqual(warmup_lr(1.0, 0, 4), 0.25)
        self.assertEqual(warmup_lr(1.0, 3, 4), 1.0)
        self.assertEqual(warmup_lr(1.0, 9, 4), 1.0)
        self.assertEqual(warmup_lr(0.5, 0, 0), 0.5)

    def test_loss_decreases(self):
        result = train(self.pages, self.cfg, self.hyper, self.optimizer, seed=0, progress=False)
        self.assertEqual(len(result.history), 40)
        self.assertLess(result.history[-1].loss, result.history[0].loss)

    def test_loss_never_increases_at_small_lr(self):
        optimizer = OptimizerConfig(lr=1e-4, weight_decay=0.0)
        losses = [m.loss for m in train(self.pages, self.cfg, self.hyper, optimizer, seed=0, progress=False).history]
        for before, after in zip(losses, losses[1:]):
            self.assertLessEqual(after, before)

    def test_zero_lr_keeps_parameters(self):
        params = init_model(self.cfg, seed=0)
        initial = init_model(self.cfg, seed=0)
        optimizer = OptimizerConfig(lr=0.0, weight_decay=0.005)
        result = train(self.pages, self.cfg, TrainConfig(epochs=3, warmup_epochs=1), optimizer, seed=0,
                       params=params, progress=False)
        for name in initial:
            np.testing.assert_array_equal(result.params[name].data, initial[name].data)

    def test_same_seed_same_history(self):
        a = train(self.pages, self.cfg, self.hyper, self.optimizer, seed=2, progress=False)
        b = train(self.pages, self.cfg, self.hyper, self.optimizer, seed=2, progress=False)
        self.assertEqual([m.loss for m in a.history], [m.loss for m in b.history])
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_epoch_callback(self):
        seen = []
        train(self.pages, self.cfg, TrainConfig(epochs=3, warmup_epochs=0), self.optimizer,
              progress=False, on_epoch=lambda metrics, params, state: seen.append(metrics.epoch))
        self.assertEqual(seen, [0, 1, 2])

    def test_empty_training_set(self):
        from errors import EmptyDataset
        with self.assertRaises(EmptyDataset):
            train([], self.cfg, self.hyper, progress=False)


class TestDecode(unittest.TestCase):
    """Test cases for decoding model output into instances."""

    def setUp(self):
        self.cfg = ModelConfig(hidden_dim=8)
        self.model = LayoutGraphModel(self.cfg, seed=0)
        self.page = two_line_page()
        self.prepared = self.model.prepare(self.page, sample_directional(self.page.norm_boxes()))

    def force_edges(self, b2):
        self.model.params['edge_head.W2'].data[:] = 0.0
        self.model.params['edge_head.b2'].data[:] = b2

    def test_all_edges_positive_merges_page(self):
        self.force_edges([-10.0, 10.0])
        instances, decisions = self.model.decode(self.model.forward(self.prepared), self.page)
        self.assertTrue(np.all(decisions == 1))
        self.assertEqual(len(instances), 1)
        self.assertEqual(instances[0].member_ids, (0, 1, 2, 3, 4, 5))

    def test_all_edges_negative_gives_singletons(self):
        self.force_edges([10.0, -10.0])
        instances, decisions = self.model.decode(self.model.forward(self.prepared), self.page)
        self.assertTrue(np.all(decisions == 0))
        self.assertEqual([inst.member_ids for inst in instances], [(k,) for k in range(6)])

    def test_score(self):
        self.force_edges([10.0, -10.0])
        node, edge = self.model.score(self.model.forward(self.prepared), self.prepared)
        self.assertEqual((edge.tp, edge.fp, edge.fn), (0, 0, 4))
        self.assertEqual(node.tp + node.fn, 6)


if __name__ == '__main__':
    unittest.main()
