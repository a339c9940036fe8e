"""
Unit tests for the processing stages: PageSource, SampleStage, InferStage,
WriteStage, and the SVG renderer they feed.
"""

import json
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from errors import InvalidConfig, SchemaError
from dataio.pages import load_corpus, load_page, page_to_document
from layout.doc_model import GoldLabels, Page, TextBox
from models.gnn_model import LayoutGraphModel, ModelConfig
from render import render_prediction, render_sampled_graph
from stages.InferStage import InferStage
from stages.PageSource import PageSource
from stages.SampleStage import SampleStage
from stages.WriteStage import PARQUET_AVAILABLE, WriteStage

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


def minimal_document():
    with open(os.path.join(FIXTURES, 'minimal_page.json'), 'r') as f:
        return json.load(f)


def row_page(page_id, n, groups):
    """n boxes in one row; the directional sampler chains neighbours only."""
    boxes = tuple(TextBox(k, (100 + 200 * k, 100, 200 + 200 * k, 120)) for k in range(n))
    labels = GoldLabels(node_category=tuple(k % 2 for k in range(n)), groups=groups,
                        category_names=('title', 'page-footer'))
    return Page(page_id, 1000, 1000, boxes, labels)


def split_row_pages():
    """Pages whose group connectivities are 1/2, 2/3, 1/3, 1 and 1/2."""
    return [
        row_page('r0', 3, ((0, 2), (1,))),
        row_page('r1', 4, ((0, 2), (1,), (3,))),
        row_page('r2', 5, ((0, 2), (1, 3), (4,))),
        row_page('r3', 5, ((0, 1, 2), (3,), (4,))),
        row_page('r4', 4, ((0, 3), (1, 2))),
    ]


class TestPageSource(unittest.TestCase):
    """Test cases for PageSource."""

    def setUp(self):
        """Write a corpus with one broken line between two good pages."""
        self.tmpdir = tempfile.mkdtemp()
        self.corpus = os.path.join(self.tmpdir, 'corpus.jsonl')
        broken = minimal_document()
        broken['boxes'][0]['bbox'] = 'wide'
        with open(self.corpus, 'w') as f:
            f.write(json.dumps(minimal_document()) + '\n')
            f.write(json.dumps(broken) + '\n')
            f.write('\n')
            f.write('{not json\n')
            f.write(json.dumps(minimal_document()) + '\n')

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_skips_bad_pages(self):
        """Test that invalid pages are counted and skipped."""
        source = PageSource()
        source.initialize({'path': self.corpus})
        pages = list(source.pages())
        self.assertEqual(len(pages), 2)
        self.assertEqual(source.total_emitted, 2)
        self.assertEqual(source.failed, 2)

    def test_strict_mode_raises(self):
        """Test that strict mode propagates the first error."""
        source = PageSource()
        source.initialize({'path': self.corpus, 'strict': True})
        with self.assertRaises(SchemaError) as ctx:
            list(source.pages())
        self.assertEqual(ctx.exception.path, f'{self.corpus}:2:boxes[0].bbox')

    def test_matches_corpus_loader(self):
        """Test that the stage emits exactly what the corpus loader reads."""
        clean = os.path.join(self.tmpdir, 'clean.jsonl')
        with open(clean, 'w') as f:
            for page_id in ('a', 'b', 'c'):
                doc = minimal_document()
                doc['page_id'] = page_id
                f.write(json.dumps(doc) + '\n')
        source = PageSource()
        source.initialize({'path': clean})
        emitted = [page_to_document(p) for p in source.pages()]
        self.assertEqual(emitted, [page_to_document(p) for p in load_corpus(clean)])
        self.assertEqual([d['page_id'] for d in emitted], ['a', 'b', 'c'])

        funsd = os.path.join(FIXTURES, 'funsd')
        source = PageSource()
        source.initialize({'path': funsd, 'level': 'word'})
        self.assertEqual([page_to_document(p) for p in source.pages()],
                         [page_to_document(p) for p in load_corpus(funsd)])

    def test_max_pages(self):
        source = PageSource()
        source.initialize({'path': self.corpus, 'max_pages': 1})
        self.assertEqual(len(list(source.pages())), 1)

    def test_funsd_entity_level(self):
        source = PageSource()
        source.initialize({'path': os.path.join(FIXTURES, 'funsd'), 'level': 'entity'})
        self.assertEqual(source.format, 'funsd')
        (page,) = list(source.pages())
        self.assertEqual(page.n_boxes, 5)


class TestSampleStage(unittest.TestCase):
    """Test cases for SampleStage."""

    def setUp(self):
        self.page = load_page(os.path.join(FIXTURES, 'minimal_page.json'))

    def test_labeled_page(self):
        """Test sampling with recall on a labeled page."""
        stage = SampleStage()
        stage.initialize({'strategy': 'directional', 'with_missing': True})
        sampled = stage.process(self.page)
        self.assertEqual(sampled.graph.n_edges, 7)
        self.assertEqual(sampled.group_connectivity, 1.0)
        self.assertEqual(sampled.missing_pairs, ())
        summary = stage.summary()
        self.assertEqual((summary['pages'], summary['edges']), (1, 7))

    def test_missing_pairs_for_split_group(self):
        """Test a group whose members are only joined through another group."""
        boxes = tuple(TextBox(k, (100 + 200 * k, 100, 200 + 200 * k, 120)) for k in range(3))
        labels = GoldLabels(node_category=(0, 1, 0), groups=((0, 2), (1,)))
        stage = SampleStage()
        stage.initialize({'with_missing': True})
        sampled = stage.process(Page('split', 1000, 1000, boxes, labels))
        self.assertEqual(sampled.graph.edges, ((0, 1), (1, 2)))
        self.assertEqual(sampled.group_connectivity, 0.5)
        self.assertEqual(sampled.missing_pairs, ((0, 2),))

    def test_summary_independent_of_order(self):
        """Test that the recall means do not depend on page completion order."""
        pages = split_row_pages()
        summaries = []
        for order in (pages, pages[::-1], [pages[k] for k in (2, 4, 0, 3, 1)]):
            stage = SampleStage()
            stage.initialize({})
            for page in order:
                stage.process(page)
            summaries.append(stage.summary())
        self.assertEqual(summaries[0], summaries[1])
        self.assertEqual(summaries[0], summaries[2])
        self.assertAlmostEqual(summaries[0]['mean_group_connectivity'], 0.6, places=12)

    def test_failure_is_isolated(self):
        """Test that a bad strategy is counted unless strict."""
        stage = SampleStage()
        stage.initialize({'strategy': 'delaunay'})
        self.assertIsNone(stage.process(self.page))
        self.assertEqual(stage.summary()['failed'], 1)

        strict = SampleStage()
        strict.initialize({'strategy': 'delaunay', 'strict': True})
        with self.assertRaises(InvalidConfig):
            strict.process(self.page)


class TestInferStage(unittest.TestCase):
    """Test cases for InferStage."""

    def setUp(self):
        self.page = load_page(os.path.join(FIXTURES, 'minimal_page.json'))
        sampler = SampleStage()
        sampler.initialize({})
        self.sampled = sampler.process(self.page)
        self.model = LayoutGraphModel(ModelConfig(hidden_dim=8, n_node_classes=2), seed=0)

    def test_prediction_record(self):
        """Test that decoded instances partition the page boxes."""
        stage = InferStage()
        stage.initialize({'model': self.model})
        prediction = stage.process(self.sampled)
        self.assertEqual(len(prediction.gold), 2)
        self.assertIsNotNone(prediction.node_match)

        record = prediction.to_record(['title', 'page-footer'])
        self.assertEqual(len(record['edges']), 7)
        members = sorted(m for inst in record['instances'] for m in inst['member_ids'])
        self.assertEqual(members, list(range(6)))
        self.assertIn('node_f1', record)
        self.assertEqual(stage.processed, 1)

    def test_unlabeled_page(self):
        page = Page('bare', 100, 100, (TextBox(0, (10, 10, 40, 20)), TextBox(1, (50, 10, 90, 20))))
        sampler = SampleStage()
        sampler.initialize({})
        stage = InferStage()
        stage.initialize({'model': self.model})
        prediction = stage.process(sampler.process(page))
        self.assertIsNone(prediction.node_match)
        self.assertNotIn('node_f1', prediction.to_record())

    def test_graph_mismatch_is_isolated(self):
        """Test that a graph that does not fit its page is counted as a failure."""
        page = self.page
        short = Page(page.page_id, page.width_px, page.height_px, page.boxes[:5])
        sampler = SampleStage()
        sampler.initialize({})
        sampled = sampler.process(short)
        sampled.page = page
        stage = InferStage()
        stage.initialize({'model': self.model})
        self.assertIsNone(stage.process(sampled))
        self.assertEqual(stage.failed, 1)


class TestWriteStage(unittest.TestCase):
    """Test cases for WriteStage."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()
        self.stage = WriteStage()
        self.stage.initialize({'out_dir': self.tmpdir, 'buffer_size': 2})

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_buffered_predictions(self):
        """Test that records are flushed in buffer-sized chunks."""
        for k in range(5):
            self.stage.process({'page_id': f'p{k}'})
        self.assertEqual(self.stage.flush_count, 2)
        self.stage.close()
        with open(self.stage.predictions_path) as f:
            ids = [json.loads(line)['page_id'] for line in f]
        self.assertEqual(ids, ['p0', 'p1', 'p2', 'p3', 'p4'])

    def test_close_without_records_creates_file(self):
        self.stage.close()
        self.assertEqual(os.path.getsize(self.stage.predictions_path), 0)

    def test_log(self):
        self.stage.start_log('metrics.jsonl')
        self.stage.append_log('metrics.jsonl', {'loss': 0.5, 'epoch': 0})
        self.stage.append_log('metrics.jsonl', {'loss': 0.25, 'epoch': 1})
        with open(os.path.join(self.tmpdir, 'metrics.jsonl')) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], '{"epoch": 0, "loss": 0.5}')
        self.assertEqual(len(lines), 2)

    @unittest.skipUnless(PARQUET_AVAILABLE, "pyarrow not available")
    def test_parquet_table(self):
        import pandas as pd
        path = self.stage.write_table('per_class', [{'category': 0, 'f1': 0.5}, {'category': 1, 'f1': 1.0}])
        df = pd.read_parquet(path)
        self.assertEqual(list(df['f1']), [0.5, 1.0])


class TestRender(unittest.TestCase):
    """Test cases for SVG rendering."""

    def setUp(self):
        self.page = load_page(os.path.join(FIXTURES, 'minimal_page.json'))
        sampler = SampleStage()
        sampler.initialize({'with_missing': True})
        self.sampled = sampler.process(self.page)

    def test_sampled_graph(self):
        svg = render_sampled_graph(self.page, self.sampled.graph, [(0, 2)])
        self.assertEqual(svg.count('class="box"'), 6)
        self.assertEqual(svg.count('class="edge"'), 7)
        self.assertEqual(svg.count('class="missing"'), 1)
        self.assertIn('stroke-dasharray="6,4"', svg)
        self.assertIn('<title>Graph</title>', svg)

    def test_prediction(self):
        model = LayoutGraphModel(ModelConfig(hidden_dim=8, n_node_classes=2), seed=0)
        out = model.forward(model.prepare(self.page, self.sampled.graph))
        instances, decisions = model.decode(out, self.page)
        svg = render_prediction(self.page, instances, out.pairs, decisions, ['title', 'page-footer'])
        connected = int(np.sum(decisions))
        self.assertEqual(svg.count('class="edge-connected"'), connected)
        self.assertEqual(svg.count('class="edge-rejected"'), 7 - connected)
        self.assertEqual(svg.count('class="instance"'), len(instances))


if __name__ == '__main__':
    unittest.main()
