"""
Unit tests for data I/O: page documents, FUNSD, synthetic corpora,
checkpoints and COCO export.
"""

import json
import os
import shutil
import struct
import sys
import tempfile
import unittest

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from errors import ConfigMismatch, CorruptCheckpoint, DataError, DegenerateBox, SchemaError
from dataio.coco import export_coco, read_coco, write_coco
from dataio.funsd import FUNSD_CATEGORIES, funsd_adapter
from dataio.pages import (
    category_count, category_names, load_corpus, load_page, page_to_document, parse_page,
    save_corpus, truncate_page,
)
from dataio.synth import SynthConfig, synth_generate
from layout.decode_eval import LayoutInstance
from layout.doc_model import NormBox
from layout.sampling import sample_directional, sampler_recall
from models.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint
from models.gnn_model import ModelConfig, init_model

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


def minimal_document():
    with open(os.path.join(FIXTURES, 'minimal_page.json'), 'r') as f:
        return json.load(f)


class TestPageDocument(unittest.TestCase):
    """Test cases for PageDocument parsing."""

    def test_parse_minimal(self):
        page = parse_page(minimal_document())
        self.assertEqual(page.page_id, 'minimal')
        self.assertEqual(page.n_boxes, 6)
        self.assertEqual(page.labels.groups, ((0, 1, 2), (3, 4, 5)))
        self.assertEqual(page.labels.category_names, ('title', 'page-footer'))
        self.assertEqual(page.boxes[2].text, 'layout')

    def test_document_round_trip(self):
        doc = minimal_document()
        self.assertEqual(page_to_document(parse_page(doc)), doc)

    def test_boxes_sorted_by_id(self):
        doc = minimal_document()
        doc['boxes'].reverse()
        page = parse_page(doc)
        self.assertEqual([b.id for b in page.boxes], list(range(6)))

    def assertSchemaPath(self, doc, path):
        with self.assertRaises(SchemaError) as ctx:
            parse_page(doc)
        self.assertEqual(ctx.exception.path, path)

    def test_schema_errors_name_the_field(self):
        doc = minimal_document()
        doc['schema_version'] = 2
        self.assertSchemaPath(doc, 'schema_version')

        doc = minimal_document()
        doc['width'] = 0
        self.assertSchemaPath(doc, 'width')

        doc = minimal_document()
        doc['boxes'][1]['bbox'] = [1, 2, 3]
        self.assertSchemaPath(doc, 'boxes[1].bbox')

        doc = minimal_document()
        doc['boxes'][3]['id'] = 1
        self.assertSchemaPath(doc, 'boxes[3].id')

        doc = minimal_document()
        doc['labels']['node_category'][2] = 7
        self.assertSchemaPath(doc, 'labels.node_category[2]')

        doc = minimal_document()
        doc['labels']['groups'] = [[0, 1, 2], [3, 4]]
        self.assertSchemaPath(doc, 'labels.groups')

        doc = minimal_document()
        doc['labels']['links'] = [[0, 5]]
        self.assertSchemaPath(doc, 'labels.links[0]')

    def test_sparse_ids_rejected(self):
        doc = minimal_document()
        del doc['labels']
        doc['boxes'][5]['id'] = 9
        self.assertSchemaPath(doc, 'boxes')

    def test_degenerate_box(self):
        doc = minimal_document()
        doc['boxes'][0]['bbox'] = [100, 100, 100, 120]
        with self.assertRaises(DegenerateBox):
            parse_page(doc)

    def test_unlabeled_page(self):
        page = load_page(os.path.join(FIXTURES, 'one_box_page.json'))
        self.assertIsNone(page.labels)
        self.assertEqual(page.norm_boxes()[0].as_tuple(), (50 / 600, 40 / 800, 250 / 600, 70 / 800))


class TestCorpus(unittest.TestCase):
    """Test cases for corpus readers and writers."""

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_jsonl_round_trip(self):
        pages = [parse_page(minimal_document())]
        path = os.path.join(self.tmpdir, 'corpus.jsonl')
        self.assertEqual(save_corpus(pages, path), 1)
        loaded = load_corpus(path)
        self.assertEqual(page_to_document(loaded[0]), page_to_document(pages[0]))

    def test_jsonl_error_names_line(self):
        path = os.path.join(self.tmpdir, 'bad.jsonl')
        doc = minimal_document()
        doc['page_id'] = ''
        with open(path, 'w') as f:
            f.write(json.dumps(minimal_document()) + '\n')
            f.write(json.dumps(doc) + '\n')
        with self.assertRaises(SchemaError) as ctx:
            load_corpus(path)
        self.assertEqual(ctx.exception.path, f'{path}:2:page_id')

    def test_directory_corpus(self):
        for name in ('b.json', 'a.json'):
            doc = minimal_document()
            doc['page_id'] = name
            with open(os.path.join(self.tmpdir, name), 'w') as f:
                json.dump(doc, f)
        pages = load_corpus(self.tmpdir)
        self.assertEqual([p.page_id for p in pages], ['a.json', 'b.json'])

    def test_missing_corpus(self):
        with self.assertRaises(DataError):
            load_corpus(os.path.join(self.tmpdir, 'nope.jsonl'))

    def test_truncate_page(self):
        page = truncate_page(parse_page(minimal_document()), 4)
        self.assertEqual(page.n_boxes, 4)
        self.assertEqual(page.labels.groups, ((0, 1, 2), (3,)))
        self.assertEqual(page.labels.node_category, (0, 0, 0, 1))

    def test_category_helpers(self):
        pages = [parse_page(minimal_document())]
        self.assertEqual(category_count(pages), 2)
        self.assertEqual(category_names(pages), ['title', 'page-footer'])


class TestFunsd(unittest.TestCase):
    """Test cases for the FUNSD adapter."""

    def setUp(self):
        self.root = os.path.join(FIXTURES, 'funsd')
        self.path = os.path.join(self.root, 'annotations', 'form_0001.json')

    def test_word_level(self):
        page = load_page(self.path, 'word')
        self.assertEqual(page.page_id, 'form_0001')
        self.assertEqual(page.n_boxes, 8)
        self.assertEqual((page.width_px, page.height_px), (330, 190))
        self.assertEqual(page.labels.groups, ((0,), (1,), (2, 3, 4), (5,), (6, 7)))
        self.assertEqual(page.labels.node_category, (0, 1, 2, 2, 2, 1, 2, 2))
        self.assertEqual(page.labels.links, ((1, 2), (3, 4)))
        self.assertEqual(page.labels.category_names, FUNSD_CATEGORIES)
        self.assertIsNone(page.image_path)

    def test_entity_level(self):
        page = load_page(self.path, 'entity')
        self.assertEqual(page.n_boxes, 5)
        self.assertEqual(page.boxes[2].bbox_px, (80.0, 60.0, 220.0, 80.0))
        self.assertEqual(page.boxes[2].text, 'January 5 1999')
        self.assertEqual(page.labels.groups, tuple((k,) for k in range(5)))
        self.assertEqual(page.labels.links, ((1, 2), (3, 4)))

    def test_directory_detection(self):
        pages = load_corpus(self.root)
        self.assertEqual(len(pages), 1)
        self.assertEqual(pages[0].n_boxes, 8)

    def test_explicit_size(self):
        doc = {'form': [{'id': 0, 'label': 'other', 'words': [{'text': 'x', 'box': [0, 0, 10, 10]}]}]}
        page = funsd_adapter(doc, size=(100, 50))
        self.assertEqual(page.norm_boxes()[0].as_tuple(), (0.0, 0.0, 0.1, 0.2))

    def test_unknown_label(self):
        with self.assertRaises(SchemaError):
            funsd_adapter({'form': [{'id': 0, 'label': 'footer', 'words': []}]})


class TestSynth(unittest.TestCase):
    """Test cases for synthetic page generation."""

    def setUp(self):
        self.cfg = SynthConfig(seed=3, pages=4, eval_pages=2)

    def test_deterministic(self):
        self.assertEqual(synth_generate(self.cfg, 'train'), synth_generate(self.cfg, 'train'))

    def test_page_does_not_depend_on_count(self):
        fewer = synth_generate(SynthConfig(seed=3, pages=2), 'train')
        self.assertEqual(fewer, synth_generate(self.cfg, 'train')[:2])

    def test_splits_differ(self):
        train = synth_generate(self.cfg, 'train')
        evaluation = synth_generate(self.cfg, 'eval')
        self.assertEqual(len(evaluation), 2)
        self.assertEqual(train[0]['page_id'], 'synth-3-train-00000')
        self.assertEqual(evaluation[0]['page_id'], 'synth-3-eval-00000')
        self.assertNotEqual(train[0]['boxes'], evaluation[0]['boxes'])

    def test_empty_split(self):
        self.assertEqual(synth_generate(SynthConfig(pages=0), 'train'), [])

    def test_pages_parse_and_groups_are_connected(self):
        for doc in synth_generate(self.cfg, 'train'):
            page = parse_page(doc)
            graph = sample_directional(page.norm_boxes())
            connectivity, coverage = sampler_recall(graph, page.labels)
            self.assertEqual(connectivity, 1.0)
            self.assertIsNone(coverage)

    def test_config_round_trip(self):
        self.assertEqual(SynthConfig.from_dict(self.cfg.to_dict()), self.cfg)


class TestCheckpoint(unittest.TestCase):
    """Test cases for checkpoint files."""

    def setUp(self):
        self.cfg = ModelConfig(hidden_dim=8)
        self.params = init_model(self.cfg, seed=5)
        self.data = checkpoint_bytes(self.params, self.cfg, {'lr': 0.001}, seed=5, metadata={'epoch': 3})

    def test_round_trip(self):
        ckpt = parse_checkpoint(self.data, self.cfg)
        self.assertEqual(ckpt.model_config, self.cfg)
        self.assertEqual(ckpt.seed, 5)
        self.assertEqual(ckpt.metadata, {'epoch': 3})
        self.assertEqual(ckpt.optimizer, {'lr': 0.001})
        for name in self.params:
            np.testing.assert_allclose(ckpt.params[name].data, self.params[name].data, rtol=1e-6, atol=1e-7)
        self.assertEqual(checkpoint_bytes(ckpt.params, ckpt.model_config, ckpt.optimizer, ckpt.seed,
                                          ckpt.metadata), self.data)

    def test_layout(self):
        self.assertEqual(self.data[:4], MAGIC)

    def test_file_round_trip(self):
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, 'model.p2g')
            self.assertEqual(save_checkpoint(path, self.params, self.cfg), os.path.getsize(path))
            self.assertEqual(load_checkpoint(path).model_config, self.cfg)
        finally:
            shutil.rmtree(tmpdir)

    def test_truncated(self):
        with self.assertRaises(CorruptCheckpoint):
            parse_checkpoint(self.data[:-4])
        with self.assertRaises(CorruptCheckpoint):
            parse_checkpoint(self.data[:10])

    def test_bad_magic(self):
        with self.assertRaises(CorruptCheckpoint):
            parse_checkpoint(b'XXXX' + self.data[4:])

    def with_header(self, edit):
        (header_len,) = struct.unpack('<I', self.data[4:8])
        header = json.loads(self.data[8:8 + header_len].decode('utf-8'))
        edit(header)
        raw = json.dumps(header).encode('utf-8')
        return MAGIC + struct.pack('<I', len(raw)) + raw + self.data[8 + header_len:]

    def test_malformed_manifest(self):
        """Test that malformed manifest entries surface as CorruptCheckpoint."""
        edits = [
            lambda h: h['manifest'][0].pop('offset'),
            lambda h: h['manifest'][0].pop('name'),
            lambda h: h['manifest'][0].update(shape='wide'),
            lambda h: h['manifest'][0].update(offset='zero'),
            lambda h: h['manifest'][0].update(shape=[3, -1]),
            lambda h: h.update(manifest=7),
            lambda h: h.update(seed='five'),
        ]
        for edit in edits:
            with self.assertRaises(CorruptCheckpoint) as ctx:
                parse_checkpoint(self.with_header(edit))
            self.assertEqual(ctx.exception.exit_code, 3)

    def test_config_mismatch(self):
        with self.assertRaises(ConfigMismatch) as ctx:
            parse_checkpoint(self.data, ModelConfig(hidden_dim=16, use_polar=True))
        self.assertEqual(ctx.exception.fields, ['hidden_dim', 'use_polar'])
        self.assertEqual(ctx.exception.exit_code, 2)


class TestCocoExport(unittest.TestCase):
    """Test cases for the COCO detection document."""

    def setUp(self):
        self.page = parse_page(minimal_document())
        self.instances = [[
            LayoutInstance((0, 1, 2), NormBox(0.1, 0.1, 0.4, 0.12), 0, 0.75),
            LayoutInstance((3, 4, 5), NormBox(0.1, 0.2, 0.4, 0.22), 1, 0.5),
        ]]

    def test_export(self):
        doc = export_coco([self.page], self.instances, ['title', 'page-footer'])
        self.assertEqual(doc['categories'], [{'id': 1, 'name': 'title'}, {'id': 2, 'name': 'page-footer'}])
        self.assertEqual(doc['images'][0]['page_id'], 'minimal')
        det = doc['detections'][1]
        self.assertEqual((det['id'], det['image_id'], det['category_id']), (2, 1, 2))
        np.testing.assert_allclose(det['bbox'], [100.0, 200.0, 300.0, 20.0])
        self.assertEqual(det['member_ids'], [3, 4, 5])

    def test_read_back(self):
        doc = export_coco([self.page], self.instances, ['title', 'page-footer'])
        tmpdir = tempfile.mkdtemp()
        try:
            path = os.path.join(tmpdir, 'detections_coco.json')
            write_coco(doc, path)
            with open(path, 'r') as f:
                detections = read_coco(json.load(f))
        finally:
            shutil.rmtree(tmpdir)
        self.assertEqual(len(detections), 2)
        self.assertEqual(detections[0].score, 0.75)

    def test_read_rejects_unknown_category(self):
        doc = export_coco([self.page], self.instances, ['title', 'page-footer'])
        doc['detections'][0]['category_id'] = 9
        with self.assertRaises(SchemaError) as ctx:
            read_coco(doc)
        self.assertEqual(ctx.exception.path, 'detections[0].category_id')


if __name__ == '__main__':
    unittest.main()
