"""
Unit tests for the document model: box normalization and geometry helpers.
"""

import os
import sys
import unittest

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from errors import DegenerateBox, EmptySet
from layout.doc_model import (
    GoldLabels, NormBox, Page, TextBox, boxes_to_array, interval_overlap_1d,
    layout_vector, layout_width, min_bounding_rect, normalize_box,
)


def make_page(bboxes, width=100, height=200, labels=None):
    boxes = tuple(TextBox(k, tuple(b)) for k, b in enumerate(bboxes))
    return Page('p', width, height, boxes, labels)


class TestNormalizeBox(unittest.TestCase):
    """Test cases for pixel to normalized conversion."""

    def test_divides_by_page_size(self):
        page = make_page([(10, 20, 30, 60)])
        b = normalize_box(page.boxes[0], page)
        self.assertEqual(b.as_tuple(), (0.1, 0.1, 0.3, 0.3))

    def test_clamps_to_page(self):
        page = make_page([(-5, 190, 120, 250)])
        b = normalize_box(page.boxes[0], page)
        self.assertEqual(b.as_tuple(), (0.0, 0.95, 1.0, 1.0))

    def test_zero_width_rejected(self):
        page = make_page([(10, 10, 10, 20)])
        with self.assertRaises(DegenerateBox):
            normalize_box(page.boxes[0], page)

    def test_box_outside_page_rejected(self):
        page = make_page([(150, 10, 180, 20)])
        with self.assertRaises(DegenerateBox):
            page.norm_boxes()

    def test_norm_boxes_in_id_order(self):
        page = make_page([(0, 0, 10, 10), (50, 100, 100, 200)])
        boxes = page.norm_boxes()
        self.assertEqual(len(boxes), 2)
        self.assertEqual(boxes[1].as_tuple(), (0.5, 0.5, 1.0, 1.0))
        self.assertIs(page.norm_boxes(), boxes)


class TestGeometry(unittest.TestCase):
    """Test cases for layout vectors and rectangle helpers."""

    def test_layout_vector_eight(self):
        v = layout_vector(NormBox(0.1, 0.2, 0.5, 0.4), 'eight')
        np.testing.assert_allclose(v, [0.1, 0.2, 0.5, 0.4, 0.3, 0.3, 0.4, 0.2])
        self.assertEqual(layout_width('eight'), 8)

    def test_layout_vector_four(self):
        v = layout_vector(NormBox(0.1, 0.2, 0.5, 0.4), 'four')
        np.testing.assert_allclose(v, [0.1, 0.2, 0.4, 0.2])
        self.assertEqual(layout_width('four'), 4)

    def test_min_bounding_rect(self):
        r = min_bounding_rect([NormBox(0.1, 0.5, 0.2, 0.6), NormBox(0.3, 0.1, 0.4, 0.2)])
        self.assertEqual(r.as_tuple(), (0.1, 0.1, 0.4, 0.6))

    def test_min_bounding_rect_single(self):
        b = NormBox(0.1, 0.2, 0.3, 0.4)
        self.assertEqual(min_bounding_rect([b]), b)

    def test_min_bounding_rect_empty(self):
        with self.assertRaises(EmptySet):
            min_bounding_rect([])

    def test_interval_overlap(self):
        self.assertAlmostEqual(interval_overlap_1d((0.0, 2.0), (1.0, 3.0)), 1.0)
        self.assertEqual(interval_overlap_1d((0.0, 1.0), (2.0, 3.0)), 0.0)
        self.assertEqual(interval_overlap_1d((0.0, 1.0), (1.0, 2.0)), 0.0)

    def test_boxes_to_array(self):
        arr = boxes_to_array([NormBox(0.1, 0.2, 0.3, 0.4)])
        self.assertEqual(arr.shape, (1, 4))
        self.assertEqual(boxes_to_array([]).shape, (0, 4))

    def test_group_of(self):
        labels = GoldLabels(node_category=(0, 0, 1), groups=((0, 2), (1,)))
        self.assertEqual(labels.group_of(), [0, 1, 0])


if __name__ == '__main__':
    unittest.main()
