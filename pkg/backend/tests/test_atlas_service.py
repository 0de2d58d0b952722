#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
纹理图集单元测试
"""

import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.base import AtlasCapacityError, ValidationError
from models.geometry import TriMesh
from models.primitives import icosphere
from services.atlas_service import atlas_service, grid_size, minimal_resolution, pixels_to_uv, uv_to_pixels


def footprint_labels(pixels, resolution, test_case):
    """纹素中心落在三角形内(含边界)的纹素归属; 发现重叠时测试失败"""
    labels = np.full((resolution, resolution), -1, dtype=np.int64)
    cols, rows = np.meshgrid(np.arange(resolution), np.arange(resolution))
    centers = np.stack([cols.ravel() + 0.5, rows.ravel() + 0.5], axis=1)
    for f, (a, b, c) in enumerate(pixels):
        v0, v1 = b - a, c - a
        det = v0[0] * v1[1] - v1[0] * v0[1]
        d = centers - a
        l1 = (d[:, 0] * v1[1] - v1[0] * d[:, 1]) / det
        l2 = (v0[0] * d[:, 1] - d[:, 0] * v0[1]) / det
        inside = (l1 >= -1e-9) & (l2 >= -1e-9) & (1.0 - l1 - l2 >= -1e-9)
        hit = inside.reshape(resolution, resolution)
        test_case.assertTrue(np.any(hit), f"面 {f} 没有覆盖任何纹素")
        test_case.assertTrue(np.all(labels[hit] < 0), f"面 {f} 与其他面重叠")
        labels[hit] = f
    return labels


class TestAtlasLayout(unittest.TestCase):
    """图集布局测试"""

    def test_grid_size(self):
        """测试每行格子数"""
        self.assertEqual(grid_size(1), 1)
        self.assertEqual(grid_size(2), 1)
        self.assertEqual(grid_size(3), 2)
        self.assertEqual(grid_size(8), 2)
        self.assertEqual(grid_size(9), 3)
        self.assertEqual(grid_size(200), 10)

    def test_minimal_resolution(self):
        """测试最小分辨率及其可用性"""
        self.assertEqual(minimal_resolution(8, 2), 14)
        vertices, faces = icosphere(1)
        mesh = TriMesh(vertices, faces)
        minimal = minimal_resolution(mesh.face_count, 1)
        uv = atlas_service.build_face_atlas(mesh, minimal, 1)
        self.assertEqual(uv.shape, (80, 3, 2))

    def test_capacity_error(self):
        """测试分辨率不足时报告最小分辨率"""
        vertices, faces = icosphere(2)
        mesh = TriMesh(vertices, faces)
        with self.assertRaises(AtlasCapacityError) as ctx:
            atlas_service.build_face_atlas(mesh, 32, 2)
        self.assertEqual(ctx.exception.minimal_resolution, minimal_resolution(320, 2))
        with self.assertRaises(ValidationError):
            atlas_service.layout(10, 64, 0)


class TestAtlasFootprints(unittest.TestCase):
    """图集像素足迹测试"""

    def setUp(self):
        vertices, faces = icosphere(1)
        rng = np.random.default_rng(5)
        # 打乱比例, 使直角边长度不同
        self.mesh = TriMesh(vertices * rng.uniform(0.5, 2.0, size=3), faces)

    def test_uv_in_unit_square(self):
        """测试 UV 全部落在 [0,1] 内"""
        uv = atlas_service.build_face_atlas(self.mesh, 128, 2)
        self.assertTrue(np.all((uv >= 0.0) & (uv <= 1.0)))

    def test_footprints_disjoint_with_gap(self):
        """测试不同面的纹素足迹不相交, 且切比雪夫距离大于 gap (穷举)"""
        for resolution, gap in ((128, 1), (160, 2), (256, 3)):
            pixels = atlas_service.build_face_pixels(self.mesh, resolution, gap)
            labels = footprint_labels(pixels, resolution, self)
            padded = np.pad(labels, gap, constant_values=-1)
            for dy in range(-gap, gap + 1):
                for dx in range(-gap, gap + 1):
                    shifted = padded[gap + dy:gap + dy + resolution, gap + dx:gap + dx + resolution]
                    clash = (labels >= 0) & (shifted >= 0) & (labels != shifted)
                    self.assertFalse(np.any(clash), f"分辨率 {resolution}, 间隔 {gap} 时面距离过近")

    def test_uv_pixel_conversion(self):
        """测试像素与 UV 互相转换, v=0 为纹理底部"""
        pixels = np.array([[0.0, 0.0], [64.0, 32.0], [128.0, 128.0]])
        uv = pixels_to_uv(pixels, 128)
        np.testing.assert_allclose(uv, [[0.0, 1.0], [0.5, 0.75], [1.0, 0.0]])
        np.testing.assert_allclose(uv_to_pixels(uv, 128), pixels)


if __name__ == '__main__':
    unittest.main()
