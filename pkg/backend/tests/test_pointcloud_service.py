#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
点云工具服务单元测试
"""

import math
import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config import Config
from models.base import BindError, InsufficientPointsError, ValidationError
from models.geometry import PointCloud
from models.rotation import RotationSpec, quaternion_to_matrix, to_quaternion
from services.pointcloud_service import KnnIndex, PointCloudService


def plane_cloud(n=10, z=0.0):
    xs, ys = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n))
    return np.column_stack([xs.ravel(), ys.ravel(), np.full(n * n, z)])


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5 ** 0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


class TestKnnIndex(unittest.TestCase):
    """近邻索引测试"""

    def test_sorted_and_clamped(self):
        """测试结果按距离升序, k 超过点数时返回全部点"""
        points = np.array([[0.0, 0, 0], [3.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        index = KnnIndex(points)
        distances, indices = index.query([[0.1, 0, 0]], 10)
        self.assertEqual(indices.shape, (1, 4))
        np.testing.assert_array_equal(indices[0], [0, 2, 3, 1])
        self.assertTrue(np.all(np.diff(distances[0]) >= 0.0))

    def test_ties_by_index(self):
        """测试等距点按序号排序"""
        points = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
        _, indices = KnnIndex(points).query([[0.0, 0, 0]], 3)
        np.testing.assert_array_equal(indices[0], [0, 1, 2])


class TestNormalEstimation(unittest.TestCase):
    """法线估计测试"""

    def setUp(self):
        self.service = PointCloudService()

    def test_plane_normals(self):
        """测试平面点云法线为 ±Z, 给出参考点后全部朝向参考点"""
        points = plane_cloud(10)
        normals = self.service.estimate_normals_from_pointcloud(points, k=8)
        np.testing.assert_allclose(np.abs(normals[:, 2]), 1.0, atol=1e-6)
        oriented = self.service.estimate_normals_from_pointcloud(points, k=8, orientation_reference=(0, 0, 10))
        np.testing.assert_allclose(oriented, np.tile([0.0, 0.0, 1.0], (100, 1)), atol=1e-6)

    def test_unit_length(self):
        """测试法线为单位向量"""
        rng = np.random.default_rng(0)
        normals = self.service.estimate_normals_from_pointcloud(rng.normal(size=(200, 3)), k=10)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-9)

    def test_sphere_normals(self):
        """测试球面点云法线与径向的夹角"""
        points = fibonacci_sphere(2000)
        normals = self.service.estimate_normals_from_pointcloud(points, k=12)
        cos = np.abs(np.sum(normals * points, axis=1))
        angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        self.assertGreaterEqual(np.mean(angles <= 2.0), 0.99)

    def test_rigid_invariance(self):
        """测试刚体变换下法线(忽略符号)不变"""
        points = plane_cloud(8)
        rotation = quaternion_to_matrix(to_quaternion(RotationSpec.euler_xyz(0.3, -0.7, 1.2)))
        moved = points @ rotation.T + np.array([1.0, -2.0, 0.5])
        n0 = self.service.estimate_normals_from_pointcloud(points, k=8)
        n1 = self.service.estimate_normals_from_pointcloud(moved, k=8)
        cos = np.abs(np.sum((n0 @ rotation.T) * n1, axis=1))
        np.testing.assert_allclose(cos, 1.0, atol=1e-6)

    def test_degenerate_flag(self):
        """测试共线点的邻域退化标记"""
        points = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        normals, flags = self.service.estimate_normals_from_pointcloud(points, k=3, return_flags=True)
        self.assertTrue(np.all(flags))
        self.assertEqual(normals.shape, (3, 3))

    def test_errors(self):
        """测试点数不足、k 过小与全部重合"""
        with self.assertRaises(InsufficientPointsError):
            self.service.estimate_normals_from_pointcloud(np.zeros((2, 3)) + [[0, 0, 0], [1, 0, 0]], k=3)
        with self.assertRaises(ValidationError):
            self.service.estimate_normals_from_pointcloud(plane_cloud(4), k=2)
        with self.assertRaises(ValidationError):
            self.service.estimate_normals_from_pointcloud(np.ones((5, 3)), k=3)

    def test_orient_outward(self):
        """测试法线朝向背离质心"""
        points = fibonacci_sphere(200)
        normals = self.service.orient_outward(points, -points)
        self.assertTrue(np.all(np.sum(normals * points, axis=1) > 0.0))


class TestCameraColoring(unittest.TestCase):
    """按相机方向着色测试"""

    def setUp(self):
        self.service = PointCloudService()
        self.points = plane_cloud(5)
        self.normals = np.tile([0.0, 0.0, 1.0], (25, 1))

    def test_camera_above_keeps_colors(self):
        """测试相机在上方时全部为正向点"""
        colors = self.service.approximate_colors_from_camera(self.points, self.normals, (0, 0, 5),
                                                             front_colors=(0.1, 0.2, 0.3))
        np.testing.assert_allclose(colors, np.tile([0.1, 0.2, 0.3, 1.0], (25, 1)))

    def test_camera_below_uses_back_color(self):
        """测试相机在下方时全部为背向点"""
        colors = self.service.approximate_colors_from_camera(self.points, self.normals, (0, 0, -5),
                                                             back_color=(0.9, 0.9, 0.9), back_alpha=0.2)
        np.testing.assert_allclose(colors, np.tile([0.9, 0.9, 0.9, 0.2], (25, 1)))

    def test_defaults(self):
        """测试默认背向颜色与透明度"""
        colors = self.service.approximate_colors_from_camera(self.points, self.normals, (0, 0, -5))
        np.testing.assert_allclose(colors[0, :3], Config.BACK_COLOR)
        self.assertEqual(colors[0, 3], Config.BACK_ALPHA)

    def test_sphere_split(self):
        """测试远处相机下正反面划分与法线 z 分量符号一致"""
        points = fibonacci_sphere(500)
        colors = self.service.approximate_colors_from_camera(points, points, (0, 0, 1e6))
        back = colors[:, 3] < 1.0
        np.testing.assert_array_equal(back, points[:, 2] < 0.0)

    def test_scale_invariance(self):
        """测试正反面划分与距离缩放无关"""
        camera = np.array([0.3, -0.2, 0.5])
        a = self.service.approximate_colors_from_camera(self.points, self.normals, camera)
        b = self.service.approximate_colors_from_camera(self.points * 10, self.normals, camera * 10)
        np.testing.assert_array_equal(a[:, 3], b[:, 3])

    def test_bind_errors(self):
        """测试长度不一致"""
        with self.assertRaises(BindError):
            self.service.approximate_colors_from_camera(self.points, self.normals[:3], (0, 0, 5))
        with self.assertRaises(BindError):
            self.service.approximate_colors_from_camera(self.points, self.normals, (0, 0, 5),
                                                        front_colors=np.ones((3, 3)))

    def test_colorize_pointcloud(self):
        """测试直接为场景中的点云着色"""
        cloud = PointCloud(self.points, colors=(0.5, 0.5, 0.5), normals=self.normals)
        self.service.colorize_pointcloud(cloud, (0, 0, -5), back_alpha=0.0)
        self.assertTrue(np.all(cloud.colors[:, 3] == 0.0))


if __name__ == '__main__':
    unittest.main()
