#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
QEM 网格简化单元测试
"""

import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.base import InvalidTargetError
from models.geometry import TriMesh
from models.primitives import icosphere
from services.simplify_service import MIN_TARGET_FACES, simplify_service


def grid_mesh(n=11, size=2.0):
    """边长 size 的平面网格, n×n 个顶点"""
    xs, ys = np.meshgrid(np.linspace(-size / 2, size / 2, n), np.linspace(-size / 2, size / 2, n))
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])
    faces = []
    for r in range(n - 1):
        for c in range(n - 1):
            a = r * n + c
            faces.append([a, a + 1, a + n + 1])
            faces.append([a, a + n + 1, a + n])
    return TriMesh(vertices, np.array(faces))


def sample_faces(mesh, per_face=6, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.random((mesh.face_count, per_face, 2))
    flip = u.sum(axis=2) > 1.0
    u[flip] = 1.0 - u[flip]
    v = mesh.vertices[mesh.faces]
    points = (v[:, None, 0] + u[..., :1] * (v[:, None, 1] - v[:, None, 0])
              + u[..., 1:] * (v[:, None, 2] - v[:, None, 0]))
    return points.reshape(-1, 3)


class TestSimplify(unittest.TestCase):
    """网格简化测试"""

    def setUp(self):
        vertices, faces = icosphere(3)
        self.sphere = TriMesh(vertices, faces)

    def test_sphere_reaches_target(self):
        """测试 1280 面球简化到不超过 320 面且形状偏差小"""
        self.assertEqual(self.sphere.face_count, 1280)
        result, info = simplify_service.simplify_mesh(self.sphere, 320, return_info=True)
        self.assertLessEqual(result.face_count, 320)
        self.assertTrue(info['reached_target'])
        self.assertEqual(info['faces'], result.face_count)
        radial = np.abs(np.linalg.norm(sample_faces(result), axis=1) - 1.0)
        self.assertLess(float(radial.max()), 0.03)
        np.testing.assert_array_equal(np.unique(result.faces), np.arange(result.vertex_count))

    def test_sphere_stays_manifold(self):
        """测试简化后每条边恰好被两个面共用"""
        result = simplify_service.simplify_mesh(self.sphere, 200)
        e = np.concatenate([result.faces[:, [0, 1]], result.faces[:, [1, 2]], result.faces[:, [2, 0]]])
        e.sort(axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        self.assertTrue(np.all(counts == 2))
        centroids = result.vertices[result.faces].mean(axis=1)
        self.assertTrue(np.all(np.sum(result.face_normals() * centroids, axis=1) > 0.0))

    def test_plane_stays_planar(self):
        """测试平面网格简化后仍在平面内, 面积与边界不变"""
        mesh = grid_mesh(11)
        result = simplify_service.simplify_mesh(mesh, 50)
        self.assertLessEqual(result.face_count, 50)
        np.testing.assert_allclose(result.vertices[:, 2], 0.0, atol=1e-9)
        self.assertTrue(np.all(np.abs(result.vertices[:, :2]) <= 1.0 + 1e-9))
        self.assertAlmostEqual(result.surface_area(), 4.0, places=6)
        self.assertTrue(np.all(result.face_normals()[:, 2] > 0.0))

    def test_target_not_below_current(self):
        """测试目标不小于当前面数时原样返回"""
        result, info = simplify_service.simplify_mesh(self.sphere, 5000, return_info=True)
        self.assertIs(result, self.sphere)
        self.assertTrue(info['reached_target'])

    def test_invalid_target(self):
        """测试目标面数过小"""
        with self.assertRaises(InvalidTargetError):
            simplify_service.simplify_mesh(self.sphere, MIN_TARGET_FACES - 1)


if __name__ == '__main__':
    unittest.main()
