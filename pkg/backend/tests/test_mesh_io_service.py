#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
PLY / OBJ 文件读写单元测试
"""

import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.appearance import FileTextureColors
from models.base import MeshIOError
from models.geometry import PointCloud, TriMesh
from models.primitives import make_primitive
from services.mesh_io_service import mesh_io_service


class MeshIOTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.tmp_dir, name)

    def write(self, name, content):
        path = self.path(name)
        with open(path, 'wb') as f:
            f.write(content if isinstance(content, bytes) else content.encode('utf-8'))
        return path


class TestPly(MeshIOTestCase):
    """PLY 读写测试"""

    def setUp(self):
        super().setUp()
        rng = np.random.default_rng(2)
        self.points = rng.normal(size=(50, 3))
        normals = rng.normal(size=(50, 3))
        self.normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        self.colors = np.column_stack([rng.integers(0, 256, size=(50, 4)) / 255.0])

    def test_ascii_and_binary(self):
        """测试 ASCII 与二进制格式保存后读取一致"""
        for binary in (False, True):
            path = self.path(f"cloud_{binary}.ply")
            mesh_io_service.save_ply(path, self.points, self.normals, self.colors, binary=binary)
            ply = mesh_io_service.read_ply(path)
            np.testing.assert_array_equal(ply.points, self.points)
            np.testing.assert_array_equal(ply.normals, self.normals)
            np.testing.assert_allclose(ply.colors, self.colors, atol=1e-12)
            self.assertIsNone(ply.faces)

    def test_rgb_gets_opaque_alpha(self):
        """测试只有 RGB 时 alpha 为 1"""
        path = self.path('rgb.ply')
        mesh_io_service.save_ply(path, self.points, colors=self.colors[:, :3])
        ply = mesh_io_service.read_ply(path)
        np.testing.assert_array_equal(ply.colors[:, 3], 1.0)
        self.assertIsNone(ply.normals)

    def test_mesh_with_polygons(self):
        """测试多边形面按扇形三角化, load_ply 返回网格"""
        content = ("ply\nformat ascii 1.0\ncomment quad\nelement vertex 4\nproperty float x\nproperty float y\n"
                   "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
                   "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
        path = self.write('quad.ply', content)
        mesh = mesh_io_service.load_ply(path)
        self.assertIsInstance(mesh, TriMesh)
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])

    def test_load_pointcloud(self):
        """测试没有 face 元素时读取为点云"""
        path = self.path('cloud.ply')
        mesh_io_service.save_ply(path, self.points, colors=self.colors, binary=True)
        cloud = mesh_io_service.load_ply(path)
        self.assertIsInstance(cloud, PointCloud)
        self.assertEqual(cloud.point_count, 50)

    def test_save_renderable(self):
        """测试网格保存后面与顶点不变"""
        cube = make_primitive('cube', size=1.0)
        path = self.path('cube.ply')
        mesh_io_service.save_renderable_ply(cube, path, binary=True)
        ply = mesh_io_service.read_ply(path)
        np.testing.assert_array_equal(ply.faces, cube.faces)
        np.testing.assert_array_equal(ply.points, cube.vertices)

    def test_invalid_files(self):
        """测试格式错误的文件"""
        cases = {
            'missing.ply': None,
            'magic.ply': "plx\nformat ascii 1.0\nend_header\n",
            'big.ply': "ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n",
            'noxyz.ply': "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n",
            'type.ply': "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n1\n",
            'short.ply': ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                          "property float z\nend_header\n0 0 0\n"),
            'index.ply': ("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                          "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
                          "0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"),
        }
        for name, content in cases.items():
            path = self.path(name) if content is None else self.write(name, content)
            with self.assertRaises(MeshIOError, msg=name):
                mesh_io_service.read_ply(path)

    def test_fuzz_truncated_and_garbage(self):
        """测试截断或损坏的数据只会引发 MeshIOError"""
        rng = np.random.default_rng(9)
        faces = np.array([[0, 1, 2], [2, 3, 4]])
        for binary in (False, True):
            path = self.path('source.ply')
            mesh_io_service.save_ply(path, self.points, self.normals, self.colors, faces=faces, binary=binary)
            with open(path, 'rb') as f:
                content = f.read()
            header_end = content.index(b'end_header\n') + len(b'end_header\n')
            for _ in range(60):
                cut = int(rng.integers(header_end, len(content)))
                garbage = rng.integers(0, 256, size=int(rng.integers(0, 64)), dtype=np.uint8).tobytes()
                for variant in (content[:cut], content[:cut] + garbage):
                    fuzz_path = self.write('fuzz.ply', variant)
                    try:
                        mesh_io_service.read_ply(fuzz_path)
                    except MeshIOError:
                        pass


class TestObj(MeshIOTestCase):
    """OBJ 读写测试"""

    def test_round_trip_with_uv(self):
        """测试带纹理坐标保存后读取一致, 并生成 .mtl 文件纹理"""
        mesh = make_primitive('cube', size=2.0)
        faces_uv = np.random.default_rng(4).random((mesh.face_count, 3, 2))
        texture = self.path('tex.png')
        path = self.path('cube.obj')
        mesh_io_service.save_obj(path, mesh, faces_uv=faces_uv, texture_path=texture)
        loaded, loaded_uv = mesh_io_service.load_obj(path)
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.faces, mesh.faces)
        np.testing.assert_array_equal(loaded_uv, faces_uv)
        self.assertTrue(os.path.exists(self.path('cube.mtl')))
        self.assertIsInstance(loaded.appearance.colors, FileTextureColors)
        self.assertEqual(os.path.abspath(loaded.appearance.colors.path), os.path.abspath(texture))
        self.assertFalse(loaded.appearance.colors.is_loaded)

    def test_polygons_and_negative_indices(self):
        """测试多边形三角化与负索引"""
        content = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n"
        mesh, faces_uv = mesh_io_service.load_obj(self.write('quad.obj', content))
        np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])
        self.assertIsNone(faces_uv)

    def test_partial_uv_ignored(self):
        """测试部分面缺少 UV 时忽略全部 UV"""
        content = ("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 0 1\n"
                   "f 1/1 2/2 3/3\nf 2 4 3\n")
        _, faces_uv = mesh_io_service.load_obj(self.write('mixed.obj', content))
        self.assertIsNone(faces_uv)

    def test_invalid_obj(self):
        """测试索引越界、索引格式不一致与数值错误"""
        cases = {
            'range.obj': "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n",
            'zero.obj': "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n",
            'style.obj': "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2 3\n",
            'number.obj': "v 0 0 zero\n",
            'short.obj': "v 0 0 0\nv 1 0 0\nf 1 2\n",
            'degenerate.obj': "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n",
        }
        for name, content in cases.items():
            with self.assertRaises(MeshIOError, msg=name):
                mesh_io_service.load_obj(self.write(name, content))


if __name__ == '__main__':
    unittest.main()
