#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行入口单元测试
"""

import io
import json
import math
import os
import shutil
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from cli import EXIT_CODES, main
from models.light import BackgroundLight
from models.primitives import make_primitive
from models.scene import Scene
from services.image_io_service import image_io_service
from services.mesh_io_service import mesh_io_service
from services.scene_io_service import dumps_document, scene_io_service


def plane_cloud(n=10):
    xs, ys = np.meshgrid(np.linspace(-1, 1, n), np.linspace(-1, 1, n))
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n * n)])


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = math.pi * (1.0 + 5 ** 0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


class TestCli(unittest.TestCase):
    """子命令与退出码测试"""

    def setUp(self):
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.tmp_dir, name)

    def run_cli(self, *argv):
        stdout = io.StringIO()
        self.stderr = io.StringIO()
        with patch('sys.stdout', stdout), patch('sys.stderr', self.stderr):
            code = main(list(argv))
        return code, stdout.getvalue()

    def save_scene(self, with_camera=True):
        scene = Scene()
        if with_camera:
            scene.set_orthographic_camera((16, 12), ortho_scale=4.0, position=(0, 0, 5), look_at=(0, 0, 0))
        scene.add_renderable(make_primitive('sphere', radius=1.0, subdivisions=1))
        scene.add_light(BackgroundLight())
        path = self.path('demo.scene.json')
        scene_io_service.save_scene(scene, path)
        return path

    def test_render_single_pass(self):
        """测试只渲染深度通道时只写出 PFM"""
        prefix = self.path('out/frame')
        code, stdout = self.run_cli('render', self.save_scene(), '--out', prefix, '--passes', 'depth',
                                    '--samples', '1', '--threads', '2', '--stats-json')
        self.assertEqual(code, 0)
        self.assertTrue(os.path.exists(prefix + '.depth.pfm'))
        self.assertFalse(os.path.exists(prefix + '.png'))
        self.assertFalse(os.path.exists(prefix + '.albedo.png'))
        stats = json.loads(stdout)
        self.assertEqual(stats['resolution'], [16, 12])
        self.assertEqual(stats['threads'], 2)
        depth = image_io_service.read_pfm(prefix + '.depth.pfm')
        self.assertEqual(depth.shape, (12, 16))
        nearest = float(depth[depth > 0].min())
        self.assertGreater(nearest, 3.99)
        self.assertLess(nearest, 4.3)

    def test_render_resolution_override(self):
        """测试命令行覆盖分辨率"""
        prefix = self.path('frame')
        code, _ = self.run_cli('render', self.save_scene(), '--out', prefix, '--resolution', '8x6',
                               '--samples', '1', '--passes', 'color,albedo')
        self.assertEqual(code, 0)
        self.assertEqual(image_io_service.read_png(prefix + '.png').shape, (6, 8, 4))
        self.assertEqual(image_io_service.read_png(prefix + '.albedo.png').shape, (6, 8, 3))

    def test_render_errors(self):
        """测试缺少相机与文件不存在的退出码"""
        code, _ = self.run_cli('render', self.save_scene(with_camera=False), '--out', self.path('x'))
        self.assertEqual(code, EXIT_CODES['scene'])
        code, _ = self.run_cli('render', self.path('missing.scene.json'), '--out', self.path('x'))
        self.assertEqual(code, EXIT_CODES['io'])
        with open(self.path('broken.scene.json'), 'w', encoding='utf-8') as f:
            f.write('{"version": 1,')
        code, _ = self.run_cli('render', self.path('broken.scene.json'), '--out', self.path('x'))
        self.assertEqual(code, EXIT_CODES['scene'])

    def test_bad_arguments(self):
        """测试参数格式错误时由 argparse 退出"""
        with patch('sys.stderr', io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(['render', 'scene.json', '--out', 'x', '--resolution', '8by6'])
        self.assertEqual(ctx.exception.code, 2)

    def test_trajectory(self):
        """测试 1 秒关键帧间隔按 5 fps 生成 6 帧"""
        identity = np.array([1.0, 0.0, 0.0, 0.0])
        document = scene_io_service.trajectory_document(
            [0.0, 1.0], [((0, 0, 0), identity), ((2, 0, 0), identity)], key='keypoints')
        keypoints = self.path('keys.scene.json')
        with open(keypoints, 'w', encoding='utf-8') as f:
            f.write(dumps_document(document))
        out = self.path('traj.scene.json')
        code, stdout = self.run_cli('trajectory', keypoints, '--fps', '5', '--out', out, '--stats-json')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)['frames'], 6)
        frames = scene_io_service.read_document(out)['frames']
        self.assertEqual([f['time'] for f in frames], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])

        code, stdout = self.run_cli('trajectory', keypoints, '--fps', '10')
        self.assertEqual(code, 0)
        self.assertEqual(len(json.loads(stdout)['frames']), 11)

        # 文档占用标准输出时统计信息写到标准错误
        code, stdout = self.run_cli('trajectory', keypoints, '--fps', '10', '--stats-json')
        self.assertEqual(code, 0)
        self.assertEqual(len(json.loads(stdout)['frames']), 11)
        stats = json.loads(self.stderr.getvalue().strip().splitlines()[-1])
        self.assertEqual(stats['frames'], 11)

        code, _ = self.run_cli('trajectory', keypoints, '--fps', '0')
        self.assertEqual(code, EXIT_CODES['scene'])

    def test_pc_color_camera_side(self):
        """测试相机在平面点云上方与下方时的正反面划分"""
        cloud = self.path('plane.ply')
        mesh_io_service.save_ply(cloud, plane_cloud(10), colors=np.tile([0.2, 0.4, 0.6], (100, 1)))
        out = self.path('colored.ply')

        code, stdout = self.run_cli('pc-color', cloud, '--camera', '0,0,5', '--k', '8', '--out', out, '--stats-json')
        self.assertEqual(code, 0)
        stats = json.loads(stdout)
        self.assertEqual(stats['back_facing'], 0)
        self.assertTrue(stats['normals_estimated'])
        np.testing.assert_allclose(mesh_io_service.read_ply(out).colors[:, 3], 1.0)

        code, stdout = self.run_cli('pc-color', cloud, '--camera', '0,0,-5', '--k', '8', '--back-color', '1,0,0',
                                    '--back-alpha', '0', '--out', out, '--stats-json')
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(stdout)['back_facing'], 100)
        colors = mesh_io_service.read_ply(out).colors
        np.testing.assert_allclose(colors, np.tile([1.0, 0.0, 0.0, 0.0], (100, 1)))

    def test_pc_color_too_few_points(self):
        """测试点数少于 k 时以场景错误退出"""
        cloud = self.path('two.ply')
        mesh_io_service.save_ply(cloud, [[0, 0, 0], [1, 0, 0]])
        code, _ = self.run_cli('pc-color', cloud, '--camera', '0,0,5', '--k', '3', '--out', self.path('o.ply'))
        self.assertEqual(code, EXIT_CODES['scene'])

    def test_meshify(self):
        """测试点云网格化输出 OBJ、MTL 与纹理"""
        cloud = self.path('sphere.ply')
        points = fibonacci_sphere(400)
        mesh_io_service.save_ply(cloud, points, normals=points, colors=np.tile([0.8, 0.1, 0.1], (400, 1)))
        out_mesh = self.path('out/mesh.obj')
        out_texture = self.path('out/texture.png')
        code, stdout = self.run_cli('meshify', cloud, '--out-mesh', out_mesh, '--out-texture', out_texture,
                                    '--target-faces', '200', '--tex-res', '128', '--gap', '1', '--stats-json')
        self.assertEqual(code, 0)
        stats = json.loads(stdout)
        self.assertLessEqual(stats['faces'], 200)
        self.assertFalse(stats['normals_estimated'])
        mesh, faces_uv = mesh_io_service.load_obj(out_mesh)
        self.assertEqual(mesh.face_count, stats['faces'])
        self.assertEqual(faces_uv.shape, (mesh.face_count, 3, 2))
        self.assertTrue(os.path.exists(self.path('out/mesh.mtl')))
        self.assertEqual(image_io_service.read_png(out_texture).shape, (128, 128, 3))

    def test_meshify_without_colors(self):
        """测试没有颜色的点云以网格化错误退出"""
        cloud = self.path('plain.ply')
        mesh_io_service.save_ply(cloud, fibonacci_sphere(50))
        code, _ = self.run_cli('meshify', cloud, '--out-mesh', self.path('m.obj'), '--out-texture',
                               self.path('t.png'))
        self.assertEqual(code, EXIT_CODES['meshify'])

    def test_meshify_too_few_points(self):
        """测试少于4个点时以网格化错误退出"""
        cloud = self.path('three.ply')
        mesh_io_service.save_ply(cloud, fibonacci_sphere(3), colors=np.tile([0.5, 0.5, 0.5], (3, 1)))
        code, stdout = self.run_cli('meshify', cloud, '--out-mesh', self.path('m.obj'), '--out-texture',
                                    self.path('t.png'), '--stats-json')
        self.assertEqual(code, EXIT_CODES['meshify'])
        self.assertEqual(stdout, '')
        self.assertIn('[input]', self.stderr.getvalue())


if __name__ == '__main__':
    unittest.main()
