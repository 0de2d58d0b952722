#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
场景图、基本体、外观、光源与相机单元测试
"""

import math
import os
import sys
import tempfile
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.appearance import (Appearance, FileTextureColors, Image, MetalMaterial, PrincipledBSDFMaterial,
                               TextureColors, UniformColors, UVMap, VertexColors, encode_srgb8,
                               overlay_wireframe)
from models.base import (BindError, BoundsError, InvalidPrimitiveError, MissingCameraError, NotFoundError,
                         TagCollisionError, ValidationError)
from models.camera import OrthographicCamera, PerspectiveCamera
from models.geometry import PointCloud, TriMesh
from models.light import AreaLight, BackgroundLight, DirectionalLight, PointLight, SpotLight
from models.primitives import icosphere, make_primitive, sample_bezier
from models.rotation import RotationSpec
from models.scene import Scene
from services.image_io_service import image_io_service
from services.shading_service import shading_service


def _triangle(**kwargs):
    return TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], **kwargs)


class TestSceneGraph(unittest.TestCase):
    """场景容器测试"""

    def setUp(self):
        self.scene = Scene()

    def test_auto_tags_never_reused(self):
        """测试自动标签按类型递增且删除后不复用"""
        first = self.scene.add_renderable(make_primitive('sphere', subdivisions=1))
        second = self.scene.add_renderable(make_primitive('sphere', subdivisions=1))
        self.assertEqual(first, 'sphere_0')
        self.assertEqual(second, 'sphere_1')
        self.scene.remove(first)
        third = self.scene.add_renderable(make_primitive('sphere', subdivisions=1))
        self.assertEqual(third, 'sphere_2')

    def test_tag_collision(self):
        """测试标签重复"""
        self.scene.add_renderable(_triangle(), tag='tri')
        with self.assertRaises(TagCollisionError):
            self.scene.add_renderable(_triangle(), tag='tri')

    def test_get_and_remove_missing(self):
        """测试查找和删除不存在的标签"""
        with self.assertRaises(NotFoundError):
            self.scene.get('nothing')
        with self.assertRaises(NotFoundError):
            self.scene.remove('nothing')

    def test_set_pose_partial(self):
        """测试只更新位姿的部分分量"""
        tag = self.scene.add_light(PointLight(position=(1, 2, 3)))
        self.scene.set_pose(tag, rotation=RotationSpec.axis_angle((0, 0, 1), math.pi))
        light = self.scene.get(tag)
        np.testing.assert_array_equal(light.pose.position, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(light.pose.rotation, [0.0, 0.0, 0.0, 1.0], atol=1e-12)

    def test_render_requires_camera(self):
        """测试没有相机时渲染报错"""
        with self.assertRaises(MissingCameraError):
            self.scene.require_camera()

    def test_independent_scenes(self):
        """测试多个场景实例互不影响"""
        other = Scene()
        self.scene.add_renderable(_triangle(), tag='a')
        self.assertEqual(other.tags(), [])
        self.assertEqual(self.scene.tags(), ['a'])


class TestPrimitives(unittest.TestCase):
    """基本体剖分测试"""

    def test_icosphere_face_count_and_radius(self):
        """测试细分球面数与半径"""
        vertices, faces = icosphere(2)
        self.assertEqual(faces.shape[0], 20 * 4 ** 2)
        np.testing.assert_allclose(np.linalg.norm(vertices, axis=1), 1.0, atol=1e-9)

    def test_closed_primitives_are_watertight(self):
        """测试封闭基本体每条边恰好被两个面共享"""
        for kind, params in (('cube', {}), ('sphere', {'subdivisions': 2}), ('cylinder', {'segments': 12}),
                             ('bezier', {'control_points': [[0, 0, 0], [1, 1, 0], [2, 0, 1]]})):
            mesh = make_primitive(kind, **params)
            edges = np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]], mesh.faces[:, [2, 0]]])
            edges.sort(axis=1)
            _, counts = np.unique(edges, axis=0, return_counts=True)
            self.assertTrue(np.all(counts == 2), kind)

    def test_cube_outward_normals(self):
        """测试立方体面法线朝外"""
        mesh = make_primitive('cube', size=2.0)
        centroids = mesh.vertices[mesh.faces].mean(axis=1)
        self.assertTrue(np.all(np.sum(mesh.face_normals() * centroids, axis=1) > 0.0))

    def test_ellipsoid_scaling(self):
        """测试椭球半轴"""
        mesh = make_primitive('ellipsoid', rx=2.0, ry=1.0, rz=0.5, subdivisions=2)
        scaled = mesh.vertices / np.array([2.0, 1.0, 0.5])
        np.testing.assert_allclose(np.linalg.norm(scaled, axis=1), 1.0, atol=1e-9)

    def test_bezier_endpoints(self):
        """测试贝塞尔曲线端点"""
        cps = np.array([[0, 0, 0], [1, 2, 0], [3, 0, 1]], dtype=np.float64)
        np.testing.assert_array_equal(sample_bezier(cps, 0.0), cps[0])
        np.testing.assert_array_equal(sample_bezier(cps, 1.0), cps[-1])

    def test_invalid_parameters(self):
        """测试无效基本体参数"""
        with self.assertRaises(InvalidPrimitiveError):
            make_primitive('sphere', radius=0.0)
        with self.assertRaises(InvalidPrimitiveError):
            make_primitive('cylinder', segments=2)
        with self.assertRaises(InvalidPrimitiveError):
            make_primitive('bezier', control_points=[[0, 0, 0]])
        with self.assertRaises(InvalidPrimitiveError):
            make_primitive('torus')
        with self.assertRaises(InvalidPrimitiveError):
            make_primitive('cube', radius=1.0)

    def test_plane_shadow_catcher_flag(self):
        """测试平面阴影捕捉标记"""
        self.assertTrue(make_primitive('plane', shadow_catcher=True).shadow_catcher)
        self.assertFalse(make_primitive('plane').shadow_catcher)


class TestGeometry(unittest.TestCase):
    """网格与点云校验测试"""

    def test_mesh_rejects_bad_indices(self):
        """测试面索引越界和退化面"""
        with self.assertRaises(ValidationError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
        with self.assertRaises(ValidationError):
            TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])

    def test_mesh_rejects_non_unit_normals(self):
        """测试法线必须为单位向量"""
        with self.assertRaises(ValidationError):
            _triangle(normals=[[0, 0, 2], [0, 0, 1], [0, 0, 1]])

    def test_pointcloud_colors(self):
        """测试点云颜色数量与范围"""
        cloud = PointCloud(np.zeros((3, 3)), colors=(1.0, 0.0, 0.0))
        self.assertEqual(cloud.instance_colors().shape, (3, 4))
        with self.assertRaises(ValidationError):
            cloud.set_colors(np.ones((2, 3)))
        with self.assertRaises(ValidationError):
            cloud.set_colors((1.5, 0.0, 0.0))
        with self.assertRaises(ValidationError):
            PointCloud(np.zeros((1, 3)), point_shape='torus')

    def test_face_segments_require_materials(self):
        """测试分段编号必须有对应材质"""
        mesh = make_primitive('cube')
        segments = np.zeros(mesh.face_count, dtype=np.int64)
        segments[:2] = 1
        with self.assertRaises(ValidationError):
            mesh.set_face_segments(segments, {0: PrincipledBSDFMaterial()})
        metal = MetalMaterial()
        mesh.set_face_segments(segments, {0: PrincipledBSDFMaterial(), 1: metal})
        self.assertIs(mesh.material_for_faces(np.array([0]))[0], metal)


class TestAppearance(unittest.TestCase):
    """颜色来源与材质测试"""

    def test_uniform_color(self):
        """测试统一颜色"""
        mesh = _triangle()
        mesh.set_appearance(colors=UniformColors((0.2, 0.4, 0.6)))
        color = shading_service.shade_color(mesh, [0], [[0.2, 0.3, 0.5]])
        np.testing.assert_allclose(color[0], [0.2, 0.4, 0.6, 1.0])

    def test_vertex_colors_centroid(self):
        """测试逐顶点颜色在重心处为三者平均"""
        mesh = _triangle()
        mesh.set_appearance(colors=VertexColors(np.eye(3)))
        color = shading_service.shade_color(mesh, [0], [[1 / 3, 1 / 3, 1 / 3]])
        np.testing.assert_allclose(color[0, :3], [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_vertex_colors_bind_error(self):
        """测试颜色数量与顶点数不一致"""
        mesh = _triangle()
        mesh.set_appearance(colors=VertexColors(np.ones((4, 3))))
        with self.assertRaises(BindError):
            mesh.check_binding()

    def test_texture_texel_centers(self):
        """测试纹理在纹素中心取到精确值, 第0行为图像顶部"""
        pixels = np.array([[[1.0, 0, 0], [0, 1.0, 0]],
                           [[0, 0, 1.0], [1.0, 1.0, 1.0]]])
        image = Image(pixels)
        np.testing.assert_allclose(shading_service.sample_texture(image, [0.25, 0.75])[:3], [1, 0, 0])
        np.testing.assert_allclose(shading_service.sample_texture(image, [0.75, 0.75])[:3], [0, 1, 0])
        np.testing.assert_allclose(shading_service.sample_texture(image, [0.25, 0.25])[:3], [0, 0, 1])

    def test_texture_faces_uv(self):
        """测试逐面 UV 映射的颜色查询"""
        mesh = _triangle()
        uv = UVMap.faces_uv([[[0.25, 0.75], [0.25, 0.75], [0.25, 0.75]]])
        image = Image(np.full((2, 2, 3), 0.5))
        mesh.set_appearance(colors=TextureColors(image, uv))
        color = shading_service.shade_color(mesh, [0], [[0.3, 0.3, 0.4]])
        np.testing.assert_allclose(color[0, :3], 0.5)

    def test_file_texture_lazy_load(self):
        """测试文件纹理首次访问时才读取"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'tex.png')
            image_io_service.write_png(Image(np.full((4, 4, 3), 0.5)), path)
            colors = FileTextureColors(path, UVMap.vertex_uv(np.zeros((3, 2))))
            self.assertFalse(colors.is_loaded)
            self.assertEqual(colors.image.width, 4)
            self.assertTrue(colors.is_loaded)

    def test_srgb_encoding(self):
        """测试 8 位 sRGB 编码"""
        np.testing.assert_array_equal(encode_srgb8([0.0, 1.0, 2.0, -1.0]), [0, 255, 255, 0])
        self.assertEqual(int(encode_srgb8(0.5)), 188)

    def test_material_validation(self):
        """测试材质参数范围与线框叠加"""
        with self.assertRaises(ValidationError):
            PrincipledBSDFMaterial(roughness=1.5)
        overlay = overlay_wireframe(PrincipledBSDFMaterial(alpha=0.5), thickness=0.02)
        self.assertEqual(overlay.alpha, 0.5)
        with self.assertRaises(ValidationError):
            overlay_wireframe(overlay)

    def test_wireframe_factor(self):
        """测试线框判定为到最近边的距离"""
        v = np.array([[[0.0, 0, 0], [1.0, 0, 0], [0.0, 1.0, 0]]])
        near_edge = shading_service.wireframe_factor_triangles(v, np.array([[0.5, 0.495, 0.005]]), 0.02)
        center = shading_service.wireframe_factor_triangles(v, np.array([[1 / 3, 1 / 3, 1 / 3]]), 0.02)
        self.assertEqual(float(near_edge[0]), 1.0)
        self.assertEqual(float(center[0]), 0.0)

    def test_default_appearance(self):
        """测试默认外观"""
        appearance = Appearance()
        self.assertIsInstance(appearance.colors, UniformColors)
        self.assertIsInstance(appearance.material, PrincipledBSDFMaterial)


class TestLights(unittest.TestCase):
    """光源参数测试"""

    def test_defaults_and_direction(self):
        """测试光源默认朝向为 -Z"""
        light = DirectionalLight()
        np.testing.assert_allclose(light.direction, [0.0, 0.0, -1.0])
        self.assertTrue(PointLight().is_delta)
        self.assertFalse(PointLight(radius=0.1).is_delta)
        self.assertFalse(AreaLight().is_delta)

    def test_area_light(self):
        """测试面光源面积与辐亮度"""
        disc = AreaLight(shape='disc', size=2.0, strength=math.pi)
        self.assertAlmostEqual(disc.area, math.pi)
        np.testing.assert_allclose(disc.radiance, [1.0, 1.0, 1.0])
        with self.assertRaises(ValidationError):
            AreaLight(shape='triangle')

    def test_spot_falloff(self):
        """测试聚光灯边缘平滑衰减"""
        spot = SpotLight(cone_angle=math.pi / 2, blend=0.5)
        falloff = spot.falloff(np.array([0.0, math.pi / 4 + 0.01]))
        self.assertEqual(float(falloff[0]), 1.0)
        self.assertEqual(float(falloff[1]), 0.0)

    def test_invalid_lights(self):
        """测试无效光源参数"""
        with self.assertRaises(ValidationError):
            PointLight(strength=-1.0)
        with self.assertRaises(ValidationError):
            BackgroundLight(color=(-0.1, 0.0, 0.0))
        with self.assertRaises(ValidationError):
            SpotLight(cone_angle=4.0)


class TestCamera(unittest.TestCase):
    """相机测试"""

    def test_perspective_center_ray(self):
        """测试透视相机中心光线沿 -Z"""
        camera = PerspectiveCamera((64, 48), fov_x=math.radians(60))
        origin, direction = camera.generate_ray((32, 24), jitter=(0.0, 0.0))
        np.testing.assert_allclose(origin, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(direction, [0.0, 0.0, -1.0], atol=1e-12)
        self.assertAlmostEqual(camera.fov_x, math.radians(60))

    def test_perspective_project_round_trip(self):
        """测试光线上的点投影回原像素"""
        camera = PerspectiveCamera((80, 60), focal_px=70.0, position=(1, 2, 3))
        camera.look_at((0, 0, 0))
        origin, direction = camera.generate_ray((13, 41), jitter=(0.25, 0.75))
        u, v = camera.project(origin + 5.0 * direction)
        self.assertAlmostEqual(u, 13.25, places=9)
        self.assertAlmostEqual(v, 41.75, places=9)
        self.assertIsNone(camera.project(origin - direction))

    def test_orthographic_rays(self):
        """测试正交相机光线平行且像素间距为 ortho_scale/width"""
        camera = OrthographicCamera((100, 50), ortho_scale=4.0, position=(0, 0, 5))
        o1, d1 = camera.generate_ray((0, 0))
        o2, d2 = camera.generate_ray((1, 0))
        np.testing.assert_allclose(d1, d2)
        self.assertAlmostEqual(float(o2[0] - o1[0]), 0.04)
        self.assertAlmostEqual(float(o1[0]), -2.0 + 0.02)

    def test_bounds(self):
        """测试像素越界"""
        camera = PerspectiveCamera((8, 8))
        with self.assertRaises(BoundsError):
            camera.generate_ray((8, 0))
        with self.assertRaises(ValidationError):
            PerspectiveCamera((0, 8))


if __name__ == '__main__':
    unittest.main()
