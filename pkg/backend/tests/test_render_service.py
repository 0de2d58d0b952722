#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
渲染服务单元测试
白炉测试、解析深度、反照率通道、Lambert 辐射度、确定性与阴影捕捉面
"""

import math
import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.appearance import (Appearance, Image, PrincipledBSDFMaterial, TextureColors, UniformColors, UVMap,
                               encode_srgb8)
from models.base import MissingCameraError, ValidationError
from models.geometry import PointCloud
from models.light import AreaLight, BackgroundLight, DirectionalLight, PointLight, SpotLight
from models.primitives import make_primitive
from models.render_settings import RenderSettings
from models.scene import Scene
from services import sampler
from services.render_service import render_service


def _top_down_scene(resolution=(16, 16), ortho_scale=4.0):
    scene = Scene()
    scene.set_orthographic_camera(resolution, ortho_scale=ortho_scale, position=(0, 0, 5), look_at=(0, 0, 0))
    return scene


class TestFurnace(unittest.TestCase):
    """白炉测试: 只有白色背景时所有像素为纯白"""

    def test_background_only(self):
        scene = _top_down_scene((16, 16))
        scene.add_light(BackgroundLight(color=(1, 1, 1), strength=1.0))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=4, passes=('color',)), threads=1)
        self.assertTrue(np.all(output.color[..., :3] == 255))
        self.assertTrue(np.all(output.color[..., 3] == 0))

    def test_white_lambertian_sphere(self):
        """测试白色漫反射球在白色背景中与背景不可区分"""
        scene = _top_down_scene((16, 16))
        scene.add_renderable(PointCloud([[0.0, 0.0, 0.0]], colors=(1.0, 1.0, 1.0), point_radius=1.0))
        scene.add_light(BackgroundLight(color=(1, 1, 1), strength=1.0))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=256, max_bounces=16,
                                                             passes=('color', 'depth')), threads=1)
        on_sphere = output.depth > 0.0
        self.assertGreater(int(on_sphere.sum()), 20)
        np.testing.assert_allclose(output.linear[on_sphere], 1.0, rtol=0.02)

    def test_missing_camera(self):
        """测试没有相机时报错"""
        with self.assertRaises(MissingCameraError):
            render_service.render(Scene())


class TestCenterPasses(unittest.TestCase):
    """深度与反照率通道测试"""

    def test_analytic_sphere_depth(self):
        """测试正交相机看单位球: 中心深度 4, 角落未命中为 0"""
        scene = _top_down_scene((101, 101), ortho_scale=4.0)
        scene.add_renderable(PointCloud([[0.0, 0.0, 0.0]], point_radius=1.0))
        output = render_service.render(scene, RenderSettings(passes=('depth',)), threads=1)
        self.assertIsNone(output.color)
        self.assertIsNone(output.albedo)
        self.assertAlmostEqual(float(output.depth[50, 50]), 4.0, delta=1e-3)
        self.assertEqual(float(output.depth[0, 0]), 0.0)

    def test_albedo_uniform_color_exact(self):
        """测试反照率等于颜色来源的 sRGB 编码"""
        color = (0.5, 0.25, 0.75)
        scene = _top_down_scene((8, 8))
        plane = make_primitive('plane', size=10.0, appearance=Appearance(colors=UniformColors(color)))
        scene.add_renderable(plane)
        output = render_service.render(scene, RenderSettings(passes=('albedo',)), threads=1)
        expected = encode_srgb8(np.array(color))
        self.assertTrue(np.all(output.albedo == expected[None, None, :]))

    def test_albedo_texture_exact(self):
        """测试纹理颜色的反照率"""
        scene = _top_down_scene((8, 8))
        plane = make_primitive('plane', size=10.0)
        uv = UVMap.faces_uv(np.full((2, 3, 2), 0.5))
        plane.set_appearance(colors=TextureColors(Image(np.full((4, 4, 3), 0.3)), uv))
        scene.add_renderable(plane)
        output = render_service.render(scene, RenderSettings(passes=('albedo',)), threads=1)
        self.assertTrue(np.all(output.albedo == encode_srgb8(np.array([0.3, 0.3, 0.3]))[None, None, :]))


    def test_albedo_ignores_base_modulation(self):
        """测试反照率为颜色来源本身, 不乘 base_modulation"""
        color = (0.8, 0.4, 0.2)
        scene = _top_down_scene((8, 8))
        material = PrincipledBSDFMaterial(base_modulation=(0.5, 0.5, 0.5))
        scene.add_renderable(make_primitive('plane', size=10.0, appearance=Appearance(
            colors=UniformColors(color), material=material)))
        output = render_service.render(scene, RenderSettings(passes=('albedo',)), threads=1)
        self.assertTrue(np.all(output.albedo == encode_srgb8(np.array(color))[None, None, :]))

    def test_depth_independent_of_samples(self):
        """测试深度通道与每像素采样数无关"""
        scene = _top_down_scene((16, 16))
        scene.add_renderable(make_primitive('sphere', radius=1.0, subdivisions=2))
        scene.add_light(PointLight(strength=100.0, position=(0, 0, 4)))
        one = render_service.render(scene, RenderSettings(samples_per_pixel=1, passes=('color', 'depth')), threads=1)
        many = render_service.render(scene, RenderSettings(samples_per_pixel=16, passes=('color', 'depth')),
                                     threads=1)
        np.testing.assert_array_equal(one.depth, many.depth)


class TestRadiometry(unittest.TestCase):
    """Lambert 平面在方向光下的辐亮度"""

    def test_lambertian_plane(self):
        scene = _top_down_scene((8, 8))
        plane = make_primitive('plane', size=10.0, appearance=Appearance(
            colors=UniformColors((0.5, 0.5, 0.5)),
            material=PrincipledBSDFMaterial(metallic=0.0, roughness=1.0, specular=0.0)))
        scene.add_renderable(plane)
        scene.add_light(DirectionalLight(strength=1.0))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=256, max_bounces=2,
                                                             passes=('color',)), threads=1)
        expected = 0.5 / math.pi
        np.testing.assert_allclose(output.linear[4, 4], expected, rtol=0.02)
        self.assertTrue(np.all(output.color[..., 3] == 255))

    def test_spot_light_plane(self):
        """测试聚光灯照亮锥内区域, 锥外为黑"""
        scene = _top_down_scene((16, 16))
        plane = make_primitive('plane', size=10.0, appearance=Appearance(
            colors=UniformColors((0.5, 0.5, 0.5)),
            material=PrincipledBSDFMaterial(metallic=0.0, roughness=1.0, specular=0.0)))
        scene.add_renderable(plane)
        scene.add_light(SpotLight(strength=16.0 * math.pi, cone_angle=math.pi / 4, position=(0, 0, 2)))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=16, max_bounces=1,
                                                             passes=('color',)), threads=1)
        # 轴上辐照度 I/d² = 1
        self.assertAlmostEqual(float(output.linear[8, 8, 0]), 0.5 / math.pi, delta=0.02)
        np.testing.assert_array_equal(output.linear[0, 0], np.zeros(3))

    def test_point_cloud_emission(self):
        """测试无光源时发光点基元的辐亮度为 颜色 × 发光强度"""
        scene = _top_down_scene((16, 16))
        color = np.array([0.5, 0.25, 1.0])
        scene.add_renderable(PointCloud([[0.0, 0.0, 0.0]], colors=color, point_radius=1.0, emission_strength=2.0))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=4, passes=('color',)), threads=1)
        self.assertTrue(np.all(output.linear[8, 8] >= 2.0 * color - 1e-9))
        np.testing.assert_array_equal(output.linear[0, 0], np.zeros(3))


class TestDeterminism(unittest.TestCase):
    """确定性测试: 相同种子输出逐位一致, 与线程数无关"""

    def setUp(self):
        self.scene = Scene()
        self.scene.set_perspective_camera((24, 20), fov_x=math.radians(50), position=(0, -4, 2),
                                          look_at=(0, 0, 0.5))
        self.scene.add_renderable(make_primitive('sphere', radius=0.6, subdivisions=2, position=(0, 0, 0.6)))
        self.scene.add_renderable(make_primitive('plane', size=6.0))
        self.scene.add_light(PointLight(strength=300.0, radius=0.3, position=(1, -1, 4)))
        self.scene.add_light(BackgroundLight(color=(0.2, 0.3, 0.4)))
        self.settings = RenderSettings(samples_per_pixel=4, max_bounces=3, seed=11)

    def test_thread_count_independent(self):
        single = render_service.render(self.scene, self.settings, threads=1)
        multi = render_service.render(self.scene, self.settings, threads=3)
        np.testing.assert_array_equal(single.color, multi.color)
        np.testing.assert_array_equal(single.depth, multi.depth)
        np.testing.assert_array_equal(single.albedo, multi.albedo)

    def test_seed_changes_noise(self):
        first = render_service.render(self.scene, self.settings, threads=2)
        again = render_service.render(self.scene, self.settings, threads=2)
        other = render_service.render(self.scene, self.settings.override(seed=12), threads=2)
        np.testing.assert_array_equal(first.color, again.color)
        self.assertFalse(np.array_equal(first.color, other.color))

    def test_stats(self):
        output = render_service.render(self.scene, self.settings.override(passes=('color',)), threads=2)
        self.assertEqual(output.stats['resolution'], [24, 20])
        self.assertEqual(output.stats['samples_per_pixel'], 4)
        self.assertEqual(output.stats['threads'], 2)
        self.assertGreater(output.stats['rays'], 24 * 20 * 4)
        self.assertIsNone(output.depth)

    def test_resolution_override_keeps_fov(self):
        output = render_service.render(self.scene, self.settings.override(resolution=(12, 10), passes=('depth',)))
        self.assertEqual(output.depth.shape, (10, 12))
        self.assertEqual(self.scene.camera.resolution, (24, 20))


class TestShadowCatcher(unittest.TestCase):
    """阴影捕捉面: 本影处 alpha 接近 1, 远处 alpha 接近 0"""

    def test_umbra_and_far_field(self):
        scene = Scene()
        scene.set_orthographic_camera((40, 40), ortho_scale=4.0, position=(0, 0, 10), look_at=(0, 0, 0))
        scene.add_renderable(make_primitive('plane', size=10.0, shadow_catcher=True))
        scene.add_renderable(make_primitive('sphere', radius=0.3, subdivisions=2, position=(0, 0, 1)))
        scene.add_light(PointLight(strength=100.0, position=(3, 0, 4)))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=8), threads=1)
        # 球心经光源投影落在 (-1, 0, 0)
        self.assertGreaterEqual(float(output.alpha[20, 10]), 0.95)
        self.assertLessEqual(float(output.alpha[2, 38]), 0.05)
        # 球本身不透明
        self.assertEqual(float(output.alpha[19, 19]), 1.0)
        # 捕捉面不出现在深度与反照率通道中
        self.assertEqual(float(output.depth[20, 10]), 0.0)
        self.assertTrue(np.all(output.albedo[20, 10] == 0))

    def _scanline_alpha(self, light_size):
        scene = Scene()
        scene.set_orthographic_camera((64, 1), ortho_scale=4.0, position=(0, 0, 10), look_at=(0, 0, 0))
        scene.add_renderable(make_primitive('plane', size=10.0, shadow_catcher=True))
        scene.add_renderable(make_primitive('sphere', radius=0.3, subdivisions=3, position=(0, 0, 1)))
        scene.add_light(AreaLight(strength=10.0, size=light_size, position=(3, 0, 4)))
        output = render_service.render(scene, RenderSettings(samples_per_pixel=1024, passes=('color',)), threads=1)
        x = (np.arange(64) + 0.5) / 64 * 4.0 - 2.0
        return x, output.alpha[0]

    def test_penumbra_grows_with_light_size(self):
        """测试面光源越大半影越宽"""
        widths = []
        for size in (0.2, 0.6, 1.2):
            x, alpha = self._scanline_alpha(size)
            penumbra = (alpha > 0.05) & (alpha < 0.95) & (x < -0.35)
            widths.append(int(penumbra.sum()))
        self.assertEqual(widths, sorted(widths))
        self.assertGreater(widths[2], widths[0])

        # 从阴影中心向外 alpha 下降
        x, alpha = self._scanline_alpha(1.2)
        core = alpha[(x > -1.05) & (x < -0.95)].mean()
        edge = alpha[(x > -0.5) & (x < -0.4)].mean()
        self.assertGreater(core, 0.85)
        self.assertLess(edge, core - 0.1)


class TestSettings(unittest.TestCase):
    """渲染设置校验"""

    def test_invalid_settings(self):
        with self.assertRaises(ValidationError):
            RenderSettings(samples_per_pixel=0)
        with self.assertRaises(ValidationError):
            RenderSettings(passes=('normal',))
        with self.assertRaises(ValidationError):
            RenderSettings(passes=())

    def test_override_ignores_none(self):
        settings = RenderSettings(samples_per_pixel=8, seed=3)
        overridden = settings.override(samples_per_pixel=None, seed=5)
        self.assertEqual(overridden.samples_per_pixel, 8)
        self.assertEqual(overridden.seed, 5)


class TestSampler(unittest.TestCase):
    """计数器随机数测试"""

    def test_uniform_range_and_repeatable(self):
        keys = sampler.path_keys(1, np.arange(1000, dtype=np.uint64), np.zeros(1000, dtype=np.uint64))
        u = sampler.uniform(keys, 0)
        self.assertTrue(np.all((u >= 0.0) & (u < 1.0)))
        np.testing.assert_array_equal(u, sampler.uniform(keys, 0))
        self.assertFalse(np.array_equal(u, sampler.uniform(keys, 1)))
        self.assertAlmostEqual(float(u.mean()), 0.5, delta=0.05)


if __name__ == '__main__':
    unittest.main()
