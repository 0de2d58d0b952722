#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
光源采样服务
直接光照采样 (next-event estimation) 与 BSDF 光线命中可见光源(面光源、球光源)的求交

所有函数对 K 个着色点批量计算
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from models.light import AreaLight, BackgroundLight, DirectionalLight, Light, PointLight, SpotLight
from services import sampler

logger = logging.getLogger(__name__)


@dataclass
class DirectSample:
    """直接光照样本

    direction: 指向光源的单位方向; distance: 到光源的距离(无穷远为 inf);
    radiance_over_pdf: 辐亮度/pdf; pdf: 立体角 pdf (δ 光源为 0, 不参与 MIS);
    needs_shadow_ray: 是否需要阴影测试
    """
    direction: np.ndarray
    distance: np.ndarray
    radiance_over_pdf: np.ndarray
    pdf: np.ndarray
    needs_shadow_ray: bool


def _one_minus_cos(sin2: np.ndarray) -> np.ndarray:
    """1 - cosθ, 由 sin²θ 计算以保留小角度精度"""
    cos = np.sqrt(np.maximum(0.0, 1.0 - sin2))
    return sin2 / (1.0 + cos)


class LightService:
    """光源采样服务"""

    def sphere_radiance(self, light: PointLight) -> np.ndarray:
        """球光源表面辐亮度: 总功率 Φ = strength 均匀分布在球面上, L = Φ/(4π²r²)"""
        return light.color * light.strength / (4.0 * math.pi ** 2 * light.radius ** 2)

    def sample_direct(self, light: Light, shading_points, rng) -> DirectSample:
        """对光源采样一个方向

        rng: K×2 均匀数, 或 numpy Generator
        """
        points = np.atleast_2d(np.asarray(shading_points, dtype=np.float64))
        k = points.shape[0]
        if isinstance(rng, np.random.Generator):
            u = rng.random((k, 2))
        else:
            u = np.broadcast_to(np.asarray(rng, dtype=np.float64).reshape(-1, 2), (k, 2))

        if isinstance(light, BackgroundLight):
            return self._sample_background(light, points, u)
        if isinstance(light, AreaLight):
            return self._sample_area(light, points, u)
        if isinstance(light, DirectionalLight):
            return self._sample_directional(light, points, u)
        if isinstance(light, SpotLight):
            return self._sample_spot(light, points)
        if isinstance(light, PointLight):
            if light.radius > 0.0:
                return self._sample_sphere(light, points, u)
            return self._sample_point(light, points)
        raise TypeError(f"未知的光源类型: {type(light).__name__}")

    def _sample_background(self, light, points, u) -> DirectSample:
        k = points.shape[0]
        direction = sampler.uniform_sphere(u)
        return DirectSample(direction, np.full(k, np.inf),
                            np.broadcast_to(light.radiance * 4.0 * math.pi, (k, 3)).copy(),
                            np.full(k, 1.0 / (4.0 * math.pi)), light.cast_shadow)

    def _point_geometry(self, light, points):
        to_light = light.pose.position - points
        distance = np.linalg.norm(to_light, axis=1)
        safe = np.where(distance > 0.0, distance, 1.0)
        return to_light / safe[:, None], distance

    def _sample_point(self, light: PointLight, points) -> DirectSample:
        direction, distance = self._point_geometry(light, points)
        inv_d2 = np.where(distance > 0.0, 1.0 / np.maximum(distance, 1e-300) ** 2, 0.0)
        value = light.intensity[None, :] * inv_d2[:, None]
        return DirectSample(direction, distance, value, np.zeros(points.shape[0]), light.cast_shadow)

    def _sample_spot(self, light: SpotLight, points) -> DirectSample:
        sample = self._sample_point(light, points)
        axis = light.direction
        cos_angle = np.clip(np.sum(-sample.direction * axis, axis=1), -1.0, 1.0)
        sample.radiance_over_pdf = sample.radiance_over_pdf * light.falloff(np.arccos(cos_angle))[:, None]
        return sample

    def _sample_sphere(self, light: PointLight, points, u) -> DirectSample:
        k = points.shape[0]
        to_center, dc = self._point_geometry(light, points)
        outside = dc > light.radius
        sin2 = np.where(outside, (light.radius / np.maximum(dc, 1e-300)) ** 2, 1.0)
        one_minus = _one_minus_cos(sin2)
        local = sampler.uniform_cone(u, 1.0 - one_minus)
        direction = sampler.to_world(local, to_center)
        # 到球面的距离
        b = np.sum(direction * (light.pose.position - points), axis=1)
        c = dc * dc - light.radius ** 2
        distance = b - np.sqrt(np.maximum(b * b - c, 0.0))
        solid_angle = 2.0 * math.pi * one_minus
        value = self.sphere_radiance(light)[None, :] * solid_angle[:, None]
        value = np.where(outside[:, None], value, 0.0)
        pdf = np.where(outside, 1.0 / np.maximum(solid_angle, 1e-300), 0.0)
        return DirectSample(direction, np.maximum(distance, 0.0), value, pdf, light.cast_shadow)

    def _sample_directional(self, light: DirectionalLight, points, u) -> DirectSample:
        k = points.shape[0]
        toward = -light.direction / np.linalg.norm(light.direction)
        if light.angular_diameter > 0.0:
            cos_max = math.cos(0.5 * light.angular_diameter)
            direction = sampler.to_world(sampler.uniform_cone(u, np.full(k, cos_max)),
                                         np.broadcast_to(toward, (k, 3)))
        else:
            direction = np.broadcast_to(toward, (k, 3)).copy()
        value = np.broadcast_to(light.color * light.strength, (k, 3)).copy()
        return DirectSample(direction, np.full(k, np.inf), value, np.zeros(k), light.cast_shadow)

    def _area_local_points(self, light: AreaLight, u: np.ndarray) -> np.ndarray:
        if light.shape == 'square':
            xy = (u - 0.5) * light.size
        else:
            xy = sampler.uniform_disk(u) * (0.5 * light.size)
        return np.concatenate([xy, np.zeros((u.shape[0], 1))], axis=1)

    def _sample_area(self, light: AreaLight, points, u) -> DirectSample:
        world = light.pose.apply_points(self._area_local_points(light, u))
        to_light = world - points
        distance = np.linalg.norm(to_light, axis=1)
        safe = np.where(distance > 0.0, distance, 1.0)
        direction = to_light / safe[:, None]
        normal = light.direction
        cos_light = np.sum(-direction * normal, axis=1)
        front = (cos_light > 0.0) & (distance > 0.0)
        d2 = safe * safe
        geometry = np.where(front, light.area * cos_light / d2, 0.0)
        value = light.radiance[None, :] * geometry[:, None]
        pdf = np.where(front, d2 / np.maximum(light.area * cos_light, 1e-300), 0.0)
        return DirectSample(direction, distance, value, pdf, light.cast_shadow)

    # ---------- BSDF 光线命中光源 ----------

    @staticmethod
    def hittable(light: Light) -> bool:
        """BSDF 采样光线可以命中的光源(参与 MIS)"""
        return isinstance(light, AreaLight) or (isinstance(light, PointLight)
                                                and not isinstance(light, SpotLight) and light.radius > 0.0)

    def intersect_light(self, light: Light, origins, directions) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """光线与可见光源求交: 返回 (t, 辐亮度 K×3, 光源采样的立体角 pdf)"""
        k = origins.shape[0]
        t = np.full(k, np.inf)
        radiance = np.zeros((k, 3))
        pdf = np.zeros(k)
        if isinstance(light, AreaLight):
            normal = light.direction
            denom = np.sum(directions * normal, axis=1)
            front = denom < 0.0
            safe = np.where(front, denom, -1.0)
            t_hit = np.sum((light.pose.position - origins) * normal, axis=1) / safe
            local = light.pose.inverse_points(origins + directions * t_hit[:, None])
            half = 0.5 * light.size
            if light.shape == 'square':
                inside = (np.abs(local[:, 0]) <= half) & (np.abs(local[:, 1]) <= half)
            else:
                inside = local[:, 0] ** 2 + local[:, 1] ** 2 <= half * half
            hit = front & inside & (t_hit > 0.0)
            t = np.where(hit, t_hit, np.inf)
            radiance[hit] = light.radiance
            cos_light = -denom
            pdf = np.where(hit, t_hit ** 2 / np.maximum(light.area * cos_light, 1e-300), 0.0)
        elif self.hittable(light):
            oc = origins - light.pose.position
            b = np.sum(directions * oc, axis=1)
            dc2 = np.sum(oc * oc, axis=1)
            c = dc2 - light.radius ** 2
            disc = b * b - c
            t_hit = -b - np.sqrt(np.maximum(disc, 0.0))
            hit = (disc >= 0.0) & (t_hit > 0.0) & (c > 0.0)
            t = np.where(hit, t_hit, np.inf)
            radiance[hit] = self.sphere_radiance(light)
            one_minus = _one_minus_cos(light.radius ** 2 / np.maximum(dc2, 1e-300))
            pdf = np.where(hit, 1.0 / np.maximum(2.0 * math.pi * one_minus, 1e-300), 0.0)
        return t, radiance, pdf

    def intersect_emitters(self, lights: List[Light], origins, directions,
                           t_max: Optional[np.ndarray] = None):
        """所有可见光源中最近的命中: 返回 (t, 辐亮度, 光源 pdf)"""
        k = origins.shape[0]
        best_t = np.full(k, np.inf) if t_max is None else np.asarray(t_max, dtype=np.float64).copy()
        radiance = np.zeros((k, 3))
        pdf = np.zeros(k)
        found = np.zeros(k, dtype=bool)
        for light in lights:
            if not self.hittable(light):
                continue
            t, value, light_pdf = self.intersect_light(light, origins, directions)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            radiance[closer] = value[closer]
            pdf = np.where(closer, light_pdf, pdf)
            found |= closer
        return np.where(found, best_t, np.inf), radiance, pdf


light_service = LightService()
