#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相机模型
透视相机与正交相机: 光线生成与世界坐标到像素的投影

像素 (i, j) 覆盖 [i, i+1)×[j, j+1), (0, 0) 为左上角; 相机沿局部 -Z 观察
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from .base import BoundsError, ValidationError
from .rotation import normalize
from .scene import Positionable

logger = logging.getLogger(__name__)


def _resolution(resolution) -> Tuple[int, int]:
    try:
        width, height = (int(r) for r in resolution)
    except (TypeError, ValueError):
        raise ValidationError(f"分辨率格式无效: {resolution}")
    if width < 1 or height < 1:
        raise ValidationError(f"分辨率必须 ≥ 1: {resolution}")
    return width, height


class Camera(Positionable):
    """相机基类"""

    kind = 'camera'

    def __init__(self, resolution, position=None, rotation=None):
        super().__init__(position, rotation)
        self.width, self.height = _resolution(resolution)

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.width, self.height

    def set_resolution(self, resolution) -> None:
        self.width, self.height = _resolution(resolution)

    def generate_ray(self, pixel, jitter=(0.5, 0.5)):
        """单条光线: 返回 (origin, 单位方向)"""
        i, j = pixel
        if not (0 <= i < self.width and 0 <= j < self.height):
            raise BoundsError(f"像素越界: ({i}, {j}), 分辨率 {self.width}×{self.height}")
        ju, jv = jitter
        origins, directions = self.generate_rays(np.array([i + ju], dtype=np.float64),
                                                 np.array([j + jv], dtype=np.float64))
        return origins[0], directions[0]

    def generate_rays(self, x: np.ndarray, y: np.ndarray):
        """批量光线, x/y 为连续像素坐标"""
        raise NotImplementedError

    def project(self, world_point) -> Optional[Tuple[float, float]]:
        """世界坐标点 → 连续像素坐标, 透视相机背后的点返回 None"""
        uv = self.project_points(np.asarray(world_point, dtype=np.float64).reshape(1, 3))
        if not np.all(np.isfinite(uv[0])):
            return None
        return float(uv[0, 0]), float(uv[0, 1])

    def project_points(self, points: np.ndarray) -> np.ndarray:
        """批量投影, 不可见点为 NaN"""
        raise NotImplementedError


class PerspectiveCamera(Camera):
    """透视相机: 可用水平视场角 fov_x 或像素焦距 focal_px 指定内参"""

    kind = 'perspective'

    def __init__(self, resolution, fov_x: Optional[float] = None, focal_px: Optional[float] = None,
                 position=None, rotation=None):
        super().__init__(resolution, position, rotation)
        if fov_x is None and focal_px is None:
            fov_x = math.radians(39.6)  # 50mm 镜头的水平视场角
        if fov_x is not None:
            if not (0.0 < fov_x < math.pi):
                raise ValidationError(f"fov_x 必须在 (0, π) 内: {fov_x}")
            focal_px = 0.5 * self.width / math.tan(0.5 * fov_x)
        if not np.isfinite(focal_px) or focal_px <= 0:
            raise ValidationError(f"焦距必须为正数: {focal_px}")
        self.focal_px = float(focal_px)

    @property
    def fov_x(self) -> float:
        return 2.0 * math.atan(0.5 * self.width / self.focal_px)

    def generate_rays(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        local = np.stack([(x - 0.5 * self.width) / self.focal_px,
                          -(y - 0.5 * self.height) / self.focal_px,
                          -np.ones_like(x)], axis=-1)
        directions = normalize(self.pose.apply_directions(local))
        origins = np.broadcast_to(self.pose.position, directions.shape).copy()
        return origins, directions

    def project_points(self, points):
        local = self.pose.inverse_points(points)
        z = local[:, 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            u = self.focal_px * local[:, 0] / (-z) + 0.5 * self.width
            v = -self.focal_px * local[:, 1] / (-z) + 0.5 * self.height
        behind = z >= 0.0
        u = np.where(behind, np.nan, u)
        v = np.where(behind, np.nan, v)
        return np.stack([u, v], axis=1)


class OrthographicCamera(Camera):
    """正交相机: ortho_scale 为视野宽度(世界单位)"""

    kind = 'orthographic'

    def __init__(self, resolution, ortho_scale: float = 1.0, position=None, rotation=None):
        super().__init__(resolution, position, rotation)
        if not np.isfinite(ortho_scale) or ortho_scale <= 0:
            raise ValidationError(f"ortho_scale 必须为正数: {ortho_scale}")
        self.ortho_scale = float(ortho_scale)

    @property
    def pixel_pitch(self) -> float:
        return self.ortho_scale / self.width

    def generate_rays(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        s = self.pixel_pitch
        local = np.stack([(x - 0.5 * self.width) * s, -(y - 0.5 * self.height) * s, np.zeros_like(x)], axis=-1)
        origins = self.pose.apply_points(local)
        forward = self.pose.apply_directions(np.array([0.0, 0.0, -1.0]))
        forward = forward / np.linalg.norm(forward)
        directions = np.broadcast_to(forward, origins.shape).copy()
        return origins, directions

    def project_points(self, points):
        local = self.pose.inverse_points(points)
        s = self.pixel_pitch
        u = local[:, 0] / s + 0.5 * self.width
        v = -local[:, 1] / s + 0.5 * self.height
        return np.stack([u, v], axis=1)


CAMERA_TYPES = {'perspective': PerspectiveCamera, 'orthographic': OrthographicCamera}
