#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
光源模型
背景光、点光源、方向光、聚光灯、面光源

单位约定: 点光源/聚光灯强度为瓦特, 方向光/面光源为 W/m², 背景光为辐亮度; 尺寸单位为米
"""

import logging
import math

import numpy as np

from .base import ValidationError, validate_numeric_range
from .scene import Positionable

logger = logging.getLogger(__name__)

AREA_SHAPES = ('square', 'disc')


def _color(color) -> np.ndarray:
    c = np.asarray(color, dtype=np.float64).reshape(-1)[:3]
    if c.shape != (3,) or not np.all(np.isfinite(c)) or np.any(c < 0.0):
        raise ValidationError(f"光源颜色通道必须为非负有限数: {np.asarray(color).tolist()}")
    return c


class Light(Positionable):
    """光源基类"""

    kind = 'light'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 1.0, cast_shadow: bool = True,
                 position=None, rotation=None):
        super().__init__(position, rotation)
        self.color = _color(color)
        validate_numeric_range({'strength': strength}, {'strength': (0.0, np.inf)})
        self.strength = float(strength)
        self.cast_shadow = bool(cast_shadow)

    @property
    def is_delta(self) -> bool:
        """无法被 BSDF 采样光线命中的光源"""
        return True

    @property
    def direction(self) -> np.ndarray:
        """光源朝向(局部 -Z 的世界方向)"""
        return self.pose.apply_directions(np.array([0.0, 0.0, -1.0]))


class BackgroundLight(Light):
    """均匀环境光: 逃逸光线获得常量辐亮度 color·strength"""

    kind = 'background'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 1.0):
        super().__init__(color, strength, cast_shadow=True)

    @property
    def radiance(self) -> np.ndarray:
        return self.color * self.strength


class PointLight(Light):
    """点光源, radius > 0 时为球面光源(软阴影)"""

    kind = 'point'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 100.0, radius: float = 0.0,
                 cast_shadow: bool = True, position=None, rotation=None):
        super().__init__(color, strength, cast_shadow, position, rotation)
        validate_numeric_range({'radius': radius}, {'radius': (0.0, np.inf)})
        self.radius = float(radius)

    @property
    def is_delta(self) -> bool:
        return self.radius == 0.0

    @property
    def intensity(self) -> np.ndarray:
        """辐射强度 W/sr"""
        return self.color * self.strength / (4.0 * math.pi)


class DirectionalLight(Light):
    """方向光(太阳光), angular_diameter > 0 时在立体角内采样"""

    kind = 'directional'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 1.0, angular_diameter: float = 0.0,
                 cast_shadow: bool = True, position=None, rotation=None):
        super().__init__(color, strength, cast_shadow, position, rotation)
        validate_numeric_range({'angular_diameter': angular_diameter}, {'angular_diameter': (0.0, math.pi)})
        self.angular_diameter = float(angular_diameter)


class SpotLight(Light):
    """聚光灯: cone_angle 为完整锥角, blend 为边缘平滑带比例"""

    kind = 'spot'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 100.0, cone_angle: float = math.pi / 4,
                 blend: float = 0.15, cast_shadow: bool = True, position=None, rotation=None):
        super().__init__(color, strength, cast_shadow, position, rotation)
        if not (0.0 < cone_angle < math.pi):
            raise ValidationError(f"cone_angle 必须在 (0, π) 内: {cone_angle}")
        validate_numeric_range({'blend': blend}, {'blend': (0.0, 1.0)})
        self.cone_angle = float(cone_angle)
        self.blend = float(blend)

    @property
    def intensity(self) -> np.ndarray:
        """光轴方向的辐射强度 W/sr, 与同功率点光源相同"""
        return self.color * self.strength / (4.0 * math.pi)

    def falloff(self, angle: np.ndarray) -> np.ndarray:
        """按偏离光轴的角度计算衰减, 平滑带内为 smoothstep"""
        half = 0.5 * self.cone_angle
        inner = half * (1.0 - self.blend)
        angle = np.asarray(angle, dtype=np.float64)
        if half - inner <= 0.0:
            return (angle <= half).astype(np.float64)
        x = np.clip((half - angle) / (half - inner), 0.0, 1.0)
        return x * x * (3.0 - 2.0 * x)


class AreaLight(Light):
    """面光源: 正方形(边长 size)或圆盘(直径 size), 沿局部 -Z 单面发光

    strength 为出射度 W/m², 辐亮度 = strength/π
    """

    kind = 'area'

    def __init__(self, color=(1.0, 1.0, 1.0), strength: float = 1.0, shape: str = 'square',
                 size: float = 1.0, cast_shadow: bool = True, position=None, rotation=None):
        super().__init__(color, strength, cast_shadow, position, rotation)
        if shape not in AREA_SHAPES:
            raise ValidationError(f"面光源形状必须是 {AREA_SHAPES} 之一: {shape}")
        if not np.isfinite(size) or size <= 0:
            raise ValidationError(f"面光源尺寸必须为正数: {size}")
        self.shape = shape
        self.size = float(size)

    @property
    def is_delta(self) -> bool:
        return False

    @property
    def area(self) -> float:
        if self.shape == 'square':
            return self.size * self.size
        return math.pi * (0.5 * self.size) ** 2

    @property
    def radiance(self) -> np.ndarray:
        return self.color * self.strength / math.pi


LIGHT_TYPES = {
    'background': BackgroundLight,
    'point': PointLight,
    'directional': DirectionalLight,
    'spot': SpotLight,
    'area': AreaLight,
}
