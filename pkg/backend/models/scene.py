#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
场景模型
Positionable 基类(位置、旋转、标签)与 Scene 容器(渲染对象、光源、相机、渲染设置)
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .base import MissingCameraError, NotFoundError, TagCollisionError, ValidationError
from .rotation import (IDENTITY_QUATERNION, RotationSpec, look_at_rotation, quaternion_to_matrix,
                       to_quaternion, transform_directions, vec3)

logger = logging.getLogger(__name__)


@dataclass
class Pose:
    """世界位姿: 位置(米) + 单位四元数 (w, x, y, z)"""
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUATERNION.copy())

    def __post_init__(self):
        self.position = vec3(self.position)
        self.rotation = to_quaternion(np.asarray(self.rotation, dtype=np.float64))

    @property
    def matrix(self) -> np.ndarray:
        """3×3 旋转矩阵"""
        return quaternion_to_matrix(self.rotation)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """局部坐标点 → 世界坐标"""
        return transform_directions(self.matrix, points) + self.position

    def apply_directions(self, directions: np.ndarray) -> np.ndarray:
        """局部方向 → 世界方向"""
        return transform_directions(self.matrix, directions)

    def inverse_points(self, points: np.ndarray) -> np.ndarray:
        """世界坐标点 → 局部坐标"""
        return transform_directions(self.matrix.T, np.asarray(points, dtype=np.float64) - self.position)

    def is_identity(self) -> bool:
        return not np.any(self.position) and np.array_equal(self.rotation, IDENTITY_QUATERNION)


class Positionable:
    """可定位对象基类: 所有几何体、光源和相机都继承此类"""

    kind = 'object'

    def __init__(self, position=None, rotation=None):
        self.pose = Pose()
        self.tag: Optional[str] = None
        self.set_pose(position, rotation)

    def set_pose(self, position=None, rotation=None) -> None:
        """只更新提供的分量; 旋转通过 to_quaternion 规范化"""
        if position is not None:
            self.pose.position = vec3(position)
        if rotation is not None:
            self.pose.rotation = to_quaternion(rotation)

    def set_position(self, position) -> None:
        self.set_pose(position=position)

    def set_rotation(self, rotation) -> None:
        self.set_pose(rotation=rotation)

    def look_at(self, target, up_hint=None) -> None:
        """将旋转设置为朝向目标点"""
        self.pose.rotation = look_at_rotation(self.pose.position, target, up_hint)

    def __repr__(self):
        return f"<{self.__class__.__name__}(tag={self.tag})>"


class Scene:
    """场景容器

    允许多个独立场景实例(批处理并行); 渲染开始后场景视为只读
    """

    def __init__(self, settings=None):
        from .render_settings import RenderSettings
        self.renderables: Dict[str, Positionable] = {}
        self.lights: Dict[str, Positionable] = {}
        self.camera = None
        self.settings = settings or RenderSettings()
        # 自动标签计数器按类型递增, 删除后不复用
        self._counters = defaultdict(int)

    # ---------- 标签管理 ----------

    def _next_tag(self, kind: str) -> str:
        while True:
            tag = f"{kind}_{self._counters[kind]}"
            self._counters[kind] += 1
            if tag not in self.renderables and tag not in self.lights:
                return tag

    def _insert(self, collection: Dict[str, Positionable], obj: Positionable, tag: Optional[str]) -> str:
        if tag is None:
            tag = self._next_tag(obj.kind)
        else:
            if not isinstance(tag, str) or not tag:
                raise ValidationError("标签必须是非空字符串")
            if tag in collection:
                raise TagCollisionError(f"标签已存在: {tag}")
        obj.tag = tag
        collection[tag] = obj
        logger.debug(f"添加对象 {obj.__class__.__name__}: tag={tag}")
        return tag

    def add_renderable(self, obj, tag: Optional[str] = None) -> str:
        """添加渲染对象, 返回标签"""
        return self._insert(self.renderables, obj, tag)

    def add_light(self, light, tag: Optional[str] = None) -> str:
        """添加光源, 返回标签"""
        return self._insert(self.lights, light, tag)

    def get(self, tag: str) -> Positionable:
        """按标签查找渲染对象或光源"""
        if tag in self.renderables:
            return self.renderables[tag]
        if tag in self.lights:
            return self.lights[tag]
        raise NotFoundError(f"标签不存在: {tag}")

    def remove(self, tag: str) -> None:
        """删除对象"""
        if tag in self.renderables:
            del self.renderables[tag]
        elif tag in self.lights:
            del self.lights[tag]
        else:
            raise NotFoundError(f"标签不存在: {tag}")
        logger.debug(f"删除对象: tag={tag}")

    def tags(self) -> List[str]:
        return list(self.renderables) + list(self.lights)

    def set_pose(self, tag: str, position=None, rotation=None) -> None:
        """设置对象位姿, 只更新提供的分量"""
        self.get(tag).set_pose(position, rotation)

    # ---------- 相机 ----------

    def set_camera(self, camera) -> None:
        self.camera = camera
        camera.tag = 'camera'

    def set_perspective_camera(self, resolution, fov_x: Optional[float] = None, focal_px: Optional[float] = None,
                               position=None, rotation=None, look_at=None, up_hint=None):
        """设置透视相机"""
        from .camera import PerspectiveCamera
        camera = PerspectiveCamera(resolution, fov_x=fov_x, focal_px=focal_px,
                                   position=position, rotation=rotation)
        if look_at is not None:
            camera.look_at(look_at, up_hint)
        self.set_camera(camera)
        return camera

    def set_orthographic_camera(self, resolution, ortho_scale: float = 1.0,
                                position=None, rotation=None, look_at=None, up_hint=None):
        """设置正交相机"""
        from .camera import OrthographicCamera
        camera = OrthographicCamera(resolution, ortho_scale=ortho_scale,
                                    position=position, rotation=rotation)
        if look_at is not None:
            camera.look_at(look_at, up_hint)
        self.set_camera(camera)
        return camera

    def clear_camera(self) -> None:
        self.camera = None

    def require_camera(self):
        if self.camera is None:
            raise MissingCameraError("场景未设置相机, 无法渲染")
        return self.camera

    # ---------- 便捷入口 ----------

    def render(self, settings=None, threads: Optional[int] = None):
        """渲染场景"""
        from services.render_service import render_service
        return render_service.render(self, settings or self.settings, threads=threads)

    def save(self, path: str) -> None:
        from services.scene_io_service import scene_io_service
        scene_io_service.save_scene(self, path)

    @classmethod
    def load(cls, path: str) -> 'Scene':
        from services.scene_io_service import scene_io_service
        return scene_io_service.load_scene(path)

    def __repr__(self):
        return (f"<Scene(renderables={len(self.renderables)}, lights={len(self.lights)}, "
                f"camera={'yes' if self.camera else 'no'})>")


__all__ = ['Pose', 'Positionable', 'Scene', 'RotationSpec']
