#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
几何渲染对象
三角网格(可带逐面材质分段)与点云(球/立方体点基元、发光强度)
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .appearance import Appearance, ColorSource, Material, PrincipledBSDFMaterial, UniformColors, _rgba
from .base import ValidationError, as_float_array
from .scene import Positionable

logger = logging.getLogger(__name__)

POINT_SHAPES = ('sphere', 'cube')


class Renderable(Positionable):
    """所有可渲染几何体的基类"""

    kind = 'renderable'
    shadow_catcher = False

    def set_appearance(self, colors: Optional[ColorSource] = None, material: Optional[Material] = None) -> None:
        """更新颜色与材质"""
        raise NotImplementedError


class TriMesh(Renderable):
    """三角网格

    face_segments 为每个面的分段编号, segment_materials 为 分段编号 → 材质覆盖
    """

    kind = 'mesh'

    def __init__(self, vertices, faces, normals=None, appearance: Optional[Appearance] = None,
                 face_segments=None, segment_materials: Optional[Dict[int, Material]] = None,
                 position=None, rotation=None, shadow_catcher: bool = False):
        super().__init__(position, rotation)
        self.vertices = as_float_array(vertices, (3,), 'vertices')
        faces = np.asarray(faces)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValidationError(f"faces 形状应为 M×3, 实际为 {faces.shape}")
        if not np.issubdtype(faces.dtype, np.integer):
            if not np.all(np.equal(np.mod(faces, 1), 0)):
                raise ValidationError("faces 必须是整数索引")
        self.faces = faces.astype(np.int64)
        n = self.vertices.shape[0]
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValidationError(f"面索引超出顶点范围 (顶点数 {n})")
        degenerate = ((self.faces[:, 0] == self.faces[:, 1]) | (self.faces[:, 1] == self.faces[:, 2])
                      | (self.faces[:, 0] == self.faces[:, 2]))
        if np.any(degenerate):
            raise ValidationError(f"存在退化面(重复索引): 面 {int(np.flatnonzero(degenerate)[0])}")

        self.normals = None
        if normals is not None:
            normals = as_float_array(normals, (3,), 'normals')
            if normals.shape[0] != n:
                raise ValidationError(f"法线数量 {normals.shape[0]} 与顶点数 {n} 不一致")
            lengths = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-4):
                raise ValidationError("法线必须为单位向量 (误差 1e-4 以内)")
            self.normals = normals

        self.appearance = appearance or Appearance()
        self.face_segments = None
        self.segment_materials: Dict[int, Material] = dict(segment_materials or {})
        if face_segments is not None:
            self.set_face_segments(face_segments, self.segment_materials)
        self.shadow_catcher = bool(shadow_catcher)
        # 由基本体生成时记录其参数, 便于场景文件保存
        self.primitive = None

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def set_appearance(self, colors=None, material=None) -> None:
        if colors is not None:
            self.appearance.colors = colors
        if material is not None:
            self.appearance.material = material

    def set_face_segments(self, face_segments, segment_materials: Dict[int, Material]) -> None:
        """设置逐面材质: 每个分段编号必须有对应材质"""
        segments = np.asarray(face_segments, dtype=np.int64).reshape(-1)
        if segments.shape[0] != self.face_count:
            raise ValidationError(f"face_segments 长度 {segments.shape[0]} 与面数 {self.face_count} 不一致")
        missing = sorted(set(np.unique(segments).tolist()) - set(int(k) for k in segment_materials))
        if missing:
            raise ValidationError(f"分段编号缺少材质定义: {missing}")
        self.face_segments = segments
        self.segment_materials = {int(k): v for k, v in segment_materials.items()}

    def material_for_faces(self, face_index: np.ndarray) -> List[Material]:
        """面对应的材质(考虑分段覆盖)"""
        if self.face_segments is None:
            return [self.appearance.material] * len(face_index)
        return [self.segment_materials[int(s)] for s in self.face_segments[face_index]]

    def materials_table(self):
        """返回 (材质列表, 每个面的材质序号)"""
        if self.face_segments is None:
            return [self.appearance.material], np.zeros(self.face_count, dtype=np.int64)
        keys = sorted(self.segment_materials)
        lookup = {k: i for i, k in enumerate(keys)}
        index = np.array([lookup[int(s)] for s in self.face_segments], dtype=np.int64)
        return [self.segment_materials[k] for k in keys], index

    def world_vertices(self) -> np.ndarray:
        return self.pose.apply_points(self.vertices)

    def world_normals(self) -> Optional[np.ndarray]:
        if self.normals is None:
            return None
        return self.pose.apply_directions(self.normals)

    def face_normals(self) -> np.ndarray:
        """局部坐标下的单位面法线"""
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(length > 0.0, length, 1.0)

    def edges(self) -> np.ndarray:
        """无向边 (去重, 每行 a < b)"""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def surface_area(self) -> float:
        v = self.vertices[self.faces]
        return float(0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1).sum())

    def check_binding(self) -> None:
        self.appearance.check_binding(self.vertex_count, self.face_count)

    def __repr__(self):
        return f"<TriMesh(tag={self.tag}, vertices={self.vertex_count}, faces={self.face_count})>"


@dataclass
class PointInstance:
    """点基元实例(世界坐标)"""
    center: np.ndarray
    shape: str
    radius: float
    color: np.ndarray
    emission: float


class PointCloud(Renderable):
    """点云: 每个点渲染为球或立方体基元

    colors 为 1×4(统一颜色)或 N×4(逐点颜色); 不支持纹理
    """

    kind = 'pointcloud'

    def __init__(self, points, colors=None, normals=None, point_shape: str = 'sphere',
                 point_radius: float = 0.01, emission_strength: float = 0.0,
                 material: Optional[Material] = None, position=None, rotation=None):
        super().__init__(position, rotation)
        self.points = as_float_array(points, (3,), 'points')
        self.normals = None if normals is None else as_float_array(normals, (3,), 'normals')
        if self.normals is not None and self.normals.shape[0] != self.points.shape[0]:
            raise ValidationError("点云法线数量与点数不一致")
        if point_shape not in POINT_SHAPES:
            raise ValidationError(f"点基元类型必须是 {POINT_SHAPES} 之一: {point_shape}")
        if not np.isfinite(point_radius) or point_radius <= 0:
            raise ValidationError(f"点半径必须为正数: {point_radius}")
        if not np.isfinite(emission_strength) or emission_strength < 0:
            raise ValidationError(f"发光强度必须为有限非负数: {emission_strength}")
        self.point_shape = point_shape
        self.point_radius = float(point_radius)
        self.emission_strength = float(emission_strength)
        self.material = material or PrincipledBSDFMaterial(metallic=0.0, roughness=1.0, specular=0.0)
        self.colors = None
        self.set_colors(colors if colors is not None else (0.8, 0.8, 0.8))

    @property
    def point_count(self) -> int:
        return self.points.shape[0]

    def set_colors(self, colors) -> None:
        """设置统一颜色或逐点颜色"""
        if isinstance(colors, UniformColors):
            colors = colors.color
        elif isinstance(colors, ColorSource) and hasattr(colors, 'colors'):
            colors = colors.colors
        elif isinstance(colors, ColorSource):
            raise ValidationError("点云不支持纹理颜色")
        colors = np.asarray(colors, dtype=np.float64)
        if colors.ndim == 1:
            colors = _rgba(colors)[None, :]
        if colors.ndim != 2 or colors.shape[1] not in (3, 4):
            raise ValidationError(f"点云颜色形状无效: {colors.shape}")
        if colors.shape[1] == 3:
            colors = np.concatenate([colors, np.ones((colors.shape[0], 1))], axis=1)
        if colors.shape[0] not in (1, self.point_count):
            raise ValidationError(f"点云颜色数量 {colors.shape[0]} 必须为 1 或点数 {self.point_count}")
        if not np.all(np.isfinite(colors)) or np.any(colors < 0.0) or np.any(colors > 1.0):
            raise ValidationError("点云颜色通道值必须在 [0,1] 内")
        self.colors = colors

    def set_appearance(self, colors=None, material=None) -> None:
        if colors is not None:
            self.set_colors(colors)
        if material is not None:
            self.material = material

    def instance_colors(self) -> np.ndarray:
        """每个实例的颜色(统一颜色广播)"""
        if self.colors.shape[0] == 1:
            return np.repeat(self.colors, self.point_count, axis=0)
        return self.colors

    def world_points(self) -> np.ndarray:
        return self.pose.apply_points(self.points)

    def point_instances(self) -> List[PointInstance]:
        """每个点一个世界坐标实例"""
        centers = self.world_points()
        colors = self.instance_colors()
        return [PointInstance(centers[i], self.point_shape, self.point_radius, colors[i], self.emission_strength)
                for i in range(self.point_count)]

    def __repr__(self):
        return f"<PointCloud(tag={self.tag}, points={self.point_count}, shape={self.point_shape})>"
