#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基本体
网格基本体(立方体、圆、圆柱、平面)与参数化基本体(椭球、球、贝塞尔曲线)统一剖分为三角网格
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from config import Config
from .base import InvalidPrimitiveError, validate_positive
from .geometry import TriMesh

logger = logging.getLogger(__name__)

PRIMITIVE_PARAMS = {
    'cube': {'size': 2.0},
    'circle': {'radius': 1.0, 'segments': 32},
    'cylinder': {'radius': 1.0, 'height': 2.0, 'segments': 32},
    'plane': {'size': 2.0, 'shadow_catcher': False},
    'ellipsoid': {'rx': 1.0, 'ry': 1.0, 'rz': 1.0, 'subdivisions': 3},
    'sphere': {'radius': 1.0, 'subdivisions': 3},
    'bezier': {'control_points': None, 'bevel_radius': 0.01, 'samples': 32},
}


@dataclass
class PrimitiveSpec:
    """基本体参数: kind 取 PRIMITIVE_PARAMS 之一"""
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRIMITIVE_PARAMS:
            raise InvalidPrimitiveError(f"未知的基本体类型: {self.kind}")
        unknown = set(self.params) - set(PRIMITIVE_PARAMS[self.kind])
        if unknown:
            raise InvalidPrimitiveError(f"基本体 {self.kind} 不支持参数: {sorted(unknown)}")
        merged = dict(PRIMITIVE_PARAMS[self.kind])
        merged.update(self.params)
        self.params = merged
        self.validate()

    def validate(self) -> None:
        """检查尺寸为正、分段数 ≥ 3、控制点 ≥ 2"""
        p = self.params
        dims = [k for k in ('size', 'radius', 'height', 'rx', 'ry', 'rz', 'bevel_radius') if k in p]
        validate_positive(p, dims, error_cls=InvalidPrimitiveError)
        if 'segments' in p and (int(p['segments']) != p['segments'] or p['segments'] < 3):
            raise InvalidPrimitiveError(f"segments 必须为不小于3的整数: {p['segments']}")
        if 'subdivisions' in p and (int(p['subdivisions']) != p['subdivisions'] or p['subdivisions'] < 0):
            raise InvalidPrimitiveError(f"subdivisions 必须为非负整数: {p['subdivisions']}")
        if self.kind == 'bezier':
            cps = p.get('control_points')
            if cps is None:
                raise InvalidPrimitiveError("贝塞尔曲线需要控制点")
            cps = np.asarray(cps, dtype=np.float64)
            if cps.ndim != 2 or cps.shape[1] != 3 or cps.shape[0] < 2 or not np.all(np.isfinite(cps)):
                raise InvalidPrimitiveError(f"控制点形状应为 K×3 且 K ≥ 2, 实际为 {cps.shape}")
            p['control_points'] = cps
            if int(p['samples']) != p['samples'] or p['samples'] < 1:
                raise InvalidPrimitiveError(f"samples 必须为正整数: {p['samples']}")

    def to_dict(self) -> Dict[str, Any]:
        params = dict(self.params)
        if self.kind == 'bezier':
            params['control_points'] = np.asarray(params['control_points']).tolist()
        return {'kind': self.kind, **params}


def _cube(size: float):
    h = 0.5 * size
    vertices = np.array([[x, y, z] for z in (-h, h) for y in (-h, h) for x in (-h, h)], dtype=np.float64)
    # 外法线方向的逆时针三角形
    faces = np.array([
        [0, 2, 1], [1, 2, 3],  # -Z
        [4, 5, 6], [5, 7, 6],  # +Z
        [0, 1, 4], [1, 5, 4],  # -Y
        [2, 6, 3], [3, 6, 7],  # +Y
        [0, 4, 2], [2, 4, 6],  # -X
        [1, 3, 5], [3, 7, 5],  # +X
    ])
    return vertices, faces


def _circle(radius: float, segments: int):
    angles = 2.0 * math.pi * np.arange(segments) / segments
    vertices = np.stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(segments)], axis=1)
    # 以第0个顶点为扇形中心
    faces = np.array([[0, i, i + 1] for i in range(1, segments - 1)])
    return vertices, faces


def _cylinder(radius: float, height: float, segments: int):
    angles = 2.0 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    h = 0.5 * height
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    vertices = np.concatenate([bottom, top, [[0.0, 0.0, -h], [0.0, 0.0, h]]])
    c_bottom, c_top = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces.append([i, j, segments + i])
        faces.append([j, segments + j, segments + i])
        faces.append([c_bottom, j, i])
        faces.append([c_top, segments + i, segments + j])
    return vertices, np.array(faces)


def _plane(size: float):
    h = 0.5 * size
    vertices = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return vertices, faces


def icosphere(subdivisions: int):
    """单位二十面体细分球: 面数 20·4^s"""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    vertices = [np.asarray(v, dtype=np.float64) / np.linalg.norm(v) for v in vertices]

    for _ in range(subdivisions):
        midpoint_cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint_cache:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(vertices) - 1
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = new_faces

    vertices = np.array(vertices)
    # 重新投影到单位球面, 保证半径误差在 1e-9 以内
    vertices /= np.linalg.norm(vertices, axis=1, keepdims=True)
    return vertices, np.array(faces, dtype=np.int64)


def sample_bezier(control_points, t: float) -> np.ndarray:
    """de Casteljau 求值: t=0 返回首个控制点, t=1 返回最后一个"""
    points = np.asarray(control_points, dtype=np.float64)
    if t <= 0.0:
        return points[0].copy()
    if t >= 1.0:
        return points[-1].copy()
    work = points.copy()
    for k in range(1, len(points)):
        work = (1.0 - t) * work[:-1] + t * work[1:]
    return work[0]


def _bezier_derivative(control_points: np.ndarray, t: float) -> np.ndarray:
    k = len(control_points) - 1
    diffs = k * (control_points[1:] - control_points[:-1])
    if len(diffs) == 1:
        return diffs[0]
    return sample_bezier(diffs, t)


def _bezier_tube(control_points: np.ndarray, bevel_radius: float, samples: int, sides: int):
    """沿贝塞尔曲线扫掠圆形截面, 两端封口"""
    ts = np.linspace(0.0, 1.0, samples + 1)
    centers = np.array([sample_bezier(control_points, t) for t in ts])
    tangents = []
    for i, t in enumerate(ts):
        d = _bezier_derivative(control_points, t)
        if np.linalg.norm(d) < 1e-12:
            d = centers[min(i + 1, len(ts) - 1)] - centers[max(i - 1, 0)]
        tangents.append(d / max(np.linalg.norm(d), 1e-12))
    tangents = np.array(tangents)

    # 平行传输标架, 避免截面扭转
    seed = np.array([0.0, 0.0, 1.0]) if abs(tangents[0][2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    normal = np.cross(tangents[0], seed)
    normal /= np.linalg.norm(normal)
    frames = []
    for i in range(len(ts)):
        if i > 0:
            normal = normal - np.dot(normal, tangents[i]) * tangents[i]
            length = np.linalg.norm(normal)
            normal = normal / length if length > 1e-12 else frames[-1][0]
        binormal = np.cross(tangents[i], normal)
        frames.append((normal, binormal))

    angles = 2.0 * math.pi * np.arange(sides) / sides
    vertices = []
    for (n, b), c in zip(frames, centers):
        for a in angles:
            vertices.append(c + bevel_radius * (math.cos(a) * n + math.sin(a) * b))
    vertices.append(centers[0])
    vertices.append(centers[-1])
    vertices = np.array(vertices)
    start_cap, end_cap = len(vertices) - 2, len(vertices) - 1

    faces = []
    for i in range(samples):
        for j in range(sides):
            k = (j + 1) % sides
            a, b = i * sides + j, i * sides + k
            c, d = (i + 1) * sides + j, (i + 1) * sides + k
            faces.append([a, b, d])
            faces.append([a, d, c])
    last = samples * sides
    for j in range(sides):
        k = (j + 1) % sides
        faces.append([start_cap, k, j])
        faces.append([end_cap, last + j, last + k])
    return vertices, np.array(faces)


def tessellate(spec: PrimitiveSpec) -> TriMesh:
    """基本体 → 三角网格

    立方体/球/椭球/圆柱为封闭网格, 平面/圆为开放网格
    """
    p = spec.params
    if spec.kind == 'cube':
        vertices, faces = _cube(float(p['size']))
    elif spec.kind == 'circle':
        vertices, faces = _circle(float(p['radius']), int(p['segments']))
    elif spec.kind == 'cylinder':
        vertices, faces = _cylinder(float(p['radius']), float(p['height']), int(p['segments']))
    elif spec.kind == 'plane':
        vertices, faces = _plane(float(p['size']))
    elif spec.kind == 'sphere':
        vertices, faces = icosphere(int(p['subdivisions']))
        vertices = vertices * float(p['radius'])
    elif spec.kind == 'ellipsoid':
        vertices, faces = icosphere(int(p['subdivisions']))
        vertices = vertices * np.array([p['rx'], p['ry'], p['rz']], dtype=np.float64)
    elif spec.kind == 'bezier':
        vertices, faces = _bezier_tube(p['control_points'], float(p['bevel_radius']),
                                       int(p['samples']), Config.BEZIER_SIDES)
    else:
        raise InvalidPrimitiveError(f"未知的基本体类型: {spec.kind}")
    return TriMesh(vertices, faces)


def make_primitive(kind: str, appearance=None, position=None, rotation=None, **params) -> TriMesh:
    """创建基本体渲染对象, 标签前缀为基本体类型"""
    spec = PrimitiveSpec(kind, params)
    mesh = tessellate(spec)
    mesh.primitive = spec
    mesh.kind = kind
    if appearance is not None:
        mesh.appearance = appearance
    mesh.shadow_catcher = bool(spec.params.get('shadow_catcher', False))
    mesh.set_pose(position, rotation)
    return mesh
