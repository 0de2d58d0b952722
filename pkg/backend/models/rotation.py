#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
旋转与向量运算
四种旋转表示(四元数、轴角、旋转矩阵、外旋XYZ欧拉角)的统一转换、look_at 坐标系构造和球面线性插值

约定:
- 向量为 numpy float64 数组, 四元数为 (w, x, y, z) 且规范化为 w >= 0
- 相机沿局部 -Z 观察, 局部 +Y 为上方
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .base import DegenerateLookAtError, InvalidRotationError

logger = logging.getLogger(__name__)

ROTATION_TYPES = ('quaternion', 'axis_angle', 'matrix', 'euler_xyz')

# 正交性判定阈值(Frobenius 范数)
ORTHONORMAL_TOLERANCE = 1e-4
IDENTITY_QUATERNION = np.array([1.0, 0.0, 0.0, 0.0])
WORLD_Y = np.array([0.0, 1.0, 0.0])
WORLD_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RotationSpec:
    """旋转描述: type 取 ROTATION_TYPES 之一

    value 形式:
    - quaternion: (w, x, y, z)
    - axis_angle: ((ax, ay, az), angle)
    - matrix: 3×3
    - euler_xyz: (rx, ry, rz) 弧度, 外旋 X→Y→Z
    """
    type: str
    value: Any

    @classmethod
    def quaternion(cls, w, x, y, z) -> 'RotationSpec':
        return cls('quaternion', (float(w), float(x), float(y), float(z)))

    @classmethod
    def axis_angle(cls, axis, angle) -> 'RotationSpec':
        return cls('axis_angle', (tuple(float(a) for a in axis), float(angle)))

    @classmethod
    def matrix(cls, matrix) -> 'RotationSpec':
        return cls('matrix', np.asarray(matrix, dtype=np.float64).tolist())

    @classmethod
    def euler_xyz(cls, rx, ry, rz) -> 'RotationSpec':
        return cls('euler_xyz', (float(rx), float(ry), float(rz)))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RotationSpec':
        """从场景文档字典 {type, value} 构造"""
        kind = data.get('type')
        value = data.get('value')
        if kind not in ROTATION_TYPES:
            raise InvalidRotationError(f"未知的旋转类型: {kind}")
        if kind == 'axis_angle':
            if isinstance(value, dict):
                return cls.axis_angle(value.get('axis'), value.get('angle'))
            return cls.axis_angle(value[0], value[1])
        return cls(kind, value)

    def to_dict(self) -> Dict[str, Any]:
        """转换为场景文档格式"""
        if self.type == 'axis_angle':
            axis, angle = self.value
            return {'type': self.type, 'value': {'axis': list(axis), 'angle': angle}}
        value = self.value
        if isinstance(value, np.ndarray):
            value = value.tolist()
        return {'type': self.type, 'value': [list(v) if isinstance(v, (tuple, list)) else v for v in value]}


def vec3(value) -> np.ndarray:
    """转换为长度为3的 float64 向量"""
    array = np.asarray(value, dtype=np.float64).reshape(-1)
    if array.shape != (3,):
        raise ValueError(f"需要三维向量, 实际为 {array.shape}")
    return array


def normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """向量单位化(支持批量)"""
    v = np.asarray(v, dtype=np.float64)
    length = np.sqrt(np.sum(v * v, axis=axis, keepdims=True))
    return v / np.where(length > 0.0, length, 1.0)


def canonical_quaternion(q) -> np.ndarray:
    """单位化并规范为 w >= 0 (w == 0 时第一个非零分量为正)"""
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = math.sqrt(float(np.dot(q, q)))
    if norm == 0.0 or not math.isfinite(norm):
        raise InvalidRotationError(f"四元数范数无效: {norm}")
    q = q / norm
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        nonzero = np.flatnonzero(q)
        if nonzero.size and q[nonzero[0]] < 0.0:
            q = -q
    return q + 0.0  # 去除 -0.0


def _scipy_to_wxyz(rotation: Rotation) -> np.ndarray:
    x, y, z, w = rotation.as_quat()
    return np.array([w, x, y, z])


def _wxyz_to_scipy(q) -> Rotation:
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w])


def to_quaternion(spec: Union[RotationSpec, Dict[str, Any], np.ndarray]) -> np.ndarray:
    """任意旋转描述 → 规范单位四元数 (w, x, y, z)"""
    if isinstance(spec, dict):
        spec = RotationSpec.from_dict(spec)
    if not isinstance(spec, RotationSpec):
        # 直接传入四元数数组
        return canonical_quaternion(spec)

    try:
        if spec.type == 'quaternion':
            return canonical_quaternion(spec.value)

        if spec.type == 'axis_angle':
            axis, angle = spec.value
            axis = vec3(axis)
            length = float(np.linalg.norm(axis))
            if length == 0.0 or not math.isfinite(length) or not math.isfinite(float(angle)):
                raise InvalidRotationError("旋转轴不能为零向量")
            half = 0.5 * float(angle)
            xyz = axis / length * math.sin(half)
            return canonical_quaternion([math.cos(half), xyz[0], xyz[1], xyz[2]])

        if spec.type == 'matrix':
            matrix = np.asarray(spec.value, dtype=np.float64)
            if matrix.shape != (3, 3) or not np.all(np.isfinite(matrix)):
                raise InvalidRotationError(f"旋转矩阵必须为有限的3×3矩阵, 实际为 {matrix.shape}")
            deviation = float(np.linalg.norm(matrix @ matrix.T - np.eye(3)))
            if deviation > ORTHONORMAL_TOLERANCE:
                raise InvalidRotationError(f"旋转矩阵不正交 (偏差 {deviation:.3e})")
            if np.linalg.det(matrix) <= 0.0:
                raise InvalidRotationError("旋转矩阵行列式必须为 +1")
            return canonical_quaternion(_scipy_to_wxyz(Rotation.from_matrix(matrix)))

        if spec.type == 'euler_xyz':
            angles = vec3(spec.value)
            if not np.all(np.isfinite(angles)):
                raise InvalidRotationError("欧拉角必须为有限数值")
            # 小写 'xyz' 为外旋
            return canonical_quaternion(_scipy_to_wxyz(Rotation.from_euler('xyz', angles)))
    except (ValueError, TypeError, IndexError) as e:
        raise InvalidRotationError(f"旋转参数无效: {e}")

    raise InvalidRotationError(f"未知的旋转类型: {spec.type}")


def quaternion_to_matrix(q) -> np.ndarray:
    """单位四元数 → 3×3 旋转矩阵"""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quaternion_to_spec(q, kind: str) -> RotationSpec:
    """四元数 → 指定类型的旋转描述"""
    q = canonical_quaternion(q)
    if kind == 'quaternion':
        return RotationSpec.quaternion(*q)
    if kind == 'matrix':
        return RotationSpec.matrix(quaternion_to_matrix(q))
    rotation = _wxyz_to_scipy(q)
    if kind == 'axis_angle':
        rotvec = rotation.as_rotvec()
        angle = float(np.linalg.norm(rotvec))
        axis = rotvec / angle if angle > 0.0 else WORLD_Z
        return RotationSpec.axis_angle(axis, angle)
    if kind == 'euler_xyz':
        return RotationSpec.euler_xyz(*rotation.as_euler('xyz'))
    raise InvalidRotationError(f"未知的旋转类型: {kind}")


def rotate_vectors(q, vectors: np.ndarray) -> np.ndarray:
    """用四元数旋转一组向量 (N×3 或 3)"""
    matrix = quaternion_to_matrix(q)
    return transform_directions(matrix, vectors)


def transform_directions(matrix: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """逐元素展开的矩阵乘法, 结果与批大小无关"""
    v = np.asarray(vectors, dtype=np.float64)
    m = matrix
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([
        m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
        m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
        m[2, 0] * x + m[2, 1] * y + m[2, 2] * z,
    ], axis=-1)


def quaternion_multiply(a, b) -> np.ndarray:
    """四元数乘法 a ⊗ b"""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quaternion_angle(a, b) -> float:
    """两个旋转之间的夹角(弧度)"""
    d = abs(float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))))
    return 2.0 * math.acos(min(1.0, d))


def look_at_rotation(eye, target, up_hint: Optional[np.ndarray] = None) -> np.ndarray:
    """构造朝向目标点的旋转

    前向 f = normalize(target - eye); 默认上方提示为世界Z轴, 与 f 共线时改用世界Y轴;
    右向 r = normalize(f × up); 上方 u = r × f; 局部坐标轴 (X, Y, Z) 映射到 (r, u, -f)
    """
    eye = vec3(eye)
    target = vec3(target)
    direction = target - eye
    distance = float(np.linalg.norm(direction))
    if distance <= 1e-9:
        raise DegenerateLookAtError(f"look_at 目标点与位置重合: {eye.tolist()}")
    forward = direction / distance

    if up_hint is None:
        up_hint = WORLD_Z
        if abs(float(np.dot(forward, WORLD_Z))) > 1.0 - 1e-6:
            up_hint = WORLD_Y
    else:
        up_hint = normalize(vec3(up_hint))

    right = np.cross(forward, up_hint)
    right_length = float(np.linalg.norm(right))
    if right_length <= 1e-12:
        raise DegenerateLookAtError("上方提示向量与观察方向共线")
    right = right / right_length
    up = np.cross(right, forward)

    matrix = np.column_stack([right, up, -forward])
    return canonical_quaternion(_scipy_to_wxyz(Rotation.from_matrix(matrix)))


def slerp(a, b, t: float) -> np.ndarray:
    """最短弧球面线性插值

    反向输入通过取反解决; 点积大于 1 - 1e-9 时退化为单位化的线性插值
    """
    q0 = np.asarray(a, dtype=np.float64)
    q1 = np.asarray(b, dtype=np.float64)
    if t <= 0.0:
        return q0.copy()
    if t >= 1.0:
        return q1.copy()

    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-9:
        result = q0 + t * (q1 - q0)
        return result / np.linalg.norm(result)

    theta = math.acos(min(1.0, d))
    sin_theta = math.sin(theta)
    w0 = math.sin((1.0 - t) * theta) / sin_theta
    w1 = math.sin(t * theta) / sin_theta
    result = w0 * q0 + w1 * q1
    return result / np.linalg.norm(result)
