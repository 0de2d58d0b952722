#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基础模型与错误定义
提供通用的参数校验方法和统一的异常层次
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


class SceneRenderError(Exception):
    """所有业务错误的基类

    code 决定命令行退出码: scene → 2, io → 3, meshify → 4
    """

    code = 'scene'

    def __init__(self, message: str = '', **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """转换为API响应格式"""
        return {
            'error': self.__class__.__name__,
            'code': self.code,
            'message': self.message,
            'details': {k: v for k, v in self.details.items() if _jsonable(v)}
        }


class ValidationError(SceneRenderError):
    """数据验证错误"""
    pass


class InvalidRotationError(ValidationError):
    """旋转参数无效"""
    pass


class DegenerateLookAtError(ValidationError):
    """look_at 目标点与相机位置重合"""
    pass


class InvalidPrimitiveError(ValidationError):
    """基本体参数无效"""
    pass


class InvalidImageError(ValidationError):
    """图像为空或格式错误"""
    pass


class TagCollisionError(SceneRenderError):
    """标签重复"""
    pass


class NotFoundError(SceneRenderError):
    """对象不存在"""
    pass


class MissingCameraError(SceneRenderError):
    """场景未设置相机"""
    pass


class BindError(SceneRenderError):
    """颜色/数据长度与几何体不匹配"""
    pass


class BoundsError(SceneRenderError):
    """像素坐标越界"""
    pass


class DuplicateKeypointError(SceneRenderError):
    """关键帧时间重复"""
    pass


class EmptyTrajectoryError(SceneRenderError):
    """轨迹没有关键帧"""
    pass


class InsufficientPointsError(SceneRenderError):
    """点数不足"""
    pass


class MeshifyError(SceneRenderError):
    """网格化流程错误基类"""
    code = 'meshify'


class EmptyReconstructionError(MeshifyError):
    """球旋转重建没有找到任何种子三角形"""
    pass


class InvalidTargetError(MeshifyError):
    """简化目标面数无效"""
    pass


class AtlasCapacityError(MeshifyError):
    """纹理图集容量不足"""

    def __init__(self, message: str = '', minimal_resolution: Optional[int] = None, **details):
        super().__init__(message, minimal_resolution=minimal_resolution, **details)
        self.minimal_resolution = minimal_resolution


class EmptyBakeError(MeshifyError):
    """没有可用于烘焙的投影点"""
    pass


class MeshifyStageError(MeshifyError):
    """带阶段标签的网格化错误"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}", stage=stage)
        self.stage = stage
        self.cause = cause


class SceneFormatError(SceneRenderError):
    """场景文档解析或结构错误

    path 为 JSON 指针风格的路径, line/column 为解析错误位置
    """

    def __init__(self, message: str = '', path: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        location = ''
        if path is not None:
            location = f" (路径 {path})"
        elif line is not None:
            location = f" (行 {line}, 列 {column})"
        super().__init__(f"{message}{location}", path=path, line=line, column=column)
        self.path = path
        self.line = line
        self.column = column


class FileIOError(SceneRenderError):
    """文件读写错误基类"""
    code = 'io'


class MeshIOError(FileIOError):
    """PLY/OBJ 读写错误"""
    pass


class TextureIOError(FileIOError):
    """纹理/图像文件读写错误"""
    pass


def _jsonable(value: Any) -> bool:
    return isinstance(value, (str, int, float, bool, type(None)))


def validate_numeric_range(data: Dict[str, Any], field_ranges: Dict[str, tuple],
                           error_cls=ValidationError) -> None:
    """验证数值范围(闭区间)"""
    for field, (min_val, max_val) in field_ranges.items():
        if field in data and data[field] is not None:
            try:
                value = float(data[field])
            except (ValueError, TypeError):
                raise error_cls(f"字段 {field} 必须是数值类型")
            if not np.isfinite(value) or value < min_val or value > max_val:
                raise error_cls(f"字段 {field} 值超出范围 ({min_val} - {max_val}): {value}")


def validate_positive(data: Dict[str, Any], fields: List[str], error_cls=ValidationError) -> None:
    """验证字段为有限正数"""
    for field in fields:
        value = data.get(field)
        if value is None:
            continue
        try:
            value = float(value)
        except (ValueError, TypeError):
            raise error_cls(f"字段 {field} 必须是数值类型")
        if not np.isfinite(value) or value <= 0:
            raise error_cls(f"字段 {field} 必须为正数: {value}")


def as_float_array(value, shape_tail, name: str, error_cls=ValidationError) -> np.ndarray:
    """转换为 float64 数组并检查尾部形状

    shape_tail 例如 (3,) 表示 N×3
    """
    try:
        array = np.asarray(value, dtype=np.float64)
    except (ValueError, TypeError):
        raise error_cls(f"{name} 必须是数值数组")
    if array.ndim != len(shape_tail) + 1 or tuple(array.shape[1:]) != tuple(shape_tail):
        raise error_cls(f"{name} 形状应为 N×{'×'.join(str(s) for s in shape_tail)}, 实际为 {array.shape}")
    if not np.all(np.isfinite(array)):
        raise error_cls(f"{name} 含有非有限数值")
    return array
