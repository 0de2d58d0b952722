#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
颜色与材质模型
颜色来源: 统一颜色、逐顶点颜色、内存纹理、文件纹理(首次着色时才读取)
材质: Principled BSDF、Glossy BSDF、金属/塑料预设、线框叠加
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .base import BindError, InvalidImageError, ValidationError, as_float_array, validate_numeric_range

logger = logging.getLogger(__name__)


def srgb_decode(values: np.ndarray) -> np.ndarray:
    """sRGB 编码值 [0,1] → 线性值"""
    c = np.asarray(values, dtype=np.float64)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def srgb_encode(values: np.ndarray) -> np.ndarray:
    """线性值 → sRGB 编码值 [0,1] (先截断到 [0,1])"""
    c = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def encode_srgb8(values: np.ndarray) -> np.ndarray:
    """线性值 → 8 位 sRGB: floor(encode(clip(x))·255 + 0.5)"""
    encoded = srgb_encode(np.nan_to_num(np.asarray(values, dtype=np.float64), nan=0.0))
    return np.floor(encoded * 255.0 + 0.5).astype(np.uint8)


def _rgba(color, name: str = 'color') -> np.ndarray:
    """RGB 或 RGBA → RGBA, 并检查取值范围"""
    c = np.asarray(color, dtype=np.float64).reshape(-1)
    if c.shape[0] == 3:
        c = np.append(c, 1.0)
    if c.shape != (4,):
        raise ValidationError(f"{name} 必须是 RGB 或 RGBA")
    if not np.all(np.isfinite(c)) or np.any(c < 0.0) or np.any(c > 1.0):
        raise ValidationError(f"{name} 通道值必须在 [0,1] 内: {c.tolist()}")
    return c


class Image:
    """线性颜色图像, 数据为 H×W×C (C = 3 或 4) 的 float64 数组, 第0行为图像顶部"""

    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None].repeat(3, axis=2)
        if pixels.ndim != 3 or pixels.shape[0] < 1 or pixels.shape[1] < 1 or pixels.shape[2] not in (3, 4):
            raise InvalidImageError(f"图像形状无效: {pixels.shape}")
        self.pixels = pixels

    @classmethod
    def from_srgb8(cls, data: np.ndarray) -> 'Image':
        """8位 sRGB 数据 → 线性图像"""
        data = np.asarray(data)
        rgb = srgb_decode(data[..., :3].astype(np.float64) / 255.0)
        if data.ndim == 3 and data.shape[2] == 4:
            alpha = data[..., 3:4].astype(np.float64) / 255.0
            rgb = np.concatenate([rgb, alpha], axis=2)
        return cls(rgb)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def rgba(self) -> np.ndarray:
        """返回 H×W×4 数据"""
        if self.pixels.shape[2] == 4:
            return self.pixels
        alpha = np.ones(self.pixels.shape[:2] + (1,))
        return np.concatenate([self.pixels, alpha], axis=2)

    def to_srgb8(self) -> np.ndarray:
        """线性 RGB 编码为 8 位 sRGB, alpha 线性量化"""
        rgba = self.pixels
        out = encode_srgb8(rgba[..., :3])
        if rgba.shape[2] == 4:
            alpha = np.floor(np.clip(rgba[..., 3:4], 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
            out = np.concatenate([out, alpha], axis=2)
        return out


@dataclass
class UVMap:
    """UV 映射: vertex_uv (N×2) 或 faces_uv (M×3×2)"""
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind == 'vertex_uv':
            self.data = as_float_array(self.data, (2,), 'vertex_uv')
        elif self.kind == 'faces_uv':
            self.data = as_float_array(self.data, (3, 2), 'faces_uv')
        else:
            raise ValidationError(f"未知的UV映射类型: {self.kind}")

    @classmethod
    def vertex_uv(cls, uv) -> 'UVMap':
        return cls('vertex_uv', uv)

    @classmethod
    def faces_uv(cls, uv) -> 'UVMap':
        return cls('faces_uv', uv)

    def corner_uv(self, faces: np.ndarray, face_index: np.ndarray) -> np.ndarray:
        """命中面的三个角的UV, 形状 K×3×2"""
        if self.kind == 'faces_uv':
            return self.data[face_index]
        return self.data[faces[face_index]]

    def check_binding(self, vertex_count: int, face_count: int) -> None:
        """绑定检查: UV 数量与几何体一致"""
        if self.kind == 'vertex_uv' and self.data.shape[0] != vertex_count:
            raise BindError(f"vertex_uv 数量 {self.data.shape[0]} 与顶点数 {vertex_count} 不一致")
        if self.kind == 'faces_uv' and self.data.shape[0] != face_count:
            raise BindError(f"faces_uv 数量 {self.data.shape[0]} 与面数 {face_count} 不一致")


class ColorSource:
    """颜色来源基类"""
    kind = None

    def check_binding(self, vertex_count: int, face_count: int) -> None:
        """绑定时检查数据长度"""
        pass


class UniformColors(ColorSource):
    """统一颜色(RGB 或 RGBA)"""
    kind = 'uniform'

    def __init__(self, color=(0.8, 0.8, 0.8)):
        self.color = _rgba(color)

    def __repr__(self):
        return f"<UniformColors({self.color.tolist()})>"


class VertexColors(ColorSource):
    """逐顶点颜色, 面内按重心坐标插值"""
    kind = 'per_vertex'

    def __init__(self, colors):
        colors = np.asarray(colors, dtype=np.float64)
        if colors.ndim != 2 or colors.shape[1] not in (3, 4):
            raise ValidationError(f"逐顶点颜色形状应为 N×3 或 N×4, 实际为 {colors.shape}")
        if not np.all(np.isfinite(colors)) or np.any(colors < 0.0) or np.any(colors > 1.0):
            raise ValidationError("逐顶点颜色通道值必须在 [0,1] 内")
        if colors.shape[1] == 3:
            colors = np.concatenate([colors, np.ones((colors.shape[0], 1))], axis=1)
        self.colors = colors

    def check_binding(self, vertex_count: int, face_count: int) -> None:
        if self.colors.shape[0] != vertex_count:
            raise BindError(f"逐顶点颜色数量 {self.colors.shape[0]} 与顶点数 {vertex_count} 不一致")


class TextureColors(ColorSource):
    """内存纹理 + UV 映射"""
    kind = 'texture'

    def __init__(self, image: Image, uv: UVMap):
        if not isinstance(image, Image):
            image = Image(image)
        self._image = image
        self.uv = uv

    @property
    def image(self) -> Image:
        return self._image

    def check_binding(self, vertex_count: int, face_count: int) -> None:
        self.uv.check_binding(vertex_count, face_count)


class FileTextureColors(TextureColors):
    """文件纹理: 首次着色查询时才从磁盘读取, 之后并发只读"""
    kind = 'file_texture'

    def __init__(self, path: str, uv: UVMap):
        self.path = str(path)
        self.uv = uv
        self._image = None
        self._lock = threading.Lock()

    @property
    def is_loaded(self) -> bool:
        return self._image is not None

    @property
    def image(self) -> Image:
        if self._image is None:
            with self._lock:
                if self._image is None:
                    from services.image_io_service import image_io_service
                    logger.info(f"首次访问, 读取纹理文件: {self.path}")
                    self._image = image_io_service.read_texture(self.path)
        return self._image


class Material:
    """材质基类"""
    kind = None
    alpha = 1.0
    emission_color = np.zeros(3)
    emission_strength = 0.0

    @property
    def emission(self) -> np.ndarray:
        return np.asarray(self.emission_color, dtype=np.float64) * float(self.emission_strength)


class PrincipledBSDFMaterial(Material):
    """Principled BSDF 简化参数集

    base_modulation 为乘到颜色来源上的 RGB 系数
    """
    kind = 'principled'

    def __init__(self, metallic: float = 0.0, roughness: float = 0.5, specular: float = 0.5,
                 base_modulation=(1.0, 1.0, 1.0), emission_color=(0.0, 0.0, 0.0),
                 emission_strength: float = 0.0, alpha: float = 1.0):
        validate_numeric_range(
            {'metallic': metallic, 'roughness': roughness, 'alpha': alpha},
            {'metallic': (0.0, 1.0), 'roughness': (0.0, 1.0), 'alpha': (0.0, 1.0)})
        validate_numeric_range(
            {'specular': specular, 'emission_strength': emission_strength},
            {'specular': (0.0, np.inf), 'emission_strength': (0.0, np.inf)})
        self.metallic = float(metallic)
        self.roughness = float(roughness)
        self.specular = float(specular)
        self.base_modulation = _rgba(list(base_modulation)[:3], 'base_modulation')[:3]
        self.emission_color = _rgba(list(emission_color)[:3], 'emission_color')[:3]
        self.emission_strength = float(emission_strength)
        self.alpha = float(alpha)

    def __repr__(self):
        return (f"<PrincipledBSDFMaterial(metallic={self.metallic}, roughness={self.roughness}, "
                f"specular={self.specular})>")


class GlossyBSDFMaterial(Material):
    """纯 GGX 光泽材质"""
    kind = 'glossy'

    def __init__(self, roughness: float = 0.2):
        validate_numeric_range({'roughness': roughness}, {'roughness': (0.0, 1.0)})
        self.roughness = float(roughness)
        self.base_modulation = np.ones(3)

    def __repr__(self):
        return f"<GlossyBSDFMaterial(roughness={self.roughness})>"


class WireframeOverlay(Material):
    """在任意材质上叠加线框

    命中点到所在三角形最近边的世界空间距离 ≤ thickness/2 时使用 wire_color
    """
    kind = 'wireframe_overlay'

    def __init__(self, base: Material, thickness: float = 0.01, wire_color=(0.0, 0.0, 0.0)):
        if isinstance(base, WireframeOverlay):
            raise ValidationError("线框叠加的基础材质不能再是线框叠加")
        if not isinstance(base, Material):
            raise ValidationError("线框叠加需要基础材质")
        if not np.isfinite(thickness) or thickness <= 0:
            raise ValidationError(f"线框粗细必须为正数: {thickness}")
        self.base = base
        self.thickness = float(thickness)
        self.wire_color = _rgba(list(wire_color)[:3], 'wire_color')[:3]
        # 线框本身使用漫反射着色
        self.wire_material = PrincipledBSDFMaterial(metallic=0.0, roughness=1.0, specular=0.0)

    @property
    def alpha(self):
        return self.base.alpha

    @property
    def emission(self) -> np.ndarray:
        return self.base.emission

    def __repr__(self):
        return f"<WireframeOverlay(base={self.base!r}, thickness={self.thickness})>"


# 预设参数(可通过关键字覆盖)
METAL_PRESET = {'metallic': 1.0, 'roughness': 0.25}
PLASTIC_PRESET = {'metallic': 0.0, 'roughness': 0.4, 'specular': 0.5}


def MetalMaterial(**overrides) -> PrincipledBSDFMaterial:
    """金属材质预设"""
    return PrincipledBSDFMaterial(**{**METAL_PRESET, **overrides})


def PlasticMaterial(**overrides) -> PrincipledBSDFMaterial:
    """塑料材质预设"""
    return PrincipledBSDFMaterial(**{**PLASTIC_PRESET, **overrides})


def overlay_wireframe(material: Material, thickness: float = 0.01, wire_color=(0.0, 0.0, 0.0)) -> WireframeOverlay:
    """给任意材质叠加线框"""
    return WireframeOverlay(material, thickness, wire_color)


PRESETS = {'metal': MetalMaterial, 'plastic': PlasticMaterial}


@dataclass
class Appearance:
    """外观: (颜色来源, 材质)"""
    colors: ColorSource = field(default_factory=UniformColors)
    material: Material = field(default_factory=PrincipledBSDFMaterial)

    def check_binding(self, vertex_count: int, face_count: int) -> None:
        self.colors.check_binding(vertex_count, face_count)
