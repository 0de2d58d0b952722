#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
着色服务
颜色来源求值(统一/逐顶点/纹理)、双线性纹理采样、线框判定、BSDF 求值与采样

BSDF 在世界坐标下按批计算: 法线、出射方向 wo、入射方向 wi 均为 K×3 单位向量
"""

import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.appearance import (ColorSource, GlossyBSDFMaterial, Image, Material, PrincipledBSDFMaterial,
                               TextureColors, UniformColors, VertexColors, WireframeOverlay)
from models.base import InvalidImageError, ValidationError
from services import sampler

logger = logging.getLogger(__name__)

MIN_ALPHA = 1e-4
# 电介质镜面反射率: F0 = 0.08 · specular
DIELECTRIC_F0_SCALE = 0.08


class MaterialTable:
    """渲染期材质表: 把材质对象展开为按行索引的参数数组"""

    def __init__(self):
        self._rows: List[Dict[str, Any]] = []
        self._index: Dict[int, int] = {}
        self.arrays: Dict[str, np.ndarray] = {}

    def __len__(self):
        return len(self._rows)

    def add(self, material: Material) -> int:
        key = id(material)
        if key in self._index:
            return self._index[key]
        if isinstance(material, WireframeOverlay):
            wire_row = self.add(material.wire_material)
            row = dict(self._params(material.base))
            row.update(wire_thickness=material.thickness, wire_color=material.wire_color, wire_row=wire_row)
        else:
            row = self._params(material)
        self._index[key] = len(self._rows)
        self._rows.append(row)
        self.arrays = {}
        return self._index[key]

    @staticmethod
    def _params(material: Material) -> Dict[str, Any]:
        if isinstance(material, GlossyBSDFMaterial):
            return {'glossy': True, 'metallic': 0.0, 'roughness': material.roughness, 'specular': 0.0,
                    'base_modulation': material.base_modulation, 'emission': np.zeros(3), 'alpha': 1.0,
                    'wire_thickness': 0.0, 'wire_color': np.zeros(3), 'wire_row': -1}
        if isinstance(material, PrincipledBSDFMaterial):
            return {'glossy': False, 'metallic': material.metallic, 'roughness': material.roughness,
                    'specular': material.specular, 'base_modulation': material.base_modulation,
                    'emission': material.emission, 'alpha': material.alpha,
                    'wire_thickness': 0.0, 'wire_color': np.zeros(3), 'wire_row': -1}
        raise ValidationError(f"不支持的材质类型: {type(material).__name__}")

    def freeze(self) -> Dict[str, np.ndarray]:
        """生成参数数组, 每个键一行一个材质"""
        if not self.arrays and self._rows:
            self.arrays = {key: np.array([row[key] for row in self._rows]) for key in self._rows[0]}
        return self.arrays

    def gather(self, rows: np.ndarray) -> Dict[str, np.ndarray]:
        """按行号取参数"""
        arrays = self.freeze()
        return {key: value[rows] for key, value in arrays.items()}


def material_params(material: Material, count: int = 1) -> Dict[str, np.ndarray]:
    """单个材质的参数数组(重复 count 行)"""
    table = MaterialTable()
    row = table.add(material)
    return table.gather(np.full(count, row, dtype=np.int64))


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def _normalize(v: np.ndarray) -> np.ndarray:
    length = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(length > 0.0, length, 1.0)


def _ggx_d(cos_h: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    a2 = alpha * alpha
    c2 = cos_h * cos_h
    denom = c2 * (a2 - 1.0) + 1.0
    return np.where(cos_h > 0.0, a2 / (math.pi * denom * denom), 0.0)


def _smith_g1(cos_t: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    a2 = alpha * alpha
    c = np.maximum(cos_t, 0.0)
    return 2.0 * c / np.maximum(c + np.sqrt(a2 + (1.0 - a2) * c * c), 1e-300)


def _schlick_weight(cos_d: np.ndarray) -> np.ndarray:
    return np.power(np.clip(1.0 - cos_d, 0.0, 1.0), 5)


def _dielectric_f0(specular: np.ndarray) -> np.ndarray:
    return np.minimum(DIELECTRIC_F0_SCALE * specular, 1.0)


def _dielectric_fresnel(f0: np.ndarray, specular: np.ndarray, cos_t: np.ndarray) -> np.ndarray:
    """Schlick 菲涅尔, 掠射端按 min(1, specular) 缩放"""
    return f0 + (1.0 - f0) * _schlick_weight(cos_t) * np.minimum(1.0, specular)


class ShadingService:
    """着色服务"""

    # ---------- 颜色来源 ----------

    def sample_texture(self, image: Image, uv) -> np.ndarray:
        """双线性纹理采样, UV 超出 [0,1] 时重复平铺, v = 0 为图像底行"""
        if image is None or image.pixels.size == 0:
            raise InvalidImageError("纹理图像为空")
        uv = np.asarray(uv, dtype=np.float64)
        single = uv.ndim == 1
        uv = uv.reshape(-1, 2)
        rgba = image.rgba()
        h, w = rgba.shape[:2]
        x = uv[:, 0] * w - 0.5
        y = (1.0 - uv[:, 1]) * h - 0.5
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        ix0 = np.mod(x0.astype(np.int64), w)
        iy0 = np.mod(y0.astype(np.int64), h)
        ix1 = np.mod(ix0 + 1, w)
        iy1 = np.mod(iy0 + 1, h)
        top = rgba[iy0, ix0] * (1.0 - fx) + rgba[iy0, ix1] * fx
        bottom = rgba[iy1, ix0] * (1.0 - fx) + rgba[iy1, ix1] * fx
        result = top * (1.0 - fy) + bottom * fy
        return result[0] if single else result

    def shade_color(self, mesh, face_index, bary, source: Optional[ColorSource] = None) -> np.ndarray:
        """命中点的颜色来源值 (K×4 RGBA)

        mesh: TriMesh; face_index: K 个面序号; bary: K×3 重心坐标
        """
        source = source or mesh.appearance.colors
        face_index = np.asarray(face_index, dtype=np.int64).reshape(-1)
        bary = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
        source.check_binding(mesh.vertex_count, mesh.face_count)

        if isinstance(source, UniformColors):
            return np.broadcast_to(source.color, (face_index.shape[0], 4)).copy()
        if isinstance(source, VertexColors):
            corner = source.colors[mesh.faces[face_index]]
            return np.einsum('kc,kcd->kd', bary, corner)
        if isinstance(source, TextureColors):
            corner_uv = source.uv.corner_uv(mesh.faces, face_index)
            uv = np.einsum('kc,kcd->kd', bary, corner_uv)
            return self.sample_texture(source.image, uv)
        raise ValidationError(f"不支持的颜色来源: {type(source).__name__}")

    def wireframe_factor(self, mesh, face_index, bary, thickness: float) -> np.ndarray:
        """命中点到所在三角形最近边的距离 ≤ thickness/2 时为 1, 否则为 0

        距离 = 重心坐标 b_i × 对边上的高, 刚体位姿不改变距离, 因此在局部坐标下计算
        """
        face_index = np.asarray(face_index, dtype=np.int64).reshape(-1)
        bary = np.asarray(bary, dtype=np.float64).reshape(-1, 3)
        v = mesh.vertices[mesh.faces[face_index]]
        return self.wireframe_factor_triangles(v, bary, thickness)

    @staticmethod
    def wireframe_factor_triangles(v: np.ndarray, bary: np.ndarray, thickness) -> np.ndarray:
        double_area = np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
        # 顶点 i 的对边
        opposite = np.stack([np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
                             np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
                             np.linalg.norm(v[:, 1] - v[:, 0], axis=1)], axis=1)
        heights = double_area[:, None] / np.maximum(opposite, 1e-300)
        distance = np.min(np.maximum(bary, 0.0) * heights, axis=1)
        return (distance <= 0.5 * np.asarray(thickness, dtype=np.float64)).astype(np.float64)

    # ---------- BSDF ----------

    def eval_params(self, params: Dict[str, np.ndarray], normal, wo, wi, base_color) -> np.ndarray:
        """批量 BSDF 求值, 返回 K×3 反射率 (1/sr)"""
        cos_o = _dot(normal, wo)
        cos_i = _dot(normal, wi)
        valid = (cos_o > 0.0) & (cos_i > 0.0)
        h = _normalize(wo + wi)
        cos_h = _dot(normal, h)
        cos_d = np.clip(_dot(wo, h), 0.0, 1.0)
        alpha = np.maximum(params['roughness'] ** 2, MIN_ALPHA)
        d = _ggx_d(cos_h, alpha)
        g = _smith_g1(cos_o, alpha) * _smith_g1(cos_i, alpha)
        denom = 4.0 * np.where(valid, cos_o * cos_i, 1.0)
        microfacet = (d * g / denom)[:, None]

        base = np.asarray(base_color, dtype=np.float64)[..., :3]
        metallic = params['metallic'][:, None]
        specular = params['specular'][:, None]
        weight = _schlick_weight(cos_d)[:, None]
        f0s = _dielectric_f0(specular)
        f_conductor = base + (1.0 - base) * weight
        f_dielectric = _dielectric_fresnel(f0s, specular, cos_d[:, None])
        # 漫反射按两侧透射率缩放, 保持互易且总反照率不超过 1
        transmit = ((1.0 - _dielectric_fresnel(f0s, specular, np.clip(cos_o, 0.0, 1.0)[:, None]))
                    * (1.0 - _dielectric_fresnel(f0s, specular, np.clip(cos_i, 0.0, 1.0)[:, None])))
        principled = ((1.0 - metallic) * transmit * base / math.pi
                      + metallic * f_conductor * microfacet
                      + (1.0 - metallic) * f_dielectric * microfacet)
        glossy = base * microfacet
        f = np.where(params['glossy'][:, None], glossy, principled)
        return np.where(valid[:, None], f, 0.0)

    def eval_bsdf(self, material: Material, normal, wo, wi, base_color) -> np.ndarray:
        """单一材质的 BSDF 求值; 输入可为单个向量或 K×3 批量"""
        single = all(np.ndim(x) == 1 for x in (normal, wo, wi))
        normal, wo, wi = (np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in (normal, wo, wi))
        count = max(normal.shape[0], wo.shape[0], wi.shape[0])
        normal, wo, wi = (np.broadcast_to(x, (count, 3)) for x in (normal, wo, wi))
        base = np.broadcast_to(np.asarray(base_color, dtype=np.float64)[..., :3], (count, 3))
        if isinstance(material, WireframeOverlay):
            material = material.base
        result = self.eval_params(material_params(material, count), normal, wo, wi, base)
        return result[0] if single else result

    def specular_probability(self, params: Dict[str, np.ndarray], base_color) -> np.ndarray:
        """镜面波瓣被选中的概率"""
        base = np.asarray(base_color, dtype=np.float64)[..., :3]
        lum = np.mean(base, axis=-1)
        metallic = params['metallic']
        specular = params['specular']
        f0s = _dielectric_f0(specular)
        w_diffuse = (1.0 - metallic) * (1.0 - f0s) * lum
        w_specular = metallic * lum + (1.0 - metallic) * np.minimum(1.0, specular) * f0s
        total = w_diffuse + w_specular
        mixed = np.clip(w_specular / np.where(total > 0.0, total, 1.0), 0.1, 0.9)
        mixed = np.where(total > 0.0, mixed, 0.5)
        has_specular = (metallic > 0.0) | (specular > 0.0)
        p = np.where(has_specular, mixed, 0.0)
        p = np.where(metallic >= 1.0, 1.0, p)
        return np.where(params['glossy'], 1.0, p)

    def pdf_params(self, params, normal, wo, wi, base_color) -> np.ndarray:
        """混合波瓣的立体角 pdf"""
        p_spec = self.specular_probability(params, base_color)
        cos_i = _dot(normal, wi)
        h = _normalize(wo + wi)
        cos_h = _dot(normal, h)
        cos_d = np.abs(_dot(wo, h))
        alpha = np.maximum(params['roughness'] ** 2, MIN_ALPHA)
        pdf_spec = _ggx_d(cos_h, alpha) * np.maximum(cos_h, 0.0) / np.maximum(4.0 * cos_d, 1e-300)
        pdf_diffuse = np.maximum(cos_i, 0.0) / math.pi
        return (1.0 - p_spec) * pdf_diffuse + p_spec * pdf_spec

    def sample_params(self, params, normal, wo, base_color, u_lobe, u_dir) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """按混合波瓣采样入射方向, 返回 (wi, f, pdf)"""
        p_spec = self.specular_probability(params, base_color)
        choose_spec = u_lobe < p_spec

        wi_diffuse = sampler.to_world(sampler.cosine_hemisphere(u_dir), normal)

        alpha = np.maximum(params['roughness'] ** 2, MIN_ALPHA)
        u0 = np.minimum(u_dir[:, 0], 1.0 - 1e-16)
        tan2 = alpha * alpha * u0 / (1.0 - u0)
        cos_t = 1.0 / np.sqrt(1.0 + tan2)
        sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
        phi = 2.0 * math.pi * u_dir[:, 1]
        h_local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)
        h = sampler.to_world(h_local, normal)
        wi_spec = 2.0 * _dot(wo, h)[:, None] * h - wo

        wi = _normalize(np.where(choose_spec[:, None], wi_spec, wi_diffuse))
        f = self.eval_params(params, normal, wo, wi, base_color)
        pdf = self.pdf_params(params, normal, wo, wi, base_color)
        return wi, f, pdf

    def sample_bsdf(self, material: Material, normal, wo, base_color, u_lobe, u_dir):
        """单一材质的 BSDF 采样(批量)"""
        normal = np.atleast_2d(np.asarray(normal, dtype=np.float64))
        wo = np.atleast_2d(np.asarray(wo, dtype=np.float64))
        u_lobe = np.atleast_1d(np.asarray(u_lobe, dtype=np.float64))
        u_dir = np.atleast_2d(np.asarray(u_dir, dtype=np.float64))
        count = max(normal.shape[0], wo.shape[0], u_lobe.shape[0], u_dir.shape[0])
        normal, wo = (np.broadcast_to(x, (count, 3)) for x in (normal, wo))
        base = np.broadcast_to(np.asarray(base_color, dtype=np.float64)[..., :3], (count, 3))
        if isinstance(material, WireframeOverlay):
            material = material.base
        params = material_params(material, count)
        return self.sample_params(params, normal, wo, base, np.broadcast_to(u_lobe, (count,)),
                                  np.broadcast_to(u_dir, (count, 2)))


shading_service = ShadingService()
