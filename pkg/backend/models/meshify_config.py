#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网格化流程配置与结果模型
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from config import Config
from .appearance import Image, TextureColors, UVMap
from .base import ValidationError
from .geometry import TriMesh

logger = logging.getLogger(__name__)


@dataclass
class MeshifyConfig:
    """网格化参数

    bpa_radii 为空时按点间距自动估计
    """
    bpa_radii: Optional[List[float]] = None
    target_faces: int = Config.MESHIFY_TARGET_FACES
    texture_resolution: int = Config.MESHIFY_TEXTURE_RESOLUTION
    gap_px: int = Config.MESHIFY_GAP_PX
    bake_k: int = Config.MESHIFY_BAKE_K
    normal_k: int = Config.NORMAL_ESTIMATION_K
    dilation_steps: int = Config.MESHIFY_DILATION_STEPS

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """验证配置数据"""
        if self.bpa_radii is not None:
            radii = [float(r) for r in self.bpa_radii]
            if not radii or any(not np.isfinite(r) or r <= 0 for r in radii):
                raise ValidationError(f"球半径必须为正数: {self.bpa_radii}")
            if any(b <= a for a, b in zip(radii, radii[1:])):
                raise ValidationError(f"球半径必须严格递增: {self.bpa_radii}")
            self.bpa_radii = radii
        if int(self.target_faces) <= 3:
            raise ValidationError(f"target_faces 必须大于3: {self.target_faces}")
        if int(self.texture_resolution) < 1:
            raise ValidationError(f"texture_resolution 必须为正整数: {self.texture_resolution}")
        if int(self.gap_px) < 1:
            raise ValidationError(f"gap_px 必须 ≥ 1: {self.gap_px}")
        if int(self.bake_k) < 1:
            raise ValidationError(f"bake_k 必须 ≥ 1: {self.bake_k}")
        self.target_faces = int(self.target_faces)
        self.texture_resolution = int(self.texture_resolution)
        self.gap_px = int(self.gap_px)
        self.bake_k = int(self.bake_k)


@dataclass
class TexturedMesh:
    """带纹理的网格: faces_uv 映射 + R×R 纹理"""
    mesh: TriMesh
    uv: np.ndarray
    texture: Image
    stats: Dict[str, Any] = field(default_factory=dict)

    def to_renderable(self) -> TriMesh:
        """绑定 TextureColors 后可直接加入场景渲染"""
        self.mesh.set_appearance(colors=TextureColors(self.texture, UVMap.faces_uv(self.uv)))
        return self.mesh
