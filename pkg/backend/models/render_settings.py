#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
渲染设置与渲染输出
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config import Config
from .base import ValidationError

logger = logging.getLogger(__name__)

ALL_PASSES = ('color', 'depth', 'albedo')


@dataclass
class RenderSettings:
    """渲染设置

    resolution 为空时使用相机分辨率
    """
    resolution: Optional[Tuple[int, int]] = None
    samples_per_pixel: int = Config.DEFAULT_SAMPLES
    max_bounces: int = Config.DEFAULT_MAX_BOUNCES
    seed: int = Config.DEFAULT_SEED
    passes: Tuple[str, ...] = ALL_PASSES

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """检查设置取值"""
        if self.resolution is not None:
            w, h = (int(r) for r in self.resolution)
            if w < 1 or h < 1:
                raise ValidationError(f"分辨率必须 ≥ 1: {self.resolution}")
            self.resolution = (w, h)
        if int(self.samples_per_pixel) < 1:
            raise ValidationError(f"samples_per_pixel 必须 ≥ 1: {self.samples_per_pixel}")
        if int(self.max_bounces) < 1:
            raise ValidationError(f"max_bounces 必须 ≥ 1: {self.max_bounces}")
        self.samples_per_pixel = int(self.samples_per_pixel)
        self.max_bounces = int(self.max_bounces)
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        passes = tuple(dict.fromkeys(self.passes))
        unknown = [p for p in passes if p not in ALL_PASSES]
        if unknown or not passes:
            raise ValidationError(f"渲染通道必须是 {ALL_PASSES} 的非空子集: {self.passes}")
        self.passes = passes

    def override(self, **kwargs) -> 'RenderSettings':
        """返回覆盖了非空字段的新设置"""
        values = {
            'resolution': self.resolution,
            'samples_per_pixel': self.samples_per_pixel,
            'max_bounces': self.max_bounces,
            'seed': self.seed,
            'passes': self.passes,
        }
        values.update({k: v for k, v in kwargs.items() if v is not None})
        return RenderSettings(**values)

    def to_dict(self) -> Dict[str, Any]:
        result = {
            'samples_per_pixel': self.samples_per_pixel,
            'max_bounces': self.max_bounces,
            'seed': self.seed,
            'passes': list(self.passes),
        }
        if self.resolution is not None:
            result['resolution'] = list(self.resolution)
        return result


@dataclass
class RenderOutput:
    """渲染结果

    color: H×W×4 uint8 (sRGB, 色调映射后), depth: H×W float (米, 0 表示未命中),
    albedo: H×W×3 uint8 (sRGB), alpha: H×W float [0,1]
    """
    width: int
    height: int
    color: Optional[np.ndarray] = None
    depth: Optional[np.ndarray] = None
    albedo: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    linear: Optional[np.ndarray] = None
    stats: Dict[str, Any] = field(default_factory=dict)
