#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
图像文件读写服务
PNG (8 位 RGB/RGBA, sRGB) 通过 Pillow 读写; 深度通道写为 PFM 灰度浮点图
"""

import logging
import os
from typing import Dict, Union

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from models.appearance import Image
from models.base import InvalidImageError, TextureIOError

logger = logging.getLogger(__name__)

# PFM 尺寸上限
MAX_PFM_DIMENSION = 1 << 16


class ImageIOService:
    """图像文件读写服务"""

    # ---------- PNG ----------

    def read_png(self, path: str) -> np.ndarray:
        """读取 PNG, 返回 H×W×3 或 H×W×4 的 uint8 数组"""
        try:
            with PILImage.open(path) as img:
                mode = 'RGBA' if img.mode in ('RGBA', 'LA', 'PA') or 'transparency' in img.info else 'RGB'
                data = np.asarray(img.convert(mode), dtype=np.uint8).copy()
        except FileNotFoundError as e:
            raise TextureIOError(f"图像文件不存在: {path}") from e
        except (UnidentifiedImageError, OSError, PILImage.DecompressionBombError) as e:
            raise TextureIOError(f"无法读取图像文件 {path}: {e}") from e
        logger.debug(f"读取 PNG: {path} ({data.shape[1]}×{data.shape[0]})")
        return data

    def write_png(self, image: Union[Image, np.ndarray], path: str) -> None:
        """写出 8 位 PNG; Image 为线性颜色, 写出前编码为 sRGB"""
        data = image.to_srgb8() if isinstance(image, Image) else np.asarray(image)
        if data.dtype != np.uint8:
            raise InvalidImageError(f"PNG 数据必须为 uint8, 实际为 {data.dtype}")
        if data.ndim != 3 or data.shape[2] not in (3, 4) or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidImageError(f"PNG 数据形状无效: {data.shape}")
        try:
            _ensure_parent(path)
            PILImage.fromarray(np.ascontiguousarray(data)).save(path, format='PNG')
        except OSError as e:
            raise TextureIOError(f"写入 PNG 失败 {path}: {e}") from e
        logger.debug(f"写出 PNG: {path}")

    def read_texture(self, path: str) -> Image:
        """读取纹理文件为线性图像"""
        return Image.from_srgb8(self.read_png(path))

    # ---------- PFM ----------

    def write_pfm(self, depth: np.ndarray, path: str) -> None:
        """写出 "Pf" 灰度 PFM, 小端序 (比例行 -1.0), 行从下到上"""
        depth = np.asarray(depth, dtype=np.float64)
        if depth.ndim != 2 or depth.shape[0] < 1 or depth.shape[1] < 1:
            raise InvalidImageError(f"深度图形状无效: {depth.shape}")
        height, width = depth.shape
        if width > MAX_PFM_DIMENSION or height > MAX_PFM_DIMENSION:
            raise InvalidImageError(f"深度图尺寸超出上限: {width}×{height}")
        payload = np.ascontiguousarray(depth[::-1].astype('<f4'))
        try:
            _ensure_parent(path)
            with open(path, 'wb') as f:
                f.write(f"Pf\n{width} {height}\n-1.0\n".encode('ascii'))
                f.write(payload.tobytes())
        except OSError as e:
            raise TextureIOError(f"写入 PFM 失败 {path}: {e}") from e
        logger.debug(f"写出 PFM: {path} ({width}×{height})")

    def read_pfm(self, path: str) -> np.ndarray:
        """读取 PFM, 返回 H×W (灰度) 或 H×W×3 的 float32 数组, 第 0 行为图像顶部"""
        try:
            with open(path, 'rb') as f:
                content = f.read()
        except OSError as e:
            raise TextureIOError(f"无法读取 PFM 文件 {path}: {e}") from e

        header = []
        offset = 0
        while len(header) < 3:
            end = content.find(b'\n', offset)
            if end < 0:
                raise TextureIOError(f"PFM 文件头不完整: {path}")
            line = content[offset:end].strip()
            offset = end + 1
            if line:
                header.append(line)
        try:
            kind = header[0].decode('ascii')
            width, height = (int(v) for v in header[1].split())
            scale = float(header[2])
        except (UnicodeDecodeError, ValueError) as e:
            raise TextureIOError(f"PFM 文件头格式错误: {path}") from e
        if kind not in ('Pf', 'PF'):
            raise TextureIOError(f"不支持的 PFM 类型: {kind}")
        if not (0 < width <= MAX_PFM_DIMENSION and 0 < height <= MAX_PFM_DIMENSION):
            raise TextureIOError(f"PFM 尺寸无效: {width}×{height}")
        channels = 1 if kind == 'Pf' else 3
        dtype = '<f4' if scale < 0 else '>f4'
        count = width * height * channels
        if len(content) - offset < count * 4:
            raise TextureIOError(f"PFM 数据被截断: {path}")
        data = np.frombuffer(content, dtype=dtype, count=count, offset=offset).astype(np.float32)
        shape = (height, width) if channels == 1 else (height, width, 3)
        return data.reshape(shape)[::-1].copy()

    # ---------- 渲染输出 ----------

    def write_render_outputs(self, output, prefix: str) -> Dict[str, str]:
        """按通道写出渲染结果: PREFIX.png, PREFIX.depth.pfm, PREFIX.albedo.png; 返回 通道 → 路径"""
        written = {}
        if output.color is not None:
            written['color'] = f"{prefix}.png"
            self.write_png(output.color, written['color'])
        if output.depth is not None:
            written['depth'] = f"{prefix}.depth.pfm"
            self.write_pfm(output.depth, written['depth'])
        if output.albedo is not None:
            written['albedo'] = f"{prefix}.albedo.png"
            self.write_png(output.albedo, written['albedo'])
        logger.info(f"渲染输出已写出: {', '.join(written.values())}")
        return written


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


# 创建全局实例
image_io_service = ImageIOService()
