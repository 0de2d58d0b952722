#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相机轨迹
关键帧管理与逐帧位姿细化: 位置使用向心 Catmull-Rom 样条, 旋转在相邻关键帧间做最短弧 slerp

两端线段使用外推的虚拟控制点 (P[-1] = 2·P0 - P1), 关键帧之间的角速度为分段常数
"""

import bisect
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .base import DuplicateKeypointError, EmptyTrajectoryError, ValidationError
from .rotation import slerp, to_quaternion, vec3

logger = logging.getLogger(__name__)

# 节点间隔下限, 避免重合关键帧导致除零
_MIN_KNOT_INTERVAL = 1e-12


@dataclass
class Keypoint:
    """关键帧: 时间(秒或帧号, 单位一致即可)、位置、旋转"""
    time: float
    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        self.time = float(self.time)
        if not math.isfinite(self.time):
            raise ValidationError(f"关键帧时间必须为有限数: {self.time}")
        self.position = vec3(self.position)
        self.rotation = to_quaternion(self.rotation)


def _centripetal_catmull_rom(p0, p1, p2, p3, t: float) -> np.ndarray:
    """Barry-Goldman 金字塔求值, t ∈ [0,1] 为 p1→p2 段内参数"""
    if np.array_equal(p1, p2):
        return p1.copy()
    t0 = 0.0
    t1 = t0 + max(math.sqrt(float(np.linalg.norm(p1 - p0))), _MIN_KNOT_INTERVAL)
    t2 = t1 + max(math.sqrt(float(np.linalg.norm(p2 - p1))), _MIN_KNOT_INTERVAL)
    t3 = t2 + max(math.sqrt(float(np.linalg.norm(p3 - p2))), _MIN_KNOT_INTERVAL)
    s = t1 + t * (t2 - t1)

    a1 = ((t1 - s) * p0 + (s - t0) * p1) / (t1 - t0)
    a2 = ((t2 - s) * p1 + (s - t1) * p2) / (t2 - t1)
    a3 = ((t3 - s) * p2 + (s - t2) * p3) / (t3 - t2)
    b1 = ((t2 - s) * a1 + (s - t0) * a2) / (t2 - t0)
    b2 = ((t3 - s) * a2 + (s - t1) * a3) / (t3 - t1)
    return ((t2 - s) * b1 + (s - t1) * b2) / (t2 - t1)


class Trajectory:
    """相机轨迹: 按时间严格递增排序的关键帧列表"""

    def __init__(self, keypoints: Sequence[Keypoint] = ()):
        self._keypoints: List[Keypoint] = []
        self._times: List[float] = []
        for kp in keypoints:
            self.add_keypoint(kp)

    @property
    def keypoints(self) -> List[Keypoint]:
        return list(self._keypoints)

    def __len__(self):
        return len(self._keypoints)

    def add_keypoint(self, keypoint: Keypoint = None, *, time=None, position=None, rotation=None) -> None:
        """按时间顺序插入关键帧, 时间重复时报错"""
        if keypoint is None:
            keypoint = Keypoint(time, position, rotation if rotation is not None else np.array([1.0, 0, 0, 0]))
        index = bisect.bisect_left(self._times, keypoint.time)
        if index < len(self._times) and self._times[index] == keypoint.time:
            raise DuplicateKeypointError(f"关键帧时间重复: {keypoint.time}")
        self._times.insert(index, keypoint.time)
        self._keypoints.insert(index, keypoint)

    def time_span(self) -> Tuple[float, float]:
        if not self._keypoints:
            raise EmptyTrajectoryError("轨迹没有关键帧")
        return self._times[0], self._times[-1]

    def frame_times(self, fps: float) -> List[float]:
        """按 1/fps 间隔覆盖 [t_first, t_last] 的帧时间, 包含两端"""
        if not math.isfinite(fps) or fps <= 0:
            raise ValidationError(f"fps 必须为正数: {fps}")
        start, end = self.time_span()
        count = int(math.floor((end - start) * fps + 1e-9)) + 1
        return [start + i / fps for i in range(count)]

    def _control_points(self, index: int):
        """第 index 段(关键帧 index → index+1)的四个控制点"""
        positions = [kp.position for kp in self._keypoints]
        p1, p2 = positions[index], positions[index + 1]
        p0 = positions[index - 1] if index > 0 else 2.0 * p1 - p2
        p3 = positions[index + 2] if index + 2 < len(positions) else 2.0 * p2 - p1
        return p0, p1, p2, p3

    def pose_at(self, time: float) -> Tuple[np.ndarray, np.ndarray]:
        """单个时刻的 (位置, 旋转四元数)"""
        if not self._keypoints:
            raise EmptyTrajectoryError("轨迹没有关键帧")
        time = float(time)
        first, last = self._keypoints[0], self._keypoints[-1]
        if time <= first.time:
            return first.position.copy(), first.rotation.copy()
        if time >= last.time:
            return last.position.copy(), last.rotation.copy()

        index = bisect.bisect_right(self._times, time) - 1
        left = self._keypoints[index]
        if time == left.time:
            return left.position.copy(), left.rotation.copy()
        right = self._keypoints[index + 1]
        t = (time - left.time) / (right.time - left.time)
        position = _centripetal_catmull_rom(*self._control_points(index), t)
        rotation = slerp(left.rotation, right.rotation, t)
        return position, rotation

    def refine_trajectory(self, frame_times: Sequence[float]) -> List[Tuple[np.ndarray, np.ndarray]]:
        """逐帧位姿列表, 超出关键帧范围的时间钳制到端点"""
        if not self._keypoints:
            raise EmptyTrajectoryError("轨迹没有关键帧")
        frames = [self.pose_at(t) for t in frame_times]
        logger.info(f"轨迹细化完成: 关键帧 {len(self._keypoints)} 个, 输出 {len(frames)} 帧")
        return frames
