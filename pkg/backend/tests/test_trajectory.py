#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相机轨迹单元测试
"""

import os
import sys
import unittest

import numpy as np

# 添加项目根目录到路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from models.base import DuplicateKeypointError, EmptyTrajectoryError, ValidationError
from models.rotation import RotationSpec, quaternion_angle, to_quaternion
from models.trajectory import Keypoint, Trajectory


def _q(angle, axis=(0, 0, 1)):
    return to_quaternion(RotationSpec.axis_angle(axis, angle))


class TestTrajectory(unittest.TestCase):
    """轨迹关键帧与插值测试"""

    def setUp(self):
        self.trajectory = Trajectory()
        self.trajectory.add_keypoint(time=0.0, position=(0, 0, 0), rotation=_q(0.0))
        self.trajectory.add_keypoint(time=1.0, position=(1, 0, 0), rotation=_q(1.0))

    def test_keypoints_sorted(self):
        """测试乱序插入后按时间排序"""
        self.trajectory.add_keypoint(time=0.5, position=(0.5, 1, 0), rotation=_q(0.2))
        times = [kp.time for kp in self.trajectory.keypoints]
        self.assertEqual(times, [0.0, 0.5, 1.0])

    def test_duplicate_time(self):
        """测试时间重复"""
        with self.assertRaises(DuplicateKeypointError):
            self.trajectory.add_keypoint(time=1.0, position=(2, 0, 0))

    def test_empty_trajectory(self):
        """测试空轨迹"""
        with self.assertRaises(EmptyTrajectoryError):
            Trajectory().refine_trajectory([0.0])
        with self.assertRaises(EmptyTrajectoryError):
            Trajectory().frame_times(24)

    def test_frame_times_inclusive(self):
        """测试帧时间包含两端: 间隔 1 秒, 5 fps 得到 6 帧"""
        times = self.trajectory.frame_times(5)
        self.assertEqual(len(times), 6)
        self.assertEqual(times[0], 0.0)
        self.assertAlmostEqual(times[-1], 1.0, places=12)
        self.assertEqual(len(self.trajectory.frame_times(10)), 11)
        with self.assertRaises(ValidationError):
            self.trajectory.frame_times(0)

    def test_endpoints_exact(self):
        """测试关键帧时刻精确返回关键帧位姿"""
        frames = self.trajectory.refine_trajectory(self.trajectory.frame_times(5))
        first, last = self.trajectory.keypoints[0], self.trajectory.keypoints[-1]
        np.testing.assert_array_equal(frames[0][0], first.position)
        np.testing.assert_array_equal(frames[0][1], first.rotation)
        np.testing.assert_array_equal(frames[-1][0], last.position)

    def test_clamped_outside_range(self):
        """测试超出范围的时间钳制到端点"""
        position, rotation = self.trajectory.pose_at(-3.0)
        np.testing.assert_array_equal(position, [0.0, 0.0, 0.0])
        position, _ = self.trajectory.pose_at(7.0)
        np.testing.assert_array_equal(position, [1.0, 0.0, 0.0])

    def test_single_keypoint(self):
        """测试单个关键帧时所有帧相同"""
        trajectory = Trajectory([Keypoint(2.0, (1, 2, 3), _q(0.3))])
        self.assertEqual(trajectory.frame_times(30), [2.0])
        position, _ = trajectory.pose_at(5.0)
        np.testing.assert_array_equal(position, [1.0, 2.0, 3.0])

    def test_slerp_angular_linearity(self):
        """测试相邻关键帧之间旋转角随时间线性变化"""
        start = self.trajectory.keypoints[0].rotation
        for t in np.linspace(0.0, 1.0, 9):
            _, rotation = self.trajectory.pose_at(t)
            self.assertAlmostEqual(quaternion_angle(start, rotation), t * 1.0, delta=1e-6)

    def test_collinear_positions_stay_on_line(self):
        """测试共线关键帧插值结果仍在直线上"""
        trajectory = Trajectory()
        direction = np.array([1.0, 2.0, -0.5])
        for i, s in enumerate([0.0, 0.3, 1.5, 2.0, 4.0]):
            trajectory.add_keypoint(time=float(i), position=s * direction)
        for t in np.linspace(0.0, 4.0, 41):
            position, _ = trajectory.pose_at(t)
            self.assertLess(float(np.linalg.norm(np.cross(position, direction))), 1e-9)

    def test_position_continuity(self):
        """测试关键帧两侧位置连续"""
        self.trajectory.add_keypoint(time=2.0, position=(1, 1, 0), rotation=_q(1.5))
        left, _ = self.trajectory.pose_at(1.0 - 1e-7)
        right, _ = self.trajectory.pose_at(1.0 + 1e-7)
        self.assertLess(float(np.linalg.norm(left - right)), 1e-5)

    def test_end_tangents_follow_end_segments(self):
        """测试首尾切线沿首段与末段方向"""
        self.trajectory.add_keypoint(time=2.0, position=(1, 1, 0), rotation=_q(1.5))
        start, _ = self.trajectory.pose_at(1e-4)
        self.assertGreater(float(start[0]), 0.0)
        self.assertLess(abs(float(start[1])) / float(start[0]), 1e-2)
        end, _ = self.trajectory.pose_at(2.0 - 1e-4)
        step = np.array([1.0, 1.0, 0.0]) - end
        self.assertGreater(float(step[1]), 0.0)
        self.assertLess(abs(float(step[0])) / float(step[1]), 1e-2)

    def test_invalid_time(self):
        """测试非有限时间"""
        with self.assertRaises(ValidationError):
            Keypoint(float('nan'), (0, 0, 0), _q(0.0))


if __name__ == '__main__':
    unittest.main()
