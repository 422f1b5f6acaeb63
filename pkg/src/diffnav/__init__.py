"""Differential-drive navigation: simulation, EKF fusion, particle-filter
mapping, costmaps, A* planning and DWA/MPC local planners."""
from ._kernels import BACKEND
from .costmap import CostMap, InflationConfig, from_occupancy, inflate
from .dwa import DwaConfig, dwa_plan
from .ekf import EkfConfig, EkfState, PoseFilter
from .global_planner import GridPath, Unreachable, astar, dijkstra
from .grid import OccupancyGrid, load_map, save_map
from .kinematics import (KinematicParams, Pose, Trajectory, Twist, WheelSpeeds, clamp_twist, rollout,
                         step_euler, twist_to_wheels, wheels_to_twist)
from .mapping import MappingConfig, run_mapping
from .mpc import MpcConfig, mpc_plan
from .runner import Outcome, RunRecord, ScenarioConfig, compare, compute_metrics, run_pair, run_scenario
from .sim_world import LidarConfig, NoiseModel, ScenarioName, builtin_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CostMap", "DwaConfig", "EkfConfig", "EkfState", "GridPath", "InflationConfig", "KinematicParams",
    "LidarConfig", "MappingConfig", "MpcConfig", "NoiseModel", "OccupancyGrid", "Outcome", "Pose", "PoseFilter",
    "RunRecord", "ScenarioConfig", "ScenarioName", "Trajectory", "Twist", "Unreachable", "WheelSpeeds", "astar",
    "builtin_scenario", "clamp_twist", "compare", "compute_metrics", "dijkstra", "dwa_plan", "from_occupancy",
    "inflate", "load_map", "mpc_plan", "rollout", "run_mapping", "run_pair", "run_scenario", "save_map",
    "step_euler", "twist_to_wheels", "wheels_to_twist",
]
