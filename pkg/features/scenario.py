"""
Assembles a runnable scenario (team, plan, cameras, feature field, weight law)
from a ScenarioConfig, and hands out the keyed random streams.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from app.config import ScenarioConfig
from features import motion, netgraph, vision

logger = logging.getLogger(__name__)

# stream kinds: [seed, replicate, kind, step(, feature)]
KIND_TRUTH = 0
KIND_RELATIVE = 1
KIND_FEATURE = 2
KIND_SELECTION = 3
KIND_FIELD = 4


def stream(seed: int, replicate: int, kind: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, replicate, kind, *keys])


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    dynamics: motion.TeamDynamics
    plan: motion.ReferencePlan
    rigs: tuple[vision.CameraRig, ...]
    features: tuple[vision.Feature, ...]
    law: netgraph.WeightLaw

    def __post_init__(self):
        object.__setattr__(self, "_positions", {f.feature_id: f.position for f in self.features})

    @property
    def num_robots(self) -> int:
        return self.config.num_robots

    @property
    def noisy(self) -> bool:
        return self.config.realize_noise

    def feature_position(self, feature_id: int) -> NDArray:
        return self._positions[feature_id]

    def initial_cov(self) -> NDArray:
        return self.config.init_cov * np.eye(3 * self.num_robots)

    def horizon_poses(self, hg: motion.HorizonGaussian) -> list[list[vision.Pose]]:
        """Predicted camera poses along the horizon mean."""
        poses = []
        for k in range(hg.horizon + 1):
            block = hg.mean[hg.step_slice(k)].reshape(self.num_robots, 3)
            poses.append([vision.Pose(block[i], self.plan.camera_rotation(i + 1, hg.t + k))
                          for i in range(self.num_robots)])
        return poses

    def graphs(self, hg: motion.HorizonGaussian) -> list[netgraph.CommGraph]:
        """Communication graph per horizon step, weighted on predicted positions."""
        return [netgraph.build_graph(hg.mean[hg.step_slice(k)], self.law, self.config.topology)
                for k in range(hg.horizon + 1)]


def reference_poses(cfg: ScenarioConfig, plan: motion.ReferencePlan, rigs) -> tuple[list, list]:
    """Reference camera poses of every robot over 0..t_e, paired with their rigs."""
    poses, pose_rigs = [], []
    for i in range(1, cfg.num_robots + 1):
        for tau in range(cfg.t_end + 1):
            poses.append(vision.Pose(plan.position(i, tau), plan.camera_rotation(i, tau)))
            pose_rigs.append(rigs[i - 1])
    return poses, pose_rigs


def build_features(cfg: ScenarioConfig, plan: motion.ReferencePlan, rigs) -> list[vision.Feature]:
    """Feature field for the run.

    "views" seeds features inside the reference camera views, so each lane
    gets its own share. "box" spreads them over one box around every
    reference trajectory.
    """
    if cfg.feature_csv:
        return vision.load_features_csv(cfg.feature_csv)
    gen = stream(cfg.seed, 0, KIND_FIELD)
    if cfg.feature_layout == "views":
        poses, pose_rigs = reference_poses(cfg, plan, rigs)
        return vision.generate_view_features(poses, pose_rigs, cfg.feature_count, gen)
    taus = range(cfg.t_end + cfg.horizon + 1)
    ref = [plan.position(i, tau) for i in range(1, cfg.num_robots + 1) for tau in taus]
    bounds = vision.field_bounds(ref, cfg.feature_margin)
    return vision.generate_features(bounds, cfg.feature_count, gen)


def build_scenario(cfg: ScenarioConfig, features=None) -> Scenario:
    dyn = motion.TeamDynamics(cfg.num_robots, cfg.process_noise * np.eye(3))
    plan = motion.ReferencePlan(cfg.num_robots, cfg.horizon, cfg.t_end, cfg.lane_scale)
    half_angle = np.deg2rad(cfg.fov_deg)
    rigs = tuple(vision.CameraRig(np.eye(3), cfg.camera_offset, s, half_angle, cfg.max_range)
                 for s in cfg.robot_sigmas())
    if features is None:
        features = build_features(cfg, plan, rigs)
    law = netgraph.WeightLaw(cfg.alpha / cfg.relative_noise ** 2, cfg.beta)
    logger.debug("scenario: N=%d M=%d t_e=%d, %d features", cfg.num_robots, cfg.horizon, cfg.t_end, len(features))
    return Scenario(cfg, dyn, plan, rigs, tuple(features), law)
