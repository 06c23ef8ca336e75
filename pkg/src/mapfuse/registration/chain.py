from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

from mapfuse.geometry import (
    AnyTransform,
    PointCloud,
    SE3Transform,
    Sim3Transform,
    as_sim3,
    compose_all,
    inverse,
    transform_cloud,
)


@dataclass(frozen=True)
class AlignmentChain:
    """Factors carrying the target keyframe cloud into the scaled source keyframe frame.

    ``world_lift_target`` takes target camera j to the world, ``world_to_source`` the world to
    source camera i, ``initial_guess`` closes the gap to the scaled source camera and
    ``icp_refinement`` (scale exactly 1) polishes it.
    """

    scaling: Sim3Transform
    world_lift_target: Sim3Transform
    world_to_source: Sim3Transform
    initial_guess: Sim3Transform
    icp_refinement: Sim3Transform = field(default_factory=Sim3Transform.identity)

    def __post_init__(self) -> None:
        if self.icp_refinement.scale != 1.0:
            raise ValueError("ICP refinement must be rigid")

    @property
    def sigma(self) -> float:
        return self.scaling.scale

    def with_icp(self, refinement: AnyTransform) -> "AlignmentChain":
        rigid = refinement if isinstance(refinement, SE3Transform) else refinement.rigid()
        return replace(self, icp_refinement=rigid.as_sim3())

    def factors(self) -> Tuple[Sim3Transform, ...]:
        """Factors of the final transform, leftmost applied last."""
        return (
            self.icp_refinement,
            self.initial_guess,
            self.world_to_source,
            self.world_lift_target,
        )


def align_chain(
    cloud_s: PointCloud,
    cloud_t: PointCloud,
    pose_s: AnyTransform,
    pose_t: AnyTransform,
    sigma_star: float,
    initial_guess: Sim3Transform,
) -> Tuple[PointCloud, PointCloud, AlignmentChain]:
    """Scale the source cloud by ``sigma_star``; carry the target cloud through
    target camera -> world -> source camera -> initial guess, one factor at a time."""
    if not sigma_star > 0:
        raise ValueError(f"sigma_star must be positive, got {sigma_star}")
    chain = AlignmentChain(
        scaling=Sim3Transform.pure_scale(sigma_star),
        world_lift_target=as_sim3(pose_t),
        world_to_source=as_sim3(inverse(pose_s)),
        initial_guess=initial_guess,
    )
    scaled_source = transform_cloud(chain.scaling, cloud_s)
    moved = cloud_t
    for factor in (chain.world_lift_target, chain.world_to_source, chain.initial_guess):
        moved = transform_cloud(factor, moved)
    return scaled_source, moved, chain


def final_transform(chain: AlignmentChain) -> Sim3Transform:
    """Target camera j into the scaled source camera i: ICP * IG * T_s(i),w * T_t(j),w^-1."""
    return as_sim3(compose_all(chain.factors()))
