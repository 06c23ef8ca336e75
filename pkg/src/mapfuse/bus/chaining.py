"""Composition of pairwise merges into one frame through connecting agents."""

from __future__ import annotations

import logging
from collections import deque
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from mapfuse.exceptions import CyclicMergeError, DisconnectedAgentsError
from mapfuse.geometry import Sim3Transform, as_sim3, compose, inverse

from .messages import MergeNotice

logger = logging.getLogger("mapfuse.bus")
logger.addHandler(logging.NullHandler())


def chain_merges(
    notices: Sequence[MergeNotice],
    agents: Optional[Iterable[str]] = None,
    root: Optional[str] = None,
) -> Dict[str, Sim3Transform]:
    """World of every agent into the world of ``root`` (default: the smallest agent id).

    Breadth-first from the root; each notice is an undirected link carrying the target
    world into the source world. ``agents`` adds ids that must be reached even if no notice
    names them.
    """
    everyone: Set[str] = set(agents or ())
    links: Dict[str, List[Tuple[str, Sim3Transform]]] = {}
    seen_pairs: Set[frozenset[str]] = set()
    for n in notices:
        key = frozenset(n.pair)
        if key in seen_pairs:
            raise CyclicMergeError(f"agents {sorted(key)} were merged more than once")
        seen_pairs.add(key)
        everyone.update(n.pair)
        links.setdefault(n.source_agent, []).append((n.target_agent, n.relative))
        links.setdefault(n.target_agent, []).append((n.source_agent, inverse(n.relative)))
    if not everyone:
        raise DisconnectedAgentsError("no agents to chain")

    root = root if root is not None else min(everyone)
    if root not in everyone:
        raise DisconnectedAgentsError(f"root agent {root!r} is not part of the merge graph")

    transforms: Dict[str, Sim3Transform] = {root: Sim3Transform.identity()}
    parent: Dict[str, Optional[str]] = {root: None}
    queue = deque([root])
    while queue:
        agent = queue.popleft()
        for neighbour, into_agent in sorted(links.get(agent, []), key=lambda x: x[0]):
            if neighbour == parent[agent]:
                continue
            if neighbour in transforms:
                logger.error("Merge graph has a cycle through %s and %s", agent, neighbour)
                raise CyclicMergeError(f"cycle through agents {agent!r} and {neighbour!r}")
            transforms[neighbour] = as_sim3(compose(transforms[agent], into_agent))
            parent[neighbour] = agent
            queue.append(neighbour)

    unreached = sorted(everyone - set(transforms))
    if unreached:
        logger.error("Agents %s are not connected to %s", unreached, root)
        raise DisconnectedAgentsError(f"agents {unreached} are not connected to root {root!r}")
    return transforms
