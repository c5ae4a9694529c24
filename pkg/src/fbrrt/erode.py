"""Tree erosion: prune the worst childless nodes back to the erode width.

Depths are processed from the horizon down so that leaves removed at depth
i+1 can free their parents at depth i within the same call. At each depth
nodes are visited in descending heuristic order and removed while childless,
stopping once the depth holds the erode width. A depth where every
over-quota node still has children is left wide; the next forward pass
simply adds fewer nodes there.
"""

from __future__ import annotations

import logging

import numpy as np

from .tree import BranchTree

__all__ = ["erode"]

log = logging.getLogger(__name__)


def erode(tree: BranchTree, heuristics: dict[int, float], erode_width: int | None = None) -> BranchTree:
    """Prune each depth toward ``erode_width`` using per-node heuristics.

    Ties in the heuristic break toward removing the newer node first.
    """
    target = tree.erode_width if erode_width is None else int(erode_width)
    for depth in range(tree.num_steps, 0, -1):
        if tree.width(depth) <= target:
            continue
        ids = tree.ids_at_depth(depth).copy()
        rho = np.array([heuristics[int(j)] for j in ids])
        # lexicographic sort: descending rho, then descending id for ties
        order = np.lexsort((-ids, -rho))
        for idx in order:
            if tree.width(depth) <= target:
                break
            nid = int(ids[idx])
            if tree.child_count(nid) == 0:
                tree.remove_leaf(nid)
        removed = len(ids) - tree.width(depth)
        if tree.width(depth) > target:
            log.warning(
                "erode: depth %d stuck at width %d (> %d); all remaining candidates have children",
                depth,
                tree.width(depth),
                target,
            )
        log.debug("erode: depth %d removed %d nodes", depth, removed)
    return tree
