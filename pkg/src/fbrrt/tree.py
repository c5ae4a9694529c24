"""Depth-indexed branched trajectory tree.

The tree stores one node per sampled state, arena-style: node attributes
live in grow-only arrays indexed by a stable integer handle, and each depth
keeps a compact buffer of live handles so nearest-neighbor scans and the
backward pass read contiguous arrays. Each node at depth i+1 identifies a
unique root-to-node path; the collection of those paths at one depth is the
empirical path measure for that time step.

Removal is leaf-only: deleting a node with children would disconnect the
surviving paths.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["EdgeData", "TreeNode", "PathSample", "BranchTree", "em_step"]


def em_step(x: np.ndarray, drift: np.ndarray, noise: np.ndarray, sigma: np.ndarray, dt: float) -> np.ndarray:
    """One Euler-Maruyama step x + k*dt + sigma @ w.

    Shared by the forward passes and by path replay so reconstructed states
    are bit-identical to stored ones.
    """
    return x + drift * dt + np.einsum("...ij,...j->...i", sigma, noise)


@dataclass
class EdgeData:
    """Data attached to the edge entering a node."""

    drift: np.ndarray
    noise: np.ndarray
    control: np.ndarray


@dataclass
class TreeNode:
    """Read-only view of one stored node."""

    node_id: int
    depth: int
    state: np.ndarray
    accumulated_cost: float
    child_count: int
    parent_id: int | None
    parent_edge: EdgeData | None


@dataclass
class PathSample:
    """Terminal projection of the unique root-to-node path of one node.

    The backward pass only needs the last transition triple
    (parent state, edge drift, state) plus the accumulated running cost.
    """

    node_id: int
    depth: int
    state: np.ndarray
    accumulated_cost: float
    parent_state: np.ndarray | None = None
    drift: np.ndarray | None = None


class BranchTree:
    """Branched-path store over a fixed time grid 0..N."""

    def __init__(self, root_state, num_steps: int, dt: float, width: int, erode_width: int):
        root_state = np.asarray(root_state, dtype=float)
        self.state_dim = root_state.shape[0]
        self.num_steps = int(num_steps)
        self.dt = float(dt)
        self.width_target = int(width)
        self.erode_width = int(erode_width)

        cap = max(64, self.width_target * (self.num_steps + 1))
        self._cap = cap
        self._states = np.zeros((cap, self.state_dim))
        self._drifts = np.zeros((cap, self.state_dim))
        self._noises = np.zeros((cap, self.state_dim))
        self._controls: list[np.ndarray | None] = [None] * cap
        self._acc_cost = np.zeros(cap)
        self._parent = np.full(cap, -1, dtype=np.int64)
        self._depth = np.zeros(cap, dtype=np.int64)
        self._child_count = np.zeros(cap, dtype=np.int64)
        self._alive = np.zeros(cap, dtype=bool)
        self._size = 0

        # per-depth compact buffers of live handles, plus handle -> row maps
        self._ids = [np.zeros(max(1, self.width_target), dtype=np.int64) for _ in range(self.num_steps + 1)]
        self._counts = [0] * (self.num_steps + 1)
        self._row_of: list[dict[int, int]] = [dict() for _ in range(self.num_steps + 1)]

        self._root = self._new_node(root_state, depth=0, parent=-1, acc_cost=0.0)

    # -- storage ----------------------------------------------------------

    @staticmethod
    def _grown(arr: np.ndarray, new_cap: int) -> np.ndarray:
        out = np.zeros((new_cap,) + arr.shape[1:], dtype=arr.dtype)
        out[: arr.shape[0]] = arr
        return out

    def _grow(self):
        new_cap = self._cap * 2
        self._states = self._grown(self._states, new_cap)
        self._drifts = self._grown(self._drifts, new_cap)
        self._noises = self._grown(self._noises, new_cap)
        self._controls.extend([None] * (new_cap - self._cap))
        self._acc_cost = self._grown(self._acc_cost, new_cap)
        self._parent = self._grown(self._parent, new_cap)
        self._depth = self._grown(self._depth, new_cap)
        self._child_count = self._grown(self._child_count, new_cap)
        self._alive = self._grown(self._alive, new_cap)
        self._cap = new_cap

    def _new_node(self, state, depth, parent, acc_cost) -> int:
        if self._size == self._cap:
            self._grow()
        nid = self._size
        self._size += 1
        self._states[nid] = state
        self._acc_cost[nid] = acc_cost
        self._parent[nid] = parent
        self._depth[nid] = depth
        self._child_count[nid] = 0
        self._alive[nid] = True

        ids = self._ids[depth]
        count = self._counts[depth]
        if count == ids.shape[0]:
            self._ids[depth] = self._grown(ids, count * 2)
            ids = self._ids[depth]
        ids[count] = nid
        self._row_of[depth][nid] = count
        self._counts[depth] = count + 1
        return nid

    # -- queries ----------------------------------------------------------

    @property
    def root_id(self) -> int:
        return self._root

    def width(self, depth: int) -> int:
        return self._counts[depth]

    def widths(self) -> list[int]:
        return [self._counts[i] for i in range(self.num_steps + 1)]

    def ids_at_depth(self, depth: int) -> np.ndarray:
        return self._ids[depth][: self._counts[depth]]

    def states_at_depth(self, depth: int) -> np.ndarray:
        return self._states[self.ids_at_depth(depth)]

    def accumulated_costs_at_depth(self, depth: int) -> np.ndarray:
        return self._acc_cost[self.ids_at_depth(depth)]

    def child_count(self, node_id: int) -> int:
        if not (0 <= node_id < self._size) or not self._alive[node_id]:
            raise KeyError(f"unknown node {node_id}")
        return int(self._child_count[node_id])

    def node(self, node_id: int) -> TreeNode:
        if not (0 <= node_id < self._size) or not self._alive[node_id]:
            raise KeyError(f"unknown node {node_id}")
        parent = int(self._parent[node_id])
        edge = None
        if parent >= 0:
            edge = EdgeData(
                drift=self._drifts[node_id].copy(),
                noise=self._noises[node_id].copy(),
                control=self._controls[node_id],
            )
        return TreeNode(
            node_id=node_id,
            depth=int(self._depth[node_id]),
            state=self._states[node_id].copy(),
            accumulated_cost=float(self._acc_cost[node_id]),
            child_count=int(self._child_count[node_id]),
            parent_id=parent if parent >= 0 else None,
            parent_edge=edge,
        )

    # -- mutation ---------------------------------------------------------

    def add_edge(self, depth: int, parent_id: int, edge: EdgeData, child_state, cost_increment: float) -> int:
        """Insert a child of ``parent_id`` (at ``depth``) at depth+1.

        ``cost_increment`` is the running-cost contribution l * dt of the new
        edge; the child's accumulated cost extends the parent's.
        """
        if depth + 1 > self.num_steps:
            raise ValueError(f"depth overflow: cannot add below depth {self.num_steps}")
        if not (0 <= parent_id < self._size) or not self._alive[parent_id] or self._depth[parent_id] != depth:
            raise KeyError(f"unknown parent {parent_id} at depth {depth}")
        child_state = np.asarray(child_state, dtype=float)
        nid = self._new_node(
            child_state, depth + 1, parent_id, self._acc_cost[parent_id] + float(cost_increment)
        )
        self._drifts[nid] = edge.drift
        self._noises[nid] = edge.noise
        self._controls[nid] = np.asarray(edge.control, dtype=float)
        self._child_count[parent_id] += 1
        return nid

    def remove_leaf(self, node_id: int) -> None:
        """Delete a childless non-root node and its parent edge."""
        if not (0 <= node_id < self._size) or not self._alive[node_id]:
            raise KeyError(f"unknown node {node_id}")
        if self._child_count[node_id] != 0:
            raise ValueError(f"node {node_id} has children and cannot be removed")
        if node_id == self._root:
            raise ValueError("cannot remove the root")
        depth = int(self._depth[node_id])
        row = self._row_of[depth].pop(node_id)
        last = self._counts[depth] - 1
        ids = self._ids[depth]
        if row != last:
            moved = ids[last]
            ids[row] = moved
            self._row_of[depth][int(moved)] = row
        self._counts[depth] = last
        self._alive[node_id] = False
        self._child_count[self._parent[node_id]] -= 1

    # -- path access ------------------------------------------------------

    def path_arrays(self, depth: int):
        """Vectorized terminal-transition view of every path ending at ``depth``.

        Returns (ids, parent_states, drifts, states, accumulated_costs).
        """
        if self._counts[depth] == 0:
            raise ValueError(f"no nodes at depth {depth}")
        ids = self.ids_at_depth(depth)
        if depth == 0:
            raise ValueError("depth 0 paths have no incoming transition")
        parents = self._parent[ids]
        return ids, self._states[parents], self._drifts[ids], self._states[ids], self._acc_cost[ids]

    def paths_at_time(self, depth: int) -> list[PathSample]:
        if self._counts[depth] == 0:
            raise ValueError(f"no nodes at depth {depth}")
        if depth == 0:
            rid = self.root_id
            return [PathSample(rid, 0, self._states[rid].copy(), 0.0)]
        ids, xprev, drifts, states, acc = self.path_arrays(depth)
        return [
            PathSample(
                node_id=int(ids[j]),
                depth=depth,
                state=states[j].copy(),
                accumulated_cost=float(acc[j]),
                parent_state=xprev[j].copy(),
                drift=drifts[j].copy(),
            )
            for j in range(len(ids))
        ]

    def reconstruct_path(self, node_id: int) -> list[TreeNode]:
        """Root-to-node chain of node views (for replay checks and dumps)."""
        chain = []
        nid = node_id
        while nid >= 0:
            chain.append(self.node(nid))
            nid = int(self._parent[nid])
        return chain[::-1]

    # -- export -----------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["node_id", "depth", "parent_id", "accumulated_cost"]
            header += [f"x{j}" for j in range(self.state_dim)]
            writer.writerow(header)
            for depth in range(self.num_steps + 1):
                for nid in self.ids_at_depth(depth):
                    nid = int(nid)
                    parent = int(self._parent[nid])
                    row = [nid, depth, parent if parent >= 0 else "", format(self._acc_cost[nid], ".17g")]
                    row += [format(v, ".17g") for v in self._states[nid]]
                    writer.writerow(row)
