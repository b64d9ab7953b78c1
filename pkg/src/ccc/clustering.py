"""Size-constrained k-means on latent channels.

The assignment step is a transportation problem: every pixel supplies one
unit, cluster ``h`` demands exactly ``targets[h]`` units, and moving pixel
``j`` to cluster ``h`` costs ``0.5 * ||z_j - c_h||^2``. It is solved by
successive shortest paths. Because every pixel node has a single unit of
supply, a residual path always has the shape

    source -> free pixel -> c1 -> (pixel in c1) -> c2 -> ... -> cn -> sink

so the search runs on a k-node graph whose arc ``a -> b`` costs the
cheapest reassignment of a pixel currently in ``a`` over to ``b``. Those
minima are kept in lazy heaps.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError

COST_RESOLUTION = 1e-9
BRUTE_FORCE_MAX = 12


def _latents_2d(latents) -> np.ndarray:
    z = np.asarray(latents, dtype=np.float64)
    return z[:, None] if z.ndim == 1 else z


def pair_costs(latents, centers) -> np.ndarray:
    """(M, k) array of 0.5 * squared distances."""
    z = _latents_2d(latents)
    c = np.asarray(centers, dtype=np.float64).reshape(-1, z.shape[1])
    return 0.5 * ((z[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def assignment_cost(latents, centers, labels, mask=None) -> float:
    costs = pair_costs(latents, centers)
    labels = np.asarray(labels)
    picked = costs[np.arange(labels.size), labels]
    if mask is not None:
        picked = picked[mask]
    return float(picked.sum())


def _check_targets(targets, m: int, allow_slack: bool) -> np.ndarray:
    t = np.asarray(targets, dtype=np.int64)
    if t.ndim != 1 or np.any(t < 0):
        raise ValidationError("targets must be a vector of non-negative integers")
    total = int(t.sum())
    if total > m or (total < m and not allow_slack):
        raise InfeasibleError(f"cluster targets sum to {total} but there are {m} pixels")
    return t


def _ssp(cost: list[list[int]], caps: list[int]) -> list[int]:
    m = len(cost)
    k = len(caps)
    label = [-1] * m
    count = [0] * k
    free = [[(cost[j][h], j) for j in range(m)] for h in range(k)]
    for heap in free:
        heapq.heapify(heap)
    moves = [[[] for _ in range(k)] for _ in range(k)]

    def enter(j: int, h: int) -> None:
        label[j] = h
        row = cost[j]
        base = row[h]
        for b in range(k):
            if b != h:
                heapq.heappush(moves[h][b], (row[b] - base, j))

    for _ in range(m):
        dist = [None] * k
        pred: list[tuple[int, int]] = [(-1, -1)] * k  # (previous cluster or -1 for source, pixel)
        for h in range(k):
            heap = free[h]
            while heap and label[heap[0][1]] != -1:
                heapq.heappop(heap)
            if heap:
                dist[h] = heap[0][0]
                pred[h] = (-1, heap[0][1])
        arc: list[list[tuple[int, int] | None]] = [[None] * k for _ in range(k)]
        for a in range(k):
            if not count[a]:
                continue
            for b in range(k):
                if a == b:
                    continue
                heap = moves[a][b]
                while heap and label[heap[0][1]] != a:
                    heapq.heappop(heap)
                if heap:
                    arc[a][b] = heap[0]
        # Bellman-Ford on k nodes; the residual graph carries no negative cycle
        for _ in range(k - 1):
            changed = False
            for a in range(k):
                if dist[a] is None:
                    continue
                for b in range(k):
                    e = arc[a][b]
                    if e is not None and (dist[b] is None or dist[a] + e[0] < dist[b]):
                        dist[b] = dist[a] + e[0]
                        pred[b] = (a, e[1])
                        changed = True
            if not changed:
                break
        best = -1
        for h in range(k):
            if count[h] < caps[h] and dist[h] is not None and (best < 0 or dist[h] < dist[best]):
                best = h
        if best < 0:
            raise InfeasibleError("no augmenting path; demands cannot be met")
        path = []
        node = best
        for _ in range(k + 1):
            prev, j = pred[node]
            path.append((j, node))
            if prev < 0:
                break
            node = prev
        else:
            raise RuntimeError("cycle in shortest-path tree")
        for j, h in path:
            enter(j, h)
        count[best] += 1
    return label


def _flow_assign(costs: np.ndarray, caps: np.ndarray) -> np.ndarray:
    scaled = np.rint(costs / COST_RESOLUTION)
    cost_int = [[int(v) for v in row] for row in scaled]
    return np.array(_ssp(cost_int, [int(c) for c in caps]), dtype=np.int64)


def _monotone_assign(z: np.ndarray, centers: np.ndarray, targets: np.ndarray) -> np.ndarray:
    # 1-D convex costs: sorted pixels fill clusters in sorted-center order
    order_c = np.argsort(centers, kind="stable")
    order_z = np.argsort(z, kind="stable")
    labels = np.empty(z.size, dtype=np.int64)
    labels[order_z] = np.repeat(order_c, targets[order_c])
    return labels


def assign_with_constraints(latents, centers, targets, *, allow_slack: bool = False,
                            method: str = "flow") -> np.ndarray:
    """Cluster label per pixel with column sums equal to ``targets``.

    With ``allow_slack`` and ``sum(targets) < M``, a zero-cost slack column
    absorbs the surplus; those pixels are labelled with their nearest center.
    ``method`` is ``"flow"`` (successive shortest paths), ``"monotone"``
    (exact sorted fill, 1-D latents with no slack only) or ``"auto"``.
    """
    z = _latents_2d(latents)
    m = z.shape[0]
    t = _check_targets(targets, m, allow_slack)
    c = np.asarray(centers, dtype=np.float64)
    if c.reshape(-1, z.shape[1]).shape[0] != t.size:
        raise ValidationError(f"{t.size} targets but {c.size // z.shape[1]} centers")
    slack = m - int(t.sum())
    if method == "auto":
        method = "monotone" if z.shape[1] == 1 and slack == 0 else "flow"
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    costs = pair_costs(z, c)
    if method == "monotone":
        if z.shape[1] != 1 or slack:
            raise ValidationError("monotone assignment needs 1-D latents and exact-size targets")
        return _monotone_assign(z[:, 0], c.ravel(), t)
    if method != "flow":
        raise ValidationError(f"unknown assignment method {method!r}")
    if slack:
        costs = np.hstack([costs, np.zeros((m, 1))])
        caps = np.append(t, slack)
    else:
        caps = t
    labels = _flow_assign(costs, caps)
    if slack:
        spare = labels == t.size
        labels[spare] = np.argmin(costs[spare, : t.size], axis=1)
    return labels


def slack_mask(latents, centers, targets, labels) -> np.ndarray:
    """Pixels beyond each cluster's target (always empty in the exact regime)."""
    labels = np.asarray(labels)
    out = np.zeros(labels.size, dtype=bool)
    costs = pair_costs(latents, centers)
    for h, n in enumerate(np.asarray(targets)):
        idx = np.flatnonzero(labels == h)
        if idx.size > n:
            order = idx[np.argsort(-costs[idx, h], kind="stable")]
            out[order[: idx.size - n]] = True
    return out


def brute_force_assign(latents, centers, targets) -> np.ndarray:
    """Exhaustive minimum over all assignments with the given column sums."""
    z = _latents_2d(latents)
    m = z.shape[0]
    if m > BRUTE_FORCE_MAX:
        raise ValidationError(f"brute force is limited to {BRUTE_FORCE_MAX} pixels, got {m}")
    t = _check_targets(targets, m, allow_slack=False)
    costs = pair_costs(z, centers)
    k = t.size
    best_cost = np.inf
    best = None
    labels = [0] * m

    def rec(j: int, left: list[int], acc: float):
        nonlocal best_cost, best
        if j == m:
            if acc < best_cost:
                best_cost = acc
                best = labels.copy()
            return
        for h in range(k):
            if left[h]:
                left[h] -= 1
                labels[j] = h
                rec(j + 1, left, acc + costs[j, h])
                left[h] += 1

    rec(0, [int(v) for v in t], 0.0)
    return np.array(best if best is not None else [], dtype=np.int64)


def selection_array(labels, k: int) -> np.ndarray:
    """Binary (M, k) selection array from labels."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, k), dtype=np.int8)
    out[np.arange(labels.size), labels] = 1
    return out


def update_centers(latents, labels, previous, mask=None) -> np.ndarray:
    """Per-cluster mean; empty clusters keep their previous center."""
    z = _latents_2d(latents)
    prev = np.asarray(previous, dtype=np.float64)
    centers = prev.reshape(-1, z.shape[1]).copy()
    labels = np.asarray(labels)
    use = np.ones(labels.size, dtype=bool) if mask is None else ~np.asarray(mask)
    for h in range(centers.shape[0]):
        sel = use & (labels == h)
        if sel.any():
            centers[h] = z[sel].mean(axis=0)
    return centers.reshape(prev.shape)


def initial_centers(latents, targets) -> np.ndarray:
    """Latent quantiles at the midpoint of each class's cumulative target share."""
    z = _latents_2d(latents)
    t = np.asarray(targets, dtype=np.float64)
    if z.shape[0] == 0:
        return np.zeros(t.size) if z.shape[1] == 1 else np.zeros((t.size, z.shape[1]))
    total = t.sum() if t.sum() > 0 else 1.0
    pos = (np.cumsum(t) - t / 2.0) / total
    q = np.quantile(z, np.clip(pos, 0.0, 1.0), axis=0)
    return q[:, 0] if z.shape[1] == 1 else q


@dataclass
class AssignmentState:
    latents: np.ndarray
    centers: np.ndarray
    labels: np.ndarray
    objective: float
    slack: np.ndarray
    history: list[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def k(self) -> int:
        return int(np.asarray(self.centers).shape[0])

    @property
    def assignment(self) -> np.ndarray:
        return selection_array(self.labels, self.k)


def fit(latents, targets, initial=None, *, max_iter: int = 100, tol: float = 1e-6,
        allow_slack: bool = True, method: str = "auto") -> AssignmentState:
    """Alternate constrained assignment and center updates until centers settle."""
    z = np.asarray(latents, dtype=np.float64)
    t = np.asarray(targets, dtype=np.int64)
    centers = initial_centers(z, t) if initial is None else np.array(initial, dtype=np.float64)
    history: list[float] = []
    labels = np.zeros(z.shape[0], dtype=np.int64)
    spare = np.zeros(z.shape[0], dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        labels = assign_with_constraints(z, centers, t, allow_slack=allow_slack, method=method)
        spare = slack_mask(z, centers, t, labels)
        history.append(assignment_cost(z, centers, labels, ~spare))
        new = update_centers(z, labels, centers, spare)
        shift = float(np.max(np.abs(new - centers))) if centers.size else 0.0
        centers = new
        history.append(assignment_cost(z, centers, labels, ~spare))
        if shift < tol:
            break
    return AssignmentState(z, centers, labels, history[-1] if history else 0.0, spare, history, it)


# --- supervised clustering loss ------------------------------------------------


@dataclass
class GroundtruthOverlay:
    """Allowed classes per pixel for one indicator; rows without coverage are ignored."""

    covered: np.ndarray  # (M,) bool
    allowed: np.ndarray  # (M, k) bool

    def __post_init__(self):
        self.covered = np.asarray(self.covered, dtype=bool)
        self.allowed = np.asarray(self.allowed, dtype=bool)
        if self.allowed.shape[0] != self.covered.size:
            raise ValidationError("overlay rows do not match coverage length")
        if np.any(self.covered & ~self.allowed.any(axis=1)):
            raise ValidationError("covered pixel with an empty allowed set")

    @classmethod
    def empty(cls, m: int, k: int) -> "GroundtruthOverlay":
        return cls(np.zeros(m, dtype=bool), np.zeros((m, k), dtype=bool))

    @classmethod
    def from_sets(cls, sets: Sequence[set[int] | None], k: int) -> "GroundtruthOverlay":
        covered = np.array([s is not None for s in sets], dtype=bool)
        allowed = np.zeros((len(sets), k), dtype=bool)
        for j, s in enumerate(sets):
            for h in s or ():
                allowed[j, h] = True
        return cls(covered, allowed)


def label_weights(overlay: GroundtruthOverlay) -> np.ndarray:
    """Inverse frequency of each class among covered pixels' allowed sets, summing to 1."""
    k = overlay.allowed.shape[1]
    counts = overlay.allowed[overlay.covered].sum(axis=0).astype(np.float64)
    if counts.sum() == 0:
        return np.full(k, 1.0 / k)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    return inv / inv.sum()


def supervised_targets(latents, centers, labels, overlay: GroundtruthOverlay) -> np.ndarray:
    """Nearest allowed center for covered pixels, the assigned center otherwise."""
    costs = pair_costs(latents, centers)
    masked = np.where(overlay.allowed, costs, np.inf)
    nearest = np.argmin(masked, axis=1)
    return np.where(overlay.covered, nearest, np.asarray(labels, dtype=np.int64))


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError(f"label weights must be non-negative and sum to 1, got sum {w.sum()!r}")
    return w


def clustering_loss(latents, centers, labels, overlay: GroundtruthOverlay, weights) -> float:
    """Weighted sum of latent-to-target-center distances."""
    w = _check_weights(weights)
    z = _latents_2d(latents)
    c = np.asarray(centers, dtype=np.float64).reshape(-1, z.shape[1])
    tgt = supervised_targets(z, c, labels, overlay)
    dist = np.sqrt(((z - c[tgt]) ** 2).sum(axis=1))
    return float(np.sum(w[tgt] * dist))


def clustering_grad(latents, centers, labels, overlay: GroundtruthOverlay, weights) -> np.ndarray:
    """d(clustering_loss)/d(latents) with centers and targets held fixed."""
    w = _check_weights(weights)
    z = _latents_2d(latents)
    c = np.asarray(centers, dtype=np.float64).reshape(-1, z.shape[1])
    tgt = supervised_targets(z, c, labels, overlay)
    diff = z - c[tgt]
    norm = np.sqrt((diff**2).sum(axis=1, keepdims=True))
    g = np.where(norm > 0, diff / np.where(norm > 0, norm, 1.0), 0.0) * w[tgt][:, None]
    return g[:, 0] if np.asarray(latents).ndim == 1 else g
