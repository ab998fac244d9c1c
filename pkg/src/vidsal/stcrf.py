"""Spatiotemporal region-graph energy and its exact minimization.

Vertices are (track, frame) pairs inside a video block; edges carry
label-independent smoothness weights (inverse centroid distance or flow
match ratio, times a contrast-adaptive exponential). Because all pairwise
terms are nonnegative and vanish on equal labels, the binary energy is
submodular and one s-t min-cut yields a global minimum; the iteration loop
re-cuts until labels stop changing and reports the count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SaliencyMap
from .errors import InvalidArgument, InvalidGraph, MalformedInput
from .flow import pair_overlap_counts
from .maxflow import MinCutGraph

SPATIAL = "spatial"
TEMPORAL = "temporal"

MIN_CENTROID_DISTANCE = 1.0  # pixels; Euclidean distance clamp


@dataclass(frozen=True)
class ThetaParams:
    theta_u: float = 50.0
    theta_bs: float = 0.05
    theta_bt: float = 1000.0

    def __post_init__(self):
        if min(self.theta_u, self.theta_bs, self.theta_bt) < 0:
            raise InvalidArgument("theta parameters must be >= 0")

    def scaled(self, factor: float) -> "ThetaParams":
        return ThetaParams(self.theta_u * factor, self.theta_bs * factor,
                           self.theta_bt * factor)


@dataclass(frozen=True)
class Block:
    start: int
    stop: int  # exclusive

    @property
    def frames(self) -> range:
        return range(self.start, self.stop)

    def __contains__(self, frame_index: int) -> bool:
        return self.start <= frame_index < self.stop


@dataclass(frozen=True)
class BlockPlan:
    block_length: int
    overlap: float
    blocks: tuple[Block, ...]


def partition_blocks(num_frames: int, block_length: int = 16,
                     overlap: float = 0.5) -> BlockPlan:
    """Fixed-size blocks starting every block_length*(1-overlap) frames;
    the final block is clamped to the video end."""
    if num_frames < 1:
        raise InvalidArgument("need at least one frame")
    if block_length < 1:
        raise InvalidArgument("block length must be >= 1")
    if not 0.0 <= overlap < 1.0:
        raise InvalidArgument("overlap fraction must lie in [0, 1)")
    stride = max(1, block_length - math.floor(block_length * overlap))
    blocks = []
    start = 0
    while True:
        stop = min(start + block_length, num_frames)
        blocks.append(Block(start, stop))
        if stop >= num_frames:
            break
        start += stride
    return BlockPlan(block_length=block_length, overlap=overlap,
                     blocks=tuple(blocks))


@dataclass
class Vertex:
    track_id: int
    frame_index: int
    region_id: int
    omega: float
    feature: np.ndarray | None = None


@dataclass
class Edge:
    u: int
    v: int
    kind: str  # SPATIAL | TEMPORAL
    weight: float = 0.0  # label-independent factor, theta excluded
    sq_dist: float = 0.0  # squared feature distance, kept for beta audits
    geom: float = 0.0  # 1/D for spatial, match ratio phi for temporal


@dataclass
class StcrfGraph:
    vertices: list[Vertex]
    spatial_edges: list[Edge] = field(default_factory=list)
    temporal_edges: list[Edge] = field(default_factory=list)
    betas: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        n = len(self.vertices)
        seen = set()
        for e in self.spatial_edges + self.temporal_edges:
            if not (0 <= e.u < n and 0 <= e.v < n) or e.u == e.v:
                raise InvalidGraph(f"edge ({e.u}, {e.v}) references bad vertices")
            key = (min(e.u, e.v), max(e.u, e.v))
            if key in seen:
                raise InvalidGraph(f"duplicate edge ({e.u}, {e.v})")
            seen.add(key)

    @property
    def edges(self) -> list[Edge]:
        return self.spatial_edges + self.temporal_edges


def compute_betas(graph: StcrfGraph, mode: str = "sum") -> tuple[float, float]:
    """Contrast normalizers: beta = 1 / (2 * sum of squared feature
    distances) per edge type; an empty or zero sum yields beta = 0 so every
    exponential factor is 1. mode="mean" divides by the count first."""
    if mode not in ("sum", "mean"):
        raise InvalidArgument("beta normalization mode must be 'sum' or 'mean'")

    def one(edges):
        if not edges:
            return 0.0
        total = float(sum(e.sq_dist for e in edges))
        if mode == "mean":
            total /= len(edges)
        return 0.0 if total == 0.0 else 0.5 / total

    return one(graph.spatial_edges), one(graph.temporal_edges)


def build_graph(block: Block, scale_seg, std_features, omegas,
                forward_flows, backward_flows,
                beta_mode: str = "sum") -> StcrfGraph:
    """Assemble the block's graph from a scale's segmentation.

    std_features and omegas map (frame_index, region_id) to the combined
    descriptor / foreground probability; flows are full-video lists indexed
    by gap. Spatial edges join 4-connected regions of one frame; temporal
    edges join consecutive-frame regions with positive match ratio.
    """
    region_sets = {rs.frame_index: rs for rs in scale_seg.region_sets
                   if rs.frame_index in block}
    vertices: list[Vertex] = []
    index: dict[tuple[int, int], int] = {}
    for f in block.frames:
        rs = region_sets[f]
        for info in rs.regions:
            key = (f, info.id)
            if key not in std_features:
                raise MalformedInput(
                    f"missing descriptor for frame {f}, region {info.id}")
            if key not in omegas:
                raise MalformedInput(
                    f"missing foreground probability for frame {f}, "
                    f"region {info.id}")
            index[key] = len(vertices)
            vertices.append(Vertex(
                track_id=scale_seg.track_of(f, info.id),
                frame_index=f,
                region_id=info.id,
                omega=float(omegas[key]),
                feature=np.asarray(std_features[key], dtype=np.float64),
            ))

    spatial: list[Edge] = []
    for f in block.frames:
        rs = region_sets[f]
        infos = {info.id: info for info in rs.regions}
        for info in rs.regions:
            for nbr in sorted(info.spatial_neighbors):
                if nbr <= info.id:
                    continue
                u = index[(f, info.id)]
                v = index[(f, nbr)]
                ci = info.centroid
                cj = infos[nbr].centroid
                dist = max(MIN_CENTROID_DISTANCE, math.hypot(
                    ci[0] - cj[0], ci[1] - cj[1]))
                dsq = float(np.sum((vertices[u].feature
                                    - vertices[v].feature) ** 2))
                spatial.append(Edge(u=u, v=v, kind=SPATIAL,
                                    sq_dist=dsq, geom=1.0 / dist))

    temporal: list[Edge] = []
    for f in block.frames:
        if f + 1 not in block:
            break
        rs_a, rs_b = region_sets[f], region_sets[f + 1]
        counts_fwd = pair_overlap_counts(rs_a.labels, rs_b.labels,
                                         forward_flows[f])
        counts_bwd = pair_overlap_counts(rs_b.labels, rs_a.labels,
                                         backward_flows[f])
        areas_a = np.array([r.area for r in rs_a.regions], dtype=np.float64)
        areas_b = np.array([r.area for r in rs_b.regions], dtype=np.float64)
        phi = 0.5 * (counts_fwd / areas_a[:, None]
                     + counts_bwd.T / areas_b[None, :])
        for i, j in zip(*np.nonzero(phi > 0.0)):
            u = index[(f, int(i))]
            v = index[(f + 1, int(j))]
            dsq = float(np.sum((vertices[u].feature
                                - vertices[v].feature) ** 2))
            temporal.append(Edge(u=u, v=v, kind=TEMPORAL,
                                 sq_dist=dsq, geom=float(phi[i, j])))

    graph = StcrfGraph(vertices=vertices, spatial_edges=spatial,
                       temporal_edges=temporal)
    beta_s, beta_t = compute_betas(graph, beta_mode)
    for e in graph.spatial_edges:
        e.weight = e.geom * math.exp(-beta_s * e.sq_dist)
    for e in graph.temporal_edges:
        e.weight = e.geom * math.exp(-beta_t * e.sq_dist)
    graph.betas = (beta_s, beta_t)
    return graph


def binary_potential(edge: Edge, label_u: int, label_v: int,
                     theta: ThetaParams) -> float:
    """Pairwise cost: zero on equal labels, otherwise the type's theta times
    the precomputed label-independent weight."""
    if label_u == label_v:
        return 0.0
    scale = theta.theta_bs if edge.kind == SPATIAL else theta.theta_bt
    return scale * edge.weight


def energy(labels, graph: StcrfGraph, theta: ThetaParams) -> float:
    labels = np.asarray(labels)
    if labels.shape != (len(graph.vertices),):
        raise InvalidArgument("labeling length does not match vertex count")
    total = 0.0
    for lab, v in zip(labels, graph.vertices):
        total += theta.theta_u * (1.0 - v.omega if lab == 1 else v.omega)
    for e in graph.spatial_edges:
        if labels[e.u] != labels[e.v]:
            total += theta.theta_bs * e.weight
    for e in graph.temporal_edges:
        if labels[e.u] != labels[e.v]:
            total += theta.theta_bt * e.weight
    return total


def _validate_graph(graph: StcrfGraph, theta: ThetaParams) -> None:
    for v in graph.vertices:
        if not (np.isfinite(v.omega) and 0.0 <= v.omega <= 1.0):
            raise InvalidGraph(
                f"vertex (track {v.track_id}, frame {v.frame_index}) has "
                f"invalid omega {v.omega}")
    for e in graph.edges:
        if not np.isfinite(e.weight) or e.weight < 0.0:
            raise InvalidGraph(f"edge ({e.u}, {e.v}) has invalid weight "
                               f"{e.weight}")


def _solve_cut(graph: StcrfGraph, theta: ThetaParams) -> np.ndarray:
    g = MinCutGraph(len(graph.vertices))
    for i, v in enumerate(graph.vertices):
        # cutting source->i assigns background (cost theta_u * omega)
        g.add_terminal(i, theta.theta_u * v.omega,
                       theta.theta_u * (1.0 - v.omega))
    for e in graph.spatial_edges:
        w = theta.theta_bs * e.weight
        if w > 0.0:
            g.add_edge(e.u, e.v, w, w)
    for e in graph.temporal_edges:
        w = theta.theta_bt * e.weight
        if w > 0.0:
            g.add_edge(e.u, e.v, w, w)
    g.solve()
    return np.fromiter((1 if g.is_source_side(i) else 0
                        for i in range(len(graph.vertices))),
                       dtype=np.int8, count=len(graph.vertices))


@dataclass(frozen=True)
class MinimizeResult:
    labels: np.ndarray  # 1 = foreground
    energy: float
    iterations: int
    energy_trace: tuple[float, ...]  # initial labeling first


def minimize(graph: StcrfGraph, theta: ThetaParams,
             max_iters: int = 10) -> MinimizeResult:
    """Iterated exact min-cut; re-cuts until labels are unchanged or
    max_iters. Initial labels are omega >= 0.5; cut ties fall to
    background."""
    if max_iters < 1:
        raise InvalidArgument("max_iters must be >= 1")
    _validate_graph(graph, theta)
    labels = np.fromiter((1 if v.omega >= 0.5 else 0 for v in graph.vertices),
                         dtype=np.int8, count=len(graph.vertices))
    trace = [energy(labels, graph, theta)]
    iterations = 0
    for _ in range(max_iters):
        new = _solve_cut(graph, theta)
        iterations += 1
        trace.append(energy(new, graph, theta))
        if np.array_equal(new, labels):
            break
        labels = new
    return MinimizeResult(labels=labels, energy=trace[-1],
                          iterations=iterations, energy_trace=tuple(trace))


def block_scores_to_saliency(block_labelings, plan: BlockPlan,
                             region_sets) -> list[SaliencyMap]:
    """Average each region's binary labels over the blocks containing it and
    paint the scores onto pixels, one map per frame.

    block_labelings[b] maps (frame_index, region_id) to the 0/1 label the
    b-th block assigned.
    """
    block_labelings = list(block_labelings)
    if len(block_labelings) != len(plan.blocks):
        raise InvalidArgument("one labeling per block required")
    sums: dict[tuple[int, int], float] = {}
    hits: dict[tuple[int, int], int] = {}
    for labeling in block_labelings:
        for key, lab in labeling.items():
            sums[key] = sums.get(key, 0.0) + float(lab)
            hits[key] = hits.get(key, 0) + 1
    maps = []
    for rs in region_sets:
        scores = np.zeros(len(rs.regions))
        for info in rs.regions:
            key = (rs.frame_index, info.id)
            if key not in hits:
                raise InvalidArgument(
                    f"no block labeled frame {rs.frame_index}, region {info.id}")
            scores[info.id] = sums[key] / hits[key]
        maps.append(SaliencyMap(frame_index=rs.frame_index,
                                values=scores[rs.labels]))
    return maps


def write_graph_dump(graph: StcrfGraph, path) -> None:
    """Text dump for solver debugging: `v <id> <omega>`, `es <a> <b> <w>`,
    `et <a> <b> <w>` lines."""
    with open(path, "w") as fh:
        for i, v in enumerate(graph.vertices):
            fh.write("v %d %.17g\n" % (i, v.omega))
        for e in graph.spatial_edges:
            fh.write("es %d %d %.17g\n" % (e.u, e.v, e.weight))
        for e in graph.temporal_edges:
            fh.write("et %d %d %.17g\n" % (e.u, e.v, e.weight))


def read_graph_dump(path) -> StcrfGraph:
    vertices: list[Vertex] = []
    spatial: list[Edge] = []
    temporal: list[Edge] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v" and len(parts) == 3:
                    vid = int(parts[1])
                    if vid != len(vertices):
                        raise ValueError
                    vertices.append(Vertex(track_id=vid, frame_index=0,
                                           region_id=vid,
                                           omega=float(parts[2])))
                elif parts[0] in ("es", "et") and len(parts) == 4:
                    edge = Edge(u=int(parts[1]), v=int(parts[2]),
                                kind=SPATIAL if parts[0] == "es" else TEMPORAL,
                                weight=float(parts[3]))
                    (spatial if parts[0] == "es" else temporal).append(edge)
                else:
                    raise ValueError
            except ValueError:
                raise MalformedInput(f"{path}:{lineno}: bad graph dump line")
    return StcrfGraph(vertices=vertices, spatial_edges=spatial,
                      temporal_edges=temporal)
