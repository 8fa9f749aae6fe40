"""
Country Embedding and Clustering

Classical (Torgerson) multidimensional scaling of distance matrices and
agglomerative dendrograms with deterministic tie-breaking, exported as
scipy linkage matrices, Newick text or nested JSON.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.cluster.hierarchy import cut_tree, to_tree
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateEmbeddingError, InsufficientDataError
from .measures import LagProfile, SimilarityScore
from .models import ActivityCategory
from .spatial import DistanceMatrix

logger = logging.getLogger(__name__)

LINKAGES = ('average', 'single', 'complete')

# Distances closer than this are treated as tied when choosing a merge
MERGE_TIE_TOLERANCE = 1e-9


@dataclass
class Embedding2D:
    """Planar coordinates per label with the eigenvalues that produced them"""
    labels: Tuple[str, ...]
    coordinates: np.ndarray
    eigenvalues: np.ndarray
    strain: float
    floored_eigenvalues: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iso_code": list(self.labels),
            "x": self.coordinates[:, 0],
            "y": self.coordinates[:, 1],
        })

    def metadata(self) -> Dict[str, Any]:
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "strain": float(self.strain),
            "floored_eigenvalues": self.floored_eigenvalues,
        }

    def pairwise_distances(self) -> np.ndarray:
        return squareform(pdist(self.coordinates))


def classical_mds(dist: DistanceMatrix, dims: int = 2) -> Embedding2D:
    """
    Torgerson scaling: double-center the squared distances, B = -1/2 J D^2 J,
    and scale the leading eigenvectors by the square roots of their
    eigenvalues.

    Each axis is oriented so its largest-magnitude coordinate is positive.

    Raises:
        InsufficientDataError: fewer than 3 points
        DegenerateEmbeddingError: fewer than ``dims`` nonnegative eigenvalues,
            or all distances zero
    """
    n = len(dist)
    if n < 3:
        raise InsufficientDataError(f"MDS needs at least 3 points, got {n}")

    centering = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * centering @ (dist.d ** 2) @ centering
    b = (b + b.T) / 2.0

    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    tolerance = 1e-9 * max(1.0, float(np.abs(evals).max()))
    if evals[0] <= tolerance:
        raise DegenerateEmbeddingError(f"All {n} points coincide; nothing to embed")
    if np.count_nonzero(evals >= -tolerance) < dims or evals[dims - 1] < -tolerance:
        raise DegenerateEmbeddingError(f"Fewer than {dims} nonnegative eigenvalues in MDS of {n} points")

    negative = int(np.count_nonzero(evals < -tolerance))
    if negative:
        logger.warning(f"MDS: {negative} negative eigenvalues floored at 0 (distances not Euclidean)")

    top = np.clip(evals[:dims], 0.0, None)
    vectors = evecs[:, :dims].copy()
    for axis in range(dims):
        pivot = int(np.argmax(np.abs(vectors[:, axis])))
        if vectors[pivot, axis] < 0:
            vectors[:, axis] = -vectors[:, axis]

    coordinates = vectors * np.sqrt(top)
    coordinates -= coordinates.mean(axis=0)

    residual = b - coordinates @ coordinates.T
    scale = np.linalg.norm(b)
    strain = float(np.linalg.norm(residual) / scale) if scale > 0 else 0.0
    return Embedding2D(dist.labels, coordinates, top, strain, negative)


def response_features(
    scores: Mapping[str, SimilarityScore],
    profiles: Mapping[str, LagProfile],
    include_parks: bool = True,
) -> DistanceMatrix:
    """
    Euclidean distances between concatenated per-category cosine and lag
    vectors, each feature z-scored across countries.

    Countries lacking either measure for any used category are left out.
    A constant feature contributes zero after scaling.
    """
    categories = ActivityCategory.ordered() if include_parks else ActivityCategory.non_parks()
    labels, rows = [], []
    for code in sorted(set(scores) & set(profiles)):
        cosine = scores[code].per_category
        lags = profiles[code].per_category
        if not all(c in cosine and c in lags for c in categories):
            logger.info(f"{code}: incomplete cosine/lag features, left out of embedding")
            continue
        labels.append(code)
        rows.append([cosine[c].cosine for c in categories] + [float(lags[c]) for c in categories])
    if len(labels) < 2:
        raise InsufficientDataError(f"Only {len(labels)} countries with complete cosine and lag features")

    features = np.asarray(rows, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        scaled = stats.zscore(features, axis=0)
    scaled = np.nan_to_num(scaled, nan=0.0, posinf=0.0, neginf=0.0)
    return DistanceMatrix(tuple(labels), squareform(pdist(scaled)))


@dataclass
class Merge:
    """One agglomeration step; ids follow scipy's convention (leaves 0..n-1, new clusters n, n+1, ...)"""
    left: int
    right: int
    height: float
    size: int


@dataclass
class Dendrogram:
    leaves: Tuple[str, ...]
    merges: List[Merge] = field(default_factory=list)
    linkage: str = 'average'

    def __post_init__(self):
        self.leaves = tuple(self.leaves)
        if len(self.merges) != max(len(self.leaves) - 1, 0):
            raise ValueError(f"{len(self.leaves)} leaves need {len(self.leaves) - 1} merges, got {len(self.merges)}")

    @property
    def heights(self) -> List[float]:
        return [m.height for m in self.merges]

    def linkage_matrix(self) -> np.ndarray:
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)

    def members(self, cluster_id: int) -> List[str]:
        """Leaf labels under a cluster id, sorted"""
        n = len(self.leaves)
        stack, found = [cluster_id], []
        while stack:
            node = stack.pop()
            if node < n:
                found.append(self.leaves[node])
            else:
                merge = self.merges[node - n]
                stack.extend((merge.left, merge.right))
        return sorted(found)

    def merge_sets(self) -> List[Tuple[Tuple[str, ...], Tuple[str, ...], float]]:
        """Each merge as the two member sets it joined, for comparison across implementations"""
        result = []
        for merge in self.merges:
            a = tuple(self.members(merge.left))
            b = tuple(self.members(merge.right))
            result.append((min(a, b), max(a, b), merge.height))
        return result

    def cut_clusters(self, k: int) -> Dict[str, int]:
        """Membership for exactly k clusters, numbered from 1 in order of first leaf"""
        n = len(self.leaves)
        if not 1 <= k <= n:
            raise ValueError(f"Cluster count {k} outside [1, {n}]")
        if n == 1:
            return {self.leaves[0]: 1}
        assignment = cut_tree(self.linkage_matrix(), n_clusters=k).ravel()
        renumber: Dict[int, int] = {}
        for label in assignment:
            renumber.setdefault(int(label), len(renumber) + 1)
        return {leaf: renumber[int(label)] for leaf, label in zip(self.leaves, assignment)}

    def to_nested_dict(self) -> Dict[str, Any]:
        if len(self.leaves) == 1:
            return {"name": self.leaves[0], "height": 0.0}
        return self._node_dict(to_tree(self.linkage_matrix()))

    def _node_dict(self, node) -> Dict[str, Any]:
        if node.is_leaf():
            return {"name": self.leaves[node.id], "height": 0.0}
        return {
            "height": float(node.dist),
            "size": int(node.count),
            "children": [self._node_dict(node.left), self._node_dict(node.right)],
        }

    def to_newick(self) -> str:
        """Newick text with branch lengths equal to the drop in merge height"""
        if len(self.leaves) == 1:
            return f"{self.leaves[0]};"
        root = to_tree(self.linkage_matrix())

        def render(node, parent_height: float) -> str:
            length = f"{parent_height - node.dist:.6f}"
            if node.is_leaf():
                return f"{self.leaves[node.id]}:{length}"
            return f"({render(node.left, node.dist)},{render(node.right, node.dist)}):{length}"

        return f"({render(root.left, root.dist)},{render(root.right, root.dist)});"


def _lance_williams(linkage: str, d_ki: np.ndarray, d_kj: np.ndarray, n_i: int, n_j: int) -> np.ndarray:
    if linkage == 'single':
        return np.minimum(d_ki, d_kj)
    if linkage == 'complete':
        return np.maximum(d_ki, d_kj)
    return (n_i * d_ki + n_j * d_kj) / (n_i + n_j)


def agglomerative_cluster(dist: DistanceMatrix, linkage: str = 'average') -> Dendrogram:
    """
    Agglomerative clustering; average linkage is UPGMA.

    At each step the closest pair of active clusters merges. Distances
    within MERGE_TIE_TOLERANCE of the minimum count as tied, and the tie goes
    to the pair whose smallest member labels are lexicographically smallest.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"Unknown linkage {linkage!r}; expected one of {', '.join(LINKAGES)}")
    n = len(dist)
    if n < 2:
        raise InsufficientDataError(f"Clustering needs at least 2 labels, got {n}")

    total = 2 * n - 1
    d = np.full((total, total), np.inf)
    d[:n, :n] = dist.d
    sizes = {i: 1 for i in range(n)}
    keys = {i: dist.labels[i] for i in range(n)}
    active = list(range(n))
    merges: List[Merge] = []

    for step in range(n - 1):
        ids = np.array(active)
        sub = d[np.ix_(ids, ids)]
        upper = np.triu_indices(len(ids), k=1)
        values = sub[upper]
        best = values.min()
        tied = np.nonzero(values <= best + MERGE_TIE_TOLERANCE)[0]
        candidates = [(int(ids[upper[0][t]]), int(ids[upper[1][t]])) for t in tied]
        i, j = min(candidates, key=lambda pair: tuple(sorted((keys[pair[0]], keys[pair[1]]))))
        height = float(d[i, j])

        new_id = n + step
        others = np.array([k for k in active if k not in (i, j)], dtype=int)
        if len(others):
            updated = _lance_williams(linkage, d[others, i], d[others, j], sizes[i], sizes[j])
            d[others, new_id] = updated
            d[new_id, others] = updated
        sizes[new_id] = sizes[i] + sizes[j]
        keys[new_id] = min(keys[i], keys[j])
        merges.append(Merge(min(i, j), max(i, j), height, sizes[new_id]))
        active = [k for k in active if k not in (i, j)] + [new_id]

    heights = [m.height for m in merges]
    if any(b < a - MERGE_TIE_TOLERANCE for a, b in zip(heights, heights[1:])):
        logger.warning(f"{linkage} linkage produced non-monotone merge heights")
    return Dendrogram(dist.labels, merges, linkage)


def merge_table(dendrogram: Dendrogram) -> pd.DataFrame:
    rows = [{"step": i + 1, "cluster_a": ';'.join(a), "cluster_b": ';'.join(b), "height": h}
            for i, (a, b, h) in enumerate(dendrogram.merge_sets())]
    return pd.DataFrame(rows, columns=["step", "cluster_a", "cluster_b", "height"])
