"""
Covariate clusters from a fitted model, partition agreement and similarity builders.

Two covariates share an edge in component ``h`` when the fitted auxiliary
copies agree exactly, ``z[h, j, k] == z[h, k, j]``.  The fused branch of the
z-update writes the same floating-point value to both entries, so exact
comparison is the intended test.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import DomainError

EXPORT_HEADER = "component,j,k"


@dataclass
class ClusterGraph:
    """Zero-based edges ``(j, k)`` with ``j < k`` and blocks, one list per component."""

    p: int
    edges: list
    partitions: list

    @property
    def H(self) -> int:
        return len(self.edges)

    def __eq__(self, other):
        return (
            isinstance(other, ClusterGraph)
            and self.p == other.p
            and [sorted(e) for e in self.edges] == [sorted(e) for e in other.edges]
            and [_canonical(b) for b in self.partitions] == [_canonical(b) for b in other.partitions]
        )


def _canonical(partition):
    return sorted(sorted(block) for block in partition)


def components_of(edges, p: int) -> list[list[int]]:
    """Connected components of an undirected edge list over ``p`` nodes."""
    if edges:
        rows, cols = zip(*edges)
    else:
        rows, cols = (), ()
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(p, p))
    _, lab = connected_components(adj, directed=False)
    blocks: dict[int, list[int]] = {}
    for j, c in enumerate(lab):
        blocks.setdefault(c, []).append(j)
    return sorted(blocks.values(), key=lambda b: b[0])


def graph_from_z(z) -> ClusterGraph:
    """Edges where ``z[h, j, k] == z[h, k, j]`` exactly, for an (H, p, p) array."""
    z = np.asarray(z)
    H, p, _ = z.shape
    edges, parts = [], []
    ju, ku = np.triu_indices(p, k=1)
    for h in range(H):
        hit = z[h, ju, ku] == z[h, ku, ju]
        e = [(int(j), int(k)) for j, k in zip(ju[hit], ku[hit])]
        edges.append(e)
        parts.append(components_of(e, p))
    return ClusterGraph(p, edges, parts)


def extract_clusters(result) -> ClusterGraph:
    return graph_from_z(result.state.z)


def _overlap(estimated, truth):
    p_est = {j: i for i, block in enumerate(estimated) for j in block}
    M = np.zeros((len(truth), len(estimated)), dtype=int)
    for t, block in enumerate(truth):
        for j in block:
            M[t, p_est[j]] += 1
    return M


def _best_exhaustive(M):
    T, E = M.shape
    slots = list(range(E)) + [None] * T
    best = 0
    for perm in itertools.permutations(slots, T):
        total = sum(M[t, e] for t, e in enumerate(perm) if e is not None)
        best = max(best, total)
    return best


def _best_hungarian(M):
    rows, cols = linear_sum_assignment(M, maximize=True)
    return int(M[rows, cols].sum())


def ccp(estimated, truth) -> float:
    """
    Correctly clustered proportion.

    Each true block is matched to a distinct estimated block so that the
    total overlap is maximal; the matched overlap is divided by ``p``.
    """
    cover_e = sorted(j for b in estimated for j in b)
    cover_t = sorted(j for b in truth for j in b)
    if cover_e != cover_t or len(set(cover_t)) != len(cover_t):
        raise DomainError("partitions must cover the same covariates exactly once")
    p = len(cover_t)
    M = _overlap(estimated, truth)
    T, E = M.shape
    small = T <= 8 and np.prod(range(E + 1, E + T + 1), dtype=float) <= 2e5
    best = _best_exhaustive(M) if small else _best_hungarian(M)
    return best / p


def cosine_similarity_matrix(design) -> np.ndarray:
    """Column cosine similarities, negatives set to 0 and the diagonal zeroed."""
    X = np.asarray(design, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DomainError(f"column {zero[0]} is identically zero")
    S = (X.T @ X) / np.outer(norms, norms)
    S = np.clip(0.5 * (S + S.T), 0.0, None)
    np.fill_diagonal(S, 0.0)
    return S


def constant_similarity_matrix(p: int, value: float) -> np.ndarray:
    if p < 1:
        raise DomainError("p must be at least 1")
    if value < 0:
        raise DomainError("similarity must be nonnegative")
    S = np.full((p, p), float(value))
    np.fill_diagonal(S, 0.0)
    return S


def export_graph(graph: ClusterGraph) -> str:
    """
    Edge-list text: a header, one ``component,j,k`` line per edge, then one
    ``block,component,members`` line per block with space-separated members.
    Indices are one-based.
    """
    lines = [EXPORT_HEADER]
    for h, edges in enumerate(graph.edges):
        for j, k in sorted(edges):
            lines.append(f"{h + 1},{j + 1},{k + 1}")
    for h, part in enumerate(graph.partitions):
        for block in _canonical(part):
            lines.append(f"block,{h + 1}," + " ".join(str(j + 1) for j in block))
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> ClusterGraph:
    lines = text.splitlines()
    if not lines or lines[0].strip() != EXPORT_HEADER:
        raise DomainError("missing edge-list header")
    edges: dict[int, list] = {}
    parts: dict[int, list] = {}
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        try:
            if fields[0] == "block":
                h = int(fields[1]) - 1
                parts.setdefault(h, []).append([int(s) - 1 for s in fields[2].split()])
                edges.setdefault(h, [])
            else:
                h, j, k = (int(s) - 1 for s in fields)
                edges.setdefault(h, []).append((j, k))
        except (ValueError, IndexError) as exc:
            raise DomainError(f"line {n}: cannot parse {line!r}") from exc
    H = max(list(edges) + list(parts), default=-1) + 1
    p = max((j for part in parts.values() for b in part for j in b), default=-1) + 1
    return ClusterGraph(
        p, [edges.get(h, []) for h in range(H)], [parts.get(h, []) for h in range(H)]
    )
