"""Compiled inner loops.

Every kernel takes a neighbour table ``nbr`` of shape ``(n_sites, degree)``
with ``-1`` marking a missing neighbour, so tori, open boxes and graphs share
one code path.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True)
def label_uf(occ, nbr):
    """Union-find labelling of occupied sites.

    Returns ``(label, index, sizes)``: ``label`` is the smallest site id in
    the cluster (-1 when vacant), ``index`` numbers clusters 0.. in order of
    their smallest site, ``sizes[index]`` is the cluster size.
    """
    n = occ.shape[0]
    deg = nbr.shape[1]
    parent = np.arange(n)
    rank_size = np.ones(n, dtype=np.int64)
    for i in range(n):
        if not occ[i]:
            continue
        for c in range(deg):
            j = nbr[i, c]
            if j <= i or not occ[j]:
                continue
            ri = _find(parent, i)
            rj = _find(parent, j)
            if ri == rj:
                continue
            # union by size
            if rank_size[ri] < rank_size[rj]:
                ri, rj = rj, ri
            parent[rj] = ri
            rank_size[ri] += rank_size[rj]
    label = np.full(n, -1, dtype=np.int64)
    index = np.full(n, -1, dtype=np.int64)
    root_index = np.full(n, -1, dtype=np.int64)
    root_label = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(n, dtype=np.int64)
    n_clusters = 0
    for i in range(n):
        if not occ[i]:
            continue
        r = _find(parent, i)
        if root_index[r] < 0:
            root_index[r] = n_clusters
            root_label[r] = i
            n_clusters += 1
        label[i] = root_label[r]
        index[i] = root_index[r]
        sizes[root_index[r]] += 1
    return label, index, sizes[:n_clusters].copy()


@njit(cache=True)
def wrap_bfs(occ, nbr, disp):
    """Breadth-first labelling on a torus that also detects wrapping.

    ``disp[c]`` is the lattice displacement of neighbour column ``c``.  Each
    site gets an unwrapped coordinate relative to its cluster's first site;
    meeting an already-visited site at a different unwrapped coordinate
    means the cluster winds around the torus.
    Returns ``(index, wraps)`` with ``wraps`` indexed by cluster.
    """
    n = occ.shape[0]
    deg = nbr.shape[1]
    ndim = disp.shape[1]
    index = np.full(n, -1, dtype=np.int64)
    pos = np.zeros((n, ndim), dtype=np.int64)
    wraps = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    n_clusters = 0
    for s in range(n):
        if not occ[s] or index[s] >= 0:
            continue
        cid = n_clusters
        n_clusters += 1
        index[s] = cid
        for a in range(ndim):
            pos[s, a] = 0
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        while head < tail:
            i = queue[head]
            head += 1
            for c in range(deg):
                j = nbr[i, c]
                if j < 0 or not occ[j]:
                    continue
                if index[j] < 0:
                    index[j] = cid
                    for a in range(ndim):
                        pos[j, a] = pos[i, a] + disp[c, a]
                    queue[tail] = j
                    tail += 1
                elif not wraps[cid]:
                    for a in range(ndim):
                        if pos[j, a] != pos[i, a] + disp[c, a]:
                            wraps[cid] = True
                            break
    return index, wraps[:n_clusters].copy()


@njit(cache=True)
def tree_ball_flags(nbr, radius):
    """For each node, whether its radius-ball induces a cycle-free subgraph.

    A connected induced subgraph is a tree iff it has one edge fewer than
    nodes; edges are counted from both ends.
    """
    n = nbr.shape[0]
    deg = nbr.shape[1]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    flags = np.zeros(n, dtype=np.bool_)
    for s in range(n):
        head = 0
        tail = 0
        queue[tail] = s
        tail += 1
        dist[s] = 0
        while head < tail:
            i = queue[head]
            head += 1
            if dist[i] == radius:
                continue
            for c in range(deg):
                j = nbr[i, c]
                if j >= 0 and dist[j] < 0:
                    dist[j] = dist[i] + 1
                    queue[tail] = j
                    tail += 1
        ends = 0
        for q in range(tail):
            i = queue[q]
            for c in range(deg):
                j = nbr[i, c]
                if j >= 0 and dist[j] >= 0:
                    ends += 1
        flags[s] = ends == 2 * (tail - 1)
        for q in range(tail):
            dist[queue[q]] = -1
    return flags


@njit(cache=True)
def ball_nodes(nbr, s, radius):
    n = nbr.shape[0]
    deg = nbr.shape[1]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 1
    queue[0] = s
    dist[s] = 0
    while head < tail:
        i = queue[head]
        head += 1
        if dist[i] == radius:
            continue
        for c in range(deg):
            j = nbr[i, c]
            if j >= 0 and dist[j] < 0:
                dist[j] = dist[i] + 1
                queue[tail] = j
                tail += 1
    return np.sort(queue[:tail])


@njit(cache=True)
def capped_kill(occ, nbr, landing, cap):
    """Sites within ``cap`` steps of an occupied landing site, moving through
    occupied sites only (multi-source BFS)."""
    n = occ.shape[0]
    deg = nbr.shape[1]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tail = 0
    for i in range(n):
        if occ[i] and landing[i]:
            dist[i] = 0
            queue[tail] = i
            tail += 1
    head = 0
    while head < tail:
        i = queue[head]
        head += 1
        if dist[i] == cap:
            continue
        for c in range(deg):
            j = nbr[i, c]
            if j >= 0 and occ[j] and dist[j] < 0:
                dist[j] = dist[i] + 1
                queue[tail] = j
                tail += 1
    return dist >= 0


@njit(cache=True)
def reaches(occ, nbr, s, target):
    """Whether the occupied cluster of ``s`` contains a ``target`` site."""
    if not occ[s]:
        return False
    n = occ.shape[0]
    deg = nbr.shape[1]
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    queue[0] = s
    seen[s] = True
    head = 0
    tail = 1
    while head < tail:
        i = queue[head]
        head += 1
        if target[i]:
            return True
        for c in range(deg):
            j = nbr[i, c]
            if j >= 0 and occ[j] and not seen[j]:
                seen[j] = True
                queue[tail] = j
                tail += 1
    return False
