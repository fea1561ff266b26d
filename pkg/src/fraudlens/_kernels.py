"""Hot numeric kernels, each in a numba and a pure-numpy flavor.

Every public dispatcher here picks the flavor from `_accel.use_numba()`.
The two flavors are algorithmically independent (loop vs. vectorized) and
are tested against each other; keep their contracts in lockstep when
editing either side.

Array conventions: callers pass columns already sorted by (group, time)
together with a `starts` array of group boundaries (len = n_groups + 1).
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, use_numba

NIGHT_START_S = 22 * 3600
NIGHT_END_S = 6 * 3600


# ---------------------------------------------------------------------------
# per-card grouped statistics
# ---------------------------------------------------------------------------


@njit(cache=True)
def _group_stats_nb(starts, ts, amounts, merchants):
    n_groups = len(starts) - 1
    n_txns = np.empty(n_groups, np.int64)
    n_distinct_iat = np.zeros(n_groups, np.int64)
    n_distinct_amt = np.zeros(n_groups, np.int64)
    median_amt = np.zeros(n_groups, np.int64)
    median_iat = np.zeros(n_groups, np.int64)
    var_iat = np.zeros(n_groups, np.float64)
    var_amt = np.zeros(n_groups, np.float64)
    n_merchants = np.zeros(n_groups, np.int64)
    night_frac = np.zeros(n_groups, np.float64)

    for g in range(n_groups):
        s, e = starts[g], starts[g + 1]
        m = e - s
        n_txns[g] = m

        night = 0
        for i in range(s, e):
            tod = ts[i] % 86400
            if tod >= NIGHT_START_S or tod < NIGHT_END_S:
                night += 1
        night_frac[g] = night / m

        amt = np.sort(amounts[s:e])
        distinct = 1
        for i in range(1, m):
            if amt[i] != amt[i - 1]:
                distinct += 1
        n_distinct_amt[g] = distinct
        median_amt[g] = amt[(m - 1) // 2]

        asum = 0.0
        asq = 0.0
        for i in range(s, e):
            a = float(amounts[i])
            asum += a
            asq += a * a
        amean = asum / m
        v = asq / m - amean * amean
        var_amt[g] = v if v > 0.0 else 0.0

        mrc = np.sort(merchants[s:e])
        distinct = 1
        for i in range(1, m):
            if mrc[i] != mrc[i - 1]:
                distinct += 1
        n_merchants[g] = distinct

        if m >= 2:
            iat = np.empty(m - 1, np.int64)
            isum = 0.0
            isq = 0.0
            for i in range(m - 1):
                d = ts[s + i + 1] - ts[s + i]
                iat[i] = d
                isum += d
                isq += float(d) * float(d)
            imean = isum / (m - 1)
            v = isq / (m - 1) - imean * imean
            var_iat[g] = v if v > 0.0 else 0.0
            iat = np.sort(iat)
            distinct = 1
            for i in range(1, m - 1):
                if iat[i] != iat[i - 1]:
                    distinct += 1
            n_distinct_iat[g] = distinct
            median_iat[g] = iat[(m - 2) // 2]

    return (
        n_txns,
        n_distinct_iat,
        n_distinct_amt,
        median_amt,
        median_iat,
        var_iat,
        var_amt,
        n_merchants,
        night_frac,
    )


def _distinct_per_group(gid, values, n_groups):
    order = np.lexsort((values, gid))
    sg = gid[order]
    sv = values[order]
    if len(sv) == 0:
        return np.zeros(n_groups, np.int64), sg, sv
    new = np.empty(len(sv), bool)
    new[0] = True
    new[1:] = (sg[1:] != sg[:-1]) | (sv[1:] != sv[:-1])
    return np.bincount(sg[new], minlength=n_groups).astype(np.int64), sg, sv


def _lower_median_per_group(values_sorted_by_group, counts):
    """values already sorted by (group, value); counts per group (may be 0)."""
    out = np.zeros(len(counts), np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)])
    nz = counts > 0
    idx = starts[:-1][nz] + (counts[nz] - 1) // 2
    out[nz] = values_sorted_by_group[idx]
    return out


def _variance_per_group(gid, values, counts):
    out = np.zeros(len(counts), np.float64)
    nz = counts > 0
    vals = values.astype(np.float64)
    s1 = np.bincount(gid, weights=vals, minlength=len(counts))
    s2 = np.bincount(gid, weights=vals * vals, minlength=len(counts))
    mean = np.zeros(len(counts))
    mean[nz] = s1[nz] / counts[nz]
    out[nz] = s2[nz] / counts[nz] - mean[nz] ** 2
    return np.maximum(out, 0.0)


def _group_stats_np(starts, ts, amounts, merchants):
    n_groups = len(starts) - 1
    sizes = np.diff(starts).astype(np.int64)
    gid = np.repeat(np.arange(n_groups, dtype=np.int64), sizes)

    tod = ts % 86400
    night = (tod >= NIGHT_START_S) | (tod < NIGHT_END_S)
    night_frac = np.bincount(gid, weights=night, minlength=n_groups) / sizes

    n_distinct_amt, sg_a, sv_a = _distinct_per_group(gid, amounts, n_groups)
    median_amt = _lower_median_per_group(sv_a, sizes)
    var_amt = _variance_per_group(gid, amounts, sizes)

    n_merchants, _, _ = _distinct_per_group(gid, merchants, n_groups)

    same = gid[1:] == gid[:-1]
    iat = (ts[1:] - ts[:-1])[same]
    iat_gid = gid[1:][same]
    iat_counts = np.maximum(sizes - 1, 0)
    n_distinct_iat, _, sv_i = _distinct_per_group(iat_gid, iat, n_groups)
    median_iat = _lower_median_per_group(sv_i, iat_counts)
    var_iat = _variance_per_group(iat_gid, iat, iat_counts)

    return (
        sizes,
        n_distinct_iat,
        n_distinct_amt,
        median_amt,
        median_iat,
        var_iat,
        var_amt,
        n_merchants,
        night_frac,
    )


def group_stats(starts, ts, amounts, merchants):
    """Per-group lockstep statistics over (group, time)-sorted columns."""
    if use_numba():
        return _group_stats_nb(starts, ts, amounts, merchants)
    return _group_stats_np(starts, ts, amounts, merchants)


# ---------------------------------------------------------------------------
# 2-D histogram over transformed coordinates
# ---------------------------------------------------------------------------


@njit(cache=True)
def _hist2d_nb(ux, uy, n_bins_x, n_bins_y, x_hi, y_hi):
    counts = np.zeros((n_bins_x, n_bins_y), np.int64)
    for i in range(len(ux)):
        bx = int(ux[i] / x_hi * n_bins_x)
        if bx >= n_bins_x:
            bx = n_bins_x - 1
        by = int(uy[i] / y_hi * n_bins_y)
        if by >= n_bins_y:
            by = n_bins_y - 1
        counts[bx, by] += 1
    return counts


def _hist2d_np(ux, uy, n_bins_x, n_bins_y, x_hi, y_hi):
    bx = np.minimum((ux / x_hi * n_bins_x).astype(np.int64), n_bins_x - 1)
    by = np.minimum((uy / y_hi * n_bins_y).astype(np.int64), n_bins_y - 1)
    flat = np.bincount(bx * n_bins_y + by, minlength=n_bins_x * n_bins_y)
    return flat.reshape(n_bins_x, n_bins_y).astype(np.int64)


def hist2d(ux, uy, n_bins_x, n_bins_y, x_hi, y_hi):
    """Equal-width 2-D counts over [0, x_hi] x [0, y_hi]; top edges inclusive."""
    if use_numba():
        return _hist2d_nb(ux, uy, n_bins_x, n_bins_y, x_hi, y_hi)
    return _hist2d_np(ux, uy, n_bins_x, n_bins_y, x_hi, y_hi)


# ---------------------------------------------------------------------------
# k-core peeling (Batagelj-Zaversnik bucket algorithm)
# ---------------------------------------------------------------------------


def _core_numbers_impl(indptr, indices):
    n = len(indptr) - 1
    deg = np.empty(n, np.int64)
    md = 0
    for v in range(n):
        deg[v] = indptr[v + 1] - indptr[v]
        if deg[v] > md:
            md = deg[v]
    if n == 0:
        return deg

    # counting sort of vertices by degree; bin_[d] = start of degree-d run
    bin_ = np.zeros(md + 1, np.int64)
    for v in range(n):
        bin_[deg[v]] += 1
    start = 0
    for d in range(md + 1):
        cnt = bin_[d]
        bin_[d] = start
        start += cnt
    pos = np.empty(n, np.int64)
    vert = np.empty(n, np.int64)
    for v in range(n):
        pos[v] = bin_[deg[v]]
        vert[pos[v]] = v
        bin_[deg[v]] += 1
    for d in range(md, 0, -1):
        bin_[d] = bin_[d - 1]
    bin_[0] = 0

    # peel in degree order; deg[] decays into the core numbers
    for i in range(n):
        v = vert[i]
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            du = deg[u]
            if du > deg[v]:
                pu = pos[u]
                pw = bin_[du]
                w = vert[pw]
                if u != w:
                    vert[pu] = w
                    vert[pw] = u
                    pos[u] = pw
                    pos[w] = pu
                bin_[du] += 1
                deg[u] = du - 1
    return deg


_core_numbers_nb = njit(cache=True)(_core_numbers_impl)


def core_numbers(indptr, indices):
    """Core number of every node of an undirected CSR graph.

    Degrees count distinct neighbors; `indices` must list each neighbor
    once per node (no multiplicity).
    """
    indptr = np.asarray(indptr, np.int64)
    indices = np.asarray(indices, np.int64)
    if use_numba():
        return _core_numbers_nb(indptr, indices)
    return _core_numbers_impl(indptr, indices)


# ---------------------------------------------------------------------------
# isolation-forest scoring
# ---------------------------------------------------------------------------


@njit(cache=True)
def _path_lengths_nb(X, feat, thresh, left, right, c_leaf, roots):
    n = X.shape[0]
    out = np.zeros(n, np.float64)
    for t in range(len(roots)):
        root = roots[t]
        for i in range(n):
            node = root
            depth = 0.0
            while left[node] >= 0:
                if X[i, feat[node]] < thresh[node]:
                    node = left[node]
                else:
                    node = right[node]
                depth += 1.0
            out[i] += depth + c_leaf[node]
    return out / len(roots)


def _path_lengths_np(X, feat, thresh, left, right, c_leaf, roots):
    n = X.shape[0]
    out = np.zeros(n, np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, np.int64)
        depth = np.zeros(n, np.float64)
        active = left[node] >= 0
        while active.any():
            idx = rows[active]
            cur = node[idx]
            go_left = X[idx, feat[cur]] < thresh[cur]
            node[idx] = np.where(go_left, left[cur], right[cur])
            depth[idx] += 1.0
            active[idx] = left[node[idx]] >= 0
        out += depth + c_leaf[node]
    return out / len(roots)


def forest_path_lengths(X, feat, thresh, left, right, c_leaf, roots):
    """Mean isolation depth of each row of X across the flattened forest."""
    if use_numba():
        return _path_lengths_nb(X, feat, thresh, left, right, c_leaf, roots)
    return _path_lengths_np(X, feat, thresh, left, right, c_leaf, roots)


# ---------------------------------------------------------------------------
# isolation-tree construction (single implementation, compiled twice)
# ---------------------------------------------------------------------------


def _build_tree_impl(
    X, idx, max_depth, u_feat, u_split, feat, thresh, left, right, size
):
    """Grow one isolation tree over X[idx] and return its node count.

    Nodes are laid out in preorder. Randomness comes only from the
    pre-drawn uniforms, consumed one pair per internal node (plus one
    feature draw per constant-feature retry), so any two flavors of this
    function build identical trees.
    """
    d = X.shape[1]
    n_nodes = 0
    draw = 0
    # stack of (start, end, depth, parent_slot); slot -1 root, -2/-3 L/R
    stack_start = np.empty(2 * len(idx) + 2, np.int64)
    stack_end = np.empty(2 * len(idx) + 2, np.int64)
    stack_depth = np.empty(2 * len(idx) + 2, np.int64)
    stack_parent = np.empty(2 * len(idx) + 2, np.int64)
    top = 0
    stack_start[0] = 0
    stack_end[0] = len(idx)
    stack_depth[0] = 0
    stack_parent[0] = -1
    top = 1
    while top > 0:
        top -= 1
        s = stack_start[top]
        e = stack_end[top]
        depth = stack_depth[top]
        parent = stack_parent[top]

        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if left[parent] == -2:
                left[parent] = node
            else:
                right[parent] = node

        m = e - s
        make_leaf = (
            m <= 1
            or depth >= max_depth
            or n_nodes + 2 > len(feat)
            or top + 2 > len(stack_start)
        )
        f = -1
        lo = 0.0
        hi = 0.0
        if not make_leaf:
            # find a feature with spread; give up if the node is constant
            # on every feature or the uniform pool runs dry
            tries = 0
            while tries < d and draw < len(u_feat):
                cand = int(u_feat[draw] * d)
                if cand >= d:
                    cand = d - 1
                draw += 1
                clo = X[idx[s], cand]
                chi = clo
                for i in range(s + 1, e):
                    v = X[idx[i], cand]
                    if v < clo:
                        clo = v
                    elif v > chi:
                        chi = v
                if chi > clo:
                    f = cand
                    lo = clo
                    hi = chi
                    break
                tries += 1
            if f < 0:
                make_leaf = True

        if make_leaf:
            feat[node] = -1
            thresh[node] = 0.0
            left[node] = -1
            right[node] = -1
            size[node] = m
            continue

        p = lo + u_split[draw - 1] * (hi - lo)
        # partition idx[s:e] so values < p come first
        i = s
        j = e - 1
        while i <= j:
            if X[idx[i], f] < p:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feat[node] = f
        thresh[node] = p
        left[node] = -2
        right[node] = -3
        size[node] = m
        # push right then left so the left child is numbered next (preorder)
        stack_start[top] = i
        stack_end[top] = e
        stack_depth[top] = depth + 1
        stack_parent[top] = node
        top += 1
        stack_start[top] = s
        stack_end[top] = i
        stack_depth[top] = depth + 1
        stack_parent[top] = node
        top += 1
    return n_nodes


_build_tree_nb = njit(cache=True)(_build_tree_impl)


def build_tree(X, idx, max_depth, u_feat, u_split, feat, thresh, left, right, size):
    if use_numba():
        return _build_tree_nb(
            X, idx, max_depth, u_feat, u_split, feat, thresh, left, right, size
        )
    return _build_tree_impl(
        X, idx, max_depth, u_feat, u_split, feat, thresh, left, right, size
    )


def warm_up() -> None:
    """Compile the numba kernels on tiny inputs (one-time cost)."""
    if not use_numba():
        return
    starts = np.array([0, 2], np.int64)
    ts = np.array([0, 5], np.int64)
    vals = np.array([1, 2], np.int64)
    _group_stats_nb(starts, ts, vals, vals)
    _hist2d_nb(np.array([0.5]), np.array([0.5]), 2, 2, 1.0, 1.0)
    _core_numbers_nb(np.array([0, 1, 2], np.int64), np.array([1, 0], np.int64))
    X = np.array([[0.0], [1.0]])
    feat = np.full(4, -1, np.int64)
    thresh = np.zeros(4)
    left = np.full(4, -1, np.int64)
    right = np.full(4, -1, np.int64)
    size = np.zeros(4, np.int64)
    _build_tree_nb(
        X,
        np.array([0, 1], np.int64),
        4,
        np.array([0.3, 0.3, 0.3, 0.3]),
        np.array([0.5, 0.5, 0.5, 0.5]),
        feat,
        thresh,
        left,
        right,
        size,
    )
    _path_lengths_nb(
        X,
        feat,
        thresh,
        left,
        right,
        np.zeros(4),
        np.array([0], np.int64),
    )
