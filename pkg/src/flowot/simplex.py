"""Dense-table network simplex for the bipartite transport problem.

Two complete lanes implement the identical algorithm:

* a scalar kernel compiled with numba (default when numba imports);
* a numpy lane with vectorized pricing and python tree surgery.

Pivot rules are pinned so both lanes generate the same pivot sequence and
therefore the same plans, not just the same values: northwest-corner initial
basis, most-negative reduced cost pricing with lowest flat-index tie-break,
Bland's rule (first eligible arc) after a degenerate streak, leaving arc by
minimum flow with lowest flat-index tie-break.  Reduced costs are evaluated
as (C[i,j] - u[i]) - v[j] in both lanes so the float comparisons agree
bit-for-bit.  The final flows are recomputed from the exact marginals by
stripping leaves of the basis tree, in shared code.

Node layout: sources 0..m-1, sinks m..m+n-1, root is node 0.  ``parent``
encodes the basis tree; the flow on the arc between a node and its parent is
stored at the child (``peg``).
"""

import numpy as np

from . import backend
from .errors import ConvergenceError

_STATUS_OK = 0
_STATUS_ITER = 1
_INT_MAX = 9223372036854775807


def _kernel(C, a, b, tol, max_iters, bland_after):
    """Full pivot loop in scalar form; compiled by numba on the jit lane.

    Returns (parent, pot, pivots, status).  The numpy lane reproduces this
    loop step for step with vectorized pricing; keep the two in lock-step
    when touching pivot rules (the lane-equivalence tests enforce it).
    """
    m, n = C.shape
    V = m + n
    parent = np.full(V, -1, np.int64)
    peg = np.zeros(V, np.float64)

    # northwest-corner starting basis, laid down directly as a tree path
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    q = min(ra[0], rb[0])
    parent[m] = 0
    peg[m] = q
    ra[0] -= q
    rb[0] -= q
    for _step in range(m + n - 2):
        if i < m - 1 and (ra[i] <= 0.0 or j == n - 1):
            i += 1
            q = min(ra[i], rb[j])
            parent[i] = m + j
            peg[i] = q
        else:
            j += 1
            q = min(ra[i], rb[j])
            parent[m + j] = i
            peg[m + j] = q
        ra[i] -= q
        rb[j] -= q

    pot = np.zeros(V, np.float64)
    ch = np.empty(max(V - 1, 1), np.int64)
    ch_off = np.empty(V + 1, np.int64)
    pos = np.empty(V, np.int64)
    stack = np.empty(V, np.int64)
    stamp = np.zeros(V, np.int64)
    cyc_child = np.empty(V, np.int64)
    cyc_sign = np.empty(V, np.int64)

    pivots = 0
    streak = 0
    stamp_id = 0
    status = 1
    while True:
        # tree potentials: u[0] = 0, u[i] + v[j] = C[i, j] on basis arcs
        for v in range(V):
            pos[v] = 0
        for v in range(V):
            p = parent[v]
            if p >= 0:
                pos[p] += 1
        ch_off[0] = 0
        for v in range(V):
            ch_off[v + 1] = ch_off[v] + pos[v]
            pos[v] = ch_off[v]
        for v in range(V):
            p = parent[v]
            if p >= 0:
                ch[pos[p]] = v
                pos[p] += 1
        pot[0] = 0.0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            x = stack[sp]
            base = pot[x]
            for t in range(ch_off[x], ch_off[x + 1]):
                w = ch[t]
                if w < m:
                    cw = C[w, parent[w] - m]
                else:
                    cw = C[parent[w], w - m]
                pot[w] = cw - base
                stack[sp] = w
                sp += 1

        # pricing
        flat = -1
        if streak > bland_after:
            for i2 in range(m):
                ui = pot[i2]
                for j2 in range(n):
                    r = (C[i2, j2] - ui) - pot[m + j2]
                    if r < -tol:
                        flat = i2 * n + j2
                        break
                if flat >= 0:
                    break
            if flat < 0:
                status = 0
                break
        else:
            best = np.inf
            for i2 in range(m):
                ui = pot[i2]
                for j2 in range(n):
                    r = (C[i2, j2] - ui) - pot[m + j2]
                    if r < best:
                        best = r
                        flat = i2 * n + j2
            if best >= -tol:
                status = 0
                break
        if pivots >= max_iters:
            break
        ei = flat // n
        ej = flat - ei * n

        # cycle through the tree: ancestors of ei, then climb from the sink
        stamp_id += 1
        x = ei
        while x >= 0:
            stamp[x] = stamp_id
            x = parent[x]
        lca = m + ej
        while stamp[lca] != stamp_id:
            lca = parent[lca]
        k = 0
        sign = -1
        x = ei
        while x != lca:
            cyc_child[k] = x
            cyc_sign[k] = sign
            k += 1
            sign = -sign
            x = parent[x]
        sign = -1
        x = m + ej
        while x != lca:
            cyc_child[k] = x
            cyc_sign[k] = sign
            k += 1
            sign = -sign
            x = parent[x]

        # ratio test on the reverse arcs
        theta = np.inf
        lv = -1
        lv_flat = _INT_MAX
        for t in range(k):
            if cyc_sign[t] < 0:
                w = cyc_child[t]
                f = peg[w]
                if w < m:
                    wflat = w * n + (parent[w] - m)
                else:
                    wflat = parent[w] * n + (w - m)
                if f < theta or (f == theta and wflat < lv_flat):
                    theta = f
                    lv = w
                    lv_flat = wflat
        for t in range(k):
            peg[cyc_child[t]] += cyc_sign[t] * theta

        # re-hang: reverse the parent chain from the entering endpoint that
        # sits in the cut subtree down to the leaving arc's child
        x = ei
        inside = False
        while x >= 0:
            if x == lv:
                inside = True
                break
            x = parent[x]
        if inside:
            e_in = ei
            e_out = m + ej
        else:
            e_in = m + ej
            e_out = ei
        carry_p = e_out
        carry_f = theta
        cur = e_in
        while True:
            nxt = parent[cur]
            f_old = peg[cur]
            parent[cur] = carry_p
            peg[cur] = carry_f
            if cur == lv:
                break
            carry_p = cur
            carry_f = f_old
            cur = nxt

        if theta == 0.0:
            streak += 1
        else:
            streak = 0
        pivots += 1
    return parent, pot, pivots, status


if backend.HAS_NUMBA:
    from numba import njit

    _kernel_numba = njit(cache=True)(_kernel)

    def solve_dense_numba(C, a, b, tol, max_iters, bland_after):
        """Numba lane: the whole pivot loop as one compiled kernel."""
        return _kernel_numba(
            np.ascontiguousarray(C, dtype=float),
            np.ascontiguousarray(a, dtype=float),
            np.ascontiguousarray(b, dtype=float),
            float(tol),
            int(max_iters),
            int(bland_after),
        )

else:
    solve_dense_numba = None


def _compute_potentials(C, parent, pot, ch, ch_off, pos, stack):
    m, n = C.shape
    V = m + n
    pos[:] = 0
    np.add.at(pos, parent[parent >= 0], 1)
    np.cumsum(pos, out=ch_off[1:])
    ch_off[0] = 0
    pos[:] = ch_off[:V]
    for v in range(V):
        p = parent[v]
        if p >= 0:
            ch[pos[p]] = v
            pos[p] += 1
    pot[0] = 0.0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        x = stack[sp]
        base = pot[x]
        for t in range(ch_off[x], ch_off[x + 1]):
            w = ch[t]
            if w < m:
                cw = C[w, parent[w] - m]
            else:
                cw = C[parent[w], w - m]
            pot[w] = cw - base
            stack[sp] = w
            sp += 1


def _pivot_once(C, parent, peg, stamp, stamp_id, cyc_child, cyc_sign, ei, ej):
    """One pivot of the numpy lane; mirrors the kernel's tree surgery."""
    m, n = C.shape
    x = ei
    while x >= 0:
        stamp[x] = stamp_id
        x = parent[x]
    lca = m + ej
    while stamp[lca] != stamp_id:
        lca = parent[lca]
    k = 0
    sign = -1
    x = ei
    while x != lca:
        cyc_child[k] = x
        cyc_sign[k] = sign
        k += 1
        sign = -sign
        x = parent[x]
    sign = -1
    x = m + ej
    while x != lca:
        cyc_child[k] = x
        cyc_sign[k] = sign
        k += 1
        sign = -sign
        x = parent[x]

    theta = np.inf
    lv = -1
    lv_flat = _INT_MAX
    for t in range(k):
        if cyc_sign[t] < 0:
            w = cyc_child[t]
            f = peg[w]
            if w < m:
                wflat = w * n + (parent[w] - m)
            else:
                wflat = parent[w] * n + (w - m)
            if f < theta or (f == theta and wflat < lv_flat):
                theta = f
                lv = w
                lv_flat = wflat
    for t in range(k):
        peg[cyc_child[t]] += cyc_sign[t] * theta

    x = ei
    inside = False
    while x >= 0:
        if x == lv:
            inside = True
            break
        x = parent[x]
    if inside:
        e_in, e_out = ei, m + ej
    else:
        e_in, e_out = m + ej, ei
    carry_p = e_out
    carry_f = theta
    cur = e_in
    while True:
        nxt = parent[cur]
        f_old = peg[cur]
        parent[cur] = carry_p
        peg[cur] = carry_f
        if cur == lv:
            break
        carry_p = cur
        carry_f = f_old
        cur = nxt
    return theta


def solve_dense_numpy(C, a, b, tol, max_iters, bland_after):
    """Numpy lane: vectorized pricing, python tree ops."""
    C = np.ascontiguousarray(C, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    m, n = C.shape
    V = m + n
    parent = np.full(V, -1, dtype=np.int64)
    peg = np.zeros(V, dtype=float)

    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    q = min(ra[0], rb[0])
    parent[m] = 0
    peg[m] = q
    ra[0] -= q
    rb[0] -= q
    for _step in range(m + n - 2):
        if i < m - 1 and (ra[i] <= 0.0 or j == n - 1):
            i += 1
            q = min(ra[i], rb[j])
            parent[i] = m + j
            peg[i] = q
        else:
            j += 1
            q = min(ra[i], rb[j])
            parent[m + j] = i
            peg[m + j] = q
        ra[i] -= q
        rb[j] -= q

    pot = np.zeros(V, dtype=float)
    ch = np.empty(max(V - 1, 1), dtype=np.int64)
    ch_off = np.empty(V + 1, dtype=np.int64)
    pos = np.empty(V, dtype=np.int64)
    stack = np.empty(V, dtype=np.int64)
    stamp = np.zeros(V, dtype=np.int64)
    cyc_child = np.empty(V, dtype=np.int64)
    cyc_sign = np.empty(V, dtype=np.int64)
    rbuf = np.empty_like(C)

    pivots = 0
    streak = 0
    stamp_id = 0
    status = _STATUS_ITER
    while True:
        _compute_potentials(C, parent, pot, ch, ch_off, pos, stack)
        np.subtract(C, pot[:m, None], out=rbuf)
        rbuf -= pot[None, m:]
        flat_view = rbuf.ravel()
        if streak > bland_after:
            mask = flat_view < -tol
            if not mask.any():
                status = _STATUS_OK
                break
            flat = int(np.argmax(mask))
        else:
            flat = int(np.argmin(flat_view))
            if flat_view[flat] >= -tol:
                status = _STATUS_OK
                break
        if pivots >= max_iters:
            break
        ei = flat // n
        ej = flat - ei * n
        stamp_id += 1
        theta = _pivot_once(
            C, parent, peg, stamp, stamp_id, cyc_child, cyc_sign, ei, ej
        )
        streak = streak + 1 if theta == 0.0 else 0
        pivots += 1
    return parent, pot, pivots, status


def _leaf_strip(parent, m, n, a, b):
    """Recompute basis flows exactly from the marginals by stripping leaves."""
    V = m + n
    s = np.concatenate([np.asarray(a, float), -np.asarray(b, float)])
    nchild = np.zeros(V, dtype=np.int64)
    for v in range(1, V):
        nchild[parent[v]] += 1
    queue = [v for v in range(1, V) if nchild[v] == 0]
    rows = np.empty(V - 1, dtype=np.int64)
    cols = np.empty(V - 1, dtype=np.int64)
    mass = np.empty(V - 1, dtype=float)
    head = 0
    out = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        p = parent[v]
        if v < m:
            rows[out], cols[out], mass[out] = v, p - m, s[v]
        else:
            rows[out], cols[out], mass[out] = p, v - m, -s[v]
        out += 1
        s[p] += s[v]
        nchild[p] -= 1
        if nchild[p] == 0 and p != 0:
            queue.append(p)
    return rows, cols, mass


def solve_dense(C, a, b, tol=None, max_iters=None, force_lane=None):
    """Solve the dense transport problem; returns basis flows and potentials.

    Output: (rows, cols, mass, u, v, pivots) with ``mass`` the exact basic
    flows recomputed from the marginals (tiny negative roundoff clamped to
    zero) and (u, v) the unnormalized tree potentials (u[0] = 0).
    """
    C = np.ascontiguousarray(C, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    m, n = C.shape
    if tol is None:
        tol = 1e-12 * (1.0 + float(np.max(np.abs(C))))
    if max_iters is None:
        max_iters = 400 * (m + n)
    bland_after = 4 * (m + n)

    lane = force_lane or backend.active_backend()
    if lane == "numba" and solve_dense_numba is not None:
        parent, pot, pivots, status = solve_dense_numba(
            C, a, b, tol, max_iters, bland_after
        )
    else:
        parent, pot, pivots, status = solve_dense_numpy(
            C, a, b, tol, max_iters, bland_after
        )
    if status != _STATUS_OK:
        raise ConvergenceError(
            f"network simplex hit the iteration limit ({max_iters} pivots)"
        )
    rows, cols, mass = _leaf_strip(parent, m, n, a, b)
    floor = -1e-12 * (1.0 + float(max(a.max(), b.max())))
    if np.any(mass < floor):
        raise ConvergenceError(
            f"basis produced negative flow {mass.min():.3e}; solver drift"
        )
    np.maximum(mass, 0.0, out=mass)
    return rows, cols, mass, pot[:m].copy(), pot[m:].copy(), pivots
