"""Low-level optimal transport solvers.

Hot loops are compiled with numba when it is available; the same code
runs interpreted otherwise.  Public wrappers with validation live in
:mod:`dabench.mapping`.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _northwest_corner(a, b, brow, bcol, bmass):
    """Initial basic feasible solution; returns the number of basic cells."""
    ns = a.shape[0]
    nt = b.shape[0]
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    k = 0
    while True:
        m = ra[i] if ra[i] < rb[j] else rb[j]
        brow[k] = i
        bcol[k] = j
        bmass[k] = m
        ra[i] -= m
        rb[j] -= m
        k += 1
        last = i == ns - 1 and j == nt - 1
        if last:
            break
        # on simultaneous exhaustion move right with a degenerate cell,
        # unless at the last column, keeping exactly ns+nt-1 basic cells
        if ra[i] <= rb[j] and i < ns - 1:
            i += 1
        else:
            j += 1
    return k


@njit(cache=True)
def _tree_masses(a, b, brow, bcol, nb, bmass):
    """Recompute the unique flow carried by a spanning-tree basis.

    Leaf elimination; returns False if the basis is not a valid tree or
    the flow would be negative beyond rounding error.
    """
    ns = a.shape[0]
    nt = b.shape[0]
    n_nodes = ns + nt
    deg = np.zeros(n_nodes, dtype=np.int64)
    rem = np.empty(n_nodes)
    for i in range(ns):
        rem[i] = a[i]
    for j in range(nt):
        rem[ns + j] = b[j]
    for k in range(nb):
        deg[brow[k]] += 1
        deg[ns + bcol[k]] += 1
    # adjacency in CSR form
    offs = np.zeros(n_nodes + 1, dtype=np.int64)
    for v in range(n_nodes):
        offs[v + 1] = offs[v] + deg[v]
    fill = offs[:-1].copy()
    adj = np.empty(2 * nb, dtype=np.int64)
    for k in range(nb):
        u = brow[k]
        v = ns + bcol[k]
        adj[fill[u]] = k
        fill[u] += 1
        adj[fill[v]] = k
        fill[v] += 1
    alive = np.ones(nb, dtype=np.bool_)
    live_deg = deg.copy()
    stack = np.empty(n_nodes, dtype=np.int64)
    top = 0
    for v in range(n_nodes):
        if live_deg[v] == 1:
            stack[top] = v
            top += 1
    processed = 0
    while top > 0:
        top -= 1
        v = stack[top]
        if live_deg[v] != 1:
            continue
        # find the single live incident cell
        cell = -1
        for p in range(offs[v], offs[v + 1]):
            if alive[adj[p]]:
                cell = adj[p]
                break
        if cell < 0:
            continue
        flow = rem[v]
        if flow < -1e-9:
            return False
        if flow < 0.0:
            flow = 0.0
        bmass[cell] = flow
        alive[cell] = False
        other = ns + bcol[cell] if v == brow[cell] else brow[cell]
        rem[v] = 0.0
        rem[other] -= flow
        live_deg[v] -= 1
        live_deg[other] -= 1
        processed += 1
        if live_deg[other] == 1:
            stack[top] = other
            top += 1
    return processed == nb


@njit(cache=True)
def _solve_simplex(C, a, b, brow, bcol, bmass, nb, max_iter, tol):
    """Transportation simplex main loop on an initial basic solution.

    Entering variable: most negative reduced cost (switches to Bland's
    first-negative rule after a long degenerate stall, which guarantees
    termination).  Leaving variable: minimum mass on the odd cycle
    positions, ties to the lowest basis index.

    Returns (n_basic, n_pivots, certified) and mutates the basis arrays.
    """
    ns, nt = C.shape
    n_nodes = ns + nt
    u = np.empty(ns)
    v = np.empty(nt)
    offs = np.zeros(n_nodes + 1, dtype=np.int64)
    adj = np.empty(2 * (ns + nt), dtype=np.int64)
    fill = np.empty(n_nodes, dtype=np.int64)
    parent_node = np.empty(n_nodes, dtype=np.int64)
    parent_cell = np.empty(n_nodes, dtype=np.int64)
    order = np.empty(n_nodes, dtype=np.int64)
    cycle = np.empty(2 * n_nodes, dtype=np.int64)
    stall = 0
    bland = False
    pivots = 0
    certified = False
    block_row = 0
    block_width = max(1, 16384 // nt)
    while pivots < max_iter:
        # --- adjacency of the current basis tree
        for q in range(n_nodes + 1):
            offs[q] = 0
        for k in range(nb):
            offs[brow[k] + 1] += 1
            offs[ns + bcol[k] + 1] += 1
        for q in range(n_nodes):
            offs[q + 1] += offs[q]
            fill[q] = offs[q]
        for k in range(nb):
            adj[fill[brow[k]]] = k
            fill[brow[k]] += 1
            adj[fill[ns + bcol[k]]] = k
            fill[ns + bcol[k]] += 1
        # --- duals via BFS from row node 0 (u[0] = 0)
        for q in range(n_nodes):
            parent_node[q] = -2
        parent_node[0] = -1
        parent_cell[0] = -1
        u[0] = 0.0
        order[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = order[head]
            head += 1
            for p in range(offs[node], offs[node + 1]):
                k = adj[p]
                nxt = ns + bcol[k] if node == brow[k] else brow[k]
                if parent_node[nxt] == -2:
                    parent_node[nxt] = node
                    parent_cell[nxt] = k
                    if nxt >= ns:
                        v[nxt - ns] = C[brow[k], bcol[k]] - u[brow[k]]
                    else:
                        u[nxt] = C[brow[k], bcol[k]] - v[bcol[k]]
                    order[tail] = nxt
                    tail += 1
        # --- pricing: cyclic blocks of rows; optimality needs a full wrap
        best = -tol
        ei = -1
        ej = -1
        if bland:
            done = False
            for i in range(ns):
                for j in range(nt):
                    r = C[i, j] - u[i] - v[j]
                    if r < -tol:
                        ei = i
                        ej = j
                        done = True
                        break
                if done:
                    break
        else:
            scanned = 0
            while scanned < ns:
                stop = block_row + block_width
                if stop > ns:
                    stop = ns
                for i in range(block_row, stop):
                    ui = u[i]
                    for j in range(nt):
                        r = C[i, j] - ui - v[j]
                        if r < best:
                            best = r
                            ei = i
                            ej = j
                scanned += stop - block_row
                block_row = stop if stop < ns else 0
                if ei >= 0:
                    break
        if ei < 0:
            certified = True
            break
        # --- cycle: path between row node ei and col node ns+ej in the tree
        # walk both nodes to the root, collecting cells; splice at the LCA
        path_a = cycle[:n_nodes]
        path_b = cycle[n_nodes:]
        na = 0
        node = ei
        while parent_node[node] >= 0:
            path_a[na] = parent_cell[node]
            na += 1
            node = parent_node[node]
        nbp = 0
        node = ns + ej
        while parent_node[node] >= 0:
            path_b[nbp] = parent_cell[node]
            nbp += 1
            node = parent_node[node]
        # strip the common tail (cells above the LCA appear in both)
        while na > 0 and nbp > 0 and path_a[na - 1] == path_b[nbp - 1]:
            na -= 1
            nbp -= 1
        # cycle cells in order: entering, then path_a (from ei up), then
        # path_b reversed (down to ns+ej).  Starting at the entering cell
        # (+), signs alternate along the cycle.
        theta = np.inf
        leave_pos = -1
        leave_cell = -1
        pos = 0
        for t in range(na):
            k = path_a[t]
            pos += 1
            if pos % 2 == 1:  # odd position: mass decreases
                if bmass[k] < theta - 1e-15 or (
                    bmass[k] < theta + 1e-15 and k < leave_cell
                ):
                    theta = bmass[k]
                    leave_pos = pos
                    leave_cell = k
        for t in range(nbp - 1, -1, -1):
            k = path_b[t]
            pos += 1
            if pos % 2 == 1:
                if bmass[k] < theta - 1e-15 or (
                    bmass[k] < theta + 1e-15 and k < leave_cell
                ):
                    theta = bmass[k]
                    leave_pos = pos
                    leave_cell = k
        # --- pivot
        pos = 0
        for t in range(na):
            k = path_a[t]
            pos += 1
            if pos % 2 == 1:
                bmass[k] -= theta
            else:
                bmass[k] += theta
        for t in range(nbp - 1, -1, -1):
            k = path_b[t]
            pos += 1
            if pos % 2 == 1:
                bmass[k] -= theta
            else:
                bmass[k] += theta
        # replace the leaving cell with the entering one
        brow[leave_cell] = ei
        bcol[leave_cell] = ej
        bmass[leave_cell] = theta
        pivots += 1
        if theta <= 1e-15:
            stall += 1
            if stall > 200:
                bland = True
        else:
            stall = 0
    return nb, pivots, certified


def transport_simplex(C, a, b, max_iter=1_000_000, tol=1e-9, basis=None):
    """Exact OT by the transportation simplex.

    Returns ``(gamma, certified, basis)`` where ``certified`` means the
    dual feasibility check passed within ``tol`` (scaled by the cost
    magnitude) and ``basis`` can seed a warm start on a later solve with
    the same marginals.

    The marginals are epsilon-perturbed internally (Charnes perturbation)
    to rule out degenerate pivots; the returned plan re-solves the flow on
    the final basis with the exact marginals, and the optimality
    certificate is unaffected because reduced costs depend only on the
    basis tree.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ns, nt = C.shape
    nb = ns + nt - 1
    eps = 1e-7 * float(min(a.min(), b.min())) / ns
    a_pert = a + eps
    b_pert = b.copy()
    b_pert[-1] += ns * eps
    brow = np.empty(ns + nt, dtype=np.int64)
    bcol = np.empty(ns + nt, dtype=np.int64)
    bmass = np.zeros(ns + nt)
    started = False
    if basis is not None:
        prow, pcol = basis
        if prow.shape[0] == nb:
            brow[:nb] = prow
            bcol[:nb] = pcol
            if _tree_masses(a_pert, b_pert, brow, bcol, nb, bmass):
                started = True
    if not started:
        k = _northwest_corner(a_pert, b_pert, brow, bcol, bmass)
        if k != nb:  # degenerate marginals; should not happen for valid input
            raise RuntimeError("northwest corner produced a non-tree basis")
    scale = max(1.0, float(np.max(np.abs(C))))
    nb, _, certified = _solve_simplex(
        C, a_pert, b_pert, brow, bcol, bmass, nb, max_iter, tol * scale
    )
    # exact flow on the optimal basis under the unperturbed marginals
    if not _tree_masses(a, b, brow, bcol, nb, bmass):
        bmass[:nb] = np.maximum(bmass[:nb], 0.0)
    gamma = np.zeros((ns, nt))
    gamma[brow[:nb], bcol[:nb]] = np.maximum(bmass[:nb], 0.0)
    return gamma, certified, (brow[:nb].copy(), bcol[:nb].copy())


@njit(cache=True)
def _sinkhorn_loop(C, loga, logb, reg, tol, max_iter, f, g):
    """Log-domain Sinkhorn; mutates the potentials, returns (err, iters)."""
    ns, nt = C.shape
    err = np.inf
    it = 0
    while it < max_iter:
        # f-update: row marginals become exact
        for i in range(ns):
            m = -np.inf
            for j in range(nt):
                val = (g[j] - C[i, j]) / reg + logb[j]
                if val > m:
                    m = val
            s = 0.0
            for j in range(nt):
                s += np.exp((g[j] - C[i, j]) / reg + logb[j] - m)
            f[i] = -reg * (m + np.log(s))
        # g-update: column marginals become exact
        for j in range(nt):
            m = -np.inf
            for i in range(ns):
                val = (f[i] - C[i, j]) / reg + loga[i]
                if val > m:
                    m = val
            s = 0.0
            for i in range(ns):
                s += np.exp((f[i] - C[i, j]) / reg + loga[i] - m)
            g[j] = -reg * (m + np.log(s))
        it += 1
        if it % 5 == 0 or it == max_iter:
            # row violation (columns are exact after the g-update)
            err = 0.0
            for i in range(ns):
                s = 0.0
                for j in range(nt):
                    s += np.exp((f[i] + g[j] - C[i, j]) / reg + loga[i] + logb[j])
                d = abs(s - np.exp(loga[i]))
                if d > err:
                    err = d
            if err <= tol:
                break
    return err, it


def sinkhorn_log(C, a, b, reg, tol=1e-6, max_iter=1000, f0=None, g0=None):
    """Entropic OT in the log domain.

    Returns ``(gamma, f, g, err, n_iter)``.  ``gamma`` is rounded onto the
    transport polytope so its marginals match ``a`` and ``b`` exactly even
    when the iteration stopped at ``max_iter``.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    loga = np.log(a)
    logb = np.log(b)
    f = np.zeros(a.shape[0]) if f0 is None else f0.astype(np.float64).copy()
    g = np.zeros(b.shape[0]) if g0 is None else g0.astype(np.float64).copy()
    err, n_iter = _sinkhorn_loop(C, loga, logb, float(reg), float(tol),
                                 int(max_iter), f, g)
    gamma = np.exp((f[:, None] + g[None, :] - C) / reg + loga[:, None] + logb[None, :])
    gamma = round_to_polytope(gamma, a, b)
    return gamma, f, g, float(err), int(n_iter)


@njit(cache=True)
def _verify_3x3_batch(max_entry, tol):
    """Exhaustively compare the simplex with permutation brute force on every
    3x3 integer cost matrix with entries in [0, max_entry].

    Returns (n_instances, n_mismatches).  Uniform marginals: the optimum is
    attained at a scaled permutation, so brute force is a 6-term minimum.
    """
    base = max_entry + 1
    total = base ** 9
    perms = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2],
                      [1, 2, 0], [2, 0, 1], [2, 1, 0]], dtype=np.int64)
    a = np.full(3, 1.0 / 3.0)
    b = np.full(3, 1.0 / 3.0)
    eps = 1e-7 * (1.0 / 3.0) / 3.0
    a_pert = a + eps
    b_pert = b.copy()
    b_pert[2] += 3 * eps
    C = np.empty((3, 3))
    brow = np.empty(6, dtype=np.int64)
    bcol = np.empty(6, dtype=np.int64)
    bmass = np.zeros(6)
    mismatches = 0
    for code in range(total):
        v = code
        for i in range(3):
            for j in range(3):
                C[i, j] = float(v % base)
                v //= base
        best = np.inf
        for p in range(6):
            c = C[0, perms[p, 0]] + C[1, perms[p, 1]] + C[2, perms[p, 2]]
            if c < best:
                best = c
        best /= 3.0
        k = _northwest_corner(a_pert, b_pert, brow, bcol, bmass)
        _solve_simplex(C, a_pert, b_pert, brow, bcol, bmass, 5, 1000, tol)
        _tree_masses(a, b, brow, bcol, 5, bmass)
        cost = 0.0
        for t in range(5):
            m = bmass[t]
            if m > 0:
                cost += m * C[brow[t], bcol[t]]
        if abs(cost - best) > 1e-9:
            mismatches += 1
    return total, mismatches


def round_to_polytope(gamma, a, b):
    """Project an almost-feasible plan onto exact marginals.

    Scales rows then columns down where they overshoot and spreads the
    residual as a rank-one nonnegative correction, preserving closeness
    to the input plan.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    row = gamma.sum(axis=1)
    scale = np.minimum(1.0, np.divide(a, row, out=np.ones_like(a), where=row > 0))
    gamma = gamma * scale[:, None]
    col = gamma.sum(axis=0)
    scale = np.minimum(1.0, np.divide(b, col, out=np.ones_like(b), where=col > 0))
    gamma = gamma * scale[None, :]
    ra = np.maximum(a - gamma.sum(axis=1), 0.0)
    rb = np.maximum(b - gamma.sum(axis=0), 0.0)
    mass = rb.sum()
    if mass > 1e-300:
        gamma = gamma + np.outer(ra, rb) / mass
    return gamma
