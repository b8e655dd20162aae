"""Pure numpy/Python kernels. Mirrors ``_kernels.pyx`` pivot for pivot and
draw for draw; selected at import time when the extension is unavailable.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 1.0 / 9007199254740992.0


# ---------------------------------------------------------------------------
# SplitMix64 counter hash


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_base(seed, replica):
    return mix64((seed ^ replica) & MASK64)


def uniform(base, counter):
    """Uniform on (0, 1]."""
    z = mix64((base + (counter + 1) * GAMMA) & MASK64)
    return ((z >> 11) + 1) * _TWO_M53


def _mix64_vec(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def _uniform_vec(base, counter):
    with np.errstate(over="ignore"):
        z = base + (counter + np.uint64(1)) * np.uint64(GAMMA)
        z = _mix64_vec(z)
    return ((z >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _TWO_M53


# ---------------------------------------------------------------------------
# transportation simplex


def _northwest(a, b):
    m, n = a.shape[0], b.shape[0]
    sa, sb = a.copy(), b.copy()
    cells_i, cells_j, flows = [], [], []
    i = j = 0
    while True:
        if i == m - 1 and j == n - 1:
            q = max(0.5 * (sa[i] + sb[j]), 0.0)
        elif i == m - 1:
            q = max(sb[j], 0.0)
        elif j == n - 1:
            q = max(sa[i], 0.0)
        else:
            q = min(sa[i], sb[j])
        cells_i.append(i)
        cells_j.append(j)
        flows.append(q)
        sa[i] -= q
        sb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif sa[i] <= sb[j]:
            i += 1
        else:
            j += 1
    return cells_i, cells_j, flows


def transport_simplex(a, b, cost, max_iter):
    """Network simplex on the bipartite transport graph.

    Dantzig pricing; after a degenerate pivot switches to Bland's rule until
    the next non-degenerate pivot (no cycling). Returns
    ``(plan, u, v, iterations, status)`` with status 0 optimal, 1 iteration cap.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(cost, dtype=np.float64)
    m, n = a.shape[0], b.shape[0]
    nb = m + n - 1
    bi, bj, fl = _northwest(a, b)
    bi = list(bi)
    bj = list(bj)
    fl = list(fl)
    rtol = 1e-12 * max(1.0, float(np.abs(c).max(initial=0.0)))
    deg_tol = 1e-15
    u = np.zeros(m)
    v = np.zeros(n)
    bland = False
    status = 1
    it = 0
    nnode = m + n
    while it < max_iter:
        # spanning-tree adjacency: node r < m is row r, node m + k is column k
        adj = [[] for _ in range(nnode)]
        for k in range(nb):
            adj[bi[k]].append(k)
            adj[m + bj[k]].append(k)
        parent_edge = [-1] * nnode
        parent = [-1] * nnode
        depth = [0] * nnode
        seen = [False] * nnode
        seen[0] = True
        u[0] = 0.0
        stack = [0]
        head = 0
        while head < len(stack):
            node = stack[head]
            head += 1
            for k in adj[node]:
                other = m + bj[k] if node < m else bi[k]
                if seen[other]:
                    continue
                seen[other] = True
                parent[other] = node
                parent_edge[other] = k
                depth[other] = depth[node] + 1
                if node < m:
                    v[bj[k]] = c[bi[k], bj[k]] - u[bi[k]]
                else:
                    u[bi[k]] = c[bi[k], bj[k]] - v[bj[k]]
                stack.append(other)

        red = c - u[:, None] - v[None, :]
        if bland:
            neg = np.flatnonzero(red.ravel() < -rtol)
            if neg.size == 0:
                status = 0
                break
            e = int(neg[0])
        else:
            e = int(np.argmin(red))
            if red.flat[e] >= -rtol:
                status = 0
                break
        ei, ej = divmod(e, n)

        # cycle: entering (ei, ej) then the tree path from column ej back to row ei
        pa = m + ej
        pb = ei
        path_a = []
        path_b = []
        while pa != pb:
            if depth[pa] >= depth[pb]:
                path_a.append(parent_edge[pa])
                pa = parent[pa]
            else:
                path_b.append(parent_edge[pb])
                pb = parent[pb]
        cycle = path_a + path_b[::-1]

        theta = np.inf
        leave = -1
        leave_idx = -1
        for pos in range(0, len(cycle), 2):
            k = cycle[pos]
            cell = bi[k] * n + bj[k]
            if fl[k] < theta - 1e-14 or (fl[k] <= theta + 1e-14 and cell < leave_idx):
                if fl[k] < theta - 1e-14:
                    theta = fl[k]
                leave = k
                leave_idx = cell
        theta = max(theta, 0.0)
        for pos, k in enumerate(cycle):
            if pos % 2 == 0:
                fl[k] -= theta
            else:
                fl[k] += theta
        bi[leave] = ei
        bj[leave] = ej
        fl[leave] = theta
        bland = theta <= deg_tol
        it += 1

    plan = np.zeros((m, n))
    for k in range(nb):
        plan[bi[k], bj[k]] = max(fl[k], 0.0)
    return plan, u.copy(), v.copy(), it, status


# ---------------------------------------------------------------------------
# CTMC time averages


def simulate_time_averages(rates, n, fvals, cdf, horizon, seed, first, count):
    """Time averages of f over ``count`` replicas of the n-fold product chain.

    All replicas advance in lock-step, one jump per sweep. Replica r uses
    stream ``seed ^ r``: counter 0 draws the initial state, counters
    2s+1 and 2s+2 the holding time and the transition of jump s.
    """
    q = np.asarray(rates, dtype=np.float64)
    e = q.shape[0]
    fv = np.asarray(fvals, dtype=np.float64)
    cdf = np.asarray(cdf, dtype=np.float64)
    reps = np.arange(first, first + count, dtype=np.uint64)
    base = _mix64_vec(np.uint64(seed) ^ reps)
    u0 = _uniform_vec(base, np.uint64(0))
    flat = np.minimum(np.searchsorted(cdf, u0, side="left"), cdf.shape[0] - 1)
    coords = np.empty((count, n), dtype=np.int64)
    rem = flat.copy()
    for k in range(n - 1, -1, -1):
        coords[:, k] = rem % e
        rem //= e
    powers = e ** np.arange(n - 1, -1, -1, dtype=np.int64)
    out_rate = -np.diag(q)
    offd = q.copy()
    np.fill_diagonal(offd, 0.0)
    # cumulative off-diagonal rates, per (state, target)
    cum = np.cumsum(offd, axis=1)

    clock = np.zeros(count)
    acc = np.zeros(count)
    active = np.ones(count, dtype=bool)
    step = 0
    while active.any():
        idx = np.flatnonzero(active)
        cs = coords[idx]
        rk = out_rate[cs]
        total = rk.sum(axis=1)
        ctr = np.uint64(2 * step + 1)
        uh = _uniform_vec(base[idx], ctr)
        ut = _uniform_vec(base[idx], ctr + np.uint64(1))
        tau = -np.log(uh) / total
        fx = fv[cs @ powers]
        done = clock[idx] + tau >= horizon
        d_idx = idx[done]
        acc[d_idx] += fx[done] * (horizon - clock[d_idx])
        active[d_idx] = False
        go = ~done
        g_idx = idx[go]
        acc[g_idx] += fx[go] * tau[go]
        clock[g_idx] += tau[go]
        if g_idx.size:
            target = ut[go] * total[go]
            csg = cs[go]
            rkg = rk[go]
            cumk = np.cumsum(rkg, axis=1)
            # coordinate: first k with target < cumk[k]
            k = np.minimum((target[:, None] >= cumk).sum(axis=1), n - 1)
            rows = np.arange(g_idx.size)
            within = target - (cumk[rows, k] - rkg[rows, k])
            state = csg[rows, k]
            crow = cum[state]
            y = np.minimum((within[:, None] >= crow).sum(axis=1), e - 1)
            # guard against rounding into a zero-rate column
            while True:
                bad = offd[state, y] <= 0
                if not bad.any():
                    break
                y[bad] = np.where(y[bad] > 0, y[bad] - 1, y[bad] + 1)
            coords[g_idx, k] = y
        step += 1
    return acc / horizon
