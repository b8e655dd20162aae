# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: transportation simplex and CTMC time averages.

Same pivot rules and random-draw layout as ``_fallback``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t M2 = 0x94D049BB133111EBULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t base, uint64_t counter) nogil:
    cdef uint64_t z = mix64(base + (counter + 1) * GAMMA)
    return <double>((z >> 11) + 1) * TWO_M53


def transport_simplex(a_in, b_in, cost_in, long max_iter):
    cdef const double[::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef Py_ssize_t m = a.shape[0], n = b.shape[0]
    cdef Py_ssize_t nb = m + n - 1, nnode = m + n
    cdef Py_ssize_t i, j, k, pos, node, other, head, tail, e, ei, ej, pa, pb
    cdef Py_ssize_t na, nbp, ncyc, leave, cell, leave_idx
    cdef double q, theta, r, best, rtol, cmax = 1.0
    cdef double deg_tol = 1e-15
    cdef bint bland = False
    cdef long it = 0
    cdef int status = 1

    bi_arr = np.zeros(nb, dtype=np.intp)
    bj_arr = np.zeros(nb, dtype=np.intp)
    fl_arr = np.zeros(nb, dtype=np.float64)
    cdef Py_ssize_t[::1] bi = bi_arr
    cdef Py_ssize_t[::1] bj = bj_arr
    cdef double[::1] fl = fl_arr
    cdef double[::1] sa = np.array(a, copy=True)
    cdef double[::1] sb = np.array(b, copy=True)
    u_arr = np.zeros(m)
    v_arr = np.zeros(n)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr

    cdef Py_ssize_t[::1] deg = np.zeros(nnode + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] adj = np.zeros(2 * nb, dtype=np.intp)
    cdef Py_ssize_t[::1] fillp = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] parent_edge = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] depth = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] queue = np.zeros(nnode, dtype=np.intp)
    cdef char[::1] seen = np.zeros(nnode, dtype=np.int8)
    cdef Py_ssize_t[::1] path_a = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] path_b = np.zeros(nnode, dtype=np.intp)
    cdef Py_ssize_t[::1] cyc = np.zeros(nnode, dtype=np.intp)

    for i in range(m):
        for j in range(n):
            if fabs(c[i, j]) > cmax:
                cmax = fabs(c[i, j])
    rtol = 1e-12 * cmax

    # northwest corner
    i = 0
    j = 0
    k = 0
    while True:
        if i == m - 1 and j == n - 1:
            q = 0.5 * (sa[i] + sb[j])
            if q < 0.0:
                q = 0.0
        elif i == m - 1:
            q = sb[j] if sb[j] > 0.0 else 0.0
        elif j == n - 1:
            q = sa[i] if sa[i] > 0.0 else 0.0
        else:
            q = sa[i] if sa[i] < sb[j] else sb[j]
        bi[k] = i
        bj[k] = j
        fl[k] = q
        k += 1
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

    while it < max_iter:
        # adjacency in CSR form, edges listed in basis order
        for node in range(nnode + 1):
            deg[node] = 0
        for k in range(nb):
            deg[bi[k] + 1] += 1
            deg[m + bj[k] + 1] += 1
        for node in range(nnode):
            deg[node + 1] += deg[node]
            fillp[node] = deg[node]
        for k in range(nb):
            adj[fillp[bi[k]]] = k
            fillp[bi[k]] += 1
            adj[fillp[m + bj[k]]] = k
            fillp[m + bj[k]] += 1

        for node in range(nnode):
            seen[node] = 0
            parent[node] = -1
            parent_edge[node] = -1
            depth[node] = 0
        seen[0] = 1
        u[0] = 0.0
        queue[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            for pos in range(deg[node], deg[node + 1]):
                k = adj[pos]
                if node < m:
                    other = m + bj[k]
                else:
                    other = bi[k]
                if seen[other]:
                    continue
                seen[other] = 1
                parent[other] = node
                parent_edge[other] = k
                depth[other] = depth[node] + 1
                if node < m:
                    v[bj[k]] = c[bi[k], bj[k]] - u[bi[k]]
                else:
                    u[bi[k]] = c[bi[k], bj[k]] - v[bj[k]]
                queue[tail] = other
                tail += 1

        e = -1
        if bland:
            for i in range(m):
                for j in range(n):
                    r = c[i, j] - u[i] - v[j]
                    if r < -rtol:
                        e = i * n + j
                        break
                if e >= 0:
                    break
        else:
            best = 0.0
            for i in range(m):
                for j in range(n):
                    r = c[i, j] - u[i] - v[j]
                    if e < 0 or r < best:
                        best = r
                        e = i * n + j
            if best >= -rtol:
                e = -1
        if e < 0:
            status = 0
            break
        ei = e // n
        ej = e % n

        pa = m + ej
        pb = ei
        na = 0
        nbp = 0
        while pa != pb:
            if depth[pa] >= depth[pb]:
                path_a[na] = parent_edge[pa]
                na += 1
                pa = parent[pa]
            else:
                path_b[nbp] = parent_edge[pb]
                nbp += 1
                pb = parent[pb]
        ncyc = 0
        for pos in range(na):
            cyc[ncyc] = path_a[pos]
            ncyc += 1
        for pos in range(nbp - 1, -1, -1):
            cyc[ncyc] = path_b[pos]
            ncyc += 1

        theta = 1e300
        leave = -1
        leave_idx = -1
        for pos in range(0, ncyc, 2):
            k = cyc[pos]
            cell = bi[k] * n + bj[k]
            if fl[k] < theta - 1e-14 or (fl[k] <= theta + 1e-14 and cell < leave_idx):
                if fl[k] < theta - 1e-14:
                    theta = fl[k]
                leave = k
                leave_idx = cell
        if theta < 0.0:
            theta = 0.0
        for pos in range(ncyc):
            k = cyc[pos]
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
    cdef double[:, ::1] pv = plan
    for k in range(nb):
        pv[bi[k], bj[k]] = fl[k] if fl[k] > 0.0 else 0.0
    return plan, u_arr.copy(), v_arr.copy(), it, status


def simulate_time_averages(rates, int n, fvals, cdf_in, double horizon,
                           uint64_t seed, int64_t first, int64_t count):
    cdef const double[:, ::1] q = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const double[::1] fv = np.ascontiguousarray(fvals, dtype=np.float64)
    cdef const double[::1] cdf = np.ascontiguousarray(cdf_in, dtype=np.float64)
    cdef Py_ssize_t e = q.shape[0], ncdf = cdf.shape[0]
    out = np.zeros(count)
    cdef double[::1] res = out
    cdef Py_ssize_t[::1] coords = np.zeros(n, dtype=np.intp)
    cdef double[::1] rk = np.zeros(n)
    cdef double[::1] cumk = np.zeros(n)
    cdef double[:, ::1] cum = np.zeros((e, e))
    cdef Py_ssize_t[::1] powers = np.zeros(n, dtype=np.intp)
    cdef Py_ssize_t rep, k, y, lo, hi, mid, flat, rem, state
    cdef uint64_t base, step
    cdef double clock, acc, total, uh, ut, tau, fx, target, within, u0, s
    cdef bint done

    for state in range(e):
        s = 0.0
        for y in range(e):
            if y != state:
                s += q[state, y]
            cum[state, y] = s
    powers[n - 1] = 1
    for k in range(n - 2, -1, -1):
        powers[k] = powers[k + 1] * e

    with nogil:
        for rep in range(count):
            base = mix64(seed ^ <uint64_t>(first + rep))
            u0 = uniform(base, 0)
            # first index with cdf >= u0
            lo = 0
            hi = ncdf
            while lo < hi:
                mid = (lo + hi) // 2
                if cdf[mid] < u0:
                    lo = mid + 1
                else:
                    hi = mid
            if lo > ncdf - 1:
                lo = ncdf - 1
            rem = lo
            for k in range(n - 1, -1, -1):
                coords[k] = rem % e
                rem = rem // e
            clock = 0.0
            acc = 0.0
            step = 0
            while True:
                total = 0.0
                flat = 0
                for k in range(n):
                    rk[k] = -q[coords[k], coords[k]]
                    total += rk[k]
                    cumk[k] = total
                    flat += coords[k] * powers[k]
                uh = uniform(base, 2 * step + 1)
                ut = uniform(base, 2 * step + 2)
                tau = -log(uh) / total
                fx = fv[flat]
                if clock + tau >= horizon:
                    acc += fx * (horizon - clock)
                    break
                acc += fx * tau
                clock += tau
                target = ut * total
                k = 0
                while k < n and target >= cumk[k]:
                    k += 1
                if k > n - 1:
                    k = n - 1
                within = target - (cumk[k] - rk[k])
                state = coords[k]
                y = 0
                while y < e and within >= cum[state, y]:
                    y += 1
                if y > e - 1:
                    y = e - 1
                while y == state or q[state, y] <= 0.0:
                    if y > 0:
                        y -= 1
                    else:
                        y += 1
                coords[k] = y
                step += 1
            res[rep] = acc / horizon
    return out
