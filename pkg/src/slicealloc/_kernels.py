"""Compiled inner loops of the dual allocator.

Everything here works in water-level units: ``w_i = lambda_i * B / ln 2``
(watts), with ``G[i, j] = beta_i * h_ij / sigma^2`` and the per-user demand
``rho_i = r_i * ln 2 / B`` (nats per subchannel use). In these units

    mu_ij(w_i) = w_i * (ln(w_i G_ij) - 1) + 1/G_ij      if w_i G_ij > 1 else 0
    dual(w)    = sum_i w_i rho_i - sum_j max(0, max_i mu_ij)
    d dual/dw_i = rho_i - sum_{j owned by i} ln(w_i G_ij)

and the power of a fixed assignment is a per-user water-filling problem.
Channels with ``lnG = -inf`` (gain below the eligibility floor) are never
assigned.
"""

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def waterfill_sorted(lng_desc, rho):
    """Water level meeting demand ``rho`` on channels sorted by gain.

    Returns ``(ln_w, m)`` where the ``m`` best channels are active. ``ln_w``
    is -inf for zero demand and +inf when no channel is usable.
    """
    if rho <= 0.0:
        return NEG_INF, 0
    n = lng_desc.shape[0]
    if n == 0 or lng_desc[0] == NEG_INF:
        return np.inf, 0
    s = 0.0
    ln_w = np.inf
    for m in range(1, n + 1):
        s += lng_desc[m - 1]
        ln_w = (rho - s) / m
        if m == n or lng_desc[m] == NEG_INF or ln_w + lng_desc[m] <= 0.0:
            return ln_w, m
    return ln_w, n


@njit(cache=True)
def waterfill_power(lng_desc, rho):
    """Minimum power to deliver ``rho`` on the given channels (sorted desc)."""
    ln_w, m = waterfill_sorted(lng_desc, rho)
    if m == 0:
        if rho <= 0.0:
            return 0.0, ln_w
        return np.inf, ln_w
    w = np.exp(ln_w)
    p = 0.0
    for k in range(m):
        p += w - np.exp(-lng_desc[k])
    return p, ln_w


@njit(cache=True)
def _assign_into(lnw, lnG, invG, active, owner, mumax):
    nu, k = lnG.shape
    owner[:] = -1
    mumax[:] = 0.0
    for i in range(nu):
        if not active[i] or lnw[i] == NEG_INF:
            continue
        w = np.exp(lnw[i])
        for j in range(k):
            x = lnw[i] + lnG[i, j]
            if x > 0.0:
                mu = w * (x - 1.0) + invG[i, j]
                if mu > mumax[j]:
                    mumax[j] = mu
                    owner[j] = i


@njit(cache=True)
def assign(lnw, lnG, invG, active):
    """Winner of each subchannel (-1 if every price is zero) and max price."""
    k = lnG.shape[1]
    owner = np.empty(k, dtype=np.int64)
    mumax = np.empty(k)
    _assign_into(lnw, lnG, invG, active, owner, mumax)
    return owner, mumax


@njit(cache=True)
def _dual_into(w, rho, lnG, invG, active, lnw, owner, mumax, grad):
    nu = w.shape[0]
    for i in range(nu):
        lnw[i] = np.log(w[i]) if w[i] > 0.0 else NEG_INF
    _assign_into(lnw, lnG, invG, active, owner, mumax)
    f = 0.0
    for i in range(nu):
        if active[i]:
            f += w[i] * rho[i]
            grad[i] = rho[i]
        else:
            grad[i] = 0.0
    for j in range(owner.shape[0]):
        f -= mumax[j]
        i = owner[j]
        if i >= 0:
            grad[i] -= lnw[i] + lnG[i, j]
    return f


@njit(cache=True)
def dual_and_grad(w, rho, lnG, invG, active):
    """Dual value, gradient in w, and the argmax assignment at ``w >= 0``."""
    nu, k = lnG.shape
    lnw = np.empty(nu)
    owner = np.empty(k, dtype=np.int64)
    mumax = np.empty(k)
    grad = np.empty(nu)
    f = _dual_into(w, rho, lnG, invG, active, lnw, owner, mumax, grad)
    return f, grad, owner


@njit(cache=True)
def refine(owner, lnG, rho, active):
    """Exact-target water-filling on a fixed assignment.

    Returns ``(total_power, ln_w)``; power is inf when an active user owns
    no usable channel.
    """
    nu, k = lnG.shape
    # bucket the owned channel gains per user, then sort each bucket
    start = np.zeros(nu + 1, dtype=np.int64)
    for j in range(k):
        if owner[j] >= 0:
            start[owner[j] + 1] += 1
    for i in range(nu):
        start[i + 1] += start[i]
    fill = start[:nu].copy()
    vals = np.empty(start[nu])
    for j in range(k):
        i = owner[j]
        if i >= 0:
            vals[fill[i]] = lnG[i, j]
            fill[i] += 1
    lnw = np.full(nu, NEG_INF)
    total = 0.0
    for i in range(nu):
        if not active[i]:
            continue
        seg = vals[start[i] : start[i + 1]]
        # insertion sort, descending; buckets are short
        for a in range(1, seg.shape[0]):
            x = seg[a]
            b = a - 1
            while b >= 0 and seg[b] < x:
                seg[b + 1] = seg[b]
                b -= 1
            seg[b + 1] = x
        p, lw = waterfill_power(seg, rho[i])
        lnw[i] = lw
        total += p
    return total, lnw


@njit(cache=True)
def repair(owner, lnG, active):
    """Give every active user at least one channel, if possible.

    Uses unassigned channels first, then takes a channel from a user holding
    two or more. Returns False if some active user cannot be served.
    """
    nu, k = lnG.shape
    counts = np.zeros(nu, dtype=np.int64)
    for j in range(k):
        if owner[j] >= 0:
            counts[owner[j]] += 1
    ok = True
    for i in range(nu):
        if not active[i] or counts[i] > 0:
            continue
        best = -1
        bestval = NEG_INF
        for j in range(k):
            if owner[j] == -1 and lnG[i, j] > bestval:
                best = j
                bestval = lnG[i, j]
        if best < 0:
            for j in range(k):
                o = owner[j]
                if o >= 0 and counts[o] >= 2 and lnG[i, j] > bestval:
                    best = j
                    bestval = lnG[i, j]
        if best < 0 or bestval == NEG_INF:
            ok = False
            continue
        if owner[best] >= 0:
            counts[owner[best]] -= 1
        owner[best] = i
        counts[i] += 1
    return ok


@njit(cache=True)
def fill_idle(owner, lnG, rho, active, max_rounds=8):
    """Hand unassigned channels to the user whose water level covers them best."""
    total, lnw = refine(owner, lnG, rho, active)
    nu, k = lnG.shape
    for _ in range(max_rounds):
        changed = False
        for j in range(k):
            if owner[j] != -1:
                continue
            best = -1
            bestx = 0.0
            for i in range(nu):
                if active[i]:
                    x = lnw[i] + lnG[i, j]
                    if x > bestx:
                        bestx = x
                        best = i
            if best >= 0:
                owner[j] = best
                changed = True
        if not changed:
            break
        total, lnw = refine(owner, lnG, rho, active)
    return total, lnw


@njit(cache=True)
def recover(owner_in, lnG, rho, active):
    """Feasible primal point from a dual assignment: repair, fill, water-fill."""
    owner = owner_in.copy()
    if not repair(owner, lnG, active):
        return np.inf, owner, np.full(lnG.shape[0], NEG_INF)
    total, lnw = fill_idle(owner, lnG, rho, active)
    return total, owner, lnw


@njit(cache=True)
def _user_power(order, owner, lnG, rho, i, add, drop, buf):
    # water-fill user i over its channels, plus ``add`` and minus ``drop``;
    # walks the channels best-first and stops at the first dark one
    if rho[i] <= 0.0:
        return 0.0, NEG_INF
    m = 0
    s = 0.0
    ln_w = np.inf
    for t in range(order.shape[1]):
        j = order[i, t]
        if j == add or (owner[j] == i and j != drop):
            x = lnG[i, j]
            if x == NEG_INF or (m > 0 and ln_w + x <= 0.0):
                break
            buf[m] = x
            m += 1
            s += x
            ln_w = (rho[i] - s) / m
    if m == 0:
        return np.inf, np.inf
    w = np.exp(ln_w)
    p = 0.0
    for t in range(m):
        p += w - np.exp(-buf[t])
    return p, ln_w


@njit(cache=True)
def _pair_move(order, owner, lnG, rho, active, cost, lnw, total, buf):
    # first improving pair of reassignments (j -> b, l -> d); updates in place
    nu, k = lnG.shape
    users = np.empty(4, dtype=np.int64)
    newc = np.empty(4)
    newl = np.empty(4)
    for j in range(k):
        for l in range(j + 1, k):
            a = owner[j]
            c = owner[l]
            for b in range(nu):
                if b == a or not active[b]:
                    continue
                for d in range(nu):
                    if d == c or not active[d]:
                        continue
                    owner[j] = b
                    owner[l] = d
                    m = 0
                    for u in (a, b, c, d):
                        if u < 0:
                            continue
                        dup = False
                        for t in range(m):
                            if users[t] == u:
                                dup = True
                        if not dup:
                            users[m] = u
                            m += 1
                    delta = 0.0
                    for t in range(m):
                        newc[t], newl[t] = _user_power(order, owner, lnG, rho, users[t], -1, -1, buf)
                        delta += newc[t] - cost[users[t]]
                    if delta < -1e-12 * total:
                        for t in range(m):
                            cost[users[t]] = newc[t]
                            lnw[users[t]] = newl[t]
                        return True
                    owner[j] = a
                    owner[l] = c
    return False


@njit(cache=True)
def _rotate_move(order, owner, lnG, rho, active, cost, lnw, total, buf):
    # first improving rotation of three channels held by three distinct users
    k = lnG.shape[1]
    trio = np.empty(3, dtype=np.int64)
    newc = np.empty(3)
    newl = np.empty(3)
    for j in range(k):
        a = owner[j]
        if a < 0:
            continue
        for l in range(j + 1, k):
            b = owner[l]
            if b < 0 or b == a:
                continue
            for m in range(l + 1, k):
                c = owner[m]
                if c < 0 or c == a or c == b:
                    continue
                trio[0] = a
                trio[1] = b
                trio[2] = c
                for shift in (1, 2):
                    owner[j] = trio[shift % 3]
                    owner[l] = trio[(1 + shift) % 3]
                    owner[m] = trio[(2 + shift) % 3]
                    delta = 0.0
                    for t in range(3):
                        newc[t], newl[t] = _user_power(order, owner, lnG, rho, trio[t], -1, -1, buf)
                        delta += newc[t] - cost[trio[t]]
                    if delta < -1e-12 * total:
                        for t in range(3):
                            cost[trio[t]] = newc[t]
                            lnw[trio[t]] = newl[t]
                        return True
                owner[j] = a
                owner[l] = b
                owner[m] = c
    return False


@njit(cache=True)
def local_search(owner, lnG, rho, active, max_rounds=10, pair_limit=64):
    """Move single channels between users while that lowers the total power.

    A channel is only offered to users whose current water level covers it,
    since anyone else would leave it dark. Pairwise exchanges follow, and on
    small instances (``users * channels <= pair_limit``) two simultaneous
    reassignments and three-way rotations, which single moves cannot reach
    without passing through a worse intermediate point.
    """
    nu, k = lnG.shape
    order = np.empty((nu, k), dtype=np.int64)
    for i in range(nu):
        order[i] = np.argsort(-lnG[i])
    buf = np.empty(k)
    cost = np.zeros(nu)
    lnw = np.full(nu, NEG_INF)
    total = 0.0
    for i in range(nu):
        if active[i]:
            cost[i], lnw[i] = _user_power(order, owner, lnG, rho, i, -1, -1, buf)
            total += cost[i]
    if not np.isfinite(total):
        return total, lnw
    for _ in range(max_rounds):
        improved = False
        for j in range(k):
            a = owner[j]
            loss = 0.0
            pa = 0.0
            la = NEG_INF
            if a >= 0:
                pa, la = _user_power(order, owner, lnG, rho, a, -1, j, buf)
                loss = pa - cost[a]
            best = -1
            best_delta = -1e-12 * total
            best_p = 0.0
            best_l = 0.0
            for b in range(nu):
                if b == a or not active[b] or lnw[b] + lnG[b, j] <= 0.0:
                    continue
                pb, lb = _user_power(order, owner, lnG, rho, b, j, -1, buf)
                delta = loss + pb - cost[b]
                if delta < best_delta:
                    best_delta = delta
                    best = b
                    best_p = pb
                    best_l = lb
            if best >= 0:
                owner[j] = best
                if a >= 0:
                    cost[a] = pa
                    lnw[a] = la
                cost[best] = best_p
                lnw[best] = best_l
                total += best_delta
                improved = True
        # pairwise exchanges, for users that cannot give up a channel outright
        for j in range(k):
            a = owner[j]
            if a < 0:
                continue
            for l in range(j + 1, k):
                b = owner[l]
                if b < 0 or b == a:
                    continue
                # both sides would trade down: cannot help
                if lnG[a, l] <= lnG[a, j] and lnG[b, j] <= lnG[b, l]:
                    continue
                pa, la = _user_power(order, owner, lnG, rho, a, l, j, buf)
                pb, lb = _user_power(order, owner, lnG, rho, b, j, l, buf)
                delta = pa + pb - cost[a] - cost[b]
                if delta < -1e-12 * total:
                    owner[j] = b
                    owner[l] = a
                    cost[a] = pa
                    lnw[a] = la
                    cost[b] = pb
                    lnw[b] = lb
                    total += delta
                    improved = True
                    break
        if not improved and nu * k <= pair_limit:
            improved = _pair_move(order, owner, lnG, rho, active, cost, lnw, total, buf)
            if not improved:
                improved = _rotate_move(order, owner, lnG, rho, active, cost, lnw, total, buf)
        if not improved:
            break
    # recompute rather than trust the running sum
    total = 0.0
    for i in range(nu):
        if active[i]:
            total += cost[i]
    return total, lnw


@njit(cache=True)
def polish(owner, lnG, invG, rho, active, total, lnw, max_rounds=20, search=True):
    """Improve a feasible assignment until neither step below helps.

    Alternates argmax assignment at the refined water levels with
    re-water-filling, then moves single channels by local search. A
    candidate is kept only if it lowers the total power.
    """
    for _ in range(max_rounds):
        cand, _mu = assign(lnw, lnG, invG, active)
        p, cand, clnw = recover(cand, lnG, rho, active)
        if p < total * (1.0 - 1e-12):
            total = p
            owner = cand
            lnw = clnw
            continue
        if not search:
            break
        cand = owner.copy()
        p, clnw = local_search(cand, lnG, rho, active)
        if p < total * (1.0 - 1e-12):
            total = p
            owner = cand
            lnw = clnw
        else:
            break
    return total, owner, lnw


@njit(cache=True)
def greedy_start(lnG, rho, active):
    """Cheap feasible assignment: quotas proportional to demand, best channels first."""
    nu, k = lnG.shape
    owner = np.full(k, -1, dtype=np.int64)
    total_rho = 0.0
    n_act = 0
    for i in range(nu):
        if active[i]:
            total_rho += rho[i]
            n_act += 1
    if n_act == 0:
        return owner
    quota = np.zeros(nu)
    for i in range(nu):
        if active[i]:
            quota[i] = max(1.0, k * rho[i] / total_rho)
    taken = np.zeros(k, dtype=np.bool_)
    left = k
    while left > 0:
        # user with the largest remaining quota picks its best free channel
        u = -1
        uq = 0.0
        for i in range(nu):
            if active[i] and quota[i] > uq:
                uq = quota[i]
                u = i
        if u < 0:
            break
        best = -1
        bestval = NEG_INF
        for j in range(k):
            if not taken[j] and lnG[u, j] > bestval:
                bestval = lnG[u, j]
                best = j
        if best < 0:
            quota[u] = 0.0
            continue
        owner[best] = u
        taken[best] = True
        quota[u] -= 1.0
        left -= 1
    return owner


@njit(cache=True)
def ellipsoid(
    w0,
    D0,
    rho,
    lnG,
    invG,
    active,
    eps,
    gap_tol,
    max_iter,
    p_best,
    owner_best,
    lnw_best,
    check_every,
    deep=True,
):
    """Deep-cut ellipsoid ascent on the dual over the active users.

    Returns ``(f_best, w_best, p_best, owner_best, lnw_best, iters, status)``
    with status 1 for the epsilon-ball stop, 2 for the duality-gap stop,
    0 for the iteration cap and -1 for a numerical breakdown.
    """
    nu = w0.shape[0]
    idx = np.nonzero(active)[0]
    n = idx.shape[0]
    c = w0[idx].copy()
    D = D0.copy()
    w = np.zeros(nu)
    f_best = NEG_INF
    w_best = np.zeros(nu)
    last_owner = np.full(lnG.shape[1], -2, dtype=np.int64)
    status = 0
    it = 0
    g = np.zeros(n)
    Dg = np.zeros(n)
    lnw = np.empty(nu)
    owner = np.empty(lnG.shape[1], dtype=np.int64)
    mumax = np.empty(lnG.shape[1])
    grad = np.empty(nu)
    scale = n * n / (n * n - 1.0) if n > 1 else 1.0
    shrink = 2.0 / (n + 1.0)
    while it < max_iter:
        it += 1
        neg = -1
        for a in range(n):
            if c[a] < 0.0 and (neg < 0 or c[a] < c[neg]):
                neg = a
        if neg >= 0:
            # feasibility cut: the optimum has w >= 0
            g[:] = 0.0
            g[neg] = 1.0
        else:
            for a in range(n):
                w[idx[a]] = c[a]
            f = _dual_into(w, rho, lnG, invG, active, lnw, owner, mumax, grad)
            for a in range(n):
                g[a] = grad[idx[a]]
            if f > f_best:
                f_best = f
                w_best[:] = w
            changed = False
            if it % check_every == 0 or it == 1:
                for j in range(owner.shape[0]):
                    if owner[j] != last_owner[j]:
                        changed = True
                        break
            if changed:
                last_owner[:] = owner
                p, o2, l2 = recover(owner, lnG, rho, active)
                if p < p_best:
                    p_best = p
                    owner_best = o2
                    lnw_best = l2
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += D[a, b] * g[b]
            Dg[a] = acc
        gDg = 0.0
        for a in range(n):
            gDg += g[a] * Dg[a]
        if neg < 0:
            if gDg <= 0.0 or np.sqrt(gDg) <= eps:
                status = 1
                break
            if p_best - f_best <= gap_tol * p_best:
                status = 2
                break
        if not gDg > 0.0 or not np.isfinite(gDg):
            status = -1
            break
        s = np.sqrt(gDg)
        # deep cut: everything worth keeping has g'(x - c) >= depth
        if neg >= 0:
            depth = -c[neg]
        else:
            depth = f_best - f
        alpha = depth / s if deep else 0.0
        if alpha >= 1.0:
            status = 1
            break
        if n == 1:
            # one-dimensional ellipsoid = bisection of [c + alpha r, c + r]
            c[0] += 0.5 * (1.0 + alpha) * Dg[0] / s
            D[0, 0] *= 0.25 * (1.0 - alpha) ** 2
        else:
            step = (1.0 + n * alpha) / (n + 1.0)
            sc = scale * (1.0 - alpha * alpha)
            sh = shrink * (1.0 + n * alpha) / (1.0 + alpha)
            for a in range(n):
                Dg[a] /= s
                c[a] += step * Dg[a]
            for a in range(n):
                for b in range(a, n):
                    v = sc * (D[a, b] - sh * Dg[a] * Dg[b])
                    D[a, b] = v
                    D[b, a] = v
    return f_best, w_best, p_best, owner_best, lnw_best, it, status
