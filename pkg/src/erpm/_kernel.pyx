# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Metropolis-Hastings kernel over set partitions.

Mirrors ``_kernel_py.Chain`` operation by operation; see that module for the
algorithm. The step loop runs without the GIL.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, ldexp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

DEF K_SIZE = 0
DEF K_DYADIC = 1
DEF K_ALLSAME = 2
DEF K_DISTINCT = 3
DEF K_RANGE = 4
DEF K_VARIANCE = 5
DEF K_GSOC = 6
DEF MERGE_SPLIT = 0
DEF PERMUTE = 1
DEF TRANSFER = 2


cdef inline uint64_t rotl(uint64_t x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t splitmix(uint64_t *state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef struct Agg:
    int64_t k
    int64_t singles
    int64_t pairs
    int64_t sumsq
    int64_t sumbig
    double sumpow


cdef class Chain:
    cdef public int n, K
    cdef int64_t[:] kind, norm
    cdef double[:, :] table
    cdef double[:, :, :] dyad
    cdef double[:, :] values
    cdef int64_t[:, :] codes
    cdef double[:] alpha
    cdef double[:] stats
    cdef double[:] delta
    cdef int lo, hi, reject_invalid
    cdef int64_t refresh_every
    cdef double cw[3]
    cdef double w[3]
    cdef int wpos[3]
    cdef int64_t proposals[3]
    cdef int64_t accepts[3]
    cdef public int64_t steps
    cdef uint64_t s[4]
    cdef int64_t[:] block, pos, size, active, apos, free
    cdef int64_t[:, :] members
    cdef int64_t nactive, nfree
    cdef int64_t[:] bufA, bufB
    cdef object _keep

    def __init__(self, membership, kind, normalized, size_table, dyad, values, codes,
                 alpha, seed, weights, sigma_min, sigma_max, reject_invalid=True,
                 refresh_every=10000):
        cdef int n = len(membership)
        cdef uint64_t st
        cdef int r
        self.n = n
        self.K = len(kind)
        arrays = (
            np.ascontiguousarray(kind, dtype=np.int64),
            np.ascontiguousarray(normalized, dtype=np.int64),
            np.ascontiguousarray(size_table, dtype=np.float64),
            np.ascontiguousarray(dyad, dtype=np.float64),
            np.ascontiguousarray(values, dtype=np.float64),
            np.ascontiguousarray(codes, dtype=np.int64),
        )
        self._keep = arrays
        self.kind, self.norm, self.table, self.dyad, self.values, self.codes = arrays
        self.alpha = np.array(alpha, dtype=np.float64)
        self.stats = np.zeros(self.K, dtype=np.float64)
        self.delta = np.zeros(self.K, dtype=np.float64)
        self.lo = sigma_min
        self.hi = sigma_max
        self.reject_invalid = 1 if reject_invalid else 0
        self.refresh_every = refresh_every
        w = [float(x) for x in weights]
        tot = w[0] + w[1] + w[2]
        self.w[0] = w[0] / tot
        self.w[1] = w[1] / tot
        self.w[2] = w[2] / tot
        self.cw[0] = w[0] / tot
        self.cw[1] = (w[0] + w[1]) / tot
        self.cw[2] = 1.0
        for r in range(3):
            self.wpos[r] = 1 if w[r] > 0 else 0
            self.proposals[r] = 0
            self.accepts[r] = 0
        self.steps = 0
        st = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
        for r in range(4):
            self.s[r] = splitmix(&st)
        self.block = np.zeros(n, dtype=np.int64)
        self.pos = np.zeros(n, dtype=np.int64)
        self.size = np.zeros(n, dtype=np.int64)
        self.active = np.zeros(n, dtype=np.int64)
        self.apos = np.zeros(n, dtype=np.int64)
        self.free = np.zeros(n, dtype=np.int64)
        self.members = np.zeros((n, n), dtype=np.int64)
        self.bufA = np.zeros(n + 1, dtype=np.int64)
        self.bufB = np.zeros(n + 1, dtype=np.int64)
        self.set_membership(membership)

    # -- random numbers ----------------------------------------------------------
    cdef inline uint64_t next_u64(self) noexcept nogil:
        cdef uint64_t result = rotl(self.s[1] * 5, 7) * 9
        cdef uint64_t t = self.s[1] << 17
        self.s[2] ^= self.s[0]
        self.s[3] ^= self.s[1]
        self.s[1] ^= self.s[2]
        self.s[0] ^= self.s[3]
        self.s[2] ^= t
        self.s[3] = rotl(self.s[3], 45)
        return result

    cdef inline double uniform(self) noexcept nogil:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    cdef inline int64_t randint(self, int64_t m) noexcept nogil:
        return <int64_t>(self.uniform() * m)

    def uniform_py(self):
        return self.uniform()

    # -- state ---------------------------------------------------------------------
    def set_membership(self, membership):
        cdef int64_t i, g, slot
        cdef int n = self.n
        self.nactive = 0
        self.nfree = 0
        for i in range(n):
            self.size[i] = 0
        label_slot = {}
        for i in range(n):
            g = int(membership[i])
            if g not in label_slot:
                slot = len(label_slot)
                label_slot[g] = slot
                self.active[self.nactive] = slot
                self.apos[slot] = self.nactive
                self.nactive += 1
            slot = label_slot[g]
            self.block[i] = slot
            self.pos[i] = self.size[slot]
            self.members[slot, self.size[slot]] = i
            self.size[slot] += 1
        for slot in range(n - 1, len(label_slot) - 1, -1):
            self.free[self.nfree] = slot
            self.nfree += 1
        self.refresh()

    cpdef refresh(self):
        with nogil:
            self._refresh()

    cdef void _refresh(self) noexcept nogil:
        cdef int k
        cdef int64_t a, slot
        cdef double acc
        for k in range(self.K):
            acc = 0.0
            for a in range(self.nactive):
                slot = self.active[a]
                acc += self.block_value(k, &self.members[slot, 0], self.size[slot])
            self.stats[k] = acc

    cdef inline int64_t new_slot(self) noexcept nogil:
        self.nfree -= 1
        cdef int64_t slot = self.free[self.nfree]
        self.active[self.nactive] = slot
        self.apos[slot] = self.nactive
        self.nactive += 1
        self.size[slot] = 0
        return slot

    cdef inline void drop_slot(self, int64_t slot) noexcept nogil:
        cdef int64_t a = self.apos[slot]
        cdef int64_t last = self.active[self.nactive - 1]
        self.active[a] = last
        self.apos[last] = a
        self.nactive -= 1
        self.free[self.nfree] = slot
        self.nfree += 1
        self.size[slot] = 0

    def get_membership(self):
        out = np.zeros(self.n, dtype=np.int64)
        cdef int64_t[:] o = out
        labels = {}
        cdef int64_t i, slot
        for i in range(self.n):
            slot = self.block[i]
            if slot not in labels:
                labels[slot] = len(labels)
            o[i] = labels[slot]
        return out

    cdef int _in_bounds(self) noexcept nogil:
        cdef int64_t a, s
        for a in range(self.nactive):
            s = self.size[self.active[a]]
            if s < self.lo or s > self.hi:
                return 0
        return 1

    def in_bounds(self):
        return bool(self._in_bounds())

    # -- statistics --------------------------------------------------------------------
    cdef double block_value(self, int k, int64_t *buf, int64_t m) noexcept nogil:
        cdef int64_t kind, a, b, distinct, cnt, c
        cdef double t, v, x, lo, hi, total, mu, dev, d
        cdef int seen
        if m == 0:
            return 0.0
        kind = self.kind[k]
        if kind == K_SIZE:
            return self.table[k, m]
        if kind == K_DYADIC:
            t = 0.0
            for a in range(m):
                for b in range(a + 1, m):
                    t += self.dyad[k, buf[a], buf[b]]
            if self.norm[k]:
                if m > 1:
                    return t / (m * (m - 1) / 2.0)
                return 0.0
            return t
        if kind == K_ALLSAME or kind == K_DISTINCT:
            distinct = 0
            for a in range(m):
                c = self.codes[k, buf[a]]
                seen = 0
                for b in range(a):
                    if self.codes[k, buf[b]] == c:
                        seen = 1
                        break
                if not seen:
                    distinct += 1
            if kind == K_ALLSAME:
                v = 1.0 if distinct == 1 else 0.0
            else:
                v = <double>distinct
        else:
            cnt = 0
            total = 0.0
            lo = 0.0
            hi = 0.0
            for a in range(m):
                x = self.values[k, buf[a]]
                if x != x:
                    continue
                if cnt == 0:
                    lo = x
                    hi = x
                else:
                    if x < lo:
                        lo = x
                    if x > hi:
                        hi = x
                total += x
                cnt += 1
            if cnt == 0:
                v = 0.0
            elif kind == K_RANGE:
                v = hi - lo
            elif kind == K_GSOC:
                v = m * (total / cnt)
            else:
                mu = total / cnt
                dev = 0.0
                for a in range(m):
                    x = self.values[k, buf[a]]
                    if x != x:
                        continue
                    d = x - mu
                    dev += d * d
                v = dev / cnt
        if self.norm[k]:
            return v / m
        return v

    # -- neighbor counts ------------------------------------------------------------------
    cdef Agg aggregates(self) noexcept nogil:
        cdef Agg g
        cdef int64_t a, s
        g.k = self.nactive
        g.singles = 0
        g.pairs = 0
        g.sumsq = 0
        g.sumbig = 0
        g.sumpow = 0.0
        for a in range(g.k):
            s = self.size[self.active[a]]
            if s == 1:
                g.singles += 1
            elif s == 2:
                g.pairs += 1
            if s >= 2:
                g.sumbig += s
            g.sumsq += s * s
            g.sumpow += ldexp(1.0, <int>(s - 1)) - 1.0
        return g

    cdef inline void agg_add(self, Agg *g, int64_t s, int sign) noexcept nogil:
        g.k += sign
        if s == 1:
            g.singles += sign
        elif s == 2:
            g.pairs += sign
        if s >= 2:
            g.sumbig += sign * s
        g.sumsq += sign * s * s
        g.sumpow += sign * (ldexp(1.0, <int>(s - 1)) - 1.0)

    cdef inline double count(self, int r, Agg *g) noexcept nogil:
        cdef int64_t n = self.n
        if r == MERGE_SPLIT:
            return g.k * (g.k - 1) / 2.0 + g.sumpow
        if r == TRANSFER:
            return <double>(n * (g.k - 1) + g.sumbig - g.pairs - g.singles * (g.singles - 1) // 2)
        return <double>((n * n - g.sumsq) // 2 - g.pairs * (g.pairs - 1)
                        - g.singles * (g.singles - 1) // 2)

    cdef double available_weight(self, Agg *g) noexcept nogil:
        cdef double tot = 0.0
        cdef int r
        for r in range(3):
            if self.wpos[r] and self.count(r, g) > 0:
                tot += self.w[r]
        return tot

    # -- one MH step -------------------------------------------------------------------------
    cdef void one_step(self) noexcept nogil:
        cdef Agg agg = self.aggregates()
        cdef Agg nagg
        cdef double u, fwd, bwd, x, nmerge, w, loga, fnew, fold
        cdef int r, k, valid
        cdef int64_t typ = 0, g1 = -1, g2 = -1, la = 0, lb = 0, i = -1, j = -1
        cdef int64_t q, a, b, slot, s, g, last, t, d, h, sg, sh, other, lowest, p
        while True:
            u = self.uniform()
            if u < self.cw[0]:
                r = 0
            elif u < self.cw[1]:
                r = 1
            else:
                r = 2
            if not self.wpos[r]:
                continue
            fwd = self.count(r, &agg)
            if fwd > 0:
                break

        if r == MERGE_SPLIT:
            nmerge = agg.k * (agg.k - 1) / 2.0
            x = self.uniform() * (nmerge + agg.sumpow)
            if x < nmerge:
                q = <int64_t>x
                a = 0
                while q >= agg.k - 1 - a:
                    q -= agg.k - 1 - a
                    a += 1
                b = a + 1 + q
                g1 = self.active[a]
                g2 = self.active[b]
                la = 0
                for t in range(self.size[g1]):
                    self.bufA[la] = self.members[g1, t]
                    la += 1
                for t in range(self.size[g2]):
                    self.bufA[la] = self.members[g2, t]
                    la += 1
                lb = 0
                typ = 0
            else:
                x -= nmerge
                g = -1
                last = -1
                for a in range(agg.k):
                    slot = self.active[a]
                    s = self.size[slot]
                    if s < 2:
                        continue
                    last = slot
                    w = ldexp(1.0, <int>(s - 1)) - 1.0
                    if x < w:
                        g = slot
                        break
                    x -= w
                if g < 0:
                    g = last
                s = self.size[g]
                while True:
                    self.bufA[0] = self.members[g, 0]
                    la = 1
                    lb = 0
                    for t in range(1, s):
                        if self.uniform() < 0.5:
                            self.bufB[lb] = self.members[g, t]
                            lb += 1
                        else:
                            self.bufA[la] = self.members[g, t]
                            la += 1
                    if lb > 0:
                        break
                g1 = g
                g2 = -1
                typ = 1
        elif r == TRANSFER:
            while True:
                i = self.randint(self.n)
                d = self.randint(self.nactive)
                g = self.block[i]
                h = self.active[d]
                sg = self.size[g]
                if h == g:
                    if sg == 1:
                        continue
                    if sg == 2:
                        other = self.members[g, 0] if self.members[g, 0] != i else self.members[g, 1]
                        if i > other:
                            continue
                    h = -1
                elif sg == 1 and self.size[h] == 1 and i > self.members[h, 0]:
                    continue
                break
            la = 0
            for t in range(sg):
                self.bufA[la] = self.members[g, t]
                la += 1
            p = self.pos[i]
            self.bufA[p] = self.bufA[sg - 1]
            la = sg - 1
            if h < 0:
                self.bufB[0] = i
                lb = 1
            else:
                lb = 0
                for t in range(self.size[h]):
                    self.bufB[lb] = self.members[h, t]
                    lb += 1
                self.bufB[lb] = i
                lb += 1
            g1 = g
            g2 = h
            typ = 2
        else:
            while True:
                i = self.randint(self.n)
                j = self.randint(self.n)
                g = self.block[i]
                h = self.block[j]
                if g == h or i > j:
                    continue
                sg = self.size[g]
                sh = self.size[h]
                if sg == 1 and sh == 1:
                    continue
                if sg == 2 and sh == 2:
                    lowest = self.members[g, 0]
                    if self.members[g, 1] < lowest:
                        lowest = self.members[g, 1]
                    if self.members[h, 0] < lowest:
                        lowest = self.members[h, 0]
                    if self.members[h, 1] < lowest:
                        lowest = self.members[h, 1]
                    if lowest != i and lowest != j:
                        continue
                break
            for t in range(sg):
                self.bufA[t] = self.members[g, t]
            self.bufA[self.pos[i]] = j
            la = sg
            for t in range(sh):
                self.bufB[t] = self.members[h, t]
            self.bufB[self.pos[j]] = i
            lb = sh
            g1 = g
            g2 = h
            typ = 3

        self.proposals[r] += 1
        valid = 1
        if self.reject_invalid:
            if la > 0 and (la < self.lo or la > self.hi):
                valid = 0
            if lb > 0 and (lb < self.lo or lb > self.hi):
                valid = 0
        if valid:
            nagg = agg
            self.agg_add(&nagg, self.size[g1], -1)
            if g2 >= 0:
                self.agg_add(&nagg, self.size[g2], -1)
            if la > 0:
                self.agg_add(&nagg, la, 1)
            if lb > 0:
                self.agg_add(&nagg, lb, 1)
            bwd = self.count(r, &nagg)
            loga = 0.0
            for k in range(self.K):
                fnew = self.block_value(k, &self.bufA[0], la) + self.block_value(k, &self.bufB[0], lb)
                fold = self.block_value(k, &self.members[g1, 0], self.size[g1])
                if g2 >= 0:
                    fold += self.block_value(k, &self.members[g2, 0], self.size[g2])
                self.delta[k] = fnew - fold
                loga += self.alpha[k] * self.delta[k]
            loga += (log(fwd) - log(bwd)
                     + log(self.available_weight(&agg))
                     - log(self.available_weight(&nagg)))
            if loga >= 0.0 or self.uniform() < exp(loga):
                self.apply(typ, g1, g2, la, lb, i, j)
                for k in range(self.K):
                    self.stats[k] += self.delta[k]
                self.accepts[r] += 1
        self.steps += 1
        if self.refresh_every > 0 and self.steps % self.refresh_every == 0:
            self._refresh()

    cdef void apply(self, int64_t typ, int64_t g1, int64_t g2, int64_t la, int64_t lb,
                    int64_t i, int64_t j) noexcept nogil:
        cdef int64_t t, x, p, last, slot, pi, pj
        if typ == 0:
            for t in range(self.size[g2]):
                x = self.members[g2, t]
                self.members[g1, self.size[g1]] = x
                self.block[x] = g1
                self.pos[x] = self.size[g1]
                self.size[g1] += 1
            self.drop_slot(g2)
        elif typ == 1:
            for p in range(la):
                x = self.bufA[p]
                self.members[g1, p] = x
                self.pos[x] = p
            self.size[g1] = la
            slot = self.new_slot()
            for p in range(lb):
                x = self.bufB[p]
                self.members[slot, p] = x
                self.block[x] = slot
                self.pos[x] = p
            self.size[slot] = lb
        elif typ == 2:
            p = self.pos[i]
            last = self.members[g1, self.size[g1] - 1]
            self.members[g1, p] = last
            self.pos[last] = p
            self.size[g1] -= 1
            if g2 < 0:
                g2 = self.new_slot()
            self.members[g2, self.size[g2]] = i
            self.block[i] = g2
            self.pos[i] = self.size[g2]
            self.size[g2] += 1
            if self.size[g1] == 0:
                self.drop_slot(g1)
        else:
            pi = self.pos[i]
            pj = self.pos[j]
            self.members[g1, pi] = j
            self.members[g2, pj] = i
            self.block[i] = g2
            self.block[j] = g1
            self.pos[i] = pj
            self.pos[j] = pi

    cdef void _step(self, int64_t nsteps) noexcept nogil:
        cdef int64_t t
        if self.n < 2:
            self.steps += nsteps
            return
        for t in range(nsteps):
            self.one_step()

    def step(self, int64_t nsteps):
        with nogil:
            self._step(nsteps)

    # -- public helpers --------------------------------------------------------------------------
    def set_alpha(self, alpha):
        cdef int k
        for k in range(self.K):
            self.alpha[k] = float(alpha[k])

    def get_stats(self):
        return np.array(self.stats, dtype=np.float64)

    def get_counters(self):
        return (np.array([self.proposals[0], self.proposals[1], self.proposals[2]], dtype=np.int64),
                np.array([self.accepts[0], self.accepts[1], self.accepts[2]], dtype=np.int64))

    cdef void write_membership(self, int64_t[:, :] rows, int64_t t) noexcept nogil:
        cdef int64_t i, slot, nxt = 0
        for i in range(self.n):
            self.bufB[i] = -1
        for i in range(self.n):
            slot = self.block[i]
            if self.bufB[slot] < 0:
                self.bufB[slot] = nxt
                nxt += 1
            rows[t, i] = self.bufB[slot]

    def sample(self, int64_t num, int64_t thinning, bint only_valid):
        rows = np.zeros((num, self.n), dtype=np.int64)
        stats = np.zeros((num, self.K), dtype=np.float64)
        cdef int64_t t
        cdef int k
        cdef double[:, :] sv = stats
        cdef int64_t[:, :] rv = rows
        with nogil:
            for t in range(num):
                self._step(thinning)
                if only_valid:
                    while not self._in_bounds():
                        self._step(thinning)
                self.write_membership(rv, t)
                for k in range(self.K):
                    sv[t, k] = self.stats[k]
        return rows, stats
