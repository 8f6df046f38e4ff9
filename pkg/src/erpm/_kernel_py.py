"""Pure-Python Metropolis-Hastings kernel.

Statement-for-statement twin of ``_kernel.pyx``: same random stream
(xoshiro256** seeded through splitmix64), same proposal rejection loops and
same floating-point operation order, so both backends produce identical
chains for identical inputs.
"""

import math

import numpy as np

MASK = 0xFFFFFFFFFFFFFFFF
K_SIZE, K_DYADIC, K_ALLSAME, K_DISTINCT, K_RANGE, K_VARIANCE, K_GSOC = range(7)
MERGE_SPLIT, PERMUTE, TRANSFER = 0, 1, 2


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


def _splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


class Chain:
    def __init__(self, membership, kind, normalized, size_table, dyad, values, codes,
                 alpha, seed, weights, sigma_min, sigma_max, reject_invalid=True,
                 refresh_every=10000):
        n = len(membership)
        self.n = n
        self.K = len(kind)
        self.kind = [int(x) for x in kind]
        self.norm = [int(x) for x in normalized]
        self.table = np.asarray(size_table, dtype=float).tolist()
        self.dyad = np.asarray(dyad, dtype=float).tolist()
        self.values = np.asarray(values, dtype=float).tolist()
        self.codes = np.asarray(codes, dtype=np.int64).tolist()
        self.alpha = [float(a) for a in alpha]
        self.lo = int(sigma_min)
        self.hi = int(sigma_max)
        self.reject_invalid = bool(reject_invalid)
        self.refresh_every = int(refresh_every)
        w = [float(x) for x in weights]
        tot = w[0] + w[1] + w[2]
        self.w = [w[0] / tot, w[1] / tot, w[2] / tot]
        self.cw = [w[0] / tot, (w[0] + w[1]) / tot, 1.0]
        self.wpos = [x > 0 for x in w]
        self.proposals = [0, 0, 0]
        self.accepts = [0, 0, 0]
        self.steps = 0

        st = int(seed) & MASK
        self.s = []
        for _ in range(4):
            st, z = _splitmix(st)
            self.s.append(z)

        self.block = [0] * n
        self.pos = [0] * n
        self.members = [[0] * n for _ in range(n)]
        self.size = [0] * n
        self.active = [0] * n
        self.apos = [0] * n
        self.nactive = 0
        self.free = [0] * n
        self.nfree = 0
        self.set_membership(membership)

    # -- random numbers -----------------------------------------------------------
    def _next(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK, 7) * 9) & MASK
        t = (s1 << 17) & MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self):
        return (self._next() >> 11) * (1.0 / 9007199254740992.0)

    def randint(self, m):
        return int(self.uniform() * m)

    # -- state management -------------------------------------------------------------
    def set_membership(self, membership):
        n = self.n
        self.nactive = 0
        self.nfree = 0
        self.size = [0] * n
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
            self.members[slot][self.size[slot]] = i
            self.size[slot] += 1
        self.free = [0] * n
        for slot in range(n - 1, len(label_slot) - 1, -1):
            self.free[self.nfree] = slot
            self.nfree += 1
        self.stats = [0.0] * self.K
        self.refresh()

    def refresh(self):
        for k in range(self.K):
            acc = 0.0
            for a in range(self.nactive):
                slot = self.active[a]
                acc += self.block_value(k, self.members[slot], self.size[slot])
            self.stats[k] = acc

    def _new_slot(self):
        self.nfree -= 1
        slot = self.free[self.nfree]
        self.active[self.nactive] = slot
        self.apos[slot] = self.nactive
        self.nactive += 1
        self.size[slot] = 0
        return slot

    def _drop_slot(self, slot):
        a = self.apos[slot]
        last = self.active[self.nactive - 1]
        self.active[a] = last
        self.apos[last] = a
        self.nactive -= 1
        self.free[self.nfree] = slot
        self.nfree += 1
        self.size[slot] = 0

    def membership(self):
        out = [0] * self.n
        labels = {}
        for i in range(self.n):
            slot = self.block[i]
            if slot not in labels:
                labels[slot] = len(labels)
            out[i] = labels[slot]
        return out

    def in_bounds(self):
        for a in range(self.nactive):
            s = self.size[self.active[a]]
            if s < self.lo or s > self.hi:
                return False
        return True

    # -- statistics -----------------------------------------------------------------------
    def block_value(self, k, buf, m):
        if m == 0:
            return 0.0
        kind = self.kind[k]
        if kind == K_SIZE:
            return self.table[k][m]
        if kind == K_DYADIC:
            w = self.dyad[k]
            t = 0.0
            for a in range(m):
                row = w[buf[a]]
                for b in range(a + 1, m):
                    t += row[buf[b]]
            if self.norm[k]:
                if m > 1:
                    return t / (m * (m - 1) / 2.0)
                return 0.0
            return t
        if kind == K_ALLSAME or kind == K_DISTINCT:
            codes = self.codes[k]
            distinct = 0
            for a in range(m):
                c = codes[buf[a]]
                seen = False
                for b in range(a):
                    if codes[buf[b]] == c:
                        seen = True
                        break
                if not seen:
                    distinct += 1
            if kind == K_ALLSAME:
                v = 1.0 if distinct == 1 else 0.0
            else:
                v = float(distinct)
        else:
            vals = self.values[k]
            cnt = 0
            total = 0.0
            lo = 0.0
            hi = 0.0
            for a in range(m):
                x = vals[buf[a]]
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
                    x = vals[buf[a]]
                    if x != x:
                        continue
                    d = x - mu
                    dev += d * d
                v = dev / cnt
        if self.norm[k]:
            return v / m
        return v

    # -- neighbor counts ---------------------------------------------------------------------
    def _aggregates(self):
        k = self.nactive
        singles = 0
        pairs = 0
        sumsq = 0
        sumbig = 0
        sumpow = 0.0
        for a in range(k):
            s = self.size[self.active[a]]
            if s == 1:
                singles += 1
            elif s == 2:
                pairs += 1
            if s >= 2:
                sumbig += s
            sumsq += s * s
            sumpow += math.ldexp(1.0, s - 1) - 1.0
        return [k, singles, pairs, sumsq, sumbig, sumpow]

    @staticmethod
    def _agg_add(agg, s, sign):
        agg[0] += sign
        if s == 1:
            agg[1] += sign
        elif s == 2:
            agg[2] += sign
        if s >= 2:
            agg[4] += sign * s
        agg[3] += sign * s * s
        agg[5] += sign * (math.ldexp(1.0, s - 1) - 1.0)

    def _count(self, r, agg):
        n = self.n
        k, singles, pairs, sumsq, sumbig, sumpow = agg
        if r == MERGE_SPLIT:
            return k * (k - 1) / 2.0 + sumpow
        if r == TRANSFER:
            return float(n * (k - 1) + sumbig - pairs - singles * (singles - 1) // 2)
        return float((n * n - sumsq) // 2 - pairs * (pairs - 1) - singles * (singles - 1) // 2)

    def _available_weight(self, agg):
        # relation draws with no neighbors are resampled, so the chance of
        # picking a relation depends on the state through this total
        tot = 0.0
        for r in range(3):
            if self.wpos[r] and self._count(r, agg) > 0:
                tot += self.w[r]
        return tot

    # -- proposals ---------------------------------------------------------------------------
    def _propose_merge_split(self, agg):
        k = agg[0]
        nmerge = k * (k - 1) / 2.0
        x = self.uniform() * (nmerge + agg[5])
        if x < nmerge:
            q = int(x)
            a = 0
            while q >= k - 1 - a:
                q -= k - 1 - a
                a += 1
            b = a + 1 + q
            g1 = self.active[a]
            g2 = self.active[b]
            A = self.members[g1][: self.size[g1]] + self.members[g2][: self.size[g2]]
            return (0, g1, g2, A, [], -1, -1)
        x -= nmerge
        g = -1
        last = -1
        for a in range(k):
            slot = self.active[a]
            s = self.size[slot]
            if s < 2:
                continue
            last = slot
            w = math.ldexp(1.0, s - 1) - 1.0
            if x < w:
                g = slot
                break
            x -= w
        if g < 0:
            g = last
        mem = self.members[g]
        s = self.size[g]
        while True:
            A = [mem[0]]
            B = []
            for t in range(1, s):
                if self.uniform() < 0.5:
                    B.append(mem[t])
                else:
                    A.append(mem[t])
            if B:
                break
        return (1, g, -1, A, B, -1, -1)

    def _propose_transfer(self):
        n = self.n
        while True:
            i = self.randint(n)
            d = self.randint(self.nactive)
            g = self.block[i]
            h = self.active[d]
            sg = self.size[g]
            if h == g:
                if sg == 1:
                    continue
                if sg == 2:
                    other = self.members[g][0] if self.members[g][0] != i else self.members[g][1]
                    if i > other:
                        continue
                h = -1
            elif sg == 1 and self.size[h] == 1 and i > self.members[h][0]:
                continue
            break
        mem = self.members[g]
        A = mem[: sg]
        p = self.pos[i]
        A[p] = A[sg - 1]
        A = A[: sg - 1]
        if h < 0:
            B = [i]
        else:
            B = self.members[h][: self.size[h]] + [i]
        return (2, g, h, A, B, i, -1)

    def _propose_permute(self):
        n = self.n
        while True:
            i = self.randint(n)
            j = self.randint(n)
            g = self.block[i]
            h = self.block[j]
            if g == h or i > j:
                continue
            sg = self.size[g]
            sh = self.size[h]
            if sg == 1 and sh == 1:
                continue
            if sg == 2 and sh == 2:
                lowest = min(self.members[g][0], self.members[g][1],
                             self.members[h][0], self.members[h][1])
                if lowest != i and lowest != j:
                    continue
            break
        A = self.members[g][: sg]
        A[self.pos[i]] = j
        B = self.members[h][: sh]
        B[self.pos[j]] = i
        return (3, g, h, A, B, i, j)

    # -- moves ----------------------------------------------------------------------------------
    def _apply(self, move):
        typ, g1, g2, A, B, i, j = move
        if typ == 0:
            for x in self.members[g2][: self.size[g2]]:
                self.members[g1][self.size[g1]] = x
                self.block[x] = g1
                self.pos[x] = self.size[g1]
                self.size[g1] += 1
            self._drop_slot(g2)
        elif typ == 1:
            for p, x in enumerate(A):
                self.members[g1][p] = x
                self.pos[x] = p
            self.size[g1] = len(A)
            slot = self._new_slot()
            for p, x in enumerate(B):
                self.members[slot][p] = x
                self.block[x] = slot
                self.pos[x] = p
            self.size[slot] = len(B)
        elif typ == 2:
            p = self.pos[i]
            last = self.members[g1][self.size[g1] - 1]
            self.members[g1][p] = last
            self.pos[last] = p
            self.size[g1] -= 1
            if g2 < 0:
                g2 = self._new_slot()
            self.members[g2][self.size[g2]] = i
            self.block[i] = g2
            self.pos[i] = self.size[g2]
            self.size[g2] += 1
            if self.size[g1] == 0:
                self._drop_slot(g1)
        else:
            pi = self.pos[i]
            pj = self.pos[j]
            self.members[g1][pi] = j
            self.members[g2][pj] = i
            self.block[i] = g2
            self.block[j] = g1
            self.pos[i] = pj
            self.pos[j] = pi

    def step(self, nsteps):
        if self.n < 2:
            self.steps += nsteps
            return
        for _ in range(nsteps):
            self._one_step()

    def _one_step(self):
        agg = self._aggregates()
        while True:
            u = self.uniform()
            r = 0 if u < self.cw[0] else (1 if u < self.cw[1] else 2)
            if not self.wpos[r]:
                continue
            fwd = self._count(r, agg)
            if fwd > 0:
                break
        if r == MERGE_SPLIT:
            move = self._propose_merge_split(agg)
        elif r == TRANSFER:
            move = self._propose_transfer()
        else:
            move = self._propose_permute()
        typ, g1, g2, A, B, i, j = move
        self.proposals[r] += 1
        la = len(A)
        lb = len(B)
        valid = True
        if self.reject_invalid:
            if la > 0 and (la < self.lo or la > self.hi):
                valid = False
            if lb > 0 and (lb < self.lo or lb > self.hi):
                valid = False
        if valid:
            nagg = list(agg)
            self._agg_add(nagg, self.size[g1], -1)
            if g2 >= 0:
                self._agg_add(nagg, self.size[g2], -1)
            if la > 0:
                self._agg_add(nagg, la, 1)
            if lb > 0:
                self._agg_add(nagg, lb, 1)
            bwd = self._count(r, nagg)
            delta = [0.0] * self.K
            loga = 0.0
            for k in range(self.K):
                fnew = self.block_value(k, A, la) + self.block_value(k, B, lb)
                fold = self.block_value(k, self.members[g1], self.size[g1])
                if g2 >= 0:
                    fold += self.block_value(k, self.members[g2], self.size[g2])
                delta[k] = fnew - fold
                loga += self.alpha[k] * delta[k]
            loga += (math.log(fwd) - math.log(bwd)
                     + math.log(self._available_weight(agg))
                     - math.log(self._available_weight(nagg)))
            if loga >= 0.0 or self.uniform() < math.exp(loga):
                self._apply(move)
                for k in range(self.K):
                    self.stats[k] += delta[k]
                self.accepts[r] += 1
        self.steps += 1
        if self.refresh_every > 0 and self.steps % self.refresh_every == 0:
            self.refresh()

    # -- public helpers -----------------------------------------------------------------------
    def set_alpha(self, alpha):
        self.alpha = [float(a) for a in alpha]

    def get_stats(self):
        return np.array(self.stats, dtype=float)

    def get_membership(self):
        return np.array(self.membership(), dtype=np.int64)

    def get_counters(self):
        return np.array(self.proposals, dtype=np.int64), np.array(self.accepts, dtype=np.int64)

    def sample(self, num, thinning, only_valid):
        rows = np.zeros((num, self.n), dtype=np.int64)
        stats = np.zeros((num, self.K))
        for t in range(num):
            self.step(thinning)
            if only_valid:
                while not self.in_bounds():
                    self.step(thinning)
            rows[t] = self.membership()
            stats[t] = self.stats
        return rows, stats
