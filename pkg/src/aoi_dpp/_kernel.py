"""Compiled slot loop. Must stay decision-for-decision identical to ``sim.step``."""

import numpy as np
from numba import njit

POLICY_DPP = 0
POLICY_GREEDY = 1
POLICY_STATIONARY = 2

# indices into the scalar accumulator array
ACC_COST = 0
ACC_B = 1


@njit(cache=True, nogil=True)
def run_chunk(code, v, q_sample, q_retx, p, a_max, c_s, c_tr,
              u, t0, horizon, stride,
              age, pend, buf_slot, queue,
              sum_age, sum_queue, n_tx, n_sample, n_deliv,
              q_half, q_tenth, half_start, tenth_start,
              first_above, first_recover, last_above, acc,
              tr_slot, tr_age, tr_queue, tr_s, tr_mu, tr_d, tr_cost,
              tr_avg_age, tr_avg_queue, tr_avg_cost, rec):
    n = age.shape[0]
    for k in range(u.shape[0]):
        t = t0 + k
        upol = u[k, 0]
        uch = u[k, 1]

        # decision: kind 0 idle, 1 sample+transmit, 2 retransmit
        kind = 0
        user = -1
        if code == POLICY_DPP:
            best = 0.0
            for i in range(n):
                if pend[i]:
                    sc = -queue[i] * p[i] * (age[i] - (t - buf_slot[i])) + v * c_tr[i]
                    if sc < best:
                        best = sc
                        kind = 2
                        user = i
                sc = -queue[i] * p[i] * age[i] + v * (c_tr[i] + c_s[i])
                if sc < best:
                    best = sc
                    kind = 1
                    user = i
        elif code == POLICY_GREEDY:
            user = 0
            best = age[0] / a_max[0]
            for i in range(1, n):
                r = age[i] / a_max[i]
                if r > best:
                    best = r
                    user = i
            kind = 1
        else:
            cum = 0.0
            for i in range(n):
                cum += q_sample[i]
                if upol < cum:
                    kind = 1
                    user = i
                    break
                cum += q_retx[i]
                if upol < cum:
                    if pend[i]:
                        kind = 2
                        user = i
                    break

        cost = 0.0
        if kind == 1:
            cost = c_tr[user] + c_s[user]
        elif kind == 2:
            cost = c_tr[user]

        # statistics of the state observed at the start of slot t
        b = 0.0
        for i in range(n):
            sum_age[i] += age[i]
            sum_queue[i] += queue[i]
            if t >= half_start:
                q_half[i] += queue[i]
            if t >= tenth_start:
                q_tenth[i] += queue[i]
            b += ((age[i] + 1) ** 2 + a_max[i] ** 2) / 2
        acc[ACC_COST] += cost
        acc[ACC_B] += b

        record = (t + 1) % stride == 0
        r = rec[0]
        if record:
            tr_slot[r] = t
            for i in range(n):
                tr_age[r, i] = age[i]
                tr_queue[r, i] = queue[i]
                tr_s[r, i] = 0
                tr_mu[r, i] = 0
                tr_d[r, i] = 0
            tr_cost[r] = cost

        delivered = 0
        if kind != 0:
            if kind == 1:
                buf_slot[user] = t
                pend[user] = 1
            n_tx[user] += 1
            if kind == 1:
                n_sample[user] += 1
            if uch < p[user]:
                delivered = 1
                n_deliv[user] += 1
            if record:
                tr_mu[r, user] = 1
                tr_s[r, user] = 1 if kind == 1 else 0
                tr_d[r, user] = delivered

        for i in range(n):
            if delivered == 1 and i == user:
                age[i] = (t - buf_slot[i]) + 1
                pend[i] = 0
            else:
                age[i] += 1
            queue[i] = max(queue[i] - a_max[i], 0.0) + age[i]

        # running average age over slots 0..t
        for i in range(n):
            if sum_age[i] > a_max[i] * (t + 1):
                if first_above[i] < 0:
                    first_above[i] = t
                last_above[i] = t
            elif first_above[i] >= 0 and first_recover[i] < 0 and sum_age[i] < a_max[i] * (t + 1):
                first_recover[i] = t

        if record:
            for i in range(n):
                tr_avg_age[r, i] = sum_age[i] / (t + 1)
                tr_avg_queue[r, i] = sum_queue[i] / (t + 1)
            tr_avg_cost[r] = acc[ACC_COST] / (t + 1)
            rec[0] = r + 1
