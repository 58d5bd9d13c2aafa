# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the evolution core.

Same contract as qtmlab._core.fallback (see its module docstring for the
configuration indexing and rule-table layout); single fused pass per kernel
instead of the fallback's sort-and-slice passes.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def assemble_evolution_coo(
    int n_states,
    int n_tapes,
    int window,
    int start,
    int final,
    cnp.int64_t[::1] offsets,
    cnp.int64_t[::1] rule_q,
    cnp.int64_t[::1] rule_write,
    cnp.int64_t[::1] rule_move,
    cnp.complex128_t[::1] rule_amp,
):
    cdef cnp.int64_t block = 1
    cdef int i, t
    for i in range(window):
        block *= 3
    block *= window
    cdef cnp.int64_t dim = n_states
    for t in range(n_tapes):
        dim *= block

    cdef cnp.int64_t[::1] pow3 = np.ones(window, dtype=np.int64)
    for i in range(1, window):
        pow3[i] = pow3[i - 1] * 3

    cdef cnp.int64_t pow3t = 1
    for t in range(n_tapes):
        pow3t *= 3

    # upper bound on emitted entries: max rules per group times dim
    cdef cnp.int64_t max_out = 0
    cdef cnp.int64_t g
    for g in range(n_states * pow3t):
        if offsets[g + 1] - offsets[g] > max_out:
            max_out = offsets[g + 1] - offsets[g]
    if max_out < 1:
        max_out = 1
    cdef cnp.int64_t cap = dim * max_out

    rows_arr = np.empty(cap, dtype=np.int64)
    cols_arr = np.empty(cap, dtype=np.int64)
    amps_arr = np.empty(cap, dtype=np.complex128)
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.int64_t[::1] cols = cols_arr
    cdef cnp.complex128_t[::1] amps = amps_arr

    cdef cnp.int64_t[::1] contents = np.zeros(n_tapes, dtype=np.int64)
    cdef cnp.int64_t[::1] heads = np.zeros(n_tapes, dtype=np.int64)

    cdef cnp.int64_t src, rem, code, q, read, tgt, content, head, out = 0
    cdef cnp.int64_t first_missing = -1
    cdef cnp.int64_t r, r0, r1, wcode, mcode, p3t
    cdef cnp.int64_t rdig, wdig

    for src in range(dim):
        rem = src
        for t in range(n_tapes - 1, -1, -1):
            code = rem % block
            rem //= block
            contents[t] = code // window
            heads[t] = code % window
        q = rem

        if q == final:
            tgt = start
            for t in range(n_tapes):
                tgt = tgt * block + contents[t] * window + (heads[t] + 1) % window
            rows[out] = tgt
            cols[out] = src
            amps[out] = 1.0
            out += 1
            continue

        read = 0
        p3t = 1
        for t in range(n_tapes):
            read += ((contents[t] // pow3[heads[t]]) % 3) * p3t
            p3t *= 3

        g = q * p3t + read
        r0 = offsets[g]
        r1 = offsets[g + 1]
        if r0 == r1:
            if first_missing < 0:
                first_missing = src
            continue
        for r in range(r0, r1):
            wcode = rule_write[r]
            mcode = rule_move[r]
            tgt = rule_q[r]
            for t in range(n_tapes):
                rdig = (contents[t] // pow3[heads[t]]) % 3
                wdig = wcode % 3
                wcode //= 3
                content = contents[t] + (wdig - rdig) * pow3[heads[t]]
                if (mcode >> t) & 1:
                    head = (heads[t] + 1) % window
                else:
                    head = (heads[t] + window - 1) % window
                tgt = tgt * block + content * window + head
            rows[out] = tgt
            cols[out] = src
            amps[out] = rule_amp[r]
            out += 1

    return rows_arr[:out], cols_arr[:out], amps_arr[:out], int(first_missing)


def classify_output_configs(
    cnp.int64_t[::1] indices,
    int n_states,
    int n_tapes,
    int window,
    int final,
    int out_tape,
):
    cdef cnp.int64_t block = 1
    cdef int i, t
    for i in range(window):
        block *= 3
    cdef cnp.int64_t pow3w = block
    block *= window

    cdef cnp.int64_t n = indices.shape[0]
    kind_arr = np.zeros(n, dtype=np.int8)
    len_arr = np.zeros(n, dtype=np.int16)
    val_arr = np.zeros(n, dtype=np.int64)
    key_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int8_t[::1] kind = kind_arr
    cdef cnp.int16_t[::1] out_len = len_arr
    cdef cnp.int64_t[::1] out_val = val_arr
    cdef cnp.int64_t[::1] class_key = key_arr

    cdef cnp.int64_t[::1] contents = np.zeros(n_tapes, dtype=np.int64)
    cdef cnp.int64_t[::1] heads = np.zeros(n_tapes, dtype=np.int64)

    cdef cnp.int64_t j, rem, code, q, out, d, val, key
    cdef int slen, proper, seen_blank

    for j in range(n):
        rem = indices[j]
        for t in range(n_tapes - 1, -1, -1):
            code = rem % block
            rem //= block
            contents[t] = code // window
            heads[t] = code % window
        q = rem
        if q != final:
            continue

        out = contents[out_tape]
        slen = 0
        val = 0
        proper = 1
        seen_blank = 0
        for i in range(window):
            d = out % 3
            out //= 3
            if d == 2:
                seen_blank = 1
            elif seen_blank:
                proper = 0
                break
            else:
                val = val * 2 + d
                slen += 1
        if not proper:
            continue

        key = 0
        for t in range(n_tapes):
            key = key * window + heads[t]
        for t in range(n_tapes):
            if t != out_tape:
                key = key * pow3w + contents[t]

        kind[j] = 1
        out_len[j] = slen
        out_val[j] = val
        class_key[j] = key

    return kind_arr, len_arr, val_arr, key_arr
