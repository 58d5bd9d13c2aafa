"""Pure-Python (vectorized numpy) kernels for the evolution core.

Semantics contract shared with the compiled twin `_speedups`:

Configuration indexing.  A configuration of a machine with S control states,
T tapes and window W is (q, (content_0, head_0), ..., (content_{T-1},
head_{T-1})) with content a base-3 number of W digits (cell i is digit i,
symbol order 0, 1, #) and head in [0, W).  Per-tape code = content * W +
head, block size B = 3^W * W, and

    index = ((q * B + code_0) * B + code_1) * B + code_{T-1}

so the control state is the slowest factor and final-state configurations
occupy one contiguous slice.

Rule table layout.  Rules are grouped by (q, readcode) where readcode =
sum_t digit_t * 3^t over the symbols under the heads.  `offsets` has length
S * 3^T + 1; group g occupies rows offsets[g]:offsets[g+1] of the flat
arrays (rule_q, rule_write, rule_move, rule_amp).  write/move are packed the
same way (base 3 / base 2 over tapes, move bit 1 = R).

The builder completes the final state with the revival rule
(final, syms) -> (start, syms, all R), amplitude 1.
"""

from __future__ import annotations

import numpy as np

BACKEND = "fallback"


def _decode(indices: np.ndarray, n_tapes: int, window: int, block: int):
    """Split raw indices into control index and per-tape (content, head)."""
    rem = indices
    codes = []
    for _ in range(n_tapes):
        codes.append(rem % block)
        rem = rem // block
    codes.reverse()  # slowest-first order: tape 0 first
    states = rem
    contents = [c // window for c in codes]
    heads = [c % window for c in codes]
    return states, contents, heads


def assemble_evolution_coo(
    n_states: int,
    n_tapes: int,
    window: int,
    start: int,
    final: int,
    offsets: np.ndarray,
    rule_q: np.ndarray,
    rule_write: np.ndarray,
    rule_move: np.ndarray,
    rule_amp: np.ndarray,
):
    """Assemble COO triplets (rows, cols, amps) of the evolution operator.

    Returns (rows, cols, amps, first_missing) where first_missing is the
    lowest configuration index whose (state, readcode) group is empty, or -1
    when every non-final configuration has at least one rule.
    """
    window = int(window)
    block = 3**window * window
    dim = n_states * block**n_tapes
    pow3 = 3 ** np.arange(window, dtype=np.int64)

    src = np.arange(dim, dtype=np.int64)
    states, contents, heads = _decode(src, n_tapes, window, block)

    read = np.zeros(dim, dtype=np.int64)
    for t in range(n_tapes):
        read += ((contents[t] // pow3[heads[t]]) % 3) * 3**t

    rows_parts: list[np.ndarray] = []
    cols_parts: list[np.ndarray] = []
    amps_parts: list[np.ndarray] = []

    # Revival completion on the final-state slice: control -> start, same
    # contents, every head advances one cell (mod window).
    fin = states == final
    if np.any(fin):
        tgt = np.zeros(int(fin.sum()), dtype=np.int64) + start
        for t in range(n_tapes):
            code = contents[t][fin] * window + (heads[t][fin] + 1) % window
            tgt = tgt * block + code
        rows_parts.append(tgt)
        cols_parts.append(src[fin])
        amps_parts.append(np.ones(tgt.shape[0], dtype=np.complex128))

    group = states * 3**n_tapes + read
    order = np.argsort(group[~fin], kind="stable")
    src_nf = src[~fin][order]
    group_nf = group[~fin][order]

    first_missing = -1
    bounds = np.searchsorted(group_nf, np.arange(n_states * 3**n_tapes + 1))
    for g in range(n_states * 3**n_tapes):
        lo, hi = bounds[g], bounds[g + 1]
        if lo == hi:
            continue
        members = src_nf[lo:hi]
        r0, r1 = int(offsets[g]), int(offsets[g + 1])
        if r0 == r1:
            cand = int(members.min())
            if first_missing < 0 or cand < first_missing:
                first_missing = cand
            continue
        m_states, m_contents, m_heads = _decode(members, n_tapes, window, block)
        for r in range(r0, r1):
            wcode = int(rule_write[r])
            mcode = int(rule_move[r])
            tgt = np.zeros(members.shape[0], dtype=np.int64) + int(rule_q[r])
            for t in range(n_tapes):
                w_digit = (wcode // 3**t) % 3
                r_digit = (m_contents[t] // pow3[m_heads[t]]) % 3
                content = m_contents[t] + (w_digit - r_digit) * pow3[m_heads[t]]
                step = 1 if (mcode >> t) & 1 else -1
                head = (m_heads[t] + step) % window
                tgt = tgt * block + content * window + head
            rows_parts.append(tgt)
            cols_parts.append(members)
            amps_parts.append(np.full(members.shape[0], complex(rule_amp[r])))

    if rows_parts:
        rows = np.concatenate(rows_parts)
        cols = np.concatenate(cols_parts)
        amps = np.concatenate(amps_parts)
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        amps = np.zeros(0, dtype=np.complex128)
    return rows, cols, amps, first_missing


def classify_output_configs(
    indices: np.ndarray,
    n_states: int,
    n_tapes: int,
    window: int,
    final: int,
    out_tape: int,
):
    """Classify configurations for output extraction.

    For each index: kind 1 = final control state with output tape of the
    form s### (a 0/1 string starting at the origin followed only by blanks),
    kind 0 = everything else (these decohere onto the empty state).  For
    kind-1 rows, out_len/out_val give the string (cell 0 is the most
    significant bit) and class_key identifies the coherence class: all head
    positions plus the contents of the non-output tapes.
    """
    indices = np.asarray(indices, dtype=np.int64)
    window = int(window)
    block = 3**window * window
    states, contents, heads = _decode(indices, n_tapes, window, block)

    kind = (states == final).astype(np.int8)
    out = contents[out_tape]
    digits = np.empty((window, indices.shape[0]), dtype=np.int64)
    rem = out.copy()
    for i in range(window):
        digits[i] = rem % 3
        rem //= 3

    out_len = np.zeros(indices.shape[0], dtype=np.int16)
    out_val = np.zeros(indices.shape[0], dtype=np.int64)
    seen_blank = np.zeros(indices.shape[0], dtype=bool)
    proper = np.ones(indices.shape[0], dtype=bool)
    for i in range(window):
        d = digits[i]
        is_blank = d == 2
        # a 0/1 cell after a blank breaks the s### shape
        proper &= ~(seen_blank & ~is_blank)
        grow = ~seen_blank & ~is_blank
        out_val = np.where(grow, out_val * 2 + d, out_val)
        out_len = np.where(grow, out_len + 1, out_len)
        seen_blank |= is_blank
    kind = np.where(proper, kind, 0).astype(np.int8)

    class_key = np.zeros(indices.shape[0], dtype=np.int64)
    for t in range(n_tapes):
        class_key = class_key * window + heads[t]
    for t in range(n_tapes):
        if t != out_tape:
            class_key = class_key * 3**window + contents[t]

    out_len = np.where(kind == 1, out_len, 0).astype(np.int16)
    out_val = np.where(kind == 1, out_val, 0)
    class_key = np.where(kind == 1, class_key, 0)
    return kind, out_len, out_val, class_key
