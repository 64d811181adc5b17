"""Numba kernels on sign/mask bitplanes.

A ternary matrix is stored as two ``uint64`` planes of shape
``(rows, ceil(cols / 64))``: ``mask`` has bit ``c`` of a row set where the
entry in column ``c`` is nonzero, ``sign`` has it set where the entry is
negative. Bit ``c`` lives in word ``c // 64`` at position ``c % 64``
(least significant first).
"""

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

WORD = 64


@intrinsic
def popcount64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@intrinsic
def ctz64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.cttz(args[0], ir.Constant(ir.IntType(1), 1))

    return sig, codegen


def n_words(cols):
    return (cols + WORD - 1) // WORD


@njit(cache=True)
def pack(values):
    rows, cols = values.shape
    words = (cols + 63) // 64
    mask = np.zeros((rows, words), dtype=np.uint64)
    sign = np.zeros((rows, words), dtype=np.uint64)
    one = np.uint64(1)
    for i in range(rows):
        for c in range(cols):
            v = values[i, c]
            if v != 0:
                bit = one << np.uint64(c & 63)
                mask[i, c >> 6] |= bit
                if v < 0:
                    sign[i, c >> 6] |= bit
    return mask, sign


@njit(cache=True)
def unpack(mask, sign, cols):
    rows = mask.shape[0]
    out = np.zeros((rows, cols), dtype=np.int8)
    one = np.uint64(1)
    for i in range(rows):
        for c in range(cols):
            bit = one << np.uint64(c & 63)
            if mask[i, c >> 6] & bit:
                out[i, c] = -1 if sign[i, c >> 6] & bit else 1
    return out


@njit(cache=True)
def accumulate_row(mask_row, sign_row, X, acc, idx, neg):
    """``acc = sum_k w_k X[k]`` for a ternary row ``w``, using only adds and subtracts.

    ``idx`` and ``neg`` are scratch buffers of length ``X.shape[0]``. Terms
    are added in increasing ``k``; two rows of ``X`` are folded per pass over
    ``acc`` without changing that order. Returns the number of floating
    additions/subtractions performed.
    """
    n = X.shape[1]
    one = np.uint64(1)
    nnz = 0
    for w in range(mask_row.shape[0]):
        mw = mask_row[w]
        sw = sign_row[w]
        base = w * 64
        while mw != 0:
            tz = ctz64(mw)
            idx[nnz] = base + np.int64(tz)
            neg[nnz] = (sw >> tz) & one
            nnz += 1
            mw &= mw - one
    for j in range(n):
        acc[j] = 0.0
    t = 0
    while t + 1 < nnz:
        k1 = idx[t]
        k2 = idx[t + 1]
        code = (neg[t] << one) | neg[t + 1]
        if code == 0:
            for j in range(n):
                acc[j] = acc[j] + X[k1, j] + X[k2, j]
        elif code == 1:
            for j in range(n):
                acc[j] = acc[j] + X[k1, j] - X[k2, j]
        elif code == 2:
            for j in range(n):
                acc[j] = acc[j] - X[k1, j] + X[k2, j]
        else:
            for j in range(n):
                acc[j] = acc[j] - X[k1, j] - X[k2, j]
        t += 2
    if t < nnz:
        k1 = idx[t]
        if neg[t]:
            for j in range(n):
                acc[j] -= X[k1, j]
        else:
            for j in range(n):
                acc[j] += X[k1, j]
    return nnz * n


@njit(cache=True, inline="always")
def accumulate_group(mask_t, sign_t, XX, accs, i0, p, L, gbits):
    """Add the signed rows of ``X`` into the accumulators of output rows ``i0 + g``.

    ``XX`` stacks a column block of ``X`` over its negation, so the inner
    loop is a single add whatever the weight sign. Returns the number of
    additions.
    """
    one = np.uint64(1)
    adds = 0
    wd = i0 >> 6
    sh = np.uint64(i0 & 63)
    for k in range(p):
        bits = (mask_t[k, wd] >> sh) & gbits
        sg = (sign_t[k, wd] >> sh) & gbits
        while bits != 0:
            tz = ctz64(bits)
            a = accs[np.int64(tz)]
            # row k, or its negated copy for a negative weight
            x = XX[k + (p & -np.int64((sg >> tz) & one))]
            for j in range(L):
                a[j] = a[j] + x[j]
            adds += L
            bits &= bits - one
    return adds


GROUP = 32
BLOCK = 128


@njit(cache=True)
def ternary_transform_kernel(mask, sign, X, scale, s_minus, s_plus):
    """Pre-activations with adds only, one scaling per entry, then thresholding.

    Output rows are processed in groups of ``GROUP`` against column blocks
    of ``BLOCK`` samples so that each row of ``X`` is loaded once per group.
    Nonzero weights are found by walking the set bits of the transposed
    mask; a negative weight selects the row of a negated copy of ``X``,
    which is exact, so every entry is the plain sum of ``+-X[k, j]`` in
    increasing ``k``. Returns the output feature planes and the addition
    count.
    """
    m = mask.shape[0]
    p, n = X.shape
    mask_t, sign_t = transpose_planes(mask, sign, p)
    words = (n + 63) // 64
    out_mask = np.zeros((m, words), dtype=np.uint64)
    out_sign = np.zeros((m, words), dtype=np.uint64)
    one = np.uint64(1)
    adds = 0
    XX = np.empty((2 * p, BLOCK))
    accs = np.empty((GROUP, BLOCK))
    gbits = (one << np.uint64(GROUP)) - one
    for j0 in range(0, n, BLOCK):
        L = min(BLOCK, n - j0)
        for k in range(p):
            for j in range(L):
                XX[k, j] = X[k, j0 + j]
                XX[p + k, j] = -X[k, j0 + j]
        for i0 in range(0, m, GROUP):
            g1 = min(GROUP, m - i0)
            for g in range(g1):
                a = accs[g]
                for j in range(L):
                    a[j] = 0.0
            adds += accumulate_group(mask_t, sign_t, XX, accs, i0, p, L, gbits)
            for g in range(g1):
                a = accs[g]
                i = i0 + g
                # BLOCK is a multiple of 64, so each word lies inside one block
                for w0 in range(0, L, 64):
                    mw = np.uint64(0)
                    sw = np.uint64(0)
                    for b in range(min(64, L - w0)):
                        v = a[w0 + b] * scale
                        hi = np.uint64(v > s_plus)
                        lo = np.uint64(v < s_minus)
                        mw |= (hi | lo) << np.uint64(b)
                        sw |= lo << np.uint64(b)
                    out_mask[i, (j0 + w0) >> 6] = mw
                    out_sign[i, (j0 + w0) >> 6] = sw
    return out_mask, out_sign, adds


@njit(cache=True)
def preactivation_kernel(mask, sign, X):
    """Unscaled ``W X`` for a ternary ``W`` (dense float output)."""
    m = mask.shape[0]
    out = np.empty((m, X.shape[1]))
    idx = np.empty(X.shape[0], dtype=np.int64)
    neg = np.empty(X.shape[0], dtype=np.uint64)
    adds = 0
    for i in range(m):
        adds += accumulate_row(mask[i], sign[i], X, out[i], idx, neg)
    return out, adds


@njit(cache=True)
def ternary_dot(ma, sa, mb, sb):
    """Inner product of two packed ternary rows: agreements minus disagreements."""
    total = 0
    for w in range(ma.shape[0]):
        joint = ma[w] & mb[w]
        neg = joint & (sa[w] ^ sb[w])
        c = np.int64(popcount64(joint))
        d = np.int64(popcount64(neg))
        total += c - d - d
    return total


@njit(cache=True)
def gram_counts(mask, sign):
    """Integer Gram ``V V^T`` of packed ternary rows, symmetric fill."""
    n = mask.shape[0]
    out = np.empty((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i, n):
            v = ternary_dot(mask[i], sign[i], mask[j], sign[j])
            out[i, j] = v
            out[j, i] = v
    return out


@njit(cache=True)
def cross_counts(mask_a, sign_a, mask_b, sign_b):
    na = mask_a.shape[0]
    nb = mask_b.shape[0]
    out = np.empty((na, nb), dtype=np.int64)
    for i in range(na):
        for j in range(nb):
            out[i, j] = ternary_dot(mask_a[i], sign_a[i], mask_b[j], sign_b[j])
    return out


@njit(cache=True)
def popcount_total(plane):
    total = 0
    for i in range(plane.shape[0]):
        for w in range(plane.shape[1]):
            total += np.int64(popcount64(plane[i, w]))
    return total


@njit(cache=True)
def transpose_planes(mask, sign, cols):
    """Planes of the transposed ``(cols, rows)`` ternary matrix.

    Each output word gathers one bit from 64 consecutive rows, without
    branching on the data.
    """
    rows = mask.shape[0]
    words_t = (rows + 63) // 64
    mask_t = np.zeros((cols, words_t), dtype=np.uint64)
    sign_t = np.zeros((cols, words_t), dtype=np.uint64)
    one = np.uint64(1)
    for c in range(cols):
        w = c >> 6
        b = np.uint64(c & 63)
        for wi in range(words_t):
            mt = np.uint64(0)
            st = np.uint64(0)
            for r in range(min(64, rows - 64 * wi)):
                i = 64 * wi + r
                mt |= ((mask[i, w] >> b) & one) << np.uint64(r)
                st |= ((sign[i, w] >> b) & one) << np.uint64(r)
            mask_t[c, wi] = mt
            sign_t[c, wi] = st
    return mask_t, sign_t
