"""Hot numeric kernels for the brute-force oracle.

Candidate databases are encoded as per-table "states" (padded row-id arrays)
and query results as uint64 bitmasks over a per-query tuple universe. The
kernels below evaluate mask grids and scan for witness pairs. Each kernel has
a numba @njit implementation and a pure-numpy fallback; set VIEWFENCE_NO_NUMBA=1
to force the numpy path. benchmarks/bench_kernels.py compares the two.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("VIEWFENCE_NO_NUMBA", "") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# Mask-grid evaluation
#
# states: int32 [n, max_rows], padded with -1; counts: int32 [n]
# P1: uint64 [n_rows] single-item bit lookup
# P2: uint64 [n_rows, n_rows] two-item bit lookup (dims follow item order)


@njit(cache=True)
def _eval_single_nb(states, counts, P1):
    n = states.shape[0]
    out = np.zeros(n, dtype=np.uint64)
    for i in range(n):
        acc = np.uint64(0)
        for s in range(counts[i]):
            acc |= P1[states[i, s]]
        out[i] = acc
    return out


def _eval_single_np(states, counts, P1):
    out = np.zeros(states.shape[0], dtype=np.uint64)
    for s in range(states.shape[1]):
        ids = states[:, s]
        valid = ids >= 0
        out |= np.where(valid, P1[np.clip(ids, 0, None)], np.uint64(0))
    return out


@njit(cache=True)
def _eval_self_pair_nb(states, counts, P2):
    n = states.shape[0]
    out = np.zeros(n, dtype=np.uint64)
    for i in range(n):
        acc = np.uint64(0)
        for a in range(counts[i]):
            for b in range(counts[i]):
                acc |= P2[states[i, a], states[i, b]]
        out[i] = acc
    return out


def _eval_self_pair_np(states, counts, P2):
    out = np.zeros(states.shape[0], dtype=np.uint64)
    max_rows = states.shape[1]
    for a in range(max_rows):
        for b in range(max_rows):
            ra, rb = states[:, a], states[:, b]
            valid = (ra >= 0) & (rb >= 0)
            out |= np.where(
                valid, P2[np.clip(ra, 0, None), np.clip(rb, 0, None)], np.uint64(0)
            )
    return out


@njit(cache=True)
def _eval_pair_nb(states_a, counts_a, states_b, counts_b, P2):
    na, nb = states_a.shape[0], states_b.shape[0]
    out = np.zeros((na, nb), dtype=np.uint64)
    for i in range(na):
        for j in range(nb):
            acc = np.uint64(0)
            for a in range(counts_a[i]):
                for b in range(counts_b[j]):
                    acc |= P2[states_a[i, a], states_b[j, b]]
            out[i, j] = acc
    return out


def _eval_pair_np(states_a, counts_a, states_b, counts_b, P2):
    na, nb = states_a.shape[0], states_b.shape[0]
    out = np.zeros((na, nb), dtype=np.uint64)
    for a in range(states_a.shape[1]):
        for b in range(states_b.shape[1]):
            ra = states_a[:, a][:, None]
            rb = states_b[:, b][None, :]
            valid = (ra >= 0) & (rb >= 0)
            out |= np.where(
                valid, P2[np.clip(ra, 0, None), np.clip(rb, 0, None)], np.uint64(0)
            )
    return out


# ---------------------------------------------------------------------------
# Witness scans over deduplicated (view-words, query-words) rows


@njit(cache=True)
def _subset_scan_nb(v1, q1, v2, q2, max_checks):
    m1, m2 = v1.shape[0], v2.shape[0]
    vw, qw = v1.shape[1], q1.shape[1]
    checks = 0
    for i in range(m1):
        for j in range(m2):
            checks += 1
            if checks > max_checks:
                return -2, -2, checks
            ok = True
            for w in range(vw):
                if v1[i, w] & ~v2[j, w]:
                    ok = False
                    break
            if not ok:
                continue
            for w in range(qw):
                if q1[i, w] & ~q2[j, w]:
                    return i, j, checks
    return -1, -1, checks


def _subset_scan_np(v1, q1, v2, q2, max_checks):
    m1, m2 = v1.shape[0], v2.shape[0]
    if m1 * m2 > max_checks:
        return -2, -2, m1 * m2
    chunk = max(1, int(2_000_000 // max(1, m2)))
    checks = 0
    for lo in range(0, m1, chunk):
        hi = min(m1, lo + chunk)
        views_ok = ~np.any(v1[lo:hi, None, :] & ~v2[None, :, :], axis=2)
        q_escapes = np.any(q1[lo:hi, None, :] & ~q2[None, :, :], axis=2)
        hit = views_ok & q_escapes
        checks += (hi - lo) * m2
        if hit.any():
            i, j = np.argwhere(hit)[0]
            return int(i) + lo, int(j), checks
    return -1, -1, checks


def eval_single(states, counts, P1):
    fn = _eval_single_nb if USE_NUMBA else _eval_single_np
    return fn(states, counts, P1)


def eval_self_pair(states, counts, P2):
    fn = _eval_self_pair_nb if USE_NUMBA else _eval_self_pair_np
    return fn(states, counts, P2)


def eval_pair(states_a, counts_a, states_b, counts_b, P2):
    fn = _eval_pair_nb if USE_NUMBA else _eval_pair_np
    return fn(states_a, counts_a, states_b, counts_b, P2)


def subset_scan(v1, q1, v2, q2, max_checks):
    """First (i, j) with views(v1[i]) ⊆ views(v2[j]) and q1[i] ⊈ q2[j].

    Returns (-1, -1, checks) when no witness exists, (-2, -2, checks) when
    the check budget was exceeded.
    """
    fn = _subset_scan_nb if USE_NUMBA else _subset_scan_np
    return fn(v1, q1, v2, q2, max_checks)
