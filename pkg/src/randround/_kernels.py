"""Hot Monte Carlo kernels, in numba and pure-numpy flavours.

Each kernel takes a chunk of pre-drawn true values and uniforms, rounds them,
applies one scanner condition, and counts fires, soundness violations and
calibration statistics. Drawing the randomness outside the kernel keeps the
two flavours bit-identical: same input arrays, same counts.

Rounding inside a kernel reproduces the mechanism definition directly:
``pub = x - x%5``, plus 5 when ``u < (x%5)/5``. The offset ``pub - x`` then
lands in [-4, 4] and its published-given-true probability is (5-|d|)/5, which
is what makes the support checks below one-liners.

Kernel results per chunk: ``(fires, soundness_violations, modal_hits,
odd_counts)`` where ``odd_counts[i]`` counts fired groups whose odd member
(the one 3 away from its published value) sat at position i. Exact kinds
leave the calibration outputs at zero.
"""

from __future__ import annotations

import numpy as np

from ._backend import selected_backend


def _sim_invariant_numpy(truths: np.ndarray, u: np.ndarray, exact: bool):
    """Groups with an exact invariant parent: truths (C, n), u (C, n)."""
    n = truths.shape[1]
    r = truths % 5
    pub = truths - r + 5 * (u < r / 5.0).astype(np.int64)
    d = pub - truths
    gap = d.sum(axis=1)
    target = 4 * n if exact else 4 * n - 1
    up = gap == target
    down = gap == -target
    fires = int(up.sum() + down.sum())
    if exact:
        sound = int((up & (d == 4).all(axis=1)).sum()) + int(
            (down & (d == -4).all(axis=1)).sum()
        )
        return fires, fires - sound, 0, np.zeros(n, dtype=np.int64)
    sound_up = up & ((d == 4) | (d == 3)).all(axis=1)
    sound_down = down & ((d == -4) | (d == -3)).all(axis=1)
    sound = int(sound_up.sum()) + int(sound_down.sum())
    modal_hits = int((d[up] == 4).sum()) + int((d[down] == -4).sum())
    odd = (d[sound_up] == 3).sum(axis=0) + (d[sound_down] == -3).sum(axis=0)
    return fires, fires - sound, modal_hits, odd.astype(np.int64)


def _sim_invariant_free_numpy(truths: np.ndarray, u: np.ndarray, exact: bool):
    """Groups with a rounded parent: truths (C, n) children, u (C, n+1).

    Column n of ``u`` drives the parent's rounding; the parent truth is the
    exact child sum. ``odd_counts`` has n+1 slots, the last for the parent.
    """
    n = truths.shape[1]
    r = truths % 5
    cpub = truths - r + 5 * (u[:, :n] < r / 5.0).astype(np.int64)
    ptruth = truths.sum(axis=1)
    pr = ptruth % 5
    ppub = ptruth - pr + 5 * (u[:, n] < pr / 5.0).astype(np.int64)
    dc = cpub - truths
    dp = ppub - ptruth
    gap = dc.sum(axis=1) - dp
    target = 4 * n + 4 if exact else 4 * n + 3
    up = gap == target
    down = gap == -target
    fires = int(up.sum() + down.sum())
    if exact:
        sound = int((up & (dc == 4).all(axis=1) & (dp == -4)).sum()) + int(
            (down & (dc == -4).all(axis=1) & (dp == 4)).sum()
        )
        return fires, fires - sound, 0, np.zeros(n + 1, dtype=np.int64)
    sound_up = up & ((dc == 4) | (dc == 3)).all(axis=1) & ((dp == -4) | (dp == -3))
    sound_down = down & ((dc == -4) | (dc == -3)).all(axis=1) & ((dp == 4) | (dp == 3))
    sound = int(sound_up.sum()) + int(sound_down.sum())
    modal_hits = (
        int((dc[up] == 4).sum())
        + int((dp[up] == -4).sum())
        + int((dc[down] == -4).sum())
        + int((dp[down] == 4).sum())
    )
    odd = np.zeros(n + 1, dtype=np.int64)
    odd[:n] += (dc[sound_up] == 3).sum(axis=0)
    odd[n] += int((dp[sound_up] == -3).sum())
    odd[:n] += (dc[sound_down] == -3).sum(axis=0)
    odd[n] += int((dp[sound_down] == 3).sum())
    return fires, fires - sound, modal_hits, odd


_NUMBA_KERNELS = None


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True)
    def sim_invariant(truths, u, exact):
        c, n = truths.shape
        target = 4 * n if exact else 4 * n - 1
        fires = 0
        sound = 0
        modal_hits = 0
        odd = np.zeros(n, dtype=np.int64)
        for i in range(c):
            gap = 0
            for j in range(n):
                x = truths[i, j]
                r = x % 5
                pub = x - r
                if u[i, j] < r / 5.0:
                    pub += 5
                gap += pub - x
            if gap == target or gap == -target:
                fires += 1
                sign = 1 if gap > 0 else -1
                ok = True
                odd_at = -1
                for j in range(n):
                    x = truths[i, j]
                    r = x % 5
                    pub = x - r
                    if u[i, j] < r / 5.0:
                        pub += 5
                    d = (pub - x) * sign
                    if exact:
                        if d != 4:
                            ok = False
                    else:
                        if d == 4:
                            modal_hits += 1
                        elif d == 3:
                            odd_at = j
                        else:
                            ok = False
                if exact:
                    if ok:
                        sound += 1
                else:
                    if ok and odd_at >= 0:
                        sound += 1
                        odd[odd_at] += 1
        return fires, fires - sound, modal_hits, odd

    @njit(cache=True)
    def sim_invariant_free(truths, u, exact):
        c, n = truths.shape
        target = 4 * n + 4 if exact else 4 * n + 3
        fires = 0
        sound = 0
        modal_hits = 0
        odd = np.zeros(n + 1, dtype=np.int64)
        for i in range(c):
            csum = 0
            ptruth = 0
            for j in range(n):
                x = truths[i, j]
                ptruth += x
                r = x % 5
                pub = x - r
                if u[i, j] < r / 5.0:
                    pub += 5
                csum += pub
            pr = ptruth % 5
            ppub = ptruth - pr
            if u[i, n] < pr / 5.0:
                ppub += 5
            gap = csum - ppub
            if gap == target or gap == -target:
                fires += 1
                sign = 1 if gap > 0 else -1
                ok = True
                odd_at = -1
                for j in range(n):
                    x = truths[i, j]
                    r = x % 5
                    pub = x - r
                    if u[i, j] < r / 5.0:
                        pub += 5
                    d = (pub - x) * sign
                    if exact:
                        if d != 4:
                            ok = False
                    else:
                        if d == 4:
                            modal_hits += 1
                        elif d == 3:
                            odd_at = j
                        else:
                            ok = False
                dp = (ppub - ptruth) * sign
                if exact:
                    if dp != -4:
                        ok = False
                    if ok:
                        sound += 1
                else:
                    if dp == -4:
                        modal_hits += 1
                    elif dp == -3:
                        odd_at = n
                    else:
                        ok = False
                    if ok and odd_at >= 0:
                        sound += 1
                        odd[odd_at] += 1
        return fires, fires - sound, modal_hits, odd

    return {"invariant": sim_invariant, "invariant_free": sim_invariant_free}


_NUMPY_KERNELS = {
    "invariant": _sim_invariant_numpy,
    "invariant_free": _sim_invariant_free_numpy,
}


def get_kernels(backend: str | None = None) -> dict:
    """Kernel pair for the chosen backend (numba kernels compile lazily)."""
    backend = selected_backend(backend)
    if backend == "numpy":
        return _NUMPY_KERNELS
    global _NUMBA_KERNELS
    if _NUMBA_KERNELS is None:
        _NUMBA_KERNELS = _build_numba_kernels()
    return _NUMBA_KERNELS
