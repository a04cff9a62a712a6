"""Single-source hot-loop implementations shared by both backends.

The functions here are written in scalar-loop style with preallocated
arrays and no calls into other Python functions, so the numba backend can
compile them unchanged with ``njit`` while the numpy backend runs them as
plain Python. Vectorized variants that diverge from this source live in
``_kernels_numpy``.
"""

import numpy as np

# split criteria understood by the scan kernels
MODE_VARIANCE = 0
MODE_GINI = 1
MODE_SECOND_ORDER = 2


def shap_path_row(children_left, children_right, feature, threshold, value,
                  cover, max_depth, x, phi):
    """Accumulate one row's path-dependent Shapley contributions into ``phi``.

    Polynomial-time attribution over a single tree: walk every root-to-leaf
    path once while maintaining, per unique feature on the path, the fraction
    of feature subsets that follow the row ("one fraction"), the fraction
    routed by cover ratios ("zero fraction"), and a permutation weight for
    each possible subset size.  At a leaf, each path feature's weight is
    summed as if that feature were removed, which yields its exact share of
    the leaf value under the factorial subset weighting.

    The usual recursion is replaced by an explicit stack of frames, each
    owning a copy of its path state, so this source compiles under numba
    without self-referential calls.  ``phi`` has one entry per model feature
    and is updated in place; values are in raw tree-output units.
    """
    cap = max_depth + 3         # path entries: sentinel + one per tree level
    nframes = max_depth + 4
    pf = np.zeros((nframes, cap), np.int64)     # unique feature ids
    pz = np.zeros((nframes, cap), np.float64)   # zero (cover-ratio) fractions
    po = np.zeros((nframes, cap), np.float64)   # one (followed-path) fractions
    pw = np.zeros((nframes, cap), np.float64)   # permutation weights by size
    plen = np.zeros(nframes, np.int64)
    node_of = np.zeros(nframes, np.int64)
    par_z = np.zeros(nframes, np.float64)
    par_o = np.zeros(nframes, np.float64)
    par_f = np.zeros(nframes, np.int64)

    node_of[0] = 0
    par_z[0] = 1.0
    par_o[0] = 1.0
    par_f[0] = -1
    plen[0] = 0
    top = 0
    while top >= 0:
        fr = top
        j = node_of[fr]
        l = plen[fr]
        zf = par_z[fr]
        of = par_o[fr]

        # extend the path with the incoming fractions
        pf[fr, l] = par_f[fr]
        pz[fr, l] = zf
        po[fr, l] = of
        pw[fr, l] = 1.0 if l == 0 else 0.0
        for i in range(l - 1, -1, -1):
            pw[fr, i + 1] += of * pw[fr, i] * (i + 1.0) / (l + 1.0)
            pw[fr, i] = zf * pw[fr, i] * (l - i) / (l + 1.0)
        l += 1
        d = l - 1   # index of the newest entry == current unique depth

        if children_left[j] < 0:
            leaf = value[j]
            for i in range(1, l):
                # total permutation weight with entry i hypothetically removed
                oi = po[fr, i]
                zi = pz[fr, i]
                total = 0.0
                if oi != 0.0:
                    nxt = pw[fr, d]
                    for q in range(d - 1, -1, -1):
                        t = nxt / ((q + 1.0) * oi)
                        total += t
                        nxt = pw[fr, q] - t * zi * (d - q)
                else:
                    for q in range(d - 1, -1, -1):
                        total += pw[fr, q] / (zi * (d - q))
                total *= d + 1.0
                phi[pf[fr, i]] += total * (oi - zi) * leaf
            top -= 1
        else:
            f = feature[j]
            if x[f] <= threshold[j]:
                hot = children_left[j]
                cold = children_right[j]
            else:
                hot = children_right[j]
                cold = children_left[j]
            iz = 1.0
            io = 1.0
            k = -1
            for i in range(1, l):
                if pf[fr, i] == f:
                    k = i
                    break
            if k >= 0:
                # feature already on the path: undo its previous extension
                iz = pz[fr, k]
                io = po[fr, k]
                nxt = pw[fr, d]
                for q in range(d - 1, -1, -1):
                    if io != 0.0:
                        t = pw[fr, q]
                        pw[fr, q] = nxt * (d + 1.0) / ((q + 1.0) * io)
                        nxt = t - pw[fr, q] * iz * (d - q) / (d + 1.0)
                    else:
                        pw[fr, q] = pw[fr, q] * (d + 1.0) / (iz * (d - q))
                for q in range(k, d):
                    pf[fr, q] = pf[fr, q + 1]
                    pz[fr, q] = pz[fr, q + 1]
                    po[fr, q] = po[fr, q + 1]
                l -= 1
            hot_ratio = cover[hot] / cover[j]
            cold_ratio = cover[cold] / cover[j]

            # reuse this frame for the cold child, stack the hot child above
            plen[fr] = l
            node_of[fr] = cold
            par_z[fr] = cold_ratio * iz
            par_o[fr] = 0.0
            par_f[fr] = f
            nf = fr + 1
            for q in range(l):
                pf[nf, q] = pf[fr, q]
                pz[nf, q] = pz[fr, q]
                po[nf, q] = po[fr, q]
                pw[nf, q] = pw[fr, q]
            plen[nf] = l
            node_of[nf] = hot
            par_z[nf] = hot_ratio * iz
            par_o[nf] = io
            par_f[nf] = f
            top = nf
