"""Pure-numpy fallback for the far-field multipole evaluation loop.

Same contract as the compiled twin in _kernels.pyx: accumulate, for
every (source box, target leaf) pair in the CSR pair list, the real
potential of the source's scaled multipole expansion at the target
leaf's 64 nodes.  Sources are grouped so each expansion is evaluated
over all of its targets with one vectorized Horner sweep.
"""
import numpy as np

INV2PI = 1.0 / (2.0 * np.pi)


def far_accumulate(out, tz, centers, hs, mass, mom_div, ptr, tgt):
    """out[t, q] += Re potential of source s at node tz[t, q].

    out      (nl, 64) float64, modified in place
    tz       (nl, 64) complex128 leaf node coordinates
    centers  (ns,)    complex128 source centers
    hs       (ns,)    float64 source half-sides
    mass     (ns,)    float64 source masses (integral of the density)
    mom_div  (ns, p)  complex128, entry k-1 holds s_k / k
    ptr      (ns+1,)  int64 CSR offsets into tgt
    tgt      (nnz,)   int64 target leaf indices per source
    """
    ns = len(centers)
    p = mom_div.shape[1]
    for s in range(ns):
        lo, hi = ptr[s], ptr[s + 1]
        if lo == hi:
            continue
        idx = tgt[lo:hi]
        w = hs[s] / (tz[idx] - centers[s])
        acc = np.zeros_like(w)
        for k in range(p - 1, -1, -1):
            acc += mom_div[s, k]
            acc *= w
        val = mass[s] * (np.log(hs[s]) - np.log(np.abs(w))) - acc.real
        out[idx] += INV2PI * val
    return out
