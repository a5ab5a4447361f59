"""Matvec kernels for H = diag + coupling * (sum of single-site flips)."""
import numpy as np
from numba import njit


@njit(cache=True)
def flip_matvec_full(diag, coupling, v, n_sites, out):
    n = v.shape[0]
    for s in range(n):
        out[s] = diag[s] * v[s]
    for i in range(n_sites):
        m = 1 << i
        for s in range(n):
            out[s] += coupling * v[s ^ m]
    return out


@njit(cache=True)
def flip_matvec_table(diag, coupling, v, table, out):
    n = v.shape[0]
    k = table.shape[1]
    for s in range(n):
        acc = diag[s] * v[s]
        tot = 0j
        for j in range(k):
            t = table[s, j]
            if t >= 0:
                tot += v[t]
        out[s] = acc + coupling * tot
    return out


def flip_matvec(basis, diag, coupling, v, out=None):
    if out is None:
        out = np.empty(v.shape[0], dtype=np.complex128)
    v = np.ascontiguousarray(v, dtype=np.complex128)
    if basis.kind.value == "full":
        return flip_matvec_full(diag, complex(coupling), v, basis.n_sites, out)
    return flip_matvec_table(diag, complex(coupling), v, basis.flip_table, out)
