"""Pure numpy implementation of the tanh jet kernels.

Arrays use the stream layout ``(S, N, n)``: stream 0 carries values, streams
``1..d`` first derivatives along each input coordinate and, for order 2,
streams ``d+1..2d`` the matching second derivatives.
"""

import numpy as np


def jet_tanh_forward(z, h, d, order):
    t = np.tanh(z[0])
    h[0] = t
    if order == 0:
        return
    s = 1.0 - t * t
    zg = z[1:1 + d]
    np.multiply(zg, s, out=h[1:1 + d])
    if order == 2:
        zk = z[1 + d:1 + 2 * d]
        # tanh'' = -2 t s
        np.multiply(zk, s, out=h[1 + d:])
        h[1 + d:] -= (2.0 * t * s) * (zg * zg)


def jet_tanh_backward(t, z, dh, dz, d, order):
    s = 1.0 - t * t
    np.multiply(dh[0], s, out=dz[0])
    if order == 0:
        return
    sp = -2.0 * t * s
    zg = z[1:1 + d]
    dg = dh[1:1 + d]
    dz[0] += np.einsum("inj,inj->nj", dg, zg) * sp
    np.multiply(dg, s, out=dz[1:1 + d])
    if order == 2:
        spp = s * (4.0 * t * t - 2.0 * s)
        zk = z[1 + d:1 + 2 * d]
        dk = dh[1 + d:1 + 2 * d]
        dz[0] += np.einsum("inj,inj->nj", dk, sp * zk + spp * (zg * zg))
        dz[1:1 + d] += 2.0 * sp * dk * zg
        np.multiply(dk, s, out=dz[1 + d:])
