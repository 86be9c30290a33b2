# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused tanh jet kernels.

Same contract as :mod:`afipinn._kernels_py`. The value stream goes through
numpy's vectorized ``tanh``; the derivative streams are combined here in one
contiguous pass per stream instead of one pass per numpy temporary.
"""

import numpy as np


cdef void _forward_streams(const double* t, const double* zg, const double* zk,
                           double* hg, double* hk, Py_ssize_t m, bint second) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s, g
    for k in range(m):
        s = 1.0 - t[k] * t[k]
        g = zg[k]
        hg[k] = s * g
        if second:
            hk[k] = s * zk[k] - 2.0 * t[k] * s * g * g


cdef void _backward_streams(const double* t, const double* zg, const double* zk,
                            const double* dg, const double* dk, double* acc,
                            double* dzg, double* dzk, Py_ssize_t m, bint second) noexcept nogil:
    cdef Py_ssize_t k
    cdef double tt, s, sp, spp, g
    for k in range(m):
        tt = t[k]
        s = 1.0 - tt * tt
        sp = -2.0 * tt * s
        g = zg[k]
        if second:
            spp = s * (4.0 * tt * tt - 2.0 * s)
            acc[k] += dg[k] * g * sp + dk[k] * (sp * zk[k] + spp * g * g)
            dzg[k] = dg[k] * s + 2.0 * dk[k] * sp * g
            dzk[k] = dk[k] * s
        else:
            acc[k] += dg[k] * g * sp
            dzg[k] = dg[k] * s


def jet_tanh_forward(double[:, :, ::1] z, double[:, :, ::1] h, Py_ssize_t d, int order):
    np.tanh(np.asarray(z[0]), out=np.asarray(h[0]))
    if order == 0:
        return
    cdef Py_ssize_t m = z.shape[1] * z.shape[2]
    cdef Py_ssize_t i, j
    cdef bint second = order == 2
    cdef double* zp = &z[0, 0, 0]
    cdef double* hp = &h[0, 0, 0]
    with nogil:
        for i in range(d):
            # order 1 has no second-derivative streams; alias them to the first
            j = (1 + d + i) if second else (1 + i)
            _forward_streams(hp, zp + (1 + i) * m, zp + j * m,
                             hp + (1 + i) * m, hp + j * m, m, second)


def jet_tanh_backward(double[:, ::1] t, double[:, :, ::1] z, double[:, :, ::1] dh,
                      double[:, :, ::1] dz, Py_ssize_t d, int order):
    cdef Py_ssize_t m = t.shape[0] * t.shape[1]
    cdef Py_ssize_t i, j, k
    cdef bint second = order == 2
    cdef double* tp = &t[0, 0]
    cdef double* zp = &z[0, 0, 0]
    cdef double* dhp = &dh[0, 0, 0]
    cdef double* dzp = &dz[0, 0, 0]
    with nogil:
        for k in range(m):
            dzp[k] = dhp[k] * (1.0 - tp[k] * tp[k])
        if order != 0:
            for i in range(d):
                j = (1 + d + i) if second else (1 + i)
                _backward_streams(tp, zp + (1 + i) * m, zp + j * m,
                                  dhp + (1 + i) * m, dhp + j * m, dzp,
                                  dzp + (1 + i) * m, dzp + j * m, m, second)
