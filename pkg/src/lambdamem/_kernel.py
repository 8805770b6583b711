"""Compiled time stepper for the comoving-frame Maxwell-Bloch system.

State per time step is the pair (P(z), B(z)); the signal A(z) is slaved to P
through dA/dz = -sqrt(d) P with A(0) fixed by the input boundary value.
"""

import numba as nb
import numpy as np

OK = 0
NON_FINITE = 1
DIVERGED = 2


@nb.njit(cache=True, nogil=True)
def _march_signal(P, a0, sqrt_d, dz, z_order, A):
    nz = P.shape[0]
    A[0] = a0
    if z_order == 2 or nz < 4:
        for j in range(1, nz):
            A[j] = A[j - 1] - sqrt_d * 0.5 * dz * (P[j - 1] + P[j])
        return
    # cubic-interpolation cumulative quadrature, quadratic at the two end cells
    A[1] = A[0] - sqrt_d * dz * (5.0 * P[0] + 8.0 * P[1] - P[2]) / 12.0
    for j in range(2, nz - 1):
        inc = dz * (-P[j - 2] + 13.0 * P[j - 1] + 13.0 * P[j] - P[j + 1]) / 24.0
        A[j] = A[j - 1] - sqrt_d * inc
    j = nz - 1
    A[j] = A[j - 1] - sqrt_d * dz * (-P[j - 2] + 8.0 * P[j - 1] + 5.0 * P[j]) / 12.0


@nb.njit(cache=True, nogil=True)
def _rhs(P, B, a0, om, sqrt_d, gbar, gamma_b, dz, z_order, A, dP, dB):
    _march_signal(P, a0, sqrt_d, dz, z_order, A)
    half = 0.5j * om
    for j in range(P.shape[0]):
        dP[j] = -gbar * P[j] + sqrt_d * A[j] - half * B[j]
        dB[j] = -gamma_b * B[j] - half * P[j]


@nb.njit(cache=True, nogil=True)
def integrate(a0_half, om_half, dt, nz, d, gbar, gamma_b, z_order, wz, i_snap, dump_stride, e_cap):
    """RK4 in time with the signal re-marched in z at every stage.

    ``a0_half`` and ``om_half`` hold the input boundary value and the Rabi
    frequency at whole and half steps (length 2*nt - 1).  Returns the output
    field A(1, tau), the z-norms of P and B at every step, the state at step
    ``i_snap`` and at the final step, optional strided (A, P, B) dumps and a
    status triple (code, failing step, failing z index).  Atomic energy above
    ``e_cap`` counts as divergence.
    """
    nt = (a0_half.shape[0] + 1) // 2
    sqrt_d = np.sqrt(d)
    dz = 1.0 / (nz - 1)
    P = np.zeros(nz, np.complex128)
    B = np.zeros(nz, np.complex128)
    A = np.zeros(nz, np.complex128)
    k1P = np.zeros(nz, np.complex128)
    k1B = np.zeros(nz, np.complex128)
    k2P = np.zeros(nz, np.complex128)
    k2B = np.zeros(nz, np.complex128)
    k3P = np.zeros(nz, np.complex128)
    k3B = np.zeros(nz, np.complex128)
    k4P = np.zeros(nz, np.complex128)
    k4B = np.zeros(nz, np.complex128)
    tP = np.zeros(nz, np.complex128)
    tB = np.zeros(nz, np.complex128)

    a_out = np.zeros(nt, np.complex128)
    p_norm = np.zeros(nt)
    b_norm = np.zeros(nt)
    P_snap = np.zeros(nz, np.complex128)
    B_snap = np.zeros(nz, np.complex128)
    n_dump = (nt - 1) // dump_stride + 1 if dump_stride > 0 else 0
    A_dump = np.zeros((n_dump, nz), np.complex128)
    P_dump = np.zeros((n_dump, nz), np.complex128)
    B_dump = np.zeros((n_dump, nz), np.complex128)
    status = np.zeros(3, np.int64)

    for n in range(nt):
        _rhs(P, B, a0_half[2 * n], om_half[2 * n], sqrt_d, gbar, gamma_b, dz, z_order, A, k1P, k1B)
        a_out[n] = A[nz - 1]
        sp = 0.0
        sb = 0.0
        for j in range(nz):
            re = P[j].real
            im = P[j].imag
            sp += wz[j] * (re * re + im * im)
            re = B[j].real
            im = B[j].imag
            sb += wz[j] * (re * re + im * im)
        p_norm[n] = sp
        b_norm[n] = sb
        if not (np.isfinite(sp) and np.isfinite(sb) and np.isfinite(a_out[n].real)
                and np.isfinite(a_out[n].imag)):
            status[0] = NON_FINITE
            status[1] = n
            for j in range(nz):
                bad = P[j] + B[j] + A[j]
                if not (np.isfinite(bad.real) and np.isfinite(bad.imag)):
                    status[2] = j
                    break
            break
        if sp + sb > e_cap:
            status[0] = DIVERGED
            status[1] = n
            worst = -1.0
            for j in range(nz):
                mag = abs(P[j]) + abs(B[j])
                if mag > worst:
                    worst = mag
                    status[2] = j
            break
        if n == i_snap:
            for j in range(nz):
                P_snap[j] = P[j]
                B_snap[j] = B[j]
        if dump_stride > 0 and n % dump_stride == 0:
            m = n // dump_stride
            for j in range(nz):
                A_dump[m, j] = A[j]
                P_dump[m, j] = P[j]
                B_dump[m, j] = B[j]
        if n == nt - 1:
            break

        h = 0.5 * dt
        for j in range(nz):
            tP[j] = P[j] + h * k1P[j]
            tB[j] = B[j] + h * k1B[j]
        _rhs(tP, tB, a0_half[2 * n + 1], om_half[2 * n + 1], sqrt_d, gbar, gamma_b, dz, z_order, A, k2P, k2B)
        for j in range(nz):
            tP[j] = P[j] + h * k2P[j]
            tB[j] = B[j] + h * k2B[j]
        _rhs(tP, tB, a0_half[2 * n + 1], om_half[2 * n + 1], sqrt_d, gbar, gamma_b, dz, z_order, A, k3P, k3B)
        for j in range(nz):
            tP[j] = P[j] + dt * k3P[j]
            tB[j] = B[j] + dt * k3B[j]
        _rhs(tP, tB, a0_half[2 * n + 2], om_half[2 * n + 2], sqrt_d, gbar, gamma_b, dz, z_order, A, k4P, k4B)
        s = dt / 6.0
        for j in range(nz):
            P[j] += s * (k1P[j] + 2.0 * k2P[j] + 2.0 * k3P[j] + k4P[j])
            B[j] += s * (k1B[j] + 2.0 * k2B[j] + 2.0 * k3B[j] + k4B[j])

    return a_out, p_norm, b_norm, P_snap, B_snap, P, B, A_dump, P_dump, B_dump, status
