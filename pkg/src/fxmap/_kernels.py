"""Recursive kernels with hand-written adjoints.

Sample-by-sample recursions and long per-bin loops are far too slow as torch
graphs, so the biquad sections, compressor ballistics, the ping-pong echo
spectrum and the per-bin FDN solve run in scipy/numba and expose exact
vector-Jacobian products through ``torch.autograd.Function``.
"""

from __future__ import annotations

import numba
import numpy as np
import scipy.signal
import torch


def _np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy()


class Biquad(torch.autograd.Function):
    """Direct-form biquad ``y = lfilter([b0, b1, b2], [1, a1, a2], x)`` along the last axis.

    ``coeffs`` is the normalised vector ``[b0, b1, b2, a1, a2]``.
    """

    @staticmethod
    def forward(ctx, x, coeffs):
        c = _np(coeffs)
        xn = _np(x)
        y = scipy.signal.lfilter(c[:3], [1.0, c[3], c[4]], xn, axis=-1)
        ctx.save_for_backward(x, coeffs)
        ctx.y = y
        return torch.from_numpy(y)

    @staticmethod
    def backward(ctx, grad_y):
        x, coeffs = ctx.saved_tensors
        c = _np(coeffs)
        n = x.shape[-1]
        # adjoint of the all-pole part, run backwards in time
        g = _np(grad_y)[..., ::-1]
        u = np.ascontiguousarray(scipy.signal.lfilter([1.0], [1.0, c[3], c[4]], g, axis=-1)[..., ::-1])
        grad_x = grad_c = None
        if ctx.needs_input_grad[0]:
            gx = c[0] * u
            gx[..., : n - 1] += c[1] * u[..., 1:]
            gx[..., : n - 2] += c[2] * u[..., 2:]
            grad_x = torch.from_numpy(gx)
        if ctx.needs_input_grad[1]:
            xn = _np(x)
            y = ctx.y
            dot = lambda p, q: float(np.einsum("...i,...i->...", p, q).sum())  # noqa: E731
            grad_c = torch.tensor(
                [
                    dot(u, xn),
                    dot(u[..., 1:], xn[..., : n - 1]),
                    dot(u[..., 2:], xn[..., : n - 2]),
                    -dot(u[..., 1:], y[..., : n - 1]),
                    -dot(u[..., 2:], y[..., : n - 2]),
                ],
                dtype=torch.float64,
            )
        return grad_x, grad_c


def biquad(x: torch.Tensor, coeffs: torch.Tensor) -> torch.Tensor:
    return Biquad.apply(x, coeffs)


@numba.njit(cache=True)
def _ballistics_fwd(p, ca, cr, env, attack):
    prev = 0.0
    for n in range(p.shape[0]):
        if p[n] > prev:
            c = ca
            attack[n] = True
        else:
            c = cr
            attack[n] = False
        prev = prev + c * (p[n] - prev)
        env[n] = prev


@numba.njit(cache=True)
def _ballistics_bwd(g, p, env, attack, ca, cr, grad_p):
    lam = 0.0
    gca = 0.0
    gcr = 0.0
    n_total = p.shape[0]
    for n in range(n_total - 1, -1, -1):
        if n + 1 < n_total:
            c_next = ca if attack[n + 1] else cr
            lam = g[n] + (1.0 - c_next) * lam
        else:
            lam = g[n]
        c = ca if attack[n] else cr
        prev = env[n - 1] if n > 0 else 0.0
        grad_p[n] = c * lam
        if attack[n]:
            gca += lam * (p[n] - prev)
        else:
            gcr += lam * (p[n] - prev)
    return gca, gcr


class Ballistics(torch.autograd.Function):
    """One-pole envelope follower with separate attack and release coefficients.

    ``env[n] = env[n-1] + c[n] * (p[n] - env[n-1])`` where ``c[n]`` is the attack
    coefficient while the input rises above the envelope and the release
    coefficient otherwise. Leading axes are treated as a batch.
    """

    @staticmethod
    def forward(ctx, p, ca, cr):
        pn = np.ascontiguousarray(_np(p)).reshape(-1, p.shape[-1])
        ca_f, cr_f = float(ca), float(cr)
        env = np.empty_like(pn)
        attack = np.empty(pn.shape, dtype=np.bool_)
        for i in range(pn.shape[0]):
            _ballistics_fwd(pn[i], ca_f, cr_f, env[i], attack[i])
        ctx.save_for_backward(ca, cr)
        ctx.arrays = (pn, env, attack)
        ctx.shape = p.shape
        return torch.from_numpy(env.reshape(p.shape))

    @staticmethod
    def backward(ctx, grad_env):
        ca, cr = ctx.saved_tensors
        pn, env, attack = ctx.arrays
        g = np.ascontiguousarray(_np(grad_env)).reshape(pn.shape)
        grad_p = np.empty_like(pn)
        gca = gcr = 0.0
        for i in range(pn.shape[0]):
            a, r = _ballistics_bwd(g[i], pn[i], env[i], attack[i], float(ca), float(cr), grad_p[i])
            gca += a
            gcr += r
        return (
            torch.from_numpy(grad_p.reshape(ctx.shape)),
            torch.tensor(gca, dtype=ca.dtype),
            torch.tensor(gcr, dtype=cr.dtype),
        )


def ballistics(p: torch.Tensor, ca: torch.Tensor, cr: torch.Tensor) -> torch.Tensor:
    return Ballistics.apply(p, ca, cr)


@numba.njit(cache=True)
def _lu_factor(m, n):
    # in place, no pivoting: every leading block of I - G A is nonsingular
    # when ||G A|| < 1. Multipliers are kept below the diagonal.
    for k in range(n):
        inv = 1.0 / m[k, k]
        for i in range(k + 1, n):
            f = m[i, k] * inv
            m[i, k] = f
            for j in range(k + 1, n):
                m[i, j] -= f * m[k, j]


@numba.njit(cache=True)
def _lu_solve(m, rhs, n):
    for i in range(1, n):
        s = rhs[i]
        for j in range(i):
            s -= m[i, j] * rhs[j]
        rhs[i] = s
    for i in range(n - 1, -1, -1):
        s = rhs[i]
        for j in range(i + 1, n):
            s -= m[i, j] * rhs[j]
        rhs[i] = s / m[i, i]


@numba.njit(cache=True)
def _lu_solve_adjoint(m, rhs, n):
    # (L U)^H x = r: solve U^H y = r, then L^H x = y
    for i in range(n):
        s = rhs[i]
        for j in range(i):
            s -= np.conj(m[j, i]) * rhs[j]
        rhs[i] = s / np.conj(m[i, i])
    for i in range(n - 2, -1, -1):
        s = rhs[i]
        for j in range(i + 1, n):
            s -= np.conj(m[j, i]) * rhs[j]
        rhs[i] = s


@numba.njit(cache=True)
def _fdn_fwd(G, A, b, C, V, Y, LU):
    n, nbins = G.shape
    rhs = np.empty(n, dtype=np.complex128)
    for k in range(nbins):
        m = LU[k]
        for i in range(n):
            gi = G[i, k]
            for j in range(n):
                m[i, j] = -gi * A[i, j]
            m[i, i] += 1.0
            rhs[i] = gi * b[i]
        _lu_factor(m, n)
        _lu_solve(m, rhs, n)
        for i in range(n):
            V[i, k] = rhs[i]
        for c in range(C.shape[0]):
            acc = 0j
            for i in range(n):
                acc += C[c, i] * rhs[i]
            Y[c, k] = acc


@numba.njit(cache=True)
def _fdn_bwd(G, A, b, C, V, gY, LU, gG, gA, gb, gC):
    n, nbins = G.shape
    rhs = np.empty(n, dtype=np.complex128)
    for k in range(nbins):
        for i in range(n):
            acc = 0j
            for c in range(C.shape[0]):
                acc += C[c, i] * gY[c, k]
            rhs[i] = acc
        _lu_solve_adjoint(LU[k], rhs, n)
        for c in range(C.shape[0]):
            for i in range(n):
                gC[c, i] += (np.conj(V[i, k]) * gY[c, k]).real
        for i in range(n):
            gs = rhs[i]
            gi = G[i, k]
            acc = b[i] * gs
            for j in range(n):
                gm = -gs * np.conj(V[j, k])
                acc -= A[i, j] * gm
                gA[i, j] += (-np.conj(gi) * gm).real
            gG[i, k] = acc
            gb[i] += (np.conj(gi) * gs).real


class FDNResponse(torch.autograd.Function):
    """Per-bin transfer function of a feedback delay network.

    For every frequency bin solves ``(I - diag(G) A) v = G * b`` and returns
    ``C v``. ``G`` holds the per-line loop responses (delay and absorption),
    shape ``(lines, bins)``; ``A`` is the real feedback matrix, ``b`` the input
    gains and ``C`` the ``(outputs, lines)`` output gains.
    """

    @staticmethod
    def forward(ctx, G, A, b, C):
        Gn = np.ascontiguousarray(_np(G))
        An, bn, Cn = (np.ascontiguousarray(_np(t)) for t in (A, b, C))
        V = np.empty_like(Gn)
        Y = np.empty((Cn.shape[0], Gn.shape[1]), dtype=np.complex128)
        LU = np.empty((Gn.shape[1], Gn.shape[0], Gn.shape[0]), dtype=np.complex128)
        _fdn_fwd(Gn, An, bn, Cn, V, Y, LU)
        ctx.arrays = (Gn, An, bn, Cn, V, LU)
        return torch.from_numpy(Y)

    @staticmethod
    def backward(ctx, gY):
        Gn, An, bn, Cn, V, LU = ctx.arrays
        gG = np.empty_like(Gn)
        gA = np.zeros_like(An)
        gb = np.zeros_like(bn)
        gC = np.zeros_like(Cn)
        _fdn_bwd(Gn, An, bn, Cn, V, np.ascontiguousarray(_np(gY)), LU, gG, gA, gb, gC)
        return (torch.from_numpy(gG), torch.from_numpy(gA), torch.from_numpy(gb), torch.from_numpy(gC))


def fdn_response(G, A, b, C) -> torch.Tensor:
    return FDNResponse.apply(G, A, b, C)


@numba.njit(cache=True)
def _pingpong_fwd(d, fb, cross, pole, echoes, n_fft, Y, cache):
    nbins = Y.shape[1]
    s2 = fb * (1.0 - 2.0 * cross)
    s1k = fb**echoes
    s2k = s2**echoes
    # once fb^K is below round-off the truncated and infinite trains agree
    truncate = max(abs(s1k), abs(s2k)) > 1e-18
    for k in range(nbins):
        w = 2.0 * np.pi * k / n_fft
        z = complex(np.cos(w), -np.sin(w))
        damp = (1.0 - pole) / (1.0 - pole * z)
        wd = w * d
        phi = damp * complex(np.cos(wd), -np.sin(wd))
        phik = np.exp(echoes * np.log(damp) - 1j * wd * echoes) if truncate else 0j
        S1 = (1.0 - s1k * phik) / (1.0 - fb * phi)
        S2 = (1.0 - s2k * phik) / (1.0 - s2 * phi)
        Y[0, k] = phi * (S1 + S2) * 0.5
        Y[1, k] = phi * (S1 - S2) * 0.5
        cache[0, k] = z
        cache[1, k] = damp
        cache[2, k] = phi
        cache[3, k] = phik


@numba.njit(cache=True)
def _pingpong_bwd(d, fb, cross, pole, echoes, n_fft, gY, cache):
    nbins = gY.shape[1]
    s2 = fb * (1.0 - 2.0 * cross)
    s1k = fb**echoes
    s2k = s2**echoes
    ds1k = echoes * fb ** (echoes - 1)
    ds2k = echoes * s2 ** (echoes - 1)
    g_d = 0.0
    g_s1 = 0.0
    g_s2 = 0.0
    g_p = 0.0
    for k in range(nbins):
        w = 2.0 * np.pi * k / n_fft
        z = cache[0, k]
        damp = cache[1, k]
        phi = cache[2, k]
        phik = cache[3, k]
        den1 = 1.0 - fb * phi
        den2 = 1.0 - s2 * phi
        num1 = 1.0 - s1k * phik
        num2 = 1.0 - s2k * phik
        S1 = num1 / den1
        S2 = num2 / den2
        gl = gY[0, k]
        gr = gY[1, k]
        cphi = np.conj(phi) * 0.5
        cS1 = cphi * (gl + gr)
        cS2 = cphi * (gl - gr)
        c_phi = np.conj((S1 + S2) * 0.5) * gl + np.conj((S1 - S2) * 0.5) * gr
        c_phi += np.conj(num1 * fb / (den1 * den1)) * cS1 + np.conj(num2 * s2 / (den2 * den2)) * cS2
        c_phik = np.conj(-s1k / den1) * cS1 + np.conj(-s2k / den2) * cS2
        g_s1 += (np.conj((-ds1k * phik * den1 + num1 * phi) / (den1 * den1)) * cS1).real
        g_s2 += (np.conj((-ds2k * phik * den2 + num2 * phi) / (den2 * den2)) * cS2).real
        g_d += (np.conj(-1j * w * phi) * c_phi + np.conj(-1j * w * echoes * phik) * c_phik).real
        q = 1.0 - pole * z
        ddamp = (z - 1.0) / (q * q)
        g_p += (np.conj(ddamp * phi / damp) * c_phi + np.conj(echoes * phik / damp * ddamp) * c_phik).real
    g_fb = g_s1 + (1.0 - 2.0 * cross) * g_s2
    g_c = -2.0 * fb * g_s2
    return g_d, g_fb, g_c, g_p


class PingPongResponse(torch.autograd.Function):
    """Stereo spectrum of a damped ping-pong echo train on an ``n_fft`` grid.

    Two lines with the same fractional delay ``d`` (samples) and one-pole
    damping ``pole``; input enters the left line and ``cross`` routes feedback
    across. Only the first ``echoes`` repeats are summed.
    """

    @staticmethod
    def forward(ctx, d, fb, cross, pole, echoes: int, n_fft: int):
        args = (float(d), float(fb), float(cross), float(pole), int(echoes), int(n_fft))
        Y = np.empty((2, n_fft // 2 + 1), dtype=np.complex128)
        cache = np.empty((4, Y.shape[1]), dtype=np.complex128)
        _pingpong_fwd(*args, Y, cache)
        ctx.args = args
        ctx.cache = cache
        return torch.from_numpy(Y)

    @staticmethod
    def backward(ctx, gY):
        grads = _pingpong_bwd(*ctx.args, np.ascontiguousarray(_np(gY)), ctx.cache)
        return tuple(torch.tensor(g, dtype=torch.float64) for g in grads) + (None, None)


def pingpong_response(d, fb, cross, pole, echoes: int, n_fft: int) -> torch.Tensor:
    return PingPongResponse.apply(d, fb, cross, pole, echoes, n_fft)


@numba.njit(cache=True)
def _loop_gains(d, glo, ghi, pole, bb, n_fft, G):
    n, nbins = G.shape
    for k in range(nbins):
        w = 2.0 * np.pi * k / n_fft
        z = np.exp(-1j * w)
        for i in range(n):
            lp = (1.0 - pole[i]) / (1.0 - pole[i] * z)
            G[i, k] = bb[i] * (ghi[i] + (glo[i] - ghi[i]) * lp) * np.exp(-1j * w * d[i])


@numba.njit(cache=True)
def _loop_gains_bwd(d, glo, ghi, pole, bb, n_fft, G, gG, gd, gglo, gghi, gpole, gbb):
    n, nbins = G.shape
    for k in range(nbins):
        w = 2.0 * np.pi * k / n_fft
        z = np.exp(-1j * w)
        for i in range(n):
            q = 1.0 - pole[i] * z
            lp = (1.0 - pole[i]) / q
            e = np.exp(-1j * w * d[i])
            g = gG[i, k]
            gd[i] += (np.conj(-1j * w * G[i, k]) * g).real
            gbb[i] += (np.conj((ghi[i] + (glo[i] - ghi[i]) * lp) * e) * g).real
            gglo[i] += (np.conj(bb[i] * lp * e) * g).real
            gghi[i] += (np.conj(bb[i] * (1.0 - lp) * e) * g).real
            dlp = (z - 1.0) / (q * q)
            gpole[i] += (np.conj(bb[i] * (glo[i] - ghi[i]) * dlp * e) * g).real


class FDNShelfResponse(torch.autograd.Function):
    """FDN transfer function with per-line delay and first-order shelf absorption.

    Line ``i`` has loop response ``bb * (ghi + (glo - ghi) * LP(pole)) * z^-d``
    where ``LP`` is a unit-DC one-pole lowpass. Returns ``(outputs, bins)`` on a
    grid of ``n_fft`` points.
    """

    @staticmethod
    def forward(ctx, d, glo, ghi, pole, bb, A, b, C, n_fft: int):
        line = [np.ascontiguousarray(_np(t)) for t in (d, glo, ghi, pole, bb)]
        G = np.empty((line[0].shape[0], n_fft // 2 + 1), dtype=np.complex128)
        _loop_gains(*line, int(n_fft), G)
        An, bn, Cn = (np.ascontiguousarray(_np(t)) for t in (A, b, C))
        V = np.empty_like(G)
        Y = np.empty((Cn.shape[0], G.shape[1]), dtype=np.complex128)
        LU = np.empty((G.shape[1], G.shape[0], G.shape[0]), dtype=np.complex128)
        _fdn_fwd(G, An, bn, Cn, V, Y, LU)
        ctx.arrays = (line, G, An, bn, Cn, V, LU, int(n_fft))
        return torch.from_numpy(Y)

    @staticmethod
    def backward(ctx, gY):
        line, G, An, bn, Cn, V, LU, n_fft = ctx.arrays
        gG = np.empty_like(G)
        gA = np.zeros_like(An)
        gb = np.zeros_like(bn)
        gC = np.zeros_like(Cn)
        _fdn_bwd(G, An, bn, Cn, V, np.ascontiguousarray(_np(gY)), LU, gG, gA, gb, gC)
        lg = [np.zeros_like(x) for x in line]
        _loop_gains_bwd(*line, n_fft, G, gG, *lg)
        out = [torch.from_numpy(x) for x in lg]
        return (*out, torch.from_numpy(gA), torch.from_numpy(gb), torch.from_numpy(gC), None)


def fdn_shelf_response(d, glo, ghi, pole, bb, A, b, C, n_fft: int) -> torch.Tensor:
    return FDNShelfResponse.apply(d, glo, ghi, pole, bb, A, b, C, n_fft)


# real FFTs whose adjoints are a single real transform (torch's own backward
# goes through a full complex FFT)
class _RFFT(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, n: int):
        ctx.n, ctx.length = n, x.shape[-1]
        return torch.fft.rfft(x, n=n)

    @staticmethod
    def backward(ctx, g):
        n = ctx.n
        w = g.clone()
        w[..., 1 : (n + 1) // 2] *= 0.5
        gx = torch.fft.irfft(w, n=n) * n
        return gx[..., : ctx.length], None


class _IRFFT(torch.autograd.Function):
    @staticmethod
    def forward(ctx, X, n: int):
        ctx.n = n
        return torch.fft.irfft(X, n=n)

    @staticmethod
    def backward(ctx, g):
        n = ctx.n
        G = torch.fft.rfft(g, n=n) * (2.0 / n)
        G[..., 0] *= 0.5
        if n % 2 == 0:
            G[..., -1] *= 0.5
        return G, None


def rfft(x: torch.Tensor, n: int) -> torch.Tensor:
    return _RFFT.apply(x, n)


def irfft(X: torch.Tensor, n: int) -> torch.Tensor:
    return _IRFFT.apply(X, n)


@numba.njit(cache=True)
def _wet_fwd(U, dly, rev, dg, s_rev, s_dr, out):
    B, nbins = U.shape
    for k in range(nbins):
        d0 = dg * dly[0, k]
        d1 = dg * dly[1, k]
        r = s_rev + s_dr * (d0 + d1)
        h0 = d0 + rev[0, k] * r
        h1 = d1 + rev[1, k] * r
        for bi in range(B):
            u = U[bi, k]
            out[bi, 0, k] = u * h0
            out[bi, 1, k] = u * h1


@numba.njit(cache=True)
def _wet_bwd(U, dly, rev, dg, s_rev, s_dr, g, gU, gdly, grev):
    B, nbins = U.shape
    g_dg = 0.0
    g_srev = 0.0
    g_sdr = 0.0
    for k in range(nbins):
        d0 = dly[0, k]
        d1 = dly[1, k]
        dsum = d0 + d1
        r = s_rev + s_dr * dg * dsum
        h0 = dg * d0 + rev[0, k] * r
        h1 = dg * d1 + rev[1, k] * r
        gh0 = 0j
        gh1 = 0j
        for bi in range(B):
            u = U[bi, k]
            gU[bi, k] = g[bi, 0, k] * np.conj(h0) + g[bi, 1, k] * np.conj(h1)
            cu = np.conj(u)
            gh0 += g[bi, 0, k] * cu
            gh1 += g[bi, 1, k] * cu
        # cotangent of r, shared by both outputs
        gr = np.conj(rev[0, k]) * gh0 + np.conj(rev[1, k]) * gh1
        cr = np.conj(r)
        grev[0, k] = cr * gh0
        grev[1, k] = cr * gh1
        gd = s_dr * dg * gr
        gdly[0, k] = dg * gh0 + gd
        gdly[1, k] = dg * gh1 + gd
        g_dg += (np.conj(d0) * gh0 + np.conj(d1) * gh1 + np.conj(s_dr * dsum) * gr).real
        g_srev += gr.real
        g_sdr += (np.conj(dg * dsum) * gr).real
    return g_dg, g_srev, g_sdr


class WetMix(torch.autograd.Function):
    """Spectrum of the delay and reverb paths for input spectrum ``U``.

    ``H_c = dg * D_c + R_c * (s_rev + s_dr * dg * (D_0 + D_1))`` and the
    output is ``U * H_c`` with shape ``(..., 2, bins)``. ``D`` is the unit
    delay response, ``R`` the reverb spectrum, ``dg`` the delay gain and
    ``s_rev``, ``s_dr`` the reverb sends from the input and from the delay.
    """

    @staticmethod
    def forward(ctx, U, dly, rev, dg, s_rev, s_dr):
        lead = U.shape[:-1]
        Un = np.ascontiguousarray(_np(U).reshape(-1, U.shape[-1]))
        dn, rn = np.ascontiguousarray(_np(dly)), np.ascontiguousarray(_np(rev))
        scal = (float(dg), float(s_rev), float(s_dr))
        out = np.empty((Un.shape[0], 2, Un.shape[1]), dtype=np.complex128)
        _wet_fwd(Un, dn, rn, *scal, out)
        ctx.arrays = (Un, dn, rn, scal, lead)
        return torch.from_numpy(out.reshape(*lead, 2, Un.shape[1]))

    @staticmethod
    def backward(ctx, g):
        Un, dn, rn, scal, lead = ctx.arrays
        gn = np.ascontiguousarray(_np(g).reshape(Un.shape[0], 2, Un.shape[1]))
        gU = np.empty_like(Un)
        gdly = np.empty_like(dn)
        grev = np.empty_like(rn)
        gs = _wet_bwd(Un, dn, rn, *scal, gn, gU, gdly, grev)
        scalars = tuple(torch.tensor(v, dtype=torch.float64) for v in gs)
        return (torch.from_numpy(gU.reshape(*lead, Un.shape[1])), torch.from_numpy(gdly), torch.from_numpy(grev), *scalars)


def wet_mix(U, dly, rev, dg, s_rev, s_dr) -> torch.Tensor:
    return WetMix.apply(U, dly, rev, dg, s_rev, s_dr)
