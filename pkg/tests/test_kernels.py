import math

import numpy as np
import pytest
import scipy.signal
import torch
from torch.autograd import gradcheck

from fxmap._kernels import (
    ballistics,
    biquad,
    fdn_response,
    fdn_shelf_response,
    irfft,
    pingpong_response,
    rfft,
    wet_mix,
)

F64 = dict(dtype=torch.float64)


def t(v, grad=True):
    return torch.tensor(v, requires_grad=grad, **F64)


def test_biquad_matches_lfilter(rng):
    x = rng.standard_normal(300)
    c = np.array([0.5, 0.2, -0.1, -0.6, 0.3])
    y = biquad(torch.from_numpy(x), torch.from_numpy(c)).numpy()
    np.testing.assert_allclose(y, scipy.signal.lfilter(c[:3], [1, *c[3:]], x), atol=1e-13)


def test_biquad_gradcheck():
    torch.manual_seed(0)
    x = torch.randn(2, 50, requires_grad=True, **F64)
    assert gradcheck(biquad, (x, t([0.5, 0.2, -0.1, -0.6, 0.3])))


def test_ballistics_gradcheck():
    torch.manual_seed(1)
    p = (torch.randn(3, 60, **F64) ** 2).requires_grad_()
    assert gradcheck(ballistics, (p, t(0.3), t(0.05)))


def test_ballistics_reference():
    p = torch.tensor([1.0, 0.0, 0.0, 2.0], **F64)
    env = ballistics(p, torch.tensor(0.5, **F64), torch.tensor(0.25, **F64))
    expected, e = [], 0.0
    for v in p.tolist():
        c = 0.5 if v > e else 0.25
        e += c * (v - e)
        expected.append(e)
    np.testing.assert_allclose(env.numpy(), expected)


def test_fdn_response_against_dense_solve():
    torch.manual_seed(2)
    L, K = 4, 7
    G = (0.5 * torch.randn(L, K, dtype=torch.complex128)).requires_grad_()
    A = (0.4 * torch.randn(L, L, **F64)).requires_grad_()
    b = torch.randn(L, requires_grad=True, **F64)
    C = torch.randn(2, L, requires_grad=True, **F64)
    M = torch.eye(L, **F64) - G.T[:, :, None] * A[None]
    v = torch.linalg.solve(M, (G.T * b)[..., None])[..., 0]
    ref = (v @ C.T.to(v.dtype)).T
    assert (ref - fdn_response(G, A, b, C)).abs().max() < 1e-12
    assert gradcheck(fdn_response, (G, A, b, C))


def _pingpong_reference(d, fb, c, p, K, n_fft):
    w = 2 * math.pi * torch.arange(n_fft // 2 + 1, **F64) / n_fft
    damp = (1 - p) / (1 - p * torch.exp(-1j * w))
    phi = damp * torch.exp(-1j * w * d)
    phik = torch.exp(K * torch.log(damp) - 1j * w * d * K)

    def g(s):
        return (1 - s**K * phik) / (1 - s * phi)

    e, o = g(fb), g(fb * (1 - 2 * c))
    return torch.stack([phi * (e + o) / 2, phi * (e - o) / 2])


def test_pingpong_response():
    args = [t(v) for v in (7.3, 0.6, 0.8, 0.4)]
    ref = _pingpong_reference(*args, 5, 64)
    assert (pingpong_response(*args, 5, 64) - ref).abs().max() < 1e-12
    assert gradcheck(lambda *a: pingpong_response(*a, 5, 64), args)


def test_fdn_shelf_gradcheck():
    torch.manual_seed(3)
    L = 4
    d = t([5.3, 7.1, 9.9, 11.2])
    glo, ghi, pole, bb = (torch.rand(L, requires_grad=True, **F64) for _ in range(4))
    A = (0.3 * torch.randn(L, L, **F64)).requires_grad_()
    b = torch.randn(L, requires_grad=True, **F64)
    C = torch.randn(2, L, requires_grad=True, **F64)
    assert gradcheck(lambda *a: fdn_shelf_response(*a, 32), (d, glo, ghi, pole, bb, A, b, C))


@pytest.mark.parametrize("n,length", [(16, 10), (15, 15), (17, 9)])
def test_fft_pair(n, length):
    torch.manual_seed(n)
    x = torch.randn(2, length, requires_grad=True, **F64)
    assert torch.allclose(rfft(x, n), torch.fft.rfft(x, n))
    assert gradcheck(lambda x: rfft(x, n), (x,))
    X = torch.randn(2, n // 2 + 1, dtype=torch.complex128, requires_grad=True)
    assert gradcheck(lambda X: irfft(X, n), (X,))


def test_wet_mix_gradcheck():
    torch.manual_seed(4)
    b = 9
    U = torch.randn(3, b, dtype=torch.complex128, requires_grad=True)
    D = torch.randn(2, b, dtype=torch.complex128, requires_grad=True)
    R = torch.randn(2, b, dtype=torch.complex128, requires_grad=True)
    s = [t(v) for v in (0.7, -0.3, 0.4)]
    assert gradcheck(wet_mix, (U, D, R, *s))
