import numpy as np
import pytest

from mabeam import autodiff as ad
from mabeam import beamforming as bf
from mabeam import system as sm
from conftest import fd_param_grad

TINY = bf.BfConfig(dim=4, layers=2)


def _random_channel(rng, b, m, k, scale=1.0):
    return scale * (rng.normal(size=(b, m, k)) + 1j * rng.normal(size=(b, m, k)))


def test_total_power_equals_budget():
    rng = np.random.default_rng(0)
    net = bf.BeamformingNet(TINY, seed=0)
    p_max = 0.1
    for _ in range(25):
        b, m, k = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 5)
        h = _random_channel(rng, b, m, k, scale=1e-5)
        out = net.forward(h, 1e-13, p_max)
        for s in range(b):
            total = (np.abs(out.w[s]) ** 2).sum()
            assert abs(total - p_max) / p_max < 1e-9
        np.testing.assert_allclose(out.mu.data.sum(axis=1), p_max, rtol=1e-12)
        np.testing.assert_allclose(out.p.data.sum(axis=1), p_max, rtol=1e-12)


def test_per_user_power_is_p():
    rng = np.random.default_rng(1)
    net = bf.BeamformingNet(TINY, seed=1)
    h = _random_channel(rng, 2, 3, 3)
    out = net.forward(h, 0.5, 2.0)
    per_user = (np.abs(out.w) ** 2).sum(axis=1)  # (B, K)
    np.testing.assert_allclose(per_user, out.p.data, rtol=1e-12)


def test_single_user_is_mrt_for_any_weights():
    rng = np.random.default_rng(2)
    for seed in range(3):
        net = bf.BeamformingNet(TINY, seed=seed)
        h = _random_channel(rng, 1, 4, 1)
        out = net.forward(h, 1e-3, 0.1)
        expected = np.sqrt(0.1) * h[0] / np.linalg.norm(h[0])
        # v is a positive multiple of h, so the normalized direction matches
        np.testing.assert_allclose(out.w[0], expected, rtol=1e-10)


def test_user_permutation_equivariance():
    rng = np.random.default_rng(3)
    net = bf.BeamformingNet(TINY, seed=4)
    h = _random_channel(rng, 2, 3, 4)
    noise = rng.uniform(0.5, 2.0, size=(2, 4))
    out = net.forward(h, noise, 1.0)
    perm = rng.permutation(4)
    out_p = net.forward(h[:, :, perm], noise[:, perm], 1.0)
    np.testing.assert_allclose(out_p.mu.data, out.mu.data[:, perm], atol=1e-9)
    np.testing.assert_allclose(out_p.p.data, out.p.data[:, perm], atol=1e-9)
    np.testing.assert_allclose(out_p.w, out.w[:, :, perm], atol=1e-9)


def test_head_is_two_wide_linear():
    net = bf.BeamformingNet(bf.BfConfig(dim=16, layers=1), seed=0)
    assert net.head_w.value.shape == (16, 2)
    assert net.head_b.value.shape == (2,)


def test_structure_mu_zero_is_matched_filter():
    rng = np.random.default_rng(4)
    h = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    w = bf.beamformer_from_structure(h, np.zeros(2), np.array([0.3, 0.7]), 1.0)
    for k in range(2):
        expected = np.sqrt([0.3, 0.7][k]) * h[:, k] / np.linalg.norm(h[:, k])
        np.testing.assert_allclose(w[:, k], expected, rtol=1e-12)


def test_structure_matches_explicit_inverse_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        h = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        mu = rng.uniform(0, 2, size=2)
        p = rng.uniform(0, 2, size=2)
        noise = rng.uniform(0.2, 3.0, size=2)
        w = bf.beamformer_from_structure(h, mu, p, noise)
        for k in range(2):
            a = np.eye(4) + sum(mu[i] / noise[k] * np.outer(h[:, i], h[:, i].conj())
                                for i in range(2))
            v = np.linalg.inv(a) @ h[:, k]
            expected = np.sqrt(p[k]) * v / np.linalg.norm(v)
            np.testing.assert_allclose(w[:, k], expected, atol=1e-10)


def test_structure_rejects_negative_inputs():
    h = np.ones((2, 2), complex)
    with pytest.raises(ValueError):
        bf.beamformer_from_structure(h, np.array([-0.1, 0.2]), np.ones(2), 1.0)


def test_taped_structure_matches_numpy_path():
    rng = np.random.default_rng(6)
    h = _random_channel(rng, 3, 4, 2)
    noise = rng.uniform(0.5, 2.0, size=(3, 2))
    mu = rng.uniform(0, 1, size=(3, 2))
    p = rng.uniform(0, 1, size=(3, 2))
    w_emb = bf.structured_beamformer_t(h, ad.constant(mu), ad.constant(p), noise)
    w = bf.embed_to_complex(w_emb.data)
    for s in range(3):
        expected = bf.beamformer_from_structure(h[s], mu[s], p[s], noise[s])
        np.testing.assert_allclose(w[s], expected, atol=1e-12)


def test_sum_rate_tensor_matches_report():
    rng = np.random.default_rng(7)
    h = _random_channel(rng, 3, 4, 3)
    w = _random_channel(rng, 3, 4, 3)
    noise = rng.uniform(0.1, 1.0, size=(3, 3))
    w_emb = np.concatenate([w.real.transpose(0, 2, 1), w.imag.transpose(0, 2, 1)],
                           axis=2)
    rates = bf.sum_rate_t(ad.constant(w_emb), h, noise)
    for s in range(3):
        rep = sm.compute_rates(h[s], w[s], noise[s])
        assert rates.data[s] == pytest.approx(rep.sum_rate, rel=1e-12)


def test_forward_gradient_matches_fd():
    rng = np.random.default_rng(8)
    net = bf.BeamformingNet(bf.BfConfig(dim=4, layers=1), seed=9)
    h = _random_channel(rng, 1, 2, 2)
    noise = np.full((1, 2), 0.8)

    def scalar():
        out = net.forward(h, noise, 1.0)
        return float(bf.sum_rate_t(out.w_embed, h, noise).data[0])

    for pname in ("bf.head.w", "bf.l0.mlp2.w01", "bf.edge_init.w00", "bf.head.b"):
        param = net.store[pname]
        net.store.zero_grads()
        out = net.forward(h, noise, 1.0)
        ad.backward(ad.sum_axis(bf.sum_rate_t(out.w_embed, h, noise), 0))
        fd = fd_param_grad(scalar, param)
        np.testing.assert_allclose(param.grad, fd, rtol=1e-4, atol=1e-8, err_msg=pname)


def test_zero_channel_gives_zero_rate_and_flat_gradient():
    net = bf.BeamformingNet(TINY, seed=2)
    h = np.zeros((1, 3, 2), complex)
    out = net.forward(h, 1.0, 0.1)
    rates = bf.sum_rate_t(out.w_embed, h, np.ones((1, 2)))
    assert rates.data[0] == 0.0
    net.store.zero_grads()
    ad.backward(ad.sum_axis(rates, 0))
    assert net.store.grad_norm() == 0.0
