import logging

import numpy as np
import pytest

import cvnet.ctensor as ct
from cvnet import wsim
from cvnet.ctensor import DomainError, ShapeError, astensor, backward
from cvnet.gradcheck import check_gradients
from cvnet.layers import param_count
from cvnet.losses import (end_to_end_loss, huber_loss, mse_metric, pm_pf,
                          sum_rate_graph, weighted_bce)
from cvnet.models import (ActDetModel, ComplexLight, PrecodeChain,
                          actdet_inputs, normalize_columns, normalize_trace)
from cvnet.optim import Adam


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestHuberLoss:
    def test_quadratic_branch(self):
        h = np.zeros((1, 1), complex)
        assert huber_loss(astensor(h + 0.5), h).item() == pytest.approx(0.125)

    def test_linear_branch(self):
        h = np.zeros((1, 1), complex)
        assert huber_loss(astensor(h + 2.0), h).item() == pytest.approx(1.5)

    def test_branches_agree_at_unit_modulus(self):
        h = np.zeros((1, 1), complex)
        r = 0.6 + 0.8j
        assert huber_loss(astensor(h + r), h).item() == pytest.approx(0.5)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        a = 2.0 * crandn(rng, 4, 5)
        b = crandn(rng, 4, 5)
        want = 0.0
        for r in np.abs(a - b).ravel():
            want += r * r / 2.0 if r <= 1.0 else r - 0.5
        want /= 20.0
        assert huber_loss(astensor(a), b).item() == pytest.approx(want)

    def test_gradcheck_through_both_branches(self):
        rng = np.random.default_rng(1)
        target = crandn(rng, 3, 3)
        est = astensor(target + 0.3 * crandn(rng, 3, 3)
                       + np.triu(2.5 * np.ones((3, 3))),
                       requires_grad=True)

        def build():
            return {"est": est}, lambda: huber_loss(est, target)

        errs = check_gradients(build, tol=1e-5)
        assert max(errs.values()) < 1e-5


class TestMseMetric:
    def test_perfect_estimate(self):
        h = crandn(np.random.default_rng(2), 4, 4)
        assert mse_metric(h, h) == 0.0

    def test_constant_offset(self):
        h = crandn(np.random.default_rng(3), 4, 4)
        assert mse_metric(h + 1.0, h) == pytest.approx(1.0)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(4)
        a, b = crandn(rng, 3, 5), crandn(rng, 3, 5)
        want = sum(abs(x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / 15
        assert mse_metric(a, b) == pytest.approx(want)


class TestComplexLight:
    def test_output_shape_and_finiteness(self):
        m = ComplexLight(rng=0)
        out = m(crandn(np.random.default_rng(5), 36, 2))
        assert out.shape == (72, 14)
        assert np.all(np.isfinite(out.value))

    def test_zeroed_network_emits_output_bias(self):
        m = ComplexLight(rng=1)
        for p in m.parameters().values():
            p.value[...] = 0.0
        bias = crandn(np.random.default_rng(6), 1, 14)
        m.b_out.value[...] = bias
        out = m(np.zeros((36, 2), complex)).value
        assert np.allclose(out, np.broadcast_to(bias, (72, 14)), atol=1e-12)

    def test_wrong_lattice_rejected(self):
        with pytest.raises(ShapeError):
            ComplexLight(rng=2)(np.zeros((12, 2), complex))

    def test_parameter_count_at_default_dims(self):
        assert param_count(ComplexLight(rng=3)) == 97_275

    def test_overfits_flat_channel(self):
        """Noiseless flat channel, one sample: from an init whose output
        projection starts at zero (the constant target is then reachable
        through the bias path), 200 optimizer steps with two learning-rate
        drops push the training loss under 1e-6."""
        rng = np.random.default_rng(7)
        g = crandn(rng, 1, 1)[0, 0]
        h = np.full((72, 14), g)
        ls = np.full((36, 2), g)
        model = ComplexLight(rng=8)
        model.w_out.value[...] = 0.0
        opt = Adam(model.parameters(), lr=1e-2)
        loss_val = None
        for step in range(200):
            if step == 80:
                opt.lr = 1e-3
            if step == 140:
                opt.lr = 1e-4
            loss = huber_loss(model(ls), h)
            backward(loss)
            opt.step()
            loss_val = loss.item().real
        assert loss_val < 1e-6

    def test_tiny_instance_gradcheck(self):
        model = ComplexLight(n_pf=4, n_pt=2, n_f=6, n_s=3, n_filter=2,
                             d_f=8, n_heads=2, rng=9)
        x = crandn(np.random.default_rng(10), 4, 2)
        target = crandn(np.random.default_rng(11), 6, 3)

        def build():
            return (model.parameters(),
                    lambda: huber_loss(model(x), target))

        errs = check_gradients(build, tol=1e-4)
        assert max(errs.values()) < 1e-4


class TestWeightedBce:
    def test_single_active_user_at_half(self):
        loss = weighted_bce(astensor(np.full((1, 1), 0.5)), [1.0], lam=10.0)
        assert loss.item() == pytest.approx(10.0 * np.log(2.0))

    def test_confident_correct_prediction_vanishes(self):
        p = np.array([[1.0 - 1e-12, 1e-12]])
        loss = weighted_bce(astensor(p), [1.0, 0.0])
        assert loss.item().real < 1e-9

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(12)
        p = rng.uniform(0.05, 0.95, size=(1, 7))
        a = (rng.uniform(size=7) < 0.4).astype(float)
        want = -np.mean(10.0 * a * np.log(p[0]) + (1 - a) * np.log(1 - p[0]))
        assert weighted_bce(astensor(p), a).item() == pytest.approx(want)

    def test_probabilities_outside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            weighted_bce(astensor(np.array([[0.0]])), [1.0])
        with pytest.raises(DomainError):
            weighted_bce(astensor(np.array([[1.0]])), [0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            weighted_bce(astensor(np.full((1, 2), 0.5)), [1.0])


class TestPmPf:
    def test_direct_count(self):
        pm, pf = pm_pf([0.9, 0.2, 0.1, 0.8], [1, 0, 1, 0], 0.5)
        assert pm == pytest.approx(0.5)
        assert pf == pytest.approx(0.5)

    def test_perfect_detector(self):
        a = np.array([1.0, 0.0, 1.0])
        assert pm_pf(a, a, 0.5) == (0.0, 0.0)

    def test_missing_class_reports_absent(self):
        pm, pf = pm_pf([0.3, 0.6], [0, 0], 0.5)
        assert pm is None and pf == pytest.approx(0.5)
        pm, pf = pm_pf([0.3, 0.6], [1, 1], 0.5)
        assert pm == pytest.approx(0.5) and pf is None

    def test_threshold_sweep_monotone(self):
        rng = np.random.default_rng(13)
        p = rng.uniform(size=200)
        a = (rng.uniform(size=200) < 0.3).astype(float)
        pms, pfs = [], []
        for gamma in np.linspace(0.01, 0.99, 33):
            pm, pf = pm_pf(p, a, gamma)
            pms.append(pm)
            pfs.append(pf)
        assert all(x <= y + 1e-12 for x, y in zip(pms, pms[1:]))
        assert all(x >= y - 1e-12 for x, y in zip(pfs, pfs[1:]))

    def test_extreme_thresholds(self):
        rng = np.random.default_rng(14)
        p = rng.uniform(0.01, 0.99, size=50)
        a = (rng.uniform(size=50) < 0.5).astype(float)
        assert pm_pf(p, a, 0.0)[0] == 0.0
        assert pm_pf(p, a, 1.0)[1] == 0.0


class TestActDet:
    def test_probabilities_in_open_interval(self):
        m = ActDetModel(rng=15)
        g = wsim.gen_grantfree_sample(12, 8, 8, seed=16)
        p = m(*actdet_inputs(g)).value.real
        assert p.shape == (1, 12)
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_zero_head_gives_half(self):
        m = ActDetModel(rng=17)
        m.head_lin.w.value[...] = 0.0
        m.head_lin.b.value[...] = 0.0
        g = wsim.gen_grantfree_sample(5, 4, 8, seed=18)
        p = m(*actdet_inputs(g)).value.real
        assert np.allclose(p, 0.5, atol=1e-14)

    def test_permutation_equivariance(self):
        m = ActDetModel(rng=19)
        g = wsim.gen_grantfree_sample(9, 8, 8, seed=20)
        b, c = actdet_inputs(g)
        perm = np.random.default_rng(21).permutation(9)
        p = m(b, c).value.real[0]
        p_perm = m(b[:, perm], c).value.real[0]
        assert np.allclose(p_perm, p[perm], atol=1e-10)

    def test_input_scaling(self):
        g = wsim.gen_grantfree_sample(6, 16, 8, seed=22)
        b, c = actdet_inputs(g)
        bs = g.B / np.sqrt(g.sigma2)
        cs = g.C / (16 * g.sigma2)
        assert b.shape == (18, 6)
        # phase preserved, magnitude compressed through asinh
        assert np.allclose(np.angle(b[:8]), np.angle(bs))
        assert np.allclose(np.abs(b[:8]), np.arcsinh(np.abs(bs)))
        assert np.allclose(np.abs(c), np.arcsinh(np.abs(cs)))
        # matched-filter rows: compressed covariance response per user
        resp = cs @ bs
        assert np.allclose(np.angle(b[8:16]), np.angle(resp))
        assert np.allclose(np.abs(b[8:16]), np.arcsinh(np.abs(resp)))
        # row 16: compressed excess-energy statistic, real-valued
        energy = np.sum(np.abs(bs) ** 2, axis=0)
        quad = np.real(np.sum(bs.conj() * resp, axis=0))
        excess = (quad - energy) / energy ** 2
        assert np.allclose(b[16].imag, 0.0)
        assert np.allclose(b[16].real,
                           np.sign(excess) * np.arcsinh(np.abs(excess)))
        # row 17: compressed interference load, real and nonnegative
        gram2 = np.abs(bs.conj().T @ bs) ** 2
        np.fill_diagonal(gram2, 0.0)
        load = gram2.T @ np.maximum(excess, 0.0) / energy ** 2
        assert np.allclose(b[17].imag, 0.0)
        assert np.allclose(b[17].real, np.arcsinh(load))
        assert np.all(b[17].real >= 0.0)

    def test_input_compression_monotone_and_bounded(self):
        g = wsim.gen_grantfree_sample(20, 8, 8, seed=220)
        b, c = actdet_inputs(g)
        raw = np.abs(g.C / (8 * g.sigma2)).ravel()
        comp = np.abs(c).ravel()
        order = np.argsort(raw)
        assert np.all(np.diff(comp[order]) >= -1e-12)
        assert comp.max() <= np.arcsinh(raw.max()) + 1e-12

    def test_pilot_length_mismatch_rejected(self):
        m = ActDetModel(pilot_len=8, rng=23)
        with pytest.raises(ShapeError):
            m(np.zeros((4, 3), complex), np.zeros((4, 4), complex))

    def test_parameter_count_at_published_dims(self):
        assert param_count(ActDetModel(rng=24)) == 1_008_745

    def test_tiny_instance_gradcheck(self):
        m = ActDetModel(pilot_len=2, d_e=4, n_layers=1, n_heads=2, d_head=2,
                        d_f=8, rng=25)
        rng = np.random.default_rng(26)
        b = crandn(rng, 6, 3)
        c = crandn(rng, 2, 2)
        c = c @ c.conj().T
        a = np.array([1.0, 0.0, 1.0])

        def build():
            return (m.parameters(),
                    lambda: weighted_bce(m(b, c), a))

        errs = check_gradients(build, tol=1e-4)
        assert max(errs.values()) < 1e-4


class TestNormalizers:
    def test_columns_hit_target_power(self):
        x = astensor(crandn(np.random.default_rng(27), 4, 3),
                     requires_grad=True)
        out = normalize_columns(x, 2.5)
        p2 = np.sum(np.abs(out.value) ** 2, axis=0)
        assert np.max(np.abs(p2 - 2.5)) < 1e-10

    def test_power_scaling_homogeneity(self):
        x = astensor(crandn(np.random.default_rng(28), 4, 3))
        v1 = normalize_columns(x, 1.0).value
        v4 = normalize_columns(x, 4.0).value
        assert np.allclose(v4, 2.0 * v1, atol=1e-12)

    def test_zero_column_falls_back(self, caplog):
        vals = crandn(np.random.default_rng(29), 4, 3)
        vals[:, 1] = 0.0
        with caplog.at_level(logging.WARNING, logger="cvnet.models"):
            out = normalize_columns(astensor(vals), 1.0).value
        assert "fallback" in caplog.text
        expect = np.zeros(4, complex)
        expect[0] = 1.0
        assert np.allclose(out[:, 1], expect, atol=1e-12)

    def test_trace_normalization(self):
        x = astensor(crandn(np.random.default_rng(30), 5, 2))
        out = normalize_trace(x, 3.0).value
        assert abs(np.sum(np.abs(out) ** 2) - 3.0) < 1e-10

    def test_zero_matrix_trace_fallback(self, caplog):
        with caplog.at_level(logging.WARNING, logger="cvnet.models"):
            out = normalize_trace(astensor(np.zeros((3, 2), complex)), 2.0)
        assert "fallback" in caplog.text
        assert abs(np.sum(np.abs(out.value) ** 2) - 2.0) < 1e-10

    def test_gradient_flows_through_normalization(self):
        x = astensor(crandn(np.random.default_rng(31), 3, 2),
                     requires_grad=True)

        def build():
            target = np.eye(3, 2, dtype=complex)
            return ({"x": x},
                    lambda: ct.cmean(ct.abs2(
                        ct.sub(normalize_columns(x, 2.0), target))))

        errs = check_gradients(build, tol=1e-5)
        assert max(errs.values()) < 1e-5


class TestPrecodeChain:
    def _tiny(self, seed=32):
        return PrecodeChain(n_antennas=4, n_users=2, m_pilots=4, b_bits=3,
                            rho=1.0, d_p=4, p_heads=2, l_p=1, m_p=1,
                            l_d=2, l_f=2, d_p_ff=8, rng=seed)

    def test_pilot_columns_meet_power_budget(self):
        chain = self._tiny()
        h = crandn(np.random.default_rng(33), 4, 2)
        p = chain.pilot_forward(h).value
        assert np.max(np.abs(np.sum(np.abs(p) ** 2, axis=0) - 1.0)) < 1e-10

    def test_feedback_modes_agree_in_sign(self):
        chain = self._tiny()
        y = crandn(np.random.default_rng(34), 4, 2)
        soft = chain.feedback_forward(y, mode="train").value.real
        hard = chain.feedback_forward(y, mode="infer").value.real
        assert set(np.unique(hard)) <= {-1.0, 1.0}
        nz = np.abs(soft) > 1e-12
        assert np.array_equal(np.sign(soft[nz]), hard[nz])

    def test_sign_of_zero_is_plus_one(self):
        chain = self._tiny()
        last = chain.feedback_net.layers[-1]
        last.w.value[...] = 0.0
        last.b.value[...] = 0.0
        y = crandn(np.random.default_rng(35), 4, 2)
        hard = chain.feedback_forward(y, mode="infer").value.real
        assert np.all(hard == 1.0)

    def test_unknown_feedback_mode_rejected(self):
        with pytest.raises(ValueError):
            self._tiny().feedback_forward(np.zeros((4, 2), complex),
                                          mode="hard")

    def test_precoder_trace_constraint(self):
        chain = self._tiny()
        rng = np.random.default_rng(36)
        q = np.sign(rng.standard_normal((3, 2)))
        v = chain.precoder_forward(q, crandn(rng, 4, 2)).value
        assert abs(np.trace(v.conj().T @ v).real - 1.0) < 1e-10

    def test_single_user_chain_well_formed(self):
        chain = PrecodeChain(n_antennas=4, n_users=1, m_pilots=4, b_bits=3,
                             d_p=4, p_heads=2, l_p=1, m_p=1, l_d=2, l_f=2,
                             d_p_ff=8, rng=37)
        du = wsim.gen_sv_channels(4, 1, 2, 2.0e9, 2.2e9, seed=38)
        loss = end_to_end_loss(chain, du.H_UL, du.H_DL, 0.1, noise_seed=39)
        assert np.isfinite(loss.item())

    def test_run_matches_stepwise_composition(self):
        chain = self._tiny()
        rng = np.random.default_rng(40)
        h_ul = crandn(rng, 4, 2)
        h_dl = crandn(rng, 4, 2)
        noise = 0.1 * crandn(rng, 4, 2)
        v = chain.run(h_ul, h_dl, noise).value
        p = chain.pilot_forward(h_ul)
        y = p.value.conj().T @ h_dl + noise
        q = chain.feedback_forward(y, mode="train")
        v_manual = chain.precoder_forward(q, h_ul).value
        assert np.allclose(v, v_manual, atol=1e-12)

    def test_zero_precoder_gives_zero_rate(self):
        h = crandn(np.random.default_rng(41), 4, 2)
        rate = sum_rate_graph(np.zeros((4, 2), complex), h, 1.0)
        assert rate.item() == 0.0

    def test_graph_rate_matches_reference_on_zf(self):
        du = wsim.gen_sv_channels(8, 2, 4, 2.0e9, 2.2e9, seed=42)
        zf = wsim.zf_precoder(du.H_DL, 1.0)
        want = wsim.sum_rate(zf, du.H_DL, 0.05)
        got = sum_rate_graph(zf, du.H_DL, 0.05).item()
        assert got == pytest.approx(want, rel=1e-12)

    def test_infer_precoder_detached_and_normalized(self):
        chain = self._tiny()
        rng = np.random.default_rng(43)
        v = chain.infer_precoder(crandn(rng, 4, 2), crandn(rng, 4, 2),
                                 0.1 * crandn(rng, 4, 2))
        assert isinstance(v, np.ndarray)
        assert abs(np.trace(v.conj().T @ v).real - 1.0) < 1e-10

    def test_end_to_end_gradcheck(self):
        chain = self._tiny(seed=44)
        rng = np.random.default_rng(45)
        h_ul = crandn(rng, 4, 2)
        h_dl = crandn(rng, 4, 2)

        def build():
            return (chain.parameters(),
                    lambda: end_to_end_loss(chain, h_ul, h_dl, 0.2,
                                            noise_seed=46))

        errs = check_gradients(build, tol=1e-4)
        assert max(errs.values()) < 1e-4
