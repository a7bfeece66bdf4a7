"""Tape correctness against finite differences, plus error paths."""

import numpy as np
import pytest

from scalewave import autodiff as ad
from scalewave.autodiff import (Jet2, Tape, TapeError, fd_check, forward_jet,
                                layer_slices, value_and_grad)


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestElementaryOps:
    def test_arithmetic_chain_matches_fd(self):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal(6)

        def taped(leaf):
            a = ad.take_slice(leaf, 0, 3)
            b = ad.take_slice(leaf, 3, 6)
            c = ad.add(ad.mul(a, b), ad.div(a, ad.add(ad.square(b), 2.0)))
            d = ad.sub(ad.exp(ad.mul(c, 0.3)), ad.tanh(ad.neg(c)))
            return ad.sum_squares(d)

        def plain(x):
            a, b = x[:3], x[3:]
            c = a * b + a / (b**2 + 2.0)
            d = np.exp(0.3 * c) - np.tanh(-c)
            return float(np.sum(d * d))

        val, g = value_and_grad(taped, x0)
        assert val == pytest.approx(plain(x0), rel=1e-12)
        np.testing.assert_allclose(g, _fd_grad(plain, x0), rtol=1e-6, atol=1e-9)

    def test_matmul_and_reshape_grad(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((3, 4))
        x0 = rng.standard_normal(12)

        def taped(leaf):
            m = ad.reshape(leaf, (4, 3))
            return ad.sum_squares(ad.matmul(M, m))

        def plain(x):
            return float(np.sum((M @ x.reshape(4, 3)) ** 2))

        _, g = value_and_grad(taped, x0)
        np.testing.assert_allclose(g, _fd_grad(plain, x0), rtol=1e-6, atol=1e-9)

    def test_broadcasting_adjoints(self):
        # (1, n) row broadcast against (m, n) matrix must sum adjoints back
        rng = np.random.default_rng(2)
        A = rng.standard_normal((5, 3))
        x0 = rng.standard_normal(3)

        def taped(leaf):
            row = ad.reshape(leaf, (1, 3))
            return ad.sum_squares(ad.mul(row, A))

        def plain(x):
            return float(np.sum((x[None, :] * A) ** 2))

        _, g = value_and_grad(taped, x0)
        np.testing.assert_allclose(g, _fd_grad(plain, x0), rtol=1e-6, atol=1e-9)

    def test_division_by_zero_array_raises(self):
        tape = Tape()
        a = tape.leaf(np.ones(3))
        b = tape.leaf(np.array([1.0, 0.0, 2.0]))
        with pytest.raises(TapeError, match="division by zero"):
            ad.div(a, b)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_intermediate_raises_with_op_name(self):
        tape = Tape()
        a = tape.leaf(np.array([800.0]))
        with pytest.raises(TapeError, match="exp"):
            ad.exp(a)

    def test_slice_bounds_checked(self):
        tape = Tape()
        a = tape.leaf(np.arange(4.0))
        with pytest.raises(TapeError):
            ad.take_slice(a, 2, 9)

    def test_replay_reproduces_all_values(self):
        rng = np.random.default_rng(3)
        tape = Tape()
        a = tape.leaf(rng.standard_normal(5))
        b = ad.tanh(ad.mul(a, 1.7))
        c = ad.sum_squares(ad.sub(b, 0.2))
        replayed = tape.replay()
        for stored, again in zip(tape.values, replayed):
            np.testing.assert_array_equal(stored, again)
        assert float(replayed[c.idx]) == float(c.value)


class TestJets:
    def net(self, widths, seed):
        rng = np.random.default_rng(seed)
        _, total = layer_slices(widths)
        return rng.standard_normal(total) * 0.5

    def test_forward_jet_matches_fd(self):
        widths = (2, 8, 5, 1)
        params = self.net(widths, 4)
        pt = np.array([0.3, -0.7])
        jet = forward_jet(widths, params, pt)
        assert isinstance(jet, Jet2)

        def f(p):
            return forward_jet(widths, params, p).value

        h = 1e-4  # second differences lose ~eps/h^2 to roundoff
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (f(pt + e) - f(pt - e)) / (2 * h)
            assert jet.grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)
            fd2 = (f(pt + e) - 2 * f(pt) + f(pt - e)) / h**2
            assert jet.hess[i, i] == pytest.approx(fd2, rel=1e-4, abs=1e-7)
        e0, e1 = np.array([h, 0.0]), np.array([0.0, h])
        fd_cross = (f(pt + e0 + e1) - f(pt + e0 - e1)
                    - f(pt - e0 + e1) + f(pt - e0 - e1)) / (4 * h * h)
        assert jet.hess[0, 1] == pytest.approx(fd_cross, rel=1e-4, abs=1e-7)
        np.testing.assert_array_equal(jet.hess, jet.hess.T)

    def test_parameter_gradient_through_jets(self):
        # d/dparams of (dw/dy at a point) must match finite differences:
        # third-order mixed derivatives flow through the reverse sweep
        widths = (2, 6, 1)
        params0 = self.net(widths, 5)
        X = np.array([[0.4, 1.1], [-0.2, 0.5]])

        def taped(leaf):
            jets = ad.taped_mlp(widths, leaf, X, first=(0,), second=((0, 0),))
            s = ad.add(ad.sum_squares(jets.d1[0]), ad.sum_squares(jets.d2[(0, 0)]))
            return ad.add(s, ad.sum_squares(jets.value))

        def plain(p):
            tot = 0.0
            for row in X:
                jet = forward_jet(widths, p, row)
                tot += jet.grad[0] ** 2 + jet.hess[0, 0] ** 2 + jet.value**2
            return tot

        _, g = value_and_grad(taped, params0)
        np.testing.assert_allclose(g, _fd_grad(plain, params0, 1e-6), rtol=2e-5, atol=1e-8)

    def test_input_scales_rescale_derivatives(self):
        widths = (2, 7, 1)
        params = self.net(widths, 6)
        pt = np.array([0.8, -0.3])
        plain = forward_jet(widths, params, pt)

        X = pt[None, :] * np.array([2.0, 5.0])  # physical point; net sees pt
        tape = Tape()
        leaf = tape.leaf(params)
        jets = ad.taped_mlp(widths, leaf, X, input_scales=(2.0, 5.0),
                            first=(0, 1), second=((0, 0), (0, 1), (1, 1)))
        assert float(jets.value.value[0, 0]) == pytest.approx(plain.value, rel=1e-14)
        assert float(jets.d1[0].value[0, 0]) == pytest.approx(plain.grad[0] / 2.0, rel=1e-12)
        assert float(jets.d1[1].value[0, 0]) == pytest.approx(plain.grad[1] / 5.0, rel=1e-12)
        assert float(jets.d2[(0, 1)].value[0, 0]) == pytest.approx(
            plain.hess[0, 1] / 10.0, rel=1e-12)

    def test_forward_jet_rejects_wrong_point_length(self):
        widths = (2, 4, 1)
        params = self.net(widths, 7)
        with pytest.raises(ValueError):
            forward_jet(widths, params, np.array([1.0, 2.0, 3.0]))


class TestFdCheck:
    def test_reports_small_error_for_correct_gradient(self):
        rng = np.random.default_rng(8)
        x0 = rng.standard_normal(5)

        def f(leaf):
            return ad.sum_squares(ad.tanh(leaf))

        assert fd_check(f, x0, 1e-6) < 1e-8

    def test_coords_subset(self):
        x0 = np.arange(1.0, 7.0)

        def f(leaf):
            return ad.sum_squares(leaf)

        assert fd_check(f, x0, 1e-6, coords=[0, 3]) < 1e-7

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_probe_names_coordinate(self):
        def f(leaf):
            return ad.sum_all(ad.exp(ad.mul(leaf, 400.0)))

        with pytest.raises((ValueError, TapeError)):
            fd_check(f, np.array([1.0, 2.0]), 1e-3)
