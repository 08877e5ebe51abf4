import numpy as np
import pytest

from conftest import max_relative_grad_error
from panfl.errors import ShapeError
from panfl.linalg import make_rng
from panfl.network import (MlpModel, PanConfig, PanMode, SgdOptimizer, backward,
                           forward, gen_encoding, init_mlp, jacobian_wrt_encoding,
                           output_grad_to_layer, softmax_cross_entropy)


class TestEncoding:
    def test_amplitude_zero_additive_is_zeros(self):
        e = gen_encoding(8, PanConfig(mode="additive", amplitude=0.0, period=1.0))
        np.testing.assert_array_equal(e, np.zeros(8))

    def test_multiplicative_quarter_points(self):
        # sinusoid at j/J in {0, 1/4, 1/2, 3/4}
        e = gen_encoding(4, PanConfig(mode="multiplicative", amplitude=0.1, period=1.0))
        np.testing.assert_allclose(e, [1.0, 1.1, 1.0, 0.9], atol=1e-15)

    def test_width_two_additive_hits_sinusoid_zeros(self):
        e = gen_encoding(2, PanConfig(mode="additive", amplitude=0.25, period=1.0))
        np.testing.assert_allclose(e, [0.0, 0.0], atol=1e-15)

    @pytest.mark.parametrize("mode,lo,hi", [("additive", -0.2, 0.2),
                                            ("multiplicative", 0.8, 1.2)])
    def test_range_invariant(self, mode, lo, hi):
        for width in (3, 5, 16, 64, 257):
            for period in (1.0, 2.0, 8.0):
                e = gen_encoding(width, PanConfig(mode=mode, amplitude=0.2,
                                                  period=period))
                assert e.min() >= lo - 1e-12 and e.max() <= hi + 1e-12

    def test_pure_function_of_width_and_config(self):
        cfg = PanConfig(mode="multiplicative", amplitude=0.1, period=1.0)
        np.testing.assert_array_equal(gen_encoding(32, cfg), gen_encoding(32, cfg))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PanConfig(mode="additive", amplitude=-0.1)
        with pytest.raises(ValueError):
            PanConfig(period=0.0)


class TestForward:
    def test_off_matches_plain_mlp_exactly(self):
        rng = make_rng(0)
        plain = init_mlp((6, 10, 10, 4), PanConfig(), make_rng(5))
        X = rng.normal(size=(7, 6))
        for mode in (PanMode.ADDITIVE, PanMode.MULTIPLICATIVE):
            paired = plain.copy()
            paired.pan = PanConfig(mode=mode, amplitude=0.0, period=1.0)
            np.testing.assert_array_equal(forward(paired, X).output,
                                          forward(plain, X).output)

    def test_multiplicative_hand_example(self):
        model = MlpModel(weights=[np.eye(2), np.array([[1.0, 1.0]])],
                         biases=[np.zeros(2), np.zeros(1)],
                         pan=PanConfig(mode="multiplicative", amplitude=0.1),
                         activations=["identity", "identity"])
        out = forward(model, [[1.0, 2.0]], encoding_override=np.array([1.1, 0.9]))
        # 1*1.1 + 2*0.9
        np.testing.assert_allclose(out.output, [[2.9]], atol=1e-15)

    def test_additive_hand_example(self):
        model = MlpModel(weights=[np.eye(2), np.array([[1.0, 1.0]])],
                         biases=[np.zeros(2), np.zeros(1)],
                         pan=PanConfig(mode="additive", amplitude=0.1),
                         activations=["identity", "identity"])
        out = forward(model, [[1.0, 2.0]], encoding_override=np.array([0.1, -0.1]))
        # (1+0.1) + (2-0.1)
        np.testing.assert_allclose(out.output, [[3.0]], atol=1e-15)

    def test_shape_mismatch(self):
        model = init_mlp((6, 8, 3), PanConfig(), make_rng(1))
        with pytest.raises(ShapeError):
            forward(model, np.zeros((4, 5)))

    def test_encodings_identical_across_model_copies(self):
        # cross-client premise: encodings depend only on (width, config)
        cfg = PanConfig(mode="multiplicative", amplitude=0.1, period=1.0)
        a = init_mlp((6, 12, 12, 3), cfg, make_rng(0))
        b = init_mlp((6, 12, 12, 3), cfg, make_rng(999))
        for layer in (1, 2):
            np.testing.assert_array_equal(a.encoding(layer), b.encoding(layer))


class TestBackward:
    def test_gradcheck_twenty_seeded_configs(self):
        rng = make_rng(2024)
        worst = 0.0
        for i in range(20):
            mode = ("additive", "multiplicative")[i % 2]
            depth = int(rng.integers(2, 5))
            sizes = [int(rng.integers(3, 17)) for _ in range(depth + 1)]
            model = init_mlp(sizes, PanConfig(mode=mode, amplitude=0.1, period=1.0),
                             make_rng(100 + i))
            X = make_rng(200 + i).normal(size=(4, sizes[0]))
            y = make_rng(300 + i).integers(0, sizes[-1], size=4)
            worst = max(worst, max_relative_grad_error(model, X, y))
        assert worst < 1e-4

    def test_multiplicative_bias_gradient_is_encoding(self):
        # identity activation, single hidden layer: dh_j/db_j = e_j exactly
        width = 8
        cfg = PanConfig(mode="multiplicative", amplitude=0.2, period=2.0)
        model = MlpModel(weights=[make_rng(0).normal(size=(width, 3)), np.eye(width)],
                         biases=[np.zeros(width), np.zeros(width)],
                         pan=cfg, activations=["identity", "identity"])
        X = make_rng(1).normal(size=(1, 3))
        acts = forward(model, X)
        e = gen_encoding(width, cfg)
        for j in range(width):
            seed = np.zeros((1, width))
            seed[0, j] = 1.0
            grads = backward(model, acts, seed)
            np.testing.assert_allclose(grads.biases[0][j], e[j], atol=1e-15)

    def test_off_matches_plain_backprop_bitwise(self):
        plain = init_mlp((5, 9, 9, 3), PanConfig(), make_rng(3))
        off = plain.copy()
        off.pan = PanConfig(mode="multiplicative", amplitude=0.0)
        X = make_rng(4).normal(size=(6, 5))
        y = make_rng(5).integers(0, 3, size=6)
        for a, b in [(plain, off)]:
            acts_a, acts_b = forward(a, X), forward(b, X)
            _, ga = softmax_cross_entropy(acts_a.output, y)
            _, gb = softmax_cross_entropy(acts_b.output, y)
            for pa, pb in zip(backward(a, acts_a, ga).parameters(),
                              backward(b, acts_b, gb).parameters()):
                np.testing.assert_array_equal(pa, pb)


class TestSgd:
    def test_zero_lr_no_change(self):
        model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
        before = [p.copy() for p in model.parameters()]
        X = make_rng(1).normal(size=(5, 4))
        y = make_rng(2).integers(0, 2, size=5)
        acts = forward(model, X)
        _, g = softmax_cross_entropy(acts.output, y)
        SgdOptimizer(lr=0.0).step(model, backward(model, acts, g))
        for p, b in zip(model.parameters(), before):
            np.testing.assert_array_equal(p, b)

    def test_single_step_plain_sgd(self):
        model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
        X = make_rng(1).normal(size=(5, 4))
        y = make_rng(2).integers(0, 2, size=5)
        acts = forward(model, X)
        _, g = softmax_cross_entropy(acts.output, y)
        grads = backward(model, acts, g)
        expected = [p - 0.1 * gr for p, gr in zip(model.parameters(),
                                                  grads.parameters())]
        SgdOptimizer(lr=0.1, momentum=0.0).step(model, grads)
        for p, e in zip(model.parameters(), expected):
            np.testing.assert_array_equal(p, e)

    def test_proximal_pull_toward_anchor(self):
        model = init_mlp((4, 6, 2), PanConfig(), make_rng(0))
        anchor = init_mlp((4, 6, 2), PanConfig(), make_rng(7))
        zero = [np.zeros_like(p) for p in model.parameters()]
        from panfl.network import Gradients
        grads = Gradients(weights=zero[:2], biases=zero[2:])
        before = [p.copy() for p in model.parameters()]
        opt = SgdOptimizer(lr=0.1, momentum=0.0, prox_mu=0.5, anchor=anchor)
        opt.step(model, grads)
        for p, b, a in zip(model.parameters(), before, anchor.parameters()):
            moved = np.abs(p - a) <= np.abs(b - a)
            assert moved.all()

    def test_warmup_scales_first_steps(self):
        model = init_mlp((3, 4, 2), PanConfig(), make_rng(0))
        from panfl.network import Gradients
        ones = [np.ones_like(p) for p in model.parameters()]
        grads = Gradients(weights=ones[:2], biases=ones[2:])
        before = [p.copy() for p in model.parameters()]
        opt = SgdOptimizer(lr=1.0, momentum=0.0, warmup_steps=4)
        opt.step(model, grads)
        for p, b in zip(model.parameters(), before):
            np.testing.assert_allclose(b - p, 0.25 * np.ones_like(p), atol=1e-15)

    def test_training_trajectory_off_equals_zero_amplitude(self):
        # forward, backward, and updates identical bit for bit
        X = make_rng(1).normal(size=(16, 5))
        y = make_rng(2).integers(0, 3, size=16)
        trajectories = []
        for pan in (PanConfig(),
                    PanConfig(mode="additive", amplitude=0.0),
                    PanConfig(mode="multiplicative", amplitude=0.0)):
            model = init_mlp((5, 8, 8, 3), pan, make_rng(9))
            opt = SgdOptimizer(lr=0.05, momentum=0.9)
            for _ in range(10):
                acts = forward(model, X)
                _, g = softmax_cross_entropy(acts.output, y)
                opt.step(model, backward(model, acts, g))
            trajectories.append([p.copy() for p in model.parameters()])
        for params in trajectories[1:]:
            for p, ref in zip(params, trajectories[0]):
                np.testing.assert_array_equal(p, ref)


class TestEncodingJacobian:
    def test_requires_pan_on(self):
        model = init_mlp((4, 8, 8, 2), PanConfig(), make_rng(0))
        with pytest.raises(ShapeError):
            jacobian_wrt_encoding(model, np.zeros((1, 4)))

    def test_additive_at_zero_amplitude_nonzero(self):
        # encoding enters linearly, so the Jacobian is informative even at A=0
        model = init_mlp((4, 8, 8, 2), PanConfig(mode="additive", amplitude=0.0),
                         make_rng(0))
        jac = jacobian_wrt_encoding(model, make_rng(1).normal(size=(3, 4)))
        assert np.all(np.isfinite(jac))
        assert np.abs(jac).max() > 0

    def test_multiplicative_grows_faster_with_depth(self):
        # the depth-compounding of the multiplicative chain shows at the top
        # of its amplitude range, where per-layer encoding factors exceed 1;
        # compared as a median of depth-2 -> depth-6 norm growth over seeds
        width, amp = 16, 0.75
        X = make_rng(7).normal(size=(8, 6))

        def growth(mode, seed):
            norms = []
            for depth in (2, 6):
                sizes = (6,) + (width,) * (depth - 1) + (2,)
                model = init_mlp(sizes, PanConfig(mode=mode, amplitude=amp),
                                 make_rng(40 + seed))
                norms.append(float(np.linalg.norm(jacobian_wrt_encoding(model, X))))
            return norms[1] / norms[0]

        add = np.median([growth("additive", s) for s in range(12)])
        mul = np.median([growth("multiplicative", s) for s in range(12)])
        assert mul > add

    def test_matches_analytic_single_layer(self):
        # additive one-hidden-layer net with identity output: d y / d e_j = f'(s_j) v_j
        cfg = PanConfig(mode="additive", amplitude=0.05)
        model = init_mlp((5, 12, 1), cfg, make_rng(3))
        X = make_rng(4).normal(size=(6, 5))
        acts = forward(model, X)
        analytic = (acts.pre[0] > 0).astype(float) * model.weights[1][0]
        jac = jacobian_wrt_encoding(model, X)
        np.testing.assert_allclose(jac[:, 0, :], analytic, atol=1e-8)


class TestOutputGradToLayer:
    def test_consistent_with_full_backward_via_bias_chain(self):
        # b_1 feeds h_1 through the activation derivative and the encoding
        # factor, so dL/dh_1 composed with that local factor must reproduce
        # the bias gradient from the full backward pass
        model = init_mlp((4, 7, 6, 3), PanConfig(mode="multiplicative", amplitude=0.1),
                         make_rng(0))
        X = make_rng(1).normal(size=(5, 4))
        y = make_rng(2).integers(0, 3, size=5)
        acts = forward(model, X)
        _, g = softmax_cross_entropy(acts.output, y)
        d_h1 = output_grad_to_layer(model, acts, g, layer=1)
        grads = backward(model, acts, g)
        factor = (acts.pre[0] > 0).astype(float) * gen_encoding(7, model.pan)
        np.testing.assert_allclose((d_h1 * factor).sum(axis=0), grads.biases[0],
                                   atol=1e-12)
