import numpy as np
import pytest

from fabricnet import ConvGeom, DimensionError, GeometryError, Tensor, conv2d, elementwise, matmul, maxpool2d
from oracles import conv2d_oracle, matmul_oracle, maxpool2d_oracle


class TestTensor:
    def test_shape_and_flat_data(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        assert t.shape == (3, 2)
        assert t.data.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]  # row-major
        assert t.size == 6

    def test_immutable(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.array[0] = 5.0

    def test_construction_copies(self):
        src = np.ones(4)
        t = Tensor(src)
        src[0] = 99.0
        assert t.data[0] == 1.0

    def test_zero_dim_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.ones((2, 0, 3)))

    def test_reshape_mismatch(self):
        with pytest.raises(DimensionError):
            Tensor([1.0, 2.0, 3.0], shape=(2, 2))


class TestConvGeom:
    def test_output_size(self):
        assert ConvGeom(2, 2).output_size(3, 3) == (2, 2)
        assert ConvGeom(3, 3, stride=1, padding=1).output_size(5, 5) == (5, 5)

    def test_non_integer_output_rejected(self):
        with pytest.raises(GeometryError):
            ConvGeom(2, 2, stride=2).output_size(5, 5)

    def test_kernel_larger_than_input(self):
        with pytest.raises(GeometryError):
            ConvGeom(4, 4).output_size(3, 3)

    def test_bad_fields(self):
        with pytest.raises(GeometryError):
            ConvGeom(0, 2)
        with pytest.raises(GeometryError):
            ConvGeom(2, 2, stride=0)
        with pytest.raises(GeometryError):
            ConvGeom(2, 2, padding=-1)


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.random.default_rng(0).normal(size=(1, 1, 3, 3)))
        k = Tensor([[[[1.0]]]])
        out = conv2d(x, k, Tensor.zeros((1,)), ConvGeom(1, 1))
        np.testing.assert_array_equal(out.array, x.array)

    def test_worked_example(self):
        # sliding 2x2 sums of [[1..9]] computed by the nested-loop oracle
        x = Tensor([[1, 2, 3], [4, 5, 6], [7, 8, 9]], shape=(1, 1, 3, 3))
        k = Tensor(np.ones((1, 1, 2, 2)))
        out = conv2d(x, k, Tensor.zeros((1,)), ConvGeom(2, 2))
        assert out.array.reshape(2, 2).tolist() == [[12.0, 16.0], [24.0, 28.0]]
        expect = conv2d_oracle(x.array, k.array, np.zeros(1), 1, 0)
        np.testing.assert_array_equal(out.array, expect)

    def test_zero_kernel_gives_bias(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(2, 3, 4, 4)))
        k = Tensor.zeros((2, 3, 2, 2))
        b = Tensor([0.25, -1.5])
        out = conv2d(x, k, b, ConvGeom(2, 2))
        assert np.all(out.array[:, 0] == 0.25)
        assert np.all(out.array[:, 1] == -1.5)

    def test_channel_mismatch_names_axes(self):
        x = Tensor.zeros((1, 3, 4, 4))
        k = Tensor.zeros((2, 2, 2, 2))
        with pytest.raises(DimensionError, match="axis 1"):
            conv2d(x, k, Tensor.zeros((2,)), ConvGeom(2, 2))

    def test_geometry_error(self):
        x = Tensor.zeros((1, 1, 5, 5))
        k = Tensor.zeros((1, 1, 2, 2))
        with pytest.raises(GeometryError):
            conv2d(x, k, Tensor.zeros((1,)), ConvGeom(2, 2, stride=2))

    def test_matches_oracle_on_random_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n, c, f = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
            h, w = rng.integers(2, 9), rng.integers(2, 9)
            kh = rng.integers(1, h + 1)
            kw = rng.integers(1, w + 1)
            pad = int(rng.integers(0, 2))
            strides = [s for s in (1, 2, 3)
                       if (h + 2 * pad - kh) % s == 0 and (w + 2 * pad - kw) % s == 0]
            stride = int(rng.choice(strides))
            x = rng.uniform(-1, 1, (n, c, h, w))
            k = rng.uniform(-1, 1, (f, c, kh, kw))
            b = rng.uniform(-1, 1, f)
            got = conv2d(Tensor(x), Tensor(k), Tensor(b),
                         ConvGeom(int(kh), int(kw), stride, pad)).array
            want = conv2d_oracle(x, k, b, stride, pad)
            assert np.abs(got - want).max() < 1e-12

    def test_linear_in_input(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 2, 5, 5))
        z = rng.normal(size=(1, 2, 5, 5))
        k = Tensor(rng.normal(size=(3, 2, 3, 3)))
        b = Tensor.zeros((3,))
        geom = ConvGeom(3, 3)
        alpha, beta = 1.7, -0.4
        combined = conv2d(Tensor(alpha * x + beta * z), k, b, geom).array
        separate = (alpha * conv2d(Tensor(x), k, b, geom).array
                    + beta * conv2d(Tensor(z), k, b, geom).array)
        np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-12)


class TestMaxpool2d:
    def test_constant_field(self):
        out, _ = maxpool2d(Tensor.full((1, 2, 4, 4), 3.25), 2, 2)
        assert np.all(out.array == 3.25)

    def test_worked_example(self):
        x = Tensor([[1, 2, 3], [4, 5, 6], [7, 8, 9]], shape=(1, 1, 3, 3))
        out, argmax = maxpool2d(x, 2, 1)
        assert out.array.reshape(2, 2).tolist() == [[5.0, 6.0], [8.0, 9.0]]
        expect = maxpool2d_oracle(x.array, 2, 1)
        np.testing.assert_array_equal(out.array, expect)
        # flat source indices of the winners in the 3x3 grid
        assert argmax.reshape(2, 2).tolist() == [[4, 5], [7, 8]]

    def test_full_extent_window(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 5, 5))
        out, _ = maxpool2d(Tensor(x), 5, 1)
        np.testing.assert_array_equal(out.array[..., 0, 0], x.max(axis=(2, 3)))

    def test_window_bounds_property(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            h = int(rng.integers(2, 8))
            x = rng.normal(size=(1, 2, h, h))
            window = int(rng.integers(1, h + 1))
            strides = [s for s in (1, 2) if (h - window) % s == 0]
            stride = int(rng.choice(strides))
            out, _ = maxpool2d(Tensor(x), window, stride)
            assert out.array.max() <= x.max()
            assert np.abs(out.array - maxpool2d_oracle(x, window, stride)).max() == 0.0

    def test_oversize_window_rejected(self):
        with pytest.raises(GeometryError):
            maxpool2d(Tensor.zeros((1, 1, 3, 3)), 4, 1)


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(3, 4))
        out = matmul(Tensor(a), Tensor(np.eye(4)))
        np.testing.assert_array_equal(out.array, a)

    def test_worked_example(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
        assert out.array.tolist() == [[17.0], [39.0]]
        np.testing.assert_array_equal(
            out.array, matmul_oracle(np.array([[1., 2.], [3., 4.]]), np.array([[5.], [6.]]))
        )

    def test_zero_annihilates(self):
        out = matmul(Tensor.zeros((2, 3)), Tensor(np.random.default_rng(0).normal(size=(3, 2))))
        assert np.all(out.array == 0.0)

    def test_inner_dim_mismatch(self):
        with pytest.raises(DimensionError, match="inner"):
            matmul(Tensor.zeros((2, 3)), Tensor.zeros((4, 2)))

    def test_associativity(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            a, b, c = (Tensor(rng.normal(size=(4, 4))) for _ in range(3))
            left = matmul(matmul(a, b), c).array
            right = matmul(a, matmul(b, c)).array
            np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-12)


class TestElementwise:
    def test_sigmoid_midpoint(self):
        out = elementwise(Tensor([0.0]), "sigmoid")
        assert out.array[0] == 0.5

    def test_relu_definition(self):
        out = elementwise(Tensor([-1.0, 0.0, 2.0]), "relu")
        assert out.array.tolist() == [0.0, 0.0, 2.0]

    def test_sigmoid_symmetry(self):
        xs = np.linspace(-50, 50, 41)
        s = elementwise(Tensor(xs), "sigmoid").array
        s_neg = elementwise(Tensor(-xs), "sigmoid").array
        np.testing.assert_allclose(s + s_neg, 1.0, atol=1e-12)

    def test_sigmoid_saturates_without_overflow(self):
        out = elementwise(Tensor([-1e6, 1e6]), "sigmoid").array
        assert out.tolist() == [0.0, 1.0]

    def test_scale_and_add_bias(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert elementwise(t, "scale", 2.0).array.tolist() == [[2.0, 4.0], [6.0, 8.0]]
        out = elementwise(t, "add-bias", Tensor([10.0, 20.0]))
        assert out.array.tolist() == [[11.0, 22.0], [13.0, 24.0]]
