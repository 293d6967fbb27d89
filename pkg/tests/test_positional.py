import math

import numpy as np
import pytest

from genoseq.positional import (
    ALiBi,
    OddDimensionError,
    Rotary,
    Sinusoidal,
    alibi_bias,
    cached_alibi_bias,
    cached_sinusoid_table,
    default_alibi_slopes,
    rope_angles,
    rope_rotate,
    rope_tables,
    scheme_from_name,
    scheme_name,
    sinusoid_table,
)


def sinusoid_reference(max_len, d_model):
    """Direct per-entry evaluation of the sin/cos definition."""
    table = np.zeros((max_len, d_model))
    for pos in range(max_len):
        for i in range(d_model // 2):
            angle = pos / (10000 ** (2 * i / d_model))
            table[pos, 2 * i] = math.sin(angle)
            table[pos, 2 * i + 1] = math.cos(angle)
    return table


class TestSinusoid:
    def test_row_zero_alternates(self):
        table = sinusoid_table(4, 8)
        assert np.array_equal(table[0], np.array([0.0, 1.0] * 4))

    def test_pos1_dim0_d4(self):
        table = sinusoid_table(2, 4)
        assert table[1, 0] == pytest.approx(math.sin(1.0), abs=1e-12)
        assert table[1, 0] == pytest.approx(0.841471, abs=1e-6)

    def test_pos1_dim2_d4(self):
        # 10000^(2/4) = 100, so the angle is 1/100
        table = sinusoid_table(2, 4)
        assert table[1, 2] == pytest.approx(math.sin(0.01), abs=1e-12)
        assert table[1, 2] == pytest.approx(0.0099998, abs=1e-7)

    def test_matches_direct_evaluation(self):
        table = sinusoid_table(50, 16)
        assert np.max(np.abs(table - sinusoid_reference(50, 16))) <= 1e-12

    def test_entries_bounded(self):
        table = sinusoid_table(300, 32)
        assert table.min() >= -1.0 and table.max() <= 1.0

    def test_odd_dimension_rejected(self):
        with pytest.raises(OddDimensionError):
            sinusoid_table(4, 7)

    def test_cached_variant_is_read_only(self):
        table = cached_sinusoid_table(8, 4)
        assert not table.flags.writeable
        assert np.array_equal(table, sinusoid_table(8, 4))


class TestAlibi:
    def test_zero_on_diagonal(self):
        bias = alibi_bias(6, default_alibi_slopes(3))
        assert np.array_equal(np.diagonal(bias, axis1=1, axis2=2), np.zeros((3, 6)))

    def test_slope_times_distance(self):
        bias = alibi_bias(4, (-0.5,))
        assert bias[0, 0, 2] == -1.0
        assert bias[0, 3, 1] == -1.0

    def test_symmetry(self):
        bias = alibi_bias(9, default_alibi_slopes(4))
        assert np.array_equal(bias, bias.swapaxes(1, 2))

    def test_bit_exact_against_product(self, rng):
        for _ in range(20):
            heads = int(rng.integers(1, 17))
            length = int(rng.integers(1, 257))
            slopes = tuple(-float(s) for s in rng.random(heads))
            bias = alibi_bias(length, slopes)
            for h in (0, heads - 1):
                i = int(rng.integers(length))
                j = int(rng.integers(length))
                assert bias[h, i, j] == slopes[h] * abs(i - j)

    def test_default_slopes_h8(self):
        expected = [-1 / 2, -1 / 4, -1 / 8, -1 / 16, -1 / 32, -1 / 64, -1 / 128, -1 / 256]
        assert list(default_alibi_slopes(8)) == expected

    def test_default_slopes_h1(self):
        assert default_alibi_slopes(1) == (-1 / 256,)

    def test_default_slopes_all_negative_and_increasing(self):
        for h in (1, 2, 3, 5, 12):
            slopes = default_alibi_slopes(h)
            assert all(s < 0 for s in slopes)
            assert list(slopes) == sorted(slopes)

    def test_cached_variant(self):
        bias = cached_alibi_bias(5, (-0.25, -0.5))
        assert not bias.flags.writeable
        assert np.array_equal(bias, alibi_bias(5, (-0.25, -0.5)))


class TestRope:
    def test_position_zero_is_identity(self, rng):
        vec = rng.standard_normal(16)
        assert np.array_equal(rope_rotate(vec, 0), vec)

    def test_norm_preserved(self, rng):
        for _ in range(30):
            d = int(rng.integers(1, 33)) * 2
            vec = rng.standard_normal(d)
            out = rope_rotate(vec, int(rng.integers(0, 512)))
            assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(vec), rel=1e-9)

    def test_quarter_turn(self):
        out = rope_rotate(np.array([1.0, 0.0]), math.pi / 2)
        assert abs(out[0]) <= 1e-12
        assert out[1] == pytest.approx(1.0, abs=1e-12)

    def test_shift_equivariance(self, rng):
        for _ in range(50):
            d = int(rng.integers(1, 33)) * 2
            q = rng.standard_normal(d)
            k = rng.standard_normal(d)
            i, j = int(rng.integers(0, 256)), int(rng.integers(0, 256))
            s = int(rng.integers(0, 512))
            base_dot = rope_rotate(q, i) @ rope_rotate(k, j)
            shifted_dot = rope_rotate(q, i + s) @ rope_rotate(k, j + s)
            assert abs(base_dot - shifted_dot) <= 1e-6

    def test_linearity(self, rng):
        q = rng.standard_normal(12)
        r = rng.standard_normal(12)
        a, b = 0.7, -2.5
        lhs = rope_rotate(a * q + b * r, 17)
        rhs = a * rope_rotate(q, 17) + b * rope_rotate(r, 17)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9

    def test_odd_dimension_rejected(self):
        with pytest.raises(OddDimensionError):
            rope_rotate(np.zeros(5), 3)

    def test_angles_definition(self):
        angles = rope_angles(3, 4, base=10000.0)
        assert angles[0, 0] == 0.0
        assert angles[2, 0] == 2.0
        assert angles[1, 1] == pytest.approx(1 / 100, abs=1e-15)

    def test_tables_match_single_vector_kernel(self, rng):
        d = 8
        cos, sin = rope_tables(5, d)
        vec = rng.standard_normal(d)
        for pos in range(5):
            batched = np.empty(d)
            batched[0::2] = vec[0::2] * cos[pos] - vec[1::2] * sin[pos]
            batched[1::2] = vec[0::2] * sin[pos] + vec[1::2] * cos[pos]
            assert np.allclose(batched, rope_rotate(vec, pos), atol=1e-12)


class TestSchemes:
    def test_parse_round_trip(self):
        assert scheme_from_name("sape", 4) == Sinusoidal()
        alibi = scheme_from_name("alibi", 4)
        assert isinstance(alibi, ALiBi) and len(alibi.slopes) == 4
        rope = scheme_from_name("rope", 4, rope_base=500.0)
        assert isinstance(rope, Rotary) and rope.base == 500.0
        for name in ("sape", "alibi", "rope"):
            assert scheme_name(scheme_from_name(name, 2)) == name

    def test_slope_overrides(self):
        scheme = scheme_from_name("alibi", 2, slopes=(-0.1, -0.2))
        assert scheme.slopes == (-0.1, -0.2)
        with pytest.raises(ValueError):
            scheme_from_name("alibi", 3, slopes=(-0.1,))

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            scheme_from_name("learned", 2)

    def test_invariants(self):
        with pytest.raises(ValueError):
            ALiBi(slopes=())
        with pytest.raises(ValueError):
            Rotary(base=1.0)
