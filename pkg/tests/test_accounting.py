import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qot import qcore
from qot.harness import accounting as acc
from qot.harness.config import PRESETS
from qot.qnn.layers import QFC, Linear
from qot.qvit import QViT, QViTConfig, RealViT

# Default configuration summed by hand, layer by layer.
DEFAULT_SPREADSHEET = {
    "pos_embed": 4 * 64 * 49,
    "input_proj": 4 * 49 * 64 + 4 * 64,
    "blocks": 4 * (
        2 * 8 * (4 * 64 * 8 + 4 * 8) + 8 * 4 * 64 * 8  # per-head q and v with bias, k without
        + (4 * 64 * 64 + 4 * 64)  # output projection
        + 2 * 4 * 64  # block LayerNorm
        + (4 * 64 * 128 + 4 * 128) + (4 * 128 * 64 + 4 * 64)  # two pointwise QConvs
        + 2 * 4 * 128  # LayerNorm between them
    ),
    "final_norm": 2 * 4 * 64,
    "mlp": (4 * 64 * 64 * 64 + 4 * 64) + (4 * 64 * 64 + 4 * 64),
    "head": 4 * 64 * 7 + 7,
}


class TestParams:
    def test_single_qfc(self):
        assert acc.qfc_params(1, 1) == 8
        assert QFC(1, 1).num_params() == 8

    def test_quarter_of_real_fc(self):
        assert acc.linear_params(4, 4) == 20
        assert QFC(1, 1, bias=False).num_params() * 4 == Linear(4, 4, bias=False).num_params()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20))
    def test_quarter_ratio_any_width(self, d_in, d_out):
        assert 4 * acc.qfc_params(d_in, d_out, bias=False) == acc.linear_params(4 * d_in, 4 * d_out, bias=False)

    def test_default_matches_spreadsheet(self):
        expected = sum(DEFAULT_SPREADSHEET.values())
        assert expected == 1_629_703
        model = QViT(QViTConfig())
        assert acc.count_params(model).total_params == expected
        assert acc.qvit_closed_form_params(QViTConfig()) == expected

    @pytest.mark.parametrize("name", ["tiny", "paper"])
    def test_closed_form_matches_introspection(self, name):
        cfg = PRESETS[name].qvit
        assert acc.count_params(QViT(cfg)).total_params == acc.qvit_closed_form_params(cfg)

    def test_per_layer_groups_sum_to_total(self):
        model = QViT(QViTConfig())
        rep = acc.count_params(model, depth=1)
        assert set(rep.params) == {"pos_embed", "input_proj", "blocks", "final_norm", "mlp", "head"}
        for k, v in DEFAULT_SPREADSHEET.items():
            assert rep.params[k] == v, k

    def test_independent_of_data(self):
        model = QViT(QViTConfig(), seed=0)
        before = acc.count_params(model).total_params
        model(np.random.default_rng(0).normal(size=(1, 7, 7, 64, 4)))
        assert acc.count_params(model).total_params == before

    def test_real_twin_ratio(self):
        cfg = QViTConfig()
        q, r = acc.count_params(QViT(cfg)).total_params, acc.count_params(RealViT(cfg)).total_params
        assert 0.25 <= q / r <= 1 / 3


class TestFlops:
    def test_hamilton_is_28(self):
        # 4x4 matrix times a 4-vector: 16 multiplies, 4 rows of 3 additions
        M = qcore.left_matrix(np.array([1.0, 2, 3, 4]))
        muls = np.count_nonzero(M)
        adds = M.shape[0] * (M.shape[1] - 1)
        assert muls + adds == acc.HAMILTON_FLOPS == 28
        assert acc.qfc_flops(1, 1, 1, bias=False) == 28

    def test_small_qfc(self):
        assert acc.qfc_flops(1, 2, 1, bias=False) == 60

    def test_bias_adds_a_quaternion_add(self):
        assert acc.qfc_flops(1, 2, 1) - acc.qfc_flops(1, 2, 1, bias=False) == 4

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 64), st.integers(1, 16), st.integers(1, 16))
    def test_linear_in_tokens(self, t, d_in, d_out):
        assert acc.qfc_flops(2 * t, d_in, d_out) == 2 * acc.qfc_flops(t, d_in, d_out)

    def test_attention_input_doubles_with_tokens(self):
        a = acc.count_flops(QViT(QViTConfig(C=32)))
        b = acc.count_flops(QViT(QViTConfig(C=64)))
        assert b.flops["blocks.0.attn.qkv"] == 2 * a.flops["blocks.0.attn.qkv"]

    def test_report_lines(self):
        rep = acc.count_params(QViT(QViTConfig())).merge(acc.count_flops(QViT(QViTConfig())))
        lines = rep.lines()
        assert lines[0] == "layer\tparams\tflops"
        name, params, flops = lines[-1].split("\t")
        assert name == "TOTAL" and int(params) == rep.total_params and int(flops) == rep.total_flops

    def test_input_shape_checked(self):
        with pytest.raises(ValueError):
            acc.count_flops(QViT(QViTConfig()), (7, 7, 32, 4))

    def test_convention_documented(self):
        assert "28" in acc.CONVENTION and "MAC = 2" in acc.CONVENTION
