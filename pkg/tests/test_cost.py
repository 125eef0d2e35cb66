import numpy as np
import pytest

from seizedge.cost import (
    bench_inference,
    instrumented_count,
    mac_bilstm,
    mac_conv,
    mac_fc,
    model_cost,
)
from seizedge.models import build_cnn, build_dnn, build_lstm, random_bundle


class TestFormulas:
    def test_mac_fc(self):
        assert mac_fc(640, 128) == 81920
        with pytest.raises(ValueError):
            mac_fc(0, 3)

    def test_mac_conv_multiplicative(self):
        base = mac_conv(9, 256, 1, 4, 128, 1)
        assert mac_conv(18, 256, 1, 4, 128, 1) == 2 * base
        assert mac_conv(9, 256, 1, 8, 128, 1) == 2 * base

    def test_mac_conv_positive_check(self):
        with pytest.raises(ValueError):
            mac_conv(1, 0, 1, 1, 3, 1)

    def test_mac_bilstm(self):
        assert mac_bilstm(1, 2, 3) == 2 * 4 * (2 + 4) * 3


class TestModelCost:
    def test_cnn_conv_anchor(self):
        report = model_cost(build_cnn(256, 9, 1.0))
        assert report.conv_macs == 2_367_488
        per_layer = {c.name: c.macs for c in report.layers}
        assert per_layer["conv1"] == 1_179_648
        assert per_layer["conv2"] == 1_179_648
        assert per_layer["conv3"] == 8_192

    def test_dnn_fc_anchor(self):
        report = model_cost(build_dnn(256, 5, 0.5))
        assert report.fc_macs == 92_720
        assert report.total_macs == 92_720

    def test_weight_bytes_scale_with_precision(self):
        report = model_cost(build_dnn(256, 5, 0.5))
        assert report.weight_bytes("float32") == 4 * report.weight_bytes("quantized")
        assert report.weight_bytes("int16") == 2 * report.weight_bytes("quantized")

    def test_activation_bytes_positive(self):
        report = model_cost(build_cnn(256, 9, 1.0))
        assert report.activation_bytes > 0
        assert model_cost(build_cnn(256, 9, 1.0), precision="float32").activation_bytes == 2 * report.activation_bytes

    def test_lines_output(self):
        lines = model_cost(build_cnn(64, 3, 1.0)).lines()
        assert any(l.startswith("macs_total=") for l in lines)


class TestInstrumentedCount:
    @pytest.mark.parametrize("spec_fn", [
        lambda: build_dnn(64, 2, 0.5),
        lambda: build_cnn(64, 3, 1.0),
        lambda: build_lstm(32, 2, 2.0),
    ])
    def test_matches_model_cost(self, spec_fn):
        spec = spec_fn()
        bundle = random_bundle(spec, seed=0)
        x = np.random.default_rng(0).normal(size=(spec.channels, spec.samples))
        assert instrumented_count(bundle, x) == model_cost(spec).total_macs


class TestBench:
    def test_basic_stats(self):
        spec = build_dnn(64, 2, 0.5)
        bundle = random_bundle(spec, seed=1)
        x = np.random.default_rng(1).normal(size=(4, 2, 32))
        stats = bench_inference(bundle, x, repetitions=10)
        assert stats["median_s"] > 0
        assert stats["p95_s"] >= stats["median_s"]

    def test_repetition_floor(self):
        bundle = random_bundle(build_dnn(64, 2, 0.5))
        with pytest.raises(ValueError):
            bench_inference(bundle, np.zeros((1, 2, 32)), repetitions=3)
