"""Policy network, gain schedule, and checkpoint format."""

import json

import numpy as np
import pytest

from rdsteer.autodiff import Tensor
from rdsteer.controller import (
    ARCHITECTURE,
    CHECKPOINT_FORMAT_VERSION,
    LAYER_SHAPES,
    GainSchedule,
    amplitude_at,
    control_fields,
    init_controller,
    load_checkpoint,
    policy_forward,
    save_checkpoint,
    smooth3,
)
from rdsteer.errors import ConfigError
from rdsteer.grayscott import SimParams, SimState, init_state


def _state(rng, h=24, w=24, t=0):
    u = rng.uniform(0.2, 1.0, (h, w)).astype(np.float32)
    v = rng.uniform(0.0, 0.5, (h, w)).astype(np.float32)
    return SimState(Tensor(u), Tensor(v), t=t)


class TestInit:
    def test_layer_shapes_and_zero_biases(self):
        p = init_controller(3)
        shapes = [t.data.shape for t in p.parameters()]
        want = []
        for s in LAYER_SHAPES:
            want.extend([s, (s[0],)])
        assert shapes == want
        for t in (p.b1, p.b2, p.b3):
            assert np.all(t.data == 0.0)
        assert p.w1.dtype == np.float32

    def test_seeded_determinism(self):
        a = init_controller(7)
        b = init_controller(7)
        c = init_controller(8)
        for x, y in zip(a.parameters(), b.parameters()):
            assert np.array_equal(x.data, y.data)
        assert not np.array_equal(a.w1.data, c.w1.data)

    def test_fan_in_scaling(self):
        p = init_controller(0)
        # sigma = 1/sqrt(fan_in) = 1/sqrt(2*9) for layer 1
        std = p.w1.data.std()
        assert 0.3 / np.sqrt(18) < std < 3.0 / np.sqrt(18)


class TestForward:
    def test_raw_outputs_strictly_bounded(self, rng):
        p = init_controller(1)
        s = _state(rng)
        raw_f, raw_k = policy_forward(p, s.u, s.v)
        assert np.abs(raw_f.data).max() < 1.0
        assert np.abs(raw_k.data).max() < 1.0
        assert raw_f.data.shape == s.u.data.shape

    def test_smooth3_constant_preserved(self):
        f = Tensor(np.full((10, 10), 0.37))
        out = smooth3(f)
        assert np.allclose(out.data, 0.37, atol=1e-12)

    def test_smooth3_matches_edge_padded_box(self, rng):
        f = rng.standard_normal((9, 7))
        padded = np.pad(f, 1, mode="edge")
        want = np.zeros_like(f)
        for di in range(3):
            for dj in range(3):
                want += padded[di : di + 9, dj : dj + 7]
        want /= 9.0
        got = smooth3(Tensor(f)).data
        assert np.allclose(got, want, atol=1e-12)


class TestSchedule:
    def test_validation(self):
        with pytest.raises(ConfigError):
            GainSchedule(amplitude=-0.01)
        with pytest.raises(ConfigError):
            GainSchedule(warm=-1)

    def test_profile_values(self):
        s = GainSchedule(amplitude=0.03, warm=10, hold=60, decay=50)
        assert amplitude_at(s, 0) == 0.0
        assert amplitude_at(s, 5) == pytest.approx(0.015)
        assert amplitude_at(s, 10) == 0.03
        assert amplitude_at(s, 69) == 0.03
        assert amplitude_at(s, 95) == pytest.approx(0.015)
        assert amplitude_at(s, 119) == pytest.approx(0.03 / 50)
        assert amplitude_at(s, 120) == 0.0
        assert amplitude_at(s, 145) == 0.0

    def test_negative_step_rejected(self):
        with pytest.raises(ConfigError):
            amplitude_at(GainSchedule(), -1)


class TestControlFields:
    def test_amplitude_is_hard_bound(self, rng):
        p = init_controller(2)
        sched = GainSchedule(amplitude=0.03, warm=0, hold=100, decay=0)
        s = _state(rng, t=10)
        df, dk = control_fields(p, sched, s)
        assert np.abs(df.data).max() <= 0.03
        assert np.abs(dk.data).max() <= 0.03
        assert np.abs(df.data).max() > 0.0

    def test_zero_amplitude_exact_zero(self, rng):
        p = init_controller(2)
        s = _state(rng, t=500)
        df, dk = control_fields(p, GainSchedule(), s)
        assert np.all(df.data == 0.0)
        assert np.all(dk.data == 0.0)

    def test_fields_scale_linearly_with_amplitude(self, rng):
        # same state, same weights: only A differs, so mean squares scale by (A1/A0)^2
        p = init_controller(4)
        s = _state(rng, t=30)
        lo = GainSchedule(amplitude=0.030, warm=0, hold=100, decay=0)
        hi = GainSchedule(amplitude=0.045, warm=0, hold=100, decay=0)
        df0, dk0 = control_fields(p, lo, s)
        df1, dk1 = control_fields(p, hi, SimState(s.u, s.v, t=30))
        ms0 = float((df0.data.astype(np.float64) ** 2 + dk0.data.astype(np.float64) ** 2).mean())
        ms1 = float((df1.data.astype(np.float64) ** 2 + dk1.data.astype(np.float64) ** 2).mean())
        assert ms1 / ms0 == pytest.approx((0.045 / 0.030) ** 2, rel=1e-5)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = init_controller(11)
        path = str(tmp_path / "ck.json")
        save_checkpoint(path, p, metadata={"episodes": 3})
        q, meta = load_checkpoint(path)
        assert meta == {"episodes": 3}
        for a, b in zip(p.parameters(), q.parameters()):
            assert a.data.dtype == b.data.dtype
            assert np.array_equal(a.data, b.data)

    def test_document_fields(self, tmp_path):
        path = str(tmp_path / "ck.json")
        save_checkpoint(path, init_controller(0))
        doc = json.loads((tmp_path / "ck.json").read_text())
        assert doc["format_version"] == CHECKPOINT_FORMAT_VERSION
        assert doc["architecture"] == ARCHITECTURE
        assert [tuple(s) for s in doc["layer_shapes"]] == list(LAYER_SHAPES)

    def test_bad_version_rejected(self, tmp_path):
        path = str(tmp_path / "ck.json")
        save_checkpoint(path, init_controller(0))
        doc = json.loads((tmp_path / "ck.json").read_text())
        doc["format_version"] = 99
        (tmp_path / "ck.json").write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_checkpoint(path)

    def test_bad_shapes_rejected(self, tmp_path):
        path = str(tmp_path / "ck.json")
        save_checkpoint(path, init_controller(0))
        doc = json.loads((tmp_path / "ck.json").read_text())
        doc["layer_shapes"][0] = [8, 2, 3, 3]
        (tmp_path / "ck.json").write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_checkpoint(path)

    def test_bad_size_rejected(self, tmp_path):
        path = str(tmp_path / "ck.json")
        save_checkpoint(path, init_controller(0))
        doc = json.loads((tmp_path / "ck.json").read_text())
        doc["weights"]["b1"] = doc["weights"]["b1"][:-1]
        (tmp_path / "ck.json").write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            load_checkpoint(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_checkpoint(str(tmp_path / "nope.json"))


def test_sim_state_from_init_controllable():
    params = SimParams()
    state = init_state(5, params)
    p = init_controller(5)
    sched = GainSchedule(amplitude=0.03, warm=0, hold=10, decay=0)
    df, dk = control_fields(p, sched, state)
    assert df.data.shape == (params.height, params.width)
    assert np.abs(df.data).max() <= 0.03
