import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tcnads.attacks import (
    AttackSpec,
    apply_attacks,
    inject,
    inject_continuous,
    inject_playback,
    inject_plateau,
    inject_suppress,
    load_attack_specs,
    save_attack_specs,
)
from tcnads.errors import InsufficientDataError
from tcnads.ingest import SignalSeries


def ramp_series(n=20, m=2, mid="a"):
    values = np.stack([np.arange(n, dtype=float) / n + j for j in range(m)], axis=1)
    return SignalSeries(mid, np.arange(n) * 0.01, values, np.zeros(n, dtype=np.int64))


class TestPlateau:
    def test_holds_value_and_labels(self):
        s = ramp_series()
        out = inject_plateau(s, AttackSpec("plateau", "a", (0,), start=5, duration=4, value=0.9))
        assert np.all(out.values[5:9, 0] == 0.9)
        assert out.labels.tolist() == [0] * 5 + [1] * 4 + [0] * 11
        assert np.array_equal(out.values[:, 1], s.values[:, 1])
        assert np.array_equal(out.values[:5], s.values[:5]) and np.array_equal(out.values[9:], s.values[9:])

    def test_default_is_last_clean_value_plus_offset(self):
        s = ramp_series()
        out = inject_plateau(s, AttackSpec("plateau", "a", (0,), start=5, duration=3, offset=0.3))
        assert np.all(out.values[5:8, 0] == s.values[4, 0] + 0.3)

    def test_input_untouched(self):
        s = ramp_series()
        before = s.values.copy()
        inject_plateau(s, AttackSpec("plateau", "a", (0, 1), start=0, duration=20, value=0.0))
        assert np.array_equal(s.values, before) and not s.labels.any()


class TestSuppress:
    def test_removes_and_labels_next(self):
        s = ramp_series()
        out = inject_suppress(s, AttackSpec("suppress", "a", start=5, duration=5))
        assert len(out) == 15
        assert np.array_equal(out.timestamps[:5], s.timestamps[:5])
        assert np.array_equal(out.timestamps[5:], s.timestamps[10:])
        assert out.labels.tolist() == [0] * 5 + [1] + [0] * 9

    def test_post_gap_labels(self):
        out = inject_suppress(ramp_series(), AttackSpec("suppress", "a", start=5, duration=5), post_gap_labels=3)
        assert out.labels.sum() == 3 and out.labels[5:8].all()

    def test_tail_suppression_labels_nothing(self):
        out = inject_suppress(ramp_series(), AttackSpec("suppress", "a", start=15, duration=5))
        assert len(out) == 15 and out.labels.sum() == 0

    def test_min_length(self):
        with pytest.raises(InsufficientDataError):
            inject_suppress(ramp_series(), AttackSpec("suppress", "a", start=0, duration=15), min_length=8)


class TestContinuous:
    def test_reaches_target_exactly(self):
        s = ramp_series()
        spec = AttackSpec("continuous", "a", (1,), start=4, duration=8, value=3.0)
        out = inject_continuous(s, spec)
        assert out.values[11, 1] == 3.0
        # monotone approach from below
        assert np.all(np.diff(out.values[3:12, 1]) > 0)
        assert out.labels[4:12].all() and out.labels.sum() == 8

    def test_linear_fractions(self):
        s = SignalSeries("a", np.arange(6), np.zeros((6, 1)), np.zeros(6))
        out = inject_continuous(s, AttackSpec("continuous", "a", (0,), start=1, duration=4, value=1.0))
        np.testing.assert_allclose(out.values[:, 0], [0, 0.25, 0.5, 0.75, 1.0, 0], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("ramp", ["quadratic", "smoothstep"])
    def test_other_ramps_end_on_target(self, ramp):
        s = SignalSeries("a", np.arange(10), np.zeros((10, 1)), np.zeros(10))
        out = inject_continuous(s, AttackSpec("continuous", "a", (0,), start=2, duration=5, value=0.5, ramp=ramp))
        assert out.values[6, 0] == 0.5
        assert np.all(np.diff(out.values[1:7, 0]) >= 0)

    def test_unknown_ramp(self):
        with pytest.raises(ValueError):
            AttackSpec("continuous", "a", ramp="cubic")


class TestPlayback:
    def test_copies_earlier_span(self):
        s = ramp_series()
        out = inject_playback(s, AttackSpec("playback", "a", (0,), start=12, duration=4, source_start=2))
        assert np.array_equal(out.values[12:16, 0], s.values[2:6, 0])
        assert np.array_equal(out.values[12:16, 1], s.values[12:16, 1])
        assert out.labels.sum() == 4

    def test_source_must_precede(self):
        with pytest.raises(ValueError):
            inject_playback(ramp_series(), AttackSpec("playback", "a", start=5, duration=4, source_start=3))

    def test_needs_source(self):
        with pytest.raises(ValueError):
            AttackSpec("playback", "a", start=5, duration=4)


class TestValidation:
    def test_span_past_end(self):
        with pytest.raises(ValueError):
            inject(ramp_series(), AttackSpec("plateau", "a", start=18, duration=5, value=0))

    def test_bad_signal_index(self):
        with pytest.raises(ValueError):
            inject(ramp_series(m=2), AttackSpec("plateau", "a", (2,), start=0, duration=1, value=0))

    def test_wrong_id(self):
        with pytest.raises(ValueError):
            inject(ramp_series(), AttackSpec("plateau", "b", start=0, duration=1, value=0))

    @pytest.mark.parametrize("kwargs", [{"start": -1}, {"duration": 0}, {"kind": "flood"}])
    def test_bad_spec(self, kwargs):
        base = {"kind": "plateau", "message_id": "a", "start": 0, "duration": 1}
        with pytest.raises(ValueError):
            AttackSpec(**{**base, **kwargs})


class TestApplyAttacks:
    def test_indices_refer_to_clean_series(self):
        s = ramp_series(40)
        specs = [
            AttackSpec("suppress", "a", start=5, duration=5),
            AttackSpec("plateau", "a", (0,), start=20, duration=3, value=7.0),
        ]
        out, summaries = apply_attacks({"a": s}, specs)
        a = out["a"]
        assert len(a) == 35
        # plateau was placed at clean index 20, i.e. timestamp 0.20
        hit = np.flatnonzero(a.values[:, 0] == 7.0)
        assert a.timestamps[hit].tolist() == s.timestamps[20:23].tolist()
        assert [x.labeled for x in summaries] == [1, 3]
        assert [x.removed for x in summaries] == [5, 0]

    def test_overlap_rejected(self):
        specs = [
            AttackSpec("plateau", "a", start=5, duration=5, value=0),
            AttackSpec("continuous", "a", start=8, duration=5, value=1),
        ]
        with pytest.raises(ValueError, match="overlapping"):
            apply_attacks({"a": ramp_series()}, specs)

    def test_other_ids_untouched(self):
        a, b = ramp_series(mid="a"), ramp_series(mid="b")
        out, _ = apply_attacks({"a": a, "b": b}, [AttackSpec("plateau", "a", start=0, duration=2, value=0)])
        assert out["b"] is b

    def test_unknown_id(self):
        with pytest.raises(ValueError):
            apply_attacks({"a": ramp_series()}, [AttackSpec("plateau", "z", start=0, duration=1, value=0)])

    @given(st.lists(st.tuples(st.sampled_from(["plateau", "continuous", "playback"]), st.integers(1, 4)), max_size=4))
    def test_label_count_equals_attacked_span(self, plan):
        s = ramp_series(60)
        specs, start = [], 10
        for kind, duration in plan:
            extra = {"source_start": 0} if kind == "playback" else {"value": 5.0}
            specs.append(AttackSpec(kind, "a", (0,), start=start, duration=duration, **extra))
            start += duration + 2
        out, _ = apply_attacks({"a": s}, specs)
        assert out["a"].labels.sum() == sum(d for _, d in plan)
        assert np.array_equal(out["a"].values[:10], s.values[:10])


def test_spec_file_round_trip(tmp_path):
    specs = [
        AttackSpec("plateau", "0x1", (0, 1), start=3, duration=2, offset=0.3),
        AttackSpec("suppress", "0x1", start=30, duration=5, post_gap_labels=2),
        AttackSpec("continuous", "0x2", (1,), start=3, duration=9, value=0.5, ramp="smoothstep"),
        AttackSpec("playback", "0x2", (0,), start=40, duration=10, source_start=5),
    ]
    save_attack_specs(specs, tmp_path / "attacks.json")
    assert load_attack_specs(tmp_path / "attacks.json") == specs


def test_spec_unknown_key():
    with pytest.raises(ValueError):
        AttackSpec.from_json({"kind": "plateau", "id": "a", "start": 0, "duration": 1, "colour": "red"})
