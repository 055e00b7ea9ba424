import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssigest.errors import EmptyInputError, TraceFormatError
from rssigest.simulate import Gesture, Preamble, ScenarioScript, generate_scenario
from rssigest.trace import RssiTrace, TraceBundle, align, load_trace, save_trace


def _write(tmp_path, text):
    p = tmp_path / "t.csv"
    p.write_text(text)
    return p


def test_two_rows_one_ap(tmp_path):
    """[TRIVIAL] two 20 ms rows -> one trace, two samples, 50 Hz."""
    b = load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n0.00,AP1,-40\n0.02,AP1,-41\n"))
    assert len(b) == 1
    tr = b["AP1"]
    assert tr.sample_rate_hz == 50.0
    np.testing.assert_array_equal(tr.samples, [-40.0, -41.0])


def test_interleaved_aps_partitioned(tmp_path):
    """[TRIVIAL] interleaved rows are split by ap_id."""
    rows = "".join(f"{i * 0.02:.2f},AP{k},{-40 - k - i}\n" for i in range(5) for k in (1, 2))
    b = load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + rows))
    assert b.ap_ids == ["AP1", "AP2"]
    np.testing.assert_array_equal(b["AP1"].samples, [-41, -42, -43, -44, -45])
    np.testing.assert_array_equal(b["AP2"].samples, [-42, -43, -44, -45, -46])


def test_simulated_round_trip_exact_at_precision(tmp_path):
    """[DERIVED] save/load of a simulated bundle reproduces values rounded to 4 decimals."""
    script = ScenarioScript(200.0, (-40.0, -52.0), 1.5, (Preamble(3.0, 8.0), Gesture("Up-Down", 9.0)), seed=5)
    bundle, _ = generate_scenario(script)
    assert len(bundle["AP1"]) == 10_000
    p = tmp_path / "trace.csv"
    save_trace(bundle, p)
    back = load_trace(p)
    assert back.ap_ids == bundle.ap_ids
    for a, b in zip(bundle, back):
        np.testing.assert_array_equal(b.samples, np.round(a.samples, 4))
        assert np.max(np.abs(a.samples - b.samples)) <= 1e-4
        assert b.sample_rate_hz == a.sample_rate_hz and b.start_time_s == a.start_time_s


def test_one_sample_bundle_file(tmp_path):
    """[TRIVIAL] header plus one data row."""
    p = tmp_path / "one.csv"
    save_trace(TraceBundle((RssiTrace("AP1", [-50.0]),)), p)
    assert p.read_text().splitlines() == ["time_s,ap_id,rssi_dbm", "0.0000,AP1,-50.0000"]


def test_empty_bundle_header_only(tmp_path):
    """[TRIVIAL] empty bundle writes only the header; loading it is an empty-input error."""
    p = tmp_path / "empty.csv"
    save_trace(TraceBundle(()), p)
    assert p.read_text() == "time_s,ap_id,rssi_dbm\n"
    with pytest.raises(EmptyInputError):
        load_trace(p)
    with pytest.raises(EmptyInputError):
        load_trace(_write(tmp_path, ""))


@pytest.mark.parametrize(
    "body, line",
    [
        ("0.00,AP1,-40\n0.02,AP1\n", 3),
        ("0.00,AP1,-40\n0.02,AP1,abc\n", 3),
        ("0.00,AP1,-40\n0.02,AP1,-130\n", 3),
        ("0.00,AP1,-40\n0.02,AP1,5\n", 3),
        ("0.00,AP1,-40\n0.00,AP1,-41\n", 3),
    ],
)
def test_malformed_rows_report_line(tmp_path, body, line):
    """[TRIVIAL] malformed or implausible rows raise a format error naming the line."""
    with pytest.raises(TraceFormatError) as exc:
        load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + body))
    assert exc.value.line == line


def test_rows_in_any_order(tmp_path):
    """[TRIVIAL] rows are sorted by time within each AP."""
    b = load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n0.04,AP1,-42\n0.00,AP1,-40\n0.02,AP1,-41\n"))
    np.testing.assert_array_equal(b["AP1"].samples, [-40.0, -41.0, -42.0])


def test_bad_header(tmp_path):
    """[TRIVIAL]"""
    with pytest.raises(TraceFormatError):
        load_trace(_write(tmp_path, "t,ap,v\n0,AP1,-40\n"))


def test_jitter_within_tolerance_snaps(tmp_path):
    """[DERIVED] 0.1 ms jitter (0.5% of a 20 ms period) lands on the uniform grid."""
    times = np.arange(50) * 0.02
    times[7] += 0.0001
    rows = "".join(f"{t:.4f},AP1,-40\n" for t in times)
    tr = load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + rows))["AP1"]
    assert len(tr) == 50 and tr.sample_rate_hz == 50.0


def test_jitter_beyond_tolerance_rejected(tmp_path):
    """[DERIVED] 2 ms jitter (10% of the period) is a format error."""
    times = np.arange(50) * 0.02
    times[7] += 0.002
    rows = "".join(f"{t:.4f},AP1,-40\n" for t in times)
    with pytest.raises(TraceFormatError):
        load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + rows))


def test_missing_sample_rejected(tmp_path):
    """[TRIVIAL] a gap in the grid is not silently interpolated."""
    rows = "".join(f"{i * 0.02:.4f},AP1,-40\n" for i in range(20) if i != 9)
    with pytest.raises(TraceFormatError):
        load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + rows))


def test_alignment_truncates_to_intersection(tmp_path):
    """[DERIVED] AP2 starts 5 samples late and AP1 ends 3 samples early -> common range only."""
    rows = [f"{i * 0.02:.4f},AP1,{-40 - 0.5 * i}\n" for i in range(0, 97)]
    rows += [f"{i * 0.02:.4f},AP2,{-60 - i * 0.1:.4f}\n" for i in range(5, 100)]
    b = load_trace(_write(tmp_path, "time_s,ap_id,rssi_dbm\n" + "".join(rows)))
    a1, a2 = b["AP1"], b["AP2"]
    assert len(a1) == len(a2) == 92
    assert a1.start_time_s == a2.start_time_s == pytest.approx(0.1)
    assert a1.samples[0] == -42.5


def test_mean_rssi_recomputed():
    """[TRIVIAL] mean_rssi is the arithmetic mean of the samples."""
    b = TraceBundle((RssiTrace("a", [-40, -42, -44]), RssiTrace("b", [-60, -60, -63])))
    assert b.mean_rssi == {"a": -42.0, "b": -61.0}
    assert b.strongest().ap_id == "a"


def test_invariants_enforced():
    """[TRIVIAL] non-positive rate, non-finite samples, mixed rates, duplicate ids."""
    with pytest.raises(ValueError):
        RssiTrace("a", [1.0], sample_rate_hz=0)
    with pytest.raises(ValueError):
        RssiTrace("a", [np.nan])
    with pytest.raises(ValueError):
        TraceBundle((RssiTrace("a", [1.0], 50), RssiTrace("b", [1.0], 25)))
    with pytest.raises(ValueError):
        TraceBundle((RssiTrace("a", [1.0]), RssiTrace("a", [2.0])))


def test_samples_immutable():
    """[TRIVIAL]"""
    tr = RssiTrace("a", [1.0, 2.0])
    with pytest.raises(ValueError):
        tr.samples[0] = 5.0


def test_time_mapping_has_no_drift():
    """[DERIVED] timestamps come from the index, so a day-long trace has no accumulated error."""
    n = 50 * 86_400
    tr = RssiTrace("a", np.zeros(4), 50.0, 0.0)
    assert tr.time_of(n) == 86_400.0
    assert tr.index_of(tr.time_of(n - 1)) == n - 1


def test_slice_time():
    """[TRIVIAL]"""
    tr = RssiTrace("a", np.arange(100.0) - 100, 50.0, 2.0)
    sub = tr.slice_time(2.5, 3.0)
    assert len(sub) == 25 and sub.start_time_s == 2.5 and sub.samples[0] == -75.0


def test_align_rejects_disjoint():
    """[TRIVIAL]"""
    with pytest.raises(TraceFormatError):
        align([RssiTrace("a", np.zeros(10), 50, 0.0), RssiTrace("b", np.zeros(10), 50, 1.0)])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-119.99, -0.01, allow_nan=False), min_size=1, max_size=300),
    st.floats(-1000, 1000, allow_nan=False).map(lambda t: round(t, 2)),
)
def test_round_trip_property(tmp_path_factory, values, start):
    """[DERIVED] load(save(b)) equals b within 1e-4 dBm for any in-range values."""
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    save_trace(TraceBundle((RssiTrace("AP1", values, 50.0, start),)), p)
    back = load_trace(p)["AP1"]
    assert len(back) == len(values)
    assert np.max(np.abs(back.samples - np.asarray(values))) <= 0.5e-4 + 1e-12
    assert back.start_time_s == pytest.approx(start, abs=1e-4)
