import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from t2g.telegrams import (DeviceCatalog, StateSeries, Telegram, TelegramOrderError, TelegramParseError,
                           Window, clean, emit_changes, format_log, parse_log, rasterize, segment_cycles)

CAT = DeviceCatalog(("S1", "S2"), ("D3", "D4"), {"D3": {"S1"}}, {"D4"})


def test_parse_single_line():
    assert parse_log(["1546300800,D3,1"]) == [Telegram(1546300800, "D3", 1)]


def test_parse_header_and_blank_lines():
    tel = parse_log(["timestamp,device_id,state", "", "5,D3,1", "7,D3,0"])
    assert [t.timestamp for t in tel] == [5, 7]


@pytest.mark.parametrize("line, lineno", [
    ("1546300800,D3,2", 1), ("1,D3", 1), ("x1,D3,1", 2), ("1.5,D3,1", 1), ("1,,1", 1),
])
def test_parse_errors_carry_line_number(line, lineno):
    lines = [line] if lineno == 1 else ["1,D3,1", line]
    with pytest.raises(TelegramParseError) as e:
        parse_log(lines)
    assert e.value.lineno == lineno


def test_parse_empty_and_order():
    assert parse_log([]) == []
    with pytest.raises(TelegramOrderError):
        parse_log(["5,D3,1", "4,D3,0"])


def test_format_parse_roundtrip():
    tel = [Telegram(1, "D3", 1), Telegram(1, "S1", 0), Telegram(9, "D3", 0)]
    assert parse_log(format_log(tel).splitlines()) == tel


def test_clean_duplicate_state():
    tel = [Telegram(60, "D3", 1), Telegram(120, "D3", 1), Telegram(130, "D3", 0)]
    assert clean(tel, CAT) == [Telegram(60, "D3", 1), Telegram(130, "D3", 0)]


def test_clean_unknown_device_and_idempotent():
    tel = [Telegram(1, "X9", 1), Telegram(2, "S1", 1), Telegram(3, "S1", 0)]
    once = clean(tel, CAT)
    assert once == tel[1:]
    assert clean(once, CAT) == once


def test_catalog_validation():
    with pytest.raises(ValueError):
        DeviceCatalog(("A",), ("A",))
    with pytest.raises(ValueError):
        DeviceCatalog(("S1",), ("D1",), {"D9": {"S1"}})


def test_catalog_json_roundtrip(tmp_path):
    CAT.save(tmp_path / "c.json")
    assert DeviceCatalog.load(tmp_path / "c.json") == CAT


def test_rasterize_step_function():
    tel = [Telegram(3, "D3", 1), Telegram(5, "D3", 0)]
    s = rasterize(tel, CAT, Window(1, 6))
    assert s["D3"].values.tolist() == [0, 0, 1, 1, 0, 0]
    assert s["D4"].values.tolist() == [0] * 6


def test_rasterize_window_too_short():
    with pytest.raises(ValueError):
        rasterize([Telegram(10, "D3", 1)], CAT, Window(1, 5))


def test_segment_cycles_examples():
    (c,) = segment_cycles(np.array([1, 1, 0, 0, 1, 0, 0]))
    assert (c.start_k, c.red_s, c.green_s) == (3, 2, 1)
    assert segment_cycles(np.ones(10, dtype=int)) == []
    assert segment_cycles(np.array([0, 0, 1, 0, 0, 1])) == []


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=120))
def test_roundtrip_and_segmentation_oracle(bits):
    s = StateSeries("D3", 100, np.array(bits, dtype=np.int8))
    back = rasterize(emit_changes(s), CAT, Window(100, 100 + len(bits) - 1))["D3"]
    assert back.values.tolist() == bits
    ref = oracles.raster([(t.timestamp, t.state) for t in emit_changes(s)], 100, 100 + len(bits) - 1)
    assert ref == bits
    got = segment_cycles(np.array(bits))
    assert [(c.start_k, c.red_s, c.green_s) for c in got] == oracles.cycles(bits)
    for c in got:
        assert c.red_s >= 1 and c.red_s + c.green_s == c.end_k - c.start_k + 1
    for a, b in zip(got, got[1:]):
        assert a.end_k < b.start_k


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.sampled_from(["S1", "D3", "D4", "X9"]), st.integers(0, 1)),
                max_size=40))
def test_clean_idempotent_fuzz(raw):
    tel = sorted(Telegram(t, d, s) for t, d, s in raw)
    tel.sort(key=lambda t: t.timestamp)
    once = clean(tel, CAT)
    assert clean(once, CAT) == once
    assert all(t.device_id in CAT.devices for t in once)
