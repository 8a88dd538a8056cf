import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlink.count_engine import CountTrace, dual_trace, n_bins_for, path_traces, rate_schedules
from qlink.link_model import ChannelActors, LinkParams
from qlink.protocol_codec import (
    CalibrationError,
    EncodingSymbol,
    GeometryError,
    ImageRaster,
    SymbolSchedule,
    TransitionModel,
    apply_transition,
    bits_to_text,
    decode_trace,
    encode_text,
    image_schedule,
    pgm_bytes,
    preamble_bits,
    read_pgm,
    reconstruct_image,
    text_to_bits,
    write_pgm,
)

P = LinkParams(5000.0, 0.2, 0.05)
A = ChannelActors(alpha_e_sq=0.0, eta_det_e=1.0)


def noiseless(p, a, kind, durations, values, bin_duration=0.05):
    """Expected counts per bin, rounded: a trace without shot noise."""
    sa, se = rate_schedules(p, a, kind, np.asarray(durations, float), np.asarray(values, float))
    n = n_bins_for(sa.total_duration, bin_duration)
    edges = bin_duration * np.arange(n + 1)
    mk = lambda s, lab: CountTrace(np.rint(s.integrate(edges)).astype(np.int64), bin_duration, 0, lab)
    return mk(sa, "alice"), mk(se, "eve")


def noiseless_schedule(sched, p=P, a=A, tm=None, bin_duration=0.05):
    path = apply_transition(sched, tm)
    return noiseless(p, a, sched.kind, path.durations, path.values, bin_duration)


class TestSymbols:
    def test_values(self):
        assert EncodingSymbol.from_bit("amplitude", 1, 1.0).value == 0.0
        assert EncodingSymbol.from_bit("amplitude", 0, 1.0).value == 1.0
        assert EncodingSymbol.from_bit("phase", 1, 1.0).value == 0.0
        assert EncodingSymbol.from_bit("phase", 0, 1.0).value == math.pi

    @pytest.mark.parametrize("kw", [dict(kind="qam", value=0.0, duration=1.0),
                                    dict(kind="amplitude", value=0.5, duration=1.0),
                                    dict(kind="phase", value=0.0, duration=0.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EncodingSymbol(**kw)

    def test_schedule_invariants(self):
        with pytest.raises(ValueError):
            SymbolSchedule(())
        mixed = (EncodingSymbol.from_bit("phase", 1, 1.0), EncodingSymbol.from_bit("amplitude", 1, 1.0))
        with pytest.raises(ValueError):
            SymbolSchedule(mixed)


class TestText:
    def test_mpq(self):
        assert text_to_bits("MPQ") == [int(c) for c in "010011010101000001010001"]
        s = encode_text("MPQ")
        assert s.payload_bits == text_to_bits("MPQ")
        assert s.bits[:8] == [1, 0, 1, 0, 1, 0, 1, 0]

    def test_empty(self):
        with pytest.raises(ValueError):
            encode_text("")

    @pytest.mark.parametrize("msg", ["é", b"\xff"])
    def test_non_ascii(self, msg):
        with pytest.raises(ValueError):
            encode_text(msg)

    def test_phase_m(self):
        s = encode_text("M", "phase", 0.5)
        assert len(s) == 16 and s.preamble_len == 8 and s.kind == "phase"
        assert list(s.values[8:]) == [math.pi if b == 0 else 0.0 for b in text_to_bits("M")]

    def test_bad_duration(self):
        with pytest.raises(ValueError):
            encode_text("M", bit_duration=0)

    @given(st.text(st.characters(max_codepoint=127), min_size=1, max_size=20))
    def test_bits_round_trip(self, s):
        assert bits_to_text(text_to_bits(s)) == s


class TestDecode:
    @pytest.mark.parametrize("kind", ["amplitude", "phase"])
    def test_noiseless_mpq(self, kind):
        s = encode_text("MPQ", kind, 0.5)
        alice, _ = noiseless_schedule(s)
        r = decode_trace(alice, 0.5, 24)
        assert r.text == "MPQ"
        assert r.bits == s.payload_bits
        assert np.all(np.abs(r.soft) == pytest.approx(0.5))

    @pytest.mark.parametrize("kind", ["amplitude", "phase"])
    def test_all_ascii_bytes(self, kind):
        for byte in range(128):
            s = encode_text(bytes([byte]), kind, 0.2)
            alice, _ = noiseless_schedule(s)
            assert decode_trace(alice, 0.2, 8).bits == s.payload_bits

    @pytest.mark.parametrize("kind", ["amplitude", "phase"])
    def test_all_byte_values_at_bit_level(self, kind):
        for byte in range(256):
            bits = preamble_bits(8) + [(byte >> (7 - i)) & 1 for i in range(8)]
            s = SymbolSchedule.from_bits(bits, kind, 0.2, 8)
            alice, _ = noiseless_schedule(s)
            assert decode_trace(alice, 0.2, 8).bits == s.payload_bits

    def test_bits_not_aligned_to_bins(self):
        s = encode_text("Ok", "amplitude", 0.13)
        alice, _ = noiseless_schedule(s, bin_duration=0.01)
        assert decode_trace(alice, 0.13, 16).text == "Ok"

    def test_clock_offset(self):
        s = encode_text("Z", "amplitude", 0.5)
        path = apply_transition(s, None)
        d = np.concatenate([[1.0], path.durations])
        v = np.concatenate([[1.0], path.values])
        alice, _ = noiseless(P, A, "amplitude", d, v)
        assert decode_trace(alice, 0.5, 8, clock_offset=1.0).text == "Z"

    def test_short_trace(self):
        alice, _ = noiseless_schedule(encode_text("Z"))
        with pytest.raises(GeometryError):
            decode_trace(alice, 0.5, 16)

    def test_calibration_failure(self):
        flat = CountTrace(np.full(400, 100), 0.05, 0, "eve")
        with pytest.raises(CalibrationError):
            decode_trace(flat, 0.5, 24)

    def test_transition_tolerated_by_guard(self):
        s = encode_text("MPQ", "phase", 0.5)
        alice, _ = noiseless_schedule(s, tm=TransitionModel(0.04), bin_duration=0.01)
        assert decode_trace(alice, 0.5, 24, guard=0.1).text == "MPQ"

    def test_soft_csv(self):
        alice, _ = noiseless_schedule(encode_text("A"))
        lines = decode_trace(alice, 0.5, 8).soft_csv().splitlines()
        assert lines[0] == "bit_index,level,soft_score,bit" and len(lines) == 9

    def test_monotone_fidelity(self):
        def ber(n_q, bit_duration, seeds=50):
            a = ChannelActors(alpha_e_sq=0.8)
            errs = 0
            s = encode_text("MPQ", "amplitude", bit_duration)
            for seed in range(seeds):
                alice, _ = dual_trace(LinkParams(n_q, 0.2, 0.05), a, s, 0.05, seed)
                try:
                    bits = decode_trace(alice, bit_duration, 24).bits
                    errs += sum(b != r for b, r in zip(bits, s.payload_bits))
                except CalibrationError:
                    errs += 12
            n = 24 * seeds
            return errs / n, math.sqrt(max(errs, 1) / n * (1 - errs / n) / n)

        for series in ([ber(n, 0.5) for n in (40, 160, 640)], [ber(100, d) for d in (0.2, 0.5, 1.5)]):
            for (b0, e0), (b1, e1) in zip(series, series[1:]):
                assert b1 <= b0 + 2 * math.hypot(e0, e1)
            assert series[-1][0] < series[0][0]

    def test_phase_advantage(self):
        p = LinkParams(5000.0, 0.2, 0.05)
        a = ChannelActors(alpha_e_sq=0.5)
        sep = {}
        for kind in ("amplitude", "phase"):
            s = encode_text("MPQ", kind, 2.0)
            alice, _ = dual_trace(p, a, s, 0.05, 3)
            r = decode_trace(alice, 2.0, 24)
            sep[kind] = r.level1 - r.level0
        # phase swings 2N(1+V) to 2N(1-V); amplitude 2N(1+V) to 2N
        assert sep["phase"] / sep["amplitude"] == pytest.approx(2.0, rel=0.05)


class TestTransition:
    def test_identity(self):
        s = encode_text("MPQ", "phase", 0.5)
        for tm in (None, TransitionModel(0.0)):
            path = apply_transition(s, tm)
            assert np.array_equal(path.durations, s.durations) and np.array_equal(path.values, s.values)

    def test_rise_too_long(self):
        with pytest.raises(ValueError):
            apply_transition(encode_text("M", "phase", 0.5), TransitionModel(0.5))
        with pytest.raises(ValueError):
            TransitionModel(-0.1)

    def test_duration_preserved(self):
        s = encode_text("MPQ", "amplitude", 0.5)
        path = apply_transition(s, TransitionModel(0.1))
        assert path.total_duration == pytest.approx(s.total_duration)

    def test_ramp_is_linear(self):
        s = SymbolSchedule.from_bits([0, 1], "phase", 1.0)
        path = apply_transition(s, TransitionModel(0.32), substeps=32)
        ramp = path.values[1:33]
        assert np.allclose(np.diff(ramp), -math.pi / 32)
        assert ramp[0] == pytest.approx(math.pi * (1 - 0.5 / 32))


class TestImage:
    def test_single_transparent_pixel(self):
        sc = image_schedule(ImageRaster(np.ones((1, 1)), 0.05, 1.0), 0.05)
        assert list(sc) == [(0, 0, 0.0)]

    def test_events_per_pixel(self):
        sc = image_schedule(ImageRaster(np.ones((2, 3))), 0.05)
        assert sc.events_per_pixel == 10 and len(sc) == 60

    def test_checkerboard_order(self):
        m = np.array([[1.0, 0.0], [0.0, 1.0]])
        sc = image_schedule(ImageRaster(m, 0.05, 1.0), 0.05)
        assert list(sc) == [(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)]

    def test_calibration_frames_first(self):
        sc = image_schedule(ImageRaster(np.ones((2, 2)), 0.05, 1.0), 0.05, calibration_events=3)
        events = list(sc)
        assert events[:6] == [(-1, -1, 0.0)] * 3 + [(-1, -1, 1.0)] * 3

    def test_invalid(self):
        with pytest.raises(ValueError):
            image_schedule(ImageRaster(np.ones((2, 2))), 0.0)
        with pytest.raises(ValueError):
            ImageRaster(np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            ImageRaster(np.ones((2, 2)), pixel_pitch=0)

    def _recon(self, m, cal=5):
        sc = image_schedule(ImageRaster(m), 0.05, cal)
        alice, _ = noiseless(P, A, "amplitude", sc.durations, sc.alpha_sq)
        return reconstruct_image(alice, sc)

    def test_full_open(self):
        assert np.array_equal(self._recon(np.ones((3, 4))[:, :], cal=5)[:, :], np.ones((3, 4)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_binary_round_trip(self, r, c, seed):
        m = np.random.default_rng(seed).integers(0, 2, (r, c)).astype(float)
        assert np.array_equal(self._recon(m), m)

    def test_geometry_mismatch(self):
        sc = image_schedule(ImageRaster(np.ones((3, 3))), 0.05, 2)
        short = CountTrace(np.ones(10, dtype=np.int64), 0.05, 0, "alice")
        with pytest.raises(GeometryError):
            reconstruct_image(short, sc)

    def test_needs_levels_without_calibration(self):
        sc = image_schedule(ImageRaster(np.ones((2, 2))), 0.05, 0)
        alice, _ = path_traces(P, A, "amplitude", sc.durations, sc.alpha_sq, 0.05, 0)
        with pytest.raises(GeometryError):
            reconstruct_image(alice, sc)
        assert reconstruct_image(alice, sc, levels=(2000.0, 1000.0)).shape == (2, 2)


class TestPgm:
    @pytest.mark.parametrize("binary", [True, False])
    @pytest.mark.parametrize("maxval", [255, 1000])
    def test_round_trip(self, tmp_path, binary, maxval):
        img = np.random.default_rng(1).integers(0, maxval + 1, (5, 7)) / maxval
        write_pgm(tmp_path / "x.pgm", img, binary, maxval)
        assert np.allclose(read_pgm(tmp_path / "x.pgm"), img)

    def test_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P2\n# made by hand\n2 1\n# max\n4\n0 4\n")
        assert np.allclose(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])

    def test_rejects_other_formats(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with pytest.raises(ValueError):
            read_pgm(tmp_path / "x.ppm")

    def test_bytes_match_file(self, tmp_path):
        img = np.eye(3)
        write_pgm(tmp_path / "e.pgm", img)
        assert (tmp_path / "e.pgm").read_bytes() == pgm_bytes(img)
