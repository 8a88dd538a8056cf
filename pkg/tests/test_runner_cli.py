import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qlink import link_model as lm
from qlink.cli import main
from qlink.protocol_codec import write_pgm
from qlink.scenario import ConfigError, parse_scenario, parse_text, required_keys

ROOT = Path(__file__).resolve().parents[1]
SCEN = ROOT / "scenarios"

BASE = """
link.n_quantum = 4000
link.eta_det = 1.0
link.t_meas = 0.05
actors.alpha_e_sq = 1
actors.eta_det_e = 1
sampling.seed = 1
"""


def write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def files(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


class TestParse:
    def test_calibration_threshold(self):
        sc = parse_scenario(SCEN / "calibration.cfg")
        assert lm.security_threshold(sc.link, sc.actors) == 100

    def test_range_error_names_key(self):
        with pytest.raises(ConfigError, match=r"actors\.alpha_sq"):
            parse_text(BASE + "actors.alpha_sq = 1.5\n")

    def test_empty_lists_required(self):
        with pytest.raises(ConfigError) as e:
            parse_text("")
        for k in required_keys():
            assert k in str(e.value)
        assert "sampling.seed" in required_keys()

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"link\.nquantum"):
            parse_text(BASE + "link.nquantum = 3\n")

    def test_ill_typed(self):
        with pytest.raises(ConfigError, match=r"link\.eta_det"):
            parse_text(BASE.replace("link.eta_det = 1.0", "link.eta_det = high"))

    def test_missing_one(self):
        with pytest.raises(ConfigError, match=r"sampling\.seed"):
            parse_text(BASE.replace("sampling.seed = 1", ""))

    def test_seed_override(self):
        assert parse_text(BASE.replace("sampling.seed = 1", ""), seed_override=9).seed == 9
        with pytest.raises(ConfigError, match=r"sampling\.seed"):
            parse_text(BASE, seed_override=-3)

    def test_duplicate(self):
        with pytest.raises(ConfigError, match="twice"):
            parse_text(BASE + "sampling.seed = 2\n")

    def test_degrees(self):
        sc = parse_text(BASE + "link.phi_b_deg = 180\n")
        assert sc.link.phi_b == pytest.approx(math.pi)
        with pytest.raises(ConfigError, match="phi_b_deg"):
            parse_text(BASE + "link.phi_b_deg = 180\nlink.phi_b = 1\n")

    def test_jamming_ratio(self):
        sc = parse_text(BASE + "actors.jamming_ratio = 10\n")
        assert sc.actors.n_class == 40000
        with pytest.raises(ConfigError, match="jamming_ratio"):
            parse_text(BASE + "actors.jamming_ratio = 10\nactors.n_class = 1\n")

    def test_image_must_exist(self, tmp_path):
        with pytest.raises(ConfigError, match="payload.image"):
            parse_scenario(write(tmp_path, BASE + "payload.image = nope.pgm\n"))
        write_pgm(tmp_path / "m.pgm", np.eye(4))
        sc = parse_scenario(write(tmp_path, BASE + "payload.image = m.pgm\n"))
        assert Path(sc["payload.image"]) == (tmp_path / "m.pgm").resolve()

    def test_comments_and_lists(self):
        sc = parse_text(BASE + "# note\nsweep.ratios = 1, 10,100 # inline\n")
        assert sc["sweep.ratios"] == (1.0, 10.0, 100.0)

    def test_rise_shorter_than_bit(self):
        with pytest.raises(ConfigError, match="rise_time"):
            parse_text(BASE + "encoding.rise_time = 0.5\nencoding.bit_duration = 0.5\n")


class TestRun:
    def test_security_check_output(self, tmp_path, capsys):
        assert main(["security-check", "--scenario", str(SCEN / "calibration.cfg"), "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "secure: true, threshold ratio: 100"

    def test_send_message(self, tmp_path, capsys):
        assert main(["send-message", "--scenario", str(SCEN / "demo.cfg"), "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "alice: text 'MPQ'" in out and "bit errors 0/24" in out
        assert "eve: calibration failed" in out
        assert (tmp_path / "reference_bits.txt").read_text().strip() == "010011010101000001010001"

    @pytest.mark.parametrize("cmd,cfg", [("simulate", "demo"), ("send-image", "demo"), ("eye", "eye"),
                                         ("security-check", "calibration")])
    def test_byte_identical_reruns(self, tmp_path, cmd, cfg):
        for d in ("a", "b"):
            assert main([cmd, "--scenario", str(SCEN / f"{cfg}.cfg"), "--out", str(tmp_path / d)]) == 0
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_seed_changes_outputs(self, tmp_path):
        for d, seed in (("a", "1"), ("b", "2")):
            main(["simulate", "--scenario", str(SCEN / "demo.cfg"), "--out", str(tmp_path / d), "--seed", seed])
        assert files(tmp_path / "a")["alice_trace.csv"] != files(tmp_path / "b")["alice_trace.csv"]

    @pytest.mark.parametrize("cmd,cfg", [("simulate", "demo"), ("eye", "eye")])
    def test_manifest_round_trip(self, tmp_path, cmd, cfg):
        assert main([cmd, "--scenario", str(SCEN / f"{cfg}.cfg"), "--out", str(tmp_path / "a"), "--seed", "42"]) == 0
        assert main([cmd, "--scenario", str(tmp_path / "a" / "manifest.txt"), "--out", str(tmp_path / "b")]) == 0
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_sweep(self, tmp_path):
        cfg = write(tmp_path, BASE + "sweep.ratios = 1,10,100,1000\nsweep.seeds = 3\n")
        assert main(["sweep-snr", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == 0
        lines = (tmp_path / "o" / "sweep.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[0].startswith("ratio,snr_classical")

    def test_config_exit_code(self, tmp_path, capsys):
        assert main(["simulate", "--scenario", str(write(tmp_path, BASE + "actors.alpha_sq = 1.5\n"))]) == 2
        assert "actors.alpha_sq" in capsys.readouterr().err
        assert main(["simulate", "--scenario", str(tmp_path / "missing.cfg")]) == 2

    def test_runtime_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, BASE.replace("link.n_quantum = 4000", "link.n_quantum = 0"))
        assert main(["security-check", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == 3
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "qlink.cli", "security-check", "--scenario",
                            str(SCEN / "calibration.cfg"), "--out", str(tmp_path)], capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.startswith("secure: true")
        r = subprocess.run([sys.executable, "-m", "qlink.cli", "--help"], capture_output=True, text=True)
        assert "link.t_meas" in r.stdout and "[s]" in r.stdout

    def test_security_check_matches_link_model(self, tmp_path, capsys):
        rng = np.random.default_rng(2024)
        for i in range(1000):
            n = float(rng.uniform(1, 1e5))
            vals = dict(n=n, t=rng.uniform(1e-3, 1), ae=rng.uniform(0, 1), ee=rng.uniform(0, 1),
                        a2=rng.uniform(0, 1), r=10 ** rng.uniform(-2, 4))
            text = (f"link.n_quantum = {n!r}\nlink.eta_det = 0.5\nlink.t_meas = {vals['t']!r}\n"
                    f"actors.alpha_e_sq = {vals['ae']!r}\nactors.eta_det_e = {vals['ee']!r}\n"
                    f"actors.alpha_sq = {vals['a2']!r}\nactors.n_class = {vals['r'] * n!r}\nsampling.seed = {i}\n")
            cfg = write(tmp_path, text)
            assert main(["security-check", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == 0
            first = capsys.readouterr().out.splitlines()[0]
            sc = parse_scenario(cfg)
            expected = "true" if lm.is_secure(sc.link, sc.actors) else "false"
            assert first.startswith(f"secure: {expected},")
