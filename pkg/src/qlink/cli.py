"""``qlink`` command line: run one experiment from a scenario file."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import link_model as lm
from .analysis import experiments as ex
from .analysis.snr import sweep_csv
from .count_engine import derive_seed
from .link_model import DomainError
from .protocol_codec import pgm_bytes, read_pgm
from .scenario import ConfigError, Scenario, help_table, parse_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SUBCOMMANDS = ("simulate", "sweep-snr", "send-message", "send-image", "eye", "security-check")


class Outputs:
    """Collects files and writes them in a fixed order once the run succeeded."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[tuple[str, bytes]] = []

    def text(self, name: str, content: str) -> None:
        self.files.append((name, content.encode("utf-8")))

    def raw(self, name: str, content: bytes) -> None:
        self.files.append((name, content))

    def flush(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        for name, data in self.files:
            (self.root / name).write_bytes(data)


def _bits(bits) -> str:
    return "".join(str(b) for b in bits)


def _decode_report(label: str, party: ex.PartyDecode, reference) -> str:
    if not party.calibrated:
        return f"{label}: calibration failed ({party.error})\n"
    r = party.result
    errors = party.errors_against(reference)
    return (
        f"{label}: bits {_bits(r.bits)}\n"
        f"{label}: text {r.text!r}\n"
        f"{label}: bit errors {errors}/{len(reference)} (BER {errors / len(reference):.4f})\n"
    )


def _message(sc: Scenario, out: Outputs) -> str:
    p, a = sc.link, sc.actors
    o = ex.run_message(
        p, a, sc["payload.text"], sc.seed,
        kind=sc["encoding.kind"],
        bit_duration=sc["encoding.bit_duration"],
        bin_duration=sc["sampling.bin_duration"],
        preamble_len=sc["encoding.preamble_len"],
        guard=sc["encoding.guard"],
        transition=sc.transition,
    )
    out.text("reference_bits.txt", _bits(o.reference_bits) + "\n")
    alice_t, eve_t = o.traces
    out.text("alice_trace.csv", alice_t.to_csv())
    out.text("eve_trace.csv", eve_t.to_csv())
    report = _decode_report("alice", o.alice, o.reference_bits) + _decode_report("eve", o.eve, o.reference_bits)
    out.text("decoded.txt", report)
    for name, party in (("alice", o.alice), ("eve", o.eve)):
        if party.calibrated:
            out.text(f"{name}_soft.csv", party.result.soft_csv())
    return report


def cmd_simulate(sc: Scenario, out: Outputs) -> str:
    r = lm.rate_report(sc.link, sc.actors)
    rates = "quantity,value\n" + "".join(f"{k},{v!r}\n" for k, v in vars(r).items())
    out.text("rates.csv", rates)
    return _message(sc, out)


def cmd_send_message(sc: Scenario, out: Outputs) -> str:
    return _message(sc, out)


def cmd_sweep(sc: Scenario, out: Outputs) -> str:
    seeds = [derive_seed(sc.seed, i) for i in range(sc["sweep.seeds"])]
    s = ex.run_sweep(sc.link, sc.actors, sc["sweep.ratios"], seeds, n_blocks=sc["sweep.n_blocks"])
    out.text("sweep.csv", sweep_csv(s.rows))
    summary = (
        f"classical SNR crosses 1 at ratio {s.crossing:.6g}\n"
        f"quantum SNR log-slope {s.slope:.6g} +- {s.slope_err:.3g}\n"
    )
    out.text("summary.txt", summary)
    return summary


def cmd_send_image(sc: Scenario, out: Outputs) -> str:
    path = sc["payload.image"]
    mask = ex.logo_mask() if path is None else read_pgm(path)
    o = ex.run_image(
        sc.link, sc.actors, mask, sc.seed,
        pixel_pitch=sc["payload.pixel_pitch"],
        scan_speed=sc["payload.scan_speed"],
        dwell=sc["sampling.bin_duration"],
        calibration_events=sc["payload.calibration_events"],
        null_trials=sc["image.null_trials"],
    )
    out.raw("mask.pgm", pgm_bytes(o.mask))
    out.raw("alice.pgm", pgm_bytes(o.alice))
    out.raw("eve.pgm", pgm_bytes(o.eve))
    n = o.null
    audit = (
        "metric,value\n"
        f"alice_mae,{o.alice_mae!r}\n"
        f"eve_correlation,{o.eve_correlation!r}\n"
        f"null_mean,{n.mean!r}\nnull_std,{n.std!r}\n"
        f"null_lower,{n.lower!r}\nnull_upper,{n.upper!r}\n"
        f"null_trials,{n.n_trials}\nnull_coverage,{n.coverage!r}\n"
        f"eve_within_null,{str(o.eve_blind).lower()}\n"
    )
    out.text("audit.csv", audit)
    return (
        f"alice MAE {o.alice_mae:.4f}\n"
        f"eve correlation {o.eve_correlation:.4f} (null {n.coverage:.0%} band [{n.lower:.4f}, {n.upper:.4f}])\n"
        f"eve within null: {str(o.eve_blind).lower()}\n"
    )


def cmd_eye(sc: Scenario, out: Outputs) -> str:
    setup = ex.EyeSetup(
        n_quantum=sc["link.n_quantum"],
        eta_det=sc["link.eta_det"],
        alpha_e_sq=sc["actors.alpha_e_sq"],
        samples_per_bit=sc["eye.samples_per_bit"],
        repetitions=sc["eye.repetitions"],
        rise_time=sc["encoding.rise_time"],
        excess_noise=sc["eye.excess_noise"],
    )
    rates = sc["eye.bit_rates"]
    lines = []
    if sc["eye.tune"]:
        setup = ex.tune_eye(setup, rates[0], sc["eye.tune_transition"], sc["eye.tune_vertical"])
        lines.append(f"tuned at {rates[0]!r} bit/s: rise_time {setup.rise_time!r} s, excess_noise {setup.excess_noise!r}")
    for rate in rates:
        eye = ex.run_eye(setup, rate, sc.seed)
        tag = f"{rate:g}".replace(".", "p")
        out.text(f"eye_{tag}.csv", eye.to_csv())
        out.text(f"eye_{tag}_metrics.csv", eye.metrics_csv())
        m = eye.metrics
        lines.append(
            f"{rate:g} bit/s: vertical {m.vertical_opening:.3f}, horizontal {m.horizontal_opening:.3f}, "
            f"transition {m.transition_fraction:.3f}"
        )
    out.text("eye_setup.txt", f"rise_time = {setup.rise_time!r}\nexcess_noise = {setup.excess_noise!r}\n")
    return "\n".join(lines) + "\n"


def cmd_security(sc: Scenario, out: Outputs) -> str:
    p, a = sc.link, sc.actors
    threshold = lm.security_threshold(p, a)
    ratio = a.n_class / p.n_quantum if p.n_quantum > 0 else float("inf")
    secure = lm.is_secure(p, a)
    dfg = lm.dfg_check(sc["dfg.pump_rate"], p, a)
    text = (
        f"secure: {str(secure).lower()}, threshold ratio: {threshold:g}\n"
        f"actual ratio: {ratio:g}\n"
        f"exact threshold ratio: {lm.security_threshold(p, a, exact=True):g}\n"
        f"eve snr: {lm.snr_eve(p, a):.6g}\n"
        f"dfg negligible: {str(dfg.negligible).lower()} "
        f"(c_dfg {dfg.c_dfg_rate:.6g}/s, c_quantum {dfg.c_quantum_rate:.6g}/s)\n"
    )
    out.text("security.txt", text)
    return text


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep-snr": cmd_sweep,
    "send-message": cmd_send_message,
    "send-image": cmd_send_image,
    "eye": cmd_eye,
    "security-check": cmd_security,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qlink",
        description="Simulate a jamming-protected link read out through induced coherence.",
        epilog="scenario keys (key = value, '#' starts a comment):\n" + help_table()
        + "\n\nexit codes: 0 ok, 2 configuration error, 3 runtime error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=f"qlink {__version__}")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario file")
    ap.add_argument("--out", help="output directory (overrides outputs.dir)")
    ap.add_argument("--seed", type=int, help="override sampling.seed (unsigned 64-bit)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        sc = parse_scenario(args.scenario, args.seed)
        sc.link, sc.actors  # noqa: B018 - surface cross-field domain errors as config errors
    except (ConfigError, DomainError) as exc:
        print(f"qlink: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Outputs(Path(args.out) if args.out else Path(sc["outputs.dir"]))
    try:
        summary = COMMANDS[args.subcommand](sc, out)
        out.text("manifest.txt", f"# qlink {__version__} {args.subcommand}\n" + sc.to_text())
        out.flush()
    except Exception as exc:  # module errors of any kind map to one exit code
        print(f"qlink: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
