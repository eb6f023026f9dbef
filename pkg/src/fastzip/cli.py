"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 pairing aborted.
"""

import argparse
import logging
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, resolve_config_path, section
from .errors import DataError, FastZipError, InsufficientContext, ProtocolError

log = logging.getLogger("fastzip")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ABORT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sensors(text):
    from .signals import CHANNELS

    mods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in mods if m not in CHANNELS]
    if not mods or bad:
        raise argparse.ArgumentTypeError(f"sensors must be a comma list of {','.join(CHANNELS)}")
    return tuple(m for m in CHANNELS if m in mods)


def _fraction(text):
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if value > 1:
        value /= 100  # accept percentages
    return value


def _load_settings(args):
    path = resolve_config_path(args.config)
    if path is None:
        return {}
    if not path.exists():
        raise DataError(f"config file {path} not found")
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _eval_params(settings):
    from .activity import ActivityThresholds
    from .evaluation import EvalParams

    thr = ActivityThresholds.from_config(section(settings, "activity"))
    return EvalParams(thresholds=thr, step=float(settings.get("eval.step", 5.0)))


def _synthetic_cfg(settings):
    from .synthetic import SyntheticConfig

    return SyntheticConfig.from_config(section(settings, "synthetic"))


def _dataset(args, settings, follow=False):
    from .synthetic import generate_synthetic_context, load_dataset

    if getattr(args, "dataset", None):
        return load_dataset(args.dataset)
    return generate_synthetic_context(args.seed, args.scenario, duration=args.duration,
                                      cfg=_synthetic_cfg(settings), follow=follow)


# --- subcommands ----------------------------------------------------------------

def cmd_calc_params(args, settings):
    from . import security

    out = []
    if args.table1:
        out.append(security.format_table1(csv=args.csv))
    if args.table2:
        out.append(security.format_table2(csv=args.csv))
    if args.threshold is not None:
        thr = args.threshold
        n = args.bits or security.min_fingerprint_bits(
            thr, target_log2_p=-args.security_bits, granularity=args.granularity,
            convention=args.convention)
        prof = security.profile(thr, n)
        floor = "undefined" if prof.log2_complexity is None else f"{prof.log2_complexity:.2f}"
        out.append(
            f"threshold {float(thr):.4f}  bits {n}  m {prof.m}\n"
            f"log2 P offline (exclusive) {prof.log2_p:.3f}\n"
            f"log2 P offline (inclusive) {prof.log2_p_inclusive:.3f}\n"
            f"log2 C/T floor {floor}\n"
            f"fuzzy-commitment bits for 128-bit key {security.fuzzy_commitment_bits(thr)}\n")
    if not out:
        raise UsageError("give --table1, --table2 or --threshold")
    sys.stdout.write("\n".join(out))


def cmd_preprocess(args, settings):
    from .activity import ActivityThresholds, passes
    from .evaluation import window_starts
    from .signals import context_streams, cut_window
    from .synthetic import load_dataset

    ds = load_dataset(args.input)
    devices = [args.device] if args.device else ds.devices
    thr = ActivityThresholds.from_config(section(settings, "activity"))
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    for dev in devices:
        if dev not in ds.recordings:
            raise DataError(f"no recordings for device {dev!r}")
        streams = context_streams(ds.recordings[dev])
        for ch, s in streams.items():
            _write_stream(s, outdir / f"{dev}_{ch}.csv")
            kept = total = 0
            for t in window_starts(s.end_time - s.start_time, args.step, s.start_time):
                w = cut_window(s, t)
                if w is None:
                    continue
                total += 1
                kept += passes(w, thr)[0]
            print(f"{dev} {ch}: {len(s)} samples, {kept}/{total} windows pass the activity filter")


def _write_stream(stream, path):
    t = stream.start_time + np.arange(len(stream)) / stream.rate
    np.savetxt(path, np.column_stack([t, stream.samples]), delimiter=",",
               header="t,v1", comments="", fmt="%.9g")


def cmd_quantize(args, settings):
    from .evaluation import device_bits, window_starts
    from .quantizer import fuse, write_fingerprints
    from .signals import context_streams
    from .synthetic import load_dataset

    ds = load_dataset(args.input)
    if args.device not in ds.recordings:
        raise DataError(f"no recordings for device {args.device!r}; have {', '.join(ds.devices)}")
    params = _eval_params(settings)
    streams = context_streams(ds.recordings[args.device], params.pipeline)
    missing = [m for m in args.sensors if m not in streams]
    if missing:
        raise DataError(f"device {args.device} lacks {','.join(missing)}")
    starts = window_starts(ds.duration, args.step)
    db = device_bits(args.device, streams, starts, params)
    _, ok = db.fused(args.sensors)
    fps = [fuse({m: db.bits[m][k] for m in args.sensors}, start_time=float(db.starts[k]))
           for k in np.nonzero(ok)[0]]
    write_fingerprints(fps, args.output)
    print(f"wrote {len(fps)} fingerprints ({sum(db.bits[m].shape[1] for m in args.sensors)} bits each) "
          f"to {args.output}")


def _pair_bits(args):
    from .quantizer import read_fingerprints

    fps = read_fingerprints(args.fingerprint)
    if not fps:
        raise DataError(f"{args.fingerprint}: no fingerprints")
    fps = fps[args.index:]
    thr = args.threshold if args.threshold is not None else fps[0].fused_threshold
    mods = fps[0].modalities
    if args.bits is None:
        return fps[0].bits, thr, mods
    bits = np.concatenate([f.bits for f in fps if f.modalities == mods])
    if len(bits) < args.bits:
        raise DataError(f"only {len(bits)} fingerprint bits available, need {args.bits}")
    return bits[:args.bits], thr, mods


def cmd_pair(args, settings):
    from .fpake.session import ProtocolConfig, Role, key_fingerprint, run_session
    from .transport.channel import connect, listen
    from .transport.wire import sensor_bitmap

    if bool(args.listen) == bool(args.connect):
        raise UsageError("give exactly one of --listen or --connect")
    bits, thr, mods = _pair_bits(args)
    cfg = ProtocolConfig(len(bits), thr, secret_bits=args.secret_bits,
                         confirm_timeout=args.timeout, sensors=sensor_bitmap(mods))
    if args.start_at is not None:
        delay = args.start_at - time.time()
        if delay > 0:
            log.info("waiting %.2f s for the agreed start", delay)
            time.sleep(delay)
    role = Role.INITIATOR if args.role == "initiator" else Role.RESPONDER
    try:
        chan = listen(args.listen, timeout=args.wait) if args.listen else \
            connect(args.connect, timeout=args.wait)
    except OSError as exc:
        print(f"connection failed: {exc}", file=sys.stderr)
        return EXIT_ABORT
    try:
        outcome = run_session(cfg, bits, chan, role)
    except OSError as exc:
        print(f"pairing aborted: connection lost ({exc})", file=sys.stderr)
        return EXIT_ABORT
    finally:
        chan.close()
    if not outcome.ok:
        print(f"pairing aborted: {outcome.reason}", file=sys.stderr)
        return EXIT_ABORT
    print(f"key fingerprint {key_fingerprint(outcome.key)}")
    if args.verbose:
        for k, v in outcome.timings.items():
            print(f"  {k}: {v * 1000:.1f} ms")
    return EXIT_OK


def _print_rates(rows, csv):
    if csv:
        print("sensors,scenario,tar,far,colocated_pairs,non_colocated_pairs")
        for label, r in rows.items():
            print(f"{label},{r.scenario},{r.tar:.6f},{r.far:.6f},{r.colocated},{r.non_colocated}")
        return
    print(f"{'sensors':18s} {'TAR':>7s} {'FAR':>9s} {'coloc':>7s} {'non':>7s}")
    for label, r in rows.items():
        print(f"{label:18s} {r.tar:7.3f} {r.far:9.5f} {r.colocated:7d} {r.non_colocated:7d}")


def cmd_evaluate(args, settings):
    from .evaluation import compute_tar_far, dataset_bits, full_protocol_check, sensor_sets

    ds = _dataset(args, settings)
    params = _eval_params(settings)
    bits = dataset_bits(ds, params, jobs=args.jobs)
    sets = [args.sensors] if args.sensors else sensor_sets()
    _print_rates(compute_tar_far(ds, params, sets, bits), args.csv)
    if args.full_protocol:
        rng = np.random.default_rng(args.seed)
        for mods in sets:
            agree, n = full_protocol_check(ds, mods, bits, args.full_protocol, params, rng)
            print(f"# full protocol {'+'.join(mods)}: {agree}/{n} sessions match the predicate")


def cmd_attack(args, settings):
    from .evaluation import AttackSpec, dataset_bits, run_attack, sensor_sets

    alignment = args.alignment or ("best_match_single_sensor" if args.kind == "similar_context"
                                   else "unsynchronized")
    try:
        spec = AttackSpec(args.kind, alignment, sensor=args.sensor)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = _dataset(args, settings, follow=args.kind == "similar_context")
    params = _eval_params(settings)
    bits = dataset_bits(ds, params, jobs=args.jobs)
    sets = [args.sensors] if args.sensors else sensor_sets()
    rng = np.random.default_rng(args.seed)
    res = run_attack(spec, ds, params, sets, bits, rng=rng, max_trials=args.trials)
    if args.csv:
        print("sensors,attack,alignment,far,trials,accepts")
    for label, r in res.items():
        if args.csv:
            print(f"{label},{spec.kind},{spec.alignment},{r.far:.6f},{r.trials},{r.accepts}")
        else:
            print(f"{label:18s} FAR {r.far:.6f}  ({r.accepts}/{r.trials})")


def cmd_entropy(args, settings):
    from .evaluation import entropy_analysis
    from .quantizer import read_fingerprints

    if args.input:
        corpus = [f.bits for f in read_fingerprints(args.input)]
    else:
        rng = np.random.default_rng(args.seed)
        corpus = rng.integers(0, 2, (args.uniform, args.length), dtype=np.uint8)
    r = entropy_analysis(corpus)
    print(f"corpus {r.corpus_size} x {r.n_bits} bits")
    print(f"walk chi-square {r.chi_square:.3f}  p = {r.chi_square_p:.4f}")
    print(f"markov P(1|0) {r.markov_p01:.4f}  P(1|1) {r.markov_p11:.4f}")
    print(f"min-entropy proxies (bits/bit): MCV {r.mcv_min_entropy:.4f}  "
          f"Markov {r.markov_min_entropy:.4f}")
    if args.verbose:
        print("position,observed,expected")
        for p, c in r.walk_positions.items():
            print(f"{p},{c},{r.expected_binomial[p]:.2f}")


def cmd_generate(args, settings):
    from .synthetic import generate_synthetic_context, write_dataset

    ds = generate_synthetic_context(args.seed, args.scenario, args.devices, args.devices,
                                    args.duration, _synthetic_cfg(settings), args.follow)
    write_dataset(ds, args.output)
    print(f"wrote {len(ds.devices)} devices x {args.duration:g} s ({args.scenario}) to {args.output}")


def bench_bits(sensors):
    """fPAKE bit budget for a fusion set: the per-sensor figures, 100 once fused."""
    from .security import FPAKE_BITS

    return FPAKE_BITS[sensors[0]] if len(sensors) == 1 else 100


def run_bench(iterations, sensors, bits=None, mode="memory", seed=0):
    from .fpake.session import ProtocolConfig
    from .quantizer import fused_threshold
    from .transport.loopback import loopback_pair

    thr = fused_threshold(sensors)
    n = bits or bench_bits(sensors)
    cfg = ProtocolConfig(n, thr)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(iterations):
        a = rng.integers(0, 2, n, dtype=np.uint8)
        b = a.copy()
        flip = rng.choice(n, cfg.max_errors, replace=False)
        b[flip] ^= 1
        res = loopback_pair(a, b, cfg, mode=mode)
        if not res.agreed:
            raise FastZipError("benchmark session failed to agree")
        rows.append(res.timing)
    return n, thr, rows


def cmd_bench(args, settings):
    if args.iterations < 10:
        raise UsageError("--iterations must be at least 10")
    sets = [args.sensors] if args.sensors else [("Acv", "Ach", "Gyr", "Bar")]
    keys = ("amplification", "commitment", "confirmation", "total",
            "compute_initiator", "compute_responder", "channel")
    print("sensors,bits,phase,mean_ms,std_ms")
    for mods in sets:
        n, thr, rows = run_bench(args.iterations, mods, args.bits, args.mode, args.seed)
        for k in keys:
            v = np.array([r[k] for r in rows]) * 1000
            print(f"{'+'.join(mods)},{n},{k},{v.mean():.3f},{v.std():.3f}")


# --- parser -----------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="fastzip", description="Zero-interaction pairing from shared sensor context.")
    p.add_argument("--version", action="version", version=f"fastzip {__version__}")
    p.add_argument("--config", help="key = value config file (else $FASTZIP_CONFIG, ./fastzip.conf)")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic data and sampling")
    p.add_argument("--verbose", "-v", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for evaluation")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    c = sub.add_parser("calc-params", help="security sizing tables and calculators")
    c.add_argument("--table1", action="store_true", help="fingerprint size vs offline guessing")
    c.add_argument("--table2", action="store_true", help="per-sensor bits and pairing times")
    c.add_argument("--threshold", type=_fraction, help="similarity threshold (0.9 or 90)")
    c.add_argument("--bits", type=int, help="fingerprint size; default: smallest meeting --security-bits")
    c.add_argument("--security-bits", type=float, default=20.0,
                   help="required -log2 of the offline guessing probability")
    c.add_argument("--granularity", type=int, default=1, help="size search step in bits")
    c.add_argument("--convention", choices=("exclusive", "inclusive"), default="exclusive")
    c.add_argument("--csv", action="store_true")
    c.set_defaults(func=cmd_calc_params)

    c = sub.add_parser("preprocess", help="run the signal pipeline over recorded CSVs")
    c.add_argument("--input", required=True, help="directory of <car>_<spot>_<sensor>.csv files")
    c.add_argument("--output", required=True, help="directory for processed channel streams")
    c.add_argument("--device", help="only this <car>_<spot> device")
    c.add_argument("--step", type=float, default=5.0, help="window step in seconds")
    c.set_defaults(func=cmd_preprocess)

    c = sub.add_parser("quantize", help="dump fused fingerprints for one device")
    c.add_argument("--input", required=True, help="directory of recordings")
    c.add_argument("--device", required=True)
    c.add_argument("--sensors", type=_sensors, default=("Acv", "Ach", "Gyr", "Bar"))
    c.add_argument("--step", type=float, default=5.0)
    c.add_argument("--output", required=True, help="fingerprint dump file")
    c.set_defaults(func=cmd_quantize)

    c = sub.add_parser("pair", help="run one live pairing over TCP")
    c.add_argument("--role", choices=("initiator", "responder"), required=True)
    c.add_argument("--listen", metavar="HOST:PORT")
    c.add_argument("--connect", metavar="HOST:PORT")
    c.add_argument("--fingerprint", required=True, help="fingerprint dump file")
    c.add_argument("--index", type=int, default=0, help="first fingerprint line to use")
    c.add_argument("--bits", type=int, help="concatenate lines up to this many bits")
    c.add_argument("--threshold", type=_fraction, help="override the fused threshold")
    c.add_argument("--secret-bits", type=int, default=128, choices=(128, 244))
    c.add_argument("--timeout", type=float, default=3.0, help="per-message deadline, seconds")
    c.add_argument("--wait", type=float, default=30.0, help="seconds to wait for the peer")
    c.add_argument("--start-at", type=float, help="unix time at which both sides begin")
    c.set_defaults(func=cmd_pair)

    for name, func, text in (("evaluate", cmd_evaluate, "TAR/FAR per sensor set"),
                             ("attack", cmd_attack, "FAR under an attack model")):
        c = sub.add_parser(name, help=text)
        c.add_argument("--dataset", help="directory of recordings; default: synthetic")
        c.add_argument("--scenario", default="city",
                       choices=("city", "country", "highway", "parking"))
        c.add_argument("--duration", type=float, default=1200.0)
        c.add_argument("--sensors", type=_sensors, help="one fusion set; default: all 15")
        c.add_argument("--csv", action="store_true")
        c.set_defaults(func=func)
        if name == "evaluate":
            c.add_argument("--full-protocol", type=int, default=0, metavar="N",
                           help="also run N real sessions per set as a spot check")
        else:
            c.add_argument("--kind", required=True,
                           choices=("injection", "replay", "similar_context"))
            c.add_argument("--alignment",
                           choices=("unsynchronized", "rough_timeline", "best_match_single_sensor"))
            c.add_argument("--sensor", help="sensor the similar-context attacker matches")
            c.add_argument("--trials", type=int, help="sample this many attempts per set")

    c = sub.add_parser("entropy", help="random-walk, Markov and min-entropy report")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="fingerprint dump file")
    src.add_argument("--uniform", type=int, metavar="COUNT", help="self-check on COUNT random strings")
    c.add_argument("--length", type=int, default=48, help="bits per random string")
    c.set_defaults(func=cmd_entropy)

    c = sub.add_parser("generate", help="write a synthetic two-car dataset")
    c.add_argument("--output", required=True)
    c.add_argument("--scenario", default="city", choices=("city", "country", "highway", "parking"))
    c.add_argument("--duration", type=float, default=600.0)
    c.add_argument("--devices", type=int, default=3, help="devices per car")
    c.add_argument("--follow", action="store_true", help="second car trails the first")
    c.set_defaults(func=cmd_generate)

    c = sub.add_parser("bench", help="time loopback sessions")
    c.add_argument("--iterations", type=int, default=100)
    c.add_argument("--sensors", type=_sensors, help="fusion set; default: all four")
    c.add_argument("--bits", type=int, help="override the fingerprint size")
    c.add_argument("--mode", choices=("memory", "tcp"), default="memory")
    c.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        settings = _load_settings(args)
        rc = args.func(args, settings)
    except UsageError as exc:
        print(f"fastzip {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as exc:
        print(f"pairing aborted: {exc.reason}", file=sys.stderr)
        return EXIT_ABORT
    except InsufficientContext as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FastZipError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
