import socket
import subprocess
import sys

import numpy as np
import pytest

from fastzip.cli import EXIT_ABORT, EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from fastzip.quantizer import fuse, write_fingerprints
from fastzip.security import format_table1

SUBCOMMANDS = ("calc-params", "preprocess", "quantize", "pair", "evaluate", "attack", "entropy",
               "generate", "bench")


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_every_subcommand_has_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "--" in capsys.readouterr().out


def test_pair_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["pair", "--help"])
    out = capsys.readouterr().out
    for flag in ("--role", "--listen", "--connect", "--fingerprint", "--timeout", "--start-at"):
        assert flag in out


def test_usage_errors_exit_one(capsys):
    for argv in ([], ["calc-params", "--bogus"], ["calc-params"], ["bench", "--iterations", "3"],
                 ["calc-params", "--threshold", "abc"]):
        with pytest.raises(SystemExit) as exc:
            rc = main(argv)
            raise SystemExit(rc)
        assert exc.value.code == EXIT_USAGE, argv
    capsys.readouterr()


def test_table1_output(capsys):
    assert main(["calc-params", "--table1"]) == EXIT_OK
    assert capsys.readouterr().out == format_table1()


def test_threshold_calculator(capsys):
    assert main(["calc-params", "--threshold", "95", "--granularity", "10",
                 "--convention", "inclusive"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "bits 40" in out and "fuzzy-commitment bits for 128-bit key 141" in out


def test_table2_csv(capsys):
    assert main(["calc-params", "--table2", "--csv"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("sensors,") and lines[3].startswith("Gyr,0.9375,50,145,40,100")


def test_missing_file_is_data_error(tmp_path, capsys):
    assert main(["entropy", "--input", str(tmp_path / "none.txt")]) == EXIT_DATA
    assert main(["--config", str(tmp_path / "none.conf"), "calc-params", "--table2"]) == EXIT_DATA
    bad = tmp_path / "bad.txt"
    bad.write_text("0 Acv 0101x\n")
    assert main(["entropy", "--input", str(bad)]) == EXIT_DATA
    capsys.readouterr()


def test_entropy_uniform(capsys):
    assert main(["--seed", "3", "entropy", "--uniform", "2000"]) == EXIT_OK
    assert "markov P(1|0) 0.5" in capsys.readouterr().out


def test_seeded_output_is_reproducible(capsys):
    argv = ["--seed", "4", "evaluate", "--duration", "240", "--sensors", "Gyr,Bar", "--csv"]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out == first
    assert first.splitlines()[1].startswith("Gyr+Bar,city,")


def test_generate_preprocess_quantize(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["--seed", "1", "generate", "--output", str(data), "--duration", "120",
                 "--devices", "1"]) == EXIT_OK
    assert len(list(data.glob("*.csv"))) == 6
    assert main(["preprocess", "--input", str(data), "--output", str(tmp_path / "proc"),
                 "--device", "car1_dashboard"]) == EXIT_OK
    dump = tmp_path / "fp.txt"
    assert main(["quantize", "--input", str(data), "--device", "car1_dashboard",
                 "--sensors", "Gyr", "--output", str(dump)]) == EXIT_OK
    capsys.readouterr()
    lines = dump.read_text().splitlines()
    assert all(line.split()[1] == "Gyr" and len(line.split()[2]) == 16 for line in lines)


def test_attack_command(capsys):
    assert main(["--seed", "2", "attack", "--kind", "replay", "--duration", "240",
                 "--sensors", "Acv", "--csv"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "sensors,attack,alignment,far,trials,accepts"
    assert out[1].startswith("Acv,replay,unsynchronized,")
    assert main(["attack", "--kind", "replay", "--alignment", "best_match_single_sensor"]) \
        == EXIT_USAGE
    capsys.readouterr()


def test_bench(capsys):
    assert main(["bench", "--iterations", "10", "--sensors", "Gyr"]) == EXIT_OK
    rows = [r.split(",") for r in capsys.readouterr().out.splitlines()[1:]]
    phases = {r[2]: float(r[3]) for r in rows}
    assert rows[0][1] == "50"
    parts = phases["amplification"] + phases["commitment"] + phases["confirmation"]
    assert abs(phases["total"] - parts) <= 0.05 * phases["total"] + 0.5


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def fingerprint_file(path, bits):
    write_fingerprints([fuse({"Acv": bits[:24], "Ach": bits[24:]})], path)


def pair_processes(tmp_path, bits_a, bits_b):
    fa, fb = tmp_path / "a.txt", tmp_path / "b.txt"
    fingerprint_file(fa, bits_a)
    fingerprint_file(fb, bits_b)
    addr = f"127.0.0.1:{free_port()}"
    base = [sys.executable, "-m", "fastzip.cli", "pair"]
    resp = subprocess.Popen(base + ["--role", "responder", "--listen", addr,
                                    "--fingerprint", str(fb)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    init = subprocess.run(base + ["--role", "initiator", "--connect", addr,
                                  "--fingerprint", str(fa)],
                          capture_output=True, text=True, timeout=60)
    out_b, err_b = resp.communicate(timeout=60)
    return init, (resp.returncode, out_b, err_b)


def test_pair_over_tcp(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 48)
    b = a.copy()
    b[:5] ^= 1
    init, (rc_b, out_b, _) = pair_processes(tmp_path, a, b)
    assert init.returncode == EXIT_OK and rc_b == EXIT_OK
    assert init.stdout.startswith("key fingerprint ") and init.stdout == out_b


def test_pair_far_apart_aborts(tmp_path):
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, 48)
    b = a.copy()
    b[rng.choice(48, 29, replace=False)] ^= 1  # similarity 19/48, about 0.40
    init, (rc_b, _, err_b) = pair_processes(tmp_path, a, b)
    assert init.returncode == EXIT_ABORT and rc_b == EXIT_ABORT
    assert "DecodeFailure" in err_b or "HashMismatch" in err_b
    assert "pairing aborted" in init.stderr


def test_parser_builds():
    assert build_parser().prog == "fastzip"
