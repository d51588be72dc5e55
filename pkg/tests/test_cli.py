"""Experiment harness CLI: exit codes, determinism, file contracts."""

import json
import subprocess
import sys

import numpy as np
import pytest

from noisecal.cli import main
from noisecal.fileio import read_code_stream, read_float_stream


def _write_cfg(path, **over):
    cfg = {
        "sample_rate_hz": 48000.0,
        "duration_samples": 200000,
        # fundamental far below the default noise cutoff (fs/64 = 750 Hz)
        # so distortion harmonics stay out of the noise band
        "stimulus": {"kind": "sine", "freq_hz": 31.0, "amplitude": 0.9},
        "nonlinearity": {"kind": "scaled-tanh", "drive": 2.0},
        "noise": {"sigma": 0.01, "seed": 5},
        "pipeline": {"kind": "rbf", "n_pieces": 64, "block_size": 4,
                     "block_interval": 64, "reintegrate_period": 64,
                     "alpha": 0.05, "n_bins": 24, "min_count": 4},
    }
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def rbf_run(tmp_path_factory):
    """One simulate run shared by the read-only CLI tests."""
    root = tmp_path_factory.mktemp("rbf_run")
    cfg = _write_cfg(root / "cfg.json")
    out = root / "out"
    assert main(["simulate", "--config", str(cfg), "--output", str(out)]) == 0
    return cfg, out


def test_simulate_writes_streams(rbf_run):
    _, out = rbf_run
    clean = read_float_stream(out / "clean.csv")
    distorted = read_float_stream(out / "distorted.csv")
    assert len(clean) == len(distorted) == 200000
    assert clean.sample_rate == distorted.sample_rate == 48000.0
    assert not (out / "codes.csv").exists()  # only the pwl flow emits codes


def test_simulate_deterministic_and_seed_override(rbf_run, tmp_path):
    cfg, out = rbf_run
    again = tmp_path / "again"
    assert main(["simulate", "--config", str(cfg), "--output", str(again)]) == 0
    assert (again / "distorted.csv").read_bytes() == (out / "distorted.csv").read_bytes()
    seeded = tmp_path / "seeded"
    assert main(["simulate", "--config", str(cfg), "--seed", "99",
                 "--output", str(seeded)]) == 0
    assert (seeded / "distorted.csv").read_bytes() != (out / "distorted.csv").read_bytes()
    # the clean stimulus does not depend on the noise seed
    assert (seeded / "clean.csv").read_bytes() == (out / "clean.csv").read_bytes()


def test_identify_outputs(rbf_run, tmp_path):
    cfg, out = rbf_run
    dest = tmp_path / "ident"
    rc = main(["identify", "--config", str(cfg),
               "--input", str(out / "distorted.csv"), "--output", str(dest)])
    assert rc == 0
    table = (dest / "inverse_table.csv").read_text().splitlines()
    assert table[0] == "# normalization=endpoints"
    assert table[1] == "y,g"
    data = np.loadtxt(table[2:], delimiter=",")
    # the recovered map bends the right way for a saturating system:
    # expansive near full scale, compressive near zero
    assert np.all(np.diff(data[:, 1]) > 0)
    mid = data[:, 0][np.abs(data[:, 0]) < 0.2]
    gmid = data[:, 1][np.abs(data[:, 0]) < 0.2]
    slope_mid = np.polyfit(mid, gmid, 1)[0]
    assert slope_mid < 0.75  # artanh-like: flat in the middle
    lin = (dest / "linearity.csv").read_text().splitlines()
    assert lin[3] == "code,dnl,inl"
    assert (dest / "sigma_profile.csv").exists()


def test_compensate_rbf(rbf_run, tmp_path):
    cfg, out = rbf_run
    dest = tmp_path / "comp"
    rc = main(["compensate", "--config", str(cfg),
               "--input", str(out / "distorted.csv"), "--output", str(dest)])
    assert rc == 0
    comp = read_float_stream(dest / "compensated.csv")
    assert len(comp) == 200000
    telem = (dest / "telemetry.csv").read_text().splitlines()
    assert telem[1].startswith("ordinal,at_sample,blocks_seen")
    assert len(telem) > 10


@pytest.fixture(scope="module")
def pwl_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pwl_run")
    cfg = _write_cfg(
        root / "cfg.json",
        stimulus={"freq_hz": 313.0},
        pipeline={"kind": "pwl", "block_size": 4, "block_interval": 64,
                  "ma_len": 64, "n_ranges": 32, "w_max": 1024,
                  "deadband_shift": 1, "pwl_seed": 77, "telemetry_period": 256},
    )
    out = root / "out"
    assert main(["simulate", "--config", str(cfg), "--output", str(out)]) == 0
    return cfg, out


def test_simulate_pwl_emits_codes(pwl_run):
    cfg, out = pwl_run
    stream = read_code_stream(out / "codes.csv")
    assert stream.bits == 10
    assert stream.sample_rate == 48000.0
    assert 0 <= stream.codes.min() and stream.codes.max() < 1024


def test_compensate_pwl(pwl_run, tmp_path):
    cfg, out = pwl_run
    dest = tmp_path / "comp"
    rc = main(["compensate", "--config", str(cfg),
               "--input", str(out / "codes.csv"), "--output", str(dest)])
    assert rc == 0
    comp = read_code_stream(dest / "compensated.csv")
    assert comp.bits == 12
    assert len(comp.codes) == 200000
    header = (dest / "telemetry.csv").read_text().splitlines()[1]
    assert header.startswith("blocks_seen,ref_var")
    assert header.endswith("span_31")


def test_compensate_pwl_rejects_float_stream(pwl_run, capsys):
    cfg, out = pwl_run
    rc = main(["compensate", "--config", str(cfg),
               "--input", str(out / "distorted.csv"), "--output", str(out)])
    assert rc == 1
    assert "integer-code streams only" in capsys.readouterr().err


def test_compensate_pwl_rejects_bits_mismatch(pwl_run, tmp_path, capsys):
    cfg, out = pwl_run
    other = tmp_path / "codes8.csv"
    other.write_text("# bits=8\ncode\n" + "\n".join(["12"] * 4) + "\n")
    rc = main(["compensate", "--config", str(cfg),
               "--input", str(other), "--output", str(tmp_path)])
    assert rc == 1
    assert "pipeline.input_bits" in capsys.readouterr().err


def test_compensate_offline_kind_rejected(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "cfg.json", pipeline={"kind": "offline"})
    rc = main(["compensate", "--config", str(cfg),
               "--input", "whatever.csv", "--output", str(tmp_path)])
    assert rc == 1
    assert "pipeline.kind" in capsys.readouterr().err


def test_exit_codes_for_bad_inputs(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "cfg.json")
    # missing input file: I/O error
    assert main(["identify", "--config", str(cfg),
                 "--input", str(tmp_path / "nope.csv"),
                 "--output", str(tmp_path)]) == 3
    # malformed stream names the offending line
    bad = tmp_path / "bad.csv"
    bad.write_text("# sample_rate_hz=48000\nsample\n0.1\nwat\n")
    assert main(["identify", "--config", str(cfg), "--input", str(bad),
                 "--output", str(tmp_path)]) == 3
    assert "bad.csv:4" in capsys.readouterr().err
    # config problems
    nojson = tmp_path / "no.json"
    nojson.write_text("{")
    assert main(["simulate", "--config", str(nojson), "--output", str(tmp_path)]) == 1
    unknown = tmp_path / "unk.json"
    unknown.write_text(json.dumps({"sample_rate_hz": 48000,
                                   "duration_samples": 10, "woops": 1}))
    assert main(["simulate", "--config", str(unknown), "--output", str(tmp_path)]) == 1
    assert main(["simulate", "--config", str(cfg), "--seed", "-3",
                 "--output", str(tmp_path)]) == 1


def test_sweep_sequential_matches_parallel(tmp_path):
    cfg = _write_cfg(tmp_path / "cfg.json", duration_samples=60000,
                     sweep={"block_sizes": [4, 16]})
    seq = tmp_path / "seq"
    par = tmp_path / "par"
    assert main(["thd-sweep", "--config", str(cfg), "--output", str(seq)]) == 0
    assert main(["thd-sweep", "--config", str(cfg), "--parallel", "2",
                 "--output", str(par)]) == 0
    assert (seq / "results.csv").read_bytes() == (par / "results.csv").read_bytes()
    rows = (seq / "results.csv").read_text().splitlines()
    assert "# n_points=2" in rows[:2]
    assert rows[2] == "drive,freq_hz,block_size,seed,thd_in_db,thd_out_db,improvement_db,error"


def test_sweep_records_per_point_failure(tmp_path):
    # 50 kHz is beyond Nyquist: that point fails, the sweep completes
    cfg = _write_cfg(tmp_path / "cfg.json", duration_samples=60000,
                     sweep={"freqs_hz": [997.0, 50000.0]})
    out = tmp_path / "out"
    assert main(["thd-sweep", "--config", str(cfg), "--output", str(out)]) == 0
    rows = (out / "results.csv").read_text().splitlines()[3:]
    assert len(rows) == 2
    good, bad = rows
    assert good.endswith(",")  # empty error column
    assert "ValueError" in bad and "nan" in bad


def test_sweep_needs_an_axis(tmp_path, capsys):
    cfg = _write_cfg(tmp_path / "cfg.json")
    assert main(["thd-sweep", "--config", str(cfg), "--output", str(tmp_path)]) == 1
    assert "non-empty sweep axis" in capsys.readouterr().err
    assert main(["thd-sweep", "--config", str(cfg), "--parallel", "0",
                 "--output", str(tmp_path)]) == 1


def test_console_entry_point_installed():
    proc = subprocess.run([sys.executable, "-m", "noisecal.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "thd-sweep" in proc.stdout
