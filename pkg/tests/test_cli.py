"""Experiment runner: config validation, outputs, manifests, exit codes."""

import hashlib
import json
import math

import numpy as np
import pytest

from maphom.cli import ExperimentConfig, ConfigError, main


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main(["--out", str(out), *argv]), out


def write_config(tmp_path, **kv):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kv))
    return str(path)


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


# ---------------------------------------------------------------------------
# configuration validation
# ---------------------------------------------------------------------------


def test_defaults_validate():
    cfg = ExperimentConfig.load(None)
    assert cfg["cell_resolution"] == 128
    assert cfg["coefficient"] == "sine-product"
    om = cfg.omega()
    assert (om.a1, om.b1) == (0.05, 2.0)


@pytest.mark.parametrize("override,key", [
    ("cell_resolution=100", "cell_resolution"),     # not a power of two
    ("cell_resolution=8", "cell_resolution"),       # below the floor
    ("delta=0", "delta"),
    ("delta=-0.1", "delta"),
    ("coefficient=checkerboard", "coefficient"),
    ("h_list=[4,2]", "h_list"),
    ("h_list=[]", "h_list"),
    ("h_list=[0,1]", "h_list"),
    ("omega=[1,2,3]", "omega"),
    ("omega=[2,1,0.5,1]", "omega"),
    ("scale_map=moebius", "scale_map"),
    ("x2_samples=2", "x2_samples"),
    ("cg_tol=0", "cg_tol"),
    ("cg_tol=1.5", "cg_tol"),
    ("amplitude=1.0", "amplitude"),
    ("threads=0", "threads"),
    ("preview_h=0", "preview_h"),
])
def test_bad_values_are_rejected_with_the_offending_key(override, key):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.load(None, [override])
    assert info.value.key == key


def test_unknown_keys_and_nested_objects_are_rejected(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(None, ["spin=up"])
    path = write_config(tmp_path, omega={"a1": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_missing_or_malformed_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(str(bad))


def test_overrides_beat_the_config_file(tmp_path):
    path = write_config(tmp_path, cell_resolution=64)
    cfg = ExperimentConfig.load(path, ["cell_resolution=32"])
    assert cfg["cell_resolution"] == 32


def test_config_errors_exit_2(tmp_path, capsys):
    code, _ = run(tmp_path, "--override", "cell_resolution=100", "homogenize")
    assert code == 2
    assert "cell_resolution" in capsys.readouterr().err


def test_sample_outside_the_domain_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "--override", "x2_samples=[5.0]", "homogenize")
    assert code == 2
    assert "x2_samples" in capsys.readouterr().err


def test_unreachable_tolerance_exits_3(tmp_path, capsys):
    code, _ = run(tmp_path, "--override", "cg_tol=1e-300",
                  "--override", "cell_resolution=16", "corrector-dump")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def test_homogenize_writes_tensor_and_manifest(tmp_path, capsys):
    code, out = run(
        tmp_path,
        "--override", "coefficient=laminate",
        "--override", "classical=true",
        "--override", "x2_samples=[0.4,0.5,0.6]",
        "homogenize")
    assert code == 0
    header, rows = read_csv(out / "tensor.csv")
    assert header == ["x2", "b11", "b12", "b21", "b22"]
    assert len(rows) == 3
    # one shared solve: identical matrix text on every row
    assert rows[0][1:] == rows[1][1:] == rows[2][1:]
    # config laminate is 2 + 0.9 sin(2 pi y1): harmonic mean across the
    # layers, arithmetic mean along them
    assert abs(float(rows[0][1]) - math.sqrt(4.0 - 0.81)) <= 1e-3
    assert abs(float(rows[0][4]) - 2.0) <= 1e-3
    assert "isotropy" in capsys.readouterr().out

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "homogenize"
    entry = manifest["outputs"][0]
    digest = hashlib.sha256((out / entry["name"]).read_bytes()).hexdigest()
    assert entry["sha256"] == digest
    assert entry["bytes"] > 0
    assert "tensor_field" in manifest["runtimes_seconds"]
    assert manifest["versions"]["maphom"]


def test_homogenize_accepts_a_thread_flag(tmp_path):
    code, out = run(
        tmp_path, "--threads", "2",
        "--override", "cell_resolution=32",
        "--override", "x2_samples=[0.3,0.5,0.7]",
        "homogenize")
    assert code == 0
    _, rows = read_csv(out / "tensor.csv")
    assert len(rows) == 3


def test_aud_reports_per_scale_index(tmp_path, capsys):
    code, out = run(tmp_path, "--override", "aud_h_list=[4,16]", "aud")
    assert code == 0
    header, rows = read_csv(out / "aud.csv")
    assert header == ["h", "n", "j2_min", "j2_max", "max_deviation"]
    assert [r[0] for r in rows] == ["4", "16"]
    assert float(rows[1][4]) < float(rows[0][4])
    printed = capsys.readouterr().out
    assert "h=4" in printed and "h=16" in printed


def test_aud_flags_domains_without_interior_cells(tmp_path, capsys):
    code, out = run(tmp_path,
                    "--override", "omega=[0.5,0.9,0.5,0.9]",
                    "--override", "aud_h_list=[1]", "aud")
    assert code == 0
    _, rows = read_csv(out / "aud.csv")
    assert rows[0] == ["1", "4", "", "", ""]
    assert "no interior cells" in capsys.readouterr().out


def test_convergence_writes_rows_for_each_scale(tmp_path):
    code, out = run(
        tmp_path,
        "--override", "coefficient=identity",
        "--override", "cell_resolution=16",
        "--override", "domain_resolution=32",
        "--override", "x2_samples=4",
        "--override", "h_list=[1,2]",
        "convergence")
    assert code == 0
    header, rows = read_csv(out / "convergence.csv")
    assert header == ["h", "l2_error", "energy", "warn_underresolved"]
    assert [r[0] for r in rows] == ["1", "2"]
    for row in rows:
        assert float(row[1]) <= 1e-12  # no oscillation, no gap
        assert float(row[2]) > 0


def test_preview_respects_the_composed_periodicity(tmp_path):
    """Shifting x1 by 1/h lands on the same sampled value."""
    code, out = run(
        tmp_path,
        "--override", "omega=[0.5,1.5,0.5,1.5]",
        "--override", "preview_resolution=64",
        "preview", "--h", "4")
    assert code == 0
    header, rows = read_csv(out / "preview.csv")
    assert header == ["x1", "x2", "value"]
    n = 64
    assert len(rows) == (n + 1) ** 2
    vals = np.array([float(r[2]) for r in rows]).reshape(n + 1, n + 1)
    shift = n // 4  # columns per map period
    assert np.abs(vals[shift:, :] - vals[:-shift, :]).max() <= 1e-12
    assert vals.min() >= 0.1 - 1e-12
    assert vals.max() <= 1.9 + 1e-12


def test_preview_of_the_identity_is_a_flat_grid(tmp_path):
    code, out = run(tmp_path,
                    "--override", "preview_resolution=16",
                    "--override", "coefficient=identity",
                    "preview")
    assert code == 0
    _, rows = read_csv(out / "preview.csv")
    assert {float(r[2]) for r in rows} == {1.0}


def test_corrector_dump_round_trips(tmp_path):
    code, out = run(tmp_path,
                    "--override", "cell_resolution=16",
                    "--override", "dump_x2=0.5",
                    "corrector-dump")
    assert code == 0
    header, rows = read_csv(out / "corrector.csv")
    assert header == ["y1", "y2", "z1", "z2"]
    assert len(rows) == 256
    z1 = np.array([float(r[2]) for r in rows])
    assert abs(z1.mean()) <= 1e-12
    assert np.abs(z1).max() > 0


def test_data_files_are_byte_stable_across_runs(tmp_path):
    args = ["--override", "cell_resolution=32",
            "--override", "x2_samples=[0.25,0.5,0.75]", "homogenize"]
    code_a, out_a = main(["--out", str(tmp_path / "a"), *args]), tmp_path / "a"
    code_b, out_b = main(["--out", str(tmp_path / "b"), *args]), tmp_path / "b"
    assert code_a == code_b == 0
    assert (out_a / "tensor.csv").read_bytes() == (out_b / "tensor.csv").read_bytes()
