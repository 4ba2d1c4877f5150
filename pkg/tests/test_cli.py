import json

import numpy as np
import pytest

from atomcloud import cli, core
from atomcloud.cli import (ConfigError, format_number, load_config, main, parse_config_text,
                           read_csv, verify_manifest, write_csv)

SMALL = """\
# desk-scale smoke configuration
[cloud]
n_atoms = 25
radius = 0.2

[ensemble]
realizations = 40
seed = 11
groups = 4

[detuning]
min = -2
max = 2
count = 5
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("text, line, fragment", [
    ("[cloud]\nn_atoms = 25\nradiuss = 0.2\n", 3, "unknown key 'radiuss'"),
    ("[cloud]\nn_atoms = 25\n\n[clouds]\n", 4, "unknown section [clouds]"),
    ("[cloud]\nn_atoms = 25\nn_atoms = 30\n", 3, "duplicate key"),
    ("[ensemble]\nrealizations = many\n", 2, "bad value for ensemble.realizations"),
    ("[ensemble]\nposition_reuse = maybe\n", 2, "expected a boolean"),
    ("n_atoms = 25\n", 1, "outside of any [section]"),
    ("[cloud\n", 1, "malformed section header"),
    ("[cloud]\nradius\n", 2, "expected 'key = value'"),
])
def test_config_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "run.cfg")
    assert f"run.cfg:{line}:" in str(info.value)
    assert fragment in str(info.value)


def test_config_error_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "[cloud]\nn_atom = 3\n")
    assert main(["spectrum", "--config", path, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "run.cfg:2:" in err and "unknown key 'n_atom'" in err


@pytest.mark.parametrize("text", [
    "[detuning]\nmin = 3\nmax = 1\n",
    "[detuning]\ncount = 0\n",
    "[phase]\ncount = 0\n",
    "[cloud]\nradius = -1\n",
    "[ensemble]\nseed = -4\n",
    "[output]\nformats = png\n",
    "[excitation]\nvariant = gaussian\n",
])
def test_semantic_validation(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "absent.cfg"))


def test_flags_override_file(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL), {"seed": 99, "realizations": None, "phi": 1.5})
    assert cfg.seed == 99 and cfg.realizations == 40 and cfg.phi == 1.5
    assert cfg.detunings().tolist() == [-2, -1, 0, 1, 2]


def test_defaults():
    cfg = load_config()
    assert (cfg.n_atoms, cfg.radius, cfg.detuning_count, cfg.phi_count) == (25, 0.2, 201, 101)
    assert cfg.detunings()[0] == -10 and cfg.phis()[-1] == pytest.approx(2 * np.pi)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["spectrum", "--out", str(blocker / "sub"), "--realizations", "2"]) == cli.EXIT_CONFIG


def test_wrong_variant_for_command(tmp_path):
    path = _write(tmp_path, SMALL)
    assert main(["spectrum", "--config", path, "--excitation", "te4", "--out", str(tmp_path)]) == 1
    assert main(["phase-scan", "--config", path, "--out", str(tmp_path)]) == 1


def test_impossible_cloud_is_degenerate(tmp_path):
    path = _write(tmp_path, "[cloud]\nmin_pair_distance = 0.39\n[ensemble]\nresample_limit = 5\n"
                            "[detuning]\ncount = 1\n")
    assert main(["spectrum", "--config", path, "--realizations", "2", "--out", str(tmp_path)]) == \
        cli.EXIT_DEGENERATE


@pytest.fixture(scope="module")
def spectrum_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("spec")
    path = _write(base, SMALL)
    assert main(["spectrum", "--config", path, "--out", str(base / "a")]) == 0
    return base, path


def test_spectrum_outputs(spectrum_run):
    base, _ = spectrum_run
    out = base / "a"
    header, rows = read_csv(out / "spectrum.csv")
    assert len(rows) == 5
    for col in ("detuning", "alpha_ed_re", "alpha_mq_im", "ed_diag_fluct", "eq_fluct", "c_coh",
                "c_incoh", "c_total", "c_total_MQ", "identity_residual_ED", "se_c_total", "se_ed_re"):
        assert col in header
    assert (out / "spectrum_cross_sections.svg").read_text().startswith("<svg")
    assert all(verify_manifest(out).values())
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["realizations"] == 40
    assert manifest["software"]["version"] == cli.__version__
    assert {"resample_events", "wall_clock_s", "realizations_per_s", "noise"} <= set(manifest)
    assert (out / "spectrum.csv").read_bytes().count(b"\r") == 0


def test_spectrum_is_byte_identical_on_rerun(spectrum_run):
    base, path = spectrum_run
    assert main(["spectrum", "--config", path, "--out", str(base / "b"), "--workers", "3"]) == 0
    for name in ("spectrum.csv", "spectrum_cross_sections.svg", "spectrum_polarizabilities.svg"):
        assert (base / "a" / name).read_bytes() == (base / "b" / name).read_bytes()


def test_manifest_detects_tampering(spectrum_run, tmp_path):
    base, path = spectrum_run
    out = tmp_path / "t"
    assert main(["spectrum", "--config", path, "--out", str(out), "--seed", "3"]) == 0
    with open(out / "spectrum.csv", "a") as fh:
        fh.write("\n")
    status = verify_manifest(out)
    assert status["spectrum.csv"] is False
    assert status["spectrum_polarizabilities.svg"] is True


def test_csv_reparse_is_idempotent(spectrum_run, tmp_path):
    base, _ = spectrum_run
    header, rows = read_csv(base / "a" / "spectrum.csv")
    write_csv(tmp_path / "again.csv", header, [[float(v) for v in r] for r in rows])
    assert (tmp_path / "again.csv").read_bytes() == (base / "a" / "spectrum.csv").read_bytes()


def test_number_format_round_trips():
    rng = np.random.default_rng(0)
    for v in np.concatenate([rng.normal(size=100) * 10.0 ** rng.integers(-30, 30, 100), [0.0, -0.0, 1e-300]]):
        assert float(format_number(v)) == v


def test_single_atom_spectrum_peaks_at_three(tmp_path):
    # a near-centered single atom: the quadrupole-truncated total is the full 3
    path = _write(tmp_path, "[cloud]\nn_atoms = 1\nradius = 0.01\nmin_pair_distance = 0\n"
                            "[ensemble]\nrealizations = 20\ngroups = 4\n"
                            "[detuning]\nmin = -1\nmax = 1\ncount = 21\n")
    assert main(["spectrum", "--config", path, "--out", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "spectrum.csv")
    data = np.array(rows, dtype=float)
    total = data[:, header.index("c_total")]
    assert data[np.argmax(total), 0] == 0.0
    assert total.max() == pytest.approx(3.0, rel=1e-4)
    # position jitter only enters through the drive phase, at most (k R)^2
    assert np.all(data[:, header.index("ed_diag_fluct")] <= (core.K_ATOM * 0.01) ** 2)


PHASE = """\
[ensemble]
realizations = 60
groups = 4
seed = 2
[detuning]
min = -1
max = 1
count = 3
[phase]
min = 0
max = 6.283185307179586
count = 5
"""


def test_phase_scan_outputs(tmp_path):
    path = _write(tmp_path, PHASE)
    out = tmp_path / "o"
    assert main(["phase-scan", "--config", path, "--excitation", "tm4", "--out", str(out)]) == 0
    header, rows = read_csv(out / "phase_scan_total.csv")
    assert header[0] == "detuning" and len(header) == 6 and len(rows) == 3
    closed = np.array(read_csv(out / "phase_scan_closed_total.csv")[1], dtype=float)
    # phi = 0 and phi = 2 pi columns of the closed form agree to rounding
    np.testing.assert_allclose(closed[:, 1], closed[:, 5], rtol=1e-12)
    sh, srows = read_csv(out / "phase_scan_slices.csv")
    assert len(srows) == 9 and "closed_total_MD" in sh
    manifest = json.loads((out / "manifest.json").read_text())
    lo, hi = manifest["heatmap_range"]["total"]
    measured = np.array(rows, dtype=float)[:, 1:]
    assert lo == measured.min() and hi == measured.max()
    assert all(verify_manifest(out).values())
    # TM at phi = 0 drives only the magnetic dipole in the closed form
    sl = np.array(srows, dtype=float)
    phi0 = sl[sl[:, 0] == 0.0]
    for m in ("ED", "EQ", "MQ"):
        assert np.all(np.abs(phi0[:, sh.index(f"closed_total_{m}")]) < 1e-12)


def test_pattern_rejects_empty_grid(tmp_path):
    path = _write(tmp_path, "[pattern]\npoints = 0\n")
    assert main(["pattern", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_pattern_outputs(tmp_path):
    path = _write(tmp_path, "[ensemble]\nrealizations = 300\n[pattern]\npoints = 8\n")
    out = tmp_path / "o"
    assert main(["pattern", "--config", path, "--excitation", "te4", "--phi", "0", "--out", str(out)]) == 0
    header, rows = read_csv(out / "pattern.csv")
    assert len(rows) == 16
    yz = [r for r in rows if r[0] == "yz"]
    data = np.array([r[1:] for r in yz], dtype=float)
    h = header[1:]
    # theta = pi/2 and 3 pi/2 on the y-z cut are the +-y axis: the y-dipole zeros
    for theta in (np.pi / 2, 3 * np.pi / 2):
        row = data[np.argmin(np.abs(data[:, 0] - theta))]
        assert row[h.index("coherent")] <= 5 * row[h.index("se_coherent")]
    assert (out / "pattern_xz.svg").exists() and (out / "pattern_yz.svg").exists()


def test_cut_directions_are_unit_vectors():
    theta, xz, yz = cli.cut_directions(12)
    np.testing.assert_allclose(np.linalg.norm(xz, axis=1), 1)
    np.testing.assert_allclose(yz[:, 0], 0)
    with pytest.raises(ValueError):
        cli.cut_directions(0)


def test_validate_default_passes(tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "--realizations", "400", "--out", str(out)]) == cli.EXIT_OK
    report = json.loads((out / "validate.json").read_text())
    assert report["passed"]
    names = {c["name"] for c in report["checks"]}
    assert {"exact_extinction_equals_scattering", "identity_ED", "identity_MQ",
            "route_equivalence", "position_reuse_unbiased"} <= names


def test_validate_reports_absorption_inequality(tmp_path):
    path = _write(tmp_path, "[atom]\ngamma_nr = 0.5\n")
    out = tmp_path / "v"
    assert main(["validate", "--config", path, "--realizations", "300", "--out", str(out)]) == 0
    checks = {c["name"]: c for c in json.loads((out / "validate.json").read_text())["checks"]}
    ot = checks["single_atom_optical_theorem"]
    assert ot["passed"] and ot["value"] > 0
    assert "Im(a/a0) > |a/a0|^2" in ot["detail"]
    assert checks["exact_extinction_exceeds_scattering"]["passed"]


def test_validate_catches_corrupted_greens_sign(tmp_path, monkeypatch):
    real = core.coupling_matrix
    monkeypatch.setattr(core, "coupling_matrix", lambda *a, **kw: -real(*a, **kw))
    out = tmp_path / "v"
    assert main(["validate", "--realizations", "200", "--out", str(out)]) == cli.EXIT_VALIDATION
    checks = {c["name"]: c for c in json.loads((out / "validate.json").read_text())["checks"]}
    assert not checks["exact_extinction_equals_scattering"]["passed"]
