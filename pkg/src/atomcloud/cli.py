"""Command-line scans: spectrum, phase-scan, pattern and validate.

Configuration is a flat ``[section]`` / ``key = value`` text file. Unknown
sections or keys are rejected with the offending line number. Command-line
flags override file values.

Exit codes: 0 success, 1 configuration error, 2 numerical degeneracy,
3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, core, ensemble, multipole
from .core import K_ATOM, AtomModel, CloudSpec
from .ensemble import (DegenerateSpecError, EnsembleConfig, NumericalDegeneracyError,
                       closed_form_statistics, conservation_check, cross_section_statistics,
                       polarizability_se, realization_seed, retrieve_polarizabilities,
                       run_ensemble, run_pattern, sample_realization)
from .excitation import Variant, make_field, single_plane_wave
from .multipole import MULTIPOLES
from .solver import DegenerateRealizationError, solve_coupled_dipoles
from . import svg

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_VALIDATION = 0, 1, 2, 3
VALIDATE_REALIZATIONS = 2000
VALIDATE_DETUNINGS = (-1.0, 0.0, 1.0)
STAT_THRESHOLD = 5.0


class ConfigError(ValueError):
    """Invalid configuration; the message names the source and line when known."""


# section -> key -> (type, default)
SCHEMA = {
    "cloud": {"n_atoms": (int, 25), "radius": (float, 0.2), "min_pair_distance": (float, 1e-3)},
    "atom": {"gamma0": (float, 1.0), "gamma_nr": (float, 0.0)},
    "ensemble": {"realizations": (int, 10000), "seed": (int, 0), "position_reuse": (bool, True),
                 "resample_limit": (int, 100), "groups": (int, 20), "workers": (int, 1)},
    "excitation": {"variant": (str, "pw"), "psi": (float, np.pi / 4), "phi": (float, 0.0)},
    "detuning": {"min": (float, -10.0), "max": (float, 10.0), "count": (int, 201),
                 "value": (float, 0.0)},
    "phase": {"min": (float, 0.0), "max": (float, 2 * np.pi), "count": (int, 101)},
    "pattern": {"points": (int, 181)},
    "output": {"directory": (str, "out"), "formats": (str, "csv,svg")},
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(kind, text: str):
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text, 0)
    if kind is float:
        return float(text)
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse config text into {(section, key): value}, checking names and types."""
    values = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]; "
                                  f"known sections: {', '.join(SCHEMA)}")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside of any [section]")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key '{key}' in [{section}]; "
                              f"known keys: {', '.join(SCHEMA[section])}")
        if (section, key) in values:
            raise ConfigError(f"{where}: duplicate key '{key}' in [{section}]")
        kind = SCHEMA[section][key][0]
        try:
            values[(section, key)] = _convert(kind, val)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None
    return values


@dataclass(frozen=True)
class RunConfig:
    n_atoms: int = 25
    radius: float = 0.2
    min_pair_distance: float = 1e-3
    gamma0: float = 1.0
    gamma_nr: float = 0.0
    realizations: int = 10000
    seed: int = 0
    position_reuse: bool = True
    resample_limit: int = 100
    groups: int = 20
    workers: int = 1
    variant: str = "pw"
    psi: float = np.pi / 4
    phi: float = 0.0
    detuning_min: float = -10.0
    detuning_max: float = 10.0
    detuning_count: int = 201
    detuning_value: float = 0.0
    phi_min: float = 0.0
    phi_max: float = 2 * np.pi
    phi_count: int = 101
    pattern_points: int = 181
    output_dir: str = "out"
    formats: tuple = ("csv", "svg")

    def validate(self):
        try:
            self.cloud()
            AtomModel(self.gamma0, self.gamma_nr)
            self.ensemble_config()
            Variant(self.variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("detuning_count", "phi_count", "pattern_points", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.detuning_min > self.detuning_max:
            raise ConfigError("detuning min must not exceed detuning max")
        if self.phi_min > self.phi_max:
            raise ConfigError("phase min must not exceed phase max")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        bad = set(self.formats) - {"csv", "svg"}
        if bad or not self.formats:
            raise ConfigError(f"output formats must be drawn from csv,svg; got {','.join(self.formats)}")
        return self

    def cloud(self) -> CloudSpec:
        return CloudSpec(self.n_atoms, self.radius, self.min_pair_distance)

    def atom(self) -> AtomModel:
        return AtomModel(self.gamma0, self.gamma_nr)

    def ensemble_config(self, **overrides) -> EnsembleConfig:
        base = dict(cloud=self.cloud(), n_realizations=self.realizations, master_seed=self.seed,
                    position_reuse=self.position_reuse, resample_limit=self.resample_limit,
                    n_groups=self.groups)
        base.update(overrides)
        return EnsembleConfig(**base)

    def detunings(self) -> np.ndarray:
        return np.linspace(self.detuning_min, self.detuning_max, self.detuning_count)

    def phis(self) -> np.ndarray:
        return np.linspace(self.phi_min, self.phi_max, self.phi_count)

    def echo(self) -> dict:
        d = asdict(self)
        d["formats"] = list(self.formats)
        return d


_FIELD_MAP = {
    ("cloud", "n_atoms"): "n_atoms", ("cloud", "radius"): "radius",
    ("cloud", "min_pair_distance"): "min_pair_distance",
    ("atom", "gamma0"): "gamma0", ("atom", "gamma_nr"): "gamma_nr",
    ("ensemble", "realizations"): "realizations", ("ensemble", "seed"): "seed",
    ("ensemble", "position_reuse"): "position_reuse", ("ensemble", "resample_limit"): "resample_limit",
    ("ensemble", "groups"): "groups", ("ensemble", "workers"): "workers",
    ("excitation", "variant"): "variant", ("excitation", "psi"): "psi", ("excitation", "phi"): "phi",
    ("detuning", "min"): "detuning_min", ("detuning", "max"): "detuning_max",
    ("detuning", "count"): "detuning_count", ("detuning", "value"): "detuning_value",
    ("phase", "min"): "phi_min", ("phase", "max"): "phi_max", ("phase", "count"): "phi_count",
    ("pattern", "points"): "pattern_points",
    ("output", "directory"): "output_dir", ("output", "formats"): "formats",
}


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig` from an optional file plus overrides."""
    kwargs = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        for key, val in parse_config_text(text, str(path)).items():
            kwargs[_FIELD_MAP[key]] = val
    kwargs.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if isinstance(kwargs.get("formats"), str):
        kwargs["formats"] = tuple(f.strip() for f in kwargs["formats"].split(",") if f.strip())
    return RunConfig(**kwargs).validate()


def _prepare_output(directory: str) -> Path:
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {directory} is not writable: {exc.strerror}") from None
    return out


def format_number(v) -> str:
    return "%.17g" % v


def write_csv(path: Path, header, rows) -> None:
    """Comma-separated, LF-terminated, numbers with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) if isinstance(v, (float, int, np.floating, np.integer))
                             and not isinstance(v, bool) else v for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, files: list, extra: dict) -> Path:
    manifest = {
        "command": command,
        "software": {"name": "atomcloud", "version": __version__},
        "config": cfg.echo(),
        "files": {name: {"sha256": sha256_file(out / name), "bytes": (out / name).stat().st_size}
                  for name in sorted(files)},
    }
    manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def verify_manifest(directory) -> dict:
    """Return {file: bool} telling whether each listed checksum matches."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    return {name: (directory / name).exists() and sha256_file(directory / name) == meta["sha256"]
            for name, meta in manifest["files"].items()}


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _timing(t0: float, n_real: int) -> dict:
    wall = time.perf_counter() - t0
    return {"wall_clock_s": wall, "realizations_per_s": n_real / wall if wall > 0 else None}


# spectrum -----------------------------------------------------------------

def spectrum_table(cfg: RunConfig, workers: int | None = None):
    """Run the single plane-wave detuning sweep; return (header, rows, summary)."""
    field = single_plane_wave(1.0, K_ATOM)
    stats = run_ensemble(cfg.ensemble_config(), cfg.detunings(), field, cfg.atom(),
                         workers or cfg.workers)
    pol = retrieve_polarizabilities(stats)
    pse = polarizability_se(stats)
    cons = conservation_check(pol, stats)
    cs, cse = cross_section_statistics(stats)

    header = ["detuning"]
    cols = [stats.detunings]
    for name in ("ed", "md", "eq", "mq"):
        val = getattr(pol, name)
        header += [f"alpha_{name}_re", f"alpha_{name}_im"]
        cols += [val.real, val.imag]
    for name in ("ed_diag_fluct", "ed_offdiag_fluct", "md_diag_fluct", "md_offdiag_fluct",
                 "eq_fluct", "mq_fluct"):
        header.append(name)
        cols.append(getattr(pol, name))
    header += ["alpha_ed_offdiag_re", "alpha_ed_offdiag_im"]
    cols += [pol.ed_offdiag_mean.real, pol.ed_offdiag_mean.imag]
    for kind, table in (("coh", cs.coh), ("incoh", cs.incoh), ("total", cs.ext)):
        for m in MULTIPOLES:
            header.append(f"c_{kind}_{m}")
            cols.append(table[m])
    header += ["c_coh", "c_incoh", "c_total"]
    cols += [cs.coh_total, cs.incoh_total, cs.ext_total]
    for m in MULTIPOLES:
        header += [f"identity_lhs_{m}", f"identity_rhs_{m}", f"identity_residual_{m}"]
        cols += [cons.lhs[m], cons.rhs[m], cons.residual[m]]
    for key, val in pse.items():
        header.append(f"se_{key}")
        cols.append(val)
    for m in MULTIPOLES:
        header.append(f"se_identity_{m}")
        cols.append(cons.se[m])
    header += ["se_c_coh", "se_c_incoh", "se_c_total"]
    cols += [cse["coh"], cse["incoh"], cse["ext"]]
    rows = [list(r) for r in zip(*[np.asarray(c, dtype=float) for c in cols])]
    summary = {
        "resample_events": stats.degenerate_events,
        "realizations": stats.n,
        "noise": {"max_se_c_total": float(np.max(cse["ext"])), "max_se_c_coh": float(np.max(cse["coh"]))},
        "peak": {"c_total": float(cs.ext_total.max()), "c_coh": float(cs.coh_total.max()),
                 "detuning_at_peak": float(stats.detunings[np.argmax(cs.ext_total)])},
    }
    return header, rows, summary, (stats, pol, cs)


def cmd_spectrum(cfg: RunConfig) -> int:
    if Variant(cfg.variant) is not Variant.SINGLE_PLANE_WAVE:
        raise ConfigError("spectrum needs excitation variant 'pw'")
    out = _prepare_output(cfg.output_dir)
    t0 = time.perf_counter()
    header, rows, summary, (stats, pol, cs) = spectrum_table(cfg)
    files = []
    if "csv" in cfg.formats:
        write_csv(out / "spectrum.csv", header, rows)
        files.append("spectrum.csv")
    if "svg" in cfg.formats:
        x = stats.detunings
        series = {f"total {m}": cs.ext[m] for m in MULTIPOLES}
        series.update({"coherent": cs.coh_total, "incoherent": cs.incoh_total, "total": cs.ext_total})
        (out / "spectrum_cross_sections.svg").write_text(svg.line_plot(
            x, series, "Cross sections", "detuning (Gamma0)", "C / (lambda^2/2pi)"))
        pser = {}
        for m in ("ed", "md", "eq", "mq"):
            val = getattr(pol, m)
            pser[f"Re {m}"] = val.real
            pser[f"Im {m}"] = val.imag
        (out / "spectrum_polarizabilities.svg").write_text(svg.line_plot(
            x, pser, "Ensemble polarizabilities", "detuning (Gamma0)", "alpha / alpha0 (alpha0')"))
        files += ["spectrum_cross_sections.svg", "spectrum_polarizabilities.svg"]
    summary.update(_timing(t0, stats.n))
    write_manifest(out, "spectrum", cfg, files, summary)
    print(f"spectrum: peak C_total {summary['peak']['c_total']:.4f} at detuning "
          f"{summary['peak']['detuning_at_peak']:+.3f}; files in {out}")
    return EXIT_OK


# phase scan ---------------------------------------------------------------

SLICE_PHIS = (0.0, np.pi / 2, np.pi)


def phase_scan_tables(cfg: RunConfig, workers: int | None = None) -> dict:
    """Measured and closed-form C_total/C_coh over (detuning, phi)."""
    variant = Variant(cfg.variant)
    phis = cfg.phis()
    all_phis = np.concatenate([phis, SLICE_PHIS])
    fields = [make_field(variant, p, cfg.psi) for p in all_phis]
    detunings = cfg.detunings()
    workers = workers or cfg.workers
    stats = run_ensemble(cfg.ensemble_config(), detunings, fields, cfg.atom(), workers)
    pw_stats = run_ensemble(cfg.ensemble_config(stream=ensemble.STREAM_COMPANION), detunings,
                            single_plane_wave(), cfg.atom(), workers)
    n_d, n_f = len(detunings), len(all_phis)
    res = {k: np.empty((n_d, n_f)) for k in ("total", "coh", "total_se", "closed_total",
                                            "closed_coh", "closed_total_se")}
    per_mult = {}
    for i, p in enumerate(all_phis):
        cs, se = cross_section_statistics(stats, i)
        cf, cfse = closed_form_statistics(pw_stats, variant, p, cfg.psi)
        res["total"][:, i], res["coh"][:, i], res["total_se"][:, i] = cs.ext_total, cs.coh_total, se["ext"]
        res["closed_total"][:, i], res["closed_coh"][:, i] = cf.ext_total, cf.coh_total
        res["closed_total_se"][:, i] = cfse["ext"]
        if i >= len(phis):
            per_mult[i - len(phis)] = (cs, cf)
    n_phi = len(phis)
    out = {k: v[:, :n_phi] for k, v in res.items()}
    out["slices"] = {k: v[:, n_phi:] for k, v in res.items()}
    out["slice_multipoles"] = per_mult
    out.update(detunings=detunings, phis=phis, stats=stats, pw_stats=pw_stats)
    return out


def _write_matrix(path: Path, detunings, phis, mat) -> None:
    header = ["detuning"] + [format_number(p) for p in phis]
    write_csv(path, header, [[d] + list(row) for d, row in zip(detunings, mat)])


def cmd_phase_scan(cfg: RunConfig) -> int:
    variant = Variant(cfg.variant)
    if variant is Variant.SINGLE_PLANE_WAVE:
        raise ConfigError("phase-scan needs excitation variant 'te4' or 'tm4'")
    out = _prepare_output(cfg.output_dir)
    t0 = time.perf_counter()
    res = phase_scan_tables(cfg)
    d, phis = res["detunings"], res["phis"]
    files = []
    if "csv" in cfg.formats:
        for key, name in (("total", "phase_scan_total.csv"), ("coh", "phase_scan_coherent.csv"),
                          ("total_se", "phase_scan_total_se.csv"),
                          ("closed_total", "phase_scan_closed_total.csv"),
                          ("closed_coh", "phase_scan_closed_coherent.csv"),
                          ("closed_total_se", "phase_scan_closed_total_se.csv")):
            _write_matrix(out / name, d, phis, res[key])
            files.append(name)
        header = ["phi", "detuning"]
        header += [f"c_total_{m}" for m in MULTIPOLES] + ["c_total", "se_c_total", "c_coh"]
        header += [f"closed_total_{m}" for m in MULTIPOLES] + ["closed_total", "se_closed_total", "closed_coh"]
        rows = []
        for j, p in enumerate(SLICE_PHIS):
            cs, cf = res["slice_multipoles"][j]
            sl = res["slices"]
            for i, det in enumerate(d):
                rows.append([p, det] + [cs.ext[m][i] for m in MULTIPOLES]
                            + [sl["total"][i, j], sl["total_se"][i, j], sl["coh"][i, j]]
                            + [cf.ext[m][i] for m in MULTIPOLES]
                            + [sl["closed_total"][i, j], sl["closed_total_se"][i, j], sl["closed_coh"][i, j]])
        write_csv(out / "phase_scan_slices.csv", header, rows)
        files.append("phase_scan_slices.csv")
    if "svg" in cfg.formats:
        label = variant.value.upper()
        (out / "phase_scan_total.svg").write_text(svg.heatmap(
            phis, d, res["total"], f"{label} measured C_total", "phi (rad)", "detuning (Gamma0)"))
        (out / "phase_scan_closed_total.svg").write_text(svg.heatmap(
            phis, d, res["closed_total"], f"{label} closed-form C_total", "phi (rad)", "detuning (Gamma0)"))
        series, dashed = {}, []
        for j, name in enumerate(("0", "pi/2", "pi")):
            series[f"phi={name}"] = res["slices"]["total"][:, j]
            series[f"closed phi={name}"] = res["slices"]["closed_total"][:, j]
            dashed.append(f"closed phi={name}")
        (out / "phase_scan_slices.svg").write_text(svg.line_plot(
            d, series, f"{label} slices", "detuning (Gamma0)", "C_total / (lambda^2/2pi)", dashed))
        files += ["phase_scan_total.svg", "phase_scan_closed_total.svg", "phase_scan_slices.svg"]
    n_real = res["stats"].n + res["pw_stats"].n
    extra = {
        "resample_events": res["stats"].degenerate_events + res["pw_stats"].degenerate_events,
        "realizations": res["stats"].n,
        "companion_realizations": res["pw_stats"].n,
        "heatmap_range": {"total": [float(res["total"].min()), float(res["total"].max())],
                          "closed_total": [float(res["closed_total"].min()),
                                           float(res["closed_total"].max())]},
        "noise": {"max_se_c_total": float(res["total_se"].max()),
                  "max_se_closed_total": float(res["closed_total_se"].max())},
    }
    extra.update(_timing(t0, n_real))
    write_manifest(out, "phase-scan", cfg, files, extra)
    print(f"phase-scan ({variant.value}): {len(d)}x{len(phis)} grid; files in {out}")
    return EXIT_OK


# pattern ------------------------------------------------------------------

def cut_directions(points: int):
    """Unit vectors on the x-z and y-z great circles, angle measured from +z."""
    if points < 1:
        raise ValueError("empty direction grid")
    theta = 2 * np.pi * np.arange(points) / points
    s, c, z = np.sin(theta), np.cos(theta), np.zeros(points)
    return theta, np.stack([s, z, c], -1), np.stack([z, s, c], -1)


def cmd_pattern(cfg: RunConfig) -> int:
    out = _prepare_output(cfg.output_dir)
    t0 = time.perf_counter()
    theta, xz, yz = cut_directions(cfg.pattern_points)
    fld = make_field(cfg.variant, cfg.phi, cfg.psi)
    pat = run_pattern(cfg.ensemble_config(), cfg.detuning_value, fld, np.concatenate([xz, yz]),
                      cfg.atom(), cfg.workers)
    n = len(theta)
    files = []
    if "csv" in cfg.formats:
        rows = []
        for plane, off in (("xz", 0), ("yz", n)):
            for i in range(n):
                j = off + i
                rows.append([plane, theta[i], *pat.directions[j], pat.coherent[j], pat.total[j],
                             pat.incoherent[j], pat.se_coherent[j], pat.se_total[j]])
        write_csv(out / "pattern.csv", ["plane", "theta", "nx", "ny", "nz", "coherent", "total",
                                        "incoherent", "se_coherent", "se_total"], rows)
        files.append("pattern.csv")
    if "svg" in cfg.formats:
        for plane, off in (("xz", 0), ("yz", n)):
            sl = slice(off, off + n)
            name = f"pattern_{plane}.svg"
            (out / name).write_text(svg.polar_plot(
                theta, {"coherent": pat.coherent[sl], "total": pat.total[sl]},
                f"{plane} cut, angle from +z"))
            files.append(name)
    extra = {"noise": {"max_se_total": float(pat.se_total.max())}, "realizations": cfg.realizations}
    extra.update(_timing(t0, cfg.realizations))
    write_manifest(out, "pattern", cfg, files, extra)
    print(f"pattern: {2 * n} directions; files in {out}")
    return EXIT_OK


# validate -----------------------------------------------------------------

def _check(name, passed, value, limit, detail=""):
    return {"name": name, "passed": bool(passed), "value": value, "limit": limit, "detail": detail}


def validation_suite(cfg: RunConfig, workers: int | None = None) -> list[dict]:
    """Module invariants, oracle equivalences and statistical identities at reduced scale."""
    checks = []
    k = K_ATOM
    lossless = cfg.gamma_nr == 0
    atom = cfg.atom()

    det = np.linspace(-20, 20, 4001)
    a = core.polarizability_array(det, cfg.gamma0, cfg.gamma_nr) / core.alpha0(k)
    gap = a.imag - np.abs(a) ** 2
    if lossless:
        checks.append(_check("single_atom_optical_theorem", np.max(np.abs(gap)) <= 1e-14,
                             float(np.max(np.abs(gap))), 1e-14, "Im(a/a0) = |a/a0|^2"))
    else:
        checks.append(_check("single_atom_optical_theorem", np.min(gap) > 0, float(np.min(gap)), 0.0,
                             "absorbing atom: Im(a/a0) > |a/a0|^2 expected"))

    worst = 0.0
    for n, xs in enumerate(core.BESSEL_SWITCH):
        series = core._kernel_series(n, np.array([xs]))[0]
        closed = core._kernel_closed(n, np.array([xs]))[0]
        worst = max(worst, abs(series - closed) / abs(closed))
    checks.append(_check("bessel_branch_match", worst <= 1e-12, worst, 1e-12))

    rng = np.random.default_rng(realization_seed(cfg.seed, 0, stream=7))
    pts = rng.uniform(-1, 1, (200, 2, 3))
    sym = max(np.max(np.abs(core.greens_tensor(p, q) - core.greens_tensor(q, p).T))
              / np.max(np.abs(core.greens_tensor(p, q))) for p, q in pts)
    checks.append(_check("greens_symmetry", sym <= 1e-14, float(sym), 1e-14))

    field = single_plane_wave()
    worst_oracle, worst_sym, worst_tr, trunc = 0.0, 0.0, 0.0, []
    absorb_ok = True
    for i in range(20):
        cloud = sample_realization(cfg.cloud(), realization_seed(cfg.seed, i, stream=8), cfg.resample_limit)
        for d in VALIDATE_DETUNINGS:
            try:
                sol = solve_coupled_dipoles(cloud, field, atom.with_detuning(d), k)
            except DegenerateRealizationError:
                continue
            ext = multipole.exact_extinction(sol, field, k)
            sca = multipole.exact_scattering(sol, k)
            worst_oracle = max(worst_oracle, abs(ext - sca) / abs(ext))
            absorb_ok &= ext > sca
            mom = multipole.multipole_expansion(sol, k)
            for q in (mom.QE, mom.QM):
                qn = np.max(np.abs(q)) or 1.0
                worst_sym = max(worst_sym, np.max(np.abs(q - q.T)) / qn)
                worst_tr = max(worst_tr, abs(np.trace(q)) / qn)
            single = multipole.cross_sections_from_moments(mom, field, k=k)
            trunc.append(abs(single.ext_total - single.coh_total) / ext)
    if lossless:
        checks.append(_check("exact_extinction_equals_scattering", worst_oracle <= 1e-8,
                             worst_oracle, 1e-8))
    else:
        checks.append(_check("exact_extinction_exceeds_scattering", absorb_ok, worst_oracle, 0.0,
                             "absorbing atoms remove energy"))
    checks.append(_check("quadrupole_symmetric", worst_sym <= 1e-12, float(worst_sym), 1e-12))
    checks.append(_check("quadrupole_traceless", worst_tr <= 1e-10, float(worst_tr), 1e-10))
    allowance = float(np.mean(trunc))

    n_real = cfg.realizations
    ecfg = cfg.ensemble_config(n_realizations=n_real)
    stats = run_ensemble(ecfg, VALIDATE_DETUNINGS, field, atom, workers or cfg.workers)
    pol = retrieve_polarizabilities(stats)
    cons = conservation_check(pol, stats)
    for m in MULTIPOLES:
        diff = cons.lhs[m] - cons.rhs[m]
        z = diff / cons.se[m]
        if lossless:
            ok = np.all(np.abs(z) <= STAT_THRESHOLD)
            detail = "|lhs - rhs| within 5 standard errors"
        else:
            ok = np.all(z >= -STAT_THRESHOLD)
            detail = "absorbing: lhs >= rhs within 5 standard errors"
        checks.append(_check(f"identity_{m}", ok, float(np.max(np.abs(z))), STAT_THRESHOLD, detail))

    fluct = [getattr(pol, n) for n in ("ed_diag_fluct", "ed_offdiag_fluct", "md_diag_fluct",
                                        "md_offdiag_fluct", "eq_fluct", "mq_fluct")]
    checks.append(_check("fluctuations_nonnegative", all(np.all(f >= 0) for f in fluct),
                         float(min(np.min(f) for f in fluct)), 0.0))
    z_od = np.abs(pol.ed_offdiag_mean) / pol.ed_offdiag_se
    checks.append(_check("offdiagonal_mean_zero", np.all(z_od <= STAT_THRESHOLD),
                         float(np.max(z_od)), STAT_THRESHOLD))

    cs, cse = cross_section_statistics(stats)
    route = multipole.cross_sections_from_polarizabilities(pol)
    ext_gap = np.max(np.abs(route.ext_total - cs.ext_total) / np.abs(cs.ext_total))
    recon = multipole.cross_sections_from_moments(multipole.expected_moments(pol, field, k), field, k=k)
    coh_gap = np.max(np.abs(route.coh_total - recon.coh_total) / np.abs(route.coh_total))
    checks.append(_check("route_equivalence", max(ext_gap, coh_gap) <= 1e-10,
                         float(max(ext_gap, coh_gap)), 1e-10))

    incoh_z = np.min(cs.incoh_from_ext / cse["ext"])
    checks.append(_check("incoherent_nonnegative", incoh_z >= -STAT_THRESHOLD, float(incoh_z),
                         -STAT_THRESHOLD, "(total - coherent) / SE"))
    balance = np.abs(cs.ext_total - cs.coh_total - cs.incoh_total) / cs.ext_total
    if lossless:
        checks.append(_check("extinction_balance", np.all(balance <= 0.05 + allowance),
                             float(np.max(balance)), 0.05 + allowance,
                             f"5% plus measured truncation allowance {allowance:.4f}"))

    fresh = run_ensemble(cfg.ensemble_config(n_realizations=n_real, position_reuse=False),
                         VALIDATE_DETUNINGS, field, atom, workers or cfg.workers)
    pol2 = retrieve_polarizabilities(fresh)
    se1, se2 = polarizability_se(stats), polarizability_se(fresh)
    zr = np.abs(pol.ed.real - pol2.ed.real) / np.hypot(se1["ed_re"], se2["ed_re"])
    zi = np.abs(pol.ed.imag - pol2.ed.imag) / np.hypot(se1["ed_im"], se2["ed_im"])
    zmax = float(max(np.max(zr), np.max(zi)))
    checks.append(_check("position_reuse_unbiased", zmax <= STAT_THRESHOLD, zmax, STAT_THRESHOLD))
    return checks


def cmd_validate(cfg: RunConfig, realizations: int | None = None) -> int:
    out = _prepare_output(cfg.output_dir)
    t0 = time.perf_counter()
    cfg = replace(cfg, realizations=realizations or VALIDATE_REALIZATIONS)
    checks = validation_suite(cfg)
    passed = all(c["passed"] for c in checks)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: value={c['value']:.6g} limit={c['limit']:.6g}")
    report = {"passed": passed, "checks": checks}
    (out / "validate.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n")
    extra = {"passed": passed}
    extra.update(_timing(t0, cfg.realizations))
    write_manifest(out, "validate", cfg, ["validate.json"], extra)
    return EXIT_OK if passed else EXIT_VALIDATION


# entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomcloud", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"atomcloud {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("spectrum", "single plane-wave detuning sweep"),
                           ("phase-scan", "four-wave detuning x phi scan with closed-form overlay"),
                           ("pattern", "ensemble far-field intensity cuts"),
                           ("validate", "reduced-scale invariant and identity suite")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="config file (flat [section] key = value)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--realizations", type=int, help="number of realizations N_R")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, help="worker processes (speed only)")
        p.add_argument("--excitation", choices=[v.value for v in Variant], help="field variant")
        p.add_argument("--phi", type=float, help="relative phase in radians")
        p.add_argument("--psi", type=float, help="four-wave half angle in radians")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "output_dir": args.out, "workers": args.workers,
                 "variant": args.excitation, "phi": args.phi, "psi": args.psi}
    if args.command != "validate":
        overrides["realizations"] = args.realizations
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "phase-scan":
            return cmd_phase_scan(cfg)
        if args.command == "pattern":
            return cmd_pattern(cfg)
        return cmd_validate(cfg, args.realizations)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateSpecError, NumericalDegeneracyError, DegenerateRealizationError) as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
