"""Monte Carlo ensembles over random cloud configurations.

Realizations are split into a fixed number of contiguous groups. Each group is
processed sequentially (Welford updates) and groups are merged in index order
(Chan's pairwise update), so statistics are bit-identical for any number of
worker processes. The per-group partials are kept for jackknife errors.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import core, multipole
from .core import K_ATOM, AtomModel, CloudSpec
from .excitation import ExcitationField, Variant, single_plane_wave
from .multipole import MultipoleMoments, Polarizabilities
from .solver import (COND_LIMIT, RESIDUAL_LIMIT, CloudRealization,
                     DegenerateRealizationError, solve_detuning_sweep)

log = logging.getLogger(__name__)

MAX_DEGENERATE_RATE = 0.10
STREAM_MAIN = 0
STREAM_COMPANION = 1


class DegenerateSpecError(RuntimeError):
    """No admissible configuration found within the resample limit."""


class NumericalDegeneracyError(RuntimeError):
    """Too many realizations had to be resampled for conditioning reasons."""


@dataclass(frozen=True)
class EnsembleConfig:
    cloud: CloudSpec = field(default_factory=CloudSpec)
    n_realizations: int = 10000
    master_seed: int = 0
    position_reuse: bool = True
    resample_limit: int = 100
    n_groups: int = 20
    stream: int = STREAM_MAIN

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.resample_limit < 1:
            raise ValueError("resample_limit must be >= 1")
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")


def realization_seed(master_seed: int, index: int, stream: int = STREAM_MAIN,
                     grid_index: int | None = None) -> np.random.SeedSequence:
    """Seed of one realization, derived from (master_seed, stream, index[, grid point])."""
    key = (stream, index) if grid_index is None else (stream, index, grid_index)
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)


def _uniform_ball(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    # radial inverse CDF plus isotropic direction; 4 draws per atom
    u = rng.random(n)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return radius * np.cbrt(u)[:, None] * d


def _min_pair_distance(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return np.inf
    dist = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    return dist[np.triu_indices(len(pos), 1)].min()


def sample_realization(spec: CloudSpec, seed, resample_limit: int = 100,
                       rng: np.random.Generator | None = None) -> CloudRealization:
    """N points uniform in the ball, redrawn whole until every pair is >= d_min apart.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts. Passing an
    existing ``rng`` continues its stream instead.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    for _ in range(resample_limit):
        pos = _uniform_ball(rng, spec.n_atoms, spec.radius)
        if _min_pair_distance(pos) >= spec.min_pair_distance:
            return CloudRealization(pos, _seed_tag(seed))
    raise DegenerateSpecError(
        f"no configuration of {spec.n_atoms} atoms with pair distance >= "
        f"{spec.min_pair_distance} in radius {spec.radius} after {resample_limit} draws"
    )


def _seed_tag(seed):
    if isinstance(seed, np.random.SeedSequence):
        return (seed.entropy,) + tuple(seed.spawn_key)
    return (seed,)


class MomentObservable:
    """Per-realization observable: the 24-component moment vector."""

    size = multipole.N_MOMENT

    def __init__(self, k: float = K_ATOM):
        self.k = k

    def __call__(self, positions, p):
        w = multipole.moment_operator(positions, self.k)
        return np.einsum("mj,djf->fdm", w, p)


class FarFieldObservable:
    """Per-realization observable: transverse far-field vectors on a direction set."""

    def __init__(self, directions, k: float = K_ATOM):
        self.directions = np.asarray(directions, dtype=float)
        self.k = k
        self.size = 3 * len(self.directions)

    def __call__(self, positions, p):
        n = self.directions
        phase = np.exp(-1j * self.k * n @ positions.T)               # (M, N)
        pv = p.reshape(p.shape[0], -1, 3, p.shape[2])                 # (D, N, 3, F)
        s = np.einsum("mi,dicf->fdmc", phase, pv)                     # (F, D, M, 3)
        s = s - np.einsum("mc,fdmc->fdm", n, s)[..., None] * n
        return s.reshape(s.shape[0], s.shape[1], -1)


@dataclass
class _Group:
    n: int
    mean: np.ndarray
    m2: np.ndarray
    resamples: int = 0
    degenerate: int = 0


def _merge(a: _Group, b: _Group) -> _Group:
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + np.abs(delta) ** 2 * (a.n * b.n / n)
    return _Group(n, mean, m2, a.resamples + b.resamples, a.degenerate + b.degenerate)


@dataclass(frozen=True)
class _Task:
    config: EnsembleConfig
    detunings: np.ndarray
    fields: tuple
    atom: AtomModel
    observable: object
    k: float
    start: int
    stop: int


def _solve_realization(task: _Task, pos, inv_alpha, rhs_fields):
    rhs = np.stack([f.eval_E(pos).reshape(-1) for f in rhs_fields], axis=-1)
    x, cond, residual = solve_detuning_sweep(pos, inv_alpha, rhs, task.k)
    if not np.all(np.isfinite(cond)) or cond.max() > COND_LIMIT or residual.max() > RESIDUAL_LIMIT:
        raise DegenerateRealizationError("ill-conditioned realization")
    return x


def _realization_obs(task: _Task, index: int, counters: dict) -> np.ndarray:
    cfg = task.config
    alphas = core.polarizability_array(task.detunings, task.atom.gamma0, task.atom.gamma_nr, task.k)
    inv_alpha = 1.0 / alphas
    n_det = len(task.detunings)
    grid_points = [None] if cfg.position_reuse else list(range(n_det))
    out = np.empty((len(task.fields), n_det, task.observable.size), dtype=complex)
    for gi in grid_points:
        rng = np.random.default_rng(realization_seed(cfg.master_seed, index, cfg.stream, gi))
        sel = slice(None) if gi is None else slice(gi, gi + 1)
        for attempt in range(cfg.resample_limit):
            real = sample_realization(cfg.cloud, None, cfg.resample_limit, rng=rng)
            try:
                x = _solve_realization(task, real.positions, inv_alpha[sel], task.fields)
            except DegenerateRealizationError:
                counters["degenerate"] += 1
                continue
            break
        else:
            raise DegenerateSpecError(f"realization {index}: every draw was ill-conditioned")
        out[:, sel] = task.observable(real.positions, x)
    return out


def _run_group(task: _Task) -> _Group:
    counters = {"degenerate": 0}
    shape = (len(task.fields), len(task.detunings), task.observable.size)
    mean = np.zeros(shape, dtype=complex)
    m2 = np.zeros(shape)
    with threadpool_limits(1):
        for n, index in enumerate(range(task.start, task.stop), start=1):
            x = _realization_obs(task, index, counters)
            delta = x - mean
            mean += delta / n
            m2 += np.real(delta * np.conj(x - mean))
    return _Group(task.stop - task.start, mean, m2, 0, counters["degenerate"])


@dataclass(eq=False)
class EnsembleStatistics:
    """Mean and fluctuation statistics of a per-realization observable.

    Arrays are indexed [field, detuning, component]. ``fluct`` holds the
    population second moment <|X - <X>|^2> per component.
    """

    n: int
    mean: np.ndarray
    fluct: np.ndarray
    group_n: np.ndarray
    group_mean: np.ndarray
    group_m2: np.ndarray
    detunings: np.ndarray
    fields: tuple
    config: EnsembleConfig
    degenerate_events: int = 0
    k: float = K_ATOM

    def moments(self, field_index: int = 0) -> MultipoleMoments:
        return MultipoleMoments.from_vector(self.mean[field_index])

    def fluctuations(self, field_index: int = 0) -> MultipoleMoments:
        return MultipoleMoments.from_vector(self.fluct[field_index])

    def se_mean(self) -> np.ndarray:
        """Standard error of each (complex) mean component, sqrt(var/(n-1)/... )."""
        if self.n < 2:
            return np.full(self.fluct.shape, np.inf)
        return np.sqrt(self.fluct / (self.n - 1))

    def leave_one_out(self, field_index: int | None = None):
        """Yield (mean, fluct) with one group removed, for every non-empty group.

        With ``field_index`` the arrays are restricted to that field.
        """
        sl = slice(None) if field_index is None else field_index
        mean, fluct = self.mean[sl], self.fluct[sl]
        for g in range(len(self.group_n)):
            ng = self.group_n[g]
            rest = self.n - ng
            if ng == 0 or rest == 0:
                continue
            gmean = self.group_mean[g][sl]
            mean_rest = (self.n * mean - ng * gmean) / rest
            delta = gmean - mean_rest
            m2_rest = fluct * self.n - self.group_m2[g][sl] - np.abs(delta) ** 2 * (ng * rest / self.n)
            yield mean_rest, np.maximum(m2_rest, 0.0) / rest

    def jackknife_se(self, fn, field_index: int | None = None):
        """Delete-one-group jackknife standard error of ``fn(mean, fluct)``.

        ``fn`` receives arrays restricted to ``field_index`` when it is given.
        """
        vals = [np.asarray(fn(m, f)) for m, f in self.leave_one_out(field_index)]
        g = len(vals)
        if g < 2:
            sl = slice(None) if field_index is None else field_index
            return np.full(np.shape(fn(self.mean[sl], self.fluct[sl])), np.inf)
        vals = np.array(vals)
        return np.sqrt((g - 1) / g * np.sum((vals - vals.mean(axis=0)) ** 2, axis=0))

    @property
    def degenerate_rate(self) -> float:
        return self.degenerate_events / self.n


def _group_bounds(n: int, n_groups: int):
    edges = np.linspace(0, n, min(n_groups, n) + 1).round().astype(int)
    return list(zip(edges[:-1], edges[1:]))


def run_observable(config: EnsembleConfig, detunings, fields, observable,
                   atom: AtomModel = AtomModel(), workers: int = 1,
                   k: float = K_ATOM) -> EnsembleStatistics:
    """Accumulate statistics of ``observable`` over ``config.n_realizations`` clouds."""
    detunings = np.atleast_1d(np.asarray(detunings, dtype=float))
    if isinstance(fields, ExcitationField):
        fields = (fields,)
    fields = tuple(fields)
    tasks = [_Task(config, detunings, fields, atom, observable, k, a, b)
             for a, b in _group_bounds(config.n_realizations, config.n_groups)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_run_group, tasks))
    else:
        groups = [_run_group(t) for t in tasks]
    total = groups[0]
    for g in groups[1:]:
        total = _merge(total, g)
    if total.degenerate > MAX_DEGENERATE_RATE * total.n:
        raise NumericalDegeneracyError(
            f"{total.degenerate} ill-conditioned draws for {total.n} realizations")
    if total.degenerate:
        log.info("resampled %d ill-conditioned configurations", total.degenerate)
    return EnsembleStatistics(
        n=total.n, mean=total.mean, fluct=total.m2 / total.n,
        group_n=np.array([g.n for g in groups]),
        group_mean=np.array([g.mean for g in groups]),
        group_m2=np.array([g.m2 for g in groups]),
        detunings=detunings, fields=fields, config=config,
        degenerate_events=total.degenerate, k=k,
    )


def run_ensemble(config: EnsembleConfig, detunings, fields, atom: AtomModel = AtomModel(),
                 workers: int = 1, k: float = K_ATOM) -> EnsembleStatistics:
    """Multipole-moment statistics for every (field, detuning) grid point.

    All fields share each realization's positions and factorization.
    """
    return run_observable(config, detunings, fields, MomentObservable(k), atom, workers, k)


def _is_reference_plane_wave(fld: ExcitationField) -> bool:
    if fld.variant is not Variant.SINGLE_PLANE_WAVE or len(fld.beams) != 1:
        return False
    b = fld.beams[0]
    return np.allclose(b.direction, [0, 0, 1]) and np.allclose(b.e_amp / fld.amplitude, [1, 0, 0])


def _retrieve(mean, fluct, n, k, amplitude):
    a0, a0q = core.alpha0(k), core.alpha0_quad(k)
    h0 = amplitude / core.Z0
    mm = MultipoleMoments.from_vector(mean)
    ff = MultipoleMoments.from_vector(fluct)
    ed = mm.dE[..., 0] / (core.EPS0 * amplitude * a0)
    md = mm.dM[..., 1] / (h0 * a0)
    eq = 2 * 0.5 * (mm.QE[..., 0, 2] + mm.QE[..., 2, 0]) / (1j * k * core.EPS0 * amplitude * a0q)
    mq = 2 * 0.5 * (mm.QM[..., 1, 2] + mm.QM[..., 2, 1]) / (1j * k * h0 * a0q)
    ed_scale = (core.EPS0 * amplitude * a0) ** 2
    md_scale = (h0 * a0) ** 2
    # (1/2) sum_{mu nu} |d alpha_{mu nu}|^2 with alpha_{mu nu} = 2 Q_{mu nu} / (i k F0)
    eq_fl = 2 * np.sum(ff.QE, axis=(-2, -1)) / (k * core.EPS0 * amplitude * a0q) ** 2
    mq_fl = 2 * np.sum(ff.QM, axis=(-2, -1)) / (k * h0 * a0q) ** 2
    od_mean = 0.5 * (mm.dE[..., 1] + mm.dE[..., 2]) / (core.EPS0 * amplitude * a0)
    return dict(
        ed=ed, md=md, eq=eq, mq=mq,
        ed_diag_fluct=ff.dE[..., 0] / ed_scale,
        ed_offdiag_fluct=0.5 * (ff.dE[..., 1] + ff.dE[..., 2]) / ed_scale,
        md_diag_fluct=ff.dM[..., 1] / md_scale,
        md_offdiag_fluct=0.5 * (ff.dM[..., 0] + ff.dM[..., 2]) / md_scale,
        eq_fluct=eq_fl, mq_fluct=mq_fl, ed_offdiag_mean=od_mean,
    )


def retrieve_polarizabilities(stats: EnsembleStatistics, field_index: int = 0) -> Polarizabilities:
    """Ensemble polarizabilities from an x-polarized, z-propagating plane-wave run."""
    fld = stats.fields[field_index]
    if not _is_reference_plane_wave(fld):
        raise ValueError("polarizability retrieval needs the reference single plane wave (x-pol, +z)")
    amp = fld.amplitude
    vals = _retrieve(stats.mean[field_index], stats.fluct[field_index], stats.n, stats.k, amp)
    # complex-mean standard error of the off-diagonal average
    se = stats.se_mean()[field_index]
    od_se = 0.5 * np.sqrt(se[..., 1] ** 2 + se[..., 2] ** 2) / (core.EPS0 * amp * core.alpha0(stats.k))
    return Polarizabilities(**vals, ed_offdiag_se=od_se)


def polarizability_se(stats: EnsembleStatistics, field_index: int = 0) -> dict:
    """Jackknife standard errors of the retrieved polarizabilities and fluctuations.

    Complex polarizabilities get separate ``<name>_re`` and ``<name>_im`` entries.
    """
    amp = stats.fields[field_index].amplitude
    out = {}

    def get(key, part=None):
        def fn(m, f):
            val = _retrieve(m, f, stats.n, stats.k, amp)[key]
            return val if part is None else getattr(val, part)
        return fn

    for key in ("ed", "md", "eq", "mq"):
        out[key + "_re"] = stats.jackknife_se(get(key, "real"), field_index)
        out[key + "_im"] = stats.jackknife_se(get(key, "imag"), field_index)
    for key in ("ed_diag_fluct", "ed_offdiag_fluct", "md_diag_fluct", "md_offdiag_fluct",
                "eq_fluct", "mq_fluct"):
        out[key] = stats.jackknife_se(get(key), field_index)
    return out


def _identity_terms(pol_vals: dict) -> dict:
    ed, md, eq, mq = pol_vals["ed"], pol_vals["md"], pol_vals["eq"], pol_vals["mq"]
    return {
        "ED": (ed.imag - np.abs(ed) ** 2, pol_vals["ed_diag_fluct"] + 2 * pol_vals["ed_offdiag_fluct"]),
        "MD": (md.imag - np.abs(md) ** 2, pol_vals["md_diag_fluct"] + 2 * pol_vals["md_offdiag_fluct"]),
        "EQ": (eq.imag - np.abs(eq) ** 2, pol_vals["eq_fluct"]),
        "MQ": (mq.imag - np.abs(mq) ** 2, pol_vals["mq_fluct"]),
    }


@dataclass(frozen=True, eq=False)
class ConservationReport:
    lhs: dict
    rhs: dict
    residual: dict   # |lhs - rhs| / |lhs|
    se: dict = field(default_factory=dict)  # jackknife SE of lhs - rhs


def conservation_check(pol: Polarizabilities, stats: EnsembleStatistics | None = None,
                       field_index: int = 0) -> ConservationReport:
    """Residuals of Im<a> - |<a>|^2 = sum of fluctuation terms, per multipole.

    With ``stats`` given, also returns jackknife standard errors of lhs - rhs.
    """
    vals = {key: getattr(pol, key) for key in (
        "ed", "md", "eq", "mq", "ed_diag_fluct", "ed_offdiag_fluct", "md_diag_fluct",
        "md_offdiag_fluct", "eq_fluct", "mq_fluct")}
    terms = _identity_terms(vals)
    lhs = {m: t[0] for m, t in terms.items()}
    rhs = {m: t[1] for m, t in terms.items()}
    with np.errstate(divide="ignore", invalid="ignore"):
        residual = {m: np.abs(lhs[m] - rhs[m]) / np.abs(lhs[m]) for m in terms}
    se = {}
    if stats is not None:
        amp = stats.fields[field_index].amplitude
        for m in terms:
            se[m] = stats.jackknife_se(lambda mu, fl, m=m: np.subtract(*_identity_terms(
                _retrieve(mu, fl, stats.n, stats.k, amp))[m]), field_index)
    return ConservationReport(lhs, rhs, residual, se)


@dataclass(frozen=True, eq=False)
class SelectiveReport:
    """Comparison of four-wave mean moments with single plane-wave predictions.

    ``significance[m]`` is max |<X>| / SE over the block's components;
    ``deviation[m]`` is max |<X> - predicted| / combined SE. Arrays run over
    detunings.
    """

    measured: MultipoleMoments
    predicted: MultipoleMoments
    significance: dict
    deviation: dict


def verify_selective_excitation(stats: EnsembleStatistics, pw_stats: EnsembleStatistics,
                                field_index: int = 0, pw_field_index: int = 0) -> SelectiveReport:
    """Compare four-wave moment statistics to the plane-wave-retrieved closed forms.

    The two ensembles must be statistically independent (different seeds or
    streams) and share the detuning grid.
    """
    fld = stats.fields[field_index]
    pol = retrieve_polarizabilities(pw_stats, pw_field_index)
    pred = multipole.expected_moments(pol, fld, stats.k).as_vector()
    meas = stats.mean[field_index]
    se_meas = stats.se_mean()[field_index]
    # propagate the plane-wave mean errors through the linear prediction
    se_pw = pw_stats.se_mean()[pw_field_index]
    a0, a0q = core.alpha0(stats.k), core.alpha0_quad(stats.k)
    amp = pw_stats.fields[pw_field_index].amplitude
    ones = np.ones(se_pw.shape[:-1])
    coeff = np.abs(multipole.expected_moments(
        Polarizabilities(ones, ones, ones, ones), fld, stats.k).as_vector())
    se_alpha = {
        "ED": se_pw[..., 0] / (amp * a0),
        "MD": se_pw[..., 4] / (amp / core.Z0 * a0),
        "EQ": se_pw[..., 8] * 2 / (stats.k * amp * a0q),
        "MQ": se_pw[..., 20] * 2 / (stats.k * amp / core.Z0 * a0q),
    }
    significance, deviation = {}, {}
    for m, sl in multipole.SLICES.items():
        se_pred = coeff[..., sl] * se_alpha[m][..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            significance[m] = np.max(np.abs(meas[..., sl]) / se_meas[..., sl], axis=-1)
            comb = np.sqrt(se_meas[..., sl] ** 2 + se_pred**2)
            deviation[m] = np.max(np.abs(meas[..., sl] - pred[..., sl]) / comb, axis=-1)
    return SelectiveReport(MultipoleMoments.from_vector(meas), MultipoleMoments.from_vector(pred),
                           significance, deviation)


def cross_section_statistics(stats: EnsembleStatistics, field_index: int = 0):
    """Moment-route cross sections and jackknife SEs of their totals.

    Returns (CrossSections, se) where ``se`` maps 'coh', 'ext' and 'incoh' to
    arrays over detunings.
    """
    fld = stats.fields[field_index]

    def xs(mean, fluct):
        return multipole.cross_sections_from_moments(
            MultipoleMoments.from_vector(mean), fld, MultipoleMoments.from_vector(fluct), stats.k)

    cs = xs(stats.mean[field_index], stats.fluct[field_index])
    se = {
        "coh": stats.jackknife_se(lambda m, f: xs(m, f).coh_total, field_index),
        "ext": stats.jackknife_se(lambda m, f: xs(m, f).ext_total, field_index),
        "incoh": stats.jackknife_se(lambda m, f: xs(m, f).incoh_total, field_index),
    }
    return cs, se


def closed_form_statistics(pw_stats: EnsembleStatistics, variant, phi: float, psi: float = np.pi / 4,
                           field_index: int = 0):
    """Closed-form cross sections from plane-wave polarizabilities, with jackknife SEs."""
    amp = pw_stats.fields[field_index].amplitude

    def xs(mean, fluct):
        vals = _retrieve(mean, fluct, pw_stats.n, pw_stats.k, amp)
        pol = Polarizabilities(vals["ed"], vals["md"], vals["eq"], vals["mq"])
        return multipole.cross_sections_from_polarizabilities(pol, variant, phi, psi)

    cs = xs(pw_stats.mean[field_index], pw_stats.fluct[field_index])
    se = {
        "coh": pw_stats.jackknife_se(lambda m, f: xs(m, f).coh_total, field_index),
        "ext": pw_stats.jackknife_se(lambda m, f: xs(m, f).ext_total, field_index),
    }
    return cs, se


@dataclass(frozen=True, eq=False)
class PatternStatistics:
    directions: np.ndarray
    coherent: np.ndarray   # |<A>|^2 per direction, in dC/dOmega units (lambda^2/2pi per sr)
    total: np.ndarray      # <|A|^2>
    se_coherent: np.ndarray
    se_total: np.ndarray

    @property
    def incoherent(self):
        return self.total - self.coherent


def run_pattern(config: EnsembleConfig, detuning: float, fld: ExcitationField, directions,
                atom: AtomModel = AtomModel(), workers: int = 1, k: float = K_ATOM) -> PatternStatistics:
    """Ensemble-coherent and ensemble-total far-field intensity per direction."""
    directions = np.asarray(directions, dtype=float)
    if directions.size == 0:
        raise ValueError("empty direction grid")
    obs = FarFieldObservable(directions, k)
    stats = run_observable(config, [detuning], (fld,), obs, atom, workers, k)
    scale = multipole.pattern_to_cross_section(k, fld.amplitude)
    m_dir = len(directions)

    def coherent(mean, fluct):
        return scale * np.sum(np.abs(mean[0].reshape(m_dir, 3)) ** 2, axis=-1)

    def total(mean, fluct):
        return coherent(mean, fluct) + scale * np.sum(fluct[0].reshape(m_dir, 3), axis=-1)

    return PatternStatistics(
        directions, coherent(stats.mean[0], stats.fluct[0]), total(stats.mean[0], stats.fluct[0]),
        stats.jackknife_se(coherent, 0), stats.jackknife_se(total, 0),
    )


def default_plane_wave(k: float = K_ATOM) -> ExcitationField:
    return single_plane_wave(1.0, k)
