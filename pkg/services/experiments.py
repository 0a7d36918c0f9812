"""Experiment pipelines and the runner that records their checks.

Each pipeline is a function of a PipelineRun. It registers checks through
PipelineRun.measure, which times the check and turns any lab error into a
failed check so the remaining checks still run.
"""
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from sqlalchemy.exc import SQLAlchemyError

from models import database
from models.config import ExperimentConfig
from models.errors import LabError
from models.responses import ErrorCode
from models.schemas import CheckResult, Report, ResultTable, RunSummary
from services.cocycles import AdditiveCocycle, CocycleService, TwistedCocycle
from services.contact import DEGENERACY, ContactService
from services.geometry import GeometryService
from services.heisenberg import HeisenbergService
from services.leaves import FLAVORS, LeafService
from services.maps import MapService, MapSpec, builtin_map, describe
from services.normalform import ChartFamily, NormalFormService
from services.periodic import PeriodicService
from services.regularity import RegularityService, sample_pairs
from services.reports import ReportWriter, table
from services.splitting import SplittingService
from services.worker_pool import WorkerPool, keyed_rng

logger = logging.getLogger(__name__)

GOLDEN_LOG = float(np.log((3 + np.sqrt(5)) / 2))
KNOWN_UNSTABLE_EXPONENTS = {"cat3": GOLDEN_LOG, "skew": GOLDEN_LOG, "L": GOLDEN_LOG}
INVARIANCE_POINTS = 100
FINITE_TIME_POINTS = 20
FINITE_TIME_STEPS = (1, 10)
VOLUME_BOUND = 10.0
ADDITIVITY_STEPS = (3, 2)
TWIST_STEPS = 3
ROTATION_HALF = 0.5
CONTINUITY_FACTOR = 2.0
CONTINUITY_RANGE = 1e-3
CENTER_INVARIANCE = 1e-6

# keyed stream indices, one per use so checks never share random numbers
STREAM_STRUCTURE, STREAM_VOLUME, STREAM_FORM, STREAM_SPLITTING = 1, 2, 3, 4
STREAM_LYAPUNOV, STREAM_PAIRS, STREAM_CHARTS, STREAM_CONTACT = 10, 20, 30, 40

CheckOutcome = Union[CheckResult, List[CheckResult]]


class PipelineRun:
    """Checks, tables and summaries of one run, collected in pipeline order."""

    def __init__(self, config: ExperimentConfig, spec: MapSpec):
        self.config = config
        self.spec = spec
        self.seed = config.experiment.seed
        self.tol = config.tolerances
        self.pool = WorkerPool(config.experiment.workers)
        self.checks: List[CheckResult] = []
        self.tables: List[ResultTable] = []
        self.summary: Dict[str, Any] = {}
        self.timings: Dict[str, float] = {}
        self.log_extra = {"experiment_id": config.experiment.id}

    def rng(self, stream: int) -> np.random.Generator:
        return keyed_rng(self.seed, stream)

    def sample(self, stream: int, count: Optional[int] = None) -> np.ndarray:
        return self.spec.manifold.random_points(self.rng(stream), count or self.config.experiment.samples)

    def add_table(self, name: str, columns: Sequence[str], rows) -> None:
        self.tables.append(table(name, columns, rows))

    def measure(self, name: str, func: Callable[[], CheckOutcome]) -> None:
        """Run func and record its checks; a raised lab error becomes a failed check called name."""
        start = time.perf_counter()
        try:
            outcome = func()
        except LabError as exc:
            logger.warning(f"{name} raised {exc.code.value}: {exc.message}", extra=self.log_extra)
            outcome = CheckResult.failed(name, exc.code.value, exc.message)
        except (np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
            logger.error(f"{name} failed numerically: {exc}", extra=self.log_extra)
            outcome = CheckResult.failed(name, ErrorCode.INTERNAL_ERROR.value, str(exc))
        self.timings[name] = time.perf_counter() - start
        for check in outcome if isinstance(outcome, list) else [outcome]:
            verdict = "pass" if check.passed else "FAIL"
            logger.log(
                logging.INFO if check.passed else logging.WARNING,
                f"{check.name}: {verdict} (measured {check.measured}, tolerance {check.tolerance})",
                extra=self.log_extra,
            )
            self.checks.append(check)


def _chart_family(settings, alternate: bool = False) -> ChartFamily:
    if alternate:
        return ChartFamily(settings.alternate_surface, settings.leaf_depth, settings.alternate_bend or None)
    return ChartFamily(settings.surface, settings.leaf_depth, settings.center_bend or None)


def _certificate_check(run: PipelineRun, name: str) -> CheckResult:
    s = run.config.splitting
    sample = run.sample(STREAM_SPLITTING, min(run.config.experiment.samples, INVARIANCE_POINTS))
    cert = SplittingService.certify_partial_hyperbolicity(
        run.spec, sample, k_max=s.k_max, r=s.bunching_r, iterations=s.iterations, rng=run.rng(STREAM_SPLITTING + 100)
    )
    run.summary["certificate"] = {
        "k": cert.k,
        "margin_s": cert.margin_s,
        "margin_u": cert.margin_u,
        "sample_size": cert.sample_size,
        "bunched": cert.bunching.bunched if cert.bunching else None,
        "strongly_bunched": cert.bunching.strongly_bunched if cert.bunching else None,
        "bunching_margin": cert.bunching.margin if cert.bunching else None,
    }
    return CheckResult.flag(name, True, measured=min(cert.margin_s, cert.margin_u), message=f"k={cert.k}")


# Pipelines


def verify(run: PipelineRun) -> None:
    """Structural identities of the map, the declared forms and the splitting."""
    spec, tol, samples = run.spec, run.tol, run.config.experiment.samples

    run.measure("maps.deck_commutation", lambda: CheckResult.at_most(
        "maps.deck_commutation", MapService.deck_commutation_residual(spec, run.rng(STREAM_STRUCTURE), samples), tol.structure))
    run.measure("maps.round_trip", lambda: CheckResult.at_most(
        "maps.round_trip", MapService.round_trip_residual(spec, run.rng(STREAM_STRUCTURE + 100), samples), tol.structure))
    if spec.volume_preserving:
        run.measure("maps.volume", lambda: CheckResult.at_most(
            "maps.volume", MapService.volume_residual(spec, run.rng(STREAM_VOLUME), samples), tol.volume))

    form = spec.contact_form
    if form is not None:
        points = run.sample(STREAM_FORM)
        run.measure("contact.invariance", lambda: CheckResult.at_most(
            "contact.invariance", ContactService.invariance_defect(spec, form, points), tol.contact))
        run.measure("geometry.form_deck", lambda: CheckResult.at_most(
            "geometry.form_deck",
            GeometryService.deck_compatibility_residual(form, spec.manifold, run.rng(STREAM_FORM + 100), samples),
            tol.structure,
        ))

    def invariance():
        points = run.sample(STREAM_SPLITTING, min(samples, INVARIANCE_POINTS))
        angles = SplittingService.invariance_residual(spec, points, run.config.splitting.iterations)
        run.summary["invariance"] = angles
        return [
            CheckResult.at_most("splitting.invariance", max(angles["s"], angles["u"]), tol.invariance),
            CheckResult.at_most("splitting.center_invariance", angles["c"], CENTER_INVARIANCE),
        ]

    run.measure("splitting.invariance", invariance)
    run.measure("splitting.certificate", lambda: _certificate_check(run, "splitting.certificate"))

    if spec.volume_preserving and spec.base is not None:
        run.measure("cocycles.livshits", lambda: _livshits(run))


def _livshits(run: PipelineRun) -> CheckResult:
    spec = run.spec
    orbits = []
    for period in range(1, run.config.normalform.max_period + 1):
        orbits.extend(o for o in PeriodicService.find_periodic_orbits(spec, period) if o.period == period)
    verdict = CocycleService.livshits_sign_test(AdditiveCocycle.log_det(spec), orbits, run.tol.livshits)
    scaled = [abs(s) / o.period for s, o in zip(verdict.sums, orbits)]
    run.add_table(
        "livshits",
        ["period", "x", "y", "z", "log_det_sum"],
        ([o.period, *o.points[0], s] for o, s in zip(orbits, verdict.sums)),
    )
    run.summary["livshits"] = {"verdict": verdict.verdict, "orbits": len(orbits), "worst_period": verdict.worst_period}
    return CheckResult.at_most("cocycles.livshits", max(scaled), run.tol.livshits)


def exponents(run: PipelineRun) -> None:
    """Lyapunov exponents, finite-time exponents and the domination certificate."""
    spec, tol, s = run.spec, run.tol, run.config.splitting

    def lyapunov():
        point = run.sample(STREAM_LYAPUNOV, 1)[0]
        rep = SplittingService.lyapunov_exponents(
            spec, point, N=s.lyapunov_steps, renorm_every=s.renorm_every, window=s.window,
            splitting_iterations=s.iterations,
        )
        chi_s, chi_c, chi_u = rep.chi
        run.summary["lyapunov"] = {
            "point": rep.point.tolist(), "chi": list(rep.chi), "stderr": list(rep.stderr),
            "mean_log_det": rep.mean_log_det, "window": rep.window,
            "window_sup": rep.window_sup, "window_inf": rep.window_inf,
        }
        checks = [CheckResult.flag("exponents.ordering", chi_s < chi_c < chi_u, measured=chi_u - chi_s)]
        if spec.volume_preserving:
            checks.append(CheckResult.at_most("exponents.sum", abs(chi_s + chi_c + chi_u), tol.exponent_sum))
        if spec.name in KNOWN_UNSTABLE_EXPONENTS:
            checks.append(CheckResult.at_most("exponents.unstable", abs(chi_u - KNOWN_UNSTABLE_EXPONENTS[spec.name]), tol.lyapunov))
        if spec.contact_form is not None:
            checks.append(CheckResult.at_most("exponents.center", abs(chi_c), tol.center))
        return checks

    def finite_time():
        points = run.sample(STREAM_LYAPUNOV + 1, FINITE_TIME_POINTS)
        rows = []
        volume_bound = 0.0
        for n in FINITE_TIME_STEPS:
            ft = SplittingService.finite_time_exponents(spec, points, n, s.iterations)
            rows.extend([i, *points[i], n, ft.lambda_s[i], ft.lambda_c[i], ft.lambda_u[i]] for i in range(len(points)))
            if spec.volume_preserving:
                log_sum = np.log(ft.lambda_s) + np.log(ft.lambda_c) + np.log(ft.lambda_u)
                distortion = SplittingService.volume_distortion(spec, points, n, s.iterations)
                volume_bound = max(volume_bound, float(np.max(np.abs(log_sum - distortion))))
        run.add_table("finite_time", ["point", "x", "y", "z", "n", "lambda_s", "lambda_c", "lambda_u"], rows)

        m, n = ADDITIVITY_STEPS
        head = points[:5]
        whole = SplittingService.finite_time_exponents(spec, head, m + n, s.iterations)
        first = SplittingService.finite_time_exponents(spec, head, n, s.iterations)
        rest = SplittingService.finite_time_exponents(spec, MapService.iterate(spec, head, n), m, s.iterations)
        worst = 0.0
        for key in ("lambda_s", "lambda_c", "lambda_u"):
            total = getattr(whole, key)
            worst = max(worst, float(np.max(np.abs(total - getattr(rest, key) * getattr(first, key)) / total)))
        checks = [CheckResult.at_most("exponents.additivity", worst, tol.additivity)]
        if spec.volume_preserving:
            run.summary["volume_bound"] = volume_bound
            checks.append(CheckResult.at_most("exponents.volume_bound", volume_bound, VOLUME_BOUND))
        return checks

    run.measure("exponents.lyapunov", lyapunov)
    run.measure("exponents.finite_time", finite_time)
    run.measure("exponents.certificate", lambda: _certificate_check(run, "exponents.certificate"))


def regularity(run: PipelineRun) -> None:
    """Hoelder exponent and Lipschitz constant of E^s + E^u."""
    spec, tol = run.spec, run.tol

    def estimate():
        pairs = sample_pairs(spec, run.rng(STREAM_PAIRS), run.config.splitting.regularity_pairs)
        rep = RegularityService.estimate_plane_regularity(spec, seed=run.seed, pool=run.pool, pairs=pairs)
        run.summary["regularity"] = {
            "holder_exponent": rep.holder_exponent, "lipschitz_constant": rep.lipschitz_constant,
            "fit_r2": rep.fit_r2, "slope": rep.slope,
            "confidence": list(rep.confidence) if rep.confidence else None,
            "pairs": rep.pairs, "fitted_pairs": rep.fitted_pairs,
        }
        if spec.contact_form is not None:
            analytic = RegularityService.kernel_normal_lipschitz(spec.contact_form, pairs.p)
            run.summary["regularity"]["analytic_lipschitz"] = analytic
            factor = tol.lipschitz_factor
            return CheckResult.within("regularity.lipschitz", rep.lipschitz_constant / analytic, 1.0 / factor, factor)
        if rep.holder_exponent is None:
            return CheckResult.at_most("regularity.lipschitz", rep.lipschitz_constant, tol.constant_field)
        return CheckResult.within("regularity.holder", rep.holder_exponent, 0.0, 1.0)

    run.measure("regularity.estimate", estimate)


def templates(run: PipelineRun) -> None:
    """Template functional equations, leaf conjugacies and the bootstrap series."""
    spec, tol, nf = run.spec, run.tol, run.config.normalform
    family = _chart_family(nf)
    points = run.sample(STREAM_CHARTS, nf.points)
    grid = np.linspace(-nf.grid_radius, nf.grid_radius, nf.grid_points)

    for flavor in FLAVORS:
        def leaf(flavor=flavor):
            residual = LeafService.conjugacy_residual(spec, points, grid, flavor, nf.leaf_depth)
            return CheckResult.at_most(f"templates.leaf_{flavor}", residual, tol.leaf)

        def residual(flavor=flavor):
            profile = NormalFormService.template_equation_residual(spec, points, flavor, grid, family)
            run.add_table(
                f"template_{flavor}",
                ["point", "eta", "residual", "off_diagonal"],
                ([b, profile.grid[b, g], profile.residual[b, g], profile.off_diagonal[b, g]]
                 for b in range(len(points)) for g in range(profile.grid.shape[1])),
            )
            name = f"templates.{flavor}_residual"
            if profile.sup_residual <= tol.template_floor:
                return CheckResult.at_most(name, profile.sup_residual, tol.template_floor)
            if profile.slope is None:
                return CheckResult.failed(name, ErrorCode.NF_GRID_MISALIGNED.value, "too few nonzero residuals for a slope")
            return CheckResult.at_least(name, profile.slope, tol.template_slope)

        run.measure(f"templates.leaf_{flavor}", leaf)
        run.measure(f"templates.{flavor}_residual", residual)

    def series():
        comparison = NormalFormService.reconstruct_template_series(spec, points[0], nf.series_terms, grid, family)
        run.add_table("template_series", ["eta", "series", "template"], zip(comparison.grid, comparison.series, comparison.template))
        run.summary["series"] = {
            "terms": comparison.terms, "decay_ratio": comparison.decay_ratio, "template_sup": comparison.template_sup,
        }
        return CheckResult.at_most("templates.series", comparison.sup_difference, tol.series)

    run.measure("templates.series", series)


def fh(run: PipelineRun) -> None:
    """Foulon-Hasselblatt cocycle: periodic obstructions, chart changes and the twist."""
    spec, tol, nf = run.spec, run.tol, run.config.normalform
    family_a, family_b = _chart_family(nf), _chart_family(nf, alternate=True)
    points = run.sample(STREAM_CHARTS, nf.points)

    def obstructions():
        orbits = PeriodicService.find_periodic_orbits(spec, nf.obstruction_period)
        cocycle_a = TwistedCocycle.foulon_hasselblatt(spec, family_a)
        cocycle_b = TwistedCocycle.foulon_hasselblatt(spec, family_b)
        rows, values_a, gaps = [], [], []
        for orbit in orbits:
            a = CocycleService.periodic_obstruction(cocycle_a, orbit, tol.twist)
            b = CocycleService.periodic_obstruction(cocycle_b, orbit, tol.twist)
            rows.append([orbit.period, *orbit.points[0], a.value, b.value, a.twist_product, a.well_defined])
            if a.well_defined:
                values_a.append(abs(a.value))
                gaps.append(abs(a.value - b.value))
        run.add_table("obstructions", ["period", "x", "y", "z", "value_a", "value_b", "twist_product", "well_defined"], rows)
        if not gaps:
            return CheckResult.failed("fh.class_invariance", ErrorCode.COC_NO_ORBITS.value, "no orbit with twist product 1")
        checks = [CheckResult.at_most("fh.class_invariance", max(gaps), tol.obstruction)]
        if spec.contact_form is not None:
            checks.append(CheckResult.at_most("fh.obstruction", max(values_a), tol.obstruction))
        return checks

    def chart_change():
        check = NormalFormService.chart_change_check(spec, points, family_a, family_b)
        run.summary["chart_change"] = {"alpha_a": check.alpha_a.tolist(), "alpha_b": check.alpha_b.tolist()}
        return CheckResult.at_most("fh.chart_change", check.residual, tol.chart_change)

    def twist():
        result = CocycleService.fh_twist_product(spec, points[0], TWIST_STEPS)
        return CheckResult.at_most("fh.twist_product", abs(result["product"] - result["ratio"]) / abs(result["ratio"]), tol.twist)

    def coboundary_fit():
        fit = CocycleService.fit_twisted_coboundary(
            TwistedCocycle.foulon_hasselblatt(spec, family_a), spec, points[0], nf.fit_steps
        )
        run.summary["coboundary_fit"] = {"residual": fit.residual, "generator_sup": fit.generator_sup, "modes": len(fit.modes)}
        return CheckResult.at_most("fh.coboundary_fit", fit.residual, tol.obstruction)

    run.measure("fh.class_invariance", obstructions)
    run.measure("fh.chart_change", chart_change)
    run.measure("fh.twist_product", twist)
    if spec.contact_form is not None:
        run.measure("fh.coboundary_fit", coboundary_fit)


def contact(run: PipelineRun) -> None:
    """f* alpha = rho alpha, the density identity and the Reeb field."""
    spec, tol = run.spec, run.tol

    def report():
        points = run.sample(STREAM_CONTACT)
        rep = ContactService.contact_report(spec, points)
        run.summary["contact"] = rep.summary()
        run.add_table(
            "contact",
            ["x", "y", "z", "rho", "h", "center_angle"],
            ([*rep.points[i], rep.rho[i], rep.h[i], None if rep.center_angles is None else rep.center_angles[i]]
             for i in range(len(rep.points))),
        )
        checks = [
            CheckResult.at_most("contact.pullback", rep.rho_residual, tol.rho),
            CheckResult.at_most("contact.hrho", rep.hrho_residual, tol.hrho),
            CheckResult.at_most("contact.volume_identity", rep.volume_identity_residual, tol.hrho),
            CheckResult.at_most("contact.reeb_solver", rep.reeb_residual, tol.reeb_solver),
            CheckResult.flag("contact.frobenius", rep.frobenius == "contact", measured=float(np.min(np.abs(rep.h)))),
        ]
        if spec.volume_preserving and np.ptp(rep.h) <= tol.rho:
            checks.append(CheckResult.at_most("contact.rho_unit", float(np.max(np.abs(rep.rho - 1.0))), tol.rho))
        if rep.center_angles is not None:
            checks.append(CheckResult.at_most("contact.reeb_center", float(np.max(rep.center_angles)), tol.reeb))
        return checks

    def transversal():
        center = run.sample(STREAM_CONTACT + 1, 1)[0]
        split = SplittingService.compute_splitting(spec, center)
        value = ContactService.transversal_nondegeneracy(spec.contact_form, center, split.e_s, split.e_u)
        return CheckResult.at_least("contact.transversal", value, DEGENERACY)

    run.measure("contact.report", report)
    if spec.contact_form is not None:
        run.measure("contact.transversal", transversal)


def sugap(run: PipelineRun) -> None:
    """Gap of su quadrilaterals against their size."""
    spec, tol, c = run.spec, run.tol, run.config.contact

    def sweep():
        result = ContactService.su_gap_sweep(spec, np.asarray(c.base_point), c.sizes)
        run.add_table(
            "su_gap",
            ["size", "gap", "loop_integral", "stable_parameter"],
            ([g.size, g.gap, g.loop_integral, g.stable_parameter] for g in result["gaps"]),
        )
        run.summary["su_gap_slope"] = result["slope"]
        if spec.contact_form is None:
            return CheckResult.at_most("sugap.integrable", max(g.gap for g in result["gaps"]), tol.gap)
        if result["slope"] is None:
            return CheckResult.failed("sugap.slope", ErrorCode.SPLIT_DEGENERATE_FIT.value, "vanishing gap, slope undefined")
        return CheckResult.within("sugap.slope", result["slope"], tol.slope_low, tol.slope_high)

    run.measure("sugap.sweep", sweep)


def heisenberg(run: PipelineRun) -> None:
    """Rotation number of the fiber return over the continued period-2 orbit."""
    spec, tol, h = run.spec, run.tol, run.config.heisenberg

    def periodic_data():
        defect = HeisenbergService.periodicity_defect(spec)
        result = HeisenbergService.continuation_defect(h.defect_eps, spec)
        run.add_table("continuation", ["eps", "defect"], zip(result["eps"], result["defects"]))
        return [
            CheckResult.at_most("heisenberg.periodicity", defect, tol.periodicity),
            CheckResult.within("heisenberg.continuation_slope", result["slope"], tol.slope_low, tol.slope_high),
        ]

    def rotation():
        zero = HeisenbergService.rotation_number(0.0, spec)
        estimate = HeisenbergService.rotation_derivative_at_zero(h.step, spec)
        curve = HeisenbergService.rotation_curve(h.eps_grid, spec)
        run.add_table(
            "rotation_curve",
            ["eps", "p_x", "p_y", "R_lift", "R"],
            ([r.eps, r.p[0], r.p[1], r.lift, r.value] for r in curve),
        )
        run.summary["rotation"] = {
            "R0": zero.value, "R0_lift": zero.lift,
            "derivative": estimate.estimate, "closed_form": estimate.closed_form, "step": estimate.step,
        }
        checks = [
            CheckResult.at_most("heisenberg.rotation_zero", abs(zero.value - ROTATION_HALF), tol.rotation_zero),
            CheckResult.at_most("heisenberg.derivative", estimate.error, tol.rotation),
        ]
        near = [r for r in curve if 0 < abs(r.eps) <= CONTINUITY_RANGE]
        if near:
            ratio = max(abs(r.lift - zero.lift) / (abs(r.eps) * abs(estimate.estimate)) for r in near)
            checks.append(CheckResult.at_most("heisenberg.continuity", ratio, CONTINUITY_FACTOR))
        return checks

    def richardson():
        diag = HeisenbergService.richardson_diagnostic(h.richardson_steps, spec)
        run.add_table("richardson", ["step", "error", "ratio"], zip(diag["steps"], diag["errors"], diag["ratios"]))
        run.summary["richardson_spread"] = diag["spread"]
        return CheckResult.flag("heisenberg.richardson", True, measured=diag["spread"], message="diagnostic only")

    def fiber():
        spreads = [HeisenbergService.fiber_return(eps, spec=spec)["spread"] for eps in h.eps_grid]
        return CheckResult.at_most("heisenberg.fiber_return", max(spreads), tol.fiber)

    run.measure("heisenberg.periodic_data", periodic_data)
    run.measure("heisenberg.rotation", rotation)
    run.measure("heisenberg.richardson", richardson)
    run.measure("heisenberg.fiber_return", fiber)


PIPELINES: Dict[str, Callable[[PipelineRun], None]] = {
    "verify": verify,
    "exponents": exponents,
    "regularity": regularity,
    "templates": templates,
    "fh": fh,
    "contact": contact,
    "sugap": sugap,
    "heisenberg": heisenberg,
}


@dataclass(frozen=True)
class RunOutcome:
    report: Report
    path: Path
    wall_clock_seconds: float
    run_id: Optional[int]

    @property
    def exit_code(self) -> int:
        if self.report.passed:
            return 0
        return 3 if self.report.numerical_failure() else 1


class ExperimentService:
    """Runs pipelines, writes their reports and records them in the run store."""

    @staticmethod
    def resolve_map(config: ExperimentConfig) -> MapSpec:
        if config.experiment.pipeline == "heisenberg":
            if config.map.name != "F":
                logger.info("heisenberg pipeline runs on the F family", extra={"experiment_id": config.experiment.id})
            return builtin_map("F", config.params)
        return config.map_spec()

    @staticmethod
    def run_experiment(config: ExperimentConfig, persist: bool = True) -> RunOutcome:
        """Execute config.experiment.pipeline, write the report and return it with its exit code."""
        exp = config.experiment
        spec = ExperimentService.resolve_map(config)
        run = PipelineRun(config, spec)
        logger.info(f"running {exp.pipeline} on {spec.name} with seed {exp.seed}", extra=run.log_extra)
        start = time.perf_counter()
        PIPELINES[exp.pipeline](run)
        elapsed = time.perf_counter() - start

        report = Report(
            experiment_id=exp.id,
            pipeline=exp.pipeline,
            map=describe(spec),
            seed=exp.seed,
            config=config.model_dump(mode="json"),
            checks=run.checks,
            tables=run.tables,
            summary=run.summary,
        )
        path = ReportWriter.write(report, exp.output_dir, exp.format)
        ReportWriter.write_timing(path.parent, elapsed, run.timings)
        run_id = ExperimentService.record_run(config, report, path, elapsed) if persist else None
        logger.info(
            f"{exp.pipeline}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks passed in {elapsed:.2f}s",
            extra=run.log_extra,
        )
        return RunOutcome(report, path, elapsed, run_id)

    @staticmethod
    def record_run(config: ExperimentConfig, report: Report, path: Path, elapsed: float) -> Optional[int]:
        """One experiment_runs row and one check_results row per check; store failures are logged, not raised."""
        db = database.get_session(config.experiment.output_dir)
        try:
            row = database.ExperimentRun(
                experiment_id=report.experiment_id,
                pipeline=report.pipeline,
                map_name=report.map["name"],
                seed=report.seed,
                passed=report.passed,
                report_path=str(path),
                config_json=json.dumps(report.config, sort_keys=True),
                wall_clock_seconds=elapsed,
            )
            for check in report.checks:
                row.checks.append(database.CheckResult(
                    name=check.name,
                    measured=check.measured,
                    tolerance=check.tolerance,
                    passed=check.passed,
                    error_code=check.error_code,
                ))
            db.add(row)
            db.commit()
            db.refresh(row)
            return row.id
        except SQLAlchemyError as exc:
            db.rollback()
            logger.error(f"{ErrorCode.DATABASE_ERROR.value}: could not record run: {exc}", extra={"experiment_id": report.experiment_id})
            return None
        finally:
            db.close()

    @staticmethod
    def list_runs(output_dir, limit: int = 20) -> List[RunSummary]:
        """Most recent runs first."""
        db = database.get_session(output_dir)
        try:
            rows = (
                db.query(database.ExperimentRun)
                .order_by(database.ExperimentRun.id.desc())
                .limit(limit)
                .all()
            )
            return [RunSummary.model_validate(r) for r in rows]
        finally:
            db.close()
