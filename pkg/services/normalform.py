"""Adapted charts, the Foulon-Hasselblatt coefficient and templates.

A chart at x is built from the leaf parametrizations and the frame
(v_s, v_c, v_u) at x:

    i_x(xi, t, eta) = sigma_x(xi, eta) + (t + kappa(x) xi eta) v_c(sigma_x(xi, eta))

with sigma_x(xi, eta) the unstable leaf (parameter eta) based at the stable
leaf point of parameter xi ("su" surface), or the stable leaf based at the
unstable leaf point ("us" surface). Everything is batched over base points.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from models.errors import ChartError, ConfigError, GridError, JetError, SeriesRefused, TemplateError
from services.expressions import Expression
from services.jets import Jet2Map3, compose_jet2, invert_jet2, symmetrize
from services.leaves import DEFAULT_LEAF_DEPTH, FLAVORS, LEAF_RADIUS, LeafParam, LeafService
from services.maps import MapService, MapSpec
from services.splitting import DEFAULT_ITERATIONS, SplittingService, orient

logger = logging.getLogger(__name__)

FD_STEP = 1e-3
FD_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
FD_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
VERTICAL_TOLERANCE = 1e-6  # |n . a2| relative to |n| |a2| below which the plane counts as vertical
NOISE_FLOOR = 1e-7
DECAY_SLOPE = 2.5
SERIES_HALF_WIDTH = 0.05
SERIES_POINTS = 9
DECAY_LIMIT = 0.95
CHART_CONDITION_LIMIT = 1e10

SURFACES = ("su", "us")


@dataclass(frozen=True)
class ChartFamily:
    """How the chart surface and its center extension are chosen."""
    surface: str = "su"
    leaf_depth: int = DEFAULT_LEAF_DEPTH
    center_bend: Optional[str] = None
    fd_step: float = FD_STEP

    def __post_init__(self):
        if self.surface not in SURFACES:
            raise ConfigError(f"chart surface must be one of {SURFACES}", field="normalform.surface")

    def bend(self, spec: MapSpec, points: np.ndarray) -> np.ndarray:
        if not self.center_bend:
            return np.zeros(len(points))
        return Expression.parse(self.center_bend).evaluate(points, spec.params)


def _derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Five-point derivative; values (B, 4, ...) sampled at FD_OFFSETS * h."""
    return np.tensordot(FD_WEIGHTS, np.moveaxis(values, 1, 0), axes=1) / h


def _reference_for(vector: np.ndarray, ndim: int) -> np.ndarray:
    return vector.reshape(vector.shape[:1] + (1,) * (ndim - 2) + (3,))


def frame_vectors(
    spec: MapSpec,
    points,
    reference: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None,
    iterations: int = DEFAULT_ITERATIONS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(v_s, v_c, v_u) at cover points (B, ..., 3) in the coordinates of those points.

    reference holds (B, 3) vectors whose orientation the result follows.
    """
    points = np.asarray(points, dtype=float)
    shape = points.shape
    manifold = spec.manifold
    flat = points.reshape(-1, 3)
    reduced, _ = manifold.reduce(flat)
    D = manifold.deck_jacobian(manifold.deck_between(reduced, flat))
    split = SplittingService.compute_splitting(spec, reduced, iterations)
    scaled = SplittingService.scaled_frame(spec, reduced, split.e_s, split.e_c, split.e_u)
    out = []
    for i, v in enumerate(scaled):
        v = np.einsum("bij,bj->bi", D, v).reshape(shape)
        if reference is not None:
            v = orient(v, np.broadcast_to(_reference_for(reference[i], len(shape)), shape))
        out.append(v)
    return tuple(out)


def plane_normal(v_s: np.ndarray, v_u: np.ndarray) -> np.ndarray:
    n = np.cross(v_s, v_u)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass(frozen=True)
class AdaptedChart:
    """Second-order charts i_x at a batch of base points."""
    spec: MapSpec
    family: ChartFamily
    bases: np.ndarray
    frame: np.ndarray  # (B, 3, 3), columns v_s, v_c, v_u
    bend: np.ndarray
    s_leaf: LeafParam
    u_leaf: LeafParam
    hessians: np.ndarray  # (B, 3, 3, 3), [b, i] Hessian of component i in (xi, t, eta)

    def __len__(self) -> int:
        return len(self.bases)

    @property
    def v_s(self) -> np.ndarray:
        return self.frame[..., 0]

    @property
    def v_c(self) -> np.ndarray:
        return self.frame[..., 1]

    @property
    def v_u(self) -> np.ndarray:
        return self.frame[..., 2]

    @property
    def reference(self):
        return self.v_s, self.v_c, self.v_u

    def jet(self, index: int) -> Jet2Map3:
        return Jet2Map3(
            base=np.zeros(3),
            value=self.bases[index].copy(),
            jacobian=self.frame[index].copy(),
            hessians=self.hessians[index].copy(),
        )

    def leaf(self, flavor: str) -> LeafParam:
        return self.s_leaf if flavor == "s" else self.u_leaf

    def outer_leaves(self, flavor: str, offsets: np.ndarray) -> Tuple[LeafParam, np.ndarray]:
        """Leaves of `flavor` based at the other-axis points offsets (B, 4), and those base points."""
        inner = self.u_leaf if flavor == "s" else self.s_leaf
        bases = inner.evaluate(offsets)
        count = bases.shape[1]
        refs = self.reference
        frames = frame_vectors(self.spec, bases, refs)
        direction = frames[0] if flavor == "s" else frames[2]
        flat_bases = bases.reshape(-1, 3)
        ref = np.repeat(self.v_s if flavor == "s" else self.v_u, count, axis=0)
        leaf = LeafService.build(
            self.spec,
            flat_bases,
            flavor,
            self.family.leaf_depth,
            scale=np.linalg.norm(direction.reshape(-1, 3), axis=-1),
            reference=ref,
        )
        return leaf, bases

    def axis_frame(self, axis: str, params) -> Dict[str, np.ndarray]:
        """Points i_x on one axis and the chart frame (a1, a2, a3) there.

        axis "u" means points (0, 0, eta); axis "s" means (xi, 0, 0). params is (B, G).
        """
        params = np.asarray(params, dtype=float)
        h = self.family.fd_step
        leaf = self.leaf(axis)
        points = leaf.evaluate(params)
        v_s, v_c, v_u = frame_vectors(self.spec, points, self.reference)
        bend = (self.bend[:, None] * params)[..., None] * v_c
        # the surface direction transverse to this axis: along the other leaf family
        transverse_flavor = "s" if axis == "u" else "u"
        if (axis == "u") == (self.family.surface == "su"):
            offsets = h * np.broadcast_to(FD_OFFSETS, (len(self), 4))
            outer, _ = self.outer_leaves(axis, offsets)
            grid = np.repeat(params, 4, axis=0)
            samples = outer.evaluate(grid).reshape((len(self), 4) + params.shape[1:] + (3,))
            transverse = _derivative(samples, h)
        else:
            transverse = v_s if transverse_flavor == "s" else v_u
        transverse = transverse + bend
        if axis == "u":
            a1, a3 = transverse, v_u
        else:
            a1, a3 = v_s, transverse
        return {"points": points, "a1": a1, "a2": v_c, "a3": a3, "v_s": v_s, "v_u": v_u}


@dataclass(frozen=True)
class TemplateSample:
    bases: np.ndarray
    flavor: str
    grid: np.ndarray  # (B, G)
    values: np.ndarray  # (B, G)
    quadratic: np.ndarray  # (B, 2): coefficients of eta and eta^2
    fit_residual: np.ndarray  # (B,) relative

    def at(self, index: int) -> "TemplateSample":
        return TemplateSample(
            self.bases[index: index + 1], self.flavor, self.grid[index: index + 1], self.values[index: index + 1],
            self.quadratic[index: index + 1], self.fit_residual[index: index + 1],
        )


@dataclass(frozen=True)
class ResidualProfile:
    bases: np.ndarray
    flavor: str
    grid: np.ndarray
    residual: np.ndarray  # (B, G)
    off_diagonal: np.ndarray
    image_grid: np.ndarray
    slope: Optional[float]
    sup_residual: float

    @property
    def decays(self) -> bool:
        return self.sup_residual <= NOISE_FLOOR or (self.slope is not None and self.slope >= DECAY_SLOPE)


@dataclass(frozen=True)
class ChartChangeCheck:
    alpha_a: np.ndarray
    alpha_b: np.ndarray
    beta_x: np.ndarray
    beta_fx: np.ndarray
    twist: np.ndarray
    residual: float


@dataclass(frozen=True)
class SeriesComparison:
    grid: np.ndarray
    series: np.ndarray
    template: np.ndarray
    sup_difference: float
    template_sup: float
    decay_ratio: float
    terms: int
    quadratic: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _as_grid(grid, count: int) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = np.broadcast_to(grid, (count, len(grid)))
    return np.array(grid)


def _quadratic_fit(grid: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    coeffs = np.empty((len(grid), 2))
    rel = np.empty(len(grid))
    for b in range(len(grid)):
        basis = np.column_stack([grid[b], grid[b] ** 2])
        coeffs[b] = np.linalg.lstsq(basis, values[b], rcond=None)[0]
        scale = np.max(np.abs(values[b]))
        rel[b] = 0.0 if scale == 0 else float(np.max(np.abs(basis @ coeffs[b] - values[b])) / scale)
    return coeffs, rel


def _linear_part(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Derivative at 0 from a degree-4 fit through the origin."""
    out = np.empty(len(grid))
    for b in range(len(grid)):
        basis = np.column_stack([grid[b] ** k for k in range(1, 5)])
        out[b] = np.linalg.lstsq(basis, values[b], rcond=None)[0][0]
    return out


class NormalFormService:
    """Charts, FH coefficients, templates and the bootstrap series."""

    @staticmethod
    def build_adapted_chart(spec: MapSpec, points, family: Optional[ChartFamily] = None) -> AdaptedChart:
        family = family or ChartFamily()
        manifold = spec.manifold
        bases, _ = manifold.reduce(np.atleast_2d(np.asarray(points, dtype=float)))
        count = len(bases)
        v_s, v_c, v_u = frame_vectors(spec, bases)
        frame = np.stack([v_s, v_c, v_u], axis=-1)
        if np.any(np.linalg.cond(frame) > CHART_CONDITION_LIMIT):
            raise ChartError(f"{spec.name}: chart frame is ill-conditioned", details={"point": bases[0].tolist()})
        bend = family.bend(spec, bases)

        s_leaf = LeafService.build(spec, bases, "s", family.leaf_depth, np.linalg.norm(v_s, axis=-1), v_s)
        u_leaf = LeafService.build(spec, bases, "u", family.leaf_depth, np.linalg.norm(v_u, axis=-1), v_u)

        h = family.fd_step
        offsets = h * np.broadcast_to(FD_OFFSETS, (count, 4))
        along_s = s_leaf.evaluate(offsets)
        along_u = u_leaf.evaluate(offsets)
        fs = frame_vectors(spec, along_s, (v_s, v_c, v_u))
        fu = frame_vectors(spec, along_u, (v_s, v_c, v_u))

        hess = np.zeros((count, 3, 3, 3))
        hess[:, :, 0, 0] = 2.0 * s_leaf.derivative_jet()[2]
        hess[:, :, 2, 2] = 2.0 * u_leaf.derivative_jet()[2]
        d_vc_s = _derivative(fs[1], h)
        d_vc_u = _derivative(fu[1], h)
        mixed = _derivative(fs[2], h) if family.surface == "su" else _derivative(fu[0], h)
        mixed = mixed + bend[:, None] * v_c
        hess[:, :, 0, 1] = hess[:, :, 1, 0] = d_vc_s
        hess[:, :, 1, 2] = hess[:, :, 2, 1] = d_vc_u
        hess[:, :, 0, 2] = hess[:, :, 2, 0] = mixed
        logger.debug(f"{spec.name}: built {count} adapted charts ({family.surface}, depth {family.leaf_depth})")
        return AdaptedChart(
            spec=spec,
            family=family,
            bases=bases,
            frame=frame,
            bend=bend,
            s_leaf=s_leaf,
            u_leaf=u_leaf,
            hessians=symmetrize(hess),
        )

    @staticmethod
    def conjugated_jets(spec: MapSpec, chart: AdaptedChart, image_chart: AdaptedChart) -> List[Jet2Map3]:
        """2-jets at 0 of F_x = i_{f x}^{-1} o f o i_x."""
        out = []
        for b in range(len(chart)):
            try:
                inner = compose_jet2(MapService.step_jet2(spec, chart.bases[b]), chart.jet(b))
                out.append(compose_jet2(invert_jet2(image_chart.jet(b)), inner))
            except JetError as exc:
                raise ChartError(
                    f"{spec.name}: chart conjugation failed: {exc.message}",
                    details={"point": chart.bases[b].tolist()},
                ) from exc
        return out

    @staticmethod
    def chart_pair(spec: MapSpec, points, family: Optional[ChartFamily] = None) -> Tuple[AdaptedChart, AdaptedChart]:
        chart = NormalFormService.build_adapted_chart(spec, points, family)
        image = NormalFormService.build_adapted_chart(spec, MapService.apply(spec, chart.bases), family)
        return chart, image

    @staticmethod
    def chart_jets(spec: MapSpec, points, family: Optional[ChartFamily] = None) -> List[Jet2Map3]:
        chart, image = NormalFormService.chart_pair(spec, points, family)
        return NormalFormService.conjugated_jets(spec, chart, image)

    @staticmethod
    def multipliers(spec: MapSpec, chart: AdaptedChart, image_chart: AdaptedChart) -> np.ndarray:
        """Signed diagonal (lambda_s, lambda_c, lambda_u) of DF_x(0), shape (B, 3)."""
        J = MapService.transition_jacobians(spec, chart.bases, image_chart.bases)
        conj = np.linalg.solve(image_chart.frame, J @ chart.frame)
        return np.diagonal(conj, axis1=-2, axis2=-1).copy()

    @staticmethod
    def fh_coefficient(spec: MapSpec, points, family: Optional[ChartFamily] = None) -> np.ndarray:
        """d_13 F_{x,2}(0) for each base point."""
        jets = NormalFormService.chart_jets(spec, points, family)
        return np.array([j.hessians[1][0, 2] for j in jets])

    # Templates

    @staticmethod
    def _template_from_frame(frame: Dict[str, np.ndarray], flavor: str) -> np.ndarray:
        n = plane_normal(frame["v_s"], frame["v_u"])
        a2 = frame["a2"]
        across = frame["a1"] if flavor == "s" else frame["a3"]
        denominator = np.sum(n * a2, axis=-1)
        if np.any(np.abs(denominator) < VERTICAL_TOLERANCE * np.linalg.norm(a2, axis=-1)):
            raise TemplateError("E^s + E^u is within tolerance of vertical in the chart frame")
        return -np.sum(n * across, axis=-1) / denominator

    @staticmethod
    def sample_template_on(chart: AdaptedChart, flavor: str, grid) -> TemplateSample:
        if flavor not in FLAVORS:
            raise ConfigError(f"template flavor must be 's' or 'u', got {flavor!r}", field="normalform.flavor")
        grid = _as_grid(grid, len(chart))
        axis = "u" if flavor == "s" else "s"
        frame = chart.axis_frame(axis, grid)
        values = NormalFormService._template_from_frame(frame, flavor)
        values = np.where(grid == 0.0, 0.0, values)
        quadratic, rel = _quadratic_fit(grid, values)
        return TemplateSample(chart.bases, flavor, grid, values, quadratic, rel)

    @staticmethod
    def sample_template(spec: MapSpec, points, flavor: str, grid, family: Optional[ChartFamily] = None) -> TemplateSample:
        """Slope of E^s + E^u against the horizontal chart plane along the unstable (flavor s) or stable (flavor u) axis."""
        chart = NormalFormService.build_adapted_chart(spec, points, family)
        return NormalFormService.sample_template_on(chart, flavor, grid)

    @staticmethod
    def _equation_terms(spec: MapSpec, chart: AdaptedChart, image_chart: AdaptedChart, flavor: str, grid: np.ndarray):
        """Pointwise pieces of the template equation along one axis."""
        lam = NormalFormService.multipliers(spec, chart, image_chart)
        along = lam[:, 2] if flavor == "s" else lam[:, 0]
        image_grid = along[:, None] * grid
        if np.max(np.abs(image_grid)) > LEAF_RADIUS:
            raise GridError(
                f"image grid reaches {float(np.max(np.abs(image_grid))):.3g}, beyond the leaf radius {LEAF_RADIUS}",
                details={"radius": LEAF_RADIUS},
            )
        axis = "u" if flavor == "s" else "s"
        here = chart.axis_frame(axis, grid)
        there = image_chart.axis_frame(axis, image_grid)
        T_here = np.where(grid == 0.0, 0.0, NormalFormService._template_from_frame(here, flavor))
        T_there = np.where(image_grid == 0.0, 0.0, NormalFormService._template_from_frame(there, flavor))

        J = MapService.transition_jacobians(spec, here["points"], there["points"])
        target = np.stack([there["a1"], there["a2"], there["a3"]], axis=-1)
        moving = here["a1"] if flavor == "s" else here["a3"]
        pushed = np.linalg.solve(target, np.einsum("...ij,...j->...i", J, moving)[..., None])[..., 0]
        center = np.linalg.solve(target, np.einsum("...ij,...j->...i", J, here["a2"])[..., None])[..., 0]
        along_axis = pushed[..., 0] if flavor == "s" else pushed[..., 2]
        return {
            "multipliers": lam,
            "image_grid": image_grid,
            "T_here": T_here,
            "T_there": T_there,
            "r": pushed[..., 1],
            "d": along_axis,
            "c": center[..., 1],
        }

    @staticmethod
    def template_equation_residual(
        spec: MapSpec, points, flavor: str, grid, family: Optional[ChartFamily] = None
    ) -> ResidualProfile:
        """|r_x(eta) - (d_x(eta) T_{f x}(lambda eta) - c_x(eta) T_x(eta))| on the grid."""
        if flavor not in FLAVORS:
            raise ConfigError(f"template flavor must be 's' or 'u', got {flavor!r}", field="normalform.flavor")
        chart, image = NormalFormService.chart_pair(spec, points, family)
        grid = _as_grid(grid, len(chart))
        terms = NormalFormService._equation_terms(spec, chart, image, flavor, grid)
        residual = np.abs(terms["r"] - (terms["d"] * terms["T_there"] - terms["c"] * terms["T_here"]))
        residual = np.where(grid == 0.0, np.abs(terms["r"]), residual)
        sup = float(np.max(residual))
        slope = None
        mask = (grid != 0.0) & (residual > 0.0)
        if np.count_nonzero(mask) >= 3 and np.ptp(np.log(np.abs(grid[mask]))) > 0:
            slope = float(stats.linregress(np.log(np.abs(grid[mask])), np.log(residual[mask])).slope)
        logger.info(f"{spec.name}: {flavor}-template residual sup {sup:.3e}, log-log slope {slope}")
        return ResidualProfile(chart.bases, flavor, grid, residual, terms["r"], terms["image_grid"], slope, sup)

    @staticmethod
    def normalize_fh(spec: MapSpec, points, flavor: str = "s", grid=None, family: Optional[ChartFamily] = None):
        """Templates with their linear part removed and the matching off-diagonal functions."""
        grid = np.linspace(-SERIES_HALF_WIDTH, SERIES_HALF_WIDTH, SERIES_POINTS) if grid is None else grid
        chart, image = NormalFormService.chart_pair(spec, points, family)
        grid = _as_grid(grid, len(chart))
        terms = NormalFormService._equation_terms(spec, chart, image, flavor, grid)
        slope_here = _linear_part(grid, terms["T_here"])
        slope_there = _linear_part(terms["image_grid"], terms["T_there"])
        lam = terms["multipliers"]
        ls, lc, lu = lam[:, 0], lam[:, 1], lam[:, 2]
        along = lu if flavor == "s" else ls
        across = ls if flavor == "s" else lu
        linear = across * along * slope_there - lc * slope_here
        return {
            "grid": grid,
            "template": terms["T_here"] - slope_here[:, None] * grid,
            "off_diagonal": terms["r"] - linear[:, None] * grid,
            "multipliers": lam,
            "slope": slope_here,
        }

    @staticmethod
    def reconstruct_template_series(
        spec: MapSpec,
        point,
        terms: int,
        grid=None,
        family: Optional[ChartFamily] = None,
    ) -> SeriesComparison:
        """Telescoped series of quadratic fits of the normalized off-diagonal along the backward orbit."""
        grid = np.linspace(-SERIES_HALF_WIDTH, SERIES_HALF_WIDTH, SERIES_POINTS) if grid is None else np.asarray(grid, float)
        point = np.asarray(point, dtype=float)
        orbit = MapService.orbit_points(spec, point, -terms)  # orbit[l] = f^{-l}(x)
        normalized = NormalFormService.normalize_fh(spec, orbit, "s", grid, family)
        template = normalized["template"][0]
        template_sup = float(np.max(np.abs(template)))
        if terms == 0:
            return SeriesComparison(grid, np.zeros_like(grid), template, template_sup, template_sup, 0.0, 0)

        lam = normalized["multipliers"][1:]  # at f^{-l}(x), l = 1..terms
        ls, lc, lu = lam[:, 0], lam[:, 1], lam[:, 2]
        off = normalized["off_diagonal"][1:]
        quadratic = off @ grid ** 2 / np.sum(grid ** 4)

        coefficient = np.cumprod(np.concatenate([[1.0], lc[:-1]])) / np.cumprod(ls)
        contraction = np.cumprod(1.0 / lu)
        size = np.abs(coefficient) * contraction ** 2
        ratio = float(np.max(size[1:] / size[:-1])) if terms > 1 else 0.0
        if ratio > DECAY_LIMIT:
            raise SeriesRefused(
                f"series terms decay too slowly (ratio {ratio:.3f} > {DECAY_LIMIT})",
                details={"ratio": ratio},
            )
        series = np.sum((coefficient * quadratic * contraction ** 2)[:, None] * grid[None, :] ** 2, axis=0)
        difference = float(np.max(np.abs(series - template)))
        logger.info(f"{spec.name}: template series with {terms} terms differs by {difference:.3e}")
        return SeriesComparison(grid, series, template, difference, template_sup, ratio, terms, quadratic)

    @staticmethod
    def chart_change_check(
        spec: MapSpec, points, family_a: ChartFamily, family_b: ChartFamily
    ) -> ChartChangeCheck:
        """alpha_B - alpha_A against lambda_x beta(f x) - beta(x), beta read off the chart-change jets."""
        chart_a, image_a = NormalFormService.chart_pair(spec, points, family_a)
        chart_b = NormalFormService.build_adapted_chart(spec, chart_a.bases, family_b)
        image_b = NormalFormService.build_adapted_chart(spec, image_a.bases, family_b)
        alpha_a = np.array([j.hessians[1][0, 2] for j in NormalFormService.conjugated_jets(spec, chart_a, image_a)])
        alpha_b = np.array([j.hessians[1][0, 2] for j in NormalFormService.conjugated_jets(spec, chart_b, image_b)])

        def change(a: AdaptedChart, b: AdaptedChart) -> np.ndarray:
            return np.array([
                compose_jet2(invert_jet2(a.jet(i)), b.jet(i)).hessians[1][0, 2] for i in range(len(a))
            ])

        lam_x = NormalFormService.multipliers(spec, chart_a, image_a)
        second = MapService.apply(spec, image_a.bases)
        frame_2 = np.stack(frame_vectors(spec, second), axis=-1)
        J = MapService.transition_jacobians(spec, image_a.bases, second)
        lam_c_fx = np.linalg.solve(frame_2, J @ image_a.frame)[:, 1, 1]

        beta_x = -lam_x[:, 1] * change(chart_a, chart_b)
        beta_fx = -lam_c_fx * change(image_a, image_b)
        twist = lam_x[:, 0] * lam_x[:, 2] / lam_c_fx
        residual = float(np.max(np.abs((alpha_b - alpha_a) - (twist * beta_fx - beta_x))))
        logger.info(f"{spec.name}: chart-change identity residual {residual:.3e}")
        return ChartChangeCheck(alpha_a, alpha_b, beta_x, beta_fx, twist, residual)
