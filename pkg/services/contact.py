"""Contact-structure diagnostics and the su-quadrilateral gap."""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import linalg, stats

from models.errors import ConfigError, DegenerateFormError, NewtonError, PreconditionError, TransversalityError
from services.geometry import GeometryService, OneForm, VolumeForm
from services.leaves import DEFAULT_LEAF_DEPTH, LeafService
from services.maps import MapService, MapSpec
from services.normalform import frame_vectors
from services.splitting import SplittingService, line_angle

logger = logging.getLogger(__name__)

DEGENERACY = 1e-9  # |h| below this counts as integrable
VOLUME_TOLERANCE = 1e-9
TRANSVERSAL_ANGLE = 0.1
MAX_GAP_SIZE = 0.05
CORNER_FACTOR = 1.5
NODES_PER_SIZE = 100
GAP_NEWTON_TOLERANCE = 1e-10
GAP_NEWTON_MAX_ITERATIONS = 50
GAP_FD_STEP = 1e-7

INTEGRABLE = "integrable"
CONTACT = "contact"
MIXED = "mixed"


@dataclass(frozen=True)
class PullbackRatio:
    points: np.ndarray
    rho: np.ndarray
    residual: float


@dataclass(frozen=True)
class ReebSample:
    points: np.ndarray
    vectors: np.ndarray
    normalization_residual: float
    kernel_residual: float


@dataclass(frozen=True)
class SuGap:
    size: float
    gap: float
    loop_integral: Optional[float]
    stable_parameter: float
    corners: Dict[str, np.ndarray]


@dataclass(frozen=True)
class ContactReport:
    map_name: str
    form: str
    points: np.ndarray
    rho: np.ndarray
    rho_residual: float
    h: np.ndarray
    hrho_residual: float
    volume_identity_residual: float
    reeb: np.ndarray
    reeb_residual: float
    center_angles: Optional[np.ndarray]
    frobenius: str

    def summary(self) -> Dict[str, object]:
        return {
            "map": self.map_name,
            "form": self.form,
            "samples": int(len(self.points)),
            "rho_residual": self.rho_residual,
            "rho_deviation": float(np.max(np.abs(self.rho - 1.0))),
            "h_min": float(np.min(self.h)),
            "h_max": float(np.max(self.h)),
            "hrho_residual": self.hrho_residual,
            "volume_identity_residual": self.volume_identity_residual,
            "reeb_residual": self.reeb_residual,
            "max_center_angle": None if self.center_angles is None else float(np.max(self.center_angles)),
            "frobenius": self.frobenius,
        }


def _pulled(spec: MapSpec, form: OneForm, points: np.ndarray, n: int = 1):
    """Coefficients of (f^n)* alpha at points, with f^n x as reduced representatives."""
    current = points
    jac = np.broadcast_to(np.eye(3), points.shape[:-1] + (3, 3))
    for _ in range(n):
        current, step = MapService.step(spec, current)
        jac = step @ jac
    return current, np.einsum("...i,...ij->...j", form.coefficients(current), jac)


class ContactService:
    """f* alpha = rho alpha, the density h and the Reeb field."""

    @staticmethod
    def pullback_ratio(spec: MapSpec, form: OneForm, points, n: int = 1) -> PullbackRatio:
        """rho with (f^n)* alpha ~ rho alpha in least squares, and the worst leftover."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        alpha = form.coefficients(points)
        norm2 = np.sum(alpha * alpha, axis=-1)
        if np.any(norm2 < DEGENERACY ** 2):
            bad = int(np.argmin(norm2))
            raise DegenerateFormError(f"{form.label} vanishes at a sample point", details={"point": points[bad].tolist()})
        _, pulled = _pulled(spec, form, points, n)
        rho = np.sum(pulled * alpha, axis=-1) / norm2
        residual = float(np.max(np.linalg.norm(pulled - rho[:, None] * alpha, axis=-1)))
        logger.debug(f"{spec.name}: pullback ratio residual {residual:.3e} for {form.label}")
        return PullbackRatio(points, rho, residual)

    @staticmethod
    def invariance_defect(spec: MapSpec, form: OneForm, points) -> float:
        """max |f* alpha - alpha| over points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _, pulled = _pulled(spec, form, points)
        return float(np.max(np.linalg.norm(pulled - form.coefficients(points), axis=-1)))

    @staticmethod
    def contact_density(form: OneForm, volume: VolumeForm, points) -> np.ndarray:
        """h with alpha ^ d alpha = h m."""
        points = np.asarray(points, dtype=float)
        m = volume.coefficient(points)
        if np.any(np.abs(m) < DEGENERACY):
            raise DegenerateFormError(f"volume form {volume.label} vanishes at a sample point")
        theta = GeometryService.wedge(form, GeometryService.exterior_derivative(form))
        return theta.coefficient(points) / m

    @staticmethod
    def check_hrho(spec: MapSpec, form: OneForm, volume: VolumeForm, points) -> float:
        """max |h(f x) - rho(x)^2 h(x)|; needs f to preserve the volume form."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        image, jac = MapService.step(spec, points)
        ratio = volume.coefficient(image) * np.linalg.det(jac) / volume.coefficient(points)
        worst = float(np.max(np.abs(ratio - 1.0)))
        if worst > VOLUME_TOLERANCE:
            raise PreconditionError(
                f"{spec.name} does not preserve {volume.label} (|det - 1| up to {worst:.2e})",
                details={"volume_defect": worst},
            )
        rho = ContactService.pullback_ratio(spec, form, points).rho
        h = ContactService.contact_density(form, volume, points)
        h_image = ContactService.contact_density(form, volume, image)
        return float(np.max(np.abs(h_image - rho ** 2 * h)))

    @staticmethod
    def contact_volume_check(spec: MapSpec, form: OneForm, volume: VolumeForm, points) -> float:
        """max |rho(x)^2 - h(f x) / h(x)|, gated on |h| >= DEGENERACY."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        h = ContactService.contact_density(form, volume, points)
        if np.any(np.abs(h) < DEGENERACY):
            raise DegenerateFormError(f"{form.label} is not contact on the sample")
        rho = ContactService.pullback_ratio(spec, form, points).rho
        h_image = ContactService.contact_density(form, volume, MapService.apply(spec, points))
        return float(np.max(np.abs(rho ** 2 - h_image / h)))

    @staticmethod
    def reeb_field(form: OneForm, points) -> ReebSample:
        """R with alpha(R) = 1 and d alpha(R, .) = 0."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        h = ContactService.contact_density(form, VolumeForm.standard(), points)
        if np.any(np.abs(h) < DEGENERACY):
            bad = int(np.argmin(np.abs(h)))
            raise DegenerateFormError(
                f"{form.label} is degenerate at a sample point (|h| = {abs(h[bad]):.2e})",
                details={"point": points[bad].tolist()},
            )
        alpha = form.coefficients(points)
        W = GeometryService.exterior_derivative(form).matrix(points)
        vectors = np.empty_like(points)
        kernel_residual = 0.0
        for i in range(len(points)):
            null = linalg.null_space(W[i])
            direction = null[:, 0]
            vectors[i] = direction / (alpha[i] @ direction)
            basis = linalg.null_space(alpha[i][None, :])
            kernel_residual = max(kernel_residual, float(np.max(np.abs(vectors[i] @ W[i] @ basis))))
        normalization = float(np.max(np.abs(np.sum(alpha * vectors, axis=-1) - 1.0)))
        return ReebSample(points, vectors, normalization, kernel_residual)

    @staticmethod
    def check_reeb_center(spec: MapSpec, form: OneForm, points) -> np.ndarray:
        """Angle between R and E^c at every sample point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        reeb = ContactService.reeb_field(form, points).vectors
        e_c = SplittingService.compute_splitting(spec, points).e_c
        return line_angle(reeb, e_c)

    @staticmethod
    def transversal_nondegeneracy(
        form: OneForm, center, u, v, radius: float = 0.05, samples: int = 5
    ) -> float:
        """min |d alpha(u, v)| over a disk spanned by orthonormalized (u, v) around center."""
        center = np.asarray(center, dtype=float)
        frame, _ = np.linalg.qr(np.column_stack([u, v]))
        u, v = frame[:, 0], frame[:, 1]
        offsets = np.linspace(-radius, radius, samples)
        a, b = np.meshgrid(offsets, offsets, indexing="ij")
        inside = a ** 2 + b ** 2 <= radius ** 2
        points = center + a[inside][:, None] * u + b[inside][:, None] * v
        h = ContactService.contact_density(form, VolumeForm.standard(), points)
        if np.all(np.abs(h) >= DEGENERACY):
            reeb = ContactService.reeb_field(form, points).vectors
            normal = np.cross(u, v)
            angle = np.pi / 2 - line_angle(reeb, np.broadcast_to(normal, reeb.shape))
            if np.min(angle) < TRANSVERSAL_ANGLE:
                raise TransversalityError(
                    f"disk meets the Reeb field at {float(np.min(angle)):.3f} rad (< {TRANSVERSAL_ANGLE})",
                    details={"angle": float(np.min(angle))},
                )
        values = GeometryService.exterior_derivative(form).apply(points, np.broadcast_to(u, points.shape), np.broadcast_to(v, points.shape))
        return float(np.min(np.abs(values)))

    @staticmethod
    def frobenius_test(form: OneForm, points, tolerance: float = DEGENERACY) -> Dict[str, object]:
        h = ContactService.contact_density(form, VolumeForm.standard(), points)
        small = np.abs(h) <= tolerance
        verdict = INTEGRABLE if np.all(small) else CONTACT if not np.any(small) else MIXED
        return {"verdict": verdict, "max_h": float(np.max(np.abs(h))), "min_h": float(np.min(np.abs(h)))}

    @staticmethod
    def contact_report(spec: MapSpec, points, form: Optional[OneForm] = None, volume: Optional[VolumeForm] = None) -> ContactReport:
        form = form or spec.contact_form
        if form is None:
            raise ConfigError(f"map {spec.name} declares no contact form", field="form")
        volume = volume or VolumeForm.standard()
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ratio = ContactService.pullback_ratio(spec, form, points)
        h = ContactService.contact_density(form, volume, points)
        reeb = ContactService.reeb_field(form, points)
        center = ContactService.check_reeb_center(spec, form, points)
        return ContactReport(
            map_name=spec.name,
            form=form.label,
            points=points,
            rho=ratio.rho,
            rho_residual=ratio.residual,
            h=h,
            hrho_residual=ContactService.check_hrho(spec, form, volume, points),
            volume_identity_residual=ContactService.contact_volume_check(spec, form, volume, points),
            reeb=reeb.vectors,
            reeb_residual=max(reeb.normalization_residual, reeb.kernel_residual),
            center_angles=center,
            frobenius=ContactService.frobenius_test(form, points)["verdict"],
        )

    # su quadrilateral

    @staticmethod
    def _leaf(spec: MapSpec, base: np.ndarray, flavor: str, depth: int):
        frames = frame_vectors(spec, base[None, :])
        direction = frames[0] if flavor == "s" else frames[2]
        return LeafService.build(spec, base[None, :], flavor, depth, np.linalg.norm(direction, axis=-1), direction)

    @staticmethod
    def _leg_integral(form: OneForm, path: np.ndarray) -> float:
        mids = 0.5 * (path[1:] + path[:-1])
        return float(np.sum(np.sum(form.coefficients(mids) * np.diff(path, axis=0), axis=-1)))

    @staticmethod
    def _leaf_path(leaf, start: float, stop: float, size: float) -> np.ndarray:
        nodes = max(2, int(np.ceil(NODES_PER_SIZE * abs(stop - start) / size)) + 1)
        return leaf.evaluate(np.linspace(start, stop, nodes)[None, :])[0]

    @staticmethod
    def _solve_stable_corner(offset: Callable[[float], float], start: float, size: float) -> float:
        s = start
        for _ in range(GAP_NEWTON_MAX_ITERATIONS):
            g = offset(s)
            slope = (offset(s + GAP_FD_STEP) - offset(s - GAP_FD_STEP)) / (2 * GAP_FD_STEP)
            if slope == 0.0:
                raise NewtonError(
                    f"stable corner of the su quadrilateral has a flat offset at size {size}",
                    details={"size": size, "s": s},
                )
            delta = g / slope
            s -= delta
            if abs(delta) <= GAP_NEWTON_TOLERANCE:
                return s
        raise NewtonError(
            f"stable corner of the su quadrilateral did not converge at size {size}",
            details={"size": size},
        )

    @staticmethod
    def su_gap(spec: MapSpec, x, size: float, depth: int = DEFAULT_LEAF_DEPTH) -> SuGap:
        """Close the path x -> y (W^s) -> w1 (W^u) against x -> z (W^u) -> w2 (W^s) and measure d(w1, w2)."""
        if not 0 < size <= MAX_GAP_SIZE:
            raise ConfigError(f"su gap size must lie in (0, {MAX_GAP_SIZE}], got {size}", field="contact.size")
        x, _ = spec.manifold.reduce(np.asarray(x, dtype=float))
        a = CORNER_FACTOR * size
        s_leaf = ContactService._leaf(spec, x, "s", depth)
        u_leaf = ContactService._leaf(spec, x, "u", depth)
        y = s_leaf.evaluate(np.array([a]))[0]
        z = u_leaf.evaluate(np.array([a]))[0]
        from_y = ContactService._leaf(spec, y, "u", depth)
        from_z = ContactService._leaf(spec, z, "s", depth)
        w1 = from_y.evaluate(np.array([a]))[0]

        v_s, v_c, v_u = (v[0] for v in frame_vectors(spec, w1[None, :]))
        frame = np.column_stack([v_s, v_c, v_u])

        def stable_offset(s: float) -> float:
            w = from_z.evaluate(np.array([s]))[0]
            return float(np.linalg.solve(frame, w - w1)[0])

        s = ContactService._solve_stable_corner(stable_offset, a, size)
        w2 = from_z.evaluate(np.array([s]))[0]
        gap = float(spec.manifold.distance(w1, w2))

        loop = None
        form = spec.contact_form
        if form is not None:
            legs: List[np.ndarray] = [
                ContactService._leaf_path(s_leaf, 0.0, a, size),
                ContactService._leaf_path(from_y, 0.0, a, size),
                np.linspace(w1, w2, NODES_PER_SIZE + 1),
                ContactService._leaf_path(from_z, s, 0.0, size),
                ContactService._leaf_path(u_leaf, a, 0.0, size),
            ]
            loop = sum(ContactService._leg_integral(form, leg) for leg in legs)
        logger.debug(f"{spec.name}: su gap {gap:.3e} at size {size}, loop integral {loop}")
        return SuGap(size, gap, loop, s, {"x": x, "y": y, "z": z, "w1": w1, "w2": w2})

    @staticmethod
    def su_gap_sweep(spec: MapSpec, x, sizes) -> Dict[str, object]:
        """su gaps over sizes and the log-log slope of gap against size."""
        gaps = [ContactService.su_gap(spec, x, float(size)) for size in sizes]
        values = np.array([g.gap for g in gaps])
        slope = None
        if np.all(values > 0) and len(values) >= 2:
            slope = float(stats.linregress(np.log(np.asarray(sizes, dtype=float)), np.log(values)).slope)
        return {"gaps": gaps, "slope": slope}
