"""Invariant splittings, exponents and partial-hyperbolicity certificates.

Unstable directions come from pushing random vectors forward along the
backward orbit, stable ones from pulling back along the forward orbit. The
center line is the intersection of the center-unstable plane (normals
pushed forward by the inverse transpose) and the center-stable plane
(normals pulled back by the transpose).
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from models.errors import CertificationRefused, ConfigError, DegenerateFormError, SplittingError
from services.geometry import GeometryService
from services.maps import MapService, MapSpec
from services.worker_pool import keyed_rng

logger = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 40
ANGLE_TOLERANCE = 1e-10  # two random starts must agree this well
MIN_ANGLE = 1e-3  # radians between any two splitting lines
FORM_TOLERANCE = 1e-12
DEFAULT_RENORM_EVERY = 1
DEFAULT_WINDOW = 100
LYAPUNOV_BATCHES = 10
MIN_LYAPUNOV_STEPS = 1000
DEFAULT_K_MAX = 5


def unit(vectors: np.ndarray) -> np.ndarray:
    return vectors / np.linalg.norm(vectors, axis=-1, keepdims=True)


def line_angle(u, v) -> np.ndarray:
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.abs(np.sum(u * v, axis=-1))
    return np.arctan2(cross, dot)


def orient(vectors: np.ndarray, reference: Optional[np.ndarray] = None) -> np.ndarray:
    """Fix the sign: align with reference, or make the first significant coordinate positive."""
    vectors = np.asarray(vectors, dtype=float)
    if reference is not None:
        sign = np.where(np.sum(vectors * reference, axis=-1) < 0, -1.0, 1.0)
        return vectors * sign[..., None]
    first = np.argmax(np.abs(vectors) > 1e-12, axis=-1)
    lead = np.take_along_axis(vectors, first[..., None], axis=-1)[..., 0]
    return vectors * np.where(lead < 0, -1.0, 1.0)[..., None]


def _sweep(matrices: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Normalized iterates v, M_0 v, M_1 M_0 v, ...; shape (len(matrices) + 1, B, 3)."""
    out = [unit(vectors)]
    for M in matrices:
        out.append(unit(np.einsum("bij,bj->bi", M, out[-1])))
    return np.stack(out)


@dataclass(frozen=True)
class Splitting3:
    """E^s, E^c, E^u unit vectors at a batch of points (or one point)."""
    points: np.ndarray
    e_s: np.ndarray
    e_c: np.ndarray
    e_u: np.ndarray
    n_used: int
    residual: np.ndarray

    def __len__(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[0]

    def at(self, i: int) -> "Splitting3":
        return Splitting3(
            self.points[i], self.e_s[i], self.e_c[i], self.e_u[i], self.n_used, np.asarray(self.residual[i])
        )

    @property
    def plane_normal(self) -> np.ndarray:
        """Unit normal of E^s + E^u."""
        return unit(np.cross(self.e_s, self.e_u))


@dataclass(frozen=True)
class OrbitFrames:
    """Splitting along p, f(p), ..., f^ahead(p) for a batch of points."""
    points: np.ndarray  # (ahead + 1, B, 3)
    e_s: np.ndarray
    e_c: np.ndarray
    e_u: np.ndarray
    jacobians: np.ndarray  # (ahead, B, 3, 3)
    residual: np.ndarray  # (B,)
    n_used: int

    def splitting(self, index: int = 0) -> Splitting3:
        return Splitting3(
            self.points[index], self.e_s[index], self.e_c[index], self.e_u[index], self.n_used, self.residual
        )


@dataclass(frozen=True)
class FiniteTimeExponents:
    n: int
    lambda_s: np.ndarray
    lambda_c: np.ndarray
    lambda_u: np.ndarray

    def as_tuple(self, index: int = 0) -> Tuple[float, float, float]:
        pick = (lambda a: float(np.ravel(a)[index]))
        return pick(self.lambda_s), pick(self.lambda_c), pick(self.lambda_u)


@dataclass(frozen=True)
class ExponentReport:
    point: np.ndarray
    iterations: int
    renorm_every: int
    chi: Tuple[float, float, float]  # (s, c, u)
    stderr: Tuple[float, float, float]
    mean_log_det: float
    finite_time: Dict[int, Tuple[float, float, float]] = field(default_factory=dict)
    window: int = DEFAULT_WINDOW
    window_sup: Dict[str, float] = field(default_factory=dict)
    window_inf: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class BunchingReport:
    r: float
    k: int
    bunched: bool
    strongly_bunched: bool
    margin: float
    strong_margin: float


@dataclass(frozen=True)
class Certificate:
    k: int
    margin_s: float
    margin_u: float
    sample_size: int
    bunching: Optional[BunchingReport] = None


class SplittingService:
    """Splittings, exponents and certificates."""

    @staticmethod
    def orbit_frames(
        spec: MapSpec,
        points,
        ahead: int = 0,
        n: int = DEFAULT_ITERATIONS,
        rng: Optional[np.random.Generator] = None,
        tolerance: float = ANGLE_TOLERANCE,
        min_angle: float = MIN_ANGLE,
    ) -> OrbitFrames:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        rng = rng if rng is not None else keyed_rng(0)
        count = len(points)

        back = MapService.orbit_points(spec, points, -n)[::-1]
        fwd = MapService.orbit_points(spec, points, ahead + n)
        chain = np.concatenate([MapService.orbit_jacobians(spec, back), MapService.orbit_jacobians(spec, fwd)])
        inverse = np.linalg.inv(chain)
        # chain[j] maps T at f^{j-n}p to T at f^{j-n+1}p
        window = slice(n, n + ahead + 1)

        runs = []
        for _ in range(2):
            u = _sweep(chain[: n + ahead], rng.standard_normal((count, 3)))[window]
            s = _sweep(inverse[::-1][: n + ahead], rng.standard_normal((count, 3)))[::-1][:ahead + 1]
            n_cu = _sweep(np.swapaxes(inverse, -1, -2)[: n + ahead], rng.standard_normal((count, 3)))[window]
            n_cs = _sweep(np.swapaxes(chain, -1, -2)[::-1][: n + ahead], rng.standard_normal((count, 3)))
            n_cs = n_cs[::-1][:ahead + 1]
            c = unit(np.cross(n_cu, n_cs))
            runs.append((orient(s), orient(c), orient(u)))

        residual = np.max(
            np.stack([line_angle(a, b).max(axis=0) for a, b in zip(runs[0], runs[1])]), axis=0
        )
        bad = np.flatnonzero(residual > tolerance)
        if len(bad):
            raise SplittingError(
                f"splitting did not converge after {n} iterations (angle {residual[bad[0]]:.2e} > {tolerance:.1e})",
                details={"point": points[bad[0]].tolist(), "angle": float(residual[bad[0]]), "iterations": n},
            )
        e_s, e_c, e_u = runs[0]
        angles = np.stack([line_angle(e_s, e_c), line_angle(e_c, e_u), line_angle(e_s, e_u)])
        if np.min(angles) < min_angle:
            worst = int(np.argmin(angles.min(axis=(0, 1))))
            raise SplittingError(
                f"splitting lines closer than {min_angle:.1e} rad",
                details={"point": points[worst].tolist(), "angle": float(np.min(angles))},
            )
        logger.debug(f"{spec.name}: splitting at {count} points, max disagreement {float(residual.max()):.2e}")
        return OrbitFrames(
            points=fwd[: ahead + 1],
            e_s=e_s,
            e_c=e_c,
            e_u=e_u,
            jacobians=chain[n: n + ahead],
            residual=residual,
            n_used=n,
        )

    @staticmethod
    def compute_splitting(
        spec: MapSpec,
        points,
        n: int = DEFAULT_ITERATIONS,
        rng: Optional[np.random.Generator] = None,
        tolerance: float = ANGLE_TOLERANCE,
        min_angle: float = MIN_ANGLE,
        reference: Optional[Splitting3] = None,
    ) -> Splitting3:
        """Splitting at one point (shape (3,)) or a batch (shape (B, 3))."""
        single = np.asarray(points).ndim == 1
        frames = SplittingService.orbit_frames(spec, points, 0, n, rng, tolerance, min_angle)
        result = frames.splitting(0)
        if reference is not None:
            result = Splitting3(
                result.points,
                orient(result.e_s, np.atleast_2d(reference.e_s)),
                orient(result.e_c, np.atleast_2d(reference.e_c)),
                orient(result.e_u, np.atleast_2d(reference.e_u)),
                result.n_used,
                result.residual,
            )
        return result.at(0) if single else result

    @staticmethod
    def invariance_residual(spec: MapSpec, points, n: int = DEFAULT_ITERATIONS) -> Dict[str, float]:
        """Angles between Df e(p) and e(f p) for each line."""
        frames = SplittingService.orbit_frames(spec, points, ahead=1, n=n)
        J = frames.jacobians[0]
        out = {}
        for name in ("s", "c", "u"):
            e = getattr(frames, f"e_{name}")
            out[name] = float(np.max(line_angle(np.einsum("bij,bj->bi", J, e[0]), e[1])))
        return out

    @staticmethod
    def scaled_frame(spec: MapSpec, points, e_s, e_c, e_u) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Frame (v_s, v_c, v_u): alpha(v_c) = 1 and |d alpha(v_s, v_u)| = 1 with a contact form, unit otherwise."""
        if spec.contact_form is None:
            return e_s, e_c, e_u
        alpha = spec.contact_form.coefficients(points)
        a_c = np.sum(alpha * e_c, axis=-1)
        k = np.abs(GeometryService.exterior_derivative(spec.contact_form).apply(points, e_s, e_u))
        if np.any(np.abs(a_c) < FORM_TOLERANCE) or np.any(k < FORM_TOLERANCE):
            raise DegenerateFormError(f"contact form degenerate on the splitting of {spec.name}")
        root = np.sqrt(k)[..., None]
        return e_s / root, e_c / a_c[..., None], e_u / root

    @staticmethod
    def step_multipliers(spec: MapSpec, frames: OrbitFrames) -> np.ndarray:
        """Per-step stretch of each line in the frame metric, shape (ahead, B, 3) ordered (s, c, u)."""
        J = frames.jacobians

        def image(e):
            return np.einsum("kbij,kbj->kbi", J, e[:-1])

        ms = np.linalg.norm(image(frames.e_s), axis=-1)
        mu = np.linalg.norm(image(frames.e_u), axis=-1)
        if spec.contact_form is None:
            mc = np.linalg.norm(image(frames.e_c), axis=-1)
        else:
            alpha = spec.contact_form.coefficients(frames.points)
            a_c = np.sum(alpha * frames.e_c, axis=-1)
            k = np.abs(GeometryService.exterior_derivative(spec.contact_form).apply(frames.points, frames.e_s, frames.e_u))
            if np.any(np.abs(a_c) < FORM_TOLERANCE) or np.any(k < FORM_TOLERANCE):
                raise DegenerateFormError(f"contact form degenerate on the splitting of {spec.name}")
            X = frames.e_c / a_c[..., None]
            mc = np.abs(np.sum(alpha[1:] * image(X), axis=-1))
            ratio = np.sqrt(k[1:] / k[:-1])
            ms, mu = ms * ratio, mu * ratio
        return np.stack([ms, mc, mu], axis=-1)

    @staticmethod
    def finite_time_exponents(
        spec: MapSpec,
        points,
        n: int,
        iterations: int = DEFAULT_ITERATIONS,
        rng: Optional[np.random.Generator] = None,
    ) -> FiniteTimeExponents:
        """(lambda_s(n), lambda_c(n), lambda_u(n)) as products of per-step stretches."""
        single = np.asarray(points).ndim == 1
        count = 1 if single else len(points)
        if n == 0:
            ones = np.ones(count)
            return FiniteTimeExponents(0, ones, ones.copy(), ones.copy())
        frames = SplittingService.orbit_frames(spec, points, ahead=n, n=iterations, rng=rng)
        logs = np.sum(np.log(SplittingService.step_multipliers(spec, frames)), axis=0)
        lam = np.exp(logs)
        return FiniteTimeExponents(n, lam[:, 0], lam[:, 1], lam[:, 2])

    @staticmethod
    def volume_distortion(
        spec: MapSpec,
        points,
        n: int,
        iterations: int = DEFAULT_ITERATIONS,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """log(vol V(p) / vol V(f^n p)) for the frame V = (v_s, v_c, v_u) the finite-time exponents are measured in."""
        frames = SplittingService.orbit_frames(spec, points, ahead=n, n=iterations, rng=rng)

        def log_volume(k):
            v = SplittingService.scaled_frame(spec, frames.points[k], frames.e_s[k], frames.e_c[k], frames.e_u[k])
            return np.log(np.abs(np.linalg.det(np.stack(v, axis=-1))))

        return log_volume(0) - log_volume(n)

    @staticmethod
    def lyapunov_exponents(
        spec: MapSpec,
        point,
        N: int = 10_000,
        renorm_every: int = DEFAULT_RENORM_EVERY,
        window: int = DEFAULT_WINDOW,
        n_values: Sequence[int] = (1, 10),
        splitting_iterations: int = DEFAULT_ITERATIONS,
    ) -> ExponentReport:
        """Time averages of log stretch of the flag (e_u, e_c, e_s) with QR renormalization."""
        if N < MIN_LYAPUNOV_STEPS:
            raise ConfigError(f"lyapunov run needs at least {MIN_LYAPUNOV_STEPS} steps", field="splitting.lyapunov_steps")
        if renorm_every < 1 or N % renorm_every:
            raise ConfigError("renorm_every must divide the number of steps", field="splitting.renorm_every")
        point = np.asarray(point, dtype=float)
        split = SplittingService.compute_splitting(spec, point, splitting_iterations)
        Q = np.column_stack([split.e_u, split.e_c, split.e_s])

        orbit = MapService.orbit_points(spec, point, N)
        jacs = MapService.orbit_jacobians(spec, orbit)
        log_det = np.log(np.abs(np.linalg.det(jacs)))

        blocks = N // renorm_every
        log_diag = np.empty((blocks, 3))
        for b in range(blocks):
            M = Q
            for J in jacs[b * renorm_every: (b + 1) * renorm_every]:
                M = J @ M
            Q, R = linalg.qr(M)
            log_diag[b] = np.log(np.abs(np.diag(R)))

        block_det = log_det.reshape(blocks, renorm_every).sum(axis=1)
        log_u = log_diag[:, 0]
        if spec.contact_form is not None:
            rho = np.log(np.abs(MapService.conformal_factor(spec, orbit[:-1])))
            log_c = rho.reshape(blocks, renorm_every).sum(axis=1)
        else:
            log_c = log_diag[:, 1]
        log_s = block_det - log_u - log_c

        per_step = np.stack([log_s, log_c, log_u], axis=-1) / renorm_every
        chi = per_step.mean(axis=0)
        means = np.stack([m.mean(axis=0) for m in np.array_split(per_step, LYAPUNOV_BATCHES)])
        stderr = means.std(axis=0, ddof=1) / np.sqrt(LYAPUNOV_BATCHES)

        span = max(1, window // renorm_every)
        usable = (blocks // span) * span
        windowed = per_step[:usable].reshape(-1, span, 3).mean(axis=1)
        finite_time = {
            int(k): SplittingService.finite_time_exponents(spec, point, int(k), splitting_iterations).as_tuple()
            for k in n_values
        }
        logger.info(f"{spec.name}: lyapunov exponents (s, c, u) = ({chi[0]:.8f}, {chi[1]:.8f}, {chi[2]:.8f})")
        return ExponentReport(
            point=point,
            iterations=N,
            renorm_every=renorm_every,
            chi=tuple(float(c) for c in chi),
            stderr=tuple(float(s) for s in stderr),
            mean_log_det=float(log_det.mean()),
            finite_time=finite_time,
            window=span * renorm_every,
            window_sup={"c": float(windowed[:, 1].max()), "u": float(windowed[:, 2].max())},
            window_inf={"c": float(windowed[:, 1].min()), "u": float(windowed[:, 2].min())},
        )

    @staticmethod
    def check_bunching(exponents: FiniteTimeExponents, r: float) -> BunchingReport:
        """r-bunching and strong r-bunching of sampled finite-time exponents."""
        ls, lc, lu = (np.log(np.asarray(a)) for a in (exponents.lambda_s, exponents.lambda_c, exponents.lambda_u))

        def margin(power):
            c = power * lc
            return float(np.min(np.minimum(c - ls, lu - c)))

        plain = min(margin(r), margin(1.0 - r))
        strong = min(plain, margin(-r))
        return BunchingReport(
            r=float(r), k=exponents.n, bunched=plain > 0, strongly_bunched=strong > 0,
            margin=plain, strong_margin=strong,
        )

    @staticmethod
    def certify_partial_hyperbolicity(
        spec: MapSpec,
        sample,
        k_max: int = DEFAULT_K_MAX,
        r: float = 1.0,
        iterations: int = DEFAULT_ITERATIONS,
        rng: Optional[np.random.Generator] = None,
    ) -> Certificate:
        """Smallest k <= k_max with lambda_s(k) < min(lambda_c(k), 1) and max(lambda_c(k), 1) < lambda_u(k) on the sample."""
        sample = np.atleast_2d(np.asarray(sample, dtype=float))
        try:
            frames = SplittingService.orbit_frames(spec, sample, ahead=k_max, n=iterations, rng=rng)
        except SplittingError as exc:
            raise CertificationRefused(
                f"{spec.name} refused: {exc.message}",
                details={"point": exc.details.get("point"), "reason": exc.code.value},
            ) from exc
        logs = np.cumsum(np.log(SplittingService.step_multipliers(spec, frames)), axis=0)
        worst = 0
        for k in range(1, k_max + 1):
            ls, lc, lu = logs[k - 1, :, 0], logs[k - 1, :, 1], logs[k - 1, :, 2]
            margin_s = np.minimum(lc, 0.0) - ls
            margin_u = lu - np.maximum(lc, 0.0)
            worst = int(np.argmin(np.minimum(margin_s, margin_u)))
            if np.all(margin_s > 0) and np.all(margin_u > 0):
                exps = FiniteTimeExponents(k, np.exp(ls), np.exp(lc), np.exp(lu))
                bunching = SplittingService.check_bunching(exps, r)
                logger.info(f"{spec.name}: partially hyperbolic at k={k}, margins {margin_s.min():.4f}/{margin_u.min():.4f}")
                return Certificate(
                    k=k,
                    margin_s=float(margin_s.min()),
                    margin_u=float(margin_u.min()),
                    sample_size=len(sample),
                    bunching=bunching,
                )
        logger.warning(f"{spec.name}: no certificate up to k={k_max}")
        raise CertificationRefused(
            f"{spec.name}: domination inequalities fail up to k={k_max}",
            details={"point": sample[worst].tolist(), "k_max": k_max},
        )
