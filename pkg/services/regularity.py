"""Regularity of the plane field E^s + E^u from sampled point pairs."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from models.errors import DegenerateFitError
from services.geometry import OneForm
from services.maps import MapSpec
from services.splitting import DEFAULT_ITERATIONS, SplittingService
from services.worker_pool import WorkerPool, keyed_rng

logger = logging.getLogger(__name__)

DEFAULT_PAIRS = 2000
DELTA_MIN = 1e-4
DELTA_MAX = 1e-1
SAMPLE_LOW, SAMPLE_HIGH = 0.1, 0.9  # base points stay away from the domain boundary
ANGLE_FLOOR = 1e-13  # angles below this are rounding noise and left out of the fit
MIN_FIT_PAIRS = 3
SPREAD_TOLERANCE = 1e-12
CONFIDENCE_Z = 1.96


@dataclass(frozen=True)
class PairSample:
    p: np.ndarray
    q: np.ndarray
    distance: np.ndarray


@dataclass(frozen=True)
class RegularityReport:
    holder_exponent: Optional[float]
    lipschitz_constant: float
    fit_r2: Optional[float]
    slope: Optional[float]
    confidence: Optional[tuple]
    pairs: int
    fitted_pairs: int


def sample_pairs(
    spec: MapSpec,
    rng: np.random.Generator,
    count: int = DEFAULT_PAIRS,
    delta_min: float = DELTA_MIN,
    delta_max: float = DELTA_MAX,
    leafwise: bool = True,
) -> PairSample:
    """Pairs (p, p + delta * d) with log-uniform delta; half along e_u(p) when leafwise."""
    p = rng.uniform(SAMPLE_LOW, SAMPLE_HIGH, size=(count, 3))
    delta = np.exp(rng.uniform(np.log(delta_min), np.log(delta_max), size=count))
    d = rng.standard_normal((count, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    if leafwise and count > 1:
        half = count // 2
        d[:half] = SplittingService.compute_splitting(spec, p[:half], rng=rng).e_u
    return PairSample(p=p, q=p + delta[:, None] * d, distance=delta)


class RegularityService:

    @staticmethod
    def plane_angles(spec: MapSpec, pairs: PairSample, seed: int = 0, pool: Optional[WorkerPool] = None,
                     iterations: int = DEFAULT_ITERATIONS) -> np.ndarray:
        """Angle between the unit normals of E^s + E^u at p and at q for every pair."""
        pool = pool or WorkerPool()
        stacked = np.concatenate([pairs.p, pairs.q])

        def normals(index, rows):
            return SplittingService.compute_splitting(spec, rows, iterations, rng=keyed_rng(seed, index)).plane_normal

        n = pool.map_chunks(normals, stacked)
        n_p, n_q = n[: len(pairs.p)], n[len(pairs.p):]
        cross = np.linalg.norm(np.cross(n_p, n_q), axis=-1)
        return np.arctan2(cross, np.abs(np.sum(n_p * n_q, axis=-1)))

    @staticmethod
    def fit(distances: np.ndarray, angles: np.ndarray) -> RegularityReport:
        log_d = np.log(distances)
        if np.ptp(log_d) < SPREAD_TOLERANCE:
            raise DegenerateFitError(
                "all pair distances are equal, slope is undefined",
                details={"distance": float(distances[0])},
            )
        lipschitz = float(np.max(angles / distances))
        mask = angles > ANGLE_FLOOR
        if int(mask.sum()) < MIN_FIT_PAIRS or np.ptp(log_d[mask]) < SPREAD_TOLERANCE:
            logger.debug(f"plane field constant to rounding, Lipschitz estimate {lipschitz:.3e}")
            return RegularityReport(None, lipschitz, None, None, None, len(distances), int(mask.sum()))
        fit = stats.linregress(log_d[mask], np.log(angles[mask]))
        low = fit.slope - CONFIDENCE_Z * fit.stderr
        high = fit.slope + CONFIDENCE_Z * fit.stderr
        exponent = float(np.clip(fit.slope, 0.0, 1.0))
        if exponent != fit.slope:
            logger.warning(f"fitted slope {fit.slope:.4f} clamped to {exponent:.4f}")
        return RegularityReport(
            holder_exponent=exponent,
            lipschitz_constant=lipschitz,
            fit_r2=float(fit.rvalue ** 2),
            slope=float(fit.slope),
            confidence=(float(np.clip(low, 0.0, 1.0)), float(np.clip(high, 0.0, 1.0))),
            pairs=len(distances),
            fitted_pairs=int(mask.sum()),
        )

    @staticmethod
    def estimate_plane_regularity(
        spec: MapSpec,
        seed: int = 0,
        count: int = DEFAULT_PAIRS,
        delta_min: float = DELTA_MIN,
        delta_max: float = DELTA_MAX,
        pool: Optional[WorkerPool] = None,
        pairs: Optional[PairSample] = None,
    ) -> RegularityReport:
        """Hoelder exponent and Lipschitz constant of E^s + E^u from log-log fits of angle against distance."""
        if pairs is None:
            pairs = sample_pairs(spec, keyed_rng(seed, 0), count, delta_min, delta_max)
        if np.ptp(np.log(pairs.distance)) < SPREAD_TOLERANCE:
            raise DegenerateFitError(
                "all pair distances are equal, slope is undefined",
                details={"distance": float(pairs.distance[0])},
            )
        angles = RegularityService.plane_angles(spec, pairs, seed + 1, pool)
        report = RegularityService.fit(pairs.distance, angles)
        logger.info(
            f"{spec.name}: plane regularity exponent {report.holder_exponent}, "
            f"Lipschitz {report.lipschitz_constant:.4e} over {report.pairs} pairs"
        )
        return report

    @staticmethod
    def kernel_normal_lipschitz(form: OneForm, points) -> float:
        """sup over points of the rate at which the unit normal of ker alpha turns, |(I - u u^T) D(a, b, c)| / |(a, b, c)|."""
        coeffs, grads = form.jet(np.atleast_2d(np.asarray(points, dtype=float)))
        norms = np.linalg.norm(coeffs, axis=-1)
        u = coeffs / norms[:, None]
        projector = np.eye(3) - u[:, :, None] * u[:, None, :]
        rates = np.linalg.norm(projector @ grads, ord=2, axis=(-2, -1)) / norms
        return float(np.max(rates))
