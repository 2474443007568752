"""Spectral quantities of the sheaf Laplacian and the convergence constants
derived from them."""

import math

import numpy as np
import scipy.linalg

from execo_engine import logger

from sheaf_diffusion.objects import SpectralException
from sheaf_diffusion.potentials import energy_minimum
from sheaf_diffusion.sheaf import linear_laplacian


DEFAULT_ZERO_THRESHOLD = 1e-9
DEFAULT_AUDIT_SAMPLES = 100
DEFAULT_AUDIT_TOL = 1e-8
DEFAULT_AUDIT_ATOL = 1e-12


class SpectralReport(object):
    """Spectrum of the linear sheaf Laplacian and the constants built on it.

    Attributes:
      eigenvalues (numpy.ndarray):
        All eigenvalues of L_F in ascending order.
      lambda_max (float):
        The largest eigenvalue.
      lambda_2 (float or None):
        The smallest eigenvalue above zero_threshold * lambda_max, None when
        the Laplacian vanishes.
      sigma_2 (float or None):
        sqrt(lambda_2), the smallest nonzero singular value of delta.
      zero_threshold (float):
        Relative threshold under which eigenvalues count as zero.
      zero_multiplicity (int):
        Number of numerically zero eigenvalues, dim H^0.
      m, K, kappa (float or None):
        Strong convexity, Lipschitz and error-bound constants, filled in by
        analyze.
    """

    def __init__(self, eigenvalues, zero_threshold):
        self.eigenvalues = eigenvalues
        self.zero_threshold = zero_threshold
        self.lambda_max = float(eigenvalues[-1]) if len(eigenvalues) else 0.0
        if self.lambda_max < 0:
            self.lambda_max = 0.0

        cutoff = zero_threshold * self.lambda_max
        nonzero = eigenvalues[eigenvalues > cutoff]
        if self.lambda_max > 0 and len(nonzero):
            self.lambda_2 = float(nonzero[0])
            self.sigma_2 = math.sqrt(self.lambda_2)
        else:
            self.lambda_2 = None
            self.sigma_2 = None
        self.zero_multiplicity = int(len(eigenvalues) - len(nonzero)) \
            if self.lambda_max > 0 else len(eigenvalues)

        self.m = None
        self.K = None
        self.kappa = None

    def to_props(self):
        """Return the report as an ordered list of (key, value) pairs."""

        return [("lambda_max", self.lambda_max),
                ("lambda_2", self.lambda_2),
                ("sigma_2", self.sigma_2),
                ("zero_threshold", self.zero_threshold),
                ("zero_multiplicity", self.zero_multiplicity),
                ("m", self.m),
                ("K", self.K),
                ("kappa", self.kappa)]

    def __str__(self):
        return "SpectralReport(lambda_max = %g, lambda_2 = %s)" % \
               (self.lambda_max,
                "absent" if self.lambda_2 is None else "%g" % self.lambda_2)


def spectrum(sheaf, zero_threshold=DEFAULT_ZERO_THRESHOLD):
    """Compute the eigenvalues of the linear sheaf Laplacian.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      zero_threshold (float, optional):
        Eigenvalues at most zero_threshold * lambda_max are treated as zero.

    Returns (SpectralReport):
      The eigen quantities; m, K and kappa are left unset.
    """

    laplacian = linear_laplacian(sheaf)
    eigenvalues = scipy.linalg.eigh(laplacian, eigvals_only=True) \
        if laplacian.size else np.zeros(0)
    report = SpectralReport(np.asarray(eigenvalues), zero_threshold)
    logger.debug("Spectrum of %s: %s" % (str(sheaf), str(report)))
    return report


def lipschitz_constant(report, potentials):
    """Return K = K_max * lambda_max, the Lipschitz constant of the
    nonlinear Laplacian."""

    return potentials.K_max * report.lambda_max


def eb_constant(report, potentials, squared=False):
    """Return the global error-bound constant.

    Args:
      report (SpectralReport):
        The spectrum.
      potentials (PotentialSet):
        The potentials; only m = min_e m_e is used.
      squared (bool, optional):
        If False, kappa = 1/(m sigma_2). If True, kappa = 1/(m lambda_2), the
        constant that holds for every quadratic-family instance.

    Raises:
      SpectralException:
        If the Laplacian has no nonzero eigenvalue.
    """

    if report.lambda_2 is None:
        msg = "lambda_2 is absent, the coboundary is zero"
        logger.error(msg)
        raise SpectralException(msg)
    if squared:
        return 1.0 / (potentials.m * report.lambda_2)
    return 1.0 / (potentials.m * report.sigma_2)


def analyze(sheaf, potentials, zero_threshold=DEFAULT_ZERO_THRESHOLD):
    """Return a full SpectralReport with m, K and kappa set (kappa stays
    None when lambda_2 is absent)."""

    report = spectrum(sheaf, zero_threshold)
    report.m = potentials.m
    report.K = lipschitz_constant(report, potentials)
    if report.lambda_2 is not None:
        report.kappa = eb_constant(report, potentials)
    return report


def project_onto_minimizers(sheaf, potentials, x):
    """Orthogonal projection of x onto the minimizer set of the energy.

    Raises:
      ConfigurationException:
        If the potentials are not of the quadratic family.
    """

    return energy_minimum(sheaf, potentials).project(x)


class InequalityAudit(object):
    """Outcome of a sampled inequality check lhs <= rhs.

    Attributes:
      samples (int):
        Number of sampled points.
      violations (int):
        Samples with lhs > rhs * (1 + tol) + atol * size, size being the
        sample's norm raised to the degree of the inequality.
      worst_ratio (float):
        The largest lhs / rhs seen over samples whose rhs is above the
        absolute floor.
    """

    def __init__(self, name, tol, atol=DEFAULT_AUDIT_ATOL):
        self.name = name
        self.tol = tol
        self.atol = atol
        self.samples = 0
        self.violations = 0
        self.worst_ratio = 0.0

    def add(self, lhs, rhs, size=1.0):
        self.samples += 1
        floor = self.atol * max(size, 1.0)
        if rhs > floor:
            self.worst_ratio = max(self.worst_ratio, lhs / rhs)
        if lhs > rhs * (1 + self.tol) + floor:
            self.violations += 1

    @property
    def holds(self):
        return self.violations == 0

    def __str__(self):
        return "%s audit: %d/%d violations, worst ratio %g" % \
               (self.name, self.violations, self.samples, self.worst_ratio)


def _samples(sheaf, samples, seed, scale):
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        yield scale * rng.standard_normal(sheaf.c0_dim)


def eb_audit(sheaf, potentials, samples=DEFAULT_AUDIT_SAMPLES, seed=0,
             squared=False, tol=DEFAULT_AUDIT_TOL, scale=1.0,
             atol=DEFAULT_AUDIT_ATOL):
    """Sample the error-bound inequality dist(x, X*) <= kappa |grad f(x)|.

    Args:
      sheaf (CellularSheaf):
        The sheaf.
      potentials (PotentialSet):
        Quadratic-family potentials.
      samples (int, optional):
        Number of random points.
      seed (int, optional):
        Seed of the sampling generator.
      squared (bool, optional):
        Which kappa to audit, see eb_constant.
      tol (float, optional):
        Relative slack allowed before a sample counts as a violation.
      scale (float, optional):
        Standard deviation of the sampled entries.
      atol (float, optional):
        Absolute slack, scaled by |x| (by |x|^2 for the PL audit), so that
        roundoff on points of X* is not reported.

    Returns (InequalityAudit):
      The violation counts.
    """

    report = spectrum(sheaf)
    kappa = eb_constant(report, potentials, squared)
    minimum = energy_minimum(sheaf, potentials)
    a, c = potentials.affine_gradient(sheaf)

    audit = InequalityAudit("error bound", tol, atol)
    for x in _samples(sheaf, samples, seed, scale):
        audit.add(minimum.distance_values(x),
                  kappa * float(np.linalg.norm(a.dot(x) - c)),
                  float(np.linalg.norm(x)))
    if not audit.holds:
        logger.warning(str(audit))
    return audit


def pl_audit(sheaf, potentials, samples=DEFAULT_AUDIT_SAMPLES, seed=0,
             squared=False, tol=DEFAULT_AUDIT_TOL, scale=1.0,
             atol=DEFAULT_AUDIT_ATOL):
    """Sample the inequality 1/2 |grad f(x)|^2 >= c (f(x) - f*), with
    c = m sigma_2 or, if squared, c = m lambda_2.

    Arguments are those of eb_audit. The audit is written lhs <= rhs with
    lhs = c (f(x) - f*) and rhs = 1/2 |grad f(x)|^2.
    """

    report = spectrum(sheaf)
    if report.lambda_2 is None:
        msg = "lambda_2 is absent, the coboundary is zero"
        logger.error(msg)
        raise SpectralException(msg)
    c_pl = potentials.m * (report.lambda_2 if squared else report.sigma_2)
    minimum = energy_minimum(sheaf, potentials)
    a, c = potentials.affine_gradient(sheaf)
    w = potentials.weight_vector(sheaf)
    b = potentials.offset_vector(sheaf)
    delta = sheaf.dense_coboundary()

    audit = InequalityAudit("PL", tol, atol)
    for x in _samples(sheaf, samples, seed, scale):
        r = delta.dot(x) - b
        f = 0.5 * float(np.dot(w * r, r))
        g = a.dot(x) - c
        audit.add(c_pl * (f - minimum.f_star), 0.5 * float(np.dot(g, g)),
                  float(np.dot(x, x)))
    if not audit.holds:
        logger.warning(str(audit))
    return audit
