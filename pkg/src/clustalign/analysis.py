"""Semi-analytical success probabilities and bounds for clustered networks.

Under Rayleigh fading and power-law path loss, the probability that the
reference link beats an SIR threshold reduces to plane integrals against
the cluster scattering kernel. This module evaluates those integrals
with controlled error estimates, together with the one-dimensional upper
bound, its closed form, and the homogeneous-PPP baseline.

All expressions here assume zero receiver noise; the Monte-Carlo module
handles the noisy case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import i0e

__all__ = [
    "NetworkParams",
    "QuadratureParams",
    "QuadResult",
    "QuadratureError",
    "DEFAULT_QUAD",
    "beta_tilde",
    "jensen_bound",
    "xi",
    "success_prob_ia",
    "success_prob_siso",
    "upper_bound_1d",
    "delta_coeff",
    "upper_bound_closed_form",
    "c_alpha",
    "ppp_baseline",
]


@dataclass(frozen=True)
class NetworkParams:
    """Full parameter tuple of the network model.

    Attributes:
        lambda_p: Parent cluster intensity, per unit area.
        cbar: Transmitter-receiver pairs per cluster.
        sigma: Per-axis scattering standard deviation.
        alpha: Path-loss exponent, at least 2.
        threshold: SIR threshold for a successful transmission. Zero is
            accepted and means any positive SIR passes.
        d_ii: Distance between the reference transmitter and its
            receiver.
        mu: Mean fading power. Success probabilities do not depend on
            it; it only scales Monte-Carlo channel draws.
        noise_var: Receiver noise variance. Analytical results require
            zero; the simulator accepts positive values.
    """

    lambda_p: float
    cbar: int
    sigma: float
    alpha: float
    threshold: float
    d_ii: float
    mu: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self) -> None:
        if not self.lambda_p > 0:
            raise ValueError(f"lambda_p must be positive, got {self.lambda_p}")
        if not (isinstance(self.cbar, (int, np.integer)) and self.cbar >= 1):
            raise ValueError(f"cbar must be an integer >= 1, got {self.cbar}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.alpha >= 2:
            raise ValueError(f"alpha must be >= 2, got {self.alpha}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if not self.d_ii > 0:
            raise ValueError(f"d_ii must be positive, got {self.d_ii}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.noise_var >= 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")


@dataclass(frozen=True)
class QuadratureParams:
    """Tolerances and engine choice for the numerical integrals.

    Attributes:
        rel_tol: Target relative error per reported value.
        abs_tol: Target absolute error for the plane integral and tails.
        outer_radius: Radius at which the outer radial quadrature hands
            over to the power-law tail treatment; None picks a radius
            from the feature scales of the integrand.
        inner_nodes: Starting node count per axis for the
            Gaussian-weighted tensor rule of the "gauss_hermite" engine.
        engine: "radial" reduces the inner plane integral to one
            dimension using the isotropy of the kernel (default);
            "gauss_hermite" integrates it with a tensorized
            Gaussian-weighted rule that refines until settled.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-7
    outer_radius: float | None = None
    inner_nodes: int = 48
    engine: str = "radial"

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.outer_radius is not None and not self.outer_radius > 0:
            raise ValueError("outer_radius must be positive when given")
        if self.inner_nodes < 8:
            raise ValueError("inner_nodes must be at least 8")
        if self.engine not in ("radial", "gauss_hermite"):
            raise ValueError(f"unknown engine {self.engine!r}")


DEFAULT_QUAD = QuadratureParams()


@dataclass(frozen=True)
class QuadResult:
    """A numerically integrated value with its error estimate."""

    value: float
    error: float

    def __float__(self) -> float:
        return self.value


class QuadratureError(RuntimeError):
    """Raised when an integral cannot be resolved to tolerance.

    Attributes:
        partial: Best available estimate at the point of failure.
    """

    def __init__(self, message: str, partial: float):
        super().__init__(message)
        self.partial = partial


def _require_zero_noise(params: NetworkParams) -> None:
    if params.noise_var != 0:
        raise ValueError("analytical expressions require noise_var = 0")


def _feature_radius(params: NetworkParams) -> float:
    """Distance at which an interferer matches the signal power."""
    return params.threshold ** (1.0 / params.alpha) * params.d_ii


def _attenuation(u: float, r_t: float, alpha: float) -> float:
    """Fading-averaged outage factor of one interferer at distance u.

    Equals ``1 / (1 + (u / r_t)**alpha)``, written to avoid overflow for
    extreme distance ratios.
    """
    if u <= 0.0:
        return 1.0
    ratio = u / r_t
    if ratio > 1.0 and alpha * math.log(ratio) > 700.0:
        return 0.0
    if ratio < 1.0 and alpha * math.log(ratio) < -700.0:
        return 1.0
    return 1.0 / (1.0 + ratio**alpha)


def _attenuation_arr(u: np.ndarray, r_t: float, alpha: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        q = (u / r_t) ** alpha
    return 1.0 / (1.0 + q)


def _inner_tols(quad: QuadratureParams) -> tuple[float, float]:
    return min(quad.abs_tol * 1e-3, 1e-10), min(quad.rel_tol * 1e-2, 1e-8)


def _complement_radial(
    r: float, params: NetworkParams, quad: QuadratureParams
) -> tuple[float, float]:
    """One minus the cluster kernel average of the outage factor.

    Averages ``_attenuation`` over the distance between the receiver
    and a Gaussian-scattered point whose center sits at distance ``r``;
    that distance follows a Rice law with noncentrality ``r``.
    """
    sigma = params.sigma
    r_t = _feature_radius(params)
    s2 = sigma * sigma

    def f(u: float) -> float:
        w = (u / s2) * math.exp(-((u - r) ** 2) / (2.0 * s2)) * i0e(u * r / s2)
        return _attenuation(u, r_t, params.alpha) * w

    lo = max(0.0, r - 13.0 * sigma)
    hi = r + 13.0 * sigma
    pts = [p for p in (r_t, r) if lo < p < hi]
    epsabs, epsrel = _inner_tols(quad)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            f, lo, hi, points=pts or None, limit=200, epsabs=epsabs, epsrel=epsrel
        )
    return min(max(val, 0.0), 1.0), err


def _complement_gauss_hermite(
    r: float, params: NetworkParams, quad: QuadratureParams
) -> tuple[float, float]:
    """Tensorized Gaussian-weighted evaluation of the same average.

    Doubles the per-axis node count until successive values settle
    within tolerance.
    """
    r_t = _feature_radius(params)
    scale = math.sqrt(2.0) * params.sigma
    prev = None
    n = quad.inner_nodes
    # hermgauss weights overflow beyond roughly 350 nodes, so the
    # refinement stops there rather than produce NaN estimates.
    while n <= 320:
        nodes, wts = np.polynomial.hermite.hermgauss(n)
        xx = scale * nodes
        dist = np.hypot(xx[:, None] - r, xx[None, :])
        val = float(
            np.einsum(
                "i,j,ij->", wts, wts, _attenuation_arr(dist, r_t, params.alpha)
            )
            / math.pi
        )
        if not math.isfinite(val):
            break
        val = min(max(val, 0.0), 1.0)
        if prev is not None:
            change = abs(val - prev)
            if change <= max(quad.rel_tol * abs(val), 0.1 * quad.abs_tol):
                return val, change
        prev = val
        n *= 2
    raise QuadratureError(
        f"inner rule did not settle within {n // 2} nodes per axis "
        f"(scattering scale {params.sigma} vs feature scale {r_t:.3g})",
        partial=prev,
    )


def _complement(
    r: float, params: NetworkParams, quad: QuadratureParams
) -> tuple[float, float]:
    if params.threshold == 0:
        return 0.0, 0.0
    # Far beyond the kernel width the average collapses onto the center
    # value; second-order curvature bounds the switch error.
    if 13.0 * params.sigma <= 1e-6 * r:
        val = _attenuation(r, _feature_radius(params), params.alpha)
        curv = params.alpha * (params.alpha + 1.0) * (params.sigma / r) ** 2
        return val, val * 2.0 * curv
    if quad.engine == "gauss_hermite":
        return _complement_gauss_hermite(r, params, quad)
    return _complement_radial(r, params, quad)


def beta_tilde(
    params: NetworkParams, y: np.ndarray, quad: QuadratureParams = DEFAULT_QUAD
) -> QuadResult:
    """Per-cluster success factor for a cluster whose parent offset is y.

    The receiver sits at ``(d_ii, 0)``; the value is the kernel average
    of ``1 / (1 + T * g(x - y - z) / g(z))`` over the scattering
    displacement ``x``, which lies in [0, 1].

    Raises:
        ValueError: If ``noise_var`` is nonzero.
        QuadratureError: If the selected engine cannot reach tolerance.
    """
    _require_zero_noise(params)
    y = np.asarray(y, dtype=float)
    r = math.hypot(y[0] + params.d_ii, y[1])
    comp, err = _complement(r, params, quad)
    return QuadResult(value=min(max(1.0 - comp, 0.0), 1.0), error=err)


def jensen_bound(params: NetworkParams, y: np.ndarray) -> float:
    """Closed-form upper bound on ``beta_tilde`` via moment convexity.

    Replaces the averaged fourth power of the interferer distance with
    its exact second raw moment, valid while the mapping stays concave.

    Raises:
        ValueError: If ``alpha > 4``, where concavity fails.
    """
    _require_zero_noise(params)
    if params.alpha > 4:
        raise ValueError("the moment bound requires alpha <= 4")
    if params.threshold == 0:
        return 1.0
    y = np.asarray(y, dtype=float)
    s2 = params.sigma**2
    v = (y[0] + params.d_ii) ** 2 + y[1] ** 2
    m2 = (2.0 * s2 + v) ** 2 + 4.0 * s2 * s2 + 4.0 * s2 * v
    q = params.threshold * params.d_ii**params.alpha * m2 ** (-params.alpha / 4.0)
    return 1.0 / (1.0 + q)


def _outer_radius(params: NetworkParams, quad: QuadratureParams) -> float:
    if quad.outer_radius is not None:
        return quad.outer_radius
    r_t = _feature_radius(params)
    return max(4.0, params.d_ii + 8.0 * params.sigma + 4.0 * r_t, 14.0 * params.sigma)


def _tail_bound(params: NetworkParams, radius: float) -> float:
    """Upper estimate of the plane integral beyond the given radius.

    Uses the leading power-law decay of the integrand,
    ``cbar * T * g(r) / g(d_ii) * 2 pi r``.
    """
    a = params.alpha
    rta = params.threshold * params.d_ii**a
    return 2.0 * math.pi * params.cbar * rta * radius ** (2.0 - a) / (a - 2.0)


def _escalate(kind: str, val: float, err: float, quad: QuadratureParams) -> None:
    if err > 50.0 * max(quad.abs_tol, quad.rel_tol * abs(val)):
        raise QuadratureError(
            f"{kind} integral error {err:.2e} too large for value {val:.6e}",
            partial=val,
        )


def xi(params: NetworkParams, quad: QuadratureParams = DEFAULT_QUAD) -> QuadResult:
    """Plane integral of one minus the per-cluster factor to the cbar.

    This is the exponent driving the success probability: the integrand
    ``1 - beta_tilde(y)**cbar`` is isotropic around ``-z`` and decays
    like ``cbar * T * g(r) / g(d_ii)``, so the outer integral runs in
    polar form with an explicit power-law tail.

    Raises:
        ValueError: If ``alpha <= 2`` (the tail does not integrate) or
            noise is nonzero.
    """
    _require_zero_noise(params)
    a = params.alpha
    if a <= 2:
        raise ValueError("the outer integral diverges for alpha <= 2")
    if params.threshold == 0:
        return QuadResult(0.0, 0.0)
    cbar = params.cbar

    def integrand(r: float) -> float:
        comp, _ = _complement(r, params, quad)
        if comp >= 1.0:
            return 2.0 * math.pi * r
        return -2.0 * math.pi * r * math.expm1(cbar * math.log1p(-comp))

    r1 = _outer_radius(params, quad)
    r_t = _feature_radius(params)
    pts = sorted(
        {p for p in (params.sigma, params.d_ii, r_t, params.d_ii + 4.0 * params.sigma)
         if 0.0 < p < r1}
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v1, e1 = integrate.quad(
            integrand, 0.0, r1, points=pts or None, limit=400,
            epsabs=0.4 * quad.abs_tol, epsrel=quad.rel_tol,
        )

    # Power-law region: substitute r = r1 * t**(-p) with p = 2/(alpha-2),
    # which flattens the decaying integrand to roughly linear in t.
    pexp = 2.0 / (a - 2.0)
    r_max = (2.0 * math.pi * cbar * params.threshold * params.d_ii**a
             / ((a - 2.0) * quad.abs_tol)) ** (1.0 / (a - 2.0))
    r_max = min(r_max, 10.0 ** (280.0 / a))
    v2 = e2 = 0.0
    if r_max > r1:
        t_min = (r1 / r_max) ** (1.0 / pexp)

        def transformed(t: float) -> float:
            r = r1 * t ** (-pexp)
            return integrand(r) * pexp * r1 * t ** (-pexp - 1.0)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v2, e2 = integrate.quad(
                transformed, t_min, 1.0, limit=400,
                epsabs=0.4 * quad.abs_tol, epsrel=quad.rel_tol,
            )
        tail = _tail_bound(params, r_max)
    else:
        tail = _tail_bound(params, r1)

    value = v1 + v2 + tail
    error = e1 + e2 + tail
    _escalate("outer", value, error, quad)
    return QuadResult(value=value, error=error)


def success_prob_ia(
    params: NetworkParams, quad: QuadratureParams = DEFAULT_QUAD
) -> QuadResult:
    """Success probability when every cluster aligns its own interference.

    Equals ``exp(-lambda_p * xi)``; only clusters other than the
    reference one contribute interference.
    """
    x = xi(params, quad)
    p = math.exp(-params.lambda_p * x.value)
    return QuadResult(value=p, error=p * params.lambda_p * x.error)


def _intra_factor(
    params: NetworkParams, quad: QuadratureParams
) -> tuple[float, float]:
    """Average of the per-cluster factor to the cbar-1 over the own cluster.

    The reference receiver's distance to its own cluster center is Rice
    distributed with noncentrality ``d_ii``.
    """
    if params.cbar == 1 or params.threshold == 0:
        return 1.0, 0.0
    sigma = params.sigma
    s2 = sigma * sigma
    d = params.d_ii
    n_sib = params.cbar - 1

    def f(r: float) -> float:
        comp, _ = _complement(r, params, quad)
        w = (r / s2) * math.exp(-((r - d) ** 2) / (2.0 * s2)) * i0e(r * d / s2)
        if comp >= 1.0:
            return 0.0
        return w * math.exp(n_sib * math.log1p(-comp))

    lo = max(0.0, d - 13.0 * sigma)
    hi = d + 13.0 * sigma
    r_t = _feature_radius(params)
    pts = [p for p in (r_t, d) if lo < p < hi]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            f, lo, hi, points=pts or None, limit=200,
            epsabs=0.5 * quad.abs_tol, epsrel=quad.rel_tol,
        )
    _escalate("intra-cluster", val, err, quad)
    return min(max(val, 0.0), 1.0), err


def success_prob_siso(
    params: NetworkParams, quad: QuadratureParams = DEFAULT_QUAD
) -> QuadResult:
    """Success probability without cooperation, single antennas everywhere.

    The reference link then also suffers interference from its own
    cluster mates, which multiplies the aligned-case probability by the
    kernel average of the per-cluster factor to the power ``cbar - 1``.
    """
    p_ia = success_prob_ia(params, quad)
    w, ew = _intra_factor(params, quad)
    return QuadResult(value=p_ia.value * w, error=p_ia.error * w + p_ia.value * ew)


def upper_bound_1d(
    params: NetworkParams, quad: QuadratureParams = DEFAULT_QUAD
) -> QuadResult:
    """Upper bound on the aligned success probability via a 1-D integral.

    Bounding the per-cluster factor by its moment form turns the plane
    integral into a single integral over ``s`` starting at
    ``4 * sigma**2``, again with an explicit power-law tail.

    Raises:
        ValueError: Unless ``2 <= alpha <= 4``.
    """
    _require_zero_noise(params)
    a = params.alpha
    if not 2.0 <= a <= 4.0:
        raise ValueError("the one-dimensional bound requires 2 <= alpha <= 4")
    if a == 2.0:
        raise ValueError("the bound integral diverges for alpha = 2")
    if params.threshold == 0:
        return QuadResult(1.0, 0.0)
    cbar = params.cbar
    sigma4 = params.sigma**4
    rta = params.threshold * params.d_ii**a

    def g_of_s(s: float) -> float:
        base = s * s - 8.0 * sigma4
        if base <= 0.0:
            return 1.0
        q = rta * base ** (-a / 4.0)
        return -math.expm1(-cbar * math.log1p(q))

    lower = 4.0 * params.sigma**2
    r_t2 = _feature_radius(params) ** 2
    s1 = max(4.0 * lower, 6.0 * r_t2, 2.0)
    pts = [p for p in (r_t2,) if lower < p < s1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v1, e1 = integrate.quad(
            g_of_s, lower, s1, points=pts or None, limit=300,
            epsabs=0.4 * quad.abs_tol, epsrel=quad.rel_tol,
        )
    half = a / 2.0 - 1.0
    s_max = min((cbar * rta / (half * quad.abs_tol)) ** (1.0 / half), 1e150)
    v2 = e2 = 0.0
    if s_max > s1:
        pexp = 1.0 / half
        t_min = (s1 / s_max) ** half

        def transformed(t: float) -> float:
            s = s1 * t ** (-pexp)
            return g_of_s(s) * pexp * s1 * t ** (-pexp - 1.0)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v2, e2 = integrate.quad(
                transformed, t_min, 1.0, limit=300,
                epsabs=0.4 * quad.abs_tol, epsrel=quad.rel_tol,
            )
        tail = cbar * rta * s_max ** (-half) / half
    else:
        tail = cbar * rta * s1 ** (-half) / half
    total = v1 + v2 + tail
    err = e1 + e2 + tail
    _escalate("bound", total, err, quad)
    value = math.exp(-params.lambda_p * math.pi * total)
    return QuadResult(value=value, error=value * params.lambda_p * math.pi * err)


def delta_coeff(cbar: int) -> float:
    """Cluster-size coefficient of the closed-form bound.

    The alternating half-integer binomial sum collapses to
    ``sum(C(2k, k) / 4**k)`` over ``k < cbar``, which is strictly
    increasing in ``cbar``.
    """
    if not (isinstance(cbar, (int, np.integer)) and cbar >= 1):
        raise ValueError(f"cbar must be an integer >= 1, got {cbar}")
    return float(sum(math.comb(2 * k, k) / 4.0**k for k in range(cbar)))


def upper_bound_closed_form(params: NetworkParams) -> float:
    """Closed-form upper bound on the aligned success probability.

    Valid for ``alpha = 4``; derived for tightly clustered networks, so
    a warning is emitted when ``sigma**2`` exceeds 0.25.

    Raises:
        ValueError: If ``alpha != 4``.
    """
    _require_zero_noise(params)
    if params.alpha != 4.0:
        raise ValueError("the closed-form bound requires alpha = 4")
    if params.sigma**2 > 0.25:
        warnings.warn(
            "closed-form bound derived for small scattering scales; "
            f"sigma**2 = {params.sigma ** 2:.3g} exceeds 0.25",
            UserWarning,
            stacklevel=2,
        )
    if params.threshold == 0:
        return 1.0
    d2 = params.d_ii**2
    root_t = math.sqrt(params.threshold)
    exponent = (
        params.lambda_p
        * math.pi
        * delta_coeff(params.cbar)
        * d2
        * root_t
        * math.atan(d2 * root_t / (4.0 * params.sigma**2))
    )
    return math.exp(-exponent)


def c_alpha(alpha: float) -> float:
    """Interference constant of the homogeneous-PPP success probability.

    Returns:
        ``2 * pi**2 / (alpha * sin(2 * pi / alpha))``.

    Raises:
        ValueError: For ``alpha <= 2``, where the constant diverges.
    """
    if alpha <= 2:
        raise ValueError("the PPP constant requires alpha > 2")
    return 2.0 * math.pi**2 / (alpha * math.sin(2.0 * math.pi / alpha))


def ppp_baseline(params: NetworkParams) -> float:
    """Success probability with the same intensity but no clustering.

    Treats all transmitters as a homogeneous Poisson process of
    intensity ``lambda_p * cbar``.
    """
    exponent = (
        params.lambda_p
        * params.cbar
        * params.d_ii**2
        * params.threshold ** (2.0 / params.alpha)
        * c_alpha(params.alpha)
    )
    return math.exp(-exponent)
