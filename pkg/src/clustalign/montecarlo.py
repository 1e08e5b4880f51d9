"""Channel-level Monte-Carlo estimation of transmission success.

Each trial drops a Palm-conditioned cluster process around the reference
transmitter, draws Rayleigh channels, applies the selected cooperation
mode, and checks the resulting SIR against the threshold. Every trial
derives its randomness from ``(master_seed, trial_index, attempt, tag)``
substreams with separate tags for geometry, fading, interferer
precoders, and solver initialization, so results do not depend on
execution order and single factors can be varied with the rest pinned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from clustalign.alignment import (
    ConvergenceError,
    FeasibilityError,
    _closed_form_batch,
    _min_leakage_batch,
    is_feasible,
    leakage_terms,
)
from clustalign.analysis import NetworkParams
from clustalign.channel import PathLossModel, path_gain, standard_complex_normal
from clustalign.pointprocess import (
    ClusterConfig,
    PalmRealization,
    ScatterKernel,
    sample_palm,
)

__all__ = [
    "Mode",
    "PrecoderMode",
    "TrialConfig",
    "TrialResult",
    "SuccessEstimate",
    "default_window_radius",
    "run_trial",
    "estimate_success",
]

_GEOM, _FADE, _PRECODER, _INIT = 101, 211, 307, 401
_MAX_ATTEMPTS = 8


class Mode(Enum):
    """Cooperation mode of the reference cluster."""

    MIMO_IA = "mimo_ia"
    SISO = "siso"


class PrecoderMode(Enum):
    """How interfering transmitters pick their precoders.

    ISOTROPIC draws independent unit vectors, which matches the
    distribution of aligned precoders as seen from outside the cluster.
    FULL_IA actually solves alignment inside every interfering cluster.
    """

    ISOTROPIC = "isotropic"
    FULL_IA = "full_ia"


def default_window_radius(params: NetworkParams) -> float:
    """Simulation window radius keeping truncation bias negligible.

    Combines the link distance, the cluster spread, and the distance at
    which expected interference falls well below the threshold-relevant
    level.
    """
    base = params.d_ii + 12.0 * params.sigma
    if params.threshold > 0:
        dens = params.lambda_p * params.cbar * params.threshold
        base += 4.0 / dens ** (1.0 / params.alpha)
    return max(10.0, base)


@dataclass(frozen=True)
class TrialConfig:
    """Static description of one Monte-Carlo experiment.

    Attributes:
        params: Network parameters of the trial.
        mode: Cooperation mode; SISO forces single antennas.
        n_t: Transmit antennas (MIMO mode). None selects 2, or 1 in
            SISO mode.
        n_r: Receive antennas, same convention.
        trials: Number of trials for estimate_success.
        master_seed: Root of all randomness.
        interferer_precoder_mode: Precoder model for other clusters.
        window_radius: Analysis window radius; None derives it from the
            parameters. Parents are sampled on a disc enlarged by six
            scattering deviations so daughters near the edge keep their
            full interference environment.
        ia_method: "auto" uses the closed-form construction when the
            cluster is three pairs of 2x2 channels and the iterative
            solver otherwise; "iterative" and "closed_form" force one.
        ia_tolerance: Leakage acceptance threshold for the solver.
        ia_max_iterations: Per-attempt iteration cap.
        ia_restarts: Random restarts allowed inside the solver.
    """

    params: NetworkParams
    mode: Mode = Mode.MIMO_IA
    n_t: int | None = None
    n_r: int | None = None
    trials: int = 100_000
    master_seed: int = 0
    interferer_precoder_mode: PrecoderMode = PrecoderMode.ISOTROPIC
    window_radius: float | None = None
    ia_method: str = "auto"
    ia_tolerance: float = 1e-8
    ia_max_iterations: int = 5000
    ia_restarts: int = 5

    def __post_init__(self) -> None:
        if self.mode is Mode.SISO:
            if (self.n_t not in (None, 1)) or (self.n_r not in (None, 1)):
                raise ValueError("SISO mode forces n_t = n_r = 1")
            object.__setattr__(self, "n_t", 1)
            object.__setattr__(self, "n_r", 1)
        else:
            object.__setattr__(self, "n_t", self.n_t if self.n_t else 2)
            object.__setattr__(self, "n_r", self.n_r if self.n_r else 2)
            if not is_feasible(self.n_t, self.n_r, self.params.cbar):
                raise FeasibilityError(
                    f"cannot align cbar={self.params.cbar} pairs with "
                    f"n_t={self.n_t}, n_r={self.n_r}: "
                    "need n_r + n_t - 1 >= cbar"
                )
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.window_radius is not None and not self.window_radius > 0:
            raise ValueError("window_radius must be positive when given")
        if self.ia_method not in ("auto", "iterative", "closed_form"):
            raise ValueError(f"unknown ia_method {self.ia_method!r}")
        if self.ia_method == "closed_form" and self._shape() != (3, 2, 2):
            raise ValueError(
                "closed-form construction needs cbar=3 with 2x2 channels"
            )

    def _shape(self) -> tuple[int, int, int]:
        return (self.params.cbar, self.n_r, self.n_t)

    def resolved_window(self) -> float:
        """The analysis window radius actually used by the trials."""
        if self.window_radius is not None:
            return self.window_radius
        return default_window_radius(self.params)

    def resolved_ia_method(self) -> str:
        if self.ia_method == "auto":
            return "closed_form" if self._shape() == (3, 2, 2) else "iterative"
        return self.ia_method


@dataclass(frozen=True)
class TrialResult:
    """Outcome of a single trial.

    Attributes:
        sir: Signal-to-interference(-plus-noise) ratio; infinite when
            nothing interferes and the noise is zero.
        success: Whether ``sir`` met the threshold.
        signal_power: Effective fading power of the reference link,
            scaled by the mean fading power ``mu``.
        attempts: Draw attempts consumed, above 1 only after solver
            failures forced a resample.
    """

    sir: float
    success: bool
    signal_power: float
    attempts: int = 1


@dataclass(frozen=True)
class SuccessEstimate:
    """Aggregated success probability estimate.

    Attributes:
        p_hat: Fraction of successful trials.
        trials: Trial count behind the estimate.
        ci_half_width: 95% normal-approximation confidence half-width,
            ``1.96 * sqrt(p_hat * (1 - p_hat) / trials)``.
        seed: Master seed the estimate derives from.
        resampled: Trials that needed fresh substreams after solver
            failures.
    """

    p_hat: float
    trials: int
    ci_half_width: float
    seed: int
    resampled: int = 0


def _stream(seed: int, trial: int, attempt: int, tag: int) -> np.random.Generator:
    return np.random.default_rng((seed, trial, attempt, tag))


def _unit_rows(vecs: np.ndarray) -> np.ndarray:
    return vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)


def _basis_vector(n: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[0] = 1.0
    return e


def _solve_cluster_batch(
    config: TrialConfig, mats: np.ndarray, rng_init: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Precoders and combiners for a batch of clusters, shape (m, c, .).

    Raises:
        ConvergenceError: If any cluster in the batch fails to align.
    """
    m, cbar = mats.shape[0], mats.shape[1]
    if cbar == 1:
        v = np.tile(_basis_vector(config.n_t), (m, 1, 1))
        u = np.tile(_basis_vector(config.n_r), (m, 1, 1))
        return v, u
    if config.resolved_ia_method() == "closed_form":
        v, u = _closed_form_batch(mats)
        residual = np.sum(leakage_terms(mats, u, v), axis=(-2, -1))
        worst = float(np.max(residual))
        if not worst <= config.ia_tolerance:
            raise ConvergenceError(
                f"closed-form residual {worst:.3e} above tolerance", worst
            )
        return v, u
    v, u, leak, _, _, ok = _min_leakage_batch(
        mats,
        config.ia_tolerance,
        config.ia_max_iterations,
        config.ia_restarts,
        rng_init,
    )
    if not np.all(ok):
        raise ConvergenceError(
            "alignment failed for an interfering cluster", float(np.max(leak))
        )
    return v, u


def _attempt_mimo(
    config: TrialConfig,
    realization: PalmRealization,
    trial_index: int,
    attempt: int,
) -> tuple[float, float, float]:
    """Signal and interference powers for one MIMO trial, fading scale 1."""
    p = config.params
    cbar, n_r, n_t = p.cbar, config.n_r, config.n_t
    rng_fade = _stream(config.master_seed, trial_index, attempt, _FADE)
    cluster = standard_complex_normal(rng_fade, (cbar, cbar, n_r, n_t))

    positions = realization.other_daughters.reshape(-1, 2)
    k = positions.shape[0]
    h_int = standard_complex_normal(rng_fade, (k, n_r, n_t))

    rng_init = _stream(config.master_seed, trial_index, attempt, _INIT)
    v_all, u_all = _solve_cluster_batch(config, cluster[None], rng_init)
    v_ref, u_ref = v_all[0, 0], u_all[0, 0]

    if k:
        if config.interferer_precoder_mode is PrecoderMode.ISOTROPIC:
            rng_prec = _stream(config.master_seed, trial_index, attempt, _PRECODER)
            v_int = _unit_rows(standard_complex_normal(rng_prec, (k, n_t)))
        else:
            n_clusters = realization.other_parents.shape[0]
            internals = standard_complex_normal(
                rng_fade, (n_clusters, cbar, cbar, n_r, n_t)
            )
            v_clusters, _ = _solve_cluster_batch(config, internals, rng_init)
            v_int = v_clusters.reshape(k, n_t)
        coeff = np.einsum("r,krt,kt->k", np.conj(u_ref), h_int, v_int)
        model = PathLossModel(p.alpha)
        dists = np.hypot(positions[:, 0] - p.d_ii, positions[:, 1])
        interference = float(np.sum(np.abs(coeff) ** 2 * path_gain(model, dists)))
    else:
        interference = 0.0

    h_direct = complex(np.vdot(u_ref, cluster[0, 0] @ v_ref))
    signal_fade = abs(h_direct) ** 2
    signal = signal_fade * p.d_ii ** (-p.alpha)
    return signal, interference, signal_fade


def _attempt_siso(
    config: TrialConfig,
    realization: PalmRealization,
    trial_index: int,
    attempt: int,
) -> tuple[float, float, float]:
    """Signal and interference powers for one SISO trial, fading scale 1."""
    p = config.params
    rng_fade = _stream(config.master_seed, trial_index, attempt, _FADE)
    h_direct = standard_complex_normal(rng_fade, ())
    positions = realization.interferer_positions(include_siblings=True)
    k = positions.shape[0]
    if k:
        h_int = standard_complex_normal(rng_fade, (k,))
        model = PathLossModel(p.alpha)
        dists = np.hypot(positions[:, 0] - p.d_ii, positions[:, 1])
        interference = float(
            np.sum(np.abs(h_int) ** 2 * path_gain(model, dists))
        )
    else:
        interference = 0.0
    signal_fade = abs(complex(h_direct)) ** 2
    signal = signal_fade * p.d_ii ** (-p.alpha)
    return signal, interference, signal_fade


def run_trial(
    config: TrialConfig,
    trial_index: int,
    *,
    geometry: PalmRealization | None = None,
) -> TrialResult:
    """Run one trial and report its SIR and success indicator.

    With zero noise the SIR is formed directly from unit-variance
    fading draws: the mean fading power cancels from the ratio, so the
    success indicator is exactly independent of ``mu``. With positive
    noise the fading terms are scaled by ``mu`` before the ratio.

    In MIMO mode the reference cluster's own transmitters never enter
    the interference sum (their contribution is the solver's residual
    leakage, already below tolerance); sibling positions are therefore
    ignored. SISO mode includes them.

    Args:
        config: Experiment description.
        trial_index: Index selecting the trial's random substreams.
        geometry: Optional fixed realization replacing the geometry
            draw, for matched-seed studies.

    Returns:
        The trial outcome; ``attempts`` exceeds 1 when a solver failure
        forced a resample from fresh substreams.

    Raises:
        RuntimeError: If resampling fails repeatedly.
        ValueError: If a supplied geometry disagrees with the cluster
            size.
    """
    p = config.params
    if geometry is not None and geometry.cbar != p.cbar:
        raise ValueError(
            f"geometry has cbar={geometry.cbar}, expected {p.cbar}"
        )
    last: ConvergenceError | ArithmeticError | None = None
    for attempt in range(_MAX_ATTEMPTS):
        if geometry is not None:
            realization = geometry
        else:
            rng_geom = _stream(config.master_seed, trial_index, attempt, _GEOM)
            cluster_cfg = ClusterConfig(
                lambda_p=p.lambda_p, cbar=p.cbar, kernel=ScatterKernel(p.sigma)
            )
            realization = sample_palm(
                cluster_cfg,
                config.resolved_window() + 6.0 * p.sigma,
                rng_geom,
            )
        try:
            if config.mode is Mode.SISO:
                signal, interference, fade = _attempt_siso(
                    config, realization, trial_index, attempt
                )
            else:
                signal, interference, fade = _attempt_mimo(
                    config, realization, trial_index, attempt
                )
        except (ConvergenceError, ArithmeticError) as exc:
            last = exc
            continue
        if p.noise_var == 0:
            sir = math.inf if interference == 0.0 else signal / interference
        else:
            sir = (p.mu * signal) / (p.noise_var + p.mu * interference)
        return TrialResult(
            sir=sir,
            success=sir >= p.threshold,
            signal_power=p.mu * fade,
            attempts=attempt + 1,
        )
    raise RuntimeError(
        f"trial {trial_index} failed {_MAX_ATTEMPTS} attempts; last: {last}"
    )


def estimate_success(config: TrialConfig) -> SuccessEstimate:
    """Estimate the success probability over ``config.trials`` trials.

    The estimate depends only on the master seed and the configuration,
    not on execution order; each trial owns its substreams and the
    aggregation is a plain count.

    Raises:
        ValueError: If fewer than 100 trials are requested.
        RuntimeError: If more than 0.1% of trials (at least one) need
            resampling, which would signal a broken solver setup.
    """
    if config.trials < 100:
        raise ValueError("need at least 100 trials for a meaningful estimate")
    allowed = max(1, config.trials // 1000)
    successes = 0
    resampled = 0
    for t in range(config.trials):
        result = run_trial(config, t)
        successes += int(result.success)
        resampled += result.attempts - 1
        if resampled > allowed:
            raise RuntimeError(
                f"{resampled} resampled trials exceeded the cap of {allowed}"
            )
    p_hat = successes / config.trials
    ci = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / config.trials)
    return SuccessEstimate(
        p_hat=p_hat,
        trials=config.trials,
        ci_half_width=ci,
        seed=config.master_seed,
        resampled=resampled,
    )
