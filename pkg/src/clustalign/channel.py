"""Power-law path loss and Rayleigh MIMO channel generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PathLossModel",
    "MimoChannel",
    "path_gain",
    "sample_channel",
    "standard_complex_normal",
]


@dataclass(frozen=True)
class PathLossModel:
    """Unbounded power-law attenuation ``g(d) = d**(-alpha)``.

    Attributes:
        alpha: Path-loss exponent, at least 2. Some downstream bounds
            additionally require ``alpha <= 4``; they enforce that
            themselves.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha >= 2:
            raise ValueError(f"alpha must be >= 2, got {self.alpha}")


@dataclass(frozen=True)
class MimoChannel:
    """A narrowband MIMO channel with i.i.d. Rayleigh-fading entries.

    Attributes:
        entries: Complex matrix of shape ``(n_r, n_t)``.
        n_r: Receive antenna count.
        n_t: Transmit antenna count.
        mu: Per-entry variance; ``abs(entry)**2`` is exponential with
            mean ``mu``.
    """

    entries: np.ndarray
    n_r: int
    n_t: int
    mu: float

    def __post_init__(self) -> None:
        if self.entries.shape != (self.n_r, self.n_t):
            raise ValueError(
                f"entries shape {self.entries.shape} does not match "
                f"({self.n_r}, {self.n_t})"
            )
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


def path_gain(model: PathLossModel, distance: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the path gain at one or more distances.

    Args:
        model: Path-loss model.
        distance: Positive scalar or array of distances.

    Returns:
        ``distance**(-alpha)``, matching the input shape.

    Raises:
        ValueError: If any distance is zero or negative; the power law
            has a pole at the origin.
    """
    d = np.asarray(distance, dtype=float)
    if not np.all(d > 0):
        raise ValueError("path gain requires strictly positive distance")
    val = d ** (-model.alpha)
    return float(val) if val.ndim == 0 else val


def standard_complex_normal(
    rng: np.random.Generator, shape: tuple[int, ...] | int = ()
) -> np.ndarray:
    """Draw circularly symmetric complex Gaussians with unit variance.

    Real and imaginary parts are independent with variance 1/2 each, so
    the squared magnitude is exponential with mean 1.
    """
    if isinstance(shape, int):
        shape = (shape,)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def sample_channel(
    n_r: int, n_t: int, mu: float, rng: np.random.Generator
) -> MimoChannel:
    """Draw a Rayleigh MIMO channel with per-entry variance ``mu``.

    Entries are built as ``sqrt(mu)`` times unit-variance draws, so two
    calls with matched generator states and different ``mu`` produce
    matrices that differ exactly by the scale factor.
    """
    if n_r < 1 or n_t < 1:
        raise ValueError("antenna counts must be >= 1")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    entries = np.sqrt(mu) * standard_complex_normal(rng, (n_r, n_t))
    return MimoChannel(entries=entries, n_r=n_r, n_t=n_t, mu=mu)
