"""Sampling of planar Poisson cluster processes with fixed cluster size.

Parents form a homogeneous Poisson process on a disc; every parent
carries exactly ``cbar`` daughter points scattered around it by an
isotropic Gaussian kernel. The Palm view conditions the process on one
daughter (the reference transmitter) sitting at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScatterKernel",
    "ClusterConfig",
    "PalmRealization",
    "scatter_pdf",
    "sample_parent_ppp",
    "scatter_daughters",
    "sample_palm",
]


@dataclass(frozen=True)
class ScatterKernel:
    """Isotropic Gaussian displacement kernel for daughter points.

    Attributes:
        sigma: Per-axis standard deviation of the displacement, in the
            same distance units as the window. The squared displacement
            norm has mean ``2 * sigma**2``.
    """

    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class ClusterConfig:
    """Intensity and cluster-size parameters of the cluster process.

    Attributes:
        lambda_p: Parent intensity in points per unit area.
        cbar: Number of daughters per cluster, a fixed positive integer.
        kernel: Displacement kernel shared by all daughters.
    """

    lambda_p: float
    cbar: int
    kernel: ScatterKernel

    def __post_init__(self) -> None:
        if not self.lambda_p > 0:
            raise ValueError(f"lambda_p must be positive, got {self.lambda_p}")
        if not (isinstance(self.cbar, (int, np.integer)) and self.cbar >= 1):
            raise ValueError(f"cbar must be an integer >= 1, got {self.cbar}")

    @property
    def total_intensity(self) -> float:
        """Intensity of the daughter process, ``lambda_p * cbar``."""
        return self.lambda_p * self.cbar


@dataclass(frozen=True)
class PalmRealization:
    """One sampled network as seen from a transmitter at the origin.

    The reference transmitter is a daughter of a cluster whose parent
    sits at ``reference_parent``; its ``cbar - 1`` cluster mates are in
    ``sibling_txs``. Every other cluster contributes its parent (row of
    ``other_parents``) and its ``cbar`` daughters (matching row of
    ``other_daughters``). Daughters may fall outside the window disc;
    parents never do.

    Attributes:
        reference_tx: Shape ``(2,)``, always the origin.
        reference_parent: Shape ``(2,)`` position of the reference
            cluster's parent.
        sibling_txs: Shape ``(cbar - 1, 2)``.
        other_parents: Shape ``(n, 2)``.
        other_daughters: Shape ``(n, cbar, 2)``.
        window_radius: Radius of the disc on which parents were drawn.
    """

    reference_tx: np.ndarray
    reference_parent: np.ndarray
    sibling_txs: np.ndarray
    other_parents: np.ndarray
    other_daughters: np.ndarray
    window_radius: float

    def __post_init__(self) -> None:
        n = self.other_parents.shape[0]
        if self.other_daughters.shape[0] != n:
            raise ValueError("one daughter row required per parent")
        if self.other_daughters.ndim != 3 or self.other_daughters.shape[2] != 2:
            raise ValueError("other_daughters must have shape (n, cbar, 2)")
        if n and self.other_daughters.shape[1] != self.sibling_txs.shape[0] + 1:
            raise ValueError(
                "other clusters must hold cbar daughters each, with cbar - 1 siblings"
            )
        if n and np.hypot(*self.other_parents.T).max() > self.window_radius * (1 + 1e-12):
            raise ValueError("parent point outside the window disc")

    @property
    def cbar(self) -> int:
        return self.sibling_txs.shape[0] + 1

    @property
    def other_clusters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Clusters outside the reference one, as (parent, daughters) pairs."""
        return list(zip(self.other_parents, self.other_daughters))

    def interferer_positions(self, include_siblings: bool) -> np.ndarray:
        """All transmitter positions other than the reference one.

        Daughters of other clusters come first, ordered cluster by
        cluster; siblings are appended when requested.
        """
        others = self.other_daughters.reshape(-1, 2)
        if include_siblings and self.sibling_txs.size:
            return np.concatenate([others, self.sibling_txs], axis=0)
        return others


def scatter_pdf(kernel: ScatterKernel, offset: np.ndarray) -> float | np.ndarray:
    """Density of the daughter displacement at the given offset.

    Args:
        kernel: Scattering kernel.
        offset: Displacement vector(s), shape ``(2,)`` or ``(..., 2)``.

    Returns:
        The Gaussian density value; an array when ``offset`` is batched.
    """
    offset = np.asarray(offset, dtype=float)
    s2 = kernel.sigma**2
    sq = np.sum(offset**2, axis=-1)
    val = np.exp(-sq / (2.0 * s2)) / (2.0 * np.pi * s2)
    return float(val) if val.ndim == 0 else val


def sample_parent_ppp(
    lambda_p: float, window_radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Sample a homogeneous Poisson process on a disc centred at the origin.

    Args:
        lambda_p: Intensity in points per unit area.
        window_radius: Disc radius.
        rng: Source of randomness; equal generator states give equal output.

    Returns:
        Array of shape ``(n, 2)`` with ``n`` Poisson distributed.
    """
    if not window_radius > 0:
        raise ValueError(f"window_radius must be positive, got {window_radius}")
    n = rng.poisson(lambda_p * np.pi * window_radius**2)
    radii = window_radius * np.sqrt(rng.random(n))
    angles = 2.0 * np.pi * rng.random(n)
    return np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])


def scatter_daughters(
    parent: np.ndarray, count: int, kernel: ScatterKernel, rng: np.random.Generator
) -> np.ndarray:
    """Scatter daughter points around a parent position.

    Args:
        parent: Parent position, shape ``(2,)``.
        count: Number of daughters, at least 1.
        kernel: Displacement kernel.
        rng: Source of randomness.

    Returns:
        Array of shape ``(count, 2)``.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    parent = np.asarray(parent, dtype=float)
    return parent + rng.normal(0.0, kernel.sigma, size=(count, 2))


def sample_palm(
    config: ClusterConfig, window_radius: float, rng: np.random.Generator
) -> PalmRealization:
    """Sample the cluster process conditioned on a daughter at the origin.

    The reference daughter's parent lands at ``-x`` where ``x`` follows
    the scattering kernel, so the daughter itself is the origin. The rest
    of the network is an independent copy of the process: parents drawn
    on the window disc, each with ``cbar`` daughters.

    Draws happen in a fixed order (reference parent offset, siblings,
    parent process, daughters), so equal generator states give
    bit-identical realizations.

    Args:
        config: Process parameters.
        window_radius: Radius of the parent sampling disc. Callers that
            need daughters near a larger analysis window should enlarge
            the radius themselves; daughters falling outside the disc
            are kept either way.
        rng: Source of randomness.

    Returns:
        A PalmRealization with the reference transmitter at the origin.
    """
    sigma = config.kernel.sigma
    reference_parent = -rng.normal(0.0, sigma, size=2)
    if config.cbar > 1:
        siblings = scatter_daughters(reference_parent, config.cbar - 1, config.kernel, rng)
    else:
        siblings = np.empty((0, 2))
    parents = sample_parent_ppp(config.lambda_p, window_radius, rng)
    offsets = rng.normal(0.0, sigma, size=(parents.shape[0], config.cbar, 2))
    daughters = parents[:, None, :] + offsets
    return PalmRealization(
        reference_tx=np.zeros(2),
        reference_parent=reference_parent,
        sibling_txs=siblings,
        other_parents=parents,
        other_daughters=daughters,
        window_radius=float(window_radius),
    )
