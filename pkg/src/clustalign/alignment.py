"""Spatial interference alignment inside one cluster.

Each of the ``cbar`` transmitter-receiver pairs sends one stream through
a precoder ``v_j``; each receiver applies a combiner ``u_i``. Alignment
succeeds when every cross link satisfies ``u_i^H H_ij v_j = 0`` while the
direct links keep a nonzero effective coefficient ``u_i^H H_ii v_i``.
A unit-norm solution exists for generic channels iff
``n_r + n_t - 1 >= cbar``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from clustalign.channel import MimoChannel, standard_complex_normal

__all__ = [
    "ClusterChannels",
    "AlignmentSolution",
    "FeasibilityError",
    "ConvergenceError",
    "is_feasible",
    "solve_ia",
    "effective_coefficient",
    "leakage_terms",
]

_REPHASE_FLOOR = 1e-12


class FeasibilityError(ValueError):
    """Raised when antenna counts cannot align the requested cluster size."""


class ConvergenceError(RuntimeError):
    """Raised when the solver exhausts its iteration and restart budget.

    Attributes:
        best_leakage: Smallest total leakage reached before giving up.
    """

    def __init__(self, message: str, best_leakage: float):
        super().__init__(message)
        self.best_leakage = best_leakage


@dataclass(frozen=True)
class ClusterChannels:
    """All channel matrices between the members of one cluster.

    Attributes:
        matrices: Complex array of shape ``(cbar, cbar, n_r, n_t)``;
            entry ``(i, j)`` is the channel from transmitter ``j`` to
            receiver ``i``.
        n_r: Receive antennas per node.
        n_t: Transmit antennas per node.
        cbar: Number of pairs in the cluster.
        mu: Per-entry channel variance.
    """

    matrices: np.ndarray
    n_r: int
    n_t: int
    cbar: int
    mu: float = 1.0

    def __post_init__(self) -> None:
        expected = (self.cbar, self.cbar, self.n_r, self.n_t)
        if self.matrices.shape != expected:
            raise ValueError(
                f"matrices shape {self.matrices.shape} does not match {expected}"
            )

    def channel(self, i: int, j: int) -> MimoChannel:
        """The channel from transmitter ``j`` to receiver ``i``."""
        return MimoChannel(
            entries=self.matrices[i, j], n_r=self.n_r, n_t=self.n_t, mu=self.mu
        )

    @classmethod
    def sample(
        cls, cbar: int, n_r: int, n_t: int, mu: float, rng: np.random.Generator
    ) -> "ClusterChannels":
        """Draw i.i.d. Rayleigh channels for a whole cluster."""
        mats = np.sqrt(mu) * standard_complex_normal(rng, (cbar, cbar, n_r, n_t))
        return cls(matrices=mats, n_r=n_r, n_t=n_t, cbar=cbar, mu=mu)


@dataclass(frozen=True)
class AlignmentSolution:
    """Precoders and combiners for one cluster.

    Attributes:
        precoders: Shape ``(cbar, n_t)``, unit-norm rows.
        combiners: Shape ``(cbar, n_r)``, unit-norm rows.
        leakage: Residual cross-link power summed over all ordered pairs.
        iterations: Iterations used by the accepted attempt (0 for the
            closed-form path and for single-pair clusters).
        restarts: Fresh random initializations consumed after the first.
        history: Per-iteration leakage of the accepted attempt when
            recording was requested, else None.
    """

    precoders: np.ndarray
    combiners: np.ndarray
    leakage: float
    iterations: int
    restarts: int = 0
    history: tuple[float, ...] | None = None


def is_feasible(n_t: int, n_r: int, cbar: int) -> bool:
    """Whether one-stream alignment is solvable for generic channels."""
    if min(n_t, n_r, cbar) < 1:
        raise ValueError("antenna counts and cbar must be >= 1")
    return n_r + n_t - 1 >= cbar


def _unit(vecs: np.ndarray) -> np.ndarray:
    return vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)


def _rephase(vecs: np.ndarray) -> np.ndarray:
    """Rotate each vector so its first non-negligible entry is real positive."""
    mag = np.abs(vecs)
    idx = np.argmax(mag > _REPHASE_FLOOR, axis=-1)
    lead = np.take_along_axis(vecs, idx[..., None], axis=-1)
    phase = lead / np.abs(lead)
    return vecs * np.conj(phase)


def _smallest_eigvec(mats: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the smallest eigenvalue of Hermitian matrices.

    Uses the explicit 2x2 solution on hot paths and falls back to a full
    eigendecomposition otherwise. Ties resolve to the decomposition's
    own ordering; a fully degenerate 2x2 spectrum returns the first
    basis vector.
    """
    n = mats.shape[-1]
    if n != 2:
        _, vecs = np.linalg.eigh(mats)
        return _unit(vecs[..., :, 0])
    a = mats[..., 0, 0].real
    c = mats[..., 1, 1].real
    b = mats[..., 0, 1]
    mid = 0.5 * (a + c)
    lam = mid - np.sqrt((0.5 * (a - c)) ** 2 + np.abs(b) ** 2)
    cand1 = np.stack([b, lam - a], axis=-1)
    cand2 = np.stack([lam - c, np.conj(b)], axis=-1)
    n1 = np.sum(np.abs(cand1) ** 2, axis=-1)
    n2 = np.sum(np.abs(cand2) ** 2, axis=-1)
    vec = np.where(n1[..., None] >= n2[..., None], cand1, cand2)
    scale = np.maximum(np.abs(a), np.maximum(np.abs(c), np.abs(b)))
    degenerate = (n1 + n2) <= (1e-28 * (scale**2 + 1e-300))[...]
    if np.any(degenerate):
        e1 = np.zeros_like(vec)
        e1[..., 0] = 1.0
        vec = np.where(degenerate[..., None], e1, vec)
    return _unit(vec)


def leakage_terms(
    matrices: np.ndarray, combiners: np.ndarray, precoders: np.ndarray
) -> np.ndarray:
    """Cross-link powers ``|u_i^H H_ij v_j|**2`` with a zero diagonal.

    Accepts leading batch dimensions on all three arguments.
    """
    coeff = np.einsum(
        "...ir,...ijrt,...jt->...ij", np.conj(combiners), matrices, precoders
    )
    power = np.abs(coeff) ** 2
    cbar = matrices.shape[-3]
    mask = 1.0 - np.eye(cbar)
    return power * mask


def _min_leakage_batch(
    mats: np.ndarray,
    tolerance: float,
    max_iterations: int,
    restarts: int,
    rng: np.random.Generator,
    history: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Alternating minimum-leakage solver over a batch of clusters.

    Each pass updates every combiner to the least-dominant eigenvector of
    its interference covariance, then does the same for the precoders in
    the role-reversed network, which cannot increase the total leakage.

    Returns:
        Tuple ``(V, U, leakage, iterations, n_restarts, converged)``
        with leading batch dimension, where unconverged entries carry
        the best attempt found.
    """
    batch, cbar, _, n_r, n_t = mats.shape
    off = (1.0 - np.eye(cbar))[None, :, :, None]

    out_v = np.zeros((batch, cbar, n_t), dtype=complex)
    out_u = np.zeros((batch, cbar, n_r), dtype=complex)
    out_leak = np.full(batch, np.inf)
    out_iter = np.zeros(batch, dtype=int)
    out_restart = np.zeros(batch, dtype=int)
    converged = np.zeros(batch, dtype=bool)

    for attempt in range(restarts + 1):
        todo = np.flatnonzero(~converged)
        if todo.size == 0:
            break
        active = todo.copy()
        h = mats[active]
        v = _unit(standard_complex_normal(rng, (active.size, cbar, n_t)))
        prev = np.full(active.size, np.inf)
        for it in range(1, max_iterations + 1):
            s = np.einsum("bijrt,bjt->bijr", h, v) * off
            q = np.einsum("bijr,bijs->birs", s, np.conj(s))
            u = _smallest_eigvec(q)
            sr = np.einsum("bijrt,bir->bijt", np.conj(h), u) * off
            qr = np.einsum("bijt,bijs->bjts", sr, np.conj(sr))
            v = _smallest_eigvec(qr)
            coeff = np.einsum("bir,bijrt,bjt->bij", np.conj(u), h, v)
            leak = np.sum(np.abs(coeff) ** 2 * off[..., 0], axis=(1, 2))
            # The alternating update minimizes the same objective in each
            # half step, so a real increase signals a broken update rule.
            assert np.all(leak <= prev * (1 + 1e-9) + 1e-12), "leakage increased"
            if history is not None and batch == 1 and attempt == 0:
                history.append(float(leak[0]))
            prev = leak
            done = leak <= tolerance
            improved = leak < out_leak[active]
            upd = active[improved]
            out_leak[upd] = leak[improved]
            out_v[upd] = v[improved]
            out_u[upd] = u[improved]
            out_iter[upd] = it
            out_restart[upd] = attempt
            if np.any(done):
                converged[active[done]] = True
                keep = ~done
                if not np.any(keep):
                    break
                active = active[keep]
                h = h[keep]
                v = v[keep]
                prev = prev[keep]
    return out_v, out_u, out_leak, out_iter, out_restart, converged


def _inv_2x2(m: np.ndarray) -> np.ndarray:
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if np.any(np.abs(det) < 1e-280):
        raise ArithmeticError("singular 2x2 channel matrix")
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1]
    inv[..., 0, 1] = -m[..., 0, 1]
    inv[..., 1, 0] = -m[..., 1, 0]
    inv[..., 1, 1] = m[..., 0, 0]
    return inv / det[..., None, None]


def _matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...rt,...t->...r", m, v)


def _perp_2d(w: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to ``w`` under the Hermitian inner product."""
    perp = np.stack([np.conj(w[..., 1]), -np.conj(w[..., 0])], axis=-1)
    nrm = np.linalg.norm(perp, axis=-1)
    if np.any(nrm < 1e-280):
        raise ArithmeticError("degenerate interference direction")
    return perp / nrm[..., None]


def _closed_form_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact alignment for three pairs with two antennas each.

    The first precoder is an eigenvector of the cascade that maps the
    alignment constraints of receivers 2 and 3 back into receiver 1; the
    other precoders follow by pairwise alignment and each combiner is
    the orthogonal complement of its (one-dimensional) received
    interference.

    Args:
        mats: Complex array of shape ``(..., 3, 3, 2, 2)``.

    Returns:
        Precoders and combiners, each shaped ``(..., 3, 2)``.
    """
    h = mats
    cascade = (
        _inv_2x2(h[..., 2, 0, :, :])
        @ h[..., 2, 1, :, :]
        @ _inv_2x2(h[..., 0, 1, :, :])
        @ h[..., 0, 2, :, :]
        @ _inv_2x2(h[..., 1, 2, :, :])
        @ h[..., 1, 0, :, :]
    )
    a = cascade[..., 0, 0]
    b = cascade[..., 0, 1]
    c = cascade[..., 1, 0]
    d = cascade[..., 1, 1]
    half_tr = 0.5 * (a + d)
    lam = half_tr + np.sqrt(half_tr**2 - (a * d - b * c) + 0j)
    cand1 = np.stack([b, lam - a], axis=-1)
    cand2 = np.stack([lam - d, c], axis=-1)
    n1 = np.sum(np.abs(cand1) ** 2, axis=-1)
    n2 = np.sum(np.abs(cand2) ** 2, axis=-1)
    vec = np.where(n1[..., None] >= n2[..., None], cand1, cand2)
    scale = np.abs(a) + np.abs(b) + np.abs(c) + np.abs(d)
    degenerate = (n1 + n2) <= 1e-28 * (scale**2 + 1e-300)
    if np.any(degenerate):
        # A cascade proportional to the identity aligns for any choice.
        e1 = np.zeros_like(vec)
        e1[..., 0] = 1.0
        vec = np.where(degenerate[..., None], e1, vec)
    v1 = _unit(vec)
    v2 = _unit(_matvec(_inv_2x2(h[..., 2, 1, :, :]), _matvec(h[..., 2, 0, :, :], v1)))
    v3 = _unit(_matvec(_inv_2x2(h[..., 1, 2, :, :]), _matvec(h[..., 1, 0, :, :], v1)))
    u1 = _perp_2d(_matvec(h[..., 0, 1, :, :], v2))
    u2 = _perp_2d(_matvec(h[..., 1, 0, :, :], v1))
    u3 = _perp_2d(_matvec(h[..., 2, 0, :, :], v1))
    precoders = _rephase(np.stack([v1, v2, v3], axis=-2))
    combiners = _rephase(np.stack([u1, u2, u3], axis=-2))
    return precoders, combiners


def solve_ia(
    channels: ClusterChannels,
    tolerance: float = 1e-8,
    max_iterations: int = 5000,
    rng: np.random.Generator | None = None,
    *,
    method: str = "iterative",
    restarts: int = 5,
    record_history: bool = False,
) -> AlignmentSolution:
    """Find unit-norm precoders and combiners that suppress cross links.

    Args:
        channels: The cluster's channel matrices.
        tolerance: Acceptance threshold on the total residual leakage.
        max_iterations: Per-attempt cap for the alternating solver.
        rng: Randomness for initial precoders; a fresh default generator
            is created when omitted. Unused by the closed-form method.
        method: "iterative" for the alternating minimum-leakage solver,
            "closed_form" for the exact three-pair, two-antenna
            construction.
        restarts: Extra random initializations allowed on stagnation.
        record_history: Keep the per-iteration leakage trace of the
            first attempt.

    Returns:
        An AlignmentSolution whose leakage is at most ``tolerance``.

    Raises:
        FeasibilityError: If ``n_r + n_t - 1 < cbar``.
        ConvergenceError: If no attempt reaches the tolerance, or a
            returned direct link would be exactly dead.
        ValueError: If the closed-form method is requested for a
            configuration other than three pairs with 2x2 channels.
    """
    if not is_feasible(channels.n_t, channels.n_r, channels.cbar):
        raise FeasibilityError(
            f"cannot align cbar={channels.cbar} pairs with "
            f"n_t={channels.n_t}, n_r={channels.n_r}: need n_r + n_t - 1 >= cbar"
        )
    mats = channels.matrices
    if channels.cbar == 1:
        v = np.zeros((1, channels.n_t), dtype=complex)
        u = np.zeros((1, channels.n_r), dtype=complex)
        v[0, 0] = 1.0
        u[0, 0] = 1.0
        _check_rank(mats, u, v)
        return AlignmentSolution(
            precoders=v, combiners=u, leakage=0.0, iterations=0,
            history=(0.0,) if record_history else None,
        )

    if method == "closed_form":
        if (channels.cbar, channels.n_r, channels.n_t) != (3, 2, 2):
            raise ValueError(
                "closed-form construction needs cbar=3 with 2x2 channels"
            )
        v, u = _closed_form_batch(mats[None])
        v, u = v[0], u[0]
        leak = float(np.sum(leakage_terms(mats, u, v)))
        if not leak <= tolerance:
            raise ConvergenceError(
                f"closed-form residual {leak:.3e} above tolerance", leak
            )
        _check_rank(mats, u, v)
        return AlignmentSolution(
            precoders=v, combiners=u, leakage=leak, iterations=0,
            history=(leak,) if record_history else None,
        )
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")

    if rng is None:
        rng = np.random.default_rng()
    hist: list[float] | None = [] if record_history else None
    v, u, leak, iters, n_restarts, ok = _min_leakage_batch(
        mats[None], tolerance, max_iterations, restarts, rng, history=hist
    )
    if not ok[0]:
        raise ConvergenceError(
            f"no convergence to {tolerance:.1e} within {max_iterations} "
            f"iterations and {restarts} restarts (best {leak[0]:.3e})",
            float(leak[0]),
        )
    v, u = _rephase(v[0]), _rephase(u[0])
    _check_rank(mats, u, v)
    return AlignmentSolution(
        precoders=v,
        combiners=u,
        leakage=float(leak[0]),
        iterations=int(iters[0]),
        restarts=int(n_restarts[0]),
        history=tuple(hist) if hist is not None else None,
    )


def _check_rank(mats: np.ndarray, combiners: np.ndarray, precoders: np.ndarray) -> None:
    direct = np.einsum(
        "ir,iirt,it->i", np.conj(combiners), mats, precoders
    )
    worst = float(np.min(np.abs(direct)))
    if not worst > 0.0:
        raise ConvergenceError("a direct link has zero effective gain", worst)


def effective_coefficient(
    u: np.ndarray, channel: MimoChannel | np.ndarray, v: np.ndarray
) -> complex:
    """Scalar channel seen through a combiner and a precoder.

    Args:
        u: Combiner, shape ``(n_r,)``.
        channel: The MIMO channel (or its raw matrix).
        v: Precoder, shape ``(n_t,)``.

    Returns:
        ``u^H H v``. For unit-norm ``u`` and ``v`` chosen independently
        of ``H``, this keeps the per-entry fading law of ``H``.

    Raises:
        ValueError: On mismatched shapes.
    """
    h = channel.entries if isinstance(channel, MimoChannel) else np.asarray(channel)
    u = np.asarray(u)
    v = np.asarray(v)
    if h.ndim != 2 or u.shape != (h.shape[0],) or v.shape != (h.shape[1],):
        raise ValueError(
            f"shape mismatch: u {u.shape}, channel {h.shape}, v {v.shape}"
        )
    return complex(np.vdot(u, h @ v))
