"""Linear error system, observability and output-injection gain design.

The stacked translational error ``x = [eps_1 .. eps_n, v~, g~]`` (each entry a
3-vector) obeys ``x' = ((A - L C) kron I3) x``. This module builds ``(A, C)``,
checks observability, designs ``L`` by eigenvalue assignment on the dual pair,
and splits ``L`` into the observer gains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

REFERENCE_EIGENVALUES = (-1, -2, -3, -4, -1, -2, -3, -4, -1, -2, -3, -4, -1, -2, -3, -4, -1)
MAX_CONDITION = 1e8


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class LtiSystem:
    n: int
    A: np.ndarray
    C: np.ndarray
    B_n: np.ndarray
    D: np.ndarray


@dataclass(frozen=True)
class GainDesign:
    L: np.ndarray
    requested_eigs: np.ndarray
    achieved_eigs: np.ndarray
    seed: int = 0
    method: str = "random"
    # L[:n] == diag(top_diag) + top_u @ [K_v, K_g]^T when method == "structured"
    top_diag: Optional[np.ndarray] = field(default=None, repr=False)
    top_u: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.L.shape[1]

    @property
    def max_real(self) -> float:
        return float(np.max(self.achieved_eigs.real))


def build_lti(n: int) -> LtiSystem:
    if n < 1:
        raise ValueError("n must be >= 1")
    B_n = np.zeros((n, 2))
    B_n[:, 0] = 1.0
    D = np.array([[0.0, 1.0], [0.0, 0.0]])
    A = np.zeros((n + 2, n + 2))
    A[:n, n:] = B_n
    A[n:, n:] = D
    C = np.hstack([np.eye(n), np.zeros((n, 2))])
    return LtiSystem(n, A, C, B_n, D)


def observability_matrix(sys: LtiSystem) -> np.ndarray:
    """``[C; CA; ...; CA^(n+1)]`` (``n + 2`` block rows)."""
    blocks = [sys.C]
    for _ in range(sys.n + 1):
        blocks.append(blocks[-1] @ sys.A)
    return np.vstack(blocks)


def default_eigenvalues(n: int) -> list:
    """The published 17-value set for ``n = 15``; otherwise -1..-4 cycled to ``n + 2``."""
    if n == 15:
        return [float(x) for x in REFERENCE_EIGENVALUES]
    return [-float(1 + k % 4) for k in range(n + 2)]


def match_eigenvalues(a, b) -> float:
    """Largest pairwise distance under the optimal one-to-one matching."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("eigenvalue sets differ in size")
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _validate_eigs(sys: LtiSystem, eigs) -> np.ndarray:
    eigs = np.asarray(eigs, dtype=complex).ravel()
    n = sys.n
    if eigs.size != n + 2:
        raise ValueError(f"expected {n + 2} eigenvalues for n={n}, got {eigs.size}")
    if np.any(eigs.real >= 0):
        raise ValueError("all requested eigenvalues must have negative real part")
    # conjugate-pair closure
    if match_eigenvalues(eigs, eigs.conj()) > 1e-12:
        raise ValueError("complex eigenvalues must come in conjugate pairs")
    distinct = []
    for lam in eigs:
        mult = int(np.sum(np.abs(eigs - lam) < 1e-12))
        if mult > n:
            raise ValueError(f"eigenvalue {lam} has multiplicity {mult} > n={n}")
        if all(abs(lam - d) >= 1e-12 for d in distinct):
            distinct.append(lam)
    # every eigenvector space of the dual pair contains the (n-1)-dimensional
    # landmark-difference subspace, so a diagonalising T needs >= 3 distinct values
    if len(distinct) < 3:
        raise ValueError("eigenvalue assignment needs at least 3 distinct values")
    return eigs


def _sylvester_columns(sys: LtiSystem, eigs: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Columns ``x_j`` solving ``(A^T - lambda_j I) x_j = C^T g_j``.

    For this ``A`` the solve has the closed form
    ``x = -(1/lambda) [g; s/lambda; s/lambda^2]`` with ``s = 1^T g``.
    """
    if np.any(np.abs(eigs) < 1e-300):
        raise PlacementError("eigenvalue 0 lies in the spectrum of A")
    s = G.sum(axis=0)
    T = np.vstack([G, (s / eigs)[None, :], (s / eigs ** 2)[None, :]])
    return T * (-1.0 / eigs)[None, :]


def _order_pairs(eigs: np.ndarray) -> np.ndarray:
    """Real values first, then complex values with each conjugate right after its partner."""
    real = sorted([e for e in eigs if abs(e.imag) < 1e-12], key=lambda z: z.real)
    upper = sorted([e for e in eigs if e.imag >= 1e-12], key=lambda z: (z.real, z.imag))
    out = [complex(e.real, 0.0) for e in real]
    for e in upper:
        out += [e, e.conjugate()]
    return np.array(out, dtype=complex)


def _parameter_random(n: int, eigs: np.ndarray, rng) -> np.ndarray:
    G = rng.standard_normal((n, n + 2)).astype(complex)
    for j in range(len(eigs)):
        if eigs[j].imag > 1e-12:
            G[:, j] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            G[:, j + 1] = G[:, j].conj()
    return G


def _structured_assignment(n: int, eigs: np.ndarray):
    """Landmark for every column so that one landmark carries three distinct values.

    Returns the column -> landmark map, or ``None`` when no three distinct real
    values exist.
    """
    if np.any(np.abs(eigs.imag) > 1e-12):
        return None
    vals = eigs.real
    distinct = []
    for j, lam in enumerate(vals):
        if all(abs(lam - vals[k]) > 1e-9 for k in distinct):
            distinct.append(j)
        if len(distinct) == 3:
            break
    if len(distinct) < 3:
        return None
    owner = np.empty(n + 2, dtype=int)
    owner[distinct] = 0
    rest = [j for j in range(n + 2) if j not in distinct]
    owner[rest] = np.arange(1, n)
    return owner


def place_poles(sys: LtiSystem, eigs: Sequence, seed: int = 0, method: str = "structured",
                max_retries: int = 20) -> GainDesign:
    """Choose ``L`` so that the spectrum of ``A - L C`` equals ``eigs``.

    Dual eigenvector assignment: for a parameter matrix ``G`` solve
    ``(A^T - lambda_j I) x_j = C^T g_j``, stack ``T = [x_1 ... x_{n+2}]`` and set
    ``L = (G T^{-1})^T``. Then ``(A^T - C^T L^T) T = T diag(eigs)``.

    ``method="random"`` draws ``G`` from a seeded Gaussian and retries while
    ``T`` is ill-conditioned. ``method="structured"`` uses unit columns
    ``g_j = e_{owner(j)}`` (one landmark owns three distinct eigenvalues, every
    other landmark one), which makes ``L[:n]`` diagonal plus rank two in the
    directions of ``K_v`` and ``K_g``; the observer can then apply Gamma in
    O(n). It falls back to ``random`` when fewer than three distinct real
    eigenvalues are requested.
    """
    eigs = _order_pairs(_validate_eigs(sys, eigs))
    n = sys.n
    if method not in ("structured", "random"):
        raise ValueError(f"unknown placement method {method!r}")

    if method == "structured":
        owner = _structured_assignment(n, eigs)
        if owner is None:
            method = "random"
        else:
            G = np.zeros((n, n + 2), dtype=complex)
            G[owner, np.arange(n + 2)] = 1.0
            T = _sylvester_columns(sys, eigs, G)
            if np.linalg.cond(T) > MAX_CONDITION:
                method = "random"

    if method == "random":
        rng = np.random.default_rng(seed)
        for _ in range(max_retries):
            G = _parameter_random(n, eigs, rng)
            T = _sylvester_columns(sys, eigs, G)
            if np.linalg.cond(T) <= MAX_CONDITION:
                break
        else:
            raise PlacementError(f"eigenvector matrix ill-conditioned after {max_retries} draws")

    L = np.linalg.solve(T.T, G.T)  # (G T^{-1})^T
    if np.max(np.abs(L.imag)) > 1e-8 * max(1.0, np.max(np.abs(L.real))):
        raise PlacementError("placement produced a complex gain")
    L = np.ascontiguousarray(L.real)

    achieved = np.linalg.eigvals(sys.A - L @ sys.C)
    design = GainDesign(L, eigs, achieved, seed, method)
    if method == "structured":
        diag, U = _top_factors(L, owner, eigs.real)
        design = GainDesign(L, eigs, achieved, seed, method, diag, U)
    return design


def _top_factors(L: np.ndarray, owner: np.ndarray, lam: np.ndarray):
    """Factor ``L[:n] = diag(d) + U [K_v K_g]^T`` for a structured design."""
    n = L.shape[1]
    first = np.full(n, -1)
    for j in range(len(owner)):
        if first[owner[j]] < 0:
            first[owner[j]] = j
    lam_i = lam[first]
    # x_j ~ [e_i; 1/lambda; 1/lambda^2] up to scale, so row i of L[:n] is
    # -lambda_i e_i^T - K_v^T / lambda_i - K_g^T / lambda_i^2
    d = -lam_i
    U = np.stack([-1.0 / lam_i, -1.0 / lam_i ** 2], axis=1)
    return d, U


def factor_top_block(L: np.ndarray, tol: float = 1e-10):
    """Try to write ``L[:n] = diag(d) + U [K_v K_g]^T``; ``None`` if it does not fit.

    Each row of ``U`` is fitted by (minimum-norm) least squares on the off-diagonal entries of
    that row, then the whole block is checked against ``tol`` (relative).
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[1]
    if n < 3:
        return None
    top = L[:n]
    W = np.stack([L[n], L[n + 1]], axis=1)  # (n, 2)
    diag = np.diag(top)
    N = (W.T @ W)[None, :, :] - W[:, :, None] * W[:, None, :]
    b = top @ W - W * diag[:, None]
    # pinv: K_v and K_g may be parallel, leaving U non-unique
    U = np.einsum("ijk,ik->ij", np.linalg.pinv(N), b)
    d = diag - np.einsum("ij,ij->i", U, W)
    err = np.max(np.abs(top - U @ W.T - np.diag(d)))
    if not np.isfinite(err) or err > tol * max(1.0, float(np.max(np.abs(L)))):
        return None
    return d, U


def decompose_gains(design: GainDesign, k_p_mode="ones"):
    """Split ``L`` into ``(K_p, K_v, K_g, Gamma)``.

    ``K_v``/``K_g`` are the last two rows of ``L``; ``K_p`` is zeros, ones or a
    given vector, and ``Gamma = 1 K_p^T - L[:n]``.
    """
    L = design.L
    n = L.shape[1]
    if isinstance(k_p_mode, str):
        if k_p_mode == "zeros":
            K_p = np.zeros(n)
        elif k_p_mode == "ones":
            K_p = np.ones(n)
        else:
            raise ValueError(f"unknown k_p_mode {k_p_mode!r}")
    else:
        K_p = np.asarray(k_p_mode, dtype=float).ravel()
        if K_p.size != n:
            raise ValueError(f"custom K_p must have length {n}, got {K_p.size}")
    K_v = L[n].copy()
    K_g = L[n + 1].copy()
    Gamma = np.outer(np.ones(n), K_p) - L[:n]
    return K_p, K_v, K_g, Gamma


def closed_loop(sys: LtiSystem, L: np.ndarray) -> np.ndarray:
    return sys.A - L @ sys.C


# -- gain file -----------------------------------------------------------------

def save_gain_file(path, design: GainDesign) -> None:
    """Header ``n rows cols seed`` then ``L`` row-major, whitespace-separated."""
    L = design.L
    lines = [f"{design.n} {L.shape[0]} {L.shape[1]} {design.seed}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in L]
    Path(path).write_text("\n".join(lines) + "\n")


def load_gain_file(path):
    """Read a gain file; returns ``(L, seed)``."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 4:
        raise ValueError(f"{path}: missing header")
    n, rows, cols, seed = (int(t) for t in tokens[:4])
    if rows != n + 2 or cols != n:
        raise ValueError(f"{path}: expected a {n + 2}x{n} matrix, header says {rows}x{cols}")
    values = np.array([float(t) for t in tokens[4:]])
    if values.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {values.size}")
    return values.reshape(rows, cols), seed


def design_from_matrix(L, requested=None, seed: int = 0) -> GainDesign:
    L = np.asarray(L, dtype=float)
    n = L.shape[1]
    sys = build_lti(n)
    achieved = np.linalg.eigvals(closed_loop(sys, L))
    req = achieved if requested is None else np.asarray(requested, dtype=complex)
    factors = factor_top_block(L)
    if factors is None:
        return GainDesign(L, req, achieved, seed, "file")
    return GainDesign(L, req, achieved, seed, "file", factors[0], factors[1])


def kronecker_spectrum(L: np.ndarray) -> np.ndarray:
    sys = build_lti(L.shape[1])
    return np.linalg.eigvals(np.kron(closed_loop(sys, L), np.eye(3)))


def is_hurwitz(M) -> bool:
    return bool(np.max(np.linalg.eigvals(M).real) < 0)


def condition_number(M) -> float:
    c = np.linalg.cond(M)
    return float(c) if math.isfinite(c) else float("inf")
