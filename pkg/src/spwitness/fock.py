"""Truncated Fock-space states: heralded sources, beam splitting and pure loss.

Two-mode density matrices are indexed ``|n_A n_B>`` with Bob's index running
fastest, i.e. flat index ``n_A * (n_max + 1) + n_B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, sqrt

import numpy as np

HERMITIAN_TOL = 1e-12
EIG_FLOOR = -1e-10
TRACE_TOL = 1e-12


@dataclass(frozen=True)
class FockCutoff:
    """Maximum photon number per mode."""

    n_max: int = 2

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def dim(self) -> int:
        return self.n_max + 1


def _check_density(rho: np.ndarray, what: str) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{what}: density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValueError(f"{what}: density matrix is not Hermitian")
    evals = np.linalg.eigvalsh(rho)
    if evals[0] < EIG_FLOOR:
        raise ValueError(f"{what}: negative eigenvalue {evals[0]:.3e}")
    tr = float(np.real(np.trace(rho)))
    if tr > 1.0 + TRACE_TOL or tr < -TRACE_TOL:
        raise ValueError(f"{what}: trace {tr!r} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class SingleModeState:
    rho: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        _check_density(rho, "SingleModeState")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def n_max(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()


@dataclass(frozen=True, eq=False)
class TwoModeState:
    rho: np.ndarray
    cutoff: FockCutoff = field(default_factory=FockCutoff)

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        d = self.cutoff.dim
        if rho.shape != (d * d, d * d):
            raise ValueError(f"TwoModeState: expected shape {(d * d, d * d)} for n_max={self.cutoff.n_max}, got {rho.shape}")
        _check_density(rho, "TwoModeState")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.cutoff.dim

    def tensor(self) -> np.ndarray:
        """View as a rank-4 array ``[n_A, n_B, n_A', n_B']``."""
        d = self.dim
        return self.rho.reshape(d, d, d, d)

    def element(self, bra: tuple[int, int], ket: tuple[int, int]) -> complex:
        """``<bra|rho|ket>`` for photon-number pairs ``(n_A, n_B)``."""
        d = self.dim
        return complex(self.rho[bra[0] * d + bra[1], ket[0] * d + ket[1]])

    def reduced(self, party: str) -> np.ndarray:
        t = self.tensor()
        if party == "A":
            return np.einsum("abcb->ac", t)
        if party == "B":
            return np.einsum("abad->bd", t)
        raise ValueError(f"party must be 'A' or 'B', got {party!r}")

    def with_cutoff(self, n_max: int) -> TwoModeState:
        """Embed into (or truncate to) another cutoff; truncation must not drop weight."""
        d_old, d_new = self.dim, n_max + 1
        t = self.tensor()
        if d_new < d_old:
            dropped = np.real(np.diag(self.rho)).reshape(d_old, d_old)
            lost = dropped.sum() - dropped[:d_new, :d_new].sum()
            if lost > 1e-12:
                raise ValueError(f"truncating to n_max={n_max} would drop weight {lost:.3e}")
            t = t[:d_new, :d_new, :d_new, :d_new]
        else:
            pad = np.zeros((d_new,) * 4, dtype=complex)
            pad[:d_old, :d_old, :d_old, :d_old] = t
            t = pad
        return TwoModeState(t.reshape(d_new * d_new, d_new * d_new), FockCutoff(n_max))


@dataclass(frozen=True)
class LossParams:
    eta_A: float
    eta_B: float

    def __post_init__(self):
        for name in ("eta_A", "eta_B"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def eta_AB(self) -> float:
        return self.eta_A * self.eta_B


def product_state(rho_A, rho_B) -> TwoModeState:
    """Tensor product of two single-mode density matrices of equal size."""
    rho_A = np.asarray(getattr(rho_A, "rho", rho_A), dtype=complex)
    rho_B = np.asarray(getattr(rho_B, "rho", rho_B), dtype=complex)
    if rho_A.shape != rho_B.shape:
        raise ValueError("local states must share the cutoff")
    return TwoModeState(np.kron(rho_A, rho_B), FockCutoff(rho_A.shape[0] - 1))


def heralded_source_state(p1: float, p2: float = 0.0, n_max: int = 2) -> SingleModeState:
    """Phase-averaged heralded photon ``diag(1 - p1 - p2, p1, p2, 0, ...)``.

    The two-photon weight ``p2`` is a modeling input: the experiment only
    states that it is a few percent.
    """
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise ValueError("p1 and p2 must be probabilities")
    if p1 + p2 > 1.0 + 1e-15:
        raise ValueError(f"p1 + p2 = {p1 + p2} exceeds 1")
    if p2 > 0 and n_max < 2:
        raise ValueError("a two-photon component needs n_max >= 2")
    diag = np.zeros(n_max + 1)
    diag[0] = max(0.0, 1.0 - p1 - p2)
    diag[1] = p1
    if n_max >= 2:
        diag[2] = p2
    return SingleModeState(np.diag(diag))


def beam_splitter_isometry(n_max: int, transmittance: float) -> np.ndarray:
    """Map ``|n> (x) |0>`` to the two output modes; returns a (d*d, d) matrix.

    Uses ``a^dag -> sqrt(T) a^dag + sqrt(1-T) b^dag`` so that ``|1>`` goes to
    ``sqrt(T)|10> + sqrt(1-T)|01>``.
    """
    if not 0.0 <= transmittance <= 1.0:
        raise ValueError(f"transmittance must lie in [0, 1], got {transmittance}")
    d = n_max + 1
    t, r = sqrt(transmittance), sqrt(1.0 - transmittance)
    V = np.zeros((d * d, d))
    for n in range(d):
        for k in range(n + 1):
            V[k * d + (n - k), n] = sqrt(comb(n, k)) * t**k * r ** (n - k)
    return V


def beam_splitter_split(state: SingleModeState, transmittance: float = 0.5) -> TwoModeState:
    """Send ``state`` and vacuum through a beam splitter; output A is the transmitted port."""
    rho = np.asarray(state.rho)
    tr = float(np.real(np.trace(rho)))
    if abs(tr - 1.0) > 1e-9:
        raise ValueError(f"input state must be normalized, trace={tr}")
    n_max = rho.shape[0] - 1
    V = beam_splitter_isometry(n_max, transmittance)
    out = V @ rho @ V.T
    # Total photon number is conserved, so no output weight can exceed the cutoff.
    return TwoModeState(out, FockCutoff(n_max))


def loss_kraus(n_max: int, eta: float) -> np.ndarray:
    """Kraus operators ``K_k`` of a pure-loss channel, stacked as ``(d, d, d)``."""
    d = n_max + 1
    K = np.zeros((d, d, d))
    for k in range(d):
        for n in range(k, d):
            K[k, n - k, n] = sqrt(comb(n, k) * eta ** (n - k) * (1.0 - eta) ** k)
    return K


def apply_single_mode_loss(state: SingleModeState, eta: float) -> SingleModeState:
    K = loss_kraus(state.n_max, eta)
    rho = np.einsum("kab,bc,kdc->ad", K, state.rho, K)
    return SingleModeState(rho)


def apply_loss(state: TwoModeState, loss: LossParams) -> TwoModeState:
    """Independent pure-loss channels on both modes (Kraus form)."""
    n_max = state.cutoff.n_max
    KA = loss_kraus(n_max, loss.eta_A)
    KB = loss_kraus(n_max, loss.eta_B)
    t = state.tensor()
    t = np.einsum("kax,xbyc,kdy->abdc", KA, t, KA)
    t = np.einsum("kbx,axcy,kdy->abcd", KB, t, KB)
    d = state.dim
    return TwoModeState(t.reshape(d * d, d * d), state.cutoff)


def lossy_bell_state(eta_A: float, eta_B: float, n_max: int = 2) -> TwoModeState:
    """Closed-form ideal delocalized photon after losses ``eta_A``, ``eta_B``."""
    LossParams(eta_A, eta_B)
    d = n_max + 1
    rho = np.zeros((d * d, d * d))
    i00, i01, i10 = 0, 1, d
    rho[i00, i00] = (2.0 - eta_A - eta_B) / 2.0
    rho[i10, i10] = eta_A / 2.0
    rho[i01, i01] = eta_B / 2.0
    rho[i10, i01] = rho[i01, i10] = sqrt(eta_A * eta_B) / 2.0
    return TwoModeState(rho, FockCutoff(n_max))


def ideal_split_state(n_max: int = 2) -> TwoModeState:
    return lossy_bell_state(1.0, 1.0, n_max)


def local_photon_probs(state: TwoModeState):
    """Exact marginal photon statistics ``(stats_A, stats_B)``, coarse-grained to {0, 1, >=2}."""
    from .tomography import LocalPhotonStats

    out = []
    for party in ("A", "B"):
        pops = np.real(np.diag(state.reduced(party)))
        out.append(LocalPhotonStats.exact(pops))
    return tuple(out)


def temporal_overlap_efficiency(gamma: float, tau: float) -> float:
    """Efficiency from a temporal-mode offset ``tau`` for ``psi(t) = sqrt(gamma) exp(-gamma |t|)``.

    The overlap of the mode with its shifted copy is ``exp(-g)(1 + g)`` with
    ``g = gamma |tau|``; the returned efficiency is its square.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    g = gamma * abs(tau)
    return float((np.exp(-g) * (1.0 + g)) ** 2)


def km_equivalent(eta_ab, db_per_km: float = 0.2):
    """Fiber length with the same transmission at ``db_per_km`` attenuation."""
    # Adding 0.0 turns -0.0 (at eta_ab = 1) into 0.0.
    return -10.0 * np.log10(eta_ab) / db_per_km + 0.0
