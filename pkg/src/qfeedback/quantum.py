"""Quantum objects and entropic functionals.

Density matrices, Kraus channels, POVMs, ensembles, von Neumann entropy,
Holevo quantity and measurement back-action.  Entropies are in bits
throughout so information quantities compare directly to rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

import numpy as np

from . import linalg
from .linalg import (
    HERM_TOL,
    PSD_TOL,
    as_matrix,
    check_register_shape,
    embed_operator,
    herm_eig,
    herm_eigvals,
    identity,
    partial_trace,
)

PROB_FLOOR = 1e-14
TRACE_TOL = 1e-10
COMPLETENESS_TOL = 1e-9

ER = "er"  # distinguished error outcome label


class ValidationError(Exception):
    """A quantum object violates one of its invariants."""


@dataclass(frozen=True)
class DensityMatrix:
    """PSD, trace-one Hermitian matrix on a multi-register Hilbert space."""

    mat: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        m = as_matrix(self.mat)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "dims", check_register_shape(self.dims, m.shape[0]))
        if linalg.hermitian_defect(m) > HERM_TOL:
            raise ValidationError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL or abs(np.trace(m).imag) > TRACE_TOL:
            raise ValidationError(f"density matrix trace {np.trace(m):.12g} != 1")
        object.__setattr__(self, "_eig", None)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached eigendecomposition; also enforces positivity."""
        if self._eig is None:
            w, v = herm_eig(self.mat)
            if w[-1] < -PSD_TOL:
                raise ValidationError(f"density matrix has eigenvalue {w[-1]:.3e}")
            object.__setattr__(self, "_eig", (w, v))
        return self._eig

    def eigvals(self) -> np.ndarray:
        return self.eig()[0]

    def validate(self) -> None:
        self.eig()

    def ptrace(self, keep) -> "DensityMatrix":
        keep = sorted(set(keep))
        out = partial_trace(self.mat, self.dims, keep)
        return DensityMatrix(out, tuple(self.dims[k] for k in keep))


def density(mat, dims=None) -> DensityMatrix:
    m = as_matrix(mat)
    if dims is None:
        dims = (m.shape[0],)
    return DensityMatrix(m, tuple(dims))


def pure_state(vec, dims=None) -> DensityMatrix:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return density(np.outer(v, v.conj()), dims)


def basis_state(dim: int, k: int) -> DensityMatrix:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return pure_state(v)


def bloch_state(theta: float, phi: float) -> DensityMatrix:
    """Pure qubit state at the given Bloch angles."""
    v = np.array([np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)])
    return pure_state(v)


@dataclass(frozen=True)
class QuantumChannel:
    """Trace-preserving completely positive map stored as a Kraus family."""

    kraus: tuple[np.ndarray, ...]
    label: str = "channel"

    def __post_init__(self):
        ks = tuple(as_matrix(k) for k in self.kraus)
        if not ks:
            raise ValidationError("channel needs at least one Kraus operator")
        rows, cols = ks[0].shape
        if any(k.shape != (rows, cols) for k in ks):
            raise ValidationError("Kraus operators have mixed shapes")
        total = sum(k.conj().T @ k for k in ks)
        if np.max(np.abs(total - identity(cols))) > COMPLETENESS_TOL:
            raise ValidationError(f"channel '{self.label}' is not trace preserving")
        object.__setattr__(self, "kraus", ks)

    @property
    def in_dim(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.kraus[0].shape[0]


def apply_channel(phi: QuantumChannel, rho: DensityMatrix) -> DensityMatrix:
    """Phi(rho) = sum_j E_j rho E_j^dagger."""
    if rho.dim != phi.in_dim:
        raise ValidationError(f"channel input dim {phi.in_dim} != state dim {rho.dim}")
    out = sum(k @ rho.mat @ k.conj().T for k in phi.kraus)
    dims = (phi.out_dim,) if phi.out_dim != rho.dim else rho.dims
    return DensityMatrix(out, dims)


def apply_channel_at(phi: QuantumChannel, rho: DensityMatrix, register: int) -> DensityMatrix:
    """Apply the channel on one tensor factor, identity elsewhere."""
    n = len(rho.dims)
    if not 0 <= register < n:
        raise ValidationError(f"register {register} out of range for {n} registers")
    if rho.dims[register] != phi.in_dim:
        raise ValidationError("channel input dim does not match the register")
    if phi.in_dim != phi.out_dim:
        raise ValidationError("per-register application needs a square channel")
    out = np.zeros_like(rho.mat)
    for k in phi.kraus:
        big = embed_operator(k, rho.dims, [register])
        out += big @ rho.mat @ big.conj().T
    return DensityMatrix(out, rho.dims)


def apply_kraus(maps, rho: DensityMatrix, registers=None) -> DensityMatrix:
    """Apply a trace-preserving Kraus family, optionally on a register subset."""
    mats = [as_matrix(m) for m in maps]
    dim = mats[0].shape[0]
    total = sum(m.conj().T @ m for m in mats)
    if np.max(np.abs(total - identity(dim))) > COMPLETENESS_TOL:
        raise ValidationError("Kraus family is not complete")
    if registers is not None:
        mats = [embed_operator(m, rho.dims, registers) for m in mats]
    out = sum(m @ rho.mat @ m.conj().T for m in mats)
    return DensityMatrix(out, rho.dims)


# Backwards-friendly alias matching the operation name used in the protocol.
apply_cp_map = apply_kraus


def entropy(rho: DensityMatrix) -> float:
    """von Neumann entropy in bits, with the 0 log 0 = 0 convention."""
    w = rho.eigvals()
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w))) if w.size else 0.0


def entropy_of(mat: np.ndarray) -> float:
    """Entropy of a raw PSD matrix of unit trace."""
    w = herm_eigvals(mat)
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w))) if w.size else 0.0


def shannon(probs) -> float:
    p = np.asarray(list(probs), dtype=float)
    p = p[p > 1e-15]
    return float(-np.sum(p * np.log2(p))) if p.size else 0.0


@dataclass(frozen=True)
class Ensemble:
    """Weighted list of density matrices on a common space."""

    items: tuple[tuple[float, DensityMatrix], ...]

    def __post_init__(self):
        items = tuple((float(p), rho) for p, rho in self.items)
        if not items:
            raise ValidationError("empty ensemble")
        if any(p < -1e-12 for p, _ in items):
            raise ValidationError("negative ensemble probability")
        if abs(sum(p for p, _ in items) - 1.0) > 1e-12:
            raise ValidationError("ensemble probabilities do not sum to 1")
        dims = items[0][1].dims
        if any(rho.dims != dims for _, rho in items):
            raise ValidationError("ensemble states have mixed shapes")
        object.__setattr__(self, "items", items)

    def average(self) -> DensityMatrix:
        mat = sum(p * rho.mat for p, rho in self.items)
        return DensityMatrix(mat, self.items[0][1].dims)


def holevo_chi(e: Ensemble) -> float:
    """S(sum p_i rho_i) - sum p_i S(rho_i), in bits."""
    avg = entropy(e.average())
    return avg - sum(p * entropy(rho) for p, rho in e.items if p > 0.0)


@dataclass(frozen=True)
class Povm:
    """Outcome-labeled measurement.

    mode "complete": elements are measurement operators F_k with outcome
    probability tr(F rho F^dagger) and post-state F rho F^dagger / p;
    completeness sum F^dagger F = I.

    mode "sub": elements are PSD effects R_k with sum R_k <= I, probability
    tr(rho R), back-action sqrt(R) rho sqrt(R); the remainder I - sum R_k is
    the distinguished "er" outcome.
    """

    elements: tuple[tuple[Hashable, np.ndarray], ...]
    mode: str = "complete"

    def __post_init__(self):
        els = tuple((label, as_matrix(m)) for label, m in self.elements)
        if not els:
            raise ValidationError("POVM needs at least one element")
        labels = [label for label, _ in els]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate POVM outcome labels")
        dim = els[0][1].shape[0]
        if any(m.shape != (dim, dim) for _, m in els):
            raise ValidationError("POVM elements have mixed shapes")
        if self.mode == "complete":
            total = sum(m.conj().T @ m for _, m in els)
            if np.max(np.abs(total - identity(dim))) > COMPLETENESS_TOL:
                raise ValidationError("POVM is not complete")
        elif self.mode == "sub":
            total = sum(m for _, m in els)
            if linalg.hermitian_defect(total) > HERM_TOL:
                raise ValidationError("sub-POVM effects must be Hermitian")
            w = herm_eigvals(0.5 * (total + total.conj().T))
            if w[0] > 1.0 + COMPLETENESS_TOL or w[-1] < -COMPLETENESS_TOL:
                raise ValidationError("sub-POVM effects violate 0 <= sum R <= I")
            if ER in labels:
                raise ValidationError("'er' is reserved for the sub-POVM remainder")
        else:
            raise ValidationError(f"unknown POVM mode {self.mode!r}")
        object.__setattr__(self, "elements", els)

    @property
    def dim(self) -> int:
        return self.elements[0][1].shape[0]

    @property
    def labels(self) -> tuple[Hashable, ...]:
        labs = tuple(label for label, _ in self.elements)
        return labs + (ER,) if self.mode == "sub" else labs

    def completeness_defect(self) -> float:
        if self.mode == "complete":
            total = sum(m.conj().T @ m for _, m in self.elements)
            return float(np.max(np.abs(total - identity(self.dim))))
        total = sum(m for _, m in self.elements)
        w = herm_eigvals(0.5 * (total + total.conj().T))
        return float(max(w[0] - 1.0, -w[-1], 0.0))


def basis_povm(dim: int) -> Povm:
    els = tuple((k, np.diag(np.eye(dim)[k]).astype(complex)) for k in range(dim))
    return Povm(els)


def rotated_qubit_povm(theta: float, phi: float) -> Povm:
    """Two-outcome projective qubit measurement along a rotated axis."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    u = np.array([[c, -np.exp(-1j * phi) * s], [np.exp(1j * phi) * s, c]])
    els = tuple((k, np.outer(u[:, k], u[:, k].conj())) for k in range(2))
    return Povm(els)


def measure(povm: Povm, rho: DensityMatrix) -> dict:
    """All measurement branches: outcome -> (probability, post-state).

    Outcomes with probability below PROB_FLOOR are omitted; raises if every
    outcome falls below the floor.
    """
    if povm.dim != rho.dim:
        raise ValidationError("POVM dimension does not match the state")
    out = {}
    if povm.mode == "complete":
        for label, f in povm.elements:
            post = f @ rho.mat @ f.conj().T
            p = float(np.trace(post).real)
            if p < PROB_FLOOR:
                continue
            out[label] = (p, DensityMatrix(post / p, rho.dims))
    else:
        total = np.zeros_like(rho.mat)
        for label, r in povm.elements:
            total = total + r
            root = linalg.psd_sqrt(r)
            post = root @ rho.mat @ root
            p = float(np.trace(post).real)
            if p < PROB_FLOOR:
                continue
            out[label] = (p, DensityMatrix(post / p, rho.dims))
        rem = identity(rho.dim) - total
        root = linalg.psd_sqrt(0.5 * (rem + rem.conj().T))
        post = root @ rho.mat @ root
        p = float(np.trace(post).real)
        if p >= PROB_FLOOR:
            out[ER] = (p, DensityMatrix(post / p, rho.dims))
    if not out:
        raise ValidationError("all measurement outcomes fell below PROB_FLOOR")
    return out


def measure_probabilities(povm: Povm, rho: DensityMatrix) -> dict:
    """Outcome probabilities only (no post-states), same floor convention."""
    probs = {}
    if povm.mode == "complete":
        for label, f in povm.elements:
            p = float(np.trace(rho.mat @ f.conj().T @ f).real)
            if p >= PROB_FLOOR:
                probs[label] = p
    else:
        acc = 0.0
        for label, r in povm.elements:
            p = float(np.trace(rho.mat @ r).real)
            acc += p
            if p >= PROB_FLOOR:
                probs[label] = p
        if 1.0 - acc >= PROB_FLOOR:
            probs[ER] = 1.0 - acc
    return probs


# ----------------------------------------------------------------------------
# Built-in channel library.


def identity_channel(dim: int = 2) -> QuantumChannel:
    return QuantumChannel((identity(dim),), "identity")


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def depolarizing_channel(p: float) -> QuantumChannel:
    """Qubit depolarizing noise; p = 1 is the fully depolarizing channel."""
    if not 0.0 <= p <= 4.0 / 3.0:
        raise ValidationError(f"depolarizing parameter {p} out of range")
    ks = (
        np.sqrt(1.0 - 3.0 * p / 4.0) * _PAULI["I"],
        np.sqrt(p / 4.0) * _PAULI["X"],
        np.sqrt(p / 4.0) * _PAULI["Y"],
        np.sqrt(p / 4.0) * _PAULI["Z"],
    )
    return QuantumChannel(ks, f"depolarizing({p})")


def fully_depolarizing_channel() -> QuantumChannel:
    return depolarizing_channel(1.0)


def amplitude_damping_channel(gamma: float) -> QuantumChannel:
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"damping parameter {gamma} out of range")
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma)]], dtype=complex)
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    return QuantumChannel((k0, k1), f"amplitude_damping({gamma})")


def dephasing_channel(p: float) -> QuantumChannel:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"dephasing parameter {p} out of range")
    ks = (np.sqrt(1.0 - p) * _PAULI["I"], np.sqrt(p) * _PAULI["Z"])
    return QuantumChannel(ks, f"dephasing({p})")


# ----------------------------------------------------------------------------
# Seeded random generators (used by tests and the lemma-check harness).


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(rng: np.random.Generator, dim: int, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return density(rho / np.trace(rho).real)


def random_pure_state(rng: np.random.Generator, dim: int) -> DensityMatrix:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return pure_state(v)


def _random_isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Orthonormalized Gaussian columns: V^dagger V = I_cols."""
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_channel(rng: np.random.Generator, dim: int, num_kraus: int = 2) -> QuantumChannel:
    """Haar-like random channel: isometry split into Kraus blocks."""
    v = _random_isometry(rng, dim * num_kraus, dim)
    ks = tuple(v[j * dim : (j + 1) * dim, :] for j in range(num_kraus))
    return QuantumChannel(ks, "random")


def random_povm(rng: np.random.Generator, dim: int, outcomes: int = 2) -> Povm:
    """Random complete POVM in measurement-operator form."""
    v = _random_isometry(rng, dim * outcomes, dim)
    els = tuple((k, v[k * dim : (k + 1) * dim, :]) for k in range(outcomes))
    return Povm(els)
