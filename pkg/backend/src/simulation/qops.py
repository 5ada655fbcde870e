"""
Operator and state algebra for the three-qubit register.

The register ordering is fixed as D1 ⊗ A ⊗ D2 everywhere in the simulator:
basis label "abc" means D1 in |a⟩, A in |b⟩ and D2 in |c⟩. |0⟩ is the
ground state and a parity outcome of +1 corresponds to the ancilla being
found in |0⟩.

Usage:
    zz = pauli_string("ZIZ")
    rho = density(basis_state("000"))
    data = partial_trace(rho, {Site.D1, Site.D2})
    f = fidelity(data, bell_state("phi_plus"))
"""

import enum
import itertools
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from backend.src.simulation.errors import InvalidInputError

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
IMAG_TOL = 1e-9


class Site(enum.Enum):
    """Qubit sites of the register, in tensor-product order."""

    D1 = "D1"
    A = "A"
    D2 = "D2"

    @property
    def index(self) -> int:
        return FULL_ORDER.index(self)

    @classmethod
    def parse(cls, value) -> "Site":
        if isinstance(value, Site):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidInputError(f"unknown site '{value}' (expected D1, A or D2)")


FULL_ORDER = (Site.D1, Site.A, Site.D2)
DATA_SITES = (Site.D1, Site.D2)

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |0⟩⟨1|: lowers the excited state into the ground state
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
PROJECTOR_0 = np.array([[1, 0], [0, 0]], dtype=complex)
PROJECTOR_1 = np.array([[0, 0], [0, 1]], dtype=complex)

PAULIS: Dict[str, np.ndarray] = {
    "I": IDENTITY2,
    "X": SIGMA_X,
    "Y": SIGMA_Y,
    "Z": SIGMA_Z,
}


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the given operators or vectors, left to right."""
    return reduce(np.kron, ops)


def pauli_operator(label: str) -> np.ndarray:
    """
    Build the tensor product of single-qubit Paulis named by ``label``.

    Args:
        label: String over {I, X, Y, Z}; one character per qubit

    Returns:
        np.ndarray: 2^n × 2^n Pauli operator

    Raises:
        InvalidInputError: If the label is empty or contains other characters
    """
    if not label:
        raise InvalidInputError("Pauli label must not be empty")
    label = label.upper()
    bad = [c for c in label if c not in PAULIS]
    if bad:
        raise InvalidInputError(f"invalid Pauli label '{label}': unexpected {''.join(bad)!r}")
    return tensor(*(PAULIS[c] for c in label))


def pauli_string(label: str) -> np.ndarray:
    """
    Three-qubit Pauli operator with characters ordered D1, A, D2.

    Args:
        label: Three characters over {I, X, Y, Z}

    Returns:
        np.ndarray: 8×8 Hermitian, unitary Pauli operator
    """
    if len(label) != 3:
        raise InvalidInputError(f"three-qubit Pauli label must have length 3, got '{label}'")
    return pauli_operator(label)


def embed(ops: Dict[Site, np.ndarray], order: Sequence[Site] = FULL_ORDER) -> np.ndarray:
    """
    Embed single-qubit operators at their sites, identity elsewhere.

    Args:
        ops: Mapping from site to 2×2 operator
        order: Tensor-product ordering of the register

    Returns:
        np.ndarray: Operator on the full register
    """
    factors = []
    for site in order:
        op = ops.get(site, IDENTITY2)
        op = np.asarray(op, dtype=complex)
        if op.shape != (2, 2):
            raise InvalidInputError(f"operator on {site.value} must be 2x2, got shape {op.shape}")
        factors.append(op)
    return tensor(*factors)


def embed_single(op: np.ndarray, site) -> np.ndarray:
    """Embed a 2×2 operator at ``site`` of the D1 ⊗ A ⊗ D2 register."""
    return embed({Site.parse(site): op})


def pair_projector_11(pair: Sequence) -> np.ndarray:
    """|11⟩⟨11| on the two named sites, identity on the third (8×8)."""
    first, second = (Site.parse(s) for s in pair)
    if first == second:
        raise InvalidInputError("pair projector needs two distinct sites")
    return embed({first: PROJECTOR_1, second: PROJECTOR_1})


def rotation(axis: str, angle: float) -> np.ndarray:
    """
    Single-qubit rotation exp(-i·angle·σ_axis/2).

    Args:
        axis: One of "x", "y", "z"
        angle: Rotation angle in radians
    """
    axis = axis.lower()
    if axis not in ("x", "y", "z"):
        raise InvalidInputError(f"unknown rotation axis '{axis}'")
    sigma = PAULIS[axis.upper()]
    return np.cos(angle / 2) * IDENTITY2 - 1j * np.sin(angle / 2) * sigma


def basis_state(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``basis_state("010")``."""
    if not bits or any(b not in "01" for b in bits):
        raise InvalidInputError(f"invalid basis label '{bits}'")
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return vec


def bell_state(name: str) -> np.ndarray:
    """
    Two-qubit Bell state by name.

    Args:
        name: One of "phi_plus", "phi_minus", "psi_plus", "psi_minus"
    """
    s = 1 / np.sqrt(2)
    states = {
        "phi_plus": s * (basis_state("00") + basis_state("11")),
        "phi_minus": s * (basis_state("00") - basis_state("11")),
        "psi_plus": s * (basis_state("01") + basis_state("10")),
        "psi_minus": s * (basis_state("01") - basis_state("10")),
    }
    if name not in states:
        raise InvalidInputError(f"unknown Bell state '{name}'")
    return states[name]


def density(psi: np.ndarray) -> np.ndarray:
    """Projector |ψ⟩⟨ψ| of a normalized state vector."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-12:
        raise InvalidInputError(f"state vector is not normalized (norm={norm:.3e})")
    return np.outer(psi, psi.conj())


def n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2 ** n != dim:
        raise InvalidInputError(f"dimension {dim} is not a power of two")
    return n


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return np.allclose(op, op.conj().T, atol=tol, rtol=0)


def is_unitary(op: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    return np.allclose(op.conj().T @ op, np.eye(op.shape[0]), atol=tol, rtol=0)


def check_density(rho: np.ndarray, weight: float = 1.0,
                  trace_tol: float = 1e-9, eig_tol: float = 1e-9) -> List[str]:
    """
    Collect violations of the density-matrix invariants.

    Args:
        rho: Candidate density matrix
        weight: Expected trace (1 for normalized states)

    Returns:
        List[str]: Human-readable violations; empty when ``rho`` is valid
    """
    problems = []
    if not np.all(np.isfinite(rho)):
        return ["non-finite entries"]
    if not is_hermitian(rho, 1e-12 * max(1.0, float(np.abs(rho).max()))):
        problems.append("not Hermitian")
    trace = float(np.real(np.trace(rho)))
    if abs(trace - weight) > trace_tol:
        problems.append(f"trace {trace:.12f} != {weight}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if min_eig < -eig_tol:
        problems.append(f"negative eigenvalue {min_eig:.3e}")
    return problems


def partial_trace(rho: np.ndarray, keep: Iterable,
                  order: Sequence[Site] = FULL_ORDER) -> np.ndarray:
    """
    Reduced state on the kept sites.

    Args:
        rho: Density matrix on the register described by ``order``
        keep: Sites to keep; the result follows the register ordering
        order: Tensor-product ordering of ``rho``

    Returns:
        np.ndarray: Reduced density matrix (trace preserved)

    Raises:
        InvalidInputError: If ``keep`` is empty or names a site not in ``order``
    """
    keep_sites = {Site.parse(s) for s in keep}
    if not keep_sites:
        raise InvalidInputError("partial_trace needs at least one site to keep")
    missing = keep_sites.difference(order)
    if missing:
        raise InvalidInputError(f"sites {sorted(s.value for s in missing)} not in register")
    n = len(order)
    if rho.shape != (2 ** n, 2 ** n):
        raise InvalidInputError(f"state of shape {rho.shape} does not match {n} qubits")

    t = rho.reshape([2] * (2 * n))
    current = n
    # Trace from the highest axis down so lower axis numbers stay valid
    for axis in reversed(range(n)):
        if order[axis] in keep_sites:
            continue
        t = np.trace(t, axis1=axis, axis2=axis + current)
        current -= 1
    dim = 2 ** current
    return t.reshape(dim, dim)


def fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """
    Fidelity ⟨ψ|ρ|ψ⟩ of a density matrix with a pure target state.

    Raises:
        InvalidInputError: On dimension mismatch
    """
    psi = np.asarray(psi, dtype=complex)
    if rho.shape != (psi.size, psi.size):
        raise InvalidInputError(
            f"dimension mismatch: state {rho.shape} vs target of size {psi.size}"
        )
    value = float(np.real(psi.conj() @ rho @ psi))
    return float(np.clip(value, 0.0, 1.0))


def expectation(rho: np.ndarray, op: np.ndarray) -> float:
    """
    Expectation value Tr(Oρ) of a Hermitian observable.

    Raises:
        InvalidInputError: If ``op`` is not Hermitian or dimensions differ
    """
    if op.shape != rho.shape:
        raise InvalidInputError(f"dimension mismatch: operator {op.shape} vs state {rho.shape}")
    if not is_hermitian(op):
        raise InvalidInputError("expectation requires a Hermitian observable")
    value = np.trace(op @ rho)
    if abs(value.imag) > IMAG_TOL:
        raise InvalidInputError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def all_pauli_labels(n: int, include_identity: bool = False) -> List[str]:
    """All n-qubit Pauli labels in lexicographic I, X, Y, Z order."""
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    if not include_identity:
        labels = [lab for lab in labels if set(lab) != {"I"}]
    return labels


def apply_to_site(rho: np.ndarray, op: np.ndarray, site,
                  order: Optional[Sequence[Site]] = None) -> np.ndarray:
    """Conjugate ``rho`` by a single-qubit operator acting on ``site``."""
    order = order or (FULL_ORDER if rho.shape[0] == 8 else DATA_SITES)
    full = embed({Site.parse(site): op}, order)
    return full @ rho @ full.conj().T
