"""Shared linear-algebra primitives for product-level Hilbert spaces.

Conventions used throughout the package:

* Site 0 is the most significant factor of the tensor product, i.e. the
  basis index of a product state ``|l_0 l_1 ... l_{N-1}>`` is
  ``sum_j l_j * prod(dims[j+1:])``.  This matches the ordering produced
  by chained ``numpy.kron`` calls.
* ``Z|0> = +|0>``: the computational zero state is the +1 eigenstate of
  the Pauli Z operator.
* Matrix exponentials of Hermitian generators go through an eigenbasis
  (``eigh``), so unitary propagation is exactly unitary at every step.
"""

from __future__ import annotations

import hashlib
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

# Above this dimension operators are built in sparse (CSR) form.
DENSE_DIM_LIMIT = 4096

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def ket(dim: int, index: int) -> np.ndarray:
    """Basis column vector |index> in a ``dim``-dimensional space."""
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(dim: int, index: int) -> np.ndarray:
    """|index><index| on a single ``dim``-dimensional level space."""
    p = np.zeros((dim, dim), dtype=complex)
    p[index, index] = 1.0
    return p


def transition(dim: int, a: int, b: int) -> np.ndarray:
    """|a><b| on a single site (a row/column pair, not Hermitian)."""
    t = np.zeros((dim, dim), dtype=complex)
    t[a, b] = 1.0
    return t


# ---------------------------------------------------------------------------
# Product-space bookkeeping
# ---------------------------------------------------------------------------

def strides(dims: Sequence[int]) -> np.ndarray:
    """Index strides with site 0 most significant."""
    out = np.ones(len(dims), dtype=np.int64)
    for j in range(len(dims) - 2, -1, -1):
        out[j] = out[j + 1] * dims[j + 1]
    return out


def total_dim(dims: Sequence[int]) -> int:
    return int(np.prod([int(d) for d in dims], dtype=np.int64))


def index_of(levels: Sequence[int], dims: Sequence[int]) -> int:
    """Flat basis index of the product state with per-site level numbers."""
    return int(np.dot(np.asarray(levels, dtype=np.int64), strides(dims)))


def levels_of(index: int, dims: Sequence[int]) -> tuple[int, ...]:
    """Per-site level numbers of a flat basis index (inverse of index_of)."""
    out = []
    for s, d in zip(strides(dims), dims):
        out.append(int(index // s) % d)
    return tuple(out)


def level_table(dims: Sequence[int]) -> np.ndarray:
    """(total_dim, N) array: row i holds the per-site levels of index i."""
    st = strides(dims)
    idx = np.arange(total_dim(dims), dtype=np.int64)
    return np.stack([(idx // st[j]) % dims[j] for j in range(len(dims))], axis=1)


def embed_site(op: np.ndarray, site: int, dims: Sequence[int],
               sparse: bool | None = None):
    """Embed a single-site operator into the full product space.

    Returns a dense array for small spaces and CSR above DENSE_DIM_LIMIT
    (or as requested via ``sparse``).
    """
    dim = total_dim(dims)
    if sparse is None:
        sparse = dim > DENSE_DIM_LIMIT
    left = total_dim(dims[:site]) if site > 0 else 1
    right = total_dim(dims[site + 1:]) if site + 1 < len(dims) else 1
    if sparse:
        return sp.kron(sp.kron(sp.identity(left, format="csr"),
                               sp.csr_matrix(op)),
                       sp.identity(right, format="csr"), format="csr")
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def embed_two_site(op_a: np.ndarray, op_b: np.ndarray, site_a: int, site_b: int,
                   dims: Sequence[int], sparse: bool | None = None):
    """Embed ``op_a (x) op_b`` acting on the ordered site pair (a, b)."""
    if site_a == site_b:
        raise ValueError("two-site embedding requires distinct sites")
    dim = total_dim(dims)
    if sparse is None:
        sparse = dim > DENSE_DIM_LIMIT
    if site_a > site_b:
        site_a, site_b, op_a, op_b = site_b, site_a, op_b, op_a
    if sparse:
        out = sp.identity(total_dim(dims[:site_a]) if site_a else 1, format="csr")
        out = sp.kron(out, sp.csr_matrix(op_a), format="csr")
        mid = total_dim(dims[site_a + 1:site_b]) if site_b - site_a > 1 else 1
        out = sp.kron(out, sp.identity(mid, format="csr"), format="csr")
        out = sp.kron(out, sp.csr_matrix(op_b), format="csr")
        tail = total_dim(dims[site_b + 1:]) if site_b + 1 < len(dims) else 1
        return sp.kron(out, sp.identity(tail, format="csr"), format="csr")
    out = np.eye(total_dim(dims[:site_a]) if site_a else 1)
    out = np.kron(out, op_a)
    if site_b - site_a > 1:
        out = np.kron(out, np.eye(total_dim(dims[site_a + 1:site_b])))
    out = np.kron(out, op_b)
    if site_b + 1 < len(dims):
        out = np.kron(out, np.eye(total_dim(dims[site_b + 1:])))
    return out


# ---------------------------------------------------------------------------
# Constrained (independent-set) bases
# ---------------------------------------------------------------------------

def independent_set_basis(n_sites: int, edges: Sequence[tuple[int, int]]) -> list[int]:
    """All occupation bitmasks with no two excited sites sharing an edge.

    Site 0 maps to the most significant bit, matching the product-index
    convention.  For a nearest-neighbour chain the count is the Fibonacci
    number F(N+2).
    """
    masks = [(1 << (n_sites - 1 - j)) | (1 << (n_sites - 1 - k)) for j, k in edges]
    out = []
    for b in range(1 << n_sites):
        if all((b & m) != m for m in masks):
            out.append(b)
    return out


def chain_edges(n_sites: int, ring: bool = False) -> list[tuple[int, int]]:
    edges = [(j, j + 1) for j in range(n_sites - 1)]
    if ring and n_sites > 2:
        edges.append((0, n_sites - 1))
    return edges


# ---------------------------------------------------------------------------
# Propagation kernels
# ---------------------------------------------------------------------------

def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) for Hermitian h via its eigenbasis (exactly unitary)."""
    w, u = np.linalg.eigh(h)
    return (u * np.exp(-1j * w * t)) @ u.conj().T


def apply_expm_hermitian(h: np.ndarray, t: float, psi: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(h)
    return u @ (np.exp(-1j * w * t) * (u.conj().T @ psi))


# Fourth-order commutator-free Magnus nodes/weights (two exponential factors).
_CF4_NODE_LO = 0.5 - np.sqrt(3.0) / 6.0
_CF4_NODE_HI = 0.5 + np.sqrt(3.0) / 6.0
_CF4_W_MAJOR = 0.25 + np.sqrt(3.0) / 6.0
_CF4_W_MINOR = 0.25 - np.sqrt(3.0) / 6.0


def cf4_step(h_of_s: Callable[[float], np.ndarray], dt: float,
             psi: np.ndarray) -> np.ndarray:
    """One commutator-free 4th-order Magnus step for H(s), s in [0, 1].

    Exact (single factor) when H is constant; 4th order for smooth time
    dependence; always exactly unitary since each factor is a Hermitian
    exponential.
    """
    h1 = h_of_s(_CF4_NODE_LO)
    h2 = h_of_s(_CF4_NODE_HI)
    psi = apply_expm_hermitian(_CF4_W_MAJOR * h1 + _CF4_W_MINOR * h2, dt, psi)
    psi = apply_expm_hermitian(_CF4_W_MINOR * h1 + _CF4_W_MAJOR * h2, dt, psi)
    return psi


# ---------------------------------------------------------------------------
# Deterministic random streams
# ---------------------------------------------------------------------------

def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Named Philox stream: independent for every (seed, label) pair.

    The Philox key is derived from SHA-256 of the pair, so streams are
    stable across platforms and insertion order of consumers.
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
