"""Atom registers: positions, species tags, level schemes, blockade graphs.

Distances are in micrometres and angles in radians.  The quantization
axis (default ``z``) is stored on the register; pair angles are measured
against it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Magic angle arccos(1/sqrt(3)) where the dipolar factor 1-3cos^2(theta)
#: vanishes (54.7356 degrees).
MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))

#: Canonical level labels and their single-character display symbols.
LEVEL_SYMBOLS = {"g0": "0", "g1": "1", "r": "r", "rp": "p"}

#: Symbol used for atoms lost from the simulated level structure.
LOST_SYMBOL = "L"

_ALIASES = {"r'": "rp", "0": "g0", "1": "g1"}

_ENCODING_PAIRS = {
    "gg": ("g0", "g1"),
    "gr": ("g0", "r"),
    "rr": ("r", "rp"),
}


def _canon(label: str) -> str:
    label = _ALIASES.get(label, label)
    if label not in LEVEL_SYMBOLS:
        raise ValueError(f"unknown level label {label!r}; expected one of "
                         f"{sorted(LEVEL_SYMBOLS)} (or alias r')")
    return label


@dataclass(frozen=True)
class LevelScheme:
    """Per-atom level structure with a declared qubit encoding.

    Parameters
    ----------
    labels : sequence of str
        Levels present on this atom, drawn from ``{"g0","g1","r","rp"}``
        (``"r'"`` is accepted as an alias for ``"rp"``).  Order fixes the
        local basis index of each level.
    encoding : {"gg", "gr", "rr"}
        Which two levels form the computational pair:
        ``gg`` -> (g0, g1) ground-state qubit with optional Rydberg
        auxiliaries, ``gr`` -> (g0, r), ``rr`` -> (r, rp).
    """

    labels: tuple[str, ...]
    encoding: str = "gg"

    def __post_init__(self):
        labels = tuple(_canon(l) for l in self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate level labels")
        if not 2 <= len(labels) <= 4:
            raise ValueError("level scheme needs 2..4 levels")
        if self.encoding not in _ENCODING_PAIRS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        for need in _ENCODING_PAIRS[self.encoding]:
            if need not in labels:
                raise ValueError(
                    f"encoding {self.encoding!r} requires level {need!r}")
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        """Local basis index of a level label."""
        return self.labels.index(_canon(label))

    @property
    def computational(self) -> tuple[int, int]:
        """Local indices of (|0>, |1>) under the declared encoding."""
        a, b = _ENCODING_PAIRS[self.encoding]
        return self.index(a), self.index(b)

    def symbol(self, level: int) -> str:
        """Single-character display symbol of a local level index."""
        return LEVEL_SYMBOLS[self.labels[level]]


#: Ground+Rydberg scheme used by most gate protocols.
GG_R = LevelScheme(("g0", "g1", "r"), "gg")
#: Full four-level scheme (two ground, two Rydberg states).
GG_RR = LevelScheme(("g0", "g1", "r", "rp"), "gg")
#: Ground-Rydberg qubit used by many-body (Ising/PXP) work.
GR = LevelScheme(("g0", "r"), "gr")


@dataclass(frozen=True, eq=False)
class Register:
    """Ordered atom array: positions (um), species tags, level schemes."""

    sites: np.ndarray
    species: tuple[str, ...] = ()
    schemes: tuple[LevelScheme, ...] = ()
    quantization_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.sites, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError("site positions must be (N, 3)")
        if not np.all(np.isfinite(pos)):
            raise ValueError("site coordinates must be finite")
        n = len(pos)
        if n >= 2:
            d2 = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
            d2[np.diag_indices(n)] = np.inf
            if d2.min() <= 0.0:
                raise ValueError("two sites coincide")
        species = tuple(self.species) if self.species else ("Rb",) * n
        schemes = tuple(self.schemes) if self.schemes else (GG_R,) * n
        if len(species) != n or len(schemes) != n:
            raise ValueError("species/schemes length must match site count")
        axis = np.asarray(self.quantization_axis, dtype=float)
        nrm = np.linalg.norm(axis)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ValueError("quantization axis must be a nonzero vector")
        object.__setattr__(self, "sites", pos)
        object.__setattr__(self, "species", species)
        object.__setattr__(self, "schemes", schemes)
        object.__setattr__(self, "quantization_axis",
                           tuple(axis / nrm))

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.schemes)

    def with_schemes(self, scheme: LevelScheme) -> "Register":
        """Copy of the register with a uniform level scheme."""
        return Register(self.sites, self.species,
                        (scheme,) * self.n_sites, self.quantization_axis)


@dataclass(frozen=True)
class BlockadeGraph:
    """Undirected graph of pairs closer than the blockade radius."""

    n_sites: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        for j, k in self.edges:
            if j == k:
                raise ValueError("self-edges are not allowed")
        norm = frozenset((min(j, k), max(j, k)) for j, k in self.edges)
        object.__setattr__(self, "edges", norm)

    def neighbors(self, j: int) -> tuple[int, ...]:
        out = [k if a == j else a for a, k in self.edges if j in (a, k)]
        return tuple(sorted(out))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def build_lattice(kind: str, counts, spacing: float, **extra) -> Register:
    """Deterministic standard geometries.

    Parameters
    ----------
    kind : {"chain", "ring", "square", "triangular", "staggered_chain"}
    counts : int or (int, int)
        Total site count (chain/ring/staggered_chain) or grid shape.
    spacing : float
        Nearest-neighbour distance in um (ring: the chord between
        neighbouring sites).
    extra :
        ``staggered_chain`` accepts ``offset`` (transverse dimerization
        displacement of the second sublattice, um) and ``tilt`` (angle of
        the chain axis against the quantization axis, default the magic
        angle).  All kinds accept ``species`` and ``scheme``.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    species = extra.pop("species", None)
    scheme = extra.pop("scheme", None)
    kind = kind.lower()
    if kind == "chain":
        n = int(counts)
        if n < 1:
            raise ValueError("counts must be >= 1")
        pos = np.stack([np.arange(n) * spacing,
                        np.zeros(n), np.zeros(n)], axis=1)
    elif kind == "ring":
        n = int(counts)
        if n < 1:
            raise ValueError("counts must be >= 1")
        if n == 1:
            pos = np.zeros((1, 3))
        else:
            radius = spacing / (2.0 * np.sin(np.pi / n))
            ang = 2.0 * np.pi * np.arange(n) / n
            pos = np.stack([radius * np.cos(ang), radius * np.sin(ang),
                            np.zeros(n)], axis=1)
    elif kind in ("square", "triangular"):
        try:
            nx, ny = (int(c) for c in counts)
        except TypeError:
            nx, ny = int(counts), 1
        if nx < 1 or ny < 1:
            raise ValueError("counts must be >= 1")
        rows = []
        for iy in range(ny):
            xoff = 0.5 * spacing * (iy % 2) if kind == "triangular" else 0.0
            dy = spacing * (np.sqrt(3.0) / 2.0 if kind == "triangular" else 1.0)
            for ix in range(nx):
                rows.append((ix * spacing + xoff, iy * dy, 0.0))
        pos = np.array(rows)
    elif kind == "staggered_chain":
        n = int(counts)
        if n < 1:
            raise ValueError("counts must be >= 1")
        tilt = float(extra.pop("tilt", MAGIC_ANGLE))
        offset = float(extra.pop("offset", 0.5 * spacing))
        # Chain axis tilted by `tilt` from the quantization (z) axis, in
        # the x-z plane; sublattice B displaced transversely so that
        # same-sublattice bonds keep the tilt angle while A-B bonds do not.
        axis = np.array([np.sin(tilt), 0.0, np.cos(tilt)])
        perp = np.array([np.cos(tilt), 0.0, -np.sin(tilt)])
        rows = []
        for j in range(n):
            cell, sub = divmod(j, 2)
            rows.append(cell * spacing * axis + sub * offset * perp)
        pos = np.array(rows)
    else:
        raise ValueError(f"unknown lattice kind {kind!r}")
    if extra:
        raise ValueError(f"unused lattice parameters: {sorted(extra)}")
    n = len(pos)
    return Register(
        pos,
        (species,) * n if isinstance(species, str) else (species or ()),
        (scheme,) * n if isinstance(scheme, LevelScheme) else (scheme or ()),
    )


def pair_geometry(register: Register, j: int, k: int) -> tuple[float, float]:
    """Distance R_jk (um) and angle theta_jk against the quantization axis.

    The angle is folded to [0, pi/2] so that it is symmetric under
    exchanging j and k (the dipolar factor depends only on cos^2).
    """
    if j == k:
        raise ValueError("pair geometry needs two distinct sites")
    delta = register.sites[k] - register.sites[j]
    r = float(np.linalg.norm(delta))
    cos = abs(float(np.dot(delta, register.quantization_axis))) / r
    theta = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    return r, theta


def blockade_graph(register: Register, blockade_radius: float) -> BlockadeGraph:
    """Edges between all pairs strictly closer than the blockade radius."""
    if blockade_radius <= 0:
        raise ValueError("blockade radius must be positive")
    edges = []
    for j in range(register.n_sites):
        for k in range(j + 1, register.n_sites):
            r, _ = pair_geometry(register, j, k)
            if r < blockade_radius:
                edges.append((j, k))
    return BlockadeGraph(register.n_sites, frozenset(edges))


def write_positions_csv(register: Register, path) -> None:
    """Write site positions as CSV with unit-tagged headers."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_index", "x_um", "y_um", "z_um"])
        for j, (x, y, z) in enumerate(register.sites):
            w.writerow([j, repr(float(x)), repr(float(y)), repr(float(z))])
