"""Basis bookkeeping for explicitly enumerated tensor-product spaces.

A layout is an ordered list of factors ``(label, dimension)``; the first
factor varies slowest in the flattened index (row-major / Kronecker order).
All other modules address factors by label, never by raw position.

Some factors are *registers*: a single factor whose levels encode occupation
patterns of several logical two-level sites (e.g. the zero-or-one-excitation
sector of a chromophore network stored as one (N+2)-level factor).  For such
factors the layout carries an occupation table mapping each level to the
occupation numbers of its logical sites, which is what entanglement
bipartitions are defined against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LayoutError(ValueError):
    """Raised when labels or dimensions do not match a layout."""


@dataclass(frozen=True)
class RegisterEncoding:
    """Occupation semantics of one register factor.

    ``site_labels`` names the logical two-level sites the register encodes;
    ``table[level, k]`` is the occupation (0/1) of logical site ``k`` when the
    register is in ``level``.
    """

    site_labels: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        if t.ndim != 2 or t.shape[1] != len(self.site_labels):
            raise LayoutError("occupation table shape does not match site labels")
        object.__setattr__(self, "table", t)


@dataclass(frozen=True)
class BasisLayout:
    """Ordered factor list of a tensor-product basis (first factor slowest)."""

    factors: tuple[tuple[str, int], ...]
    encodings: dict[str, RegisterEncoding] = field(default_factory=dict)

    def __post_init__(self):
        labels = [lab for lab, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"factor labels not unique: {labels}")
        for lab, dim in self.factors:
            if dim < 1:
                raise LayoutError(f"factor {lab!r} has non-positive dimension {dim}")
        for lab, enc in self.encodings.items():
            if enc.table.shape[0] != self.dim_of(lab):
                raise LayoutError(f"encoding table for {lab!r} does not match its dimension")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def index_of(self, label: str) -> int:
        for k, (lab, _) in enumerate(self.factors):
            if lab == label:
                return k
        raise LayoutError(f"unknown factor label {label!r}; have {self.labels}")

    def dim_of(self, label: str) -> int:
        return self.factors[self.index_of(label)][1]

    def site_labels(self) -> tuple[str, ...]:
        """All logical site labels: register sites plus plain two-level factors."""
        out: list[str] = []
        for lab, dim in self.factors:
            if lab in self.encodings:
                out.extend(self.encodings[lab].site_labels)
            elif dim == 2:
                out.append(lab)
        return tuple(out)

    def occupation_table(self, labels: tuple[str, ...] | None = None) -> tuple[tuple[str, ...], np.ndarray]:
        """Occupation numbers of every basis state over the logical sites.

        Factors that are neither registers nor two-level (e.g. vibrational
        ladders) carry no logical sites and are skipped; ``labels`` restricts
        and orders the site columns.  Returns ``(site_labels, table)`` with
        ``table`` of shape (total_dim, n_sites).
        """
        cols: list[np.ndarray] = []
        names: list[str] = []
        empty = np.zeros((self.total_dim, 0), dtype=np.int64)
        # index of each factor for every flattened basis state
        idx = np.indices(self.dims).reshape(len(self.factors), -1)
        for k, (lab, dim) in enumerate(self.factors):
            if lab in self.encodings:
                enc = self.encodings[lab]
                block = enc.table[idx[k]]
                for j, s in enumerate(enc.site_labels):
                    names.append(s)
                    cols.append(block[:, j])
            elif dim == 2:
                names.append(lab)
                cols.append(idx[k])
        table = np.stack(cols, axis=1) if cols else empty
        if labels is not None:
            order = []
            for lab in labels:
                if lab not in names:
                    raise LayoutError(f"unknown site label {lab!r}; have {tuple(names)}")
                order.append(names.index(lab))
            return tuple(labels), table[:, order]
        return tuple(names), table


@dataclass(frozen=True)
class Bipartition:
    """A bipartition for entanglement evaluation, by factor or site labels."""

    side_a: frozenset[str]
    side_b: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "side_a", frozenset(self.side_a))
        object.__setattr__(self, "side_b", frozenset(self.side_b))
        if self.side_a & self.side_b:
            raise LayoutError(f"bipartition sides overlap: {sorted(self.side_a & self.side_b)}")
        if not self.side_a or not self.side_b:
            raise LayoutError("both sides of a bipartition must be non-empty")


def product_layout(*factors: tuple[str, int]) -> BasisLayout:
    return BasisLayout(tuple(factors))


def excitation_register(n_sites: int, label: str = "exc", with_sink: bool = True,
                        site_prefix: str = "site") -> BasisLayout:
    """Zero-or-one-excitation register: ground, one level per site, optional sink.

    Level 0 is the global ground state, level j (1..n) puts the excitation on
    site j, and the last level (when present) is the occupied sink.
    """
    n_levels = n_sites + 1 + (1 if with_sink else 0)
    labels = tuple(f"{site_prefix}{j}" for j in range(1, n_sites + 1))
    if with_sink:
        labels = labels + ("sink",)
    table = np.zeros((n_levels, len(labels)), dtype=np.int64)
    for j in range(1, n_sites + 1):
        table[j, j - 1] = 1
    if with_sink:
        table[n_sites + 1, n_sites] = 1
    enc = RegisterEncoding(labels, table)
    return BasisLayout(((label, n_levels),), {label: enc})


def ancilla_register(n_sites: int, label: str = "anc") -> BasisLayout:
    """Register of n levels, level a meaning 'ancilla qubit a+1 occupied'."""
    labels = tuple(f"{label}{j}" for j in range(1, n_sites + 1))
    table = np.eye(n_sites, dtype=np.int64)
    return BasisLayout(((label, n_sites),), {label: RegisterEncoding(labels, table)})


def join_layouts(*layouts: BasisLayout) -> BasisLayout:
    factors: tuple[tuple[str, int], ...] = ()
    encodings: dict[str, RegisterEncoding] = {}
    for lay in layouts:
        factors = factors + lay.factors
        encodings.update(lay.encodings)
    return BasisLayout(factors, encodings)
