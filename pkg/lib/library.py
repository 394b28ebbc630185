"""
Polynomial candidate library Theta(X).

Terms are monomials in the K state variables, listed by total degree and,
within a degree, in the order ``itertools.combinations_with_replacement``
yields sorted variable-index tuples (x0^2, x0 y0, y0^2, ...). Each term
remembers which state variables and which nodes feed it; the graph penalty
reads those sets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from lib.graph import StateVariableMap
from lib.utils import ParameterError, ShapeError

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TermDescriptor:
    exponents: Tuple[int, ...]
    name: str
    source_vars: FrozenSet[int]
    source_nodes: FrozenSet[int]

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def is_constant(self) -> bool:
        return not self.source_vars


def term_name(exponents: Tuple[int, ...], svmap: StateVariableMap) -> str:
    """Canonical name: ``1`` for the constant, otherwise factors in
    variable-index order joined by spaces, powers as ``^p``."""
    factors = []
    for i, e in enumerate(exponents):
        if e == 0:
            continue
        var = svmap.var_name(i)
        factors.append(var if e == 1 else f"{var}^{e}")
    return " ".join(factors) if factors else "1"


def _descriptor(exponents: Tuple[int, ...], svmap: StateVariableMap) -> TermDescriptor:
    source_vars = frozenset(i for i, e in enumerate(exponents) if e > 0)
    return TermDescriptor(
        exponents=exponents,
        name=term_name(exponents, svmap),
        source_vars=source_vars,
        source_nodes=frozenset(svmap.node_of(i) for i in source_vars),
    )


@dataclass(frozen=True)
class FeatureLibrary:
    terms: Tuple[TermDescriptor, ...]
    max_degree: int
    svmap: StateVariableMap
    _index: Dict[Tuple[int, ...], int] = field(default_factory=dict, repr=False, compare=False)
    _exponents: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {t.exponents: j for j, t in enumerate(self.terms)})
        exps = np.array([t.exponents for t in self.terms], dtype=int).reshape(len(self.terms), self.svmap.total)
        exps.setflags(write=False)
        object.__setattr__(self, "_exponents", exps)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def n_vars(self) -> int:
        return self.svmap.total

    @property
    def exponents(self) -> np.ndarray:
        """C x K matrix of exponents."""
        return self._exponents

    @property
    def names(self) -> List[str]:
        return [t.name for t in self.terms]

    def index_of(self, exponents) -> int:
        """Column of the monomial with these exponents; KeyError if absent."""
        return self._index[tuple(int(e) for e in exponents)]

    def has_term(self, exponents) -> bool:
        return tuple(int(e) for e in exponents) in self._index


def build_library(svmap: StateVariableMap, max_degree: int) -> FeatureLibrary:
    """All monomials of total degree 0..max_degree in the K state variables."""
    if max_degree < 1:
        raise ParameterError(f"max_degree must be at least 1, got {max_degree}")
    k = svmap.total
    terms = []
    for degree in range(max_degree + 1):
        for combo in combinations_with_replacement(range(k), degree):
            exps = [0] * k
            for var in combo:
                exps[var] += 1
            terms.append(_descriptor(tuple(exps), svmap))
    assert len(terms) == comb(k + max_degree, max_degree)
    _log.debug("library: K=%d degree=%d -> C=%d terms", k, max_degree, len(terms))
    return FeatureLibrary(tuple(terms), max_degree, svmap)


def evaluate(library: FeatureLibrary, states: np.ndarray) -> np.ndarray:
    """Theta(X): T x C matrix; column j is term j evaluated row-wise.

    Powers are built by repeated multiplication so a product term equals the
    product of its factor columns up to rounding.
    """
    x = np.asarray(states, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != library.n_vars:
        raise ShapeError(
            f"states have shape {np.shape(states)}, library expects {library.n_vars} columns"
        )
    powers = [np.ones_like(x)]
    for _ in range(library.max_degree):
        powers.append(powers[-1] * x)
    theta = np.ones((x.shape[0], len(library)))
    exps = library.exponents
    for var in range(library.n_vars):
        col_exp = exps[:, var]
        used = np.nonzero(col_exp)[0]
        if used.size:
            theta[:, used] *= _powers_for(powers, var, col_exp[used])
    return theta


def _powers_for(powers: List[np.ndarray], var: int, exps: np.ndarray) -> np.ndarray:
    """T x len(exps) block of ``x_var ** e`` for each requested exponent."""
    stacked = np.stack([p[:, var] for p in powers], axis=1)
    return stacked[:, exps]


def column_normalize(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Divide each column by its Euclidean norm. Zero-norm columns keep scale
    1 and are left untouched. Coefficients map back as ``xi / scale``."""
    theta = np.asarray(theta, dtype=float)
    scales = np.linalg.norm(theta, axis=0)
    zero = scales == 0
    if np.any(zero):
        _log.warning("column_normalize: %d zero-norm column(s) left unscaled: %s",
                     int(zero.sum()), np.nonzero(zero)[0].tolist())
        scales = np.where(zero, 1.0, scales)
    return theta / scales, scales
