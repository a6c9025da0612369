"""Dirichlet-Laplacian spectra of rectangles and boxes.

Eigenvalues of the box (0,L) x (0,M) [x (0,P)] are pi^2 (n^2/L^2 + m^2/M^2
[+ l^2/P^2]).  Side squares are kept as exact rationals so that eigenvalue
comparison, and hence multiplicity detection, is exact: two modes share a
group iff their eigenvalue rationals are equal, with no floating-point
tolerance anywhere.  Everything downstream (reduced functional dimension,
branch counts) depends on that exactness.

All functions here are pure and all types immutable; they are safe to call
concurrently.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, IncompletePrefix, OutOfDomain

_SIDE_RE = re.compile(r"^\s*([0-9./]+)?\s*\*?\s*(pi\^2|pi2|pi\*\*2)?\s*$")


def parse_side_sq(text: str) -> tuple[Fraction, bool]:
    """Parse one squared-side entry of a domain config.

    Accepts plain rationals ("2.25", "9/4") and rational multiples of
    pi^2 ("pi^2", "4pi^2", "9/4 pi^2").  Returns (rational part, flag
    whether the entry is in units of pi^2).
    """
    m = _SIDE_RE.match(text)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ConfigError(f"cannot parse side square {text!r}")
    num = Fraction(m.group(1)) if m.group(1) else Fraction(1)
    if num <= 0:
        raise ConfigError(f"side square must be positive, got {text!r}")
    return num, m.group(2) is not None


@dataclass(frozen=True)
class DomainSpec:
    """A rectangle (dimension 2) or box (dimension 3).

    ``side_sq`` holds the squared side lengths as exact rationals.  When
    ``pi_squared`` is true the entries are in units of pi^2 (so "pi^2"
    means the side has length pi); all sides must use the same unit or
    eigenvalue comparison would leave the rationals.
    """

    dimension: int
    side_sq: tuple[Fraction, ...]
    pi_squared: bool = True

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if len(self.side_sq) != self.dimension:
            raise ConfigError("side_sq length must equal dimension")
        if any(s <= 0 for s in self.side_sq):
            raise ConfigError("side squares must be strictly positive")

    @classmethod
    def from_strings(cls, sides: Sequence[str]) -> "DomainSpec":
        parsed = [parse_side_sq(s) for s in sides]
        units = {u for _, u in parsed}
        if len(units) != 1:
            raise ConfigError(
                "all side squares must share a unit (all plain rationals or "
                "all multiples of pi^2)"
            )
        return cls(len(parsed), tuple(f for f, _ in parsed), pi_squared=units.pop())

    @classmethod
    def square(cls) -> "DomainSpec":
        """The square (0,pi) x (0,pi)."""
        return cls(2, (Fraction(1), Fraction(1)), pi_squared=True)

    @classmethod
    def cube(cls) -> "DomainSpec":
        """The cube (0,pi)^3."""
        return cls(3, (Fraction(1), Fraction(1), Fraction(1)), pi_squared=True)

    @property
    def sides(self) -> tuple[float, ...]:
        """Side lengths as floats."""
        unit = math.pi**2 if self.pi_squared else 1.0
        return tuple(math.sqrt(float(s) * unit) for s in self.side_sq)

    @property
    def eigenvalue_unit(self) -> float:
        """lambda = eigenvalue_rational * eigenvalue_unit."""
        return 1.0 if self.pi_squared else math.pi**2

    def mode_value(self, indices: Sequence[int]) -> Fraction:
        """Exact eigenvalue rational of a mode: sum of n_d^2 / side_sq[d]."""
        return sum(
            (Fraction(n * n) / s for n, s in zip(indices, self.side_sq)),
            start=Fraction(0),
        )


@dataclass(frozen=True)
class EigenMode:
    """One separated sine mode with its exact eigenvalue rational.

    ``value`` times the domain's ``eigenvalue_unit`` is the eigenvalue of
    the Dirichlet Laplacian; for pi-sided boxes it is the eigenvalue
    itself (e.g. 2 for the ground mode of the pi-square).
    """

    indices: tuple[int, ...]
    value: Fraction

    @property
    def eigenvalue_num(self) -> int:
        return self.value.numerator

    @property
    def eigenvalue_den(self) -> int:
        return self.value.denominator


@dataclass(frozen=True)
class EigenGroup:
    """All modes sharing one exact eigenvalue.

    ``j`` is the 1-based position of the eigenvalue in the spectrum counted
    with multiplicity (j - 1 eigenvalues lie strictly below); ``k`` is the
    multiplicity.  Modes are sorted lexicographically by indices so the
    coefficient ordering of everything downstream is reproducible.
    """

    value: Fraction
    modes: tuple[EigenMode, ...]
    j: int

    @property
    def k(self) -> int:
        return len(self.modes)

    def eigenvalue(self, domain: DomainSpec) -> float:
        return float(self.value) * domain.eigenvalue_unit


def enumerate_modes(domain: DomainSpec, count: int) -> list[EigenMode]:
    """First ``count`` modes sorted by exact eigenvalue, ties lexicographic.

    The index search box is enlarged until the smallest value any excluded
    index could contribute exceeds the count-th smallest value found, which
    certifies the returned prefix is complete.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = domain.dimension
    nmax = max(2, math.ceil(count ** (1.0 / dim)) + 1)
    min_axis_contrib = [Fraction(1) / s for s in domain.side_sq]
    floor_other = sum(min_axis_contrib, start=Fraction(0))
    while True:
        modes = [
            EigenMode(idx, domain.mode_value(idx))
            for idx in itertools.product(range(1, nmax + 1), repeat=dim)
        ]
        modes.sort(key=lambda m: (m.value, m.indices))
        if len(modes) >= count:
            vmax = modes[count - 1].value
            # cheapest possible mode using an index > nmax on some axis
            tail = min(
                Fraction((nmax + 1) ** 2) / s + (floor_other - Fraction(1) / s)
                for s in domain.side_sq
            )
            if tail > vmax:
                return modes[:count]
        nmax *= 2


def group_spectrum(
    modes: Sequence[EigenMode], next_value: Fraction | None = None
) -> list[EigenGroup]:
    """Group a complete spectrum prefix into exact-multiplicity groups.

    ``modes`` must be sorted ascending with no gaps.  The trailing group may
    have been truncated by the enumeration cutoff, so it is dropped unless
    ``next_value`` (the exact eigenvalue of the first mode beyond the
    prefix) certifies it complete.  Raises :class:`IncompletePrefix` when
    nothing certified remains.
    """
    if not modes:
        raise IncompletePrefix("empty mode list")
    values = [m.value for m in modes]
    if values != sorted(values):
        raise ValueError("modes must be sorted ascending by eigenvalue")

    groups: list[EigenGroup] = []
    j = 1
    for value, grp in itertools.groupby(modes, key=lambda m: m.value):
        members = tuple(sorted(grp, key=lambda m: m.indices))
        groups.append(EigenGroup(value, members, j))
        j += len(members)

    last_complete = next_value is not None and next_value > groups[-1].value
    if not last_complete:
        groups = groups[:-1]
    if not groups:
        raise IncompletePrefix(
            "cannot certify any complete group within the enumeration cutoff"
        )
    return groups


def enumerate_groups(domain: DomainSpec, count: int) -> list[EigenGroup]:
    """First ``count`` eigenvalue groups, each certified complete."""
    if count < 1:
        raise ValueError("count must be >= 1")
    nmodes = max(4, 2 * count)
    while True:
        modes = enumerate_modes(domain, nmodes + 1)
        groups = group_spectrum(modes[:-1], next_value=modes[-1].value)
        if len(groups) >= count:
            return groups[:count]
        nmodes *= 2


def find_group(
    domain: DomainSpec,
    j: int | None = None,
    eigenvalue: float | Fraction | None = None,
) -> EigenGroup:
    """Locate a group by spectral index j or by eigenvalue.

    Eigenvalue matching is exact when the requested value is rational in
    the domain's unit, with a 1e-9 relative numeric fallback otherwise.
    """
    if (j is None) == (eigenvalue is None):
        raise ValueError("specify exactly one of j, eigenvalue")
    if j is not None and j < 1:
        raise ValueError("j must be >= 1")
    ngroups = 8
    while True:
        groups = enumerate_groups(domain, ngroups)
        if j is not None:
            for g in groups:
                # j addressing any member of a multiplet returns the multiplet
                if g.j <= j <= g.j + g.k - 1:
                    return g
        else:
            target = float(eigenvalue)
            for g in groups:
                lam = g.eigenvalue(domain)
                if math.isclose(lam, target, rel_tol=1e-9, abs_tol=1e-12):
                    return g
            if groups[-1].eigenvalue(domain) > target:
                raise ValueError(f"no eigenvalue {eigenvalue} in the spectrum")
        ngroups *= 2


def eigenfunction_eval(mode: EigenMode, domain: DomainSpec, point) -> np.ndarray | float:
    """L2-normalized eigenfunction of ``mode`` at ``point``.

    ``point`` is a sequence of coordinates (scalars or broadcastable
    arrays).  The value is prod_d sqrt(2/L_d) sin(n_d pi x_d / L_d); it
    vanishes on the boundary.  Raises :class:`OutOfDomain` for points
    outside the closed box.
    """
    sides = domain.sides
    if len(point) != domain.dimension:
        raise OutOfDomain("point dimension does not match domain")
    coords = [np.asarray(c, dtype=float) for c in point]
    for c, L in zip(coords, sides):
        if np.any(c < 0.0) or np.any(c > L):
            raise OutOfDomain("point outside the closed box")
    out = 1.0
    for n, c, L in zip(mode.indices, coords, sides):
        out = out * math.sqrt(2.0 / L) * np.sin(n * math.pi * c / L)
    return out


def spectrum_rows(groups: Iterable[EigenGroup]) -> list[dict]:
    """Wire-format rows, one per mode: indices, exact eigenvalue, j, k."""
    rows = []
    for g in groups:
        for m in g.modes:
            rows.append(
                {
                    "indices": list(m.indices),
                    "eigenvalue_num": m.eigenvalue_num,
                    "eigenvalue_den": m.eigenvalue_den,
                    "j": g.j,
                    "k": g.k,
                }
            )
    return rows
