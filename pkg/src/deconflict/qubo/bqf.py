"""Binary quadratic forms over named variables and their Ising counterparts."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Any, Iterable, Sequence

import numpy as np

# -- variable keys ------------------------------------------------------------
#
# Every bit of a compiled model is named by one of these keys; a form maps
# each key to one contiguous index.


@dataclass(frozen=True)
class DepartureDelay:
    """``d_{i,l}``: flight departs with its ``level``-th allowed delay."""
    flight: str
    level: int


@dataclass(frozen=True)
class Theta:
    """``theta_{i,phi}``: flight uses its ``index``-th shape parameter."""
    flight: str
    index: int


@dataclass(frozen=True)
class Maneuver:
    """``a_{i,k}``; ``flight`` is None for the single exclusive-avoidance bit
    ``a_k`` (1 means flight ``i`` of the conflict maneuvers)."""
    conflict: int
    flight: str | None = None


@dataclass(frozen=True)
class PairDelay:
    i: str
    a: int
    j: str
    b: int


@dataclass(frozen=True)
class PairTheta:
    i: str
    a: int
    j: str
    b: int


@dataclass(frozen=True)
class DelayDiff:
    """``D_{k,gamma}``: accumulated-delay difference at conflict ``k`` is ``gamma``."""
    conflict: int
    gamma: int


@dataclass(frozen=True)
class AccumDelay:
    """``D_{i,k,gamma}``: flight reaches conflict ``k`` with accumulated delay ``gamma``."""
    flight: str
    conflict: int
    gamma: int


@dataclass(frozen=True)
class Ancilla:
    """``a_k``: at least one flight maneuvers at conflict ``k``."""
    conflict: int


@dataclass(frozen=True)
class Index:
    """Anonymous variable (forms read without a key sidecar)."""
    n: int


KEY_TYPES = {
    cls.__name__: cls
    for cls in (DepartureDelay, Theta, Maneuver, PairDelay, PairTheta, DelayDiff, AccumDelay, Ancilla, Index)
}


def key_to_json(key) -> dict:
    return {"kind": type(key).__name__, **asdict(key)}


def key_from_json(data: dict):
    data = dict(data)
    try:
        cls = KEY_TYPES[data.pop("kind")]
    except KeyError as exc:
        raise ValueError(f"unknown variable kind in {data!r}") from exc
    names = {f.name for f in fields(cls)}
    if set(data) != names:
        raise ValueError(f"{cls.__name__} expects fields {sorted(names)}, got {sorted(data)}")
    return cls(**data)


# -- forms ----------------------------------------------------------------------


class BinaryQuadraticForm:
    """``offset + sum_i linear[i] x_i + sum_{i<j} quadratic[i, j] x_i x_j``.

    ``keys[n]`` names variable ``n``. ``model`` optionally carries what is
    needed to decode assignments back into delays; it is not part of the form's
    identity.
    """

    def __init__(self, keys: Sequence, linear: dict, quadratic: dict, offset: float = 0.0, model=None):
        self.keys = tuple(keys)
        n = len(self.keys)
        if len(set(self.keys)) != n:
            raise ValueError("duplicate variable keys")
        self.linear = {int(i): float(v) for i, v in sorted(linear.items()) if v != 0}
        self.quadratic = {}
        for (i, j), v in sorted(quadratic.items()):
            if not (0 <= i < j < n):
                raise ValueError(f"quadratic index ({i}, {j}) must satisfy 0 <= i < j < {n}")
            if v != 0:
                self.quadratic[(int(i), int(j))] = float(v)
        for i in self.linear:
            if not 0 <= i < n:
                raise ValueError(f"linear index {i} out of range")
        self.offset = float(offset)
        self.model = model
        self._index = {k: n for n, k in enumerate(self.keys)}

    @property
    def num_variables(self) -> int:
        return len(self.keys)

    def index(self, key) -> int:
        return self._index[key]

    def __contains__(self, key) -> bool:
        return key in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryQuadraticForm):
            return NotImplemented
        return (
            self.keys == other.keys
            and self.linear == other.linear
            and self.quadratic == other.quadratic
            and self.offset == other.offset
        )

    def __repr__(self) -> str:
        return (f"BinaryQuadraticForm(n={self.num_variables}, linear={len(self.linear)}, "
                f"quadratic={len(self.quadratic)}, offset={self.offset})")

    def energy(self, bits) -> float:
        x = np.asarray(bits)
        if x.shape != (self.num_variables,):
            raise ValueError(f"expected {self.num_variables} bits, got shape {x.shape}")
        e = self.offset
        for i, v in self.linear.items():
            if x[i]:
                e += v
        for (i, j), v in self.quadratic.items():
            if x[i] and x[j]:
                e += v
        return e

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Linear vector and strictly upper-triangular coupling matrix."""
        n = self.num_variables
        lin = np.zeros(n)
        quad = np.zeros((n, n))
        for i, v in self.linear.items():
            lin[i] = v
        for (i, j), v in self.quadratic.items():
            quad[i, j] = v
        return lin, quad

    def energies(self, X: np.ndarray) -> np.ndarray:
        """Energies of the rows of a 0/1 matrix."""
        lin, quad = self.dense()
        X = np.asarray(X, dtype=float)
        return self.offset + X @ lin + np.einsum("ij,ij->i", X @ quad, X)

    def assignment(self, bits) -> dict:
        return {k: int(b) for k, b in zip(self.keys, np.asarray(bits).tolist())}

    def bits_from(self, assignment: dict) -> np.ndarray:
        """Bit vector from a key -> value mapping; missing keys are 0."""
        x = np.zeros(self.num_variables, dtype=np.int8)
        for k, v in assignment.items():
            x[self._index[k]] = v
        return x

    def with_model(self, model) -> "BinaryQuadraticForm":
        return BinaryQuadraticForm(self.keys, self.linear, self.quadratic, self.offset, model)


class QuboBuilder:
    """Accumulates terms keyed by variable key; indices follow first use."""

    def __init__(self):
        self.keys: list = []
        self._index: dict = {}
        self.linear: dict[int, float] = defaultdict(float)
        self.quadratic: dict[tuple[int, int], float] = defaultdict(float)
        self.offset = 0.0

    def var(self, key) -> int:
        n = self._index.get(key)
        if n is None:
            n = self._index[key] = len(self.keys)
            self.keys.append(key)
        return n

    def add_variables(self, keys: Iterable) -> None:
        for k in keys:
            self.var(k)

    def add_linear(self, key, value: float) -> None:
        self.linear[self.var(key)] += value

    def add_quadratic(self, a, b, value: float) -> None:
        ia, ib = self.var(a), self.var(b)
        if ia == ib:  # x^2 = x
            self.linear[ia] += value
        else:
            self.quadratic[(min(ia, ib), max(ia, ib))] += value

    def add_offset(self, value: float) -> None:
        self.offset += value

    def add_squared(self, terms: Iterable[tuple[Any, float]], const: float, weight: float) -> None:
        """Add ``weight * (sum_v c_v v + const)^2``."""
        if weight == 0:
            return
        coef: dict = defaultdict(float)
        for k, c in terms:
            coef[k] += c
        items = [(k, c) for k, c in coef.items() if c != 0]
        for k, c in items:
            self.add_linear(k, weight * (c * c + 2 * const * c))
        for n, (k1, c1) in enumerate(items):
            for k2, c2 in items[n + 1:]:
                self.add_quadratic(k1, k2, 2 * weight * c1 * c2)
        self.add_offset(weight * const * const)

    def add_one_hot(self, group: Sequence, weight: float) -> None:
        """Add ``weight * (sum(group) - 1)^2``."""
        if not group:
            raise ValueError("empty one-hot group")
        self.add_variables(group)
        self.add_squared([(k, 1.0) for k in group], -1.0, weight)

    def merge(self, other: "QuboBuilder") -> "QuboBuilder":
        for n, v in other.linear.items():
            self.add_linear(other.keys[n], v)
        for (a, b), v in other.quadratic.items():
            self.add_quadratic(other.keys[a], other.keys[b], v)
        self.add_variables(other.keys)
        self.offset += other.offset
        return self

    def build(self, model=None) -> BinaryQuadraticForm:
        return BinaryQuadraticForm(self.keys, dict(self.linear), dict(self.quadratic), self.offset, model)


def encoding_penalty(groups: Sequence[Sequence], weight: float) -> QuboBuilder:
    """``weight * sum_groups (sum_bits - 1)^2`` expanded into a builder."""
    if not groups:
        raise ValueError("no groups given")
    b = QuboBuilder()
    for g in groups:
        b.add_one_hot(g, weight)
    return b


def s_gadget(x: int, y: int, z: int) -> int:
    """Non-negative product penalty, zero exactly when ``z == x*y``."""
    return 3 * z + x * y - 2 * x * z - 2 * y * z


def add_product_gadget(b: QuboBuilder, x, y, z, weight: float) -> None:
    """Add ``weight * (3z + xy - 2xz - 2yz)`` over keys ``x, y, z``."""
    b.add_linear(z, 3 * weight)
    b.add_quadratic(x, y, weight)
    b.add_quadratic(x, z, -2 * weight)
    b.add_quadratic(y, z, -2 * weight)


# -- Ising ----------------------------------------------------------------------


@dataclass
class IsingForm:
    """``offset + sum_i h[i] s_i + sum_{i<j} J[i, j] s_i s_j`` over spins in {-1, 1}."""

    num_variables: int
    h: dict[int, float]
    J: dict[tuple[int, int], float]
    offset: float = 0.0

    def energy(self, spins) -> float:
        s = np.asarray(spins)
        e = self.offset
        for i, v in self.h.items():
            e += v * s[i]
        for (i, j), v in self.J.items():
            e += v * s[i] * s[j]
        return float(e)


def to_ising(q: BinaryQuadraticForm) -> IsingForm:
    """Substitute ``x = (s + 1) / 2``; energies agree for ``s = 2x - 1``."""
    h: dict[int, float] = defaultdict(float)
    J: dict[tuple[int, int], float] = {}
    offset = q.offset
    for i, v in q.linear.items():
        h[i] += v / 2
        offset += v / 2
    for (i, j), v in q.quadratic.items():
        J[(i, j)] = v / 4
        h[i] += v / 4
        h[j] += v / 4
        offset += v / 4
    return IsingForm(
        q.num_variables,
        {i: v for i, v in sorted(h.items()) if v != 0},
        {e: v for e, v in sorted(J.items()) if v != 0},
        offset,
    )


def max_coefficient_ratio(m: IsingForm) -> float:
    """Largest over-smallest nonzero magnitude, taken separately over fields
    and couplings; the larger of the two ratios."""
    ratios = []
    for family in (m.h.values(), m.J.values()):
        mags = [abs(v) for v in family if v != 0]
        if mags:
            ratios.append(max(mags) / min(mags))
    if not ratios:
        raise ValueError("all-zero Ising model has no coefficient ratio")
    return max(ratios)
