"""
Factorization Encoder

Turns N = p x q into a QUBO cost function with the multiplication-table
protocol, reduces it to quadratic order with auxiliary variables, and exports
the equivalent Ising Hamiltonian together with a brute-force ground-state oracle.

Bitstrings are tuples of 0/1 in variable order; basis index z = sum_k x_k 2^k.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from modules.utils import bit_index, factor_pairs, is_prime

logger = logging.getLogger(__name__)

Bitstring = Tuple[int, ...]
Monomial = Tuple[int, ...]

MAX_BRUTE_FORCE_QUBITS = 24
_CHUNK_BITS = 16


class EncodingError(ValueError):
    """Invalid factorization instance or encoding request"""


# ---------------------------------------------------------------------------
# Splits and block layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BitSplit:
    """Bit-length indices of p, q and N (floor(log2 x))"""
    l_p: int
    l_q: int
    l_n: int

    def __post_init__(self):
        if not 1 <= self.l_p <= self.l_q:
            raise EncodingError(f"Invalid split: need 1 <= L_p <= L_q, got ({self.l_p}, {self.l_q})")

    def to_dict(self) -> Dict:
        return {'L_p': self.l_p, 'L_q': self.l_q, 'L_N': self.l_n}


@dataclass(frozen=True)
class BlockLayout:
    """Block partition of the multiplication table and derived qubit counts"""
    width: int
    block_count: int
    max_sums: Tuple[int, ...]
    carry_counts: Tuple[int, ...]
    carry_prefix: Tuple[int, ...]
    total_carries: int
    num_blocks: int
    total_auxiliaries: int
    total_qubits: int

    def carries_out(self, block: int) -> int:
        """Number of carry variables leaving block `block` (1-based)"""
        if block >= self.num_blocks:
            return 0
        return self.carry_counts[block - 1]

    def carries_in(self, block: int) -> int:
        """Number of carry variables entering block `block` (1-based)"""
        return self.carries_out(block - 1) if block > 1 else 0


def enumerate_bit_splits(N: int) -> List[BitSplit]:
    """
    All (L_p, L_q) splits under which some odd factor pair of N is representable

    Returns an empty list for even N and for primes.
    """
    if N <= 8 or N % 2 == 0:
        return []
    splits = []
    for p, q in factor_pairs(N):
        split = BitSplit(bit_index(p), bit_index(q), bit_index(N))
        if split not in splits:
            splits.append(split)
    return splits


def _column_size(column: int, l_p: int, l_q: int) -> int:
    """Number of p_m q_n products with m + n = column"""
    return sum(1 for m in range(l_p + 1) if 0 <= column - m <= l_q)


def build_block_layout(split: BitSplit, width: int) -> BlockLayout:
    """
    Derive block count, carry budget and qubit totals for a split

    Args:
        split: Bit lengths of p, q and N
        width: Block width W (columns per block)

    Returns:
        BlockLayout with the carry counts c_i, prefixes chi_i and T_Q
    """
    if width < 1:
        raise EncodingError(f"Block width must be positive, got {width}")
    l_p, l_q, l_n = split.l_p, split.l_q, split.l_n
    if l_p + l_q < width:
        raise EncodingError(f"Block width {width} exceeds L_p + L_q = {l_p + l_q}")

    block_count = (l_p + l_q) // width

    max_sums, carry_counts, carry_prefix = [], [], []
    carry_capacity = 0
    for i in range(1, block_count + 1):
        start = 1 + (i - 1) * width
        max_rho = sum(
            (1 << (j - start)) * _column_size(j, l_p, l_q)
            for j in range(start, i * width + 1)
        )
        block_max = carry_capacity + max_rho
        overflow = block_max >> width
        c_i = overflow.bit_length()
        carry_prefix.append(sum(carry_counts))
        max_sums.append(block_max)
        carry_counts.append(c_i)
        carry_capacity = (1 << c_i) - 1

    if l_n - block_count * width > 1:
        num_blocks = block_count + 1
        total_carries = sum(carry_counts)
    else:
        num_blocks = block_count
        total_carries = sum(carry_counts[:-1])

    total_auxiliaries = (l_p - 1) * (l_q - 1)
    total_qubits = (l_p - 1) + (l_q - 1) + total_carries + total_auxiliaries

    return BlockLayout(
        width=width,
        block_count=block_count,
        max_sums=tuple(max_sums),
        carry_counts=tuple(carry_counts),
        carry_prefix=tuple(carry_prefix),
        total_carries=total_carries,
        num_blocks=num_blocks,
        total_auxiliaries=total_auxiliaries,
        total_qubits=total_qubits,
    )


def choose_split(N: int, width: int) -> Tuple[BitSplit, BlockLayout]:
    """Canonical split: fewest qubits, then the most balanced |L_q - L_p|"""
    candidates = []
    for split in enumerate_bit_splits(N):
        if split.l_p + split.l_q < width:
            continue
        layout = build_block_layout(split, width)
        candidates.append((layout.total_qubits, split.l_q - split.l_p, split.l_p, split, layout))
    if not candidates:
        raise EncodingError(f"N={N} has no representable odd factor pair")
    candidates.sort(key=lambda c: c[:3])
    return candidates[0][3], candidates[0][4]


# ---------------------------------------------------------------------------
# Variables
# ---------------------------------------------------------------------------

class VariableRole(Enum):
    """What a binary variable stands for"""
    P_BIT = "p"
    Q_BIT = "q"
    CARRY = "carry"
    AUXILIARY = "aux"
    FREE = "free"


@dataclass(frozen=True)
class Variable:
    role: VariableRole
    index: int
    pair: Optional[Tuple[int, int]] = None

    def label(self, registry: 'VariableRegistry' = None) -> str:
        if self.role == VariableRole.P_BIT:
            return f"p{self.index}"
        if self.role == VariableRole.Q_BIT:
            return f"q{self.index}"
        if self.role == VariableRole.CARRY:
            return f"C{self.index}"
        if self.role == VariableRole.AUXILIARY:
            if registry is not None:
                a, b = self.pair
                return f"y({registry.variables[a].label(registry)},{registry.variables[b].label(registry)})"
            return f"y{self.index}"
        return f"x{self.index}"


@dataclass(frozen=True)
class VariableRegistry:
    """Ordered variables of an encoded instance"""
    variables: Tuple[Variable, ...]
    l_p: int = 0
    l_q: int = 0

    def __len__(self) -> int:
        return len(self.variables)

    @classmethod
    def for_split(cls, split: BitSplit, layout: BlockLayout) -> 'VariableRegistry':
        variables = [Variable(VariableRole.P_BIT, m) for m in range(1, split.l_p)]
        variables += [Variable(VariableRole.Q_BIT, n) for n in range(1, split.l_q)]
        variables += [Variable(VariableRole.CARRY, k) for k in range(1, layout.total_carries + 1)]
        return cls(tuple(variables), split.l_p, split.l_q)

    @classmethod
    def free(cls, count: int) -> 'VariableRegistry':
        """Registry of plain variables x1..xn for stand-alone polynomials"""
        return cls(tuple(Variable(VariableRole.FREE, k) for k in range(1, count + 1)))

    def index_of(self, role: VariableRole, index: int) -> int:
        for position, var in enumerate(self.variables):
            if var.role == role and var.index == index:
                return position
        raise KeyError(f"No variable {role.value}{index}")

    def positions(self, role: VariableRole) -> List[int]:
        return [k for k, v in enumerate(self.variables) if v.role == role]

    def with_auxiliary(self, pair: Tuple[int, int]) -> Tuple['VariableRegistry', int]:
        aux_number = len(self.positions(VariableRole.AUXILIARY)) + 1
        aux = Variable(VariableRole.AUXILIARY, aux_number, tuple(sorted(pair)))
        return VariableRegistry(self.variables + (aux,), self.l_p, self.l_q), len(self.variables)

    def labels(self) -> List[str]:
        return [v.label(self) for v in self.variables]

    def count(self, role: VariableRole) -> int:
        return len(self.positions(role))


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

def _merge(a: Monomial, b: Monomial) -> Monomial:
    """Product of two monomials with x^2 = x"""
    return tuple(sorted(set(a) | set(b)))


@dataclass(frozen=True)
class QuboPolynomial:
    """Integer-coefficient multilinear polynomial over binary variables"""
    num_vars: int
    constant: int = 0
    terms: Mapping[Monomial, int] = field(default_factory=dict)

    def __post_init__(self):
        for key in self.terms:
            if len(key) == 0 or list(key) != sorted(set(key)):
                raise EncodingError(f"Monomial key {key} must be a non-empty sorted set")
            if key[-1] >= self.num_vars:
                raise EncodingError(f"Monomial {key} references a variable beyond {self.num_vars}")

    @classmethod
    def build(cls, num_vars: int, constant: int = 0,
              terms: Optional[Mapping[Monomial, int]] = None) -> 'QuboPolynomial':
        """Construct with zero coefficients dropped and keys sorted"""
        clean: Dict[Monomial, int] = {}
        for key, coeff in (terms or {}).items():
            key = tuple(sorted(set(key)))
            if len(key) == 0:
                constant += coeff
                continue
            clean[key] = clean.get(key, 0) + int(coeff)
        clean = {k: clean[k] for k in sorted(clean, key=lambda k: (len(k), k)) if clean[k] != 0}
        return cls(num_vars=num_vars, constant=int(constant), terms=clean)

    @classmethod
    def variable(cls, num_vars: int, index: int, coefficient: int = 1) -> 'QuboPolynomial':
        return cls.build(num_vars, 0, {(index,): coefficient})

    @classmethod
    def monomial(cls, num_vars: int, indices: Iterable[int], coefficient: int = 1) -> 'QuboPolynomial':
        return cls.build(num_vars, 0, {tuple(indices): coefficient})

    def _items(self):
        yield (), self.constant
        yield from self.terms.items()

    def __add__(self, other) -> 'QuboPolynomial':
        if isinstance(other, int):
            return QuboPolynomial.build(self.num_vars, self.constant + other, self.terms)
        terms = dict(self.terms)
        for key, coeff in other.terms.items():
            terms[key] = terms.get(key, 0) + coeff
        return QuboPolynomial.build(max(self.num_vars, other.num_vars),
                                    self.constant + other.constant, terms)

    __radd__ = __add__

    def __neg__(self) -> 'QuboPolynomial':
        return self * -1

    def __sub__(self, other) -> 'QuboPolynomial':
        return self + (-other)

    def __mul__(self, other) -> 'QuboPolynomial':
        if isinstance(other, int):
            return QuboPolynomial.build(self.num_vars, self.constant * other,
                                        {k: c * other for k, c in self.terms.items()})
        terms: Dict[Monomial, int] = {}
        for k1, c1 in self._items():
            for k2, c2 in other._items():
                key = _merge(k1, k2)
                terms[key] = terms.get(key, 0) + c1 * c2
        return QuboPolynomial.build(max(self.num_vars, other.num_vars), 0, terms)

    __rmul__ = __mul__

    def square(self) -> 'QuboPolynomial':
        return self * self

    @property
    def order(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def with_num_vars(self, num_vars: int) -> 'QuboPolynomial':
        return QuboPolynomial.build(num_vars, self.constant, self.terms)

    def coefficient(self, *indices: int) -> int:
        if not indices:
            return self.constant
        return self.terms.get(tuple(sorted(indices)), 0)

    def max_coefficient(self) -> int:
        """Largest |coefficient| over monomials of degree >= 1 (constant excluded)"""
        return max((abs(c) for c in self.terms.values()), default=0)

    def evaluate(self, bits: Sequence[int]) -> int:
        total = self.constant
        for key, coeff in self.terms.items():
            if all(bits[k] for k in key):
                total += coeff
        return total

    def evaluate_all(self) -> np.ndarray:
        """Exact int64 values on every basis index 0..2^n-1"""
        n = self.num_vars
        z = np.arange(1 << n, dtype=np.int64)
        bits = ((z[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.int64)
        values = np.full(1 << n, self.constant, dtype=np.int64)
        for key, coeff in self.terms.items():
            values += coeff * np.prod(bits[:, list(key)], axis=1)
        return values


def bits_from_index(index: int, n: int) -> Bitstring:
    return tuple((index >> k) & 1 for k in range(n))


def index_from_bits(bits: Sequence[int]) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


# ---------------------------------------------------------------------------
# Cost function
# ---------------------------------------------------------------------------

def _bit_poly(registry: VariableRegistry, role: VariableRole, index: int, top: int) -> QuboPolynomial:
    """p_m or q_n: fixed to 1 at both ends, otherwise a variable"""
    n = len(registry)
    if index == 0 or index == top:
        return QuboPolynomial.build(n, 1)
    return QuboPolynomial.variable(n, registry.index_of(role, index))


def block_expressions(N: int, split: BitSplit, layout: BlockLayout,
                      registry: Optional[VariableRegistry] = None) -> List[QuboPolynomial]:
    """
    Per-block expressions rho_i + K_i - F_i - V_i before squaring

    The last block also takes every product column above it and targets the
    whole remaining high part of N.
    """
    registry = registry or VariableRegistry.for_split(split, layout)
    n = len(registry)
    W = layout.width
    l_p, l_q = split.l_p, split.l_q

    p_bits = [_bit_poly(registry, VariableRole.P_BIT, m, l_p) for m in range(l_p + 1)]
    q_bits = [_bit_poly(registry, VariableRole.Q_BIT, k, l_q) for k in range(l_q + 1)]

    def carry(k: int) -> QuboPolynomial:
        return QuboPolynomial.variable(n, registry.index_of(VariableRole.CARRY, k))

    expressions = []
    for i in range(1, layout.num_blocks + 1):
        last = i == layout.num_blocks
        start = 1 + (i - 1) * W
        stop = max(i * W, l_p + l_q) if last else i * W

        expr = QuboPolynomial.build(n)
        for j in range(start, stop + 1):
            weight = 1 << (j - start)
            for m in range(l_p + 1):
                k = j - m
                if 0 <= k <= l_q:
                    expr = expr + p_bits[m] * q_bits[k] * weight

        if i > 1:
            prefix = layout.carry_prefix[i - 2]
            for j in range(1, layout.carries_in(i) + 1):
                expr = expr + carry(prefix + j) * (1 << (j - 1))

        if not last:
            prefix = layout.carry_prefix[i - 1]
            for j in range(1, layout.carries_out(i) + 1):
                expr = expr - carry(prefix + j) * (1 << (W + j - 1))
            target = (N >> start) & ((1 << W) - 1)
        else:
            target = N >> start

        expressions.append(expr - target)
    return expressions


def build_cost_function(N: int, split: BitSplit,
                        layout: BlockLayout) -> Tuple[QuboPolynomial, VariableRegistry]:
    """
    f_cost = sum_i (rho_i + K_i - F_i - V_i)^2 expanded with x^2 = x

    Returns:
        (cost polynomial up to order 4, registry of p/q/carry variables)
    """
    registry = VariableRegistry.for_split(split, layout)
    cost = QuboPolynomial.build(len(registry))
    for expr in block_expressions(N, split, layout, registry):
        cost = cost + expr.square()
    return cost, registry


# ---------------------------------------------------------------------------
# Quadratization
# ---------------------------------------------------------------------------

def _pair_penalty(num_vars: int, a: int, b: int, y: int, weight: int) -> QuboPolynomial:
    """weight * (x_a x_b - 2 x_a y - 2 x_b y + 3 y), zero iff y = x_a x_b"""
    return QuboPolynomial.build(num_vars, 0, {
        (a, b): weight,
        (a, y): -2 * weight,
        (b, y): -2 * weight,
        (y,): 3 * weight,
    })


def reduction_gadget(sign: int = 1) -> QuboPolynomial:
    """
    Gadget over (x1, x2, x3, x4) whose minimum over x4 equals sign * x1 x2 x3

    Variables are indexed 0..3.
    """
    if sign not in (1, -1):
        raise EncodingError("Gadget sign must be +1 or -1")
    return QuboPolynomial.build(4, 0, {(2, 3): sign}) + _pair_penalty(4, 0, 1, 3, 2)


def reduce_to_quadratic(poly: QuboPolynomial,
                        registry: VariableRegistry) -> Tuple[QuboPolynomial, VariableRegistry]:
    """
    Rewrite cubic and quartic monomials with auxiliary variables

    Each auxiliary y stands for a pair x_a x_b and is pinned by the penalty
    2 * sum|c| * (x_a x_b - 2 x_a y - 2 x_b y + 3 y), summed over the monomials
    it rewrote. Pairs (p_i, q_j) are used first; factorization registries get
    one auxiliary per such pair even when the cost is already quadratic, with
    the minimum penalty weight 2 on pairs no monomial used.
    """
    if poly.order > 4:
        raise EncodingError(f"Monomials of order {poly.order} > 4 are not supported")
    factor_pairs_needed = registry.count(VariableRole.P_BIT) * registry.count(VariableRole.Q_BIT)
    if poly.order <= 2 and not factor_pairs_needed:
        return poly, registry

    roles = {k: v.role for k, v in enumerate(registry.variables)}
    aux_of: Dict[Tuple[int, int], int] = {}
    weights: Dict[Tuple[int, int], int] = {}

    for a in registry.positions(VariableRole.P_BIT):
        for b in registry.positions(VariableRole.Q_BIT):
            registry, aux_of[(a, b)] = registry.with_auxiliary((a, b))
            weights[(a, b)] = 0

    def choose_pair(key: Monomial) -> Tuple[int, int]:
        originals = [k for k in key if k not in aux_of.values()]
        ps = [k for k in originals if roles.get(k) == VariableRole.P_BIT]
        qs = [k for k in originals if roles.get(k) == VariableRole.Q_BIT]
        if ps and qs:
            return ps[0], qs[0]
        if len(originals) < 2:
            raise EncodingError(f"Cannot pair monomial {key}")
        return originals[0], originals[1]

    reduced: Dict[Monomial, int] = {}
    for key, coeff in poly.terms.items():
        while len(key) > 2:
            pair = choose_pair(key)
            if pair not in aux_of:
                registry, aux_of[pair] = registry.with_auxiliary(pair)
                weights[pair] = 0
            weights[pair] += 2 * abs(coeff)
            key = tuple(sorted((set(key) - set(pair)) | {aux_of[pair]}))
        reduced[key] = reduced.get(key, 0) + coeff

    n = len(registry)
    result = QuboPolynomial.build(n, poly.constant, reduced)
    for pair, y in aux_of.items():
        result = result + _pair_penalty(n, pair[0], pair[1], y, weights[pair] or 2)

    logger.debug("Reduced order-%d polynomial with %d auxiliaries", poly.order, len(aux_of))
    return result, registry


# ---------------------------------------------------------------------------
# Ising form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsingHamiltonian:
    """
    Diagonal problem Hamiltonian

    E(s) = offset + sum_i h_i s_i + sum_{i<j} J_ij s_i s_j with s_i = 1 - 2 x_i
    """
    n: int
    fields: np.ndarray
    couplings: Mapping[Tuple[int, int], float]
    offset: float

    def energy(self, bits: Sequence[int]) -> float:
        spins = [1 - 2 * int(b) for b in bits]
        total = self.offset + sum(h * s for h, s in zip(self.fields, spins))
        for (i, j), value in self.couplings.items():
            total += value * spins[i] * spins[j]
        return total

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric n x n matrix with J_ij on both sides of the diagonal"""
        matrix = np.zeros((self.n, self.n))
        for (i, j), value in self.couplings.items():
            matrix[i, j] = value
            matrix[j, i] = value
        return matrix

    def scaled(self, factor: float) -> 'IsingHamiltonian':
        return IsingHamiltonian(
            n=self.n,
            fields=self.fields * factor,
            couplings={k: v * factor for k, v in self.couplings.items()},
            offset=self.offset * factor,
        )

    def diagonal(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Energies of basis indices start..stop-1"""
        stop = (1 << self.n) if stop is None else stop
        z = np.arange(start, stop, dtype=np.int64)
        spins = 1.0 - 2.0 * ((z[:, None] >> np.arange(self.n, dtype=np.int64)) & 1)
        energies = np.full(len(z), self.offset) + spins @ self.fields
        for (i, j), value in self.couplings.items():
            energies += value * spins[:, i] * spins[:, j]
        return energies


def to_ising(poly: QuboPolynomial) -> IsingHamiltonian:
    """
    Substitute x_i = (1 - s_i) / 2

    Coefficients are tracked as integer multiples of 1/4, so the conversion is
    exact.
    """
    if poly.order > 2:
        raise EncodingError(f"to_ising needs a quadratic polynomial, got order {poly.order}")
    n = poly.num_vars
    fields4 = [0] * n
    couplings4: Dict[Tuple[int, int], int] = {}
    offset4 = 4 * poly.constant

    for key, c in poly.terms.items():
        if len(key) == 1:
            (i,) = key
            fields4[i] -= 2 * c
            offset4 += 2 * c
        else:
            i, j = key
            couplings4[(i, j)] = couplings4.get((i, j), 0) + c
            fields4[i] -= c
            fields4[j] -= c
            offset4 += c

    return IsingHamiltonian(
        n=n,
        fields=np.array([f / 4 for f in fields4], dtype=float),
        couplings={k: v / 4 for k, v in sorted(couplings4.items()) if v != 0},
        offset=offset4 / 4,
    )


def brute_force_ground(H: IsingHamiltonian,
                       max_qubits: int = MAX_BRUTE_FORCE_QUBITS) -> Tuple[float, List[Bitstring]]:
    """
    Exhaustive minimum and every bitstring attaining it exactly

    Raises:
        EncodingError: for n above the size guard
    """
    if H.n > max_qubits:
        raise EncodingError(f"Brute force limited to {max_qubits} qubits, got {H.n}")

    total = 1 << H.n
    chunk = 1 << _CHUNK_BITS
    best = np.inf
    ground: List[int] = []
    for start in range(0, total, chunk):
        energies = H.diagonal(start, min(start + chunk, total))
        low = energies.min()
        hits = (np.flatnonzero(energies == low) + start).tolist()
        if low < best:
            best, ground = float(low), hits
        elif low == best:
            ground.extend(hits)
    return best, [bits_from_index(z, H.n) for z in ground]


def decode_solution(bits: Sequence[int], registry: VariableRegistry) -> Tuple[int, int]:
    """Reassemble p and q with both end bits fixed to 1; carries and auxiliaries ignored"""
    p = (1 << registry.l_p) | 1
    q = (1 << registry.l_q) | 1
    for position, var in enumerate(registry.variables):
        if var.role == VariableRole.P_BIT and bits[position]:
            p |= 1 << var.index
        elif var.role == VariableRole.Q_BIT and bits[position]:
            q |= 1 << var.index
    return p, q


# ---------------------------------------------------------------------------
# Instances and size classes
# ---------------------------------------------------------------------------

@dataclass
class EncodedInstance:
    """One factorization instance carried through the whole encoding chain"""
    N: int
    width: int
    split: BitSplit
    layout: BlockLayout
    cost: QuboPolynomial
    qubo: QuboPolynomial
    registry: VariableRegistry
    ising: IsingHamiltonian
    min_energy: float
    ground_set: List[Bitstring]

    @property
    def n(self) -> int:
        return self.ising.n

    def ground_indices(self) -> List[int]:
        return [index_from_bits(b) for b in self.ground_set]


def encode_instance(N: int, width: int = 3, split: Optional[BitSplit] = None) -> EncodedInstance:
    """
    Full chain: split, layout, cost, reduction, Ising form and ground set

    Args:
        N: Odd composite to factor
        width: Block width W
        split: Explicit split, default is the canonical one
    """
    if split is None:
        split, layout = choose_split(N, width)
    else:
        layout = build_block_layout(split, width)

    cost, registry = build_cost_function(N, split, layout)
    qubo, registry = reduce_to_quadratic(cost, registry)
    ising = to_ising(qubo)
    if len(registry) != layout.total_qubits:
        raise EncodingError(f"N={N}: registry has {len(registry)} variables, "
                            f"layout predicts {layout.total_qubits}")
    min_energy, ground = brute_force_ground(ising)

    return EncodedInstance(
        N=N, width=width, split=split, layout=layout, cost=cost, qubo=qubo,
        registry=registry, ising=ising, min_energy=min_energy, ground_set=ground,
    )


def _block_value(p: int, q: int, split: BitSplit, block: int, width: int, last: bool) -> int:
    """Numeric rho_i for concrete factors"""
    start = 1 + (block - 1) * width
    stop = max(block * width, split.l_p + split.l_q) if last else block * width
    total = 0
    for j in range(start, stop + 1):
        column = sum(((p >> m) & 1) * ((q >> (j - m)) & 1)
                     for m in range(split.l_p + 1) if 0 <= j - m <= split.l_q)
        total += column << (j - start)
    return total


def assignment_for_factors(instance: EncodedInstance, p: int, q: int) -> Bitstring:
    """
    Bitstring for a factor pair with carries and auxiliaries at their minimizing values
    """
    registry, layout, split = instance.registry, instance.layout, instance.split
    bits = [0] * len(registry)
    carry_bits: Dict[int, int] = {}

    carry_in = 0
    for i in range(1, layout.num_blocks):
        total = _block_value(p, q, split, i, layout.width, last=False) + carry_in
        carry_out = total >> layout.width
        prefix = layout.carry_prefix[i - 1]
        for j in range(1, layout.carries_out(i) + 1):
            carry_bits[prefix + j] = (carry_out >> (j - 1)) & 1
        carry_in = carry_out

    for position, var in enumerate(registry.variables):
        if var.role == VariableRole.P_BIT:
            bits[position] = (p >> var.index) & 1
        elif var.role == VariableRole.Q_BIT:
            bits[position] = (q >> var.index) & 1
        elif var.role == VariableRole.CARRY:
            bits[position] = carry_bits.get(var.index, 0)
    for position, var in enumerate(registry.variables):
        if var.role == VariableRole.AUXILIARY:
            a, b = var.pair
            bits[position] = bits[a] & bits[b]
    return tuple(bits)


def carry_budget_ok(split: BitSplit, layout: BlockLayout) -> bool:
    """Exact multiplication over the whole split range never exceeds 2^c_i - 1 carries"""
    p_values = [p for p in range((1 << split.l_p) + 1, 1 << (split.l_p + 1), 2)]
    q_values = [q for q in range((1 << split.l_q) + 1, 1 << (split.l_q + 1), 2)]
    for p, q in product(p_values, q_values):
        carry_in = 0
        for i in range(1, layout.num_blocks):
            carry_out = (_block_value(p, q, split, i, layout.width, last=False) + carry_in) >> layout.width
            if carry_out > (1 << layout.carries_out(i)) - 1:
                return False
            carry_in = carry_out
    return True


@dataclass
class SizeClass:
    """Instances sharing a qubit count, normalized by one class-wide constant"""
    n: int
    width: int
    instances: List[EncodedInstance]
    norm_constant: float
    calibrated_t: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return not self.instances

    def numbers(self) -> List[int]:
        return [inst.N for inst in self.instances]

    def by_number(self, N: int) -> EncodedInstance:
        for inst in self.instances:
            if inst.N == N:
                return inst
        raise KeyError(f"N={N} not in the {self.n}-qubit class")


def is_semiprime_instance(N: int) -> bool:
    """Odd N = p * q with p, q prime (p = q allowed)"""
    return any(is_prime(p) and is_prime(q) for p, q in factor_pairs(N))


def qubit_count(N: int, width: int = 3, semiprimes_only: bool = True) -> Optional[int]:
    """T_Q of the canonical split, None when N is not an admissible instance"""
    if N % 2 == 0 or (semiprimes_only and not is_semiprime_instance(N)):
        return None
    try:
        _, layout = choose_split(N, width)
    except EncodingError:
        return None
    return layout.total_qubits


def class_numbers(start: int, stop: int, n: int, width: int = 3,
                  semiprimes_only: bool = True) -> List[int]:
    """N in [start, stop] whose canonical split needs exactly n qubits"""
    return [N for N in range(start | 1, stop + 1, 2)
            if qubit_count(N, width, semiprimes_only) == n]


def build_size_class(numbers: Iterable[int], n: int, width: int = 3,
                     semiprimes_only: bool = True) -> SizeClass:
    """
    Encode every qualifying N whose canonical split has exactly n qubits

    normConstant is the largest |QUBO coefficient| (degree >= 1) over the class.
    """
    numbers = sorted(set(numbers))
    members = [N for N in numbers if qubit_count(N, width, semiprimes_only) == n]
    instances = [encode_instance(N, width) for N in members]
    norm = max((inst.qubo.max_coefficient() for inst in instances), default=0)
    if not instances:
        logger.warning("No instances with %d qubits in [%s, %s]", n,
                       numbers[0] if numbers else None, numbers[-1] if numbers else None)
    return SizeClass(n=n, width=width, instances=instances, norm_constant=float(norm))


def export_instance(instance: EncodedInstance, norm_constant: float) -> Dict:
    """Instance JSON in canonical field order"""
    H = instance.ising
    return {
        'n': H.n,
        'N': instance.N,
        'split': instance.split.to_dict(),
        'W': instance.width,
        'variables': instance.registry.labels(),
        'h': [float(v) for v in H.fields],
        'J': [[i, j, float(v)] for (i, j), v in H.couplings.items()],
        'offset': float(H.offset),
        'normConstant': norm_constant,
        'normConstantIncludesOffset': False,
    }


def coupler_lines(instance: EncodedInstance) -> str:
    """Flat `i j value` listing; fields appear as `i i value`"""
    H = instance.ising
    lines = [f"# offset {H.offset!r}"]
    lines += [f"{i} {i} {float(v)!r}" for i, v in enumerate(H.fields) if v != 0]
    lines += [f"{i} {j} {float(v)!r}" for (i, j), v in H.couplings.items()]
    return "\n".join(lines) + "\n"
