#!/usr/bin/env python3
"""
Test the factorization encoder: splits, cost blocks, reduction, Ising form
"""
import sys
from itertools import product

import numpy as np
import pytest

from modules.encoder import (
    BitSplit,
    EncodingError,
    IsingHamiltonian,
    QuboPolynomial,
    VariableRegistry,
    VariableRole,
    assignment_for_factors,
    block_expressions,
    brute_force_ground,
    build_block_layout,
    build_cost_function,
    build_size_class,
    carry_budget_ok,
    choose_split,
    class_numbers,
    coupler_lines,
    decode_solution,
    encode_instance,
    enumerate_bit_splits,
    export_instance,
    index_from_bits,
    qubit_count,
    reduce_to_quadratic,
    reduction_gadget,
    to_ising,
)

SEVEN_QUBIT_CLASS = [55, 65, 77, 91, 267, 291, 303, 309, 321, 327, 339, 381]


def test_worked_example_143():
    """143 = 11 x 13 with W = 3: two carries and the two block expressions"""
    split, layout = choose_split(143, 3)
    assert (split.l_p, split.l_q, split.l_n) == (3, 3, 7)
    assert layout.carry_counts[0] == 2
    assert layout.total_carries == 2
    assert layout.num_blocks == 2
    assert layout.total_qubits == 10

    f1, f2 = block_expressions(143, split, layout)
    # p1=0 p2=1 q1=2 q2=3 C1=4 C2=5
    assert f1.constant == 1
    assert dict(f1.terms) == {
        (1, 2): 4, (0, 3): 4, (0, 2): 2,
        (1,): 2, (3,): 2, (0,): 1, (2,): 1,
        (5,): -16, (4,): -8,
    }
    assert f2.constant == -4
    assert dict(f2.terms) == {
        (1, 3): 1, (1,): 2, (0,): 1, (3,): 2, (2,): 1, (5,): 2, (4,): 1,
    }


@pytest.mark.parametrize("sign", [1, -1])
def test_reduction_gadget_identity(sign):
    gadget = reduction_gadget(sign)
    for x1, x2, x3 in product((0, 1), repeat=3):
        best = min(gadget.evaluate((x1, x2, x3, x4)) for x4 in (0, 1))
        assert best == sign * x1 * x2 * x3


def test_reduction_preserves_minimum_over_auxiliaries():
    poly = (QuboPolynomial.monomial(4, (0, 1, 2, 3), 3)
            + QuboPolynomial.monomial(4, (0, 1, 2), -2)
            + QuboPolynomial.monomial(4, (1, 3), 1)
            - 5)
    reduced, registry = reduce_to_quadratic(poly, VariableRegistry.free(4))
    assert reduced.order <= 2
    extra = len(registry) - 4
    assert extra >= 1
    for bits in product((0, 1), repeat=4):
        best = min(reduced.evaluate(bits + aux) for aux in product((0, 1), repeat=extra))
        assert best == poly.evaluate(bits)


def test_quadratic_input_unchanged():
    poly = QuboPolynomial.build(2, 1, {(0, 1): 2, (0,): -1})
    reduced, registry = reduce_to_quadratic(poly, VariableRegistry.free(2))
    assert reduced == poly
    assert len(registry) == 2


def test_quadratic_cost_still_gets_pair_auxiliary():
    """25 = 5 x 5: the cost is already quadratic, the (p1, q1) auxiliary is still allocated"""
    n = qubit_count(25)
    assert n == 3
    size_class = build_size_class([25], n)
    inst = size_class.by_number(25)
    assert inst.cost.order <= 2
    assert inst.n == size_class.n == inst.layout.total_qubits
    assert inst.registry.count(VariableRole.AUXILIARY) == 1
    assert inst.ising.energy(assignment_for_factors(inst, 5, 5)) == 0.0
    for bits in inst.ground_set:
        assert decode_solution(bits, inst.registry) == (5, 5)


def test_quintic_rejected():
    poly = QuboPolynomial.monomial(5, range(5))
    with pytest.raises(EncodingError):
        reduce_to_quadratic(poly, VariableRegistry.free(5))


def test_bit_splits():
    assert enumerate_bit_splits(4) == []
    assert enumerate_bit_splits(13) == []
    splits = enumerate_bit_splits(143)
    assert splits == [BitSplit(3, 3, 7)]
    # 225 = 3 x 75 = 5 x 45 = 9 x 25 = 15 x 15
    assert len(enumerate_bit_splits(225)) == 4


def test_small_layout():
    """N = 9 with W = 2: one block, no free carries, no qubits"""
    layout = build_block_layout(BitSplit(1, 1, 3), 2)
    assert layout.block_count == 1
    assert layout.total_carries == 0
    assert layout.total_qubits == 0


def test_layout_rejects_bad_width():
    with pytest.raises(EncodingError):
        build_block_layout(BitSplit(1, 1, 3), 0)
    with pytest.raises(EncodingError):
        build_block_layout(BitSplit(1, 1, 3), 3)


@pytest.mark.parametrize("N", [15, 21, 35, 49, 55, 65, 77, 91, 143])
def test_oracle_equivalence(N):
    inst = encode_instance(N, 3)
    assert inst.min_energy == 0.0
    assert inst.ground_set
    for bits in inst.ground_set:
        p, q = decode_solution(bits, inst.registry)
        assert p * q == N
    assert len(inst.registry) == inst.layout.total_qubits


@pytest.mark.parametrize("N", [55, 77, 143])
def test_ising_matches_qubo_everywhere(N):
    inst = encode_instance(N, 3)
    qubo_values = inst.qubo.evaluate_all().astype(float)
    assert np.array_equal(qubo_values, inst.ising.diagonal())


def test_unreduced_cost_is_zero_at_factors():
    split, layout = choose_split(77, 3)
    cost, registry = build_cost_function(77, split, layout)
    assert cost.order == 3
    assert build_cost_function(143, *choose_split(143, 3))[0].order == 4
    inst = encode_instance(77, 3)
    bits = assignment_for_factors(inst, 7, 11)
    assert cost.evaluate(bits[:len(registry)]) == 0


@pytest.mark.parametrize("N,p,q", [(77, 7, 11), (91, 7, 13), (143, 11, 13), (49, 7, 7)])
def test_completeness(N, p, q):
    inst = encode_instance(N, 3)
    bits = assignment_for_factors(inst, p, q)
    assert inst.ising.energy(bits) == 0.0
    assert bits in inst.ground_set


@pytest.mark.parametrize("split", [BitSplit(2, 2, 5), BitSplit(2, 3, 6), BitSplit(3, 3, 7), BitSplit(3, 4, 8)])
def test_carry_budget(split):
    assert carry_budget_ok(split, build_block_layout(split, 3))


def test_decode_all_zero_bits():
    split = BitSplit(2, 2, 5)
    registry = VariableRegistry.for_split(split, build_block_layout(split, 3))
    assert decode_solution((0,) * len(registry), registry) == (5, 5)


def test_to_ising_rejects_cubic():
    with pytest.raises(EncodingError):
        to_ising(QuboPolynomial.monomial(3, (0, 1, 2)))


def test_to_ising_single_variable():
    H = to_ising(QuboPolynomial.build(1, 0, {(0,): 3}))
    assert H.fields.tolist() == [-1.5]
    assert H.offset == 1.5
    assert H.energy((0,)) == 0.0
    assert H.energy((1,)) == 3.0


def test_brute_force_size_guard():
    H = IsingHamiltonian(n=25, fields=np.zeros(25), couplings={}, offset=0.0)
    with pytest.raises(EncodingError):
        brute_force_ground(H)


def test_brute_force_degenerate_ground():
    H = IsingHamiltonian(n=2, fields=np.zeros(2), couplings={(0, 1): 1.0}, offset=0.0)
    energy, ground = brute_force_ground(H)
    assert energy == -1.0
    assert [index_from_bits(b) for b in ground] == [1, 2]


def test_seven_qubit_class_members():
    assert class_numbers(49, 633, 7, 3) == SEVEN_QUBIT_CLASS


def test_five_qubit_class_members():
    assert class_numbers(49, 633, 5, 3) == [49, 111, 123, 129, 141, 159, 177, 183]


def test_size_class_norm_constant():
    size_class = build_size_class([55, 65, 77, 91, 100, 97], 7, 3)
    assert size_class.numbers() == [55, 65, 77, 91]
    expected = max(inst.qubo.max_coefficient() for inst in size_class.instances)
    assert size_class.norm_constant == expected > 0


def test_empty_size_class():
    size_class = build_size_class([97, 101], 7, 3)
    assert size_class.is_empty
    assert size_class.norm_constant == 0.0


def test_export_field_order():
    inst = encode_instance(77, 3)
    data = export_instance(inst, 64.0)
    assert list(data) == ['n', 'N', 'split', 'W', 'variables', 'h', 'J', 'offset',
                          'normConstant', 'normConstantIncludesOffset']
    assert data['n'] == 7
    assert data['variables'][:3] == ['p1', 'q1', 'q2']
    assert data['variables'][-2].startswith('y(')
    text = coupler_lines(inst)
    assert text.startswith('# offset ')
    assert len(text.strip().splitlines()) > 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
