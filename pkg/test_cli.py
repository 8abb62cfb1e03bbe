#!/usr/bin/env python3
"""
End-to-end CLI runs on a temporary output directory
"""
import json
import sys

import pytest

from cli import main, parse_span
from modules.persistence import load_json, read_csv, save_json

FAST_DYNAMICS = {'dynamics': {'min_steps': 200, 'refine_tolerance': 1.0, 'max_refinements': 1}}


def run(tmp_path, *argv) -> int:
    return main(['--out', str(tmp_path), '--seed', '11', '--quiet', *argv])


def fast_config(tmp_path) -> str:
    path = tmp_path / 'fast.json'
    path.write_text(json.dumps(FAST_DYNAMICS))
    return str(path)


def test_parse_span():
    assert parse_span('49..633') == [49, 633]
    with pytest.raises(Exception):
        parse_span('633..49')


def test_encode_single_number(tmp_path):
    assert run(tmp_path, 'encode', '--n', '143', '--coupler-text') == 0
    instance = load_json(tmp_path / 'instances' / 'n10' / 'N143.json')
    assert instance['n'] == 10
    assert instance['N'] == 143
    assert list(instance)[:4] == ['n', 'N', 'split', 'W']
    manifest = load_json(tmp_path / 'class_n10.json')
    assert manifest['normConstant'] == instance['normConstant']
    assert [entry['N'] for entry in manifest['instances']] == [143]
    assert (tmp_path / 'instances' / 'n10' / 'N143.couplers.txt').read_text().startswith('# offset')
    assert (tmp_path / 'encode_config.json').exists()


def test_encode_skips_even(tmp_path):
    assert run(tmp_path, 'encode', '--n', '4') == 0
    assert not list(tmp_path.glob('class_n*.json'))


def test_encode_seven_qubit_class(tmp_path):
    assert run(tmp_path, 'encode', '--range', '49..633', '--qubits', '7') == 0
    manifest = load_json(tmp_path / 'class_n7.json')
    assert [entry['N'] for entry in manifest['instances']] == \
        [55, 65, 77, 91, 267, 291, 303, 309, 321, 327, 339, 381]
    assert any(entry['reason'] == 'prime' for entry in manifest['skipped'])


def test_replay_reproduces_artifacts(tmp_path):
    assert run(tmp_path, 'encode', '--n', '77', '91') == 0
    before = (tmp_path / 'class_n7.json').read_bytes()
    (tmp_path / 'class_n7.json').unlink()
    assert main(['--quiet', '--replay', str(tmp_path / 'encode_config.json')]) == 0
    assert (tmp_path / 'class_n7.json').read_bytes() == before


def test_missing_manifest_fails(tmp_path):
    assert run(tmp_path, 'profile', '--qubits', '9') == 1


def test_profile_is_deterministic(tmp_path):
    assert run(tmp_path, 'encode', '--n', '49', '111') == 0
    assert run(tmp_path, 'profile', '--qubits', '5', '--runs', '3', '--j0-cap', '64') == 0
    first = (tmp_path / 'hardness_n5.csv').read_bytes()
    assert run(tmp_path, 'profile', '--qubits', '5', '--runs', '3', '--j0-cap', '64') == 0
    assert (tmp_path / 'hardness_n5.csv').read_bytes() == first
    rows = read_csv(tmp_path / 'hardness_n5.csv')
    assert len(rows) == 6
    assert list(rows[0]) == ['N', 'n', 'run', 'j0_star', 'censored']


def test_empty_hard_set_refuses_training(tmp_path):
    assert run(tmp_path, 'encode', '--n', '49', '111') == 0
    save_json({'T': 10.0, 'P_th': 0.0, 'easy': [49, 111], 'hard': [],
               'per_instance': [{'N': 49, 'success_probability': 0.5},
                                {'N': 111, 'success_probability': 0.5}]},
              tmp_path / 'split_n5.json')
    assert run(tmp_path, 'train', '--qubits', '5', '--episodes', '1') == 1


def test_classify_at_zero_threshold(tmp_path):
    config = fast_config(tmp_path)
    assert run(tmp_path, 'encode', '--n', '49', '111') == 0
    assert main(['--out', str(tmp_path), '--quiet', '--config', config,
                 'classify', '--qubits', '5', '--p-th', '0', '--T', '2']) == 0
    split = load_json(tmp_path / 'split_n5.json')
    assert split['hard'] == []
    assert split['easy'] == [49, 111]


def test_linear_matches_zero_fourier(tmp_path):
    config = fast_config(tmp_path)
    assert run(tmp_path, 'encode', '--n', '49', '111') == 0
    save_json({'form': 'fourier', 'C': 6, 'b': [0.0] * 6}, tmp_path / 'zero' / 'schedule.json')
    base = ['--out', str(tmp_path), '--quiet', '--config', config, 'evaluate', '--qubits', '5', '--T', '3']
    assert main(base + ['--schedule', 'linear']) == 0
    assert main(base + ['--schedule', str(tmp_path / 'zero' / 'schedule.json')]) == 0

    linear = read_csv(tmp_path / 'evaluation_n5_linear.csv')
    fourier = read_csv(tmp_path / 'evaluation_n5_zero.csv')
    assert [row['N'] for row in linear] == ['49', '111']
    for a, b in zip(linear, fourier):
        assert float(a['success_probability']) == pytest.approx(float(b['success_probability']), abs=1e-12)
    assert fourier[0]['schedule_form'] == 'fourier'
    histogram = read_csv(tmp_path / 'histogram_n5_linear.csv')
    assert sum(int(row['count']) for row in histogram) == 2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
