import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from funasm.asm import collect_gradients, eigendecompose
from funasm.errors import ConfigError
from funasm.fileio import (
    read_estimate_json,
    read_field_json,
    read_samples_sidecar,
    write_csv,
    write_estimate_json,
    write_field_json,
    write_samples_sidecar,
)
from funasm.functionals import quadratic_functional
from funasm.hilbert import unit_square_space
from funasm.randfield import separable_sine_measure

from conftest import random_field


@pytest.fixture(scope="module")
def estimate17():
    measure = separable_sine_measure(unit_square_space(17), 4, 2.0)
    f = quadratic_functional(
        list(zip(measure.kl_functions.basis[:3], [2.0, 1.0, 0.5]))
    )
    return eigendecompose(collect_gradients(f, measure, 20, seed=3))


class TestFieldJson:
    def test_round_trip(self, space17, rng, tmp_path):
        u = random_field(space17, rng)
        path = tmp_path / "u.json"
        write_field_json(u, path)
        v = read_field_json(path)
        assert v.space == space17
        assert_allclose(v.values, u.values)

    def test_rejects_mismatched_length(self, space17, rng, tmp_path):
        u = random_field(space17, rng)
        path = tmp_path / "u.json"
        write_field_json(u, path)
        data = json.loads(path.read_text())
        data["values"] = data["values"][:-1]
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            read_field_json(path)

    def test_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "u.json"
        path.write_text('{"nx": 3}')
        with pytest.raises(ConfigError):
            read_field_json(path)

    def test_space_check(self, space17, space33, rng, tmp_path):
        u = random_field(space17, rng)
        path = tmp_path / "u.json"
        write_field_json(u, path)
        with pytest.raises(ConfigError):
            read_field_json(path, space=space33)

    def test_byte_deterministic(self, space17, rng, tmp_path):
        u = random_field(space17, rng)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_field_json(u, p1)
        write_field_json(u, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestEstimateJson:
    def test_round_trip(self, estimate17, tmp_path):
        path = tmp_path / "est.json"
        write_estimate_json(estimate17, path)
        loaded = read_estimate_json(path)
        assert loaded.space == estimate17.space
        assert loaded.rank == estimate17.rank
        assert loaded.B == estimate17.samples.B
        assert loaded.rank_tol == estimate17.rank_tol
        assert_allclose(loaded.eigenvalues, estimate17.eigenvalues)
        assert_allclose(
            loaded.eigenfunctions.vectors, estimate17.eigenfunctions.vectors
        )

    def test_rejects_bad_eigenfunction_length(self, estimate17, tmp_path):
        path = tmp_path / "est.json"
        write_estimate_json(estimate17, path)
        data = json.loads(path.read_text())
        data["eigenfunctions"] = [row[:-2] for row in data["eigenfunctions"]]
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            read_estimate_json(path)


class TestSamplesSidecar:
    def test_round_trip(self, estimate17, tmp_path):
        prefix = str(tmp_path / "samples")
        write_samples_sidecar(estimate17.samples, prefix)
        inputs, gradients, values = read_samples_sidecar(prefix)
        assert np.array_equal(inputs, estimate17.samples.inputs)
        assert np.array_equal(gradients, estimate17.samples.gradients)
        assert np.array_equal(values, estimate17.samples.values)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(ConfigError):
            read_samples_sidecar(str(tmp_path / "nothing"))

    def test_byte_deterministic(self, estimate17, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        write_samples_sidecar(estimate17.samples, a)
        write_samples_sidecar(estimate17.samples, b)
        for name in ("inputs", "gradients", "values"):
            pa = tmp_path / f"a_{name}.npy"
            pb = tmp_path / f"b_{name}.npy"
            assert pa.read_bytes() == pb.read_bytes()


class TestCsv:
    def test_format_and_determinism(self, tmp_path):
        rows = [(1, 0.5, "asm"), (2, 1.0 / 3.0, "rand")]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(p1, ["k", "v", "m"], rows)
        write_csv(p2, ["k", "v", "m"], rows)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert lines[0] == "k,v,m"
        assert lines[1] == "1,0.5,asm"
        # repr round-trips the float exactly
        assert float(lines[2].split(",")[1]) == 1.0 / 3.0
