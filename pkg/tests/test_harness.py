import json

import numpy as np
import pytest
import scipy.sparse as sp

from kaczmarz.harness import (
    ExperimentSpec,
    RandomProblemSpec,
    emit_results,
    gen_random_problem,
    load_problem_from_file,
    read_matrix_market,
    read_trace_csv,
    read_vector,
    run_experiment,
    write_matrix_market,
    write_trace_csv,
    write_vector,
)
from kaczmarz.linalg import Problem, RowAccessMatrix
from kaczmarz.solvers import SolverConfig, run


class TestRandomProblem:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RandomProblemSpec(m=50, n=10, r=11)
        with pytest.raises(ValueError):
            RandomProblemSpec(m=50, n=10, r=10, kappa=1.0)

    def test_spectrum_and_rank(self):
        problem = gen_random_problem(RandomProblemSpec(m=50, n=10, r=10, kappa=10.0, seed=1))
        s = np.linalg.svd(problem.A.to_dense(), compute_uv=False)
        nonzero = s[s > 50 * s[0] * np.finfo(float).eps]
        assert nonzero.size == 10
        assert np.all(nonzero >= 1.0 - 1e-10)
        assert np.all(nonzero <= 10.0 + 1e-10)
        assert nonzero[0] / nonzero[-1] <= 10.0

    def test_rank_deficient_consistency(self):
        problem = gen_random_problem(RandomProblemSpec(m=40, n=12, r=7, kappa=5.0, seed=2))
        s = np.linalg.svd(problem.A.to_dense(), compute_uv=False)
        assert (s > 40 * s[0] * np.finfo(float).eps).sum() == 7
        gap = np.linalg.norm(problem.A.matvec(problem.x_star) - problem.b)
        assert gap <= 1e-8

    def test_same_seed_reproduces(self):
        spec = RandomProblemSpec(m=20, n=6, r=6, kappa=4.0, seed=3)
        p1, p2 = gen_random_problem(spec), gen_random_problem(spec)
        np.testing.assert_array_equal(p1.A.to_dense(), p2.A.to_dense())
        np.testing.assert_array_equal(p1.b, p2.b)


class TestMatrixMarket:
    def test_coordinate_round_trip(self, tmp_path):
        path = tmp_path / "diag.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "2 2 2\n"
            "1 1 1.0\n"
            "2 2 2.0\n")
        A = read_matrix_market(path)
        assert A.is_sparse
        np.testing.assert_allclose(A.to_dense(), [[1.0, 0.0], [0.0, 2.0]])

    def test_symmetric_expansion(self, tmp_path):
        path = tmp_path / "sym.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real symmetric\n"
            "2 2 2\n"
            "1 1 3.0\n"
            "2 1 5.0\n")
        A = read_matrix_market(path)
        np.testing.assert_allclose(A.to_dense(), [[3.0, 5.0], [5.0, 0.0]])

    def test_array_format(self, tmp_path):
        path = tmp_path / "arr.mtx"
        path.write_text(
            "%%MatrixMarket matrix array real general\n"
            "2 2\n1.0\n3.0\n2.0\n4.0\n")
        A = read_matrix_market(path)
        assert not A.is_sparse
        np.testing.assert_allclose(A.to_dense(), [[1.0, 2.0], [3.0, 4.0]])

    def test_zero_row_named(self, tmp_path):
        path = tmp_path / "zero.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "3 2 2\n"
            "1 1 1.0\n"
            "3 2 2.0\n")
        with pytest.raises(ValueError, match="row 1"):
            read_matrix_market(path)

    def test_complex_rejected(self, tmp_path):
        path = tmp_path / "cplx.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate complex general\n"
            "1 1 1\n"
            "1 1 1.0 2.0\n")
        with pytest.raises(ValueError, match="complex"):
            read_matrix_market(path)

    def test_pattern_rejected(self, tmp_path):
        path = tmp_path / "pat.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate pattern general\n"
            "1 1 1\n"
            "1 1\n")
        with pytest.raises(ValueError, match="pattern"):
            read_matrix_market(path)

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text("not a matrix market file\n1 1\n")
        with pytest.raises(ValueError, match="not a valid Matrix Market"):
            read_matrix_market(path)

    def test_out_of_range_indices_rejected(self, tmp_path):
        path = tmp_path / "oob.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n"
            "2 2 1\n"
            "3 1 1.0\n")
        with pytest.raises(ValueError):
            read_matrix_market(path)

    def test_write_read_inverse_on_sparse(self, tmp_path):
        rng = np.random.default_rng(61)
        dense = rng.standard_normal((15, 7))
        dense[np.abs(dense) < 0.9] = 0.0
        dense[:, 0] = np.pi  # irrational values exercise full-precision output
        A = RowAccessMatrix(sp.csr_array(dense))
        path = write_matrix_market(A, tmp_path / "rt.mtx")
        B = read_matrix_market(path)
        np.testing.assert_array_equal(B.to_dense(), A.to_dense())

    def test_vector_round_trip(self, tmp_path):
        v = np.random.default_rng(62).standard_normal(9)
        path = write_vector(v, tmp_path / "v.mtx")
        np.testing.assert_array_equal(read_vector(path), v)

    def test_load_problem_from_file(self, tmp_path):
        spec = RandomProblemSpec(m=20, n=5, r=5, kappa=3.0, seed=4)
        problem = gen_random_problem(spec)
        path = write_matrix_market(problem.A, tmp_path / "A.mtx")
        loaded = load_problem_from_file(path, seed=11)
        assert loaded.x_star is not None
        assert loaded.A.shape == (20, 5)
        trace = run(loaded, SolverConfig(variant="grk", seed=0))
        assert trace.termination == "rse_tol"


class TestExperiments:
    def _spec(self, trials=3, certify=False, methods=None):
        methods = methods or [
            ("grk", SolverConfig(variant="grk", seed=100, max_iters=20_000)),
            ("mgrk", SolverConfig(variant="mgrk", beta=0.3, seed=100, max_iters=20_000)),
        ]
        return ExperimentSpec(
            source=RandomProblemSpec(m=60, n=12, r=12, kappa=5.0, seed=7),
            methods=methods, trials=trials, certify=certify)

    def test_label_uniqueness_enforced(self):
        cfg = SolverConfig(variant="grk")
        with pytest.raises(ValueError):
            ExperimentSpec(source=RandomProblemSpec(10, 5, 5), trials=1,
                           methods=[("a", cfg), ("a", cfg)])

    def test_determinism_and_identical_configs(self):
        cfg = SolverConfig(variant="grk", seed=55, max_iters=20_000)
        spec = self._spec(methods=[("one", cfg), ("two", cfg)])
        result = run_experiment(spec)
        assert result.methods[0].mean_iters == result.methods[1].mean_iters
        again = run_experiment(spec)
        assert [t.iters for t in again.methods[0].trials] == \
               [t.iters for t in result.methods[0].trials]

    def test_per_trial_seeds(self):
        result = run_experiment(self._spec(trials=4))
        assert [t.seed for t in result.methods[0].trials] == [100, 101, 102, 103]

    def test_single_trial_mean_is_value(self):
        result = run_experiment(self._spec(trials=1))
        for meth in result.methods:
            assert meth.mean_iters == meth.trials[0].iters

    def test_max_iters_flagged_not_dropped(self):
        spec = ExperimentSpec(
            source=RandomProblemSpec(m=60, n=12, r=12, kappa=5.0, seed=7),
            methods=[("tiny", SolverConfig(variant="grk", seed=0, max_iters=3))],
            trials=2)
        result = run_experiment(spec)
        assert result.methods[0].hit_max_iters == 2
        assert all(t.termination == "max_iters" for t in result.methods[0].trials)

    def test_certification_reported(self):
        result = run_experiment(self._spec(trials=2, certify=True))
        grk = next(m for m in result.methods if m.label == "grk")
        assert all(t.certified for t in grk.trials)

    def test_traces_kept_on_request(self):
        spec = self._spec(trials=2)
        assert all(t.trace is None
                   for m in run_experiment(spec).methods for t in m.trials)
        spec.keep_traces = True
        result = run_experiment(spec)
        for meth in result.methods:
            for t in meth.trials:
                assert t.trace is not None and t.trace.iterations == t.iters


class TestEmission:
    def _result(self, trials=2):
        spec = ExperimentSpec(
            source=RandomProblemSpec(m=40, n=8, r=8, kappa=4.0, seed=9),
            methods=[("grk", SolverConfig(variant="grk", seed=1)),
                     ("rk", SolverConfig(variant="rk", seed=1, max_iters=200_000))],
            trials=trials)
        return run_experiment(spec)

    def test_csv_row_count(self, tmp_path):
        result = self._result(trials=3)
        text = emit_results(result, "csv", tmp_path / "r.csv")
        lines = [l for l in text.strip().splitlines() if l]
        assert len(lines) == 1 + 2 * 3 + 2  # header + methods*trials + summaries

    def test_json_round_trip(self, tmp_path):
        result = self._result()
        path = tmp_path / "r.json"
        emit_results(result, "json", path)
        assert json.loads(path.read_text()) == result.to_dict()

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError, match="format"):
            emit_results(self._result(), "xml")

    def test_trace_csv_round_trip(self, tmp_path):
        problem = gen_random_problem(RandomProblemSpec(m=30, n=6, r=6, kappa=3.0, seed=10))
        trace = run(problem, SolverConfig(variant="grk", seed=2))
        path = write_trace_csv(trace, tmp_path / "t.csv")
        loaded = read_trace_csv(path)
        assert loaded.termination == trace.termination
        assert loaded.initial_err_sq == trace.initial_err_sq
        assert len(loaded.records) == len(trace.records)
        assert [r.index for r in loaded.records] == trace.selections()
        assert [r.gamma for r in loaded.records] == [r.gamma for r in trace.records]
        assert [r.err_sq for r in loaded.records] == [r.err_sq for r in trace.records]

    def test_header_only_trace_file(self, tmp_path):
        problem = Problem(RowAccessMatrix(np.eye(2)), [1.0, 1.0], x_star=[1.0, 1.0])
        trace = run(problem, SolverConfig(variant="grk"), x0=[1.0, 1.0])
        assert trace.iterations == 0
        path = write_trace_csv(trace, tmp_path / "empty.csv")
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2  # metadata comment + column header
        loaded = read_trace_csv(path)
        assert loaded.records == []
