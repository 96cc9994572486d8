"""Acceptance gate.

One test per criterion.  Each test prints a single ``criterion N: PASS|FAIL``
line, and the lines are repeated in the pytest terminal summary.  Run alone with

    pytest tests/test_acceptance.py -v
"""

from __future__ import annotations

import contextlib
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from eqtensor.cli import run as cli_run
from eqtensor.experiments.audit import equivariance_audit
from eqtensor.experiments.io import load_config, parse_config
from eqtensor.experiments.signatures import chen_product, poly_points, signature_oracle
from eqtensor.experiments.sparse import (
    LearnedH,
    estimate_sparse,
    gen_sparse_instance,
    recovery_score,
    sample_sparse_vectors,
    sos_h_mao,
)
from eqtensor.experiments.training import generate_dataset, make_task, stream, train_experiment
from eqtensor.isotropic import count_Gk, enumerate_Gk, independent_subset, isotropic_basis
from eqtensor.models import (
    EigenEquivariantModel,
    VecToTensorModel,
    apply_general_basis,
    enumerate_general_basis,
)
from eqtensor.nn import DenseNet, PermEquivariantNet
from eqtensor.tensor_core import MetricSignature, TensorValue

from oracles import finite_difference_grads, max_rel_error, riemann_signature, stacked_nullity

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@contextlib.contextmanager
def criterion(n: int, title: str):
    """Record and print one PASS/FAIL line; failures still propagate."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        detail = "; ".join(notes + [str(exc).splitlines()[0] if str(exc) else type(exc).__name__])
        line = f"criterion {n}: FAIL  {title} ({detail})"
        conftest.ACCEPTANCE_LINES[n] = line
        print(line)
        raise
    line = f"criterion {n}: PASS  {title}" + (f" ({'; '.join(notes)})" if notes else "")
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)


def test_criterion_1_isotropic_counts():
    with criterion(1, "isotropic counts and brute-force invariant dimensions") as notes:
        start = time.perf_counter()
        assert [len(enumerate_Gk(k)) for k in (2, 4, 6)] == [1, 3, 15]
        assert count_Gk(6) == 15
        rng = np.random.default_rng(0)
        for d in (2, 3):
            metric = MetricSignature.euclidean(d)
            for k in range(5):
                nullity = stacked_nullity(metric, k, 1, n_g=200, rng=rng)
                expected = count_Gk(k) if k % 2 == 0 else 0
                assert nullity == expected, f"k={k}, d={d}: null space {nullity}, enumeration {expected}"
                assert len(isotropic_basis(k, 1, metric)) == expected
        elapsed = time.perf_counter() - start
        notes.append(f"{elapsed:.1f} s")
        assert elapsed < 30


def _span_rank(maps, specs, d, rng, samples=10):
    inputs = [[TensorValue(rng.standard_normal((d,) * k), p, d) for k, p in specs] for _ in range(samples)]
    rows = [np.concatenate([apply_general_basis(m, xs).components for xs in inputs]) for m in maps]
    return int(np.linalg.matrix_rank(np.array(rows), tol=1e-8))


def test_criterion_2_example_reductions():
    with criterion(2, "single-vector basis is 3 maps; symmetric a2 (x) a2 reduces 15 -> 7") as notes:
        rng = np.random.default_rng(0)
        maps = enumerate_general_basis([(1, 1)], (2, 1), 2, 3)
        assert len(maps) == 3 and _span_rank(maps, [(1, 1)], 3, rng) == 3
        assert sorted(m.degree for m in maps) == [0, 2, 2]
        notes.append("vector -> matrix: 3 independent maps")
        c3 = isotropic_basis(6, 1, MetricSignature.euclidean(3))
        assert len(c3) == 15
        reduced = len(independent_subset(c3, [(2, 3, 0, 1, 4, 5)]))
        notes.append(f"a2 (x) a2 terms: 15 -> {reduced}")
        assert reduced == 7


def test_criterion_3_equivariance_suite():
    with criterion(3, "equivariance audit, 32 trials per model") as notes:
        start = time.perf_counter()
        rng = np.random.default_rng(0)
        worst = {}

        def vec_model(metric):
            m = VecToTensorModel(10, (1, 2, 3), metric, None)
            m.coeff_net = DenseNet([m.n_features, 32, 32, 32, m.n_terms], "gelu", rng)
            return m

        targets = [
            ("vector model O(3)", vec_model(MetricSignature.euclidean(3)), MetricSignature.euclidean(3), 1e-9),
            ("vector model O(1,3)", vec_model(MetricSignature.minkowski(1, 4)), MetricSignature.minkowski(1, 4), 1e-7),
            ("vector model Sp(4)", vec_model(MetricSignature.symplectic(4)), MetricSignature.symplectic(4), 1e-7),
            ("eigen route", EigenEquivariantModel(3, PermEquivariantNet(rng=rng), 1.0, 0.2, 0.0, 0.3),
             MetricSignature.euclidean(3), 1e-7),
            ("learned h full", LearnedH("full", 100, 5, rng=rng), MetricSignature.euclidean(5), 1e-9),
            ("learned h diag", LearnedH("diag", 100, 5, rng=rng), MetricSignature.euclidean(5), 1e-9),
        ]
        maps = enumerate_general_basis([(1, 1), (2, 1)], (2, 1), 2, 3)
        targets.append(("general basis O(3)", (maps, rng.standard_normal(len(maps))), MetricSignature.euclidean(3), 1e-9))
        for name, target, metric, tol in targets:
            worst[name] = equivariance_audit(target, metric, 32, rng)
        elapsed = time.perf_counter() - start
        notes.append(f"max defect {max(worst.values()):.1e}, {elapsed:.1f} s")
        for name, target, metric, tol in targets:
            assert worst[name] < tol, f"{name}: defect {worst[name]:.3e} >= {tol:g}"
        assert elapsed < 120


def test_criterion_4_signature_oracle():
    with criterion(4, "signature closed form, Chen identity, quadrature agreement") as notes:
        rng = np.random.default_rng(0)
        for d in (1, 2, 3, 4):
            x0, x1 = rng.standard_normal((2, d))
            delta = x1 - x0
            power = np.array(1.0)
            for k, level in enumerate(signature_oracle(np.stack([x0, x1]), 4), start=1):
                power = np.multiply.outer(power, delta)
                np.testing.assert_allclose(level.data, power / np.prod(np.arange(1, k + 1)), rtol=1e-12, atol=1e-12)
        for _ in range(10):
            X = rng.standard_normal((9, 3))
            joined = chen_product(signature_oracle(X[:4], 3), signature_oracle(X[3:], 3))
            for a, b in zip(joined, signature_oracle(X, 3)):
                np.testing.assert_allclose(a.data, b.data, rtol=1e-12, atol=1e-12)
        worst = 0.0
        for _ in range(3):
            coeffs = rng.uniform(-1, 1, size=(3, 4))
            sig = signature_oracle(poly_points(coeffs, 1000), 3)
            ref = riemann_signature(coeffs, 3, steps=10_000)
            for a, b in zip(sig, ref):
                worst = max(worst, np.linalg.norm(a.data - b) / np.linalg.norm(b))
        notes.append(f"quadrature relative error {worst:.1e}")
        assert worst < 1e-3


def test_criterion_5_sampling_moments():
    with criterion(5, "sparse sampling moments within 3 standard errors") as notes:
        n, eps, draws = 100, 0.25, 100_000
        rng = np.random.default_rng(0)
        expected4 = {"BG": 3 / (eps * n), "CBG": 1 / (eps * n), "BR": 1 / (eps * n)}
        for scheme, e4 in expected4.items():
            sq, qu = [], []
            for _ in range(10):
                v = sample_sparse_vectors(rng, scheme, n, eps, draws // 10, normalize=False)
                sq.append(np.sum(v**2, axis=1))
                qu.append(np.sum(v**4, axis=1))
            sq, qu = np.concatenate(sq), np.concatenate(qu)
            for name, x, target in (("|v|_2^2", sq, 1.0), ("|v|_4^4", qu, e4)):
                se = x.std(ddof=1) / np.sqrt(draws)
                z = (x.mean() - target) / se
                notes.append(f"{scheme} {name} z={z:+.2f}")
                assert abs(z) < 3, f"{scheme} {name}: mean {x.mean():.5f}, target {target:.5f}, z={z:.2f}"


def test_criterion_6_sos_reproduction():
    with criterion(6, "SoS (Mao) on BG/identity, n=100, d=5, eps=0.25, 500 instances") as notes:
        start = time.perf_counter()
        rng = np.random.default_rng(0)
        scores = []
        for _ in range(500):
            inst = gen_sparse_instance(rng, "BG", "identity", 100, 5, 0.25)
            scores.append(recovery_score(inst.v, estimate_sparse(inst.S, sos_h_mao(inst.S))))
        mean = float(np.mean(scores))
        elapsed = time.perf_counter() - start
        notes.append(f"mean {mean:.4f}, {elapsed:.1f} s")
        assert abs(mean - 0.962) <= 0.05
        assert elapsed < 60


def _timed_train(cfg):
    start = time.perf_counter()
    result = train_experiment(cfg)
    return result, time.perf_counter() - start


CPU_BUDGET = 15 * 60


def test_criterion_7_training_orderings():
    with criterion(7, "desk-scale orderings (signature, stress, sparse)") as notes:
        sig_cfg = load_config(CONFIGS / "signature_o3.cfg")
        sig, t_sig = _timed_train(sig_cfg)
        sig_mlp, t_sig_mlp = _timed_train(load_config(CONFIGS / "signature_o3_mlp.cfg"))
        notes.append(f"signature {sig['loss']:.4f} < mlp {sig_mlp['loss']:.4f}, discrete {sig['discrete']:.4f}")
        stress, t_stress = _timed_train(load_config(CONFIGS / "stress.cfg"))
        stress_mlp, t_stress_mlp = _timed_train(load_config(CONFIGS / "stress_mlp.cfg"))
        notes.append(f"stress {stress['mse']:.2e} < mlp {stress_mlp['mse']:.2e}")
        sparse, t_sparse = _timed_train(load_config(CONFIGS / "sparse_br.cfg"))
        notes.append(f"sparse {sparse['score']:.3f} vs SoS {sparse['sos_mao']:.3f}")
        assert sig["loss"] < sig["discrete"] and sig["loss"] < sig_mlp["loss"]
        assert stress["mse"] < stress_mlp["mse"]
        assert sparse["score"] >= sparse["sos_mao"] + 0.1
        assert max(t_sig, t_sig_mlp, t_stress, t_stress_mlp, t_sparse) < CPU_BUDGET


ARCHITECTURES = {
    ("signature", "equivariant"): "experiment = signature\nn = 4\nsizes = 12,4,4\nwidths = 8,8\n",
    ("signature", "mlp"): "experiment = signature\nmodel = mlp\nn = 4\nsizes = 12,4,4\nwidths = 8,8\n",
    ("stress", "equivariant"): "experiment = stress\nsizes = 12,4,4\nwidths = 6,6\n",
    ("stress", "mlp"): "experiment = stress\nmodel = mlp\nsizes = 12,4,4\nwidths = 6,6\n",
    ("sparse", "full"): "experiment = sparse\nn = 12\nd = 3\nsizes = 12,4,4\nwidths = 8,8\n",
    ("sparse", "diag"): "experiment = sparse\nmodel = diag\nn = 12\nd = 3\nsizes = 12,4,4\nwidths = 8,8\n",
    ("sparse", "mlp"): "experiment = sparse\nmodel = mlp\nn = 12\nd = 3\nsizes = 12,4,4\nwidths = 8,8\n",
}


def test_criterion_8_gradient_checks():
    with criterion(8, "reverse mode vs central differences, every trained architecture") as notes:
        worst = {}
        for key, text in ARCHITECTURES.items():
            cfg = parse_config(text)
            task = make_task(cfg, generate_dataset(cfg))
            model = task.build(stream(0, 9))
            rng = np.random.default_rng(1)
            for p in model.params:
                p += 0.05 * rng.standard_normal(p.shape)
            idx = np.arange(8)
            _, grads = task.loss_grad(model, idx)
            fd = finite_difference_grads(lambda: task.loss_grad(model, idx)[0], model.params, h=1e-5)
            worst[key] = max_rel_error(grads, fd)
        notes.append(f"max relative error {max(worst.values()):.1e}")
        for key, err in worst.items():
            assert err < 1e-5, f"{key}: relative error {err:.2e}"


def test_criterion_9_determinism(tmp_path, capsys):
    with criterion(9, "gen/train byte-identical across two runs") as notes:
        runs = [
            ("stress.cfg", ["--epochs", "5"]),
            ("signature_o3.cfg", ["--epochs", "1"]),
            ("sparse_br.cfg", ["--epochs", "1", "--model", "diag"]),
        ]
        for cfg_name, extra in runs:
            outputs = []
            for rep in ("a", "b"):
                base = tmp_path / f"{cfg_name}-{rep}"
                cfg = str(CONFIGS / cfg_name)
                assert cli_run(["gen", "--config", cfg, "--out", f"{base}.eqd", "--seed", "11"]) == 0
                assert cli_run(["train", "--config", cfg, "--data", f"{base}.eqd", "--out", str(base),
                                "--seed", "11", "--quiet", *extra]) == 0
                outputs.append([Path(f"{base}.eqd").read_bytes(), (base / "checkpoint.eqm").read_bytes(),
                                (base / "metrics.csv").read_bytes()])
            assert outputs[0] == outputs[1], f"{cfg_name}: outputs differ between runs"
            notes.append(cfg_name)
        capsys.readouterr()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
