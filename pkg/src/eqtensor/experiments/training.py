"""Dataset generation, training and evaluation for the three experiments.

Randomness is split into independent streams derived from the config seed:
one per generated sample, one for dataset-wide draws (the sparse noise
covariance), one for augmentation and one for model init plus shuffling.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

from ..groups import _haar_orthogonal, sample_lorentz
from ..models import BasisTerm, EigenEquivariantModel, VecToTensorModel
from ..nn import Adam, DenseNet, PermEquivariantNet, cosine_schedule, exponential_schedule
from ..tensor_core import MetricSignature
from .io import Dataset, ExperimentConfig, save_checkpoint, load_checkpoint, parse_config, write_metrics
from .signatures import batch_discrete_signature, batch_signature, poly_points
from .sparse import (
    LearnedH,
    SymMatrixMLP,
    gen_sparse_instance,
    make_covariance,
    recovery_loss_grad,
    sos_h_hopkins,
    sos_h_mao,
    top_eigenvector,
)
from .stress import _sample_F, neohookean_stress

__all__ = [
    "NumericalError",
    "eval_experiment",
    "generate_dataset",
    "make_task",
    "train_experiment",
]

SPLITS = ("train", "val", "test")
_SHARED_STREAM = 1000
_AUGMENT_STREAM = 1001
_MODEL_STREAM = 1002


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or a sampler hit its retry cap."""


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _metric_of(cfg: ExperimentConfig) -> MetricSignature:
    if cfg.experiment == "signature" and cfg.group == "lorentz":
        return MetricSignature.minkowski(1, cfg.d)
    return MetricSignature.euclidean(cfg.d)


def generate_dataset(cfg: ExperimentConfig) -> Dataset:
    gen = {"signature": _gen_signature, "stress": _gen_stress, "sparse": _gen_sparse}[cfg.experiment]
    return gen(cfg)


def _gen_signature(cfg):
    if cfg.group == "lorentz" and cfg.d != 4:
        raise ValueError("Lorentz paths use d = 4 (time first)")
    splits = {}
    for s_idx, (name, count) in enumerate(zip(SPLITS, cfg.sizes)):
        coeffs = np.stack([stream(cfg.seed, s_idx, i).uniform(-1, 1, (cfg.d, cfg.degree + 1)) for i in range(count)])
        pts = np.stack([poly_points(c, cfg.n) for c in coeffs])
        fine = np.stack([poly_points(c, 1001) for c in coeffs])
        levels = batch_signature(fine, cfg.depth)
        fields = {"points": pts}
        fields.update({f"S{k + 1}": lv for k, lv in enumerate(levels)})
        splits[name] = fields
    return Dataset("signature", cfg.d, splits)


def _gen_stress(cfg):
    splits = {}
    for s_idx, (name, count) in enumerate(zip(SPLITS, cfg.sizes)):
        C = np.empty((count, cfg.d, cfg.d))
        for i in range(count):
            try:
                F = _sample_F(stream(cfg.seed, s_idx, i), cfg.d, cfg.eta)
            except RuntimeError as exc:
                raise NumericalError(str(exc)) from exc
            C[i] = F.T @ F
        C = 0.5 * (C + np.swapaxes(C, 1, 2))
        splits[name] = {"C": C, "S": neohookean_stress(C, cfg.lam, cfg.mu)}
    return Dataset("stress", cfg.d, splits)


def _gen_sparse(cfg):
    sigma = make_covariance(stream(cfg.seed, _SHARED_STREAM), cfg.covariance, cfg.n)
    splits = {}
    for s_idx, (name, count) in enumerate(zip(SPLITS, cfg.sizes)):
        S = np.empty((count, cfg.n, cfg.d))
        v = np.empty((count, cfg.n))
        for i in range(count):
            try:
                inst = gen_sparse_instance(
                    stream(cfg.seed, s_idx, i), cfg.scheme, cfg.covariance, cfg.n, cfg.d, cfg.epsilon, sigma
                )
            except RuntimeError as exc:
                raise NumericalError(str(exc)) from exc
            S[i], v[i] = inst.S, inst.v
        splits[name] = {"S": S, "v": v}
    return Dataset("sparse", cfg.d, splits)


def _act_batch(G: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Apply per-sample matrices ``(B, d, d)`` on every index of ``(B, d, ..., d)``."""
    out = T
    for _ in range(T.ndim - 1):
        out = np.einsum("bj...,bij->b...i", out, G)
    return out


def _net_widths(cfg, n_in: int, n_out: int) -> list[int]:
    return [n_in, *cfg.widths, n_out]


class _Task:
    """Shared plumbing; subclasses own normalization, models and metrics."""

    metric_name = "loss"
    lower_is_better = True

    def __init__(self, cfg: ExperimentConfig, data: Dataset):
        if data.tag != cfg.experiment:
            raise ValueError(f"dataset is for {data.tag!r}, config is for {cfg.experiment!r}")
        self.cfg = cfg
        self.data = data
        self.train = dict(data.split("train"))

    def optimizer(self, params, steps_per_epoch: int):
        total = self.cfg.epochs * steps_per_epoch
        return Adam.adamw(params, cosine_schedule(self.cfg.lr, total), weight_decay=self.cfg.weight_decay)

    def n_train(self) -> int:
        return next(iter(self.train.values())).shape[0]

    def state(self, model) -> dict[str, Any]:
        out: dict[str, Any] = {"config": self.cfg.dumps(), "model": self.cfg.model}
        for i, p in enumerate(model.params):
            out[f"param_{i}"] = p
        return out

    def load_params(self, model, entries) -> None:
        for i, p in enumerate(model.params):
            stored = entries[f"param_{i}"]
            if stored.shape != p.shape:
                raise ValueError(f"checkpoint parameter {i} has shape {stored.shape}, expected {p.shape}")
            p[...] = stored

    def baselines(self, split: str) -> dict[str, float]:
        return {}


class SignatureTask(_Task):
    """Truncated signature from sampled points; loss is the mean over levels of ``|S_k - S^_k|^2 / d^k``."""

    def __init__(self, cfg, data):
        super().__init__(cfg, data)
        self.M = cfg.depth
        self.metric = _metric_of(cfg)
        self.input_scale = float(np.sqrt(np.mean(self.train["points"] ** 2)))
        if cfg.augment:
            self.train = self._augment(self.train, cfg.augment)

    def _augment(self, split, copies: int):
        rng = stream(self.cfg.seed, _AUGMENT_STREAM)
        B = split["points"].shape[0]
        out = {k: [] for k in split}
        for _ in range(copies):
            if self.cfg.group == "lorentz":
                G = np.stack([sample_lorentz(rng).matrix for _ in range(B)])
            else:
                G = np.stack([_haar_orthogonal(self.cfg.d, rng) for _ in range(B)])
            out["points"].append(np.einsum("bij,bnj->bni", G, split["points"]))
            for k in range(1, self.M + 1):
                out[f"S{k}"].append(_act_batch(G, split[f"S{k}"]))
        return {k: np.concatenate(v) for k, v in out.items()}

    def targets(self, split, idx=None) -> list[np.ndarray]:
        d = self.cfg.d
        sel = slice(None) if idx is None else idx
        return [split[f"S{k}"][sel].reshape(-1, d**k) / d ** (k / 2) for k in range(1, self.M + 1)]

    def build(self, rng):
        d, n = self.cfg.d, self.cfg.n
        out_dim = sum(d**k for k in range(1, self.M + 1))
        if self.cfg.model == "equivariant":
            orders = tuple(range(1, self.M + 1))
            probe = VecToTensorModel(n, orders, self.metric, None)
            net = DenseNet(_net_widths(self.cfg, probe.n_features, probe.n_terms), self.cfg.activation, rng)
            probe.coeff_net = net
            return probe
        if self.cfg.model == "mlp":
            return DenseNet(_net_widths(self.cfg, n * d, out_dim), self.cfg.activation, rng)
        raise ValueError(f"unknown signature model {self.cfg.model!r}")

    def _predict(self, model, points, need_pullback: bool):
        V = points / self.input_scale
        if isinstance(model, VecToTensorModel):
            return model.vjp(V, need_pullback)
        d = self.cfg.d
        y, pb = model.vjp(V.reshape(V.shape[0], -1), need_pullback)
        sizes = np.cumsum([d**k for k in range(1, self.M + 1)])[:-1]
        outs = np.split(y, sizes, axis=1)
        if not need_pullback:
            return outs, None
        return outs, (lambda douts: pb(np.concatenate(douts, axis=1))[0])

    def loss_grad(self, model, idx):
        outs, pullback = self._predict(model, self.train["points"][idx], True)
        tgts = self.targets(self.train, idx)
        B = len(idx)
        diffs = [o - t for o, t in zip(outs, tgts)]
        loss = sum(float(np.sum(df * df)) for df in diffs) / (self.M * B)
        return loss, pullback([2.0 * df / (self.M * B) for df in diffs])

    def _loss(self, outs, tgts) -> float:
        per = sum(np.sum((o - t) ** 2, axis=1) for o, t in zip(outs, tgts)) / self.M
        return float(np.mean(per))

    def evaluate(self, model, split: str) -> float:
        sp = self.data.split(split)
        outs, _ = self._predict(model, sp["points"], False)
        return self._loss(outs, self.targets(sp))

    def baselines(self, split: str) -> dict[str, float]:
        sp = self.data.split(split)
        d = self.cfg.d
        disc = batch_discrete_signature(sp["points"], self.M)
        outs = [lv.reshape(lv.shape[0], -1) / d ** ((k + 1) / 2) for k, lv in enumerate(disc)]
        return {"discrete": self._loss(outs, self.targets(sp))}

    def state(self, model):
        out = super().state(model)
        out["input_scale"] = np.array([self.input_scale])
        if isinstance(model, VecToTensorModel):
            for k, terms in model.terms.items():
                out[f"terms_{k}"] = encode_terms(terms, k)
        return out

    def restore(self, entries):
        self.input_scale = float(entries["input_scale"][0])
        model = self.build(np.random.default_rng(0))
        if isinstance(model, VecToTensorModel):
            for k in model.orders:
                if decode_terms(entries[f"terms_{k}"]) != model.terms[k]:
                    raise ValueError(f"checkpoint term list for order {k} does not match this build")
        self.load_params(model, entries)
        return model


def encode_terms(terms: list[BasisTerm], k: int) -> np.ndarray:
    """Rows ``[t, sigma (k entries), J padded with -1 to k entries]``."""
    arr = -np.ones((len(terms), 1 + 2 * k), dtype=np.int64)
    for r, term in enumerate(terms):
        arr[r, 0] = term.t
        arr[r, 1 : 1 + k] = term.sigma
        arr[r, 1 + k : 1 + k + len(term.J)] = term.J
    return arr


def decode_terms(arr: np.ndarray) -> list[BasisTerm]:
    k = (arr.shape[1] - 1) // 2
    out = []
    for row in arr:
        t = int(row[0])
        out.append(BasisTerm(t, tuple(int(x) for x in row[1 : 1 + k]), tuple(int(x) for x in row[1 + k : 1 + k + k - 2 * t])))
    return out


class StressTask(_Task):
    """Stress from Cauchy-Green strain; the reported metric is the raw mean ``|S^ - S|_F^2``."""

    metric_name = "mse"

    def __init__(self, cfg, data):
        super().__init__(cfg, data)
        C, S = self.train["C"], self.train["S"]
        lc, ls = np.linalg.eigvalsh(C), np.linalg.eigvalsh(S)
        self.norm = {
            "eig_in": (float(lc.mean()), float(lc.std())),
            "eig_out": (float(ls.mean()), float(ls.std())),
            "comp_in": (C.mean(axis=0), _safe_std(C)),
            "comp_out": (S.mean(axis=0), _safe_std(S)),
        }
        if cfg.augment:
            rng = stream(cfg.seed, _AUGMENT_STREAM)
            Cs, Ss = [], []
            for _ in range(cfg.augment):
                G = np.stack([_haar_orthogonal(cfg.d, rng) for _ in range(C.shape[0])])
                Cs.append(_act_batch(G, C))
                Ss.append(_act_batch(G, S))
            self.train = {"C": np.concatenate(Cs), "S": np.concatenate(Ss)}

    def build(self, rng):
        d = self.cfg.d
        if self.cfg.model == "equivariant":
            net = PermEquivariantNet((1, *self.cfg.widths, 1), self.cfg.activation, rng)
            (a, b), (c, e) = self.norm["eig_in"], self.norm["eig_out"]
            return EigenEquivariantModel(d, net, a, b, c, e)
        if self.cfg.model == "mlp":
            return DenseNet(_net_widths(self.cfg, d * d, d * d), self.cfg.activation, rng)
        raise ValueError(f"unknown stress model {self.cfg.model!r}")

    def _predict(self, model, C, need_pullback: bool):
        """Raw-unit predictions and a pullback taking the gradient in the model's own scaling."""
        if isinstance(model, EigenEquivariantModel):
            out, pb = model.vjp(C, need_pullback)
            scale = np.full((self.cfg.d, self.cfg.d), model.out_scale)
            return out, pb, scale
        mi, si = self.norm["comp_in"]
        mo, so = self.norm["comp_out"]
        B = C.shape[0]
        y, pb = model.vjp(((C - mi) / si).reshape(B, -1), need_pullback)
        out = y.reshape(C.shape) * so + mo
        wrapped = None if pb is None else (lambda dout: pb((dout * so).reshape(B, -1))[0])
        return out, wrapped, so

    def loss_grad(self, model, idx):
        C, S = self.train["C"][idx], self.train["S"][idx]
        out, pullback, scale = self._predict(model, C, True)
        diff = (out - S) / scale
        B = len(idx)
        loss = float(np.sum(diff * diff)) / B
        return loss, pullback(2.0 * diff / scale / B)

    def evaluate(self, model, split: str) -> float:
        sp = self.data.split(split)
        out, _, _ = self._predict(model, sp["C"], False)
        return float(np.mean(np.sum((out - sp["S"]) ** 2, axis=(1, 2))))

    def state(self, model):
        out = super().state(model)
        for key, (a, b) in self.norm.items():
            out[f"{key}_shift"] = np.asarray(a, dtype=np.float64).reshape(-1)
            out[f"{key}_scale"] = np.asarray(b, dtype=np.float64).reshape(-1)
        return out

    def restore(self, entries):
        d = self.cfg.d
        for key in self.norm:
            a, b = entries[f"{key}_shift"], entries[f"{key}_scale"]
            if key.startswith("eig"):
                self.norm[key] = (float(a[0]), float(b[0]))
            else:
                self.norm[key] = (a.reshape(d, d), b.reshape(d, d))
        model = self.build(np.random.default_rng(0))
        self.load_params(model, entries)
        return model


def _safe_std(X: np.ndarray) -> np.ndarray:
    s = X.std(axis=0)
    return np.where(s > 0, s, 1.0)


class SparseTask(_Task):
    """Sparse vector recovery; the metric is the mean ``<v, v_hat>^2`` (higher is better)."""

    metric_name = "score"
    lower_is_better = False

    def optimizer(self, params, steps_per_epoch: int):
        return Adam(params, exponential_schedule(self.cfg.lr, 0.999, every=steps_per_epoch))

    def build(self, rng):
        n, d, w = self.cfg.n, self.cfg.d, self.cfg.widths
        if self.cfg.model in ("full", "diag"):
            return LearnedH(self.cfg.model, n, d, w, self.cfg.activation, rng)
        if self.cfg.model == "mlp":
            return SymMatrixMLP(n, d, w, self.cfg.activation, rng)
        raise ValueError(f"unknown sparse model {self.cfg.model!r}")

    def _rows(self, S: np.ndarray) -> np.ndarray:
        # rows of an orthonormal basis have squared norm ~ d/n; rescale to O(1)
        return S * np.sqrt(self.cfg.n)

    def loss_grad(self, model, idx):
        S, v = self.train["S"][idx], self.train["v"][idx]
        h, pullback = model.vjp(self._rows(S))
        loss, dh = recovery_loss_grad(h, np.einsum("bnd,bn->bd", S, v))
        return loss, pullback(dh)

    def _score(self, S, v, h) -> float:
        u = top_eigenvector(h)
        return float(np.mean(np.einsum("bn,bnd,bd->b", v, S, u) ** 2))

    def evaluate(self, model, split: str) -> float:
        sp = self.data.split(split)
        return self._score(sp["S"], sp["v"], model.forward(self._rows(sp["S"])))

    def baselines(self, split: str) -> dict[str, float]:
        sp = self.data.split(split)
        S = sp["S"]
        return {
            "sos_hopkins": self._score(S, sp["v"], sos_h_hopkins(S)),
            "sos_mao": self._score(S, sp["v"], sos_h_mao(S)),
        }

    def restore(self, entries):
        model = self.build(np.random.default_rng(0))
        self.load_params(model, entries)
        return model


_TASKS = {"signature": SignatureTask, "stress": StressTask, "sparse": SparseTask}


def make_task(cfg: ExperimentConfig, data: Dataset) -> _Task:
    return _TASKS[cfg.experiment](cfg, data)


def train_experiment(
    cfg: ExperimentConfig,
    out_dir=None,
    data: Dataset | None = None,
    log=None,
) -> dict[str, Any]:
    """Train ``cfg.model``; returns final metrics and, with ``out_dir``, writes
    ``checkpoint.eqm`` and ``metrics.csv`` there.
    """
    data = data if data is not None else generate_dataset(cfg)
    task = make_task(cfg, data)
    rng = stream(cfg.seed, _MODEL_STREAM)
    model = task.build(rng)
    N = task.n_train()
    steps = max(1, -(-N // cfg.batch))
    opt = task.optimizer(model.params, steps)
    rows: list[tuple[int, str, str, float]] = []
    sign = 1.0 if task.lower_is_better else -1.0
    best, best_params, best_epoch, stale = np.inf, None, 0, 0
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(N)
        total = 0.0
        for s in range(steps):
            idx = perm[s * cfg.batch : (s + 1) * cfg.batch]
            loss, grads = task.loss_grad(model, idx)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericalError(f"non-finite loss or gradient at epoch {epoch}, step {s} (loss={loss})")
            opt.step(grads)
            total += loss * len(idx)
        val = task.evaluate(model, "val")
        if not np.isfinite(val):
            raise NumericalError(f"non-finite validation {task.metric_name} at epoch {epoch}")
        rows.append((epoch, "train", "loss", total / N))
        rows.append((epoch, "val", task.metric_name, val))
        if log is not None:
            log(f"epoch {epoch}: train loss {total / N:.6g}, val {task.metric_name} {val:.6g}")
        if cfg.patience:
            if sign * val < best:
                best, best_epoch, stale = sign * val, epoch, 0
                best_params = [p.copy() for p in model.params]
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best_params is not None:
        for p, b in zip(model.params, best_params):
            p[...] = b
    test = task.evaluate(model, "test")
    rows.append((epoch, "test", task.metric_name, test))
    result = {task.metric_name: test, "epochs": epoch, "best_epoch": best_epoch or epoch}
    for name, value in task.baselines("test").items():
        rows.append((0, "test", name, value))
        result[name] = value
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "checkpoint.eqm", task.state(model))
        write_metrics(out / "metrics.csv", rows)
    result["rows"] = rows
    result["model"] = model
    result["task"] = task
    return result


def eval_experiment(checkpoint, data: Dataset, split: str = "test") -> dict[str, float]:
    """Rebuild the model stored in ``checkpoint`` and score it on ``split``."""
    entries = load_checkpoint(checkpoint) if not isinstance(checkpoint, dict) else checkpoint
    cfg = parse_config(entries["config"])
    task = make_task(cfg, data)
    model = task.restore(entries)
    out = {task.metric_name: task.evaluate(model, split)}
    out.update(task.baselines(split))
    return out
