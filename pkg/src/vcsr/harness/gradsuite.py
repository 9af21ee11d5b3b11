"""Finite-difference suite: every numcore op plus the full objective on a micro model."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..causalsim.synthetic import DatasetSpec, generate_dataset
from ..css import SegmentPool
from ..numcore import (
    Tensor,
    broadcast_to,
    concat,
    cosine_similarity,
    cross_entropy,
    gather_rows,
    grad_check,
    grad_check_tensors,
    gumbel_softmax,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    multi_head_attention,
    relu,
    scaled_dot_attention,
    softmax,
    softmax_lastdim,
    sqrt,
    stack,
    straight_through,
    tsum,
)
from .config import make_config
from .data import DatasetHeader, make_batch, split_samples
from .model import VCSR
from .train import dims_from_header

OP_TOL = 1e-5
E2E_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float
    checked: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol


def op_cases(rng: np.random.Generator) -> dict:
    """Scalar test functions of a [4, 4] input, one per differentiable primitive."""
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    g = rng.normal(size=4) + 1.0
    bt = rng.normal(size=4)
    mha = {k: Tensor(rng.normal(size=(4, 4)) * 0.5) for k in ("wq", "wk", "wv", "wo")}
    mha.update({k: Tensor(rng.normal(size=4) * 0.1) for k in ("bq", "bk", "bv", "bo")})
    proj = rng.normal(size=(3, 4, 4))
    P = [Tensor(p) for p in proj]
    mask = np.array([True, True, False, True])
    rows = rng.integers(0, 4, size=(1, 3))
    target = rng.integers(0, 4, size=4)
    gumbel_seed = int(rng.integers(1 << 31))

    def gumbel(x, hard):
        y = gumbel_softmax(x, 0.7, hard=hard, rng=np.random.default_rng(gumbel_seed))
        return (y * P[0]).sum()

    return {
        "add": lambda x: ((x + P[0]) * (x + 1.0)).sum(),
        "sub": lambda x: ((x - P[0]) ** 2).sum(),
        "mul": lambda x: (x * P[0] * x).sum(),
        "div": lambda x: (P[0] / (x * x + 1.0)).sum(),
        "pow": lambda x: ((x * x + 0.5) ** 1.5).sum(),
        "neg": lambda x: (-(x * P[1])).sum(),
        "exp": lambda x: (x * 0.5).exp().sum(),
        "log": lambda x: log(x * x + 0.1).sum(),
        "sqrt": lambda x: sqrt(x * x + 0.2).sum(),
        "relu": lambda x: (relu(x + 0.05) ** 2).sum(),
        "matmul": lambda x: (matmul(x, P[0]) * matmul(P[1], x)).sum(),
        "matmul_batched": lambda x: (matmul(stack([x, x * 0.5]), P[2]) ** 2).sum(),
        "matmul_vector": lambda x: (matmul(x, P[0][0]) ** 2).sum(),
        "sum_axis": lambda x: (tsum(x, axis=0) ** 2).sum(),
        "mean": lambda x: (x.mean(axis=1) ** 2).sum() + x.mean() ** 2,
        "reshape": lambda x: (x.reshape(2, 8) ** 3).sum(),
        "swapaxes": lambda x: (x.swapaxes(0, 1) * P[0]).sum(),
        "getitem": lambda x: (x[1:3, ::2] ** 2).sum() + (x[np.array([0, 0, 2])] * 1.5).sum(),
        "broadcast_to": lambda x: (broadcast_to(x[0], (3, 4)) * P[0][:3]).sum(),
        "concat": lambda x: (concat([x, x * 2.0], axis=0) ** 3).sum(),
        "stack": lambda x: (stack([x, x.exp()], axis=1) ** 2).sum(),
        "gather_rows": lambda x: (gather_rows(x.reshape(1, 4, 4), rows) ** 2).sum(),
        "softmax": lambda x: (softmax_lastdim(x) * P[1]).sum(),
        "softmax_masked": lambda x: (softmax(x, mask=mask) * P[1]).sum(),
        "log_softmax": lambda x: (log_softmax(x) * P[1]).sum(),
        "layer_norm": lambda x: (layer_norm(x, Tensor(g), Tensor(bt)) * P[0]).sum(),
        "linear": lambda x: (linear(x, Tensor(w), Tensor(b)) ** 2).sum(),
        "cosine": lambda x: cosine_similarity(x, P[1]).sum(),
        "cross_entropy": lambda x: cross_entropy(x, target),
        "attention": lambda x: (scaled_dot_attention(x, P[0], x) ** 2).sum(),
        "mha": lambda x: (multi_head_attention(x, x, mha, heads=2) ** 2).sum(),
        "gumbel_soft": lambda x: gumbel(x, False),
        # hard == soft value, so the finite difference sees the soft path
        "straight_through": lambda x: (straight_through(softmax_lastdim(x),
                                                         softmax_lastdim(x).data) * P[0]).sum(),
    }


def check_ops(seeds=range(5)) -> list[CheckResult]:
    out = []
    for seed in seeds:
        rng = np.random.default_rng(100 + seed)
        for name, f in op_cases(rng).items():
            x = Tensor(rng.normal(size=(4, 4)))
            t0 = time.perf_counter()
            rep = grad_check(f, x, tol=OP_TOL)
            out.append(CheckResult(f"{name}[seed={seed}]", rep.max_rel_err, OP_TOL, rep.checked,
                                   time.perf_counter() - t0))
    return out


def micro_setup(mode: str = "open", seed: int = 0, batch: int = 3):
    """Micro model (d=8, N=10, m=3, k=2, two negatives) plus a small batch."""
    spec = DatasetSpec(n_train=batch, n_val=0, n_test=0, n_frames=10, d_in=6, n_families=2,
                       n_answers=5, window=2, mode=mode, seed=seed)
    samples = split_samples(generate_dataset(spec), "train")
    cfg = make_config("micro", mode=mode, seed=seed, tau=1.0, hard_selection=False)
    model = VCSR(cfg, dims_from_header(DatasetHeader.from_spec(spec)))
    return model, make_batch(samples, mode)


def check_end_to_end(mode: str = "open", seed: int = 0, max_coords: int = 4) -> CheckResult:
    """Total objective along the soft selection path, frozen noise, sampled coordinates."""
    model, batch = micro_setup(mode, seed)
    pool = SegmentPool(8)
    # a few foreign entries so pool-sourced negatives are exercised too
    prng = np.random.default_rng(seed + 7)
    for j in range(4):
        pool.add(prng.normal(size=model.cfg.d), prng.normal(size=model.cfg.d), f"other-{j}")

    def objective():
        res = model.forward(batch, rng=np.random.default_rng(seed + 1), temperature=0.8,
                            training=True, pool=pool, soft=True)
        return res.loss

    params = list(model.named_parameters())
    t0 = time.perf_counter()
    rep = grad_check_tensors(objective, params, tol=E2E_TOL, max_coords=max_coords,
                             rng=np.random.default_rng(seed + 2))
    return CheckResult(f"end_to_end[{mode}]", rep.max_rel_err, E2E_TOL, rep.checked,
                       time.perf_counter() - t0)


def run_suite(seeds=range(5)) -> list[CheckResult]:
    return check_ops(seeds) + [check_end_to_end("open"), check_end_to_end("mc")]
