"""Finite-difference suites over every primitive and the full model pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import ArchConfig
from ..diffcore import Tensor, gradcheck
from ..diffcore import tensor as T
from ..encoders import Observation
from ..models import Agent

OP_TOL = 1e-6
PIPELINE_TOL = 1e-4


def _t(rng, *shape, lo=None, hi=None, name=None):
    data = rng.uniform(lo, hi, shape) if lo is not None else rng.standard_normal(shape)
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)


def _project(out: Tensor, rng) -> Tensor:
    """Scalar loss <out, W> with a fixed random W, so every output entry matters."""
    w = Tensor(rng.standard_normal(out.shape))
    return (out * w).sum()


def _binary(op, lo=None, hi=None, shape_b=(3, 4)):
    def build(rng):
        a = _t(rng, 3, 4, lo=lo, hi=hi, name="a")
        b = _t(rng, *shape_b, lo=lo, hi=hi, name="b")
        w = Tensor(rng.standard_normal((3, 4)))
        return (lambda: (op(a, b) * w).sum()), [a, b]
    return build


def _unary(op, lo=None, hi=None, shape=(3, 4)):
    def build(rng):
        x = _t(rng, *shape, lo=lo, hi=hi, name="x")
        w = Tensor(rng.standard_normal(np.shape(op(Tensor(x.data)).data)))
        return (lambda: (op(x) * w).sum()), [x]
    return build


def _scan_case(fused: bool, backend: str):
    def build(rng):
        Bt, K, d, h = 2, 5, 3, 2
        if fused:
            delta = _t(rng, Bt, K, d, lo=0.05, hi=0.5, name="delta")
            u = _t(rng, Bt, K, d, name="u")
            Bm = _t(rng, Bt, K, h, name="B")
            Cm = _t(rng, Bt, K, h, name="C")
            A = _t(rng, d, h, lo=-2.0, hi=-0.2, name="A")
            x0 = _t(rng, Bt, d, h, name="x0")
            w = Tensor(rng.standard_normal((Bt, K, d)))
            return (lambda: (T.selective_scan(delta, u, Bm, Cm, A, x0, backend=backend, block=2)[0] * w).sum(),
                    [delta, u, Bm, Cm, A, x0])
        a = _t(rng, Bt, K, d, h, lo=0.1, hi=0.99, name="decay")
        b = _t(rng, Bt, K, d, h, name="drive")
        x0 = _t(rng, Bt, d, h, name="x0")
        w = Tensor(rng.standard_normal((Bt, K, d, h)))
        return (lambda: (T.linear_recurrence(a, b, x0, backend=backend, block=2) * w).sum()), [a, b, x0]
    return build


def _layernorm(rng):
    x = _t(rng, 2, 8, name="x")
    g = _t(rng, 8, name="gain")
    b = _t(rng, 8, name="bias")
    w = Tensor(rng.standard_normal((2, 8)))
    return (lambda: (T.layernorm(x, g, b) * w).sum()), [x, g, b]


def _concat(rng):
    a, b = _t(rng, 2, 3, name="a"), _t(rng, 2, 2, name="b")
    w = Tensor(rng.standard_normal((2, 5)))
    return (lambda: (T.concat([a, b], axis=1) * w).sum()), [a, b]


def _stack(rng):
    a, b = _t(rng, 2, 3, name="a"), _t(rng, 2, 3, name="b")
    w = Tensor(rng.standard_normal((2, 2, 3)))
    return (lambda: (T.stack([a, b], axis=1) * w).sum()), [a, b]


def _getitem_fancy(rng):
    x = _t(rng, 5, 3, name="x")
    idx = np.array([0, 2, 2, 4])
    w = Tensor(rng.standard_normal((4, 3)))
    return (lambda: (x[idx] * w).sum()), [x]


def _chain(rng):
    x = _t(rng, 6, name="x")
    return (lambda: T.tanh(x).sum()), [x]


OP_CASES = {
    "add": _binary(T.add, shape_b=(4,)),
    "sub": _binary(T.sub, shape_b=(3, 1)),
    "mul": _binary(T.mul),
    "div": _binary(T.div, lo=0.5, hi=2.0),
    "minimum": _binary(T.minimum),
    "maximum": _binary(T.maximum),
    "neg": _unary(T.neg),
    "exp": _unary(T.exp),
    "log": _unary(T.log, lo=0.5, hi=3.0),
    "tanh": _unary(T.tanh),
    "sigmoid": _unary(T.sigmoid),
    "softplus": _unary(T.softplus),
    "relu": _unary(T.relu),
    "square": _unary(T.square),
    "sqrt": _unary(T.sqrt, lo=0.5, hi=3.0),
    "clip": _unary(lambda x: T.clip(x, -0.5, 0.5)),
    "sum": _unary(lambda x: T.sum(x, axis=1)),
    "mean": _unary(lambda x: T.mean(x, axis=0, keepdims=True)),
    "reshape": _unary(lambda x: T.reshape(x, (4, 3))),
    "transpose": _unary(lambda x: T.transpose(x)),
    "getitem": _unary(lambda x: x[1:, ::2]),
    "getitem_fancy": _getitem_fancy,
    "concat": _concat,
    "stack": _stack,
    "layernorm": _layernorm,
    "softmax": _unary(lambda x: T.softmax(x, axis=-1)),
    "chain_tanh_sum": _chain,
    "linear_recurrence_sequential": _scan_case(False, "sequential"),
    "linear_recurrence_parallel": _scan_case(False, "parallel"),
    "selective_scan_sequential": _scan_case(True, "sequential"),
    "selective_scan_parallel": _scan_case(True, "parallel"),
}


def _matmul(rng):
    a = _t(rng, 3, 4, name="a")
    b = _t(rng, 4, 2, name="b")
    w = Tensor(rng.standard_normal((3, 2)))
    return (lambda: (a @ b * w).sum()), [a, b]


def _matmul_batched(rng):
    a = _t(rng, 2, 3, 4, name="a")
    b = _t(rng, 4, 2, name="b")
    w = Tensor(rng.standard_normal((2, 3, 2)))
    return (lambda: (a @ b * w).sum()), [a, b]


OP_CASES["matmul"] = _matmul
OP_CASES["matmul_batched"] = _matmul_batched


@dataclass
class SuiteReport:
    rows: list          # (name, max_rel_err, checked, skipped, tol, passed)

    @property
    def passed(self) -> bool:
        return all(r[-1] for r in self.rows)

    def lines(self) -> list[str]:
        out = [f"{'check':<34} {'max_rel_err':>12} {'probes':>7} {'kinks':>6}  status"]
        for name, err, checked, skipped, tol, ok in self.rows:
            out.append(f"{name:<34} {err:12.3e} {checked:7d} {skipped:6d}  {'ok' if ok else 'FAIL'} (< {tol:g})")
        return out


def op_suite(seed: int = 0, step: float = 1e-5, tol: float = OP_TOL, only=None) -> SuiteReport:
    rows = []
    for name, build in OP_CASES.items():
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, len(name)])
        fn, tensors = build(rng)
        res = gradcheck(fn, tensors, step=step)
        rows.append((name, res.worst, res.checked, res.skipped_kinks, tol, res.passed(tol)))
    return SuiteReport(rows)


TINY_ARCH = ArchConfig(proprio_dim=15, frames=2, height=8, width=8, patch=4, token_width=8,
                       proprio_hidden=(8,), proprio_token=8, vis_channels=8, vis_token=8, state_size=3,
                       attn_heads=2, attn_ffn=8, head_hidden=(8,), actor_hidden=(8,), critic_hidden=(8,),
                       action_dim=3)


def pipeline_case(seed: int, variant: str = "ssm-fusion", arch: ArchConfig = TINY_ARCH):
    """Observation -> encoders -> backbone (with carried state) -> heads -> scalar."""
    rng = np.random.default_rng([seed, 7])
    agent = Agent(variant, arch, rng, dtype=np.float64)
    B = 2
    obs = Observation(rng.standard_normal((B, arch.proprio_dim)),
                      rng.uniform(0.0, arch.max_range, (B, arch.frames, arch.height, arch.width)))
    states = [rng.standard_normal(s.shape) * 0.5 for s in agent.initial_state(B)]
    a_tilde = rng.standard_normal((B, arch.action_dim))
    w = rng.standard_normal(B)

    def fn():
        h, _ = agent.features(obs, states)
        logp, ent, value = agent.policy.evaluate(h, a_tilde)
        return (logp * Tensor(w)).sum() + value.sum() + ent.sum() * 0.1

    return fn, agent


def pipeline_suite(seeds=range(20), variant: str = "ssm-fusion", max_probes: int = 4, step: float = 1e-5,
                   tol: float = PIPELINE_TOL) -> SuiteReport:
    rows = []
    for seed in seeds:
        fn, agent = pipeline_case(seed, variant)
        named = agent.named_parameters()
        res = gradcheck(fn, list(named.values()), step=step, max_probes=max_probes,
                        rng=np.random.default_rng(seed), names=list(named))
        rows.append((f"pipeline[{variant}] seed {seed}", res.worst, res.checked, res.skipped_kinks, tol,
                     res.passed(tol)))
    return SuiteReport(rows)


def mutation_suite(seed: int = 0, tol: float = OP_TOL) -> SuiteReport:
    """A deliberately wrong tanh adjoint must be caught."""
    rng = np.random.default_rng(seed)
    x = _t(rng, 3, 4, name="x")
    w = Tensor(rng.standard_normal((3, 4)))

    def bad_tanh(v):
        y = np.tanh(v.data)
        return T._make(y, (v,), lambda g: (g * (1.0 - y),))   # should be 1 - y**2

    res = gradcheck(lambda: (bad_tanh(x) * w).sum(), [x])
    caught = not res.passed(tol)
    return SuiteReport([("mutation: corrupted tanh adjoint detected", res.worst, res.checked,
                         res.skipped_kinks, tol, caught)])
