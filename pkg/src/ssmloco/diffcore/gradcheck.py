from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, record_kinks


@dataclass
class GradcheckResult:
    max_rel_err: dict = field(default_factory=dict)
    checked: int = 0
    skipped_kinks: int = 0

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.worst < tol


def rel_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps near-zero gradient entries from turning round-off into a
    huge relative error; below it the check is effectively absolute.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def _same_kinks(a: list, b: list) -> bool:
    if len(a) != len(b):
        return False
    return all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def gradcheck(fn: Callable[[], Tensor], tensors: Sequence[Tensor], step: float = 1e-5,
              max_probes: int | None = None, rng: np.random.Generator | None = None,
              floor: float = 1e-4, names: Sequence[str] | None = None) -> GradcheckResult:
    """Compare tape gradients of ``fn()`` against central differences.

    ``fn`` must rebuild the scalar loss from the current ``.data`` of
    ``tensors`` (all float64). With ``max_probes`` only that many randomly
    chosen coordinates per tensor are perturbed. Probes whose ``+step`` and
    ``-step`` evaluations take different branches of a relu/clip/min/max are
    skipped and counted, since the difference quotient is meaningless there.
    """
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradcheck requires double-precision tensors")
    rng = rng or np.random.default_rng(0)
    names = list(names) if names is not None else [t.name or f"arg{i}" for i, t in enumerate(tensors)]
    saved = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t._tracked = True
        t.data = np.ascontiguousarray(t.data)   # probes write through a flat view
    try:
        with Tape() as tape:
            loss = fn()
        grads = tape.backward(loss, wrt=tensors)
    finally:
        for t, flag in zip(tensors, saved):
            t.requires_grad = flag
            t._tracked = flag

    result = GradcheckResult()
    for t, name in zip(tensors, names):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_probes is not None and flat.size > max_probes:
            idx = rng.choice(flat.size, size=max_probes, replace=False)
        g = grads[t].reshape(-1)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            with record_kinks() as kp:
                fp = float(fn().data)
            flat[i] = orig - step
            with record_kinks() as km:
                fm = float(fn().data)
            flat[i] = orig
            if not _same_kinks(kp, km):
                result.skipped_kinks += 1
                continue
            num = (fp - fm) / (2 * step)
            worst = max(worst, float(rel_error(g[i], num, floor)))
            result.checked += 1
        result.max_rel_err[name] = worst
    return result
