"""Central finite-difference checks for every hand-written gradient.

Relative error per entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
The floor keeps entries that are zero up to round-off from dominating; it
sits well above the ``~1e-10`` round-off of a step-``1e-6`` central difference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .net import pvgru_backward, pvgru_forward
from .rotmath import expmap_to_quat, expmap_to_quat_jacobian

FD_STEP = 1e-6
DEFAULT_FLOOR = 1e-3


def numeric_grad(f, arr, h=FD_STEP):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric, floor=DEFAULT_FLOOR):
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def ok(self):
        return self.error < self.tol

    def line(self):
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<32s} max rel err {self.error:.3e}  (tol {self.tol:.0e})"


def corrupted_jacobian(e):
    """Jacobian with the first row missing its -1/2 factor; used to prove the check bites."""
    jac = expmap_to_quat_jacobian(e)
    jac[..., 0, :] *= -2.0
    return jac


def qt_samples(count, seed):
    """Random axis-angle vectors with norms spread over ``[1e-3, pi]`` plus the fixed norms 1e-7, 1e-3, 1 and pi."""
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    norms = rng.uniform(1e-3, np.pi, size=count)
    norms[:4] = [1e-7, 1e-3, 1.0, np.pi]
    return axes * norms[:, None]


def jacobian_fd(e, h=FD_STEP):
    """``(N, 4, 3)`` finite-difference Jacobians of :func:`expmap_to_quat`."""
    e = np.asarray(e, dtype=np.float64)
    out = np.empty(e.shape[:-1] + (4, 3))
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        out[..., :, j] = (expmap_to_quat(e + step) - expmap_to_quat(e - step)) / (2 * h)
    return out


def check_qt_jacobian(count=1000, seed=0, tol=1e-6, jacobian=expmap_to_quat_jacobian):
    e = qt_samples(count, seed)
    err = rel_error(jacobian(e), jacobian_fd(e))
    return CheckResult("qt_jacobian", err, tol)


def random_cell(rng, pose_dim, pos_dim, hidden, batch=2):
    params = {
        "Ux": rng.normal(scale=0.5, size=(3 * hidden, pose_dim)),
        "Uv": rng.normal(scale=0.5, size=(3 * hidden, pose_dim)),
        "Up": rng.normal(scale=0.5, size=(3 * hidden, pos_dim)),
        "W": rng.normal(scale=0.5, size=(3 * hidden, hidden)),
        "b": rng.normal(scale=0.1, size=3 * hidden),
    }
    inputs = {
        "x": rng.normal(size=(batch, pose_dim)),
        "v": rng.normal(size=(batch, pose_dim)),
        "p": rng.normal(size=(batch, pos_dim)),
        "h_prev": rng.uniform(-0.9, 0.9, size=(batch, hidden)),
    }
    return params, inputs


def check_cell(seed=0, configs=20, tol=1e-6, floor=DEFAULT_FLOOR):
    """Every parameter and input gradient of one cell step, over ``configs`` random shapes."""
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(configs):
        pose_dim, pos_dim, hidden = (int(v) for v in rng.integers(1, [5, 5, 6], endpoint=True))
        params, inputs = random_cell(rng, pose_dim, pos_dim, hidden)
        weight = rng.normal(size=inputs["h_prev"].shape)

        def objective():
            h, _ = pvgru_forward(params, inputs["x"], inputs["v"], inputs["p"], inputs["h_prev"])
            return float(np.sum(weight * h))

        _, cache = pvgru_forward(params, inputs["x"], inputs["v"], inputs["p"], inputs["h_prev"])
        grads, dx, dv, dh_prev = pvgru_backward(params, cache, weight)
        analytic = {**grads, "x": dx, "v": dv, "h_prev": dh_prev}
        for name, arr in {**params, **inputs}.items():
            if name not in analytic:
                continue
            err = rel_error(analytic[name], numeric_grad(objective, arr), floor)
            worst[name] = max(worst.get(name, 0.0), err)
    return [CheckResult(f"cell/{k}", v, tol) for k, v in worst.items()]


def tiny_problem(variant, loss_kind, seed=0):
    """The small end-to-end configuration: D=3, H=4, n=4, m=2, dropout off."""
    cfg = mdl.ModelConfig(
        pose_dim=3, hidden=4, n=4, m=2, variant=variant, use_qt=(loss_kind == "quat_l1"), dropout=0.0
    )
    rng = np.random.default_rng(seed)
    params = mdl.init_model(cfg, seed)
    frozen = set(cfg.frozen_keys())
    for k, v in params.items():
        if k not in frozen:
            v += 0.1 * rng.normal(size=v.shape)
    X = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.pose_dim))
    Y = rng.uniform(-1.0, 1.0, size=(cfg.m, cfg.pose_dim))
    return cfg, params, X, Y


def check_end_to_end(variant="pvred", loss_kind="quat_l1", seed=0, tol=1e-4, floor=DEFAULT_FLOOR):
    cfg, params, X, Y = tiny_problem(variant, loss_kind, seed)
    _, grads = mdl.loss_and_grads(params, X, Y, cfg)

    def objective():
        return mdl.compute_loss(mdl.predict(params, X, cfg), Y, cfg)

    results = []
    for k in params:
        if k in cfg.frozen_keys():
            continue
        err = rel_error(grads[k], numeric_grad(objective, params[k]), floor)
        results.append(CheckResult(f"{variant}/{loss_kind}/{k}", err, tol))
    return results


def run_all(seed=0, tol=1e-4, unit_tol=1e-6, corrupt_jacobian=False):
    jac = corrupted_jacobian if corrupt_jacobian else expmap_to_quat_jacobian
    results = [check_qt_jacobian(seed=seed, tol=unit_tol, jacobian=jac)]
    results += check_cell(seed=seed, tol=unit_tol)
    for variant in mdl.VARIANTS:
        for loss_kind in mdl.LOSS_KINDS:
            results += check_end_to_end(variant, loss_kind, seed=seed, tol=tol)
    return results
