"""The numba and numpy kernel paths must agree, and the env flag must pick between them."""
import os
import subprocess
import sys

import numpy as np
import pytest

from pvred import _kernels as K
from pvred._backend import HAS_NUMBA

pytestmark = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def rot_inputs(seed, count=300):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(count, 3)) * rng.uniform(0, 3, size=(count, 1))
    e[:3] = [[0, 0, 0], [1e-8, 0, 0], [np.pi, 0, 0]]
    return e


def gru_inputs(seed, B=3, D=4, P=5, H=6):
    rng = np.random.default_rng(seed)
    x, v, p = rng.normal(size=(B, D)), rng.normal(size=(B, D)), rng.normal(size=(B, P))
    h = rng.uniform(-0.9, 0.9, size=(B, H))
    ux, uv, up = rng.normal(size=(3 * H, D)), rng.normal(size=(3 * H, D)), rng.normal(size=(3 * H, P))
    w, b = rng.normal(size=(3 * H, H)), rng.normal(size=3 * H)
    return x, v, p, h, ux, uv, up, w, b


class TestParity:
    @pytest.mark.parametrize("name", ["qt_forward", "qt_jacobian", "rodrigues"])
    @pytest.mark.parametrize("seed", [0, 1])
    def test_rotation_kernels(self, name, seed):
        e = rot_inputs(seed)
        np.testing.assert_allclose(getattr(K, name + "_nb")(e), getattr(K, name + "_np")(e), rtol=0, atol=1e-14)

    def test_qt_backward(self):
        e = rot_inputs(2)
        g = np.random.default_rng(2).normal(size=(e.shape[0], 4))
        np.testing.assert_allclose(K.qt_backward_nb(e, g), K.qt_backward_np(e, g), rtol=0, atol=1e-14)

    def test_rotmat_to_euler(self):
        R = K.rodrigues_np(rot_inputs(3))
        np.testing.assert_allclose(K.rotmat_to_euler_nb(R), K.rotmat_to_euler_np(R), rtol=0, atol=1e-13)

    def test_gru(self):
        args = gru_inputs(4)
        fwd_nb, fwd_np = K.gru_forward_nb(*args), K.gru_forward_np(*args)
        for a, b in zip(fwd_nb, fwd_np):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
        x, v, p, h, ux, uv, up, w, _ = args
        _, z, r, hc = fwd_np
        dh = np.random.default_rng(5).normal(size=h.shape)
        for a, b in zip(K.gru_backward_nb(x, v, p, h, z, r, hc, dh, ux, uv, up, w),
                        K.gru_backward_np(x, v, p, h, z, r, hc, dh, ux, uv, up, w)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def _backend_in_subprocess(flag):
    env = dict(os.environ)
    if flag is None:
        env.pop("PVRED_DISABLE_JIT", None)
    else:
        env["PVRED_DISABLE_JIT"] = flag
    out = subprocess.run(
        [sys.executable, "-c", "import pvred; print(pvred.backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    return out.stdout.strip()


class TestBackendSwitch:
    @pytest.mark.parametrize("flag", ["1", "true", "ON"])
    def test_flag_selects_numpy(self, flag):
        assert _backend_in_subprocess(flag) == "numpy"

    @pytest.mark.parametrize("flag", [None, "0", ""])
    def test_default_is_numba(self, flag):
        assert _backend_in_subprocess(flag) == "numba"

    def test_numpy_path_end_to_end(self):
        code = (
            "import numpy as np\n"
            "from pvred import model as M, backend_name\n"
            "cfg = M.ModelConfig(pose_dim=3, hidden=4, n=4, m=3, dropout=0.0)\n"
            "p = M.init_model(cfg, 0)\n"
            "p['W_out'] += 0.1\n"
            "X = np.linspace(0, 1, 12).reshape(4, 3)\n"
            "print(backend_name(), repr(float(M.predict(p, X, cfg).sum())))\n"
        )
        results = {}
        for flag in ("1", "0"):
            env = dict(os.environ, PVRED_DISABLE_JIT=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
            name, value = out.stdout.split()
            results[name] = float(value)
        assert set(results) == {"numpy", "numba"}
        assert results["numpy"] == pytest.approx(results["numba"], abs=1e-12)
