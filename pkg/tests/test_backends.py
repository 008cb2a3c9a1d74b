"""The numba kernels and their numpy twins must be interchangeable: same
trees, same predictions, bit for bit."""

import os
import subprocess
import sys

import numpy as np
import pytest

from vimlab import _tree_kernels as tk
from vimlab._backend import NUMBA_AVAILABLE

pytestmark = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")


def _random_problem(seed, n=600, p=5):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.standard_normal((n, p)))
    x[:, 1] = np.round(x[:, 1] * 2) / 2  # heavy ties
    y = x[:, 0] - 2 * x[:, 1] * x[:, 2] + 0.3 * rng.standard_normal(n)
    return x, y


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fit_tree_identical(seed):
    x, y = _random_problem(seed)
    si = tk.presort(x)
    cand = np.arange(x.shape[1], dtype=np.int64)[None, :]
    args = (x, y, si, 8, 4, cand, 2 * x.shape[0] + 1)
    out_nb = tk.fit_tree_numba(*args)
    out_np = tk.fit_tree_numpy(*args)
    for a, b in zip(out_nb, out_np):
        assert (np.asarray(a) == np.asarray(b)).all()


def test_fit_tree_identical_with_mtry(seed=5):
    x, y = _random_problem(seed)
    max_nodes = 2 * x.shape[0] + 1
    rng = np.random.default_rng(42)
    cand = np.sort(np.argsort(rng.random((max_nodes, 5)), axis=1)[:, :2], axis=1).astype(np.int64)
    args = (x, y, tk.presort(x), 6, 2, cand, max_nodes)
    out_nb = tk.fit_tree_numba(*args)
    out_np = tk.fit_tree_numpy(*args)
    for a, b in zip(out_nb, out_np):
        assert (np.asarray(a) == np.asarray(b)).all()


def test_predict_identical():
    x, y = _random_problem(7)
    si = tk.presort(x)
    cand = np.arange(x.shape[1], dtype=np.int64)[None, :]
    f, t, l, r, v, nn = tk.fit_tree_numba(x, y, si, 6, 3, cand, 2 * x.shape[0] + 1)
    off = np.array([0, nn], np.int64)
    x_new = np.ascontiguousarray(np.random.default_rng(9).standard_normal((200, 5)))
    pa = tk.predict_ensemble_numba(f[:nn], t[:nn], l[:nn], r[:nn], v[:nn], off, x_new, 0.3, 1.5)
    pb = tk.predict_ensemble_numpy(f[:nn], t[:nn], l[:nn], r[:nn], v[:nn], off, x_new, 0.3, 1.5)
    assert (pa == pb).all()


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, VIMLAB_NUMBA="0")
    code = (
        "import vimlab, numpy as np\n"
        "assert vimlab.backend_name() == 'numpy'\n"
        "d = vimlab.gen_linear_pair(300, 0.6, 1.0, seed=2)\n"
        "m = vimlab.fit(vimlab.PredictorSpec('boosted_trees', n_rounds=20, max_depth=3, seed=1), d)\n"
        "print(vimlab.predict(m, d.x)[:50].tobytes().hex())\n"
    )
    out_np = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out_np.returncode == 0, out_np.stderr
    env["VIMLAB_NUMBA"] = "1"
    out_nb = subprocess.run([sys.executable, "-c", code.replace("'numpy'", "'numba'")],
                            capture_output=True, text=True, env=env)
    assert out_nb.returncode == 0, out_nb.stderr
    assert out_np.stdout.strip().splitlines()[-1] == out_nb.stdout.strip().splitlines()[-1]
