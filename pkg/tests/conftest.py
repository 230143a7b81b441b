import numpy as np
import pytest

from elaspoof.ela import Sample
from elaspoof.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_sample(arr, label, path=""):
    return Sample(Tensor.wrap(np.asarray(arr, dtype=np.float64)), int(label), path)


def separable_samples(n=16, size=32, seed=0):
    """Half bright-top images (fake), half bright-bottom (real), with noise."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        img = rng.uniform(0.0, 0.3, size=(size, size, 3))
        label = i % 2
        if label:
            img[: size // 2] += 0.6
        else:
            img[size // 2:] += 0.6
        out.append(make_sample(np.clip(img, 0, 1), label, f"s{i}"))
    return out


def naive_conv(x, w, b, stride):
    B, H, W, C = x.shape
    kh, kw, _, F = w.shape
    OH, OW = (H - kh) // stride + 1, (W - kw) // stride + 1
    out = np.zeros((B, OH, OW, F))
    for bi in range(B):
        for i in range(OH):
            for j in range(OW):
                for f in range(F):
                    acc = b[f]
                    for u in range(kh):
                        for v in range(kw):
                            for c in range(C):
                                acc += x[bi, i * stride + u, j * stride + v, c] * w[u, v, c, f]
                    out[bi, i, j, f] = acc
    return out


def central_diff(f, arr, h=1e-6):
    """Numerical gradient of scalar f() w.r.t. every element of arr (mutated in place, restored)."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = f()
        flat[i] = orig - h
        minus = f()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def fd_floor(loss_value, h=1e-6):
    """Smallest gradient magnitude central differences resolve to 1e-5 relative error."""
    return 1e5 * np.finfo(np.float64).eps * max(abs(loss_value), 1.0) / h


def max_rel_error(a, n, floor=0.0):
    a, n = np.asarray(a).ravel(), np.asarray(n).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    mask = denom > 0
    return float(np.max(np.abs(a - n)[mask] / denom[mask])) if mask.any() else 0.0
