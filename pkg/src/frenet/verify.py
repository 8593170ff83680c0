"""Self-contained invariant suites behind the `verify` CLI subcommand.

Each check prints one PASS/FAIL line with the measured value; a suite passes
only if every check does. These mirror the key identities the test suite pins
down, packaged so a built installation can be probed without pytest.
"""

from __future__ import annotations

import numpy as np

from .afpm import Afpm, make_patch_grid
from .arch import build_frenet, tiny_config
from .gradcheck import grad_check
from .rawdata import apply_blur, embed_kernel, gen_kernel, gen_sharp
from .spectral import complex_mul, fft2d, fft_shift, ifft2d
from .tensor import Tensor
from .train import loss_total


class _SuiteRun:
    def __init__(self, emit):
        self.emit = emit
        self.ok = True

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.ok &= bool(passed)
        self.emit(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")


def spectral_suite(emit=print) -> bool:
    run = _SuiteRun(emit)
    rng = np.random.default_rng(2024)

    x = Tensor(rng.standard_normal((3, 32, 32)).astype(np.float32))
    rt = ifft2d(fft2d(x))
    err = float(np.abs(rt.data - x.data).max())
    run.check("fft round trip", err < 1e-5, f"max abs err {err:.2e}")

    y = Tensor(rng.standard_normal((8, 64, 64)).astype(np.float32))
    spec = fft2d(y)
    energy_spatial = float(np.sum(np.square(y.data, dtype=np.float64)))
    energy_freq = float(np.sum(spec.re.data.astype(np.float64) ** 2 + spec.im.data.astype(np.float64) ** 2))
    rel = abs(energy_spatial - energy_freq) / energy_spatial
    run.check("parseval", rel < 1e-4, f"rel err {rel:.2e}")

    img = gen_sharp(7, 32, 32)
    kernel = gen_kernel(11, "gaussian", 5)
    direct = apply_blur(img, kernel)
    spec_route = ifft2d(complex_mul(fft2d(img), fft2d(embed_kernel(kernel, 32, 32))))
    spec_route = Tensor(spec_route.data * np.sqrt(32.0 * 32.0))
    rel = float(np.abs(spec_route.data - direct.data).max() / np.abs(direct.data).max())
    run.check("convolution theorem", rel < 1e-3, f"rel err {rel:.2e}")

    z = fft2d(Tensor(rng.standard_normal((2, 16, 16)).astype(np.float32)))
    twice = fft_shift(fft_shift(z))
    exact = np.array_equal(twice.re.data, z.re.data) and np.array_equal(twice.im.data, z.im.data)
    run.check("fft_shift involution", exact, "bit-exact on even dims")

    a = Tensor(rng.standard_normal((2, 16, 16)).astype(np.float32))
    b = Tensor(rng.standard_normal((2, 16, 16)).astype(np.float32))
    lhs = fft2d(Tensor(2.0 * a.data - 3.0 * b.data))
    rhs_re = 2.0 * fft2d(a).re.data - 3.0 * fft2d(b).re.data
    err = float(np.abs(lhs.re.data - rhs_re).max())
    run.check("linearity", err < 1e-5, f"max abs err {err:.2e}")
    return run.ok


def afpm_suite(emit=print) -> bool:
    run = _SuiteRun(emit)
    rng = np.random.default_rng(77)
    grid = make_patch_grid(16, 16, 8)
    module = Afpm("afpm", rng, channels=6, grid=grid)
    x = Tensor(rng.standard_normal((6, 16, 16)).astype(np.float32))

    module.proj_weight.data = np.zeros_like(module.proj_weight.data)
    saved_bias = module.proj_bias.data.copy()
    module.proj_bias.data = np.ones_like(module.proj_bias.data)
    ident = module(x)
    exact = np.array_equal(ident.data, x.data)
    run.check("unit modulation identity", exact, "proj weight 0 / bias 1 reproduces input")
    module.proj_weight.data = rng.standard_normal(module.proj_weight.shape).astype(np.float32) * 0.2
    module.proj_bias.data = saved_bias

    # Mirrored grid positions share a distance, so swapping those patch
    # contents must swap the outputs verbatim.
    i, j = 1, 2
    mi, mj = grid.rows - 1 - i, grid.cols - 1 - j
    ph, pw = grid.patch_h, grid.patch_w
    swapped = x.data.copy()
    swapped[:, i * ph : (i + 1) * ph, j * pw : (j + 1) * pw] = x.data[
        :, mi * ph : (mi + 1) * ph, mj * pw : (mj + 1) * pw
    ]
    swapped[:, mi * ph : (mi + 1) * ph, mj * pw : (mj + 1) * pw] = x.data[
        :, i * ph : (i + 1) * ph, j * pw : (j + 1) * pw
    ]
    out = module(x).data
    out_swapped = module(Tensor(swapped)).data
    expected = out.copy()
    expected[:, i * ph : (i + 1) * ph, j * pw : (j + 1) * pw] = out[
        :, mi * ph : (mi + 1) * ph, mj * pw : (mj + 1) * pw
    ]
    expected[:, mi * ph : (mi + 1) * ph, mj * pw : (mj + 1) * pw] = out[
        :, i * ph : (i + 1) * ph, j * pw : (j + 1) * pw
    ]
    run.check(
        "content independence",
        np.array_equal(out_swapped, expected),
        "swapping equal-distance patches swaps outputs",
    )

    dists = grid.distances
    sym = np.array_equal(dists, dists[::-1, ::-1])
    kernels = module.kernel_kbg(dists.reshape(-1)).data
    kernels_mirror = module.kernel_kbg(dists[::-1, ::-1].reshape(-1)).data
    run.check(
        "central symmetry",
        sym and np.array_equal(kernels, kernels_mirror),
        "mirrored patches get bit-identical kernels",
    )

    single = make_patch_grid(2, 2, 1)
    small = Afpm("small", rng, channels=2, grid=single)
    xs = Tensor(rng.standard_normal((2, 2, 2)).astype(np.float32))
    got = small(xs).data
    w = small.kernel_kbg(single.distances.reshape(-1)).data.reshape(2, 2)
    b = float(small.bias_kbg(single.distances.reshape(-1)).data.reshape(()))
    s = (xs.data * w).sum(axis=(1, 2)) + b
    factor = small.proj_weight.data.reshape(2, 2) @ s + small.proj_bias.data
    want = factor[:, None, None] * xs.data
    err = float(np.abs(got - want).max())
    run.check("modulation transcription", err < 1e-4, f"max abs err {err:.2e}")
    return run.ok


def grad_suite(emit=print, probe_count: int = 150) -> bool:
    run = _SuiteRun(emit)
    net = build_frenet(tiny_config(base_size=16), seed=5)
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(0.0, 1.0, (4, 16, 16)).astype(np.float32))
    target = Tensor(rng.uniform(0.0, 1.0, (4, 16, 16)).astype(np.float32))
    params = list(net.parameters().values())
    report = grad_check(
        lambda: loss_total(net.forward(x), target, 0.01),
        params,
        probe_count=probe_count,
        h=1e-3,
        tol=1e-3,
        seed=9,
    )
    run.check("reverse-mode vs finite differences", report.pass_fraction >= 0.99, report.summary())
    return run.ok


SUITES = {
    "spectral": spectral_suite,
    "afpm": afpm_suite,
    "grad": grad_suite,
}


def run_suites(selection: str = "all", emit=print) -> bool:
    names = list(SUITES) if selection == "all" else [selection]
    ok = True
    for name in names:
        emit(f"== suite {name}")
        ok &= SUITES[name](emit)
    return ok
