import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from p4ip.denoisers import (DenoiserError, ExternalDenoiserSpec, FunctionDenoiser,
                            GaussianFilterDenoiser, denoiser_by_name, external_denoiser,
                            gaussian_filter_denoiser, identity_denoiser, nlm_denoiser,
                            tikhonov_prox_denoiser)
from p4ip.imaging import psnr

BUILTINS = ["gauss", "nlm", "tikhonov", "identity"]


def step_image(n=48):
    img = np.zeros((n, n))
    img[:, n // 2:] = 1.0
    return img


@pytest.mark.parametrize("name", ["gauss", "nlm"])
@pytest.mark.parametrize("sigma", [0.0, 0.5, 5.0])
def test_constant_preserved(name, sigma):
    out = denoiser_by_name(name)(np.full((24, 24), 2.5), sigma)
    np.testing.assert_allclose(out, 2.5, rtol=1e-12)


@pytest.mark.parametrize("name", BUILTINS)
def test_sigma_zero_is_identity(rng, name):
    img = rng.random((20, 20))
    np.testing.assert_array_equal(denoiser_by_name(name)(img, 0.0), img)


@pytest.mark.parametrize("name", BUILTINS)
def test_deterministic_and_shape(rng, name):
    img = rng.random((30, 17))
    d = denoiser_by_name(name)
    a, b = d(img, 0.7), d(img, 0.7)
    assert a.shape == img.shape
    np.testing.assert_array_equal(a, b)


def test_tikhonov_is_prox(rng):
    z = rng.standard_normal((10, 10))
    sigma = 0.8
    x = tikhonov_prox_denoiser()(z, sigma)
    # stationarity of x^2/2 + |x - z|^2 / (2 sigma^2)
    np.testing.assert_allclose(x + (x - z) / sigma**2, 0, atol=1e-12)


def test_nlm_denoises_step(rng):
    clean = step_image()
    noisy = clean + 0.1 * rng.standard_normal(clean.shape)
    out = nlm_denoiser()(noisy, 0.1)
    assert psnr(clean, out, 1.0) >= psnr(clean, noisy, 1.0) + 3.0


def test_nlm_small_image_falls_back(rng):
    img = rng.random((6, 6))
    out = nlm_denoiser()(img, 0.3)
    assert out.shape == img.shape and np.all(np.isfinite(out))


def test_gaussian_near_identity_at_small_sigma(rng):
    img = rng.random((20, 20))
    assert np.max(np.abs(gaussian_filter_denoiser()(img, 0.01) - img)) < 1e-3


def test_gaussian_width_schedule():
    d = GaussianFilterDenoiser()
    assert d.spatial_sigma(1.0) == 0.5
    assert d.spatial_sigma(100.0) == 3.0


def test_negative_inputs_allowed(rng):
    img = rng.standard_normal((16, 16))
    for name in BUILTINS:
        assert np.all(np.isfinite(denoiser_by_name(name)(img, 1.0)))


def test_contract_violations(rng):
    with pytest.raises(DenoiserError):
        identity_denoiser()(np.ones(5), 1.0)
    with pytest.raises(DenoiserError):
        identity_denoiser()(np.ones((3, 3)), -1.0)
    with pytest.raises(DenoiserError):
        FunctionDenoiser(lambda img, s: img[:-1])(np.ones((3, 3)), 1.0)
    with pytest.raises(DenoiserError):
        FunctionDenoiser(lambda img, s: img * np.nan)(np.ones((3, 3)), 1.0)


def test_unknown_name():
    with pytest.raises(ValueError):
        denoiser_by_name("bm3d")


# --------------------------------------------------------------------------
# subprocess bridge

def write_script(path, body):
    path.write_text(f"#!{sys.executable}\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return path


BRIDGE = """
    import sys
    sys.path.insert(0, {src!r})
    from p4ip.imaging import load_raster, save_raster
    from p4ip.denoisers import gaussian_filter_denoiser
    src, sigma, dst = sys.argv[1], float(sys.argv[2]), sys.argv[3]
    img = load_raster(src)
    save_raster({expr}, dst)
"""

SRC = os.path.join(os.path.dirname(__file__), os.pardir, "src")


def test_external_copy_through(tmp_path, rng):
    exe = write_script(tmp_path / "passthrough.py", BRIDGE.format(src=SRC, expr="img"))
    d = external_denoiser(ExternalDenoiserSpec(str(exe)))
    img = rng.random((9, 7))
    np.testing.assert_array_equal(d(img, 0.3), img)


def test_external_matches_builtin(tmp_path, rng):
    exe = write_script(tmp_path / "gauss.py",
                       BRIDGE.format(src=SRC, expr="gaussian_filter_denoiser()(img, sigma)"))
    spec_file = tmp_path / "gauss.ini"
    spec_file.write_text("[denoiser]\nexecutable = gauss.py\nname = gauss-ext\n")
    d = denoiser_by_name(f"ext:{spec_file}")
    assert d.name == "gauss-ext"
    img = rng.random((16, 16))
    np.testing.assert_array_equal(d(img, 1.3), gaussian_filter_denoiser()(img, 1.3))


def test_external_failure_exit(tmp_path):
    exe = write_script(tmp_path / "fail.py", "import sys\nsys.stderr.write('boom')\nsys.exit(4)\n")
    with pytest.raises(DenoiserError, match="exit code 4"):
        external_denoiser(ExternalDenoiserSpec(str(exe)))(np.ones((3, 3)), 1.0)


def test_external_wrong_dimensions(tmp_path):
    exe = write_script(tmp_path / "crop.py", BRIDGE.format(src=SRC, expr="img[:-1]"))
    with pytest.raises(DenoiserError, match="shape"):
        external_denoiser(ExternalDenoiserSpec(str(exe)))(np.ones((4, 4)), 1.0)


def test_external_timeout(tmp_path):
    exe = write_script(tmp_path / "slow.py", "import time\ntime.sleep(5)\n")
    with pytest.raises(DenoiserError, match="timed out"):
        external_denoiser(ExternalDenoiserSpec(str(exe), timeout=0.3))(np.ones((3, 3)), 1.0)


def test_external_missing_executable(tmp_path):
    with pytest.raises(DenoiserError):
        external_denoiser(ExternalDenoiserSpec(str(tmp_path / "nope")))(np.ones((3, 3)), 1.0)


def test_spec_template_validation():
    with pytest.raises(ValueError):
        ExternalDenoiserSpec("x", template="{input} {output}")


def test_command_substitution():
    d = external_denoiser(ExternalDenoiserSpec("den", template="-i {input} --sigma={sigma} -o {output}"))
    assert d.command("a.rast", 0.5, "b.rast") == ["den", "-i", "a.rast", "--sigma=0.5", "-o", "b.rast"]
