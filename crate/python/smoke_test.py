"""Smoke test for the fermi_rg_py extension.

Build first:
    PYO3_BUILD_EXTENSION_MODULE=1 cargo build --release -p fermi_rg_py
then run:
    python3 python/smoke_test.py
"""

import importlib.util
import math
import os
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    candidates = [os.environ.get("FERMI_RG_PY_LIB")] + [
        str(ROOT / "target" / profile / "libfermi_rg_py.so") for profile in ("release", "debug")
    ]
    for path in candidates:
        if path and os.path.exists(path):
            tmp = pathlib.Path(tempfile.mkdtemp()) / "fermi_rg_py.so"
            shutil.copy(path, tmp)
            spec = importlib.util.spec_from_file_location("fermi_rg_py", tmp)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("libfermi_rg_py.so not found; build the extension first")


def main():
    fr = load_module()

    exponent, constant = fr.hoelder_certificate(1.0, 1.0, 1.0, 1.0, 2.0)
    assert exponent == 0.5 and abs(constant - 8.0) < 1e-14, (exponent, constant)

    params = fr.ScaleParams()
    scales = fr.Scales(params)
    assert scales.partition_residual(0.013, 1.40, 0.05) <= 1e-12

    measured, predicted = fr.jump_at(0.2, "constant", 0.7)
    assert abs(predicted - 1.25) < 1e-15 and abs(measured - predicted) < 1e-3

    f = fr.Kernel.random(2, True, 1.0, 11).project_number_conserving().antisymmetrize()
    rebuilt = f.reduce_pp().value_pp() + f.reduce_ph().value_ph()
    assert f.max_abs_diff(rebuilt) <= 1e-13
    assert f.flip().flip().max_abs_diff(f) == 0.0

    sigma = fr.proper_sigma(0.3, -0.1, 0.01j, 1e-4 + 0j)
    assert isinstance(sigma, complex) and math.isfinite(sigma.real)

    ratio, passed = fr.saturating_budget(params, 5)
    assert passed and 0.5 < ratio <= 1.0, ratio
    ratio, passed = fr.saturating_budget(params, 5, 3.0)
    assert not passed

    code, out, diags = fr.run_scenario("ladder-demo")
    assert code == 0, diags
    assert out.splitlines()[0].startswith("j,ladder_sup")

    try:
        fr.ScaleParams(m=0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid M accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
