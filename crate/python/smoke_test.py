"""Smoke test for the Python bindings.

Build the extension first:
    cargo build --release -p fbms-py
then run:
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    libname = "libfbms_py.so" if sys.platform != "darwin" else "libfbms_py.dylib"
    built = os.path.join(ROOT, "target", "release", libname)
    if not os.path.exists(built):
        raise SystemExit(f"{built} not found; run: cargo build --release -p fbms-py")
    tmp = tempfile.mkdtemp(prefix="fbms_py_")
    dest = os.path.join(tmp, "fbms_py.so")
    shutil.copyfile(built, dest)
    sys.path.insert(0, tmp)
    import fbms_py

    return fbms_py


def main():
    fbms = load_module()

    c = fbms.critical_constants()
    assert abs(c["R_crit"] - 0.834) < 5e-4, c
    assert abs(c["z_crit"] - 0.552) < 5e-4, c
    assert abs(c["r_crit"] - 0.460) < 5e-4, c
    assert abs(c["area_K"] + math.pi - 8.37898) < 1e-3, c
    print("constants ok:", {k: round(v, 6) for k, v in c.items()})

    fam = fbms.catenoid_family(0.0)
    assert abs(fam["r_theta"] - c["r_crit"]) < 1e-9
    print("family at theta=0 ok: r_theta =", fam["r_theta"])

    verts, tris, info = fbms.build_initial_surface(6, 0.0, 5.0)
    assert info["euler_characteristic"] == 1 - 2 * 6
    assert info["boundary_loops"] == 3
    assert info["symmetry_deviation"] < 1e-9
    print(f"initial surface ok: {len(verts)} vertices, {len(tris)} triangles, "
          f"chi = {info['euler_characteristic']}, area = {info['area']:.4f}")

    h = fbms.mean_curvature(6, 0.0, 5.0)
    print("mean curvature field ok: max |H| =", round(max(abs(x) for x in h), 3))

    rep = fbms.kernel_report(6, 5.0)
    assert rep["correlation"] > 0.99
    assert rep["sigma2"] / rep["sigma1"] > 10.0
    print("kernel report ok: gap ratio =", round(rep["sigma2"] / rep["sigma1"], 1),
          "pairing =", round(rep["pairing"], 4))

    print("smoke test passed")


if __name__ == "__main__":
    main()
