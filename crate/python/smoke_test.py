"""Smoke test for the promac Python bindings.

Uses an installed `promac_py` (e.g. `pip install ./crates/python`) if there
is one; otherwise build with `cargo build -p promac-py --release` and the
script loads target/release/libpromac_py.so (or the path in PROMAC_PY_LIB).
"""

import importlib.util
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    if not os.environ.get("PROMAC_PY_LIB"):
        try:
            import promac_py

            return promac_py
        except ImportError:
            pass
    candidates = [os.environ.get("PROMAC_PY_LIB")] + [
        str(ROOT / "target" / profile / name)
        for profile in ("release", "debug")
        for name in ("libpromac_py.so", "libpromac_py.dylib", "promac_py.dll")
    ]
    lib = next((c for c in candidates if c and Path(c).is_file()), None)
    if lib is None:
        sys.exit("promac_py library not found; run `cargo build -p promac-py --release`")
    tmp = Path(tempfile.mkdtemp())
    suffix = ".pyd" if lib.endswith(".dll") else ".so"
    target = tmp / f"promac_py{suffix}"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("promac_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check(name, cond, detail=""):
    print(f"{'ok  ' if cond else 'FAIL'} {name}{': ' + detail if detail else ''}")
    return cond


def main():
    pm = load_module()
    results = []

    p = pm.contrastive_distribution([[1.0, 1.0]], [[2.0, 0.0]], 1.0)[0]
    results.append(check("contrastive distribution", abs(p[0] - 0.1192) < 1e-4 and abs(p[1] - 0.8808) < 1e-4, f"{p}"))

    ones = [[1.0] * 4 for _ in range(4)]
    zeros = [[0.0] * 4 for _ in range(4)]
    fused, weights = pm.fuse([ones, zeros], [0.75, 0.25])
    results.append(check("fusion", fused == ones and weights == [1.0, 0.0], f"weights {weights}"))

    index, chosen = pm.select_final([ones, zeros, ones])
    results.append(check("final selection", index == 1 and chosen == ones, f"index {index}"))

    image = [[[0.5, 0.4, 0.3]] * 4 for _ in range(4)]
    same = pm.reweight_image(image, ones, 0.3)
    results.append(check("reweighting fixed point", same == image))

    settings = pm.Settings("cod")
    settings.set("iterations", "3")
    results.append(check("settings", settings.iterations == 3 and settings.task_prompt == "camouflaged animal", repr(settings)))
    try:
        settings.set("alpha", "-1")
        results.append(check("settings validation", False, "negative alpha accepted"))
    except ValueError as e:
        results.append(check("settings validation", True, str(e)))

    img, gt = pm.synth_sample(0, 48, 3)
    result = pm.run_cycle(img, settings)
    trace = json.loads(result.trace_json)
    results.append(
        check(
            "cycle on mock backend",
            len(result.names) == 3 and 1 <= result.selected_index <= 3 and len(trace["iterations"]) == 3,
            f"names {result.names}, selected {result.selected_index}",
        )
    )
    m = pm.evaluate(result.final_mask, gt)
    results.append(check("metrics", m["s_alpha"] > 0.9 and m["mae"] < 0.05, json.dumps(m)))

    perfect = pm.evaluate([[float(v) for v in row] for row in gt], gt)
    results.append(
        check(
            "perfect prediction",
            perfect["mae"] == 0 and perfect["f_beta"] == 1 and perfect["e_phi"] == 1 and math.isclose(perfect["s_alpha"], 1, abs_tol=1e-6),
        )
    )

    if not all(results):
        sys.exit(1)
    print("all python checks passed")


if __name__ == "__main__":
    main()
