"""Smoke test for the volprim Python extension.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import json
import math
import struct
import sys
import tempfile
from pathlib import Path

import volprim

CONFIG = {"n_prim": 4, "m": 4, "n_train": 2, "n_heldout": 1, "width": 24, "height": 24, "focal": 34.0}


def read_mvpf(path):
    raw = Path(path).read_bytes()
    magic, version, w, h, c = struct.unpack("<4sIIII", raw[:20])
    assert magic == b"MVPF" and version == 1
    return w, h, c, list(struct.unpack(f"<{w * h * c}f", raw[20:]))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        volprim.make_synthetic(str(tmp), json.dumps(CONFIG), seed=3)

        header = (tmp / "truth.frame0.mvps").read_bytes()[:16]
        magic, version, n_prim, m = struct.unpack("<4sIII", header)
        truth = volprim.load_scene(str(tmp / "truth.json"))
        assert magic == b"MVPS" and version == 1
        assert (truth.n_prim, truth.m) == (n_prim, m) == (4, 4)
        assert len(truth.payload()) == 4 * n_prim * m**3

        out = truth.render(0)
        w, h, ch, alpha = out["alpha"]
        assert (w, h, ch) == (24, 24, 1)
        assert all(0.0 <= a <= 1.0 for a in alpha)
        assert max(alpha) > 0.5, "object not visible"

        # rendering the truth over the stored background reproduces the target
        bg = read_mvpf(tmp / "background_00.mvpf")
        target = read_mvpf(tmp / "target_00.mvpf")
        img = truth.composite(0, bg)
        assert img[:3] == target[:3]
        assert max(abs(a - b) for a, b in zip(img[3], target[3])) == 0.0

        scene, log = volprim.fit(str(tmp), str(tmp / "init.json"), iterations=20, seed=1)
        assert len(log) == 20 and scene.n_prim == 4
        assert math.isfinite(log[-1]["heldout_psnr"])
        scene.save(str(tmp / "fitted.json"))
        assert volprim.load_scene(str(tmp / "fitted.json")).payload() == scene.payload()

        groups, passed = volprim.gradcheck(m=4, rays=32, params=24, seed=2)
        assert passed, groups

        try:
            volprim.load_scene(str(tmp / "missing.json"))
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing file accepted")

    print(f"ok: fit L_pho {log[0]['pho']:.3e} -> {log[-1]['pho']:.3e}, held-out PSNR {log[-1]['heldout_psnr']:.2f} dB")
    return 0


if __name__ == "__main__":
    sys.exit(main())
