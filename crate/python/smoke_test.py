"""Smoke test for the herasim_py extension module.

Build first:

    cargo build --release -p herasim-py --features extension-module

then run `python3 python/smoke_test.py`. The module is imported from the
path on PYTHONPATH if present, otherwise straight from target/release.
"""

import importlib.machinery
import importlib.util
import pathlib
import sys


def load():
    try:
        import herasim_py

        return herasim_py
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    lib = root / "target" / "release" / "libherasim_py.so"
    if not lib.exists():
        sys.exit(f"extension not built: {lib} missing")
    loader = importlib.machinery.ExtensionFileLoader("herasim_py", str(lib))
    spec = importlib.util.spec_from_file_location("herasim_py", lib, loader=loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    hs = load()

    h = hs.Hera(per_ack=True)
    assert h.on_ack(0.0, 30.0) == 40.0
    assert h.histogram[2] == 1
    assert h.on_loss(3) == 40.0
    assert h.on_timeout() == 10.0
    assert hs.Hera().update(200.0) == 2.0

    assert abs(hs.jain_index([2.0, 4.0]) - 0.9) < 1e-12
    try:
        hs.jain_index([0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("all-zero input accepted")

    ts = hs.gen_trace("stationary", 1000, seed=1, mean_mbps=12.0, cov=0.0)
    assert ts == list(range(1, 1001))
    assert hs.parse_mahimahi("5\n5\n5\n") == [5, 5, 5]
    assert "driving" in hs.preset_names()

    s = hs.simulate(["hera"], preset="constant", duration_s=10.0)
    assert abs(s["total_throughput_mbps"] - 48.0) < 0.5, s
    print(f"hera on 48 Mbps: {s['total_throughput_mbps']:.2f} Mbps, rtt {s['mean_rtt_ms']:.1f} ms")

    rows = hs.compare(["hera", "cubic"], presets=["constant"], seeds=[1, 2], duration_s=8.0)
    assert len(rows) == 2 * 2 + 2
    for r in rows:
        if r["seed"] is None:
            print(f"{r['protocol']:<6} {r['mean_throughput_mbps']:.2f} Mbps {r['mean_rtt_ms']:.1f} ms")

    print("smoke test ok")


if __name__ == "__main__":
    main()
