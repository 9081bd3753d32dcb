"""Smoke test for the pycmte extension module.

Build and run:
    cargo build --release -p cmte-py --features extension-module
    cp target/release/libpycmte.so python/pycmte.so
    python3 python/smoke_test.py
or install with `pip install maturin && maturin develop -m crates/python/Cargo.toml`.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import pycmte  # noqa: E402


def main():
    net = pycmte.Network.standin()
    assert net.n_links == 13 and net.total_demand == 4000.0, net
    routes = net.routes()
    assert len(routes) == 6 and routes[0] == [2, 6, 9, 12], routes

    k = math.sqrt(2.0 / math.pi)
    assert abs(pycmte.mbtt(0.0, 1.0, 0.5) + k) < 1e-12
    assert abs(pycmte.mett(0.0, 1.0, 0.5) - k) < 1e-12
    assert abs(pycmte.cmtt(20.0, 3.0, 0.9, 0.9) - 20.0) < 1e-12

    mean, var = pycmte.link_moments(10.0, 1000.0, 1.0, 1000.0)
    assert abs(mean - 11.5) < 1e-12 and var == 0.0

    res = pycmte.solve(net, alpha=0.9, lam=0.5)
    assert res["converged"] and res["residual"] <= 1e-4, res
    assert abs(sum(res["flows"]) - 4000.0) < 4e-3
    print(f"solve: {res['iterations']} iterations, ANTT {res['antt']:.4f} min")

    rows = pycmte.sweep(net, preset="scenario1")
    assert len(rows) == 1 and rows[0]["status"] == "converged"

    try:
        pycmte.Network.parse("[links]\n1 1 2 10 abc 0.5\n")
    except ValueError as err:
        assert "line 2" in str(err)
    else:
        raise AssertionError("bad network parsed")

    print("pycmte smoke test passed")


if __name__ == "__main__":
    main()
