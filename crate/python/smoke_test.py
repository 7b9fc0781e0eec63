"""Smoke test for the pysoliton extension.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import math

import pysoliton


def main():
    e = pysoliton.Expr("x1^2 + x2^2", 2)
    assert str(e.diff(0)) == "2*x1"
    assert e.evaluate([3.0, 4.0]) == 25.0

    names = pysoliton.catalog_names()
    assert len(names) >= 5, names

    for name in names:
        s = pysoliton.Soliton.from_catalog(name)
        report = s.verify()
        assert all(r["pass"] for r in report["identities"]), name
        assert len(s.sample_points()) >= 100

    sphere = pysoliton.Soliton.from_catalog("sphere-trivial-n2")
    assert sphere.classify()["verdict"] == "Trivial"
    cyl = pysoliton.Soliton.from_catalog("cylinder-n3")
    assert cyl.classify()["verdict"] == "NonTrivial"

    text = pysoliton.catalog_spec("gaussian-shrinker-2d")
    g = pysoliton.Soliton.from_spec(text)
    c, spread, shift = g.hamilton_constant()
    assert abs(c) < 1e-12 and shift == 0.0
    r = g.residual([0.5, -0.3])
    assert max(abs(v) for row in r for v in row) < 1e-12

    est = pysoliton.first_eigenvalue("torus", 2 * math.pi, resolution=32)
    assert abs(est["eigenvalue"] - 1.0) < 0.02, est["eigenvalue"]

    try:
        pysoliton.Expr("x3", 2)
    except ValueError as err:
        assert "column 1" in str(err), err
    else:
        raise AssertionError("x3 in dimension 2 should not parse")

    print("pysoliton smoke test passed")


if __name__ == "__main__":
    main()
