"""Smoke test for the fmqed_py extension.

Build and install first:
    pip install maturin
    pip install --no-build-isolation ./crates/fmqed-py
"""
import math

import fmqed_py as fm

ONE_MODE = """
modes = [[0, 0, 1]]
occupation_cap = 2
n_particles = 1
masses = [1.0]
charges = [0.0]
"""


def main():
    cfg = fm.Config(ONE_MODE)
    assert cfg.n_particles == 1

    rows = fm.modes(cfg)
    half = [r for r in rows if r["half"]]
    assert len(rows) == 2 and (half[0]["s1"], half[0]["s2"], half[0]["s3"]) == (0, 0, 1), rows

    # one mode, 4 real oscillators, cap 2
    spectrum = fm.fock_spectrum(cfg)
    assert [m for _, m in spectrum] == [1, 4, 10, 16, 19, 16, 10, 4, 1]

    lhs, rhs = fm.constraint_identity([[0.1, 0.2, 0.3], [1.0, -0.5, 2.0]], [1.0, -2.0], [1, 0, 0], [6.0, 6.0, 6.0])
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))

    r = fm.riemann(15.0)
    assert 0.7 < r["value"] / (2 * math.pi**2) < 1.0

    action = fm.ActionModel(cfg)
    zero = [0.0] * action.n_field_vars
    a = action.segment(1.0, 0.0, [[1.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]], zero, zero)
    assert abs(a - 2.5) < 1e-12, a
    b = action.broken([0.0, 0.5, 1.0], [[[0.0, 0.0, 0.0]], [[0.5, 0.0, 0.0]], [[1.0, 0.0, 0.0]]], [zero] * 3)
    assert abs(b - 2.5) < 1e-12, b

    field_cfg = fm.Config("modes = [[0, 0, 1]]\noccupation_cap = 3\n")
    prop = fm.Propagator(field_cfg, "analytic")
    out = prop.step(0.01)
    assert len(out) == prop.dim
    rows = prop.convergence(math.pi / 2, [4, 8, 16])
    errors = [row["error"] for row in rows]
    assert errors[0] > errors[1] > errors[2], errors
    table = prop.residual([2.0**-p for p in range(3, 7)])
    assert table["slope"] > 0.5, table

    try:
        fm.Config("cutoffs = [1, 3, 2]\n")
    except ValueError:
        pass
    else:
        raise AssertionError("M2 > M3 accepted")

    print("smoke test ok:", prop.name, "dim", prop.dim, "errors", ["%.2e" % e for e in errors])


if __name__ == "__main__":
    main()
