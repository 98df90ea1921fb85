"""Smoke test for the `rta` extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import math
import sys

import rta

CONFIG = """
seed = 11
workers = 1

[model]
beta = 2.0
gamma0 = 1.0
r0 = 1.0
omega0p = 1.0
bath_temperature = 1.0

[model.interface.profile]
kind = "constant"
p_plus = 0.5
p_minus = 0.3
g = 0.2

[initial]
kind = "{initial}"

[solver.pde]
h = 0.03125
half_width = 2.0
dt = 0.01
t_end = 0.1

[io]
out = "out"
"""


def config(initial="equilibrium"):
    return CONFIG.format(initial=initial)


def main():
    report = rta.model_report(config())
    assert abs(report["alpha_stable"] - 1.5) < 1e-12, report
    assert "tau_bar" in report and "c_hat" in report

    # the equilibrium is reproduced exactly by every route
    mean, stderr, n = rta.estimate_kinetic(config(), 0.5, 0.3, 0.25, samples=200, n=100.0)
    assert (mean, stderr, n) == (1.0, 0.0, 200), (mean, stderr, n)
    mean, stderr, n = rta.estimate_limit(config(), 0.5, -0.3, samples=200, a=0.05)
    assert (mean, stderr, n) == (1.0, 0.0, 200), (mean, stderr, n)
    pde = rta.solve_pde(config())
    assert len(pde["values"]) == len(pde["times"])
    assert all(len(v) == len(pde["nodes"]) for v in pde["values"])
    assert max(abs(x - 1.0) for v in pde["values"] for x in v) < 1e-10

    # determinism through the bindings
    bump = config().replace('kind = "equilibrium"', 'kind = "bump"\ncenter = 0.5\nwidth = 0.4\namplitude = 0.5\nk_modulation = 0.5')
    a = rta.estimate_kinetic(bump, 0.5, 0.3, 0.25, samples=500, n=100.0)
    b = rta.estimate_kinetic(bump, 0.5, 0.3, 0.25, samples=500, n=100.0)
    assert a == b and math.isfinite(a[0]) and a[1] > 0.0, (a, b)

    assert "symbol_check" in rta.experiments()
    summary = rta.run_experiment(config(), "symbol_check", smoke=True)
    assert summary["passed"], summary

    # errors carry a machine-readable code and the CLI exit code
    try:
        rta.model_report(config().replace("r0 = 1.0", "r0 = 1.0\nbogus = 1"))
    except rta.RtaError as e:
        code, message, exit_code = e.args
        assert code == "ConfigError" and exit_code == 2 and ":9:" in message, e.args
    else:
        raise AssertionError("unknown key accepted")
    try:
        rta.estimate_kinetic(config(), 0.5, 0.0, 0.25, samples=10)
    except rta.RtaError as e:
        assert e.args[2] == 2, e.args
    else:
        raise AssertionError("start on the interface accepted")

    print("python smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
