"""Smoke test for the compiled `feller` module.

Build and install with `pip install --no-build-isolation crates/python`
(needs maturin), then run `python crates/python/python/smoke_test.py`.
"""

import json
import math

import feller


def main() -> None:
    x = 0.75
    assert abs(feller.exp_integral_ei(-x) + feller.exp_integral_e1(x)) < 1e-12 * feller.exp_integral_e1(x)
    assert abs(feller.kummer_m(1.0, 1.0, 1.0) - math.e) < 1e-12

    params = feller.Params(1.0, 1.0)
    # exponential steady state: zero flux everywhere
    p = feller.steady_state_p(params, 0.0, 1.0, 2.0)
    assert abs(p - math.exp(-2.0)) < 1e-12
    assert abs(feller.physical_flux(params, 2.0, p, -p)) < 1e-15

    cfg = json.loads(feller.preset_config("expand"))
    cfg["sampling"]["N"] = 40
    run = feller.run(json.dumps(cfg))
    first, last = run.snapshots[0], run.snapshots[-1]
    assert last.x[-1] > first.x[-1], "expanding drift widens the support"
    assert abs(last.mass - first.mass) == 0.0, "grid mass is fixed"
    assert run.support_ratio > 1.0
    summary = json.loads(run.summary_json())
    assert summary["accepted_steps"] == run.accepted_steps

    passed, report = feller.diagnose("residual")
    assert passed, report

    try:
        feller.Params(1.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative diffusion accepted")

    print(f"feller smoke test ok: {len(run.snapshots)} snapshots, support ratio {run.support_ratio:.3f}")


if __name__ == "__main__":
    main()
