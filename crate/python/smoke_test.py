"""Smoke test for the dldo extension module.

Build and install first, e.g. `maturin build --release -m crates/py/Cargo.toml`
then `pip install target/wheels/dldo-*.whl`, and run `python python/smoke_test.py`.
"""

from pathlib import Path

import dldo

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    text = (CONFIGS / "table1_20ma.toml").read_text()
    cfg = dldo.Config.from_toml(text)
    assert dldo.Config.from_json(cfg.to_json()) == cfg

    trace, metrics = dldo.simulate(cfg)
    assert len(trace) == len(trace.t) > 1000
    assert metrics.ripple_pp <= 6e-3, metrics
    assert abs(metrics.v_mean_ss - 0.6) < 5e-3, metrics
    q_supply, q_load, q_cap = trace.charge()
    assert abs(q_supply - q_load - q_cap) <= 1e-6 * q_supply
    assert trace.to_csv().startswith("t,v_out,n_on,i_load,period_eff\n")

    again = dldo.run(cfg)
    assert again.v_out == trace.v_out, "runs are deterministic"
    assert dldo.evaluate(again, cfg).ripple_pp == metrics.ripple_pp

    rows = dldo.sweep(cfg, "c_load", [5e-9, 9e-9])
    assert [v for v, _ in rows] == [5e-9, 9e-9]
    assert all(m is not None for _, m in rows)

    e = dldo.calibrate_ecmp(0.969, 10e-3, 250e6, 8, 0.7)
    assert abs(e - 1.1197110423116615e-13) < 1e-24
    try:
        dldo.calibrate_ecmp(1.0, 10e-3, 250e6, 8, 0.7)
    except dldo.ConfigError:
        pass
    else:
        raise AssertionError("eta = 1 must be rejected")

    assert dldo.parse_quantity("9nF") == 9e-9
    try:
        dldo.Config.from_toml(text.replace('"9n"', '"9q"'))
    except dldo.ConfigError as err:
        assert "c_load" in str(err)
    else:
        raise AssertionError("bad quantity must be rejected")

    zero = dldo.Config.from_toml(text.replace('t_end = "4u"', "t_end = 0"))
    try:
        dldo.simulate(zero)
    except dldo.NotSettledError:
        pass
    else:
        raise AssertionError("an empty run cannot settle")

    name, rows = dldo.run_preset("fig9")
    eta = [m.current_efficiency for _, m in rows]
    assert name == "f_clk" and all(a > b for a, b in zip(eta, eta[1:])), eta

    summary = dldo.grid(dldo.Config.from_toml((CONFIGS / "grid.toml").read_text()))
    assert len(summary["nodes"]) == 9
    assert all(n["metrics"] is not None for n in summary["nodes"])
    assert summary["max_kcl_residual"] < 1e-9

    print("smoke test passed")


if __name__ == "__main__":
    main()
