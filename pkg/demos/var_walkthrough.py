"""Simulate a GARCH path, forecast VaR with three competing models, backtest
them, run the model confidence set and combine the survivors.

    python demos/var_walkthrough.py
"""

import numpy as np

from newsvar.backtest import backtest
from newsvar.combine import combine, dynamic_weights, optimize_kappa, static_average
from newsvar.estimation import ModelSpec
from newsvar.forecasting import RollConfig, rolling_run
from newsvar.mcs import MCSConfig, loss_matrix, mcs_run, quantile_loss
from newsvar.volatility import ParamVector, simulate

TAU = 0.01


def main() -> None:
    truth = ParamVector(mu=0.0, phi=0.05, omega=0.05, alpha=0.08, beta=0.85, gamma=0.06, nu=6.0)
    r = simulate("GJR", "student_t", truth, 3000, seed=1)
    specs = [ModelSpec.parse(m) for m in ("GARCH-gaussian-N", "GJR-student_t-N", "EGARCH-ged-N")]
    roll = rolling_run(specs, r, {}, RollConfig(insample_fraction=0.5, refit_every=100, taus=(TAU,)))
    panel = roll.panels[TAU]

    print(f"{'model':20s} {'hits':>5s} {'A/E':>6s} {'UC p':>7s} {'CC p':>7s} {'DQ p':>7s}")
    for j, mid in enumerate(panel.model_ids):
        rep = backtest(panel.realized, panel.var[:, j], TAU)
        print(f"{mid:20s} {rep.n_hits:5d} {rep.ae_ratio:6.2f} {rep.uc_pvalue:7.3f} {rep.cc_pvalue:7.3f} "
              f"{rep.dq_pvalue:7.3f}")

    mcs = mcs_run(loss_matrix(panel), MCSConfig(seed=3))
    print(f"\nsuperior set: {mcs.surviving_ids} (block length {mcs.block_length})")
    for mid, t_r, p in mcs.elimination_order:
        print(f"  eliminated {mid}: T_R={t_r:.2f}, p={p:.3f}")

    ssm = panel.select(mcs.surviving_ids)
    if ssm.n_models > 1:
        kfit = optimize_kappa(ssm.var, ssm.realized, ssm.sigma2_hat, TAU)
        var_dyn = combine(ssm.var, dynamic_weights(ssm.var, ssm.realized, ssm.sigma2_hat, kfit.kappa, TAU))
        var_avg = static_average(ssm.var)
        print(f"\nkappa = {np.round(kfit.kappa, 4)}")
        print(f"mean pinball loss: dynamic {np.mean(quantile_loss(ssm.realized, var_dyn, TAU)):.6f}, "
              f"average {np.mean(quantile_loss(ssm.realized, var_avg, TAU)):.6f}")


if __name__ == "__main__":
    main()
