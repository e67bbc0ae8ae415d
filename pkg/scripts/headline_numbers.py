"""Order-of-magnitude figures for the worked masses, plus the b = 10 collapse statistics."""
import math

from qmupl import gauss2, master, units


def main():
    for name in ("electron", "nucleon", "gram", "earth"):
        p = units.ModelParams.preset(name)
        c = units.derive_constants(p)
        print(f"{name:8s} m={p.m:.3e} kg  lambda={c.lam:.3e} m^-2/s  sigma_q_inf={c.sigma_q_inf:.3e} m  "
              f"sigma_p_inf={c.sigma_p_inf:.3e} kg m/s")
    nuc = units.derive_constants(units.ModelParams())
    print(f"omega = {nuc.omega:.3e} 1/s (mass independent), energy rate = {nuc.energy_rate:.3e} J/s")
    print(f"alpha(1 kg, 1 s) = {master.alpha(units.derive_constants(units.ModelParams(m=1.0)), 1.0):.3e} m^-2")
    est = units.macro_micro_estimates(units.ModelParams.preset("electron"), X0=1.0)
    print(f"electron, X0 = 1 m: E[T_b] ~ {est['E_Tb']:.3e} s ({est['E_Tb'] / 86400:.1f} days), "
          f"fluctuation rate {est['fluct_rate']:.3e} m^2/s")
    st = gauss2.hitting_stats(gauss2.HittingConfig(b=10.0, b0=0.0, eta=3.0))
    print(f"b = 10: E[S_b] = {st.mean_S:.4f}, sd = {math.sqrt(st.var_S):.4f}, "
          f"post-collapse delocalization probability (eta = 3) <= {st.p_deloc_bound:.2e}")


if __name__ == "__main__":
    main()
