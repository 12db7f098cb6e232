"""Spectral invariants of the Lax matrix along Feher flows on SL(2) and
SL(3), and the Phi-mapped reduced flow on SL(2)."""
import argparse

from geomech import aks


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--ref-dt", type=float, default=None)
    ap.add_argument("--gauge", choices=["lax", "static"], default="lax")
    ap.add_argument("--phi-T", type=float, default=5.0)
    args = ap.parse_args()
    for d in (2, 3):
        rep = aks.isospectral_check(aks.toda_params(d), args.T, args.dt, args.ref_dt, args.gauge)
        line = f"SL({d}) tr2 drift {rep.drift_tr2:.3e} tr3 drift {rep.drift_tr3:.3e}"
        if args.ref_dt is not None:
            line += f" trace gap {rep.reference_trace_gap:.3e} state gap {rep.reference_state_gap:.3e}"
        print(line)
        u = aks.unreduced_check(aks.bounded_params(d), args.T, args.dt)
        print(f"SL({d}) unreduced residual {u.worst_residual:.3e} momentum drift {u.momentum_drift:.3e}")
    ph = aks.phi_equivalence(aks.toda_params(2), args.phi_T, args.dt)
    print(f"SL(2) Phi-mapped state deviation {ph.max_state_deviation:.3e} "
          f"Lax deviation {ph.max_lax_deviation:.3e}")


if __name__ == "__main__":
    main()
