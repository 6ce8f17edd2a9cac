"""Small SNR sweep, tensor subspace against the time-mode-only baseline."""
import numpy as np

from ucya.harness import ExperimentSpec, paired_subspace_trials, run_experiment


def main(trials=40):
    spec = ExperimentSpec(sweep_values=(-10.0, -5.0, 0.0, 5.0, 10.0), trials=trials)
    _, summary = run_experiment(spec)
    print("snr_db  rmse_theta_deg  rmse_phi_deg  rmse_tau_ns")
    for row in summary:
        print(f"{row['sweep_value']:6.0f} {row['rmse_theta_deg']:15.4f} {row['rmse_phi_deg']:13.4f}"
              f" {row['rmse_tau_ns']:12.5f}")

    per_trial = paired_subspace_trials(spec, -10.0)
    print("\nmedian per-trial elevation RMSE at -10 dB")
    for name, v in per_trial.items():
        print(f"  {name:6s} {np.degrees(np.nanmedian(v)):.3f} deg")


if __name__ == "__main__":
    main()
