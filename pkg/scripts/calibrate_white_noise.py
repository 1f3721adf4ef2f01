"""Fit the white-noise to Lindblad rate factor and pin it in constants.json.

The simulator's noise strength and the master-equation dephasing rate are
related by ``gamma_eff = c * strength``. ``c`` is fitted by weighted least
squares of the simulated coherence envelope against ``exp(-2 c strength t)``.

Usage::

    python scripts/calibrate_white_noise.py [--n 50000] [--seed 20240917] [--write]
"""

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from stochdmd.noise_sim import QubitConfig, TimeGrid, WhiteNoiseConfig, coherence_envelope, generate_ensemble

CONSTANTS = Path(__file__).resolve().parents[1] / "src" / "stochdmd" / "constants.json"


def fit_factor(strength, n, seed, t_end=3.0, dt=0.01):
    grid = TimeGrid.from_span(0.0, t_end, dt)
    ens = generate_ensemble("white", QubitConfig(), WhiteNoiseConfig(strength), n, grid, seed)
    env, err = coherence_envelope(ens, return_stderr=True)
    keep = env > 5.0 * err
    keep[0] = False  # the t = 0 point is exact and carries no information

    def model(t, c):
        return np.exp(-2.0 * c * strength * t)

    popt, pcov = curve_fit(model, grid.times[keep], env[keep], p0=[0.25], sigma=err[keep], absolute_sigma=True)
    return float(popt[0]), float(np.sqrt(pcov[0, 0])), grid


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=50_000)
    parser.add_argument("--seed", type=int, default=20240917)
    parser.add_argument("--strength", type=float, default=np.pi)
    parser.add_argument("--write", action="store_true", help="update constants.json")
    args = parser.parse_args()

    c, c_err, grid = fit_factor(args.strength, args.n, args.seed)
    print(f"c = {c:.6f} +/- {c_err:.6f}")
    if args.write:
        constants = json.loads(CONSTANTS.read_text())
        constants["version"] = int(constants.get("version", 0)) + 1
        constants["white_noise_lindblad_factor"] = round(c, 6)
        constants["calibration"] = {
            "script": "scripts/calibrate_white_noise.py",
            "strength": args.strength,
            "n": args.n,
            "seed": args.seed,
            "grid": grid.to_dict(),
            "standard_error": round(c_err, 6),
        }
        CONSTANTS.write_text(json.dumps(constants, indent=2) + "\n")
        print(f"wrote {CONSTANTS}")


if __name__ == "__main__":
    main()
