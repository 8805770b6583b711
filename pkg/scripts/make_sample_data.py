"""Regenerate the bundled sample data in src/lambdamem/data.

Every CSV written here is SYNTHETIC: drawn from the package's own models with
fixed seeds and small multiplicative noise.  None of it is measured or
digitized data.  Run from the repository root:

    python3 scripts/make_sample_data.py
"""

import csv
import json
from pathlib import Path

import numpy as np

from lambdamem.core import SpectralField
from lambdamem.interferometry import forward_interferogram, write_interferogram_csv
from lambdamem.protocols import preset
from lambdamem.solver import default_grid, default_retrieval_delay, run_memory

DATA = Path(__file__).resolve().parents[1] / "src" / "lambdamem" / "data"
NOTE = "# SYNTHETIC sample data from the package models (seeded noise); not measured or digitized"


def write(name, header, rows, note=NOTE):
    with (DATA / name).open("w", newline="") as fh:
        fh.write(note + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" for v in row])


def main():
    rng = np.random.default_rng(20240601)

    t = np.geomspace(0.01, 100.0, 25)
    v = np.exp(-2 * (0.06 * t**0.3) ** 2) * (1 + 0.01 * rng.standard_normal(t.size))
    write("visibility.csv", ["integration_time_s", "visibility"], zip(t, np.minimum(v, 1.0)))

    p = np.linspace(50, 900, 20)
    write("linewidth.csv", ["pressure_mbar", "linewidth_GHz"],
          zip(p, (300 + 0.1 * p) * (1 + 0.01 * rng.standard_normal(p.size))))

    ts = np.linspace(0, 5, 40)
    write("lifetime.csv", ["storage_time_ns", "efficiency_pct"],
          zip(ts, 60 * np.exp(-ts / 1.0) * (1 + 0.02 * rng.standard_normal(ts.size))))

    pl = np.array([30, 50, 75, 100, 150, 200, 300, 400])
    write("lifetime_vs_pressure.csv", ["pressure_mbar", "lifetime_ns"],
          zip(pl, 150.0 / pl * (1 + 0.02 * rng.standard_normal(pl.size))))

    n = np.linspace(0.05, 2.0, 20)
    write("snr.csv", ["mean_photon_number", "snr"],
          zip(n, 1800 * n * (1 + 0.01 * rng.standard_normal(n.size))))

    dl = np.linspace(-20, 30, 26)
    write("frequency_response.csv", ["detuning_over_gamma", "efficiency"],
          zip(dl, 0.4 * np.exp(-4 * np.log(2) * (dl - 5) ** 2 / 12**2)))

    # 880 GHz intensity FWHM about a 541.6 THz carrier
    f = 541_600 + np.linspace(-3000, 3000, 601)
    write("signal_spectrum.csv", ["frequency_GHz", "intensity"],
          zip(f, np.exp(-4 * np.log(2) * (f - 541_600) ** 2 / 880**2)))

    # spectral interferometry bundle in units of gamma
    w = np.linspace(-12, 12, 1201)
    m1 = np.exp(-w**2 / 30)
    m2 = 0.5 * np.exp(-(w - 1) ** 2 / 20)
    phi1 = 0.2 * w
    phi_dif = 0.5 * ((w - 1) / 4) ** 2
    ig = forward_interferogram(SpectralField(w, m1, phi1), SpectralField(w, m2, phi1 + phi_dif), 8.0)
    write_interferogram_csv(DATA / "interferogram.csv", ig)
    path = DATA / "interferogram.csv"
    path.write_text(NOTE + "\n" + path.read_text())
    write("reference.csv", ["omega", "amplitude", "phase"], zip(w, m1, phi1))
    write("signal_arm.csv", ["omega", "amplitude"], zip(w, m2))
    write("phase_truth.csv", ["omega", "phi_dif"], zip(w, phi_dif))

    # golden efficiencies from the ATT configuration on a 4x refined grid
    att = preset("ATT")
    delay = default_retrieval_delay(att.memory, att.control)
    grid = default_grid(att.memory, att.control, delay).refined(4)
    r = run_memory(att.memory, att.control, retrieval_delay=delay, grid=grid)
    golden = {"eta_store": r.eta_store, "eta_tot": r.eta_tot, "eta_ret": r.eta_ret,
              "grid": {"n_z": grid.n_z, "n_t": grid.n_t}}
    (DATA / "att_resonant_golden.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
