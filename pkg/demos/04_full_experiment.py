"""Run the full two-model evaluation protocol and write the sweep report.

Half the data trains the optimization-side models, the other half trains a
deliberately biased validation model and supplies the instances to optimize.
Policies are scored by the validation model (iFEE = predicted probability of
the bad class at the current treatments minus at the optimized ones), and the
filtered average propensity of the recommendations tracks how causally
trustworthy each variant's policies are.

Run from the repository root:  python demos/04_full_experiment.py
(reduced sweep; ~10 minutes. The CLI equivalent:
 causalinv evaluate --data data/students.csv --schema data/students_schema.json
   --out out --budget 1,2,3 --lambda 0,0.05 --variant g,fprime-noopt,f --jobs 2)
"""

import os

import causalinv as ci
from causalinv.experiment import TrainSettings, run_experiment, write_report, write_sweep_csv

ds = ci.normalize(ci.load_dataset("data/students.csv",
                                  "data/students_schema.json"))
report = run_experiment(ds, budgets=[1.0, 2.0, 3.0], lambdas=[0.0, 0.05],
                        variants=["g", "fprime-noopt", "f"], seed=0,
                        settings=TrainSettings(folds=3, arch_grid=((16,),),
                                               epochs=120),
                        jobs=max(1, os.cpu_count() or 1))

print(f"split: {report.n_opt} optimization rows, {report.n_val} validation rows\n")
print(f"{'variant':<13s} {'B':>4s} {'lambda':>7s} {'avg iFEE':>9s} "
      f"{'avg APS':>8s} {'kept':>5s}")
for c in report.cells:
    print(f"{c.variant:<13s} {c.budget:4.1f} {c.lam:7.2f} {c.ifee_mean:+9.4f} "
          f"{c.aps_mean:8.3f} {c.kept:5d}")

print("\nmost-adjusted treatments per variant at B=3:")
for c in report.cells:
    if c.budget == 3.0 and c.lam in (0.0, 0.05):
        pairs = sorted(zip(report.treatment_names, c.freq_counts),
                       key=lambda kv: -kv[1])
        txt = ", ".join(f"{k}={v}" for k, v in pairs)
        print(f"  {c.variant} (lam={c.lam}): {txt}")

os.makedirs("out", exist_ok=True)
write_report(report, "out/report.json")
write_sweep_csv(report, "out/sweep.csv")
print("\nwrote out/report.json and out/sweep.csv")
