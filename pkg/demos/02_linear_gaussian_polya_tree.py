"""Polya tree marginal on plain linear-Gaussian data.

The model is not restricted to exotic responses: here it fits ordinary
linear data with a Polya tree prior on the marginal (Gaussian base, mean
12.5, sd 6, alpha = m^2 per level) and we check that 80% highest-density
predictive intervals cover fresh data at close to the nominal rate, and that
probability integral transforms of held-out points are near uniform.

Run:  python3 demos/02_linear_gaussian_polya_tree.py
"""

import os

import numpy as np

from plcopula import (GaussianBase, GaussianPrior, PolyaTreeSpec,
                      PosteriorConditional, fit_composite,
                      gen_linear_gaussian, hpd_region, ks_uniform,
                      pit_values)
from plcopula.predictive import write_pit_csv

OUT = os.path.join(os.path.dirname(__file__), "output", "linear_gaussian")
os.makedirs(OUT, exist_ok=True)

data = gen_linear_gaussian(n=300, seed=5)
spec = PolyaTreeSpec(base=GaussianBase(loc=12.5, scale=6.0), depth=12,
                     alpha_scale=1.0)
model = fit_composite(data, spec, GaussianPrior(mean=0.0, var=8.0), seed=5)
print(f"coefficient: {model.pl.beta_map[0]:.4f} "
      f"(a negative value raises the response; here larger x -> larger y, "
      f"so the sign is negative)")

# serialized tree posterior is a plain-text artifact
from plcopula import write_polya_tree
write_polya_tree(os.path.join(OUT, "marginal.ptree"), model.marginal)

# coverage of 80% HPD intervals on fresh draws from the true process
cond = PosteriorConditional(model, n_beta_draws=48, seed=1)
rng = np.random.default_rng(11)
xf = rng.uniform(0, 10, size=500)
yf = 3.0 + 2.0 * xf + 2.0 * rng.standard_normal(500)
hits = sum(int(hpd_region(model, np.array([x]), level=0.8,
                          cond=cond).contains(y))
           for x, y in zip(xf, yf))
print(f"80% HPD coverage on 500 fresh points: {hits / 500:.3f} "
      f"(nominal 0.80)")

# PIT calibration of held-out data from the true model
held_x = rng.uniform(0, 10, size=(400, 1))
held_y = 3.0 + 2.0 * held_x[:, 0] + 2.0 * rng.standard_normal(400)
pit, mq = pit_values(model, held_x, held_y, n_beta_draws=24, seed=3)
print(f"held-out PIT vs uniform: KS = {ks_uniform(pit):.4f} "
      f"(qq pairs written for plotting)")
write_pit_csv(os.path.join(OUT, "pit_qq.csv"), mq, pit)
print(f"outputs -> {OUT}")
