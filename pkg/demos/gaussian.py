"""Gaussian BO against direct inversion, plus the boundedness probe.

    python3 demos/gaussian.py
"""
import numpy as np

from beliefopt import GaussianModel, ga_boundedness_probe, ga_solve, lattice_square
from beliefopt.gaussian import random_gaussian_model

model = random_gaussian_model(lattice_square(4, 4), 1.0, seed=0)
beliefs, report = ga_solve(model)
C = np.linalg.inv(model.matrix())
print(f"status={report.status} iterations={report.iterations}")
print(f"max |mu - exact| = {np.max(np.abs(beliefs.mu - C @ -model.b)):.1e}")
print(f"max |V - diag(C)| = {np.max(np.abs(beliefs.v - np.diag(C))):.1e} (loopy, so not exact)")

triangle = GaussianModel(3, [(0, 1, 0.9), (0, 2, 0.9), (1, 2, 0.9)], np.ones(3), np.zeros(3))
print("positive definite but runaway variances:", ga_boundedness_probe(triangle, seed=0))
