"""
Leave-one-subject-out training with and without adapters
========================================================

A scaled-down version of the adapter ablation: a handful of synthetic
subjects with strong subject confounds, a few epochs, two seeds. Set
``SCPT_THREADS`` to train folds in parallel.
"""

from scpt.ablation import AblationSettings, run_ablation

settings = AblationSettings(subjects=4, trials=6, epochs=4, seeds=(0, 1))
result = run_ablation(settings)
print()
print(result.table())

###############################################################################
# Per-fold accuracies for one cell show how much the held-out subject matters.

for key, folds in sorted(result.cells.items()):
    print(key, [round(a, 3) for a in folds])
