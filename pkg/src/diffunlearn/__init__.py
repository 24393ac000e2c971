"""Machine unlearning for toy conditional diffusion models.

The package trains class-conditional denoising diffusion models on 2-D
Gaussian mixtures, then removes one class with a restricted-gradient update
that projects the forgetting and remaining gradients away from each other
whenever they conflict. Evaluation uses an oracle mixture classifier and a
kernel two-sample statistic.
"""

__version__ = "0.1.0"
