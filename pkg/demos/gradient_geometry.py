"""A walk through the restricted-gradient update in two dimensions.

Two objectives pull a parameter vector in different directions. When their
gradients conflict (negative dot product), naively summing them lets the
stronger objective drag the weaker one backwards. The restricted update
instead projects each gradient onto the complement of the other, producing a
combined direction that is a first-order improvement for both objectives at
once. This script prints every quantity involved so the geometry is visible.

Run: python3 demos/gradient_geometry.py
"""

import numpy as np

from diffunlearn.projection import restricted_gradient


def describe(name, grad_f, grad_r):
    print(f"\n--- {name} ---")
    print(f"grad_f = {grad_f}, grad_r = {grad_r}")
    update = restricted_gradient(grad_f, grad_r)
    print(f"dot = {update.dot:+.6f}  ->  conflicted = {update.conflicted}")
    print(f"delta_f  = {update.delta_f}")
    print(f"delta_r  = {update.delta_r}")
    print(f"combined = {update.combined}")
    # The guarantees to check: each projected piece is orthogonal to the
    # other raw gradient, and the combined step improves both objectives.
    print(f"delta_f . grad_r = {float(update.delta_f @ grad_r):+.2e}   (should be ~0)")
    print(f"delta_r . grad_f = {float(update.delta_r @ grad_f):+.2e}   (should be ~0)")
    print(f"combined . grad_f = {float(update.combined @ grad_f):+.6f} (>= 0)")
    print(f"combined . grad_r = {float(update.combined @ grad_r):+.6f} (>= 0)")
    return update


def main():
    # A clean conflict: ascending the forget objective directly would undo
    # progress on the remain objective.
    grad_f = np.array([1.0, 0.0])
    grad_r = np.array([-2.0, 1.0])
    describe("conflicting pair", grad_f, grad_r)

    # No conflict: the update reduces to the raw sum, bit for bit.
    grad_r_agree = np.array([1.0, 1.0])
    update = describe("agreeing pair", grad_f, grad_r_agree)
    assert np.array_equal(update.combined, grad_f + grad_r_agree)
    print("agreeing case is the plain sum, unchanged")

    # Worst case: exactly opposed gradients. Both projections annihilate,
    # so the update is zero; callers treat this as a logged no-op step.
    describe("anti-parallel pair", grad_f, -2.0 * grad_f)

    # The naive sum on the conflicting pair, for contrast: its dot with
    # grad_f is negative, so stepping along it regresses that objective.
    naive = grad_f + grad_r
    print("\n--- naive sum on the conflicting pair ---")
    print(f"naive = {naive}")
    print(f"naive . grad_f = {float(naive @ grad_f):+.4f}  <- negative: forgetting regresses")


if __name__ == "__main__":
    main()
