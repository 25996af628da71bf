"""Tour of the tensor kernels: unfoldings, Khatri-Rao products, and the
gram identity that makes the normal-equation terms cheap."""

import numpy as np

from concpd import (
    KruskalTensor,
    factors_khatri_rao,
    hadamard_gram,
    matricize,
    reconstruct,
    refold,
    unvectorize,
    vectorize,
)


def main():
    rng = np.random.default_rng(0)
    dims = (4, 5, 3)
    t = rng.random(dims)

    print(f"tensor of shape {t.shape}")
    print("vectorize is first-index-fastest:",
          np.array_equal(vectorize(t)[:2], t[:2, 0, 0]))
    print("unvectorize inverts it:",
          np.array_equal(unvectorize(vectorize(t), dims), t))
    for n in range(3):
        m = matricize(t, n)
        print(f"mode-{n} unfolding has shape {m.shape}; refold inverts:",
              np.array_equal(refold(m, n, dims), t))

    # a rank-3 model and its unfoldings
    rank = 3
    factors = [rng.random((d, rank)) for d in dims]
    weights = rng.random(rank)
    model = KruskalTensor(factors, weights)
    full = reconstruct(model)
    worst = max(
        np.abs(matricize(full, n)
               - (factors[n] * weights)
               @ factors_khatri_rao(factors, skip=n).T).max()
        for n in range(3)
    )
    print(f"\nrank-{rank} model reconstructs through any unfolding "
          f"(max deviation {worst:.2e})")

    # the gram of a Khatri-Rao product never needs the tall matrix
    kr = factors_khatri_rao(factors)
    gap = np.abs(kr.T @ kr - hadamard_gram(factors)).max()
    print(f"Khatri-Rao gram via Hadamard product of small grams: "
          f"max deviation {gap:.2e}")
    print(f"(tall matrix is {kr.shape}, the gram product touches only "
          f"{rank}x{rank} blocks)")


if __name__ == "__main__":
    main()
