"""Reverse-mode tensors from the ground up.

Shows the Tape/Tensor machinery that every trainable part of diverank
sits on: recording a forward graph, pulling gradients back through it,
spot-checking one gradient against central finite differences, and
driving a tiny least-squares fit with sgd_step.

Run: python3 demos/01_tensor_autodiff.py
"""

import numpy as np

import diverank.autodiff as ad
from diverank.autodiff import Tape, Tensor


def section(title):
    print("\n" + "-" * 64)
    print(title)
    print("-" * 64)


def main():
    np.set_printoptions(precision=4, suppress=True)
    rng = np.random.default_rng(0)

    section("1. Forward graph and one backward pass")
    x = ad.constant(rng.normal(size=(2, 3)))
    w1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(4, 1)), requires_grad=True)
    with Tape():
        hidden = ad.relu(ad.matmul(x, w1))
        loss = ad.sum_all(ad.matmul(hidden, w2))
        ad.backward(loss)
    print("loss value:", loss.item())
    print("dL/dw1:\n", w1.grad)
    print("dL/dw2 (column):", w2.grad.ravel())

    section("2. Spot check against central finite differences")
    eps = 1e-6
    approx = np.zeros_like(w1.data)
    for i in range(w1.data.shape[0]):
        for j in range(w1.data.shape[1]):
            for sign in (+1.0, -1.0):
                w1.data[i, j] += sign * eps
                h = np.maximum(x.data @ w1.data, 0.0)
                approx[i, j] += sign * float((h @ w2.data).sum()) / (2 * eps)
                w1.data[i, j] -= sign * eps
    print("max |analytic - numeric| over dL/dw1:",
          f"{np.max(np.abs(w1.grad - approx)):.3e}")

    section("3. Constants stay out of the gradient flow")
    print("constant input grad is None after the backward pass:", x.grad is None)
    with Tape():
        out = ad.sum_all(ad.mul_elementwise(x, x))
    try:
        ad.backward(out)
    except Exception as exc:
        print("backward on a constants-only graph refuses:", exc)
    with Tape() as tape:
        with ad.no_grad():
            ad.matmul(x, w1)
    print("operations recorded under no_grad:", len(tape))

    section("4. Ten steps of SGD on a 1-parameter least squares")
    target = 2.5
    w = Tensor(np.array([[0.0]]), requires_grad=True)
    for step in range(10):
        with Tape():
            resid = ad.add(w, ad.constant(np.array([[-target]])))
            loss = ad.sum_all(ad.mul_elementwise(resid, resid))
            ad.backward(loss)
        ad.sgd_step([w], lr=0.3)
        if step % 3 == 0 or step == 9:
            print(f"step {step}: w = {w.data[0, 0]:+.4f}  loss = {loss.item():.5f}")
    print(f"converged toward the target {target} by plain gradient steps")


if __name__ == "__main__":
    main()
