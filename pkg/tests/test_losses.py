import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from scpt.errors import InvalidLabel, NonFinite, ShapeMismatch
from scpt.losses import (
    LossWeights,
    orthogonality_loss,
    specific_sparsity_loss,
    subject_loss,
    task_loss,
    total_loss,
)

D64 = torch.float64


def t(x):
    return torch.tensor(x, dtype=D64)


class TestTaskLoss:
    def test_two_zero_logits(self):
        assert float(task_loss(t([0.0, 0.0]), 0)) == pytest.approx(math.log(2), abs=1e-12)

    def test_saturated_logits_are_stable(self):
        v = float(task_loss(t([1e3, -1e3]), 0))
        assert math.isfinite(v) and v == pytest.approx(0.0, abs=1e-12)
        assert float(task_loss(t([1e3, -1e3]), 1)) == pytest.approx(2e3)

    @pytest.mark.parametrize("k", [2, 3, 7, 40])
    def test_uniform(self, k):
        assert float(task_loss(torch.zeros(1, k, dtype=D64), [k - 1])) == pytest.approx(math.log(k))

    def test_closed_form_batch(self, rng):
        z = rng.standard_normal((5, 4))
        y = rng.integers(0, 4, 5)
        expect = np.mean(np.log(np.exp(z).sum(1)) - z[np.arange(5), y])
        assert float(task_loss(t(z), y)) == pytest.approx(expect, abs=1e-12)

    def test_invalid_labels(self):
        with pytest.raises(InvalidLabel):
            task_loss(t([0.0, 0.0]), 2)
        with pytest.raises(InvalidLabel):
            task_loss(t([[0.0, 0.0]]), [-1])
        with pytest.raises(InvalidLabel):
            task_loss(t([[0.0, 0.0]]), [0, 1])


class TestSparsity:
    def test_examples(self):
        g = t([[1.0, -2.0], [0.0, 3.0]])
        assert float(specific_sparsity_loss([torch.zeros(3, 4)])) == 0
        assert float(specific_sparsity_loss([g], "sum")) == 6.0
        assert float(specific_sparsity_loss([g], "mean")) == 1.5
        layers = [t([[4.0, 0.0]]), t([[2.0, -6.0]])]
        assert float(specific_sparsity_loss(layers, "sum")) == 6.0

    def test_per_layer_and_batch_average(self):
        per = []
        batch = t([[[1.0, 1.0]], [[3.0, 3.0]]])  # per-matrix sums 2 and 6
        assert float(specific_sparsity_loss([batch], "sum", per)) == 4.0
        assert per == [4.0]

    def test_unknown_normalization(self):
        with pytest.raises(ValueError):
            specific_sparsity_loss([torch.zeros(2, 2)], "max")


class TestOrthogonality:
    def test_examples(self):
        assert float(orthogonality_loss([torch.randn(3, 4)], [torch.zeros(3, 4)])) == 0
        sh, sp = torch.eye(2, dtype=D64), t([[0.0, 1.0], [0.0, 0.0]])
        assert float(orthogonality_loss([sh], [sp], "sum")) == 1.0
        assert float(orthogonality_loss([sh], [sp], "mean")) == 0.25
        a = t([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        b = t([[0.0, 1.0, 5.0], [0.0, -3.0, 1.0]])
        assert float(orthogonality_loss([a], [b], "sum")) == 0.0

    def test_closed_form(self, rng):
        A, B = rng.standard_normal((2, 5, 6)), rng.standard_normal((2, 5, 6))
        expect = np.mean([np.sum((A[k] @ B[k].T) ** 2) for k in range(2)])
        assert float(orthogonality_loss([t(A)], [t(B)], "sum")) == pytest.approx(expect, rel=1e-12)

    def test_shape_checks(self):
        with pytest.raises(ShapeMismatch):
            orthogonality_loss([torch.zeros(2, 2)], [torch.zeros(3, 2)])
        with pytest.raises(ShapeMismatch):
            orthogonality_loss([torch.zeros(2, 2)], [])


class TestSubjectLoss:
    def test_zero_logits(self):
        head = torch.nn.Linear(3, 2).double()
        torch.nn.init.zeros_(head.weight)
        torch.nn.init.zeros_(head.bias)
        assert float(subject_loss(torch.ones(1, 3, dtype=D64), head, [1]).detach()) == pytest.approx(math.log(2))

    def test_hand_set_head(self):
        head = torch.nn.Linear(2, 2).double()
        with torch.no_grad():
            head.weight.copy_(t([[2.0, -1.0], [0.5, 0.5]]))
            head.bias.copy_(t([0.1, -0.1]))
        x = t([[1.0, 0.0]])
        z0, z1 = 2.1, 0.4
        expect = math.log(math.exp(z0) + math.exp(z1)) - z1
        assert float(subject_loss(x, head, [1]).detach()) == pytest.approx(expect, abs=1e-12)

    def test_saturation(self):
        head = torch.nn.Linear(1, 2).double()
        with torch.no_grad():
            head.weight.copy_(t([[100.0], [-100.0]]))
            head.bias.zero_()
        assert float(subject_loss(t([[1.0]]), head, [0]).detach()) < 1e-80


class TestTotal:
    def test_weights_validated(self):
        with pytest.raises(ValueError):
            LossWeights(-0.1, 0, 0)
        with pytest.raises(ValueError):
            LossWeights(float("nan"), 0, 0)

    def test_arithmetic(self):
        total, rep = total_loss(t(1.0), t(2.0), t(3.0), t(4.0), LossWeights(0.1, 0.1, 0.6))
        assert float(total) == pytest.approx(3.9, abs=1e-12)
        assert rep.total == pytest.approx(3.9, abs=1e-12)

    def test_zero_weights(self):
        total, rep = total_loss(t(0.7), t(2.0), t(3.0), t(4.0), LossWeights(0, 0, 0))
        assert float(total) == 0.7 and rep.total == 0.7

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            total_loss(t(float("nan")), t(0.0), t(0.0), t(0.0), LossWeights())

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_fuzz_nonnegative_and_consistent(self, seed):
        r = np.random.default_rng(seed)
        n, d, c = r.integers(1, 6), r.integers(1, 6), r.integers(2, 5)
        scale = 10.0 ** r.uniform(-3, 3)
        sh = [t(scale * r.standard_normal((n, d))) for _ in range(2)]
        sp = [t(scale * r.standard_normal((n, d))) for _ in range(2)]
        logits = t(scale * r.standard_normal((3, c)))
        w = LossWeights(*r.uniform(0, 1, 3))
        parts = (task_loss(logits, r.integers(0, c, 3)), specific_sparsity_loss(sp),
                 orthogonality_loss(sh, sp), task_loss(logits, r.integers(0, c, 3)))
        total, rep = total_loss(*parts, w)
        assert min(rep.task, rep.specific, rep.orth, rep.sub) >= 0
        expect = rep.task + w.lambda1 * rep.specific + w.lambda2 * rep.orth + w.lambda3 * rep.sub
        assert rep.total == expect
        assert float(total) == pytest.approx(expect, rel=1e-12)
