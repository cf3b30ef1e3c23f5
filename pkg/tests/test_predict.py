"""Summaries, scoring heads, loss, and parameter counting."""

import math

import numpy as np
import pytest

from dcn import predict
from dcn.config import DcnConfig
from dcn.model import DcnModel
from dcn.tensor import Tensor, grad_check


def make_mlp(out_dim, hidden, in_dim, rng=None, scale=0.5):
    def mat(r, c):
        if rng is None:
            return Tensor(np.zeros((r, c)), requires_grad=True)
        return Tensor(rng.standard_normal((r, c)) * scale, requires_grad=True)

    return predict.ScoreMlp(
        w1=mat(hidden, in_dim), b1=Tensor(np.zeros(hidden), requires_grad=True),
        w2=mat(out_dim, hidden), b2=Tensor(np.zeros(out_dim), requires_grad=True))


@pytest.fixture
def rng():
    return np.random.default_rng(31)


class TestSelfAttendSummary:
    def test_zero_mlp_gives_column_mean(self, rng):
        x = Tensor(rng.standard_normal((4, 6)))
        s, alpha = predict.self_attend_summary(x, make_mlp(1, 3, 4))
        assert np.allclose(alpha.data, 1.0 / 6.0, atol=0)
        assert np.allclose(s.data, x.data.mean(axis=1), atol=1e-15)

    def test_single_column(self, rng):
        x = Tensor(rng.standard_normal((4, 1)))
        s, alpha = predict.self_attend_summary(x, make_mlp(1, 3, 4, rng))
        assert alpha.data.tolist() == [1.0]
        assert np.array_equal(s.data, x.data[:, 0])

    def test_matches_summation_oracle(self, rng):
        x = Tensor(rng.standard_normal((5, 7)))
        mlp = make_mlp(1, 4, 5, rng)
        s, alpha = predict.self_attend_summary(x, mlp)
        # direct recomputation of scores, weights and weighted sum
        hidden = np.maximum(mlp.w1.data @ x.data + mlp.b1.data[:, None], 0.0)
        scores = (mlp.w2.data @ hidden + mlp.b2.data[:, None])[0]
        e = np.exp(scores - scores.max())
        w = e / e.sum()
        expected = np.zeros(5)
        for m in range(7):
            expected += w[m] * x.data[:, m]
        assert np.allclose(alpha.data, w, atol=1e-14)
        assert np.allclose(s.data, expected, atol=1e-13)

    def test_weights_on_simplex_and_hull(self, rng):
        for _ in range(30):
            m = int(rng.integers(1, 9))
            x = Tensor(rng.standard_normal((3, m)) * 4.0)
            s, alpha = predict.self_attend_summary(x, make_mlp(1, 4, 3, rng))
            assert abs(alpha.data.sum() - 1.0) < 1e-12
            assert np.all(alpha.data > 0)
            lo = x.data.min(axis=1) - 1e-12
            hi = x.data.max(axis=1) + 1e-12
            assert np.all(s.data >= lo) and np.all(s.data <= hi)

    def test_uniform_flag_equals_zero_scores_exactly(self, rng):
        x = Tensor(rng.standard_normal((4, 5)))
        mlp = make_mlp(1, 3, 4, rng)
        s_avg, a_avg = predict.self_attend_summary(x, mlp, uniform=True)
        zero_mlp = make_mlp(1, 3, 4)
        s_zero, a_zero = predict.self_attend_summary(x, zero_mlp)
        assert np.array_equal(s_avg.data, s_zero.data)
        assert np.array_equal(a_avg.data, a_zero.data)

    def test_empty_rejected(self, rng):
        with pytest.raises(Exception):
            predict.self_attend_summary(Tensor(np.zeros(3)), make_mlp(1, 2, 3))


class TestScoreHeads:
    def test_inner_zero_matrix_gives_half(self, rng):
        d = 4
        s_q = Tensor(rng.standard_normal(d))
        s_v = Tensor(rng.standard_normal(d))
        s_a = Tensor(rng.standard_normal(d))
        out = predict.score_inner(s_q, s_v, s_a, Tensor(np.zeros((d, d))))
        assert out.data.tolist() == [0.5]

    def test_inner_forced_scalar(self):
        out = predict.score_inner(Tensor([1.0]), Tensor([1.0]), Tensor([1.0]),
                                  Tensor([[1.0]]))
        assert abs(out.data[0] - 1.0 / (1.0 + math.exp(-2.0))) < 1e-15
        assert abs(out.data[0] - 0.8808) < 1e-4

    def test_inner_gradient_wrt_w(self, rng):
        d = 3
        s_q = Tensor(rng.standard_normal(d))
        s_v = Tensor(rng.standard_normal(d))
        s_a = Tensor(rng.standard_normal(d))
        w = Tensor(rng.standard_normal((d, d)), requires_grad=True)
        report = grad_check(lambda: predict.score_inner(s_q, s_v, s_a, w), [w],
                            tol=1e-6)
        assert report.passed, report.max_rel_error

    def test_sum_mlp_zero_gives_half(self, rng):
        s_q = Tensor(rng.standard_normal(4))
        s_v = Tensor(rng.standard_normal(4))
        out = predict.score_sum_mlp(s_q, s_v, make_mlp(5, 3, 4))
        assert np.all(out.data == 0.5)

    def test_sum_mlp_single_answer_forced(self):
        mlp = make_mlp(1, 1, 1)
        mlp.w1.data[:] = 1.0
        mlp.w2.data[:] = 1.0
        out = predict.score_sum_mlp(Tensor([0.25]), Tensor([0.75]), mlp)
        assert abs(out.data[0] - 1.0 / (1.0 + math.exp(-1.0))) < 1e-15

    def test_cat_mlp_concatenates(self, rng):
        s_q = Tensor(rng.standard_normal(3))
        s_v = Tensor(rng.standard_normal(3))
        mlp = make_mlp(4, 5, 6, rng)
        out = predict.score_cat_mlp(s_q, s_v, mlp)
        joint = np.concatenate([s_q.data, s_v.data])
        hidden = np.maximum(mlp.w1.data @ joint + mlp.b1.data, 0.0)
        logits = mlp.w2.data @ hidden + mlp.b2.data
        assert np.allclose(out.data, 1.0 / (1.0 + np.exp(-logits)), atol=1e-14)

    @pytest.mark.parametrize("variant", ["sum", "cat"])
    def test_mlp_head_gradients(self, rng, variant):
        s_q = Tensor(rng.standard_normal(3))
        s_v = Tensor(rng.standard_normal(3))
        mlp = make_mlp(2, 4, 3 if variant == "sum" else 6, rng)
        score = predict.score_sum_mlp if variant == "sum" else predict.score_cat_mlp

        def f():
            from dcn.tensor import sum_all
            return sum_all(score(s_q, s_v, mlp))

        params = dict(mlp.tensors())
        report = grad_check(f, list(params.values()), tol=1e-5, names=list(params))
        assert report.passed, report.max_rel_error

    def test_scores_strictly_inside_unit_interval(self, rng):
        for _ in range(20):
            s_q = Tensor(rng.standard_normal(4))
            s_v = Tensor(rng.standard_normal(4))
            s_a = Tensor(rng.standard_normal(4))
            w = Tensor(rng.standard_normal((4, 4)))
            mlp_sum = make_mlp(3, 4, 4, rng)
            mlp_cat = make_mlp(3, 4, 8, rng)
            for out in (predict.score_sum_mlp(s_q, s_v, mlp_sum).data,
                        predict.score_cat_mlp(s_q, s_v, mlp_cat).data,
                        predict.score_inner(s_q, s_v, s_a, w).data):
                assert np.all(out > 0.0) and np.all(out < 1.0)


class TestMultilabelLoss:
    def test_perfect_scores_near_zero(self):
        loss = predict.multilabel_loss(Tensor([1.0, 0.0]), np.array([1.0, 0.0]))
        # clamp floor keeps the loss at -log(1 - 1e-7)
        assert 0.0 < loss.data[0] < 1e-6

    def test_half_score_gives_ln2(self):
        loss = predict.multilabel_loss(Tensor([0.5]), np.array([1.0]))
        assert abs(loss.data[0] - math.log(2.0)) < 1e-15

    def test_matches_scalar_oracle(self, rng):
        scores = rng.uniform(0.05, 0.95, size=6)
        targets = rng.uniform(0.0, 1.0, size=6)
        loss = predict.multilabel_loss(Tensor(scores), targets).data[0]
        expected = 0.0
        for s, t in zip(scores, targets):
            expected += -(t * math.log(s) + (1 - t) * math.log(1 - s))
        expected /= 6
        assert abs(loss - expected) < 1e-14

    def test_target_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            predict.multilabel_loss(Tensor([0.5]), np.array([1.5]))

    def test_gradient_passes_check(self, rng):
        raw = Tensor(rng.standard_normal(5), requires_grad=True)
        targets = np.array([1.0, 0.0, 0.0, 1.0, 0.0])

        def f():
            from dcn.tensor import sigmoid
            return predict.multilabel_loss(sigmoid(raw), targets)

        report = grad_check(f, [raw], tol=1e-5)
        assert report.passed, report.max_rel_error

    def test_loss_finite_at_extreme_scores(self):
        loss = predict.multilabel_loss(Tensor([1.0, 0.0]), np.array([0.0, 1.0]))
        assert np.isfinite(loss.data[0])


class TestCountParams:
    def test_fusion_matrix_count_forced(self):
        w = Tensor(np.zeros((4, 8)), requires_grad=True)
        b = Tensor(np.zeros(4), requires_grad=True)
        assert predict.param_count([("w", w)]) == 32
        assert predict.param_count([("w", w), ("b", b)]) == 36

    def test_head_ordering_at_desk_dims(self):
        counts = {}
        for head in (16, 17, 18):
            model = DcnModel(DcnConfig(head=head), seed=0)
            counts[head], _ = model.count_params()
        assert counts[16] < counts[17] < counts[18]

    def test_breakdown_sums_to_total(self):
        model = DcnModel(DcnConfig(), seed=0)
        total, breakdown = model.count_params()
        learnable = {k: v for k, v in breakdown.items() if k != "embedding_frozen"}
        assert sum(learnable.values()) == total
        assert breakdown["embedding_frozen"] == model.embedding.data.size
        named = model.named_params()
        assert total == sum(t.data.size for t in named.values())
