"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one [PASS]/[FAIL] line. The direction-ordering criterion
trains nine models and dominates the runtime; the whole module is a
deliberate full check, not a quick unit pass.
"""

import math
import time

import numpy as np

from dcn import coattn
from dcn.config import RunConfig, TrainConfig, paper_dims
from dcn.model import DcnModel, full_model_grad_check
from dcn.tensor import Tensor, softmax_rows
from dcn.train.data import make_splits, mean_pool_baseline_accuracy
from dcn.train.loop import train_loop
from dcn.train.optim import lr_at

from test_coattn import make_layer_params


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_full_scale_accuracies_not_reproduced():
    """The published full-scale accuracies need pretrained backbones and the
    real datasets; this artifact substitutes the property suite below."""
    report("full-scale accuracy substitution",
           True, "out of scope by design; property suite stands in")


def test_gradient_soundness():
    start = time.monotonic()
    reports = full_model_grad_check(head=17, seed=0)
    elapsed = time.monotonic() - start
    ok = reports.passed and reports.max_rel_error < 1e-4 and elapsed < 60.0
    report("gradient soundness",
           ok, f"max rel error {reports.max_rel_error:.3e} in {elapsed:.1f}s "
               f"(tol 1e-4, budget 60s)")


def test_attention_laws():
    rng = np.random.default_rng(2024)
    worst_row_sum = 0.0
    worst_avg = 0.0
    worst_perm = 0.0
    for i in range(1000):
        d = 8
        heads = int(rng.choice([1, 2, 4]))
        k = int(rng.integers(0, 4))
        t = int(rng.integers(2, 7))
        n = int(rng.integers(2, 7))
        p = make_layer_params(d, heads=heads, k=k, rng=rng)
        q = Tensor(rng.standard_normal((d, n)))
        v = Tensor(rng.standard_normal((d, t)))

        q2, v2, maps = coattn.dense_coattn_layer(q, v, p)
        worst_row_sum = max(worst_row_sum,
                            float(np.max(np.abs(maps.a_q.data.sum(axis=1) - 1.0))),
                            float(np.max(np.abs(maps.a_v.data.sum(axis=1) - 1.0))))

        # averaging equivalence: attending with the head-mean map equals
        # the mean of per-head attended features
        q_aug = coattn.augment_with_memory(q, p.m_q)
        v_aug = coattn.augment_with_memory(v, p.m_v)
        affs = [coattn.head_affinity(v_aug, q_aug, p.w_v[j], p.w_q[j])
                for j in range(heads)]
        root = math.sqrt(p.d_head)
        head_maps = [softmax_rows(a, root).data for a in affs]
        mean_map = sum(head_maps) / heads
        lhs = q_aug.data @ mean_map[:t, :].T
        rhs = sum(q_aug.data @ m[:t, :].T for m in head_maps) / heads
        worst_avg = max(worst_avg, float(np.max(np.abs(lhs - rhs))))

        if i % 10 == 0:
            perm = rng.permutation(t)
            q_p, v_p, _ = coattn.dense_coattn_layer(q, Tensor(v.data[:, perm]), p)
            worst_perm = max(
                worst_perm,
                float(np.max(np.abs(v_p.data - v2.data[:, perm]))),
                float(np.max(np.abs(q_p.data - q2.data))))

    ok = worst_row_sum < 1e-10 and worst_avg < 1e-12 and worst_perm < 1e-10
    report("attention laws", ok,
           f"row-sum dev {worst_row_sum:.2e} (1e-10), averaging dev "
           f"{worst_avg:.2e} (1e-12), permutation dev {worst_perm:.2e} (1e-10)")


def test_residual_identity():
    rng = np.random.default_rng(7)
    layers = [make_layer_params(16, heads=4, k=3, rng=rng, fusion_zero=True)
              for _ in range(3)]
    q = Tensor(rng.standard_normal((16, 5)))
    v = Tensor(rng.standard_normal((16, 9)))
    q3, v3, _ = coattn.dcn_stack(q, v, layers)
    ok = np.array_equal(q3.data, q.data) and np.array_equal(v3.data, v.data)
    report("residual identity", ok, "zero-init L=3 stack is exactly identity")


def test_synthetic_task_and_baseline():
    run_cfg = RunConfig()   # the desk defaults are the criterion config
    assert (run_cfg.model.d, run_cfg.model.heads, run_cfg.model.memory_slots,
            run_cfg.model.layers, run_cfg.model.t) == (32, 4, 3, 2, 16)
    assert (run_cfg.model.n_objects, run_cfg.model.n_attributes) == (8, 8)
    assert (run_cfg.data.n_train, run_cfg.data.n_test) == (5000, 1000)
    assert run_cfg.train.max_epochs <= 20

    start = time.monotonic()
    train_ds, test_ds = make_splits(run_cfg.model, run_cfg.data, run_cfg.train.seed)
    model = DcnModel(run_cfg.model, seed=run_cfg.train.seed)
    result = train_loop(model, train_ds, run_cfg, eval_ds=test_ds,
                        stop_accuracy=0.9)
    elapsed = time.monotonic() - start
    ok_model = result.best_accuracy >= 0.9 and elapsed < 600.0

    baseline = mean_pool_baseline_accuracy(train_ds, test_ds)
    ok_baseline = baseline <= 0.25
    report("synthetic task", ok_model and ok_baseline,
           f"model {result.best_accuracy:.3f} >= 0.9 at epoch "
           f"{result.best_epoch} in {elapsed:.0f}s (< 600s); "
           f"mean-pool baseline {baseline:.3f} <= 0.25")


DIRECTION_SEEDS = (0, 1, 2)


def test_direction_ablation_ordering():
    """Bidirectional attention beats each single direction on average."""
    scores = {"both": [], "question_guided": [], "image_guided": []}
    for seed in DIRECTION_SEEDS:
        run_cfg = RunConfig()
        run_cfg.data.n_test = 400
        run_cfg.train.seed = seed
        run_cfg.train.batch_size = 4
        run_cfg.train.max_epochs = 6
        run_cfg.train.dropout_fc = 0.0
        run_cfg.train.dropout_lstm = 0.0
        train_ds, test_ds = make_splits(run_cfg.model, run_cfg.data, seed)
        for mode in scores:
            cfg = RunConfig.from_dict(run_cfg.to_dict())
            cfg.model.direction = mode
            model = DcnModel(cfg.model, seed=seed)
            res = train_loop(model, train_ds, cfg, eval_ds=test_ds,
                             stop_accuracy=1.0)
            scores[mode].append(res.best_accuracy)
    means = {mode: float(np.mean(v)) for mode, v in scores.items()}
    ok = (means["both"] >= means["question_guided"]
          and means["both"] >= means["image_guided"])
    report("direction ablation ordering", ok,
           f"mean accuracy both={means['both']:.3f} >= "
           f"I<-Q={means['question_guided']:.3f}, "
           f"I->Q={means['image_guided']:.3f} over seeds {DIRECTION_SEEDS}")


def test_parameter_count_at_paper_dims():
    counts = {}
    for head in (16, 17, 18):
        cfg = paper_dims()
        cfg.head = head
        counts[head], breakdown = DcnModel(cfg, seed=0).count_params()
    ordered = counts[16] < counts[17] < counts[18]
    within = abs(counts[16] - 28e6) <= 0.25 * 28e6
    report("parameter count", ordered and within,
           f"head16={counts[16]:,} (28M +/- 25%), head17={counts[17]:,}, "
           f"head18={counts[18]:,}")


def test_learning_rate_schedule():
    cfg = TrainConfig(decay_epochs=4)
    values = (lr_at(0, cfg), lr_at(4, cfg), lr_at(8, cfg))
    ok = values == (0.001, 0.0005, 0.00025)
    report("schedule", ok, f"lr at epochs 0/4/8 = {values} (exact)")


def test_determinism():
    outs = []
    for run in range(2):
        run_cfg = RunConfig()
        run_cfg.data.n_train = 80
        run_cfg.data.n_test = 40
        run_cfg.train.max_epochs = 2
        train_ds, test_ds = make_splits(run_cfg.model, run_cfg.data,
                                        run_cfg.train.seed)
        model = DcnModel(run_cfg.model, seed=run_cfg.train.seed)
        import tempfile
        from pathlib import Path
        out_dir = Path(tempfile.mkdtemp(prefix=f"dcn-det-{run}-"))
        train_loop(model, train_ds, run_cfg, eval_ds=test_ds, out_dir=out_dir)
        blob = {"metrics": (out_dir / "metrics.csv").read_bytes()}
        for f in sorted((out_dir / "checkpoint").iterdir()):
            blob[f.name] = f.read_bytes()
        outs.append(blob)
    ok = outs[0].keys() == outs[1].keys() and all(
        outs[0][k] == outs[1][k] for k in outs[0])
    report("determinism", ok,
           "two identical-seed runs produced byte-identical logs and checkpoints")
