"""Whole-network assembly: parameter init, forward pass, checkpoints.

A DcnModel owns the frozen embedding table, the shared question/answer
encoder, the level-attention projections, the co-attention layer stack and
the prediction head, exposing a flat name -> Tensor registry used by the
optimizer and the checkpoint writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import coattn, encoder, predict
from .config import DcnConfig, RunConfig, N_LEVELS
from .tensor import (Tensor, concat_vecs, l2_normalize_cols, matmul,
                     load_tensor, save_tensor)


def glorot(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    """Glorot-uniform matrix with limit sqrt(6 / (rows + cols))."""
    limit = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, size=(rows, cols)), requires_grad=True)


def zeros_vec(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def orthogonal(rng: np.random.Generator, n: int) -> Tensor:
    """Orthogonal n x n matrix from the QR of a random normal draw."""
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))[None, :]
    return Tensor(q, requires_grad=True)


def _init_lstm_direction(rng: np.random.Generator, half: int, e: int) -> encoder.LstmDirection:
    ws = {g: glorot(rng, half, e) for g in encoder.GATES}
    us = {g: orthogonal(rng, half) for g in encoder.GATES}
    bs = {g: zeros_vec(half) for g in encoder.GATES}
    # start with an open forget gate
    bs["f"] = Tensor(np.ones(half), requires_grad=True)
    return encoder.LstmDirection(
        w_i=ws["i"], w_f=ws["f"], w_o=ws["o"], w_g=ws["g"],
        u_i=us["i"], u_f=us["f"], u_o=us["o"], u_g=us["g"],
        b_i=bs["i"], b_f=bs["f"], b_o=bs["o"], b_g=bs["g"],
    )


@dataclass
class ForwardResult:
    """Scores plus everything the export and stats commands need."""

    scores: Tensor
    s_q: Tensor
    s_v: Tensor
    alpha_q: Tensor
    alpha_v: Tensor
    layer_alpha: Tensor
    trace: coattn.StackTrace


class DcnModel:
    """The full network, built from a DcnConfig and an init seed."""

    def __init__(self, cfg: DcnConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0C]))
        d, e = cfg.d, cfg.e
        half = d // 2

        self.embedding = Tensor(rng.standard_normal((cfg.vocab_size, e)))
        self._emb_cols: dict[int, Tensor] = {}

        self.lstm = encoder.LstmParams(
            fwd=_init_lstm_direction(rng, half, e),
            bwd=_init_lstm_direction(rng, half, e),
            r=glorot(rng, d, e),
        )

        self.layer_attn = encoder.LayerAttnParams(
            projections=[glorot(rng, d, cfg.level_channels(j)) for j in range(N_LEVELS)],
            mlp_w1=glorot(rng, cfg.h_mlp, d),
            mlp_b1=zeros_vec(cfg.h_mlp),
            mlp_w2=glorot(rng, N_LEVELS, cfg.h_mlp),
            mlp_b2=zeros_vec(N_LEVELS),
        )

        self.coattn_layers: list[coattn.CoAttnLayerParams] = []
        for _ in range(cfg.layers):
            k = cfg.memory_slots
            self.coattn_layers.append(coattn.CoAttnLayerParams(
                w_v=[glorot(rng, cfg.d_head, d) for _ in range(cfg.heads)],
                w_q=[glorot(rng, cfg.d_head, d) for _ in range(cfg.heads)],
                m_q=glorot(rng, d, k) if k > 0 else None,
                m_v=glorot(rng, d, k) if k > 0 else None,
                w_fuse_q=glorot(rng, d, 2 * d),
                b_fuse_q=zeros_vec(d),
                w_fuse_v=glorot(rng, d, 2 * d),
                b_fuse_v=zeros_vec(d),
            ))

        hs = cfg.summary_hidden
        self.summary = predict.SummaryParams(
            word_mlp=predict.ScoreMlp(glorot(rng, hs, d), zeros_vec(hs),
                                      glorot(rng, 1, hs), zeros_vec(1)),
            region_mlp=predict.ScoreMlp(glorot(rng, hs, d), zeros_vec(hs),
                                        glorot(rng, 1, hs), zeros_vec(1)),
        )

        if cfg.head == 16:
            self.head = predict.HeadParams(variant=16, w=glorot(rng, d, d))
        else:
            in_width = d if cfg.head == 17 else 2 * d
            self.head = predict.HeadParams(variant=cfg.head, mlp=predict.ScoreMlp(
                glorot(rng, cfg.h_head, in_width), zeros_vec(cfg.h_head),
                glorot(rng, cfg.n_answers, cfg.h_head), zeros_vec(cfg.n_answers)))

    # -- parameter registry ------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        """Learnable tensors in a fixed order; the frozen embedding is excluded."""
        out: dict[str, Tensor] = {}
        for name, t in self.lstm.tensors():
            out[f"lstm.{name}"] = t
        for name, t in self.layer_attn.tensors():
            out[f"image.{name}"] = t
        for idx, layer in enumerate(self.coattn_layers):
            for name, t in layer.tensors():
                out[f"layer{idx}.{name}"] = t
        for name, t in self.summary.tensors():
            out[f"summary.{name}"] = t
        for name, t in self.head.tensors():
            out[f"head.{name}"] = t
        return out

    def count_params(self) -> tuple[int, dict[str, int]]:
        """Learnable scalar count and a per-component breakdown.

        The frozen embedding table is listed under ``embedding_frozen`` but
        excluded from the total.
        """
        breakdown = {
            "encoder_lstm": predict.param_count(self.lstm.tensors()),
            "image_extraction": predict.param_count(self.layer_attn.tensors()),
            "coattention": sum(predict.param_count(layer.tensors())
                               for layer in self.coattn_layers),
            "summaries": predict.param_count(self.summary.tensors()),
            "head": predict.param_count(self.head.tensors()),
        }
        total = sum(breakdown.values())
        breakdown["embedding_frozen"] = self.embedding.data.size
        return total, breakdown

    # -- forward -----------------------------------------------------------

    def answer_token_sequences(self) -> list[list[int]]:
        """Single-token sequences naming each answer attribute."""
        base = 1 + self.cfg.n_objects + self.cfg.n_fillers
        return [[base + a] for a in range(self.cfg.n_answers)]

    def image_levels(self, sample) -> list[Tensor]:
        """Project and depth-normalize the four pre-pooled c_j x t maps.

        Constant Tensor views of the pooled arrays are cached on the sample;
        they are model-independent and safe to share across graphs.
        """
        if not sample.pooled_tensors:
            sample.pooled_tensors = [Tensor(p) for p in sample.pooled]
        levels = []
        for j in range(N_LEVELS):
            projected = matmul(self.layer_attn.projections[j],
                               sample.pooled_tensors[j])
            levels.append(l2_normalize_cols(projected))
        return levels

    def forward(self, sample, train: bool = False,
                rng: np.random.Generator | None = None,
                dropout_fc: float = 0.0, dropout_lstm: float = 0.0) -> ForwardResult:
        """Score every answer for one sample.

        ``sample`` provides ``tokens`` (question ids) and ``pooled`` (four
        c_j x t max-pooled feature maps). Dropout is live only when
        ``train`` is set and the corresponding rate is positive.
        """
        from .train.optim import dropout as dropout_op

        cfg = self.cfg
        use_fc = train and dropout_fc > 0.0 and rng is not None
        use_lstm = train and dropout_lstm > 0.0 and rng is not None
        fc_fn = (lambda x: dropout_op(x, dropout_fc, rng, True)) if use_fc else None

        q, s_q = encoder.encode_question(sample.tokens, self.embedding,
                                         self.lstm, cfg.n_max, self._emb_cols)
        if use_lstm:
            q = dropout_op(q, dropout_lstm, rng, True)
            s_q = dropout_op(s_q, dropout_lstm, rng, True)

        levels = self.image_levels(sample)
        if cfg.extraction == "layer_attention":
            v, layer_alpha = encoder.layer_attention_fuse(s_q, levels,
                                                          self.layer_attn, fc_fn)
        else:
            v = levels[-1]
            alpha = np.zeros(N_LEVELS)
            alpha[-1] = 1.0
            layer_alpha = Tensor(alpha)

        q_final, v_final, trace = coattn.dcn_stack(
            q, v, self.coattn_layers, cfg.direction, fc_fn)

        uniform = cfg.summary == "average"
        s_ql, alpha_q = predict.self_attend_summary(
            q_final, self.summary.word_mlp, uniform, fc_fn)
        s_vl, alpha_v = predict.self_attend_summary(
            v_final, self.summary.region_mlp, uniform, fc_fn)

        if cfg.head == 16:
            per_answer = []
            for seq in self.answer_token_sequences():
                s_a = encoder.encode_answer(seq, self.embedding, self.lstm,
                                            cfg.n_max, self._emb_cols)
                if use_lstm:
                    s_a = dropout_op(s_a, dropout_lstm, rng, True)
                per_answer.append(predict.score_inner(s_ql, s_vl, s_a, self.head.w))
            scores = concat_vecs(per_answer)
        elif cfg.head == 17:
            scores = predict.score_sum_mlp(s_ql, s_vl, self.head.mlp, fc_fn)
        else:
            scores = predict.score_cat_mlp(s_ql, s_vl, self.head.mlp, fc_fn)

        return ForwardResult(scores=scores, s_q=s_ql, s_v=s_vl,
                             alpha_q=alpha_q, alpha_v=alpha_v,
                             layer_alpha=layer_alpha, trace=trace)

    def loss(self, sample, train: bool = False,
             rng: np.random.Generator | None = None,
             dropout_fc: float = 0.0, dropout_lstm: float = 0.0) -> Tensor:
        """Multi-label loss of one sample against its one-hot planted answer."""
        result = self.forward(sample, train, rng, dropout_fc, dropout_lstm)
        targets = np.zeros(self.cfg.n_answers)
        targets[sample.answer] = 1.0
        return predict.multilabel_loss(result.scores, targets)


def tiny_config(head: int = 17) -> DcnConfig:
    """Smallest exercisable architecture, used for whole-model checking."""
    return DcnConfig(
        d=8, e=6, heads=2, memory_slots=1, layers=2, t=4, n_max=14, c=2,
        n_objects=4, n_attributes=4, n_fillers=2, n_answers=4,
        h_mlp=6, h_summary=6, h_head=8, head=head,
    )


def full_model_grad_check(head: int = 17, seed: int = 0, step: float = 1e-5,
                          tol: float = 1e-4):
    """Finite-difference check of the whole loss at the tiny dimensions.

    Builds a one-sample dataset, differentiates the evaluation-mode loss
    with respect to every learnable tensor, and compares each entry against
    central differences.
    """
    from .tensor import grad_check
    from .train.data import gen_dataset

    cfg = tiny_config(head)
    model = DcnModel(cfg, seed=seed)
    ds = gen_dataset(1, cfg.t, cfg.n_objects, cfg.n_attributes, cfg.n_fillers,
                     cfg.c, 0.1, seed)
    sample = ds.samples[0]
    # fix the question at three tokens: filler, the queried object, filler
    query_obj = int(sample.objects[sample.query_pos])
    filler = 1 + cfg.n_objects
    sample.tokens = [filler, 1 + query_obj, filler + 1]
    params = model.named_params()
    names = list(params)
    return grad_check(lambda: model.loss(sample), [params[n] for n in names],
                      step=step, tol=tol, names=names)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def save_checkpoint(model: DcnModel, run_cfg: RunConfig, out_dir,
                    meta: dict | None = None) -> Path:
    """Write every tensor (params + frozen embedding) as DCNT plus a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors = dict(model.named_params())
    tensors["embedding"] = model.embedding
    for name in sorted(tensors):
        save_tensor(out_dir / f"{name}.dcnt", tensors[name])
    manifest = {
        "format": "dcnt-bundle",
        "tensors": sorted(tensors),
        "config": run_cfg.to_dict(),
    }
    if meta:
        manifest["meta"] = meta
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_dir


def load_checkpoint(ckpt_dir) -> tuple[DcnModel, RunConfig, dict]:
    """Rebuild a model from a DCNT bundle written by save_checkpoint."""
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / MANIFEST_NAME).read_text())
    run_cfg = RunConfig.from_dict(manifest["config"])
    model = DcnModel(run_cfg.model, seed=run_cfg.train.seed)
    tensors = dict(model.named_params())
    tensors["embedding"] = model.embedding
    for name in manifest["tensors"]:
        if name not in tensors:
            raise ValueError(f"checkpoint tensor {name!r} has no slot in the model")
        data = load_tensor(ckpt_dir / f"{name}.dcnt")
        if data.shape != tensors[name].data.shape:
            raise ValueError(f"checkpoint tensor {name!r} shape {data.shape} "
                             f"does not match model {tensors[name].data.shape}")
        tensors[name].data = data
    return model, run_cfg, manifest.get("meta", {})
