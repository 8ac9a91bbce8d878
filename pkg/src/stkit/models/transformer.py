"""Pre-norm Transformer encoder-decoder with an optional convolutional speech frontend."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError
from ..tensor import Tensor, default_dtype, label_smoothed_ce, no_grad, ops
from .config import TransformerConfig
from .layers import (Dense, Dropout, FeedForward, LayerNorm, Module, MultiHeadAttention, causal_bias,
                     padding_bias, xavier_uniform)


def _ceil_div(x, s):
    return -(-np.asarray(x) // s)


class SpeechFrontend(Module):
    """Two strided conv layers, each followed by layer norm and ReLU, then a projection to d_model.

    Frames beyond each utterance's length are zeroed on input and after every
    conv, so padding content never leaks into real frames.
    """

    def __init__(self, rng, cfg: TransformerConfig):
        super().__init__()
        k, c = cfg.frontend_kernel, cfg.frontend_channels
        self.stride = cfg.frontend_stride
        in_ch = 1
        self.convs = []
        for i in range(2):
            fan_in, fan_out = k * k * in_ch, k * k * c
            kernel = self.add_param(f"conv{i}.kernel", xavier_uniform(rng, (k, k, in_ch, c), fan_in, fan_out))
            bias = self.add_param(f"conv{i}.bias", np.zeros(c))
            ln = self.add_child(f"conv{i}_ln", LayerNorm(c))
            self.convs.append((kernel, bias, ln))
            in_ch = c
        self.proj = self.add_child("proj", Dense(rng, cfg.frontend_flat_dim, cfg.d_model))

    def __call__(self, feats, lengths):
        lengths = np.asarray(lengths)
        feats = np.asarray(feats)
        keep = np.arange(feats.shape[1])[None, :] < lengths[:, None]
        x = Tensor(np.where(keep[:, :, None], feats, 0)[..., None], dtype=default_dtype())
        for kernel, bias, ln in self.convs:
            x = ops.relu(ln(ops.conv2d(x, kernel, bias, stride=self.stride)))
            lengths = _ceil_div(lengths, self.stride)
            keep = (np.arange(x.shape[1])[None, :] < lengths[:, None]).astype(x.dtype)
            x = ops.mul(x, Tensor(keep[:, :, None, None], dtype=x.dtype))
        b, t, f, c = x.shape
        return self.proj(ops.reshape(x, (b, t, f * c))), lengths


class EncoderLayer(Module):
    def __init__(self, rng, cfg, root):
        super().__init__()
        self.self_attn_ln = self.add_child("self_attn_ln", LayerNorm(cfg.d_model))
        self.self_attn = self.add_child("self_attn", MultiHeadAttention(rng, cfg.d_model, cfg.num_heads, cfg.dropout, root))
        self.ffn_ln = self.add_child("ffn_ln", LayerNorm(cfg.d_model))
        self.ffn = self.add_child("ffn", FeedForward(rng, cfg.d_model, cfg.ffn_dim, cfg.dropout, root))
        self.dropout = Dropout(cfg.dropout, root)

    def __call__(self, x, bias):
        h = self.self_attn_ln(x)
        x = ops.add(x, self.dropout(self.self_attn(h, h, bias)))
        return ops.add(x, self.dropout(self.ffn(self.ffn_ln(x))))


class DecoderLayer(Module):
    def __init__(self, rng, cfg, root):
        super().__init__()
        d, h = cfg.d_model, cfg.num_heads
        self.self_attn_ln = self.add_child("self_attn_ln", LayerNorm(d))
        self.self_attn = self.add_child("self_attn", MultiHeadAttention(rng, d, h, cfg.dropout, root))
        self.cross_attn_ln = self.add_child("cross_attn_ln", LayerNorm(d))
        self.cross_attn = self.add_child("cross_attn", MultiHeadAttention(rng, d, h, cfg.dropout, root))
        self.ffn_ln = self.add_child("ffn_ln", LayerNorm(d))
        self.ffn = self.add_child("ffn", FeedForward(rng, d, cfg.ffn_dim, cfg.dropout, root))
        self.dropout = Dropout(cfg.dropout, root)

    def __call__(self, y, self_bias, mem_k, mem_v, mem_bias, cache=None):
        h = self.self_attn_ln(y)
        k, v = self.self_attn.project_kv(h)
        if cache is not None:
            if cache.get("k") is not None:
                k = ops.concat([cache["k"], k], axis=2)
                v = ops.concat([cache["v"], v], axis=2)
            cache["k"], cache["v"] = k, v
        y = ops.add(y, self.dropout(self.self_attn.attend(h, k, v, self_bias)))
        y = ops.add(y, self.dropout(self.cross_attn.attend(self.cross_attn_ln(y), mem_k, mem_v, mem_bias)))
        return ops.add(y, self.dropout(self.ffn(self.ffn_ln(y))))


class Encoder(Module):
    def __init__(self, rng, cfg: TransformerConfig, root):
        super().__init__()
        self.cfg = cfg
        if cfg.is_speech_input:
            self.frontend = self.add_child("frontend", SpeechFrontend(rng, cfg))
        else:
            self.embedding = self.add_param(
                "embedding.weight", xavier_uniform(rng, (cfg.src_vocab_size, cfg.d_model), cfg.src_vocab_size, cfg.d_model))
        self.layers = [self.add_child(f"layer{i}", EncoderLayer(rng, cfg, root)) for i in range(cfg.num_encoder_layers)]
        self.final_ln = self.add_child("final_ln", LayerNorm(cfg.d_model))
        self.dropout = Dropout(cfg.dropout, root)
        self.root = root

    def __call__(self, src, lengths):
        """Returns ``(memory (B, T', d), valid (B, T') bool)``."""
        src = np.asarray(src)
        lengths = np.asarray(lengths)
        if src.size == 0 or src.shape[1] == 0 or np.any(lengths < 1):
            raise ContractError("encoder input must be nonempty")
        if self.cfg.is_speech_input:
            x, out_lengths = self.frontend(src, lengths)
        else:
            x = ops.scale(ops.embedding_lookup(self.embedding, src), math.sqrt(self.cfg.d_model))
            out_lengths = lengths
        t = x.shape[1]
        if t > self.cfg.max_positions:
            raise ContractError(f"encoder length {t} exceeds positional table size {self.cfg.max_positions}")
        x = ops.add(x, Tensor(self.root.positions(t), dtype=x.dtype))
        x = self.dropout(x)
        valid = np.arange(t)[None, :] < out_lengths[:, None]
        bias = padding_bias(valid)
        for layer in self.layers:
            x = layer(x, bias)
        return self.final_ln(x), valid


class Decoder(Module):
    def __init__(self, rng, cfg: TransformerConfig, root):
        super().__init__()
        self.cfg = cfg
        v, d = cfg.tgt_vocab_size, cfg.d_model
        self.embedding = self.add_param("embedding.weight", xavier_uniform(rng, (v, d), v, d))
        self.layers = [self.add_child(f"layer{i}", DecoderLayer(rng, cfg, root)) for i in range(cfg.num_decoder_layers)]
        self.final_ln = self.add_child("final_ln", LayerNorm(d))
        self.dropout = Dropout(cfg.dropout, root)
        self.root = root

    def _embed(self, ids, offset):
        ids = np.asarray(ids)
        end = offset + ids.shape[1]
        if end > self.cfg.max_positions:
            raise ContractError(f"decoder prefix length {end} exceeds positional table size {self.cfg.max_positions}")
        y = ops.scale(ops.embedding_lookup(self.embedding, ids), math.sqrt(self.cfg.d_model))
        return self.dropout(ops.add(y, Tensor(self.root.positions(end)[offset:end], dtype=y.dtype)))

    def memory_kv(self, memory):
        return [layer.cross_attn.project_kv(memory) for layer in self.layers]

    def __call__(self, tgt_in, memory, valid, caches=None, offset=0, mem_kv=None):
        """Logits (B, L, V) for decoder inputs ``tgt_in`` (B, L)."""
        y = self._embed(tgt_in, offset)
        length = y.shape[1]
        self_bias = causal_bias(length, offset) if length > 1 or caches is None else None
        mem_bias = padding_bias(valid)
        mem_kv = mem_kv or self.memory_kv(memory)
        for i, layer in enumerate(self.layers):
            cache = caches[i] if caches is not None else None
            y = layer(y, self_bias, mem_kv[i][0], mem_kv[i][1], mem_bias, cache)
        # tied output projection, scaled so that initial logits are near-uniform
        y = ops.scale(self.final_ln(y), self.cfg.d_model ** -0.5)
        return ops.matmul(y, ops.transpose(self.embedding))


class Transformer(Module):
    """Encoder-decoder; the decoder's input embedding doubles as its output projection."""

    def __init__(self, cfg: TransformerConfig, seed=0):
        super().__init__()
        self.cfg = cfg
        init_rng = np.random.default_rng(seed)
        self.rng = np.random.default_rng(seed + 1)
        self._pos_table = None
        self.encoder = self.add_child("encoder", Encoder(init_rng, cfg, self))
        self.decoder = self.add_child("decoder", Decoder(init_rng, cfg, self))

    def positions(self, length):
        table = self._pos_table
        if table is None or table.shape[0] < length or table.dtype != default_dtype():
            table = ops.positional_encoding(max(length, 64), self.cfg.d_model, default_dtype())
            self._pos_table = table
        return table[:length]

    def parameters(self):
        return self.named_parameters()

    def seed_dropout(self, seed):
        self.rng = np.random.default_rng(seed)

    def encode(self, src, lengths):
        return self.encoder(src, lengths)

    def logits(self, batch):
        memory, valid = self.encode(batch.src, batch.src_lengths)
        return self.decoder(batch.tgt_in, memory, valid)

    def forward_loss(self, batch, label_smoothing=0.1):
        """Teacher-forced label-smoothed loss; returns ``(loss Tensor, gold nll float)``."""
        logits = self.logits(batch)
        return label_smoothed_ce(logits, batch.tgt_out, label_smoothing, batch.tgt_mask)

    def decode_step(self, memory, valid, prefix):
        """Next-token log-probabilities for each prefix row (full recomputation)."""
        with no_grad():
            logits = self.decoder(np.asarray(prefix), memory, valid)
            return ops.log_softmax(logits).data[:, -1, :]

    def incremental_decoder(self, memory, valid):
        return IncrementalDecoder(self, memory, valid)


class IncrementalDecoder:
    """Beam-search scorer over one encoded utterance, caching decoder self-attention keys/values.

    Cross-attention keys/values are computed once and broadcast over however
    many hypotheses are alive.
    """

    def __init__(self, model: Transformer, memory, valid):
        if memory.shape[0] != 1:
            raise ContractError("incremental decoding works on a single utterance")
        self.model = model
        self.vocab_size = model.cfg.tgt_vocab_size
        with no_grad():
            self.mem_kv = model.decoder.memory_kv(memory)
        self.valid = np.asarray(valid)

    def initial_state(self):
        return {"pos": 0, "caches": [{"k": None, "v": None} for _ in self.model.decoder.layers]}

    def step(self, state, tokens):
        caches = [dict(c) for c in state["caches"]]
        with no_grad():
            logits = self.model.decoder(np.asarray(tokens)[:, None], None, self.valid, caches=caches,
                                        offset=state["pos"], mem_kv=self.mem_kv)
            logp = ops.log_softmax(logits).data[:, -1, :]
        return logp.astype(np.float64), {"pos": state["pos"] + 1, "caches": caches}

    def reorder(self, state, index):
        index = np.asarray(index, dtype=np.int64)
        caches = [{"k": Tensor(c["k"].data[index]), "v": Tensor(c["v"].data[index])} if c["k"] is not None
                  else dict(c) for c in state["caches"]]
        return {"pos": state["pos"], "caches": caches}
