"""Per-architecture capture logic.

For every encoder block two tensors are recorded: the attention module's
output-projection result before the residual addition (attn_out), and the
token state right after that residual addition (feat_resid). ViT, DeiT and
BEiT expose the same block anatomy; BEiT scales the attention branch by a
learned per-channel lambda before adding it back, which the feature
reconstruction has to include. Windowed or convolutional variants (Swin,
CvT) reshape tokens per stage and are rejected explicitly rather than
guessed at.
"""

from __future__ import annotations

import torch

SUPPORTED_MODEL_TYPES = ("vit", "deit", "beit")


class UnsupportedModelError(Exception):
    """The checkpoint's architecture has no registered capture adapter."""


def encoder_layers(model) -> list[torch.nn.Module]:
    """Locate the stack of encoder blocks across transformers versions."""
    if hasattr(model, "layers"):
        return list(model.layers)
    if hasattr(model, "encoder") and hasattr(model.encoder, "layer"):
        return list(model.encoder.layer)
    raise UnsupportedModelError(
        f"cannot find encoder blocks on {type(model).__name__}"
    )


def attention_out_module(layer) -> torch.nn.Module:
    """The attention output projection inside one encoder block."""
    attn = layer.attention
    if hasattr(attn, "o_proj"):
        return attn.o_proj
    if hasattr(attn, "output") and hasattr(attn.output, "dense"):
        return attn.output.dense
    raise UnsupportedModelError(
        f"cannot find the attention output projection on {type(layer).__name__}"
    )


def attention_branch_scale(layer) -> torch.Tensor | None:
    """BEiT-style per-channel scale applied to the attention branch before
    the residual addition; None when the branch is added unscaled."""
    scale = getattr(layer, "lambda_1", None)
    return scale


def check_supported(model) -> str:
    model_type = getattr(model.config, "model_type", "unknown")
    if model_type not in SUPPORTED_MODEL_TYPES:
        raise UnsupportedModelError(
            f"model type {model_type!r} has no capture adapter; supported: "
            + ", ".join(SUPPORTED_MODEL_TYPES)
        )
    encoder_layers(model)
    return model_type


class BlockRecorder:
    """Forward hooks over every encoder block of a supported model.

    After a forward pass, `attn_out[i]` and `feat_resid[i]` hold the two
    recorded tensors of block i for the current batch.
    """

    def __init__(self, model):
        check_supported(model)
        self.layers = encoder_layers(model)
        self.attn_out: list[torch.Tensor] = [None] * len(self.layers)
        self.feat_resid: list[torch.Tensor] = [None] * len(self.layers)
        self._inputs: list[torch.Tensor] = [None] * len(self.layers)
        self._handles = []
        for i, layer in enumerate(self.layers):
            self._handles.append(layer.register_forward_pre_hook(
                self._save_input(i)))
            self._handles.append(attention_out_module(layer).register_forward_hook(
                self._save_attn(i, attention_branch_scale(layer))))

    def _save_input(self, i):
        def hook(module, args):
            self._inputs[i] = args[0].detach()
        return hook

    def _save_attn(self, i, scale):
        def hook(module, args, output):
            attn = output.detach()
            self.attn_out[i] = attn
            branch = attn if scale is None else scale.detach() * attn
            self.feat_resid[i] = self._inputs[i] + branch
        return hook

    def remove(self) -> None:
        for handle in self._handles:
            handle.remove()
        self._handles = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.remove()
