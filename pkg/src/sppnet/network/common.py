"""Shared layers: channel norm for NCHW maps, stacked MLP, multi-head attention."""

import torch
from torch import nn

from sppnet.errors import ConfigError


class LayerNorm2d(nn.Module):
    """LayerNorm across the channel dimension of an NCHW tensor."""

    def __init__(self, num_channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(num_channels))
        self.bias = nn.Parameter(torch.zeros(num_channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(1, keepdim=True)
        var = (x - mu).pow(2).mean(1, keepdim=True)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return self.weight[:, None, None] * x + self.bias[:, None, None]


class MLP(nn.Module):
    """`num_layers` linear layers with activations in between (none after the last)."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int,
                 num_layers: int = 2, activation=nn.GELU):
        super().__init__()
        hidden = [hidden_dim] * (num_layers - 1)
        self.layers = nn.ModuleList(
            nn.Linear(a, b) for a, b in zip([in_dim] + hidden, hidden + [out_dim])
        )
        self.act = activation()

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
        return x


class Attention(nn.Module):
    """Multi-head attention with separate query/key/value inputs."""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads != 0:
            raise ConfigError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.num_heads = num_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split_heads(self, x):
        b, n, _ = x.shape
        return x.reshape(b, n, self.num_heads, -1).transpose(1, 2)

    def attention_weights(self, q, k):
        """Softmax attention map (B, heads, n_q, n_k); each row sums to 1."""
        qh = self._split_heads(self.q_proj(q))
        kh = self._split_heads(self.k_proj(k))
        scale = qh.shape[-1] ** -0.5
        return torch.softmax(qh @ kh.transpose(-2, -1) * scale, dim=-1)

    def forward(self, q, k, v):
        weights = self.attention_weights(q, k)
        vh = self._split_heads(self.v_proj(v))
        out = (weights @ vh).transpose(1, 2).reshape(q.shape[0], q.shape[1], self.dim)
        return self.out_proj(out)
