"""Reverse-mode autodiff over an explicit tape of primitive operations.

A Tape records nodes in execution order (which is already topological for the
feed-forward graphs built here). Each node stores its forward value and a vjp
closure; Tape.backward walks the list in reverse, pushing cotangents to parent
nodes and accumulating into Parameter.grad at the leaves.

Primitives cover what the models need: parameter leaves, embedding lookup,
affine maps (vector and row-batched), elementwise activations, concatenation
and stacking, log-softmax, gathers, and a fused LSTM step whose vjp is the
standard hand-derived cell backward.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import UsageError
from .nn import LstmParams, Parameter


class Node:
    __slots__ = ("value", "grad", "_vjp")

    def __init__(self, value, vjp=None):
        self.value = value
        self.grad = None
        self._vjp = vjp

    def add_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g


class Tape:
    """Ordered record of one forward pass; backward() may run once."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._param_nodes: dict[int, Node] = {}
        self._used = False

    def _emit(self, value, vjp=None) -> Node:
        node = Node(np.asarray(value, dtype=np.float64), vjp)
        self._nodes.append(node)
        return node

    def backward(self, root: Node, seed: float = 1.0):
        """Accumulate d(root)/d(param) into Parameter.grad for every leaf."""
        if self._used:
            raise UsageError("backward already ran on this tape; build a new one")
        self._used = True
        root.add_grad(np.full_like(root.value, seed))
        for node in reversed(self._nodes):
            if node.grad is not None and node._vjp is not None:
                node._vjp(node.grad)

    # -- leaves ------------------------------------------------------------

    def param(self, p: Parameter) -> Node:
        key = id(p)
        node = self._param_nodes.get(key)
        if node is None:
            def vjp(g, p=p):
                p.grad += g
            node = self._emit(p.value, vjp)
            self._param_nodes[key] = node
        return node

    def const(self, value) -> Node:
        return self._emit(value)

    def lookup(self, p: Parameter, row: int) -> Node:
        def vjp(g, p=p, row=row):
            p.grad[row] += g
        return self._emit(p.value[row], vjp)

    # -- elementwise -------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        def vjp(g, a=a, b=b):
            a.add_grad(g)
            b.add_grad(g)
        return self._emit(a.value + b.value, vjp)

    def mul(self, a: Node, b: Node) -> Node:
        def vjp(g, a=a, b=b):
            a.add_grad(g * b.value)
            b.add_grad(g * a.value)
        return self._emit(a.value * b.value, vjp)

    def mul_const(self, a: Node, c) -> Node:
        c = np.asarray(c, dtype=np.float64)

        def vjp(g, a=a, c=c):
            a.add_grad(g * c)
        return self._emit(a.value * c, vjp)

    def neg(self, a: Node) -> Node:
        def vjp(g, a=a):
            a.add_grad(-g)
        return self._emit(-a.value, vjp)

    def sigmoid(self, a: Node) -> Node:
        out_val = nn.sigmoid(a.value)

        def vjp(g, a=a, s=out_val):
            a.add_grad(g * s * (1.0 - s))
        return self._emit(out_val, vjp)

    def tanh(self, a: Node) -> Node:
        out_val = np.tanh(a.value)

        def vjp(g, a=a, t=out_val):
            a.add_grad(g * (1.0 - t * t))
        return self._emit(out_val, vjp)

    def relu(self, a: Node) -> Node:
        def vjp(g, a=a):
            a.add_grad(g * (a.value > 0))
        return self._emit(np.maximum(a.value, 0.0), vjp)

    def log_sigmoid(self, a: Node) -> Node:
        def vjp(g, a=a):
            a.add_grad(g * nn.sigmoid(-a.value))
        return self._emit(nn.log_sigmoid(a.value), vjp)

    # -- shape ops ---------------------------------------------------------

    def concat(self, a: Node, b: Node) -> Node:
        na = a.value.shape[0]

        def vjp(g, a=a, b=b, na=na):
            a.add_grad(g[:na])
            b.add_grad(g[na:])
        return self._emit(np.concatenate([a.value, b.value]), vjp)

    def stack(self, rows: list[Node]) -> Node:
        def vjp(g, rows=tuple(rows)):
            for k, r in enumerate(rows):
                r.add_grad(g[k])
        return self._emit(np.stack([r.value for r in rows]), vjp)

    def row(self, m: Node, idx: int) -> Node:
        def vjp(g, m=m, idx=idx):
            if m.grad is None:
                m.grad = np.zeros_like(m.value)
            m.grad[idx] += g
        return self._emit(m.value[idx], vjp)

    # -- linear maps -------------------------------------------------------

    def affine(self, w: Node, x: Node, b: Node) -> Node:
        """w @ x + b for a vector x."""
        def vjp(g, w=w, x=x, b=b):
            w.add_grad(np.outer(g, x.value))
            x.add_grad(w.value.T @ g)
            b.add_grad(g)
        return self._emit(w.value @ x.value + b.value, vjp)

    def rows_affine(self, x: Node, w: Node, b: Node) -> Node:
        """x @ w.T + b for a row-batched x of shape (n, d); w is (m, d)."""
        def vjp(g, x=x, w=w, b=b):
            x.add_grad(g @ w.value)
            w.add_grad(g.T @ x.value)
            b.add_grad(g.sum(axis=0))
        return self._emit(x.value @ w.value.T + b.value, vjp)

    def rows_dot(self, x: Node, w: Node, b: Node) -> Node:
        """x @ w + b -> (n,) for x of shape (n, d), w (d,), scalar-ish b."""
        def vjp(g, x=x, w=w, b=b):
            x.add_grad(np.outer(g, w.value))
            w.add_grad(x.value.T @ g)
            b.add_grad(np.asarray(g.sum()).reshape(b.value.shape))
        return self._emit(x.value @ w.value + b.value, vjp)

    def pair_table(self, h: Node, s: Node) -> Node:
        """All (row of h, row of s) concatenations: shape (J*I, dh + ds).

        Row r = j*I + i holds [h[i]; s[j]], matching a column-major walk over
        an I x J lattice.
        """
        n_i, dh = h.value.shape
        n_j, ds = s.value.shape
        left = np.tile(h.value, (n_j, 1))
        right = np.repeat(s.value, n_i, axis=0)

        def vjp(g, h=h, s=s, n_i=n_i, n_j=n_j, dh=dh):
            g3 = g.reshape(n_j, n_i, dh + s.value.shape[1])
            h.add_grad(g3[:, :, :dh].sum(axis=0))
            s.add_grad(g3[:, :, dh:].sum(axis=1))
        return self._emit(np.concatenate([left, right], axis=1), vjp)

    # -- probabilistic heads -------------------------------------------------

    def log_softmax(self, v: Node) -> Node:
        out_val = nn.log_softmax(v.value)

        def vjp(g, v=v, out_val=out_val):
            v.add_grad(g - np.exp(out_val) * g.sum())
        return self._emit(out_val, vjp)

    def log_softmax_rows(self, m: Node) -> Node:
        out_val = nn.log_softmax_rows(m.value)

        def vjp(g, m=m, out_val=out_val):
            m.add_grad(g - np.exp(out_val) * g.sum(axis=1, keepdims=True))
        return self._emit(out_val, vjp)

    def take_cols(self, m: Node, cols: np.ndarray) -> Node:
        rows = np.arange(m.value.shape[0])

        def vjp(g, m=m, rows=rows, cols=cols):
            if m.grad is None:
                m.grad = np.zeros_like(m.value)
            np.add.at(m.grad, (rows, cols), g)
        return self._emit(m.value[rows, cols], vjp)

    def pick(self, v: Node, idx: int) -> Node:
        def vjp(g, v=v, idx=idx):
            if v.grad is None:
                v.grad = np.zeros_like(v.value)
            v.grad[idx] += g
        return self._emit(v.value[idx], vjp)

    def weighted_sum(self, v: Node, weights) -> Node:
        """sum(v * weights) with constant weights; the workhorse for losses."""
        weights = np.asarray(weights, dtype=np.float64)

        def vjp(g, v=v, weights=weights):
            v.add_grad(g * weights)
        return self._emit(np.sum(v.value * weights), vjp)

    # -- fused LSTM step -----------------------------------------------------

    def lstm_step(self, params: LstmParams, x: Node,
                  prev: tuple[Node, Node] | None) -> tuple[Node, Node]:
        """One LSTM step as a single primitive; returns (h, c) nodes.

        prev is a pair of (h, c) nodes or None for the zero initial state.
        Parameter gradients are written directly by the vjp.
        """
        hd = params.hidden_dim
        h_prev = prev[0].value if prev is not None else np.zeros(hd)
        c_prev = prev[1].value if prev is not None else np.zeros(hd)
        h_new, c_new, (g_act, i_act, f_act, o_act, tanh_c) = nn.lstm_cell_math(
            params, x.value, h_prev, c_prev)

        def vjp(grad, params=params, x=x, prev=prev, h_prev=h_prev,
                c_prev=c_prev, acts=(g_act, i_act, f_act, o_act, tanh_c)):
            g_act, i_act, f_act, o_act, tanh_c = acts
            gh, gc_in = grad[0], grad[1]
            d_o = gh * tanh_c
            dc = gh * o_act * (1.0 - tanh_c * tanh_c) + gc_in
            d_g = dc * i_act
            d_i = dc * g_act
            d_f = dc * c_prev
            dc_prev = dc * f_act
            pre = {
                "g": d_g * (1.0 - g_act * g_act),
                "i": d_i * i_act * (1.0 - i_act),
                "f": d_f * f_act * (1.0 - f_act),
                "o": d_o * o_act * (1.0 - o_act),
            }
            dx = np.zeros_like(x.value)
            dh_prev = np.zeros_like(h_prev)
            for gate, d_pre in pre.items():
                wx = getattr(params, f"w_{gate}x")
                wh = getattr(params, f"w_{gate}h")
                b = getattr(params, f"b_{gate}")
                wx.grad += np.outer(d_pre, x.value)
                wh.grad += np.outer(d_pre, h_prev)
                b.grad += d_pre
                dx += wx.value.T @ d_pre
                dh_prev += wh.value.T @ d_pre
            x.add_grad(dx)
            if prev is not None:
                prev[0].add_grad(dh_prev)
                prev[1].add_grad(dc_prev)

        cell = self._emit(np.stack([h_new, c_new]), vjp)
        return self.row(cell, 0), self.row(cell, 1)
