"""Figure rendering for decode alignments and training curves.

Figures are written next to the delimited outputs: one alignment lattice per
decoded line (source tokens down the side, output tokens across the top, the
found path drawn through the grid), and loss/perplexity curves from a metrics
JSONL stream.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_alignment(src_tokens, out_tokens, alignment_1based, out_path):
    """Draw the decoded path through the I x J grid and save it.

    src_tokens include the terminal EOS of the input; out_tokens are the
    emitted tokens with an implicit terminal EOS step, so the alignment list
    may be one longer than out_tokens.
    """
    labels_x = list(out_tokens) + (["</s>"] if len(alignment_1based) == len(out_tokens) + 1
                                   else [])
    n_j = len(labels_x)
    n_i = len(src_tokens)
    fig, ax = plt.subplots(figsize=(max(2.5, 0.45 * n_j + 1.2),
                                    max(2.5, 0.45 * n_i + 1.2)))
    for i in range(n_i):
        for j in range(n_j):
            ax.plot(j, i, marker=".", color="0.8", markersize=3)
    path_j = list(range(len(alignment_1based)))
    path_i = [a - 1 for a in alignment_1based]
    ax.plot(path_j, path_i, color="crimson", linewidth=2, marker="o", markersize=4)
    ax.set_xticks(range(n_j))
    ax.set_xticklabels(labels_x, rotation=60, ha="left", fontsize=8)
    ax.set_yticks(range(n_i))
    ax.set_yticklabels(src_tokens, fontsize=8)
    ax.xaxis.tick_top()
    ax.invert_yaxis()
    ax.set_xlim(-0.5, n_j - 0.5)
    ax.set_ylim(n_i - 0.5, -0.5)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_training_curves(metrics_path, out_path):
    """Loss and perplexity curves from a metrics JSONL file."""
    records = []
    with open(metrics_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    epochs = [r["epoch"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.plot(epochs, [r["train_nll"] for r in records], label="train")
    ax1.plot(epochs, [r["dev_nll"] for r in records], label="dev")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("per-token NLL")
    ax1.legend()
    ax2.plot(epochs, [r["dev_ppl"] for r in records], color="darkgreen")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev perplexity")
    fig.tight_layout()
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
