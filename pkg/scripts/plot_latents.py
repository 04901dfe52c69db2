#!/usr/bin/env python3
"""Scatter plot of exported utterance latents, colored by style.

Usage:
  mgvae export-latents --checkpoint ck.mgck --corpus manifest.json --out latents.json
  python3 scripts/plot_latents.py latents.json latents.png
"""

import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> None:
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    payload = json.loads(open(sys.argv[1], encoding="utf-8").read())
    by_style: dict[str, list[list[float]]] = {}
    for item in payload["items"]:
        by_style.setdefault(item["style"], []).append(item["z_utterance"])
    fig, ax = plt.subplots(figsize=(6, 5))
    for style in sorted(by_style):
        pts = by_style[style]
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=8, alpha=0.6,
                   label=f"{style} ({len(pts)})")
    ax.set_xlabel("z[0]")
    ax.set_ylabel("z[1]")
    ax.set_title("utterance-level latent space")
    ax.legend()
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=150)
    print(f"wrote {sys.argv[2]}")


if __name__ == "__main__":
    main()
