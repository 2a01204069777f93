"""Figure rendering for the CLI. Plots are derived views of the CSV data;
writing one never changes the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_trajectory(times, states, path, ylabel="population fraction"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(states.shape[1]):
        ax.plot(times, states[:, i], label=f"chain {i+1}")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def plot_payoffs(times, payoffs, path):
    plot_trajectory(times, payoffs, path, ylabel="payoff per unit time")


def plot_sweep(kappas, states, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    states = np.asarray(states)
    for i in range(states.shape[1]):
        ax.plot(kappas, states[:, i], marker="o", label=f"chain {i+1}")
    ax.set_xlabel("price scale")
    ax.set_ylabel("stable equilibrium fraction")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)
