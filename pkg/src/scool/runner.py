"""Experiment runner: configs in, deterministic metrics and snapshots out.

Everything written under the output directory is a pure function of the
config (including its seed); wall-clock timing goes to a separate sidecar
file so the deterministic artifacts can be compared byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import NONIID_SBM, ExperimentConfig
from .em import dirac, rounds
from .em.state import (
    init_attention_state,
    init_mmsbm_state,
    init_sbm_state,
)
from .errors import DivergenceError
from .models import ArchSpec, LocalModel, accuracy, loss
from .special import row_normalize
from .tasks import gen_noniid_random, gen_noniid_sbm
from .topology import CommLedger, Topology, build_topology

REPORT_SCHEMA_VERSION = 1

METRIC_COLUMNS = [
    "round",
    "mean_test_acc",
    "std_test_acc",
    "mean_train_loss",
    "elbo",
    "l1_to_ground_truth",
    "models_sent",
    "gradients_sent",
    "scalars_sent",
    "vector_units_folded",
    "vector_units_separate",
]


def metric_l1(w: np.ndarray, w_star: np.ndarray) -> float:
    """Per-client-averaged L1 distance between the row-normalized learned
    graph and the ground-truth sharing distribution. A row that cannot be
    normalized scores the maximum distance of 2."""
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w.shape != w_star.shape:
        raise ValueError("graph shapes differ")
    total = 0.0
    for i in range(len(w)):
        s = w[i].sum()
        if s <= 0.0:
            total += 2.0
        else:
            total += float(np.abs(w[i] / s - w_star[i]).sum())
    return total / len(w)


def block_diagonal_mass(w: np.ndarray, group_labels: np.ndarray) -> float:
    """Average within-group share of each row of the row-normalized graph."""
    wn = row_normalize(np.asarray(w, dtype=float))
    same = group_labels[:, None] == group_labels[None, :]
    return float(wn[same].sum() / len(w))


@dataclass
class ExperimentReport:
    config: dict
    seed: int
    rounds: list[dict] = field(default_factory=list)
    final_per_client_acc: list[float] = field(default_factory=list)
    final_mean_acc: float = 0.0
    final_std_acc: float = 0.0
    comm_totals: dict = field(default_factory=dict)
    diverged: bool = False
    divergence_message: str = ""
    wall_time_seconds: float = 0.0  # volatile; written to the timing sidecar only

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "seed": self.seed,
            "diverged": self.diverged,
            "divergence_message": self.divergence_message,
            "rounds": self.rounds,
            "final": {
                "per_client_test_acc": self.final_per_client_acc,
                "mean_test_acc": self.final_mean_acc,
                "std_test_acc": self.final_std_acc,
            },
            "comm_totals": self.comm_totals,
        }


def _workers_from_env() -> int:
    raw = os.environ.get("SCOOL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_tasks(config: ExperimentConfig):
    common = dict(
        test_samples_per_client=config.test_samples_per_client,
        d=config.feature_dim,
        sigma=config.noise_sigma,
        separation=config.class_separation,
        placement=config.mean_placement,
    )
    if config.task_setting == NONIID_SBM:
        return gen_noniid_sbm(
            config.K,
            config.M,
            config.N,
            config.num_groups,
            config.samples_per_client,
            config.seed,
            **common,
        )
    return gen_noniid_random(
        config.K, config.M, config.N, config.samples_per_client, config.seed, **common
    )


def build_models(config: ExperimentConfig) -> list[LocalModel]:
    arch = ArchSpec(
        config.arch,
        d=config.feature_dim,
        C=config.N,
        h=config.hidden_units if config.arch != "softmax-regression" else 0,
    )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    if config.shared_init:
        theta0 = config.init_scale * rng.standard_normal(arch.n_params)
        return [LocalModel(theta0.copy(), arch) for _ in range(config.K)]
    return [
        LocalModel(config.init_scale * rng.standard_normal(arch.n_params), arch)
        for _ in range(config.K)
    ]


def build_state(config: ExperimentConfig, topology: Topology, theta_dim: int):
    seed = np.random.SeedSequence([config.seed, 2])
    kind = config.prior_kind
    if kind in ("local-only",):
        return None
    if kind == "dirac":
        from .em.state import DiracState

        return DiracState(dirac.metropolis_weights(topology.mask), alpha_lr=config.eta1)
    if kind == "sbm":
        return init_sbm_state(
            config.K,
            config.num_memberships,
            seed,
            lam=config.weight_decay,
            tau_sigmoid=config.tau_sigmoid,
            eta2=config.eta2,
            block_init=config.block_init,
        )
    if kind == "attention":
        return init_attention_state(
            config.K,
            theta_dim,
            seed,
            lam=config.weight_decay,
            tau_softmax=config.tau_softmax,
            eta2=config.eta2,
            enc_hidden=config.enc_hidden,
            enc_out=config.enc_out,
        )
    return init_mmsbm_state(
        config.K,
        config.num_memberships,
        seed,
        lam=config.weight_decay,
        tau_sigmoid=config.tau_sigmoid,
        eta2=config.eta2,
        block_init=config.block_init,
    )


def _json_ready(value):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_json_ready(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


def _write_matrix(path: Path, matrix: np.ndarray) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n")


def _write_report(out_dir: Path, report: ExperimentReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = _json_ready(report.to_dict())
    (out_dir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with (out_dir / "metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)
        for row in report.rounds:
            writer.writerow(["" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float) else row[c] for c in METRIC_COLUMNS])
    (out_dir / "timing.json").write_text(
        json.dumps({"wall_time_seconds": report.wall_time_seconds}) + "\n"
    )


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> ExperimentReport:
    """Run one experiment end to end; deterministic given the config."""
    config.validate()
    t0 = time.perf_counter()
    workers = _workers_from_env()

    assignment, data = build_tasks(config)
    train_sets = [pair[0] for pair in data]
    test_sets = [pair[1] for pair in data]
    models = build_models(config)
    topology = build_topology(
        config.topology_kind,
        config.K,
        k0=config.topology_k0 or None,
        degree=config.topology_degree or None,
        seed=config.seed,
    )
    state = build_state(config, topology, models[0].arch.n_params)
    ledger = CommLedger(config.K, models[0].arch.n_params)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    report = ExperimentReport(config=config.to_dict(), seed=config.seed)
    for r in range(config.rounds):
        try:
            result = rounds.run_round(
                config.prior_kind,
                state,
                models,
                train_sets,
                topology,
                ledger,
                r,
                eta1=config.eta1,
                local_steps=config.local_steps,
                grad_mode=config.grad_mode,
                lam=config.weight_decay,
                optimizer=config.optimizer,
                optimizer_weight_decay=config.optimizer_weight_decay,
                attention_coupling=config.attention_coupling,
                sparsify_keep_fraction=config.sparsify_keep_fraction,
                sparsify_round=config.sparsify_round,
                workers=workers,
            )
        except DivergenceError as err:
            report.diverged = True
            report.divergence_message = str(err)
            break
        accs = [accuracy(models[i], test_sets[i]) for i in range(config.K)]
        losses = [loss(models[i], train_sets[i]) for i in range(config.K)]
        comm = ledger.rounds[-1] if ledger.rounds and ledger.rounds[-1].round_index == r else None
        row = {
            "round": r + 1,
            "mean_test_acc": float(np.mean(accs)),
            "std_test_acc": float(np.std(accs)),
            "mean_train_loss": float(np.mean(losses)),
            "elbo": result.elbo_total,
            "l1_to_ground_truth": metric_l1(result.graph, assignment.w_star),
            "models_sent": comm.models_sent if comm else 0,
            "gradients_sent": comm.gradients_sent if comm else 0,
            "scalars_sent": comm.scalars_sent if comm else 0,
            "vector_units_folded": comm.vector_units_folded if comm else 0.0,
            "vector_units_separate": comm.vector_units_separate if comm else 0.0,
        }
        report.rounds.append(row)
        if out_path is not None and config.snapshot_every > 0:
            if (r + 1) % config.snapshot_every == 0 or r == config.rounds - 1:
                _write_matrix(out_path / f"w_round_{r + 1:04d}.csv", result.graph)

    final_accs = [accuracy(models[i], test_sets[i]) for i in range(config.K)]
    report.final_per_client_acc = [float(a) for a in final_accs]
    report.final_mean_acc = float(np.mean(final_accs))
    report.final_std_acc = float(np.std(final_accs))
    report.comm_totals = ledger.totals()
    report.wall_time_seconds = time.perf_counter() - t0
    if out_path is not None:
        _write_report(out_path, report)
    if report.diverged:
        raise DivergenceError(report.divergence_message)
    return report


def run_budget_sweep(
    config: ExperimentConfig,
    fractions: list[float],
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Re-run the base experiment at several neighbor-keep fractions and
    tabulate accuracy against communication budget."""
    rows = []
    out_path = Path(out_dir) if out_dir is not None else None
    for fraction in fractions:
        sub = config.replace(sparsify_keep_fraction=float(fraction))
        sub_dir = out_path / f"fraction_{fraction:.2f}" if out_path is not None else None
        report = run_experiment(sub, sub_dir)
        rows.append(
            {
                "fraction": float(fraction),
                "mean_acc": report.final_mean_acc,
                "std_acc": report.final_std_acc,
                "comm_total": report.comm_totals["vector_units_folded"],
            }
        )
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        with (out_path / "budget_sweep.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["fraction", "mean_acc", "std_acc", "comm_total"])
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return rows
