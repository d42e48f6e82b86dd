"""
Finite-difference oracle suite.

Every loss (each margin setting of the comparison grid, Ring, MHE, GE2E) and
the full network pass are compared against central differences on random
instances.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .evaluation import write_csv
from .losses import (
    MARGIN_GRID,
    AnnealSchedule,
    Batch,
    LossConfig,
    MarginSet,
    dpsi_du,
    ge2e_loss,
    kind_for_margins,
    mhe_loss,
    psi_of_cos,
    ring_loss,
    total_loss,
)
from .models import EmbeddingNet, NetworkConfig, net_backward, net_forward, stats_pool, stats_pool_backward
from .numkit import RngStream, finite_difference_grad, relative_error

logger = logging.getLogger(__name__)
console = Console()

LOSS_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-4
POOL_TOLERANCE = 1e-6
LOSS_STEP = 1e-6
NETWORK_STEP = 1e-5

N_ROWS, DIM, N_CLASSES = 6, 5, 4
GRADCHECK_SEED_STREAM = 7

TINY_NETWORK = NetworkConfig(
    input_dim=3,
    frame_kernel_sizes=[3, 3],
    frame_widths=[4, 4],
    segment_widths=[4, 4],
)
TINY_FRAMES = 9


@dataclass
class CaseResult:
    name: str
    instances: int
    max_relative_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def _loss_cases() -> Dict[str, LossConfig]:
    no_anneal = AnnealSchedule.disabled()
    cases = {
        "softmax": LossConfig(kind="softmax"),
        "modified-softmax": LossConfig(kind="modified-softmax"),
        "modified-softmax/normalized": LossConfig(kind="modified-softmax", normalize_features=True, scale=8.0),
    }
    for margins in MARGIN_GRID:
        kind = kind_for_margins(margins)
        label = f"{kind}/m1={margins.m1:g},m2={margins.m2:g},m3={margins.m3:g}"
        cases[label] = LossConfig(kind=kind, margins=margins, anneal=no_anneal)
        cases[label + "/normalized"] = LossConfig(
            kind=kind, margins=margins, anneal=no_anneal, normalize_features=True, scale=8.0
        )
    cases["asoftmax/m1=4/annealed"] = LossConfig(
        kind="asoftmax",
        margins=MarginSet(m1=4),
        anneal=AnnealSchedule(lambda_floor=10.0, lambda_base=1000.0, gamma=1e-5, alpha=5.0),
    )
    cases["amsoftmax+ring+mhe"] = LossConfig(
        kind="amsoftmax", margins=MarginSet(m3=0.2), anneal=no_anneal, ring_weight=0.01, mhe_weight=0.01
    )
    return cases


def _check(
    f: Callable[[np.ndarray], float], point: np.ndarray, analytic: np.ndarray, h: float
) -> float:
    return relative_error(analytic, finite_difference_grad(f, point, h))


def _random_batch(rng: RngStream, n_classes: int = N_CLASSES):
    features = rng.gaussian(N_ROWS * DIM).reshape(N_ROWS, DIM)
    labels = rng.generator.integers(0, n_classes, size=N_ROWS)
    weights = rng.gaussian(DIM * n_classes).reshape(DIM, n_classes)
    return features, labels, weights


def check_loss(config: LossConfig, rng: RngStream) -> float:
    """Worst relative error over feature, weight and R gradients of total_loss."""
    features, labels, weights = _random_batch(rng)
    step = int(rng.generator.integers(0, 50000))
    R = 1.0 + 3.0 * float(rng.generator.random())
    out = total_loss(Batch(features, labels, N_CLASSES), weights, config, step, R)

    def loss_of_features(x):
        return total_loss(Batch(x, labels, N_CLASSES), weights, config, step, R).loss

    def loss_of_weights(w):
        return total_loss(Batch(features, labels, N_CLASSES), w, config, step, R).loss

    errors = [
        _check(loss_of_features, features, out.grad_features, LOSS_STEP),
        _check(loss_of_weights, weights, out.grad_weights, LOSS_STEP),
    ]
    if config.ring_weight > 0:
        def loss_of_ring(r):
            return total_loss(Batch(features, labels, N_CLASSES), weights, config, step, float(r[0])).loss

        errors.append(_check(loss_of_ring, np.array([R]), np.array([out.grad_ring_target]), LOSS_STEP))
    return max(errors)


def check_ring(rng: RngStream) -> float:
    features = rng.gaussian(N_ROWS * DIM).reshape(N_ROWS, DIM)
    R = 0.5 + 3.0 * float(rng.generator.random())
    out = ring_loss(features, R, 0.5)
    return max(
        _check(lambda x: ring_loss(x, R, 0.5).loss, features, out.grad_features, LOSS_STEP),
        _check(
            lambda r: ring_loss(features, float(r[0]), 0.5).loss,
            np.array([R]),
            np.array([out.grad_ring_target]),
            LOSS_STEP,
        ),
    )


def check_mhe(rng: RngStream) -> float:
    _, labels, weights = _random_batch(rng)
    out = mhe_loss(weights, labels, 0.5)
    return _check(lambda w: mhe_loss(w, labels, 0.5).loss, weights, out.grad_weights, LOSS_STEP)


def check_ge2e(rng: RngStream, fixed_centers: bool) -> float:
    n_speakers = 3
    labels = np.repeat(np.arange(n_speakers), 2)
    features = rng.gaussian(labels.size * DIM).reshape(labels.size, DIM)
    s = 2.0 + 8.0 * float(rng.generator.random())
    b = float(rng.gaussian(1)[0])
    centers = rng.gaussian(DIM * n_speakers).reshape(DIM, n_speakers) if fixed_centers else None
    out = ge2e_loss(features, labels, s, b, centers)

    errors = [
        _check(lambda x: ge2e_loss(x, labels, s, b, centers).loss, features, out.grad_features, LOSS_STEP),
        _check(
            lambda v: ge2e_loss(features, labels, float(v[0]), float(v[1]), centers).loss,
            np.array([s, b]),
            np.array([out.grad_scale, out.grad_bias]),
            LOSS_STEP,
        ),
    ]
    if fixed_centers:
        errors.append(
            _check(lambda c: ge2e_loss(features, labels, s, b, c).loss, centers, out.grad_centers, LOSS_STEP)
        )
    return max(errors)


PSI_POINTS = 1000
# Sampled angles stay this far from every kink of psi.
PSI_MARGIN = 1e-3


def _psi_kinks(margins: MarginSet) -> np.ndarray:
    if margins.is_piecewise:
        order = int(round(margins.m1))
        return np.arange(1, order) * math.pi / order
    if margins.m2 > 0.0:
        return np.array([math.pi - margins.m2])
    return np.empty(0)


def check_psi(margins: MarginSet, rng: RngStream, n_points: int = PSI_POINTS) -> float:
    """dpsi_du against central differences at random u away from the clamps and kinks."""
    theta = rng.generator.uniform(0.05, math.pi - 0.05, size=n_points)
    kinks = _psi_kinks(margins)
    if kinks.size:
        theta = theta[np.min(np.abs(theta[:, None] - kinks[None, :]), axis=1) > PSI_MARGIN]
    u = np.cos(theta)
    analytic = dpsi_du(u, margins)
    # psi acts elementwise, so one vectorized central difference covers every point.
    numeric = (psi_of_cos(u + LOSS_STEP, margins) - psi_of_cos(u - LOSS_STEP, margins)) / (2.0 * LOSS_STEP)
    return relative_error(analytic, numeric)


def check_stats_pool(rng: RngStream) -> float:
    frames = rng.gaussian(7 * 3).reshape(7, 3)
    weights = rng.gaussian(6)
    pooled, cache = stats_pool(frames)
    analytic = stats_pool_backward(cache, weights)
    return _check(lambda h: float(np.dot(stats_pool(h)[0], weights)), frames, analytic, LOSS_STEP)


def _network_loss_configs() -> List[LossConfig]:
    no_anneal = AnnealSchedule.disabled()
    return [
        LossConfig(kind="amsoftmax", margins=MarginSet(m3=0.2), anneal=no_anneal, ring_weight=0.01, mhe_weight=0.01),
        LossConfig(kind="asoftmax", margins=MarginSet(m1=2), anneal=no_anneal),
        LossConfig(kind="arcsoftmax", margins=MarginSet(m2=0.3), anneal=no_anneal, normalize_features=True, scale=8.0),
        LossConfig(kind="softmax"),
        LossConfig(kind="ge2e", normalize_features=True, scale=5.0),
    ]


def check_network(loss: LossConfig, rng: RngStream, network: NetworkConfig = TINY_NETWORK) -> float:
    """Gradient of total_loss w.r.t. every network parameter, the output weights and R."""
    n_speakers = 3
    labels = np.repeat(np.arange(n_speakers), 2)
    segments = rng.gaussian(labels.size * TINY_FRAMES * network.input_dim).reshape(
        labels.size, TINY_FRAMES, network.input_dim
    )
    net = EmbeddingNet.initialize(
        network, rng, n_classes=0 if loss.kind == "ge2e" else n_speakers, ring_target=2.0
    )

    def objective(params: Dict[str, np.ndarray], R: float):
        net.params = params
        forward = net_forward(net, segments, mode="train", update_stats=False)
        out = total_loss(Batch(forward.feature, labels, n_speakers), net.output_weights, loss, 0, R)
        return forward, out

    base = dict(net.params)
    forward, out = objective(base, net.ring_target)
    grads = net_backward(forward.cache, out.grad_features)
    if out.grad_weights is not None:
        grads["output.weight"] = out.grad_weights

    errors = []
    for name, value in base.items():
        def loss_of(p, name=name):
            return objective({**base, name: p}, net.ring_target)[1].loss

        errors.append(_check(loss_of, value, grads[name], NETWORK_STEP))
    if loss.ring_weight > 0:
        errors.append(
            _check(
                lambda r: objective(base, float(r[0]))[1].loss,
                np.array([net.ring_target]),
                np.array([out.grad_ring_target]),
                NETWORK_STEP,
            )
        )
    net.params = base
    return max(errors)


def run_gradcheck(instances: int = 100, seed: int = 0) -> List[CaseResult]:
    """Run every oracle on `instances` random instances each."""
    rng = RngStream(seed, GRADCHECK_SEED_STREAM)
    results = []

    def run(name: str, check: Callable[[], float], tolerance: float) -> None:
        worst = max(check() for _ in range(instances))
        results.append(CaseResult(name, instances, worst, tolerance))
        logger.info("%s: max relative error %.2e", name, worst)

    for name, config in _loss_cases().items():
        run(f"loss/{name}", lambda c=config: check_loss(c, rng), LOSS_TOLERANCE)
    run("loss/ring", lambda: check_ring(rng), LOSS_TOLERANCE)
    run("loss/mhe", lambda: check_mhe(rng), LOSS_TOLERANCE)
    run("loss/ge2e", lambda: check_ge2e(rng, fixed_centers=False), LOSS_TOLERANCE)
    run("loss/ge2e-fixed-centers", lambda: check_ge2e(rng, fixed_centers=True), LOSS_TOLERANCE)
    for margins in MARGIN_GRID:
        label = f"psi/m1={margins.m1:g},m2={margins.m2:g},m3={margins.m3:g}"
        run(label, lambda m=margins: check_psi(m, rng), LOSS_TOLERANCE)
    run("stats-pool", lambda: check_stats_pool(rng), POOL_TOLERANCE)
    for config in _network_loss_configs():
        run(f"network/{config.kind}", lambda c=config: check_network(c, rng), NETWORK_TOLERANCE)
    return results


def report_frame(results: List[CaseResult]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "case": [r.name for r in results],
            "instances": [r.instances for r in results],
            "max_relative_error": [r.max_relative_error for r in results],
            "tolerance": [r.tolerance for r in results],
            "passed": [r.passed for r in results],
        }
    )


def run_gradcheck_command(
    instances: int = 100, seed: int = 0, output_dir: Optional[Path] = None, digest: str = ""
) -> bool:
    """Run the suite, print a table, write gradcheck/report.csv; True when every case passes."""
    console.print(f"[green]Running gradient checks ({instances} instances per case)")
    results = run_gradcheck(instances, seed)

    table = Table(title="Gradient checks")
    table.add_column("Case", style="cyan")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Status")
    for r in results:
        status = "[green]ok" if r.passed else "[red]FAIL"
        table.add_row(r.name, f"{r.max_relative_error:.2e}", f"{r.tolerance:.0e}", status)
    console.print(table)

    if output_dir is not None:
        path = write_csv(report_frame(results), Path(output_dir) / "gradcheck" / "report.csv", digest)
        console.print(f"[green]Report saved: {path}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[red]{len(failed)} gradient checks failed: {', '.join(failed)}")
    return not failed
