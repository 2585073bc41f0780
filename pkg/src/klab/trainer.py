"""Alternating student/teacher optimization loop and strategy comparison."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import RunConfig
from .errors import DegenerateVectorError, DivergenceError
from .metrics import METRICS_COLUMNS, EpochMetrics, effective_clusters, mean_row_kl, nmi, prior_entropy, strategy_agreement
from .model import ClusterHead, EncoderParams, center_head, encode, init_encoder, init_head, save_checkpoint, student_posterior
from .numerics import l2_normalize, split_rng
from .objectives import cross_entropy_and_grad, regularized_objective
from .synthdata import AugmentationSpec, LabeledDataset, MixtureSpec, augment_batch, sample_mixture
from .teacher import Strategy, TeacherState, ema_update, estimate_priors, normalize_teacher, update_center

DIVERGENCE_LOSS = 1e6


def prepare_data(config: RunConfig) -> tuple[LabeledDataset, np.ndarray]:
    """Training set and a held-out probe batch from the same mixture."""
    data_rng, _, _, probe_rng = split_rng(config.seed, 4)
    mc = config.mixture
    spec = MixtureSpec.random(mc.k_true, mc.input_dim, mc.sigma, data_rng, mc.weights, mc.min_angle_deg)
    data = sample_mixture(spec, mc.n_samples, data_rng, seed=config.seed)
    probe = sample_mixture(spec, max(mc.probe_samples, mc.k_true), probe_rng).samples
    return data, probe


def init_student(config: RunConfig) -> tuple[EncoderParams, ClusterHead]:
    _, init_rng, _, _ = split_rng(config.seed, 4)
    m = config.model
    params = init_encoder([config.mixture.input_dim, *m.hidden, m.embed_dim], init_rng)
    head = init_head(m.k, m.embed_dim, init_rng)
    if m.zero_mean_head:
        head = center_head(head)
    return params, head


def student_step(
    params: EncoderParams,
    head: ClusterHead,
    teacher_q,
    x_batch,
    aug: AugmentationSpec,
    lr: float,
    tau_s: float,
    rng: np.random.Generator,
    freeze_head: bool = False,
    zero_mean_head: bool = False,
) -> tuple[EncoderParams, ClusterHead, float]:
    """One gradient-descent step on the batch-mean cross-entropy.

    The student sees an augmented view of ``x_batch``; ``teacher_q`` must come
    from the clean view. Returns new parameters and the pre-step mean loss.
    """
    x_aug = augment_batch(x_batch, aug, rng)
    if not all(np.isfinite(a).all() for a in params.arrays()):
        raise DivergenceError("non-finite student parameters")
    loss, grads = cross_entropy_and_grad(params, head, x_aug, teacher_q, tau_s)
    n = x_aug.shape[0]
    loss /= n
    if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
        raise DivergenceError(f"loss {loss} is non-finite or above {DIVERGENCE_LOSS}")
    scale = lr / n
    # overflow is expected when a step diverges; finiteness is checked explicitly
    with np.errstate(over="ignore", invalid="ignore"):
        new_params = EncoderParams(
            [w - scale * g for w, g in zip(params.weights, grads.d_weights)],
            [b - scale * g for b, g in zip(params.biases, grads.d_biases)],
        )
        if not all(np.isfinite(a).all() for a in new_params.arrays()):
            raise DivergenceError("non-finite student parameters after step")
        if freeze_head or lr == 0:
            new_head = head.copy()
        else:
            stepped = head.weights - scale * grads.d_cluster_weights
            try:
                new_head = ClusterHead(l2_normalize(stepped))
            except DegenerateVectorError as exc:
                raise DivergenceError("cluster head left the representable range") from exc
            if not np.isfinite(new_head.weights).all():
                raise DivergenceError("non-finite cluster head after step")
            if zero_mean_head:
                new_head = center_head(new_head)
    return new_params, new_head, float(loss)


@dataclass
class RefreshResult:
    teacher: TeacherState
    z_teacher: np.ndarray
    raw_posteriors: np.ndarray


def teacher_refresh(
    teacher: TeacherState,
    params: EncoderParams,
    head: ClusterHead,
    x_all,
    ema_momentum: float,
    center_momentum: float,
) -> RefreshResult:
    """EMA the student into the teacher, then re-estimate center and priors on ``x_all``.

    Order: EMA, encode the full dataset with the new teacher, update the
    center, raw posteriors at the teacher temperature, priors. The student
    arguments are only read.
    """
    t = ema_update(teacher, params, head, ema_momentum)
    z = encode(t.params, x_all)
    center = update_center(z, t.center, center_momentum)
    raw = student_posterior(t.head, z, t.tau_teacher)
    priors = estimate_priors(raw)
    t = TeacherState(t.params, t.head, priors, center, t.tau_teacher)
    return RefreshResult(t, z, raw)


def jensen_log_gap(head: ClusterHead, z: np.ndarray, tau: float) -> np.ndarray:
    """Per-sample ``log sum_i exp(z.w_i/tau) - log(K exp(z.w_bar/tau))`` (>= 0)."""
    logits = z @ head.weights.T / tau
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - np.log(head.k) - z @ head.mean / tau


@dataclass
class RunReport:
    config: dict
    metrics: list[EpochMetrics] = field(default_factory=list)
    refreshes: list[dict] = field(default_factory=list)
    collapse: bool = False
    collapse_epoch: int | None = None
    failed: bool = False
    failure: str | None = None
    checkpoint: str | None = None
    initial_nmi: float = float("nan")
    initial_effective_clusters: float = float("nan")
    wall_clock_seconds: float = 0.0
    final_params: EncoderParams | None = field(default=None, repr=False)
    final_head: ClusterHead | None = field(default=None, repr=False)

    def metric(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics])

    def to_dict(self) -> dict:
        cols = {c: [] for c in METRICS_COLUMNS}
        for m in self.metrics:
            for c, v in zip(METRICS_COLUMNS, m.row()):
                cols[c].append(v)
        return {
            "config": self.config,
            "metrics": cols,
            "refreshes": self.refreshes,
            "collapse": self.collapse,
            "collapse_epoch": self.collapse_epoch,
            "failed": self.failed,
            "failure": self.failure,
            "checkpoint": self.checkpoint,
            "initial_nmi": self.initial_nmi,
            "initial_effective_clusters": self.initial_effective_clusters,
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    def write_metrics_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_COLUMNS)
            for m in self.metrics:
                w.writerow([repr(v) if isinstance(v, float) else v for v in m.row()])

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if self.final_params is not None:
            save_checkpoint(out / "checkpoint.bin", self.final_params, self.final_head)
            self.checkpoint = "checkpoint.bin"
        self.write_metrics_csv(out / "metrics.csv")
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n")


EpochHook = Callable[[int, EncoderParams, ClusterHead, TeacherState], None]


def run(config: RunConfig, on_epoch: EpochHook | None = None) -> RunReport:
    """Train for ``epochs_total`` epochs, refreshing the teacher every ``n_e``.

    Deterministic in ``config``. A divergence stops training and returns the
    partial report with ``failed`` set.
    """
    started = time.perf_counter()
    report = RunReport(config=config.to_dict())
    sched = config.schedule
    temps = config.temperatures
    strategy = config.strategy
    data, _ = prepare_data(config)
    x = data.samples
    n = x.shape[0]
    _, _, train_rng, _ = split_rng(config.seed, 4)

    params, head = init_student(config)
    teacher = TeacherState.from_student(params, head, temps.tau_teacher)
    p0 = student_posterior(head, encode(params, x), temps.tau_student)
    report.initial_nmi = nmi(data.labels, p0.argmax(axis=1))
    report.initial_effective_clusters = effective_clusters(estimate_priors(p0))
    threshold = config.effective_collapse_threshold
    below = 0

    def refresh(epoch: int, ema_m: float, center_m: float):
        res = teacher_refresh(teacher, params, head, x, ema_m, center_m)
        t = res.teacher
        q = normalize_teacher(t.head, res.z_teacher, t, strategy)
        agree = strategy_agreement(
            normalize_teacher(t.head, res.z_teacher, t, Strategy.INVERSE_PRIOR),
            normalize_teacher(t.head, res.z_teacher, t, Strategy.CENTERING),
        )
        gap = float(jensen_log_gap(t.head, res.z_teacher, t.tau_teacher).mean())
        report.refreshes.append({"epoch": epoch, "priors": t.priors.tolist(), "center": t.center.tolist()})
        return t, q, agree, gap

    # the initial teacher is an exact copy; its center starts at the data mean
    teacher, q_cache, agree, gap = refresh(0, 0.0, 0.0)

    for epoch in range(sched.epochs_total):
        if epoch > 0 and epoch % sched.n_e == 0:
            teacher, q_cache, agree, gap = refresh(epoch, sched.ema_momentum, sched.center_momentum)
        order = train_rng.permutation(n)
        losses = []
        try:
            for start in range(0, n, sched.batch_size):
                idx = order[start : start + sched.batch_size]
                params, head, loss = student_step(
                    params, head, q_cache[idx], x[idx], config.augmentation,
                    sched.learning_rate, temps.tau_student, train_rng,
                    config.model.freeze_head, config.model.zero_mean_head,
                )
                losses.append(loss)
        except DivergenceError as exc:
            report.failed = True
            report.failure = f"epoch {epoch}: {exc}"
            break

        p_student = student_posterior(head, encode(params, x), temps.tau_student)
        occupancy = estimate_priors(p_student)
        ent = prior_entropy(occupancy)
        eff = effective_clusters(occupancy)
        p_safe = np.maximum(p_student, np.finfo(float).tiny)
        objective = regularized_objective(q_cache, p_safe)
        report.metrics.append(
            EpochMetrics(
                epoch=epoch,
                prior_entropy=ent,
                effective_clusters=eff,
                nmi=nmi(data.labels, p_student.argmax(axis=1)),
                kl_teacher_student=mean_row_kl(q_cache, p_safe),
                jensen_gap_mean=gap,
                objective=objective,
                strategy_agreement=agree,
                train_loss=float(np.mean(losses)),
            )
        )
        if epoch % sched.n_e == sched.n_e - 1 or epoch == sched.epochs_total - 1:
            # collapse is judged once per teacher period
            below = below + 1 if eff < threshold else 0
            if below >= config.collapse_patience and not report.collapse:
                report.collapse = True
                report.collapse_epoch = epoch
        if on_epoch is not None:
            on_epoch(epoch, params, head, teacher)

    report.final_params = params
    report.final_head = head
    report.wall_clock_seconds = time.perf_counter() - started
    return report


COMPARE_COLUMNS = (
    "epoch",
    "agreement_inverse_prior_run",
    "agreement_centering_run",
    "row_kl_inverse_prior_run",
    "row_kl_centering_run",
)


@dataclass
class CompareReport:
    rows: list[tuple] = field(default_factory=list)
    final_nmi: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = COMPARE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARE_COLUMNS)
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def compare_strategies(config: RunConfig) -> CompareReport:
    """Run inverse-prior and centering from the same seed.

    At every epoch both runs' teachers are probed on a held-out batch: for each
    teacher state the inverse-prior and centering distributions are compared by
    argmax agreement and mean row KL.
    """
    _, probe = prepare_data(config)
    out = CompareReport()
    traces = {}
    for strategy in (Strategy.INVERSE_PRIOR, Strategy.CENTERING):
        trace = []

        def hook(epoch, params, head, teacher, trace=trace):
            z = encode(teacher.params, probe)
            a = normalize_teacher(teacher.head, z, teacher, Strategy.INVERSE_PRIOR)
            b = normalize_teacher(teacher.head, z, teacher, Strategy.CENTERING)
            trace.append((strategy_agreement(a, b), mean_row_kl(a, b)))

        rep = run(config.replace(strategy=strategy), on_epoch=hook)
        traces[strategy] = trace
        out.reports[strategy.value] = rep
        out.final_nmi[strategy.value] = float(rep.metrics[-1].nmi) if rep.metrics else float("nan")
    ip, ce = traces[Strategy.INVERSE_PRIOR], traces[Strategy.CENTERING]
    for epoch in range(min(len(ip), len(ce))):
        out.rows.append((epoch, ip[epoch][0], ce[epoch][0], ip[epoch][1], ce[epoch][1]))
    return out
