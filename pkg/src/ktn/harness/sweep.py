"""Truncation sweeps over conv layers and post-truncation retraining."""

import io
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..trunc import Bipartition, TruncationReport, truncate_bipartition, truncate_cp
from .model import Conv
from .train import evaluate, train_toy

CSV_HEADER = (
    "target", "cut", "keep", "norm_before", "norm_after", "norm_loss_pct",
    "entropy_before", "entropy_after", "corr_loss_pct", "compression_ratio", "top1", "top5",
)
CP = "CP"


def parse_range(text):
    """``start:end:step`` (end included when hit), ``start:end`` (step 1), or ``a,b,c``."""
    text = text.strip()
    if ":" not in text:
        vals = [int(v) for v in text.split(",") if v.strip()]
    else:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        if len(parts) != 3:
            raise ValueError(f"bad range {text!r}")
        start, end, step = parts
        if step < 1:
            raise ValueError(f"range step must be >= 1 in {text!r}")
        vals = list(range(start, end + 1, step))
    if not vals:
        raise ValueError(f"range {text!r} is empty")
    return vals


@dataclass(frozen=True)
class SweepTarget:
    layer: str
    cut: object  # Bipartition or the string "CP"
    keeps: tuple

    @property
    def cut_label(self):
        return CP if self.cut == CP else self.cut.label


@dataclass
class SweepConfig:
    targets: list
    simultaneous: bool = False
    seed: int = 0
    cp_max_iters: int = 500
    cp_tol: float = 1e-8
    train: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        targets = []
        for t in d.get("targets", []):
            cut_text = str(t["cut"]).strip()
            cut = CP if cut_text.upper() == CP else Bipartition.parse(cut_text)
            keep = t["keep"]
            keeps = parse_range(keep) if isinstance(keep, str) else [int(k) for k in keep]
            targets.append(SweepTarget(t["layer"], cut, tuple(sorted(set(keeps)))))
        if not targets:
            raise ValueError("sweep config needs at least one target")
        cp = d.get("cp", {})
        return cls(
            targets,
            bool(d.get("simultaneous", False)),
            int(d.get("seed", 0)),
            int(cp.get("max_iters", 500)),
            float(cp.get("tol", 1e-8)),
            dict(d.get("train", {})),
        )

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


@dataclass(frozen=True)
class SweepRow:
    target: str
    cut: str
    keep: str
    report: TruncationReport  # None for the baseline row
    result: object  # EvalResult


def _truncate(kernel, target, keep, cfg):
    if target.cut == CP:
        return truncate_cp(kernel, keep, max_iters=cfg.cp_max_iters, tol=cfg.cp_tol, seed=cfg.seed)
    return truncate_bipartition(kernel, target.cut, keep)


def truncate_model(model, targets_keeps, cfg):
    """Apply each (target, keep) to a copy of ``model``; returns (model, reports)."""
    updates, reports = {}, []
    for target, keep in targets_keeps:
        conv = model.layer(target.layer)
        if not isinstance(conv, Conv):
            raise ValueError(f"layer {target.layer!r} is not a conv layer")
        kernel = updates.get(conv.kernel, model.params[conv.kernel])
        kt, rep = _truncate(kernel, target, keep, cfg)
        updates[conv.kernel] = kt if not rep.zero_kernel else kernel
        reports.append(rep)
    return model.with_params(updates), reports


def _mean_report(reports, keep_label):
    def avg(name):
        return float(np.mean([getattr(r, name) for r in reports]))

    return TruncationReport(
        "+".join(r.target for r in reports), keep_label,
        avg("norm_before"), avg("norm_after"), avg("norm_loss_pct"),
        avg("entropy_before"), avg("entropy_after"), avg("corr_loss_pct"),
        avg("compression_ratio"), any(r.zero_kernel for r in reports),
    )


def run_sweep(model, cfg, data):
    """Baseline evaluation followed by one evaluated truncation per sweep point.

    Single mode walks each target's keeps in ascending order. Simultaneous
    mode zips the targets' keep lists positionally and truncates all targets
    together, reporting averaged metrics.
    """
    rows = [SweepRow("baseline", "", "", None, evaluate(model, data))]
    if not cfg.simultaneous:
        for target in cfg.targets:
            for keep in target.keeps:
                m2, (rep,) = truncate_model(model, [(target, keep)], cfg)
                res = rows[0].result if rep.zero_kernel else evaluate(m2, data)
                rows.append(SweepRow(target.layer, target.cut_label, str(keep), rep, res))
        return rows
    for keeps in zip(*(t.keeps for t in cfg.targets)):
        pairs = list(zip(cfg.targets, keeps))
        m2, reps = truncate_model(model, pairs, cfg)
        label = "+".join(str(k) for k in keeps)
        rows.append(SweepRow(
            "+".join(t.layer for t in cfg.targets),
            "+".join(t.cut_label for t in cfg.targets),
            label,
            _mean_report(reps, label),
            evaluate(m2, data),
        ))
    return rows


def _fmt(x):
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def rows_to_csv(rows):
    buf = io.StringIO(newline="")
    buf.write(",".join(CSV_HEADER) + "\n")
    for row in rows:
        r = row.report
        metrics = [None] * 7 if r is None else [
            r.norm_before, r.norm_after, r.norm_loss_pct, r.entropy_before,
            r.entropy_after, r.corr_loss_pct, r.compression_ratio,
        ]
        fields = [row.target, row.cut, row.keep, *metrics, row.result.top1, row.result.top5]
        buf.write(",".join(_fmt(f) for f in fields) + "\n")
    return buf.getvalue()


@dataclass
class ReboundResult:
    baseline: object  # EvalResult before truncation
    reports: list
    trace: list  # EvalResult after truncation (index 0) and after each epoch
    loss_trace: list

    def best_so_far(self):
        return list(np.maximum.accumulate([r.top1 for r in self.trace]))

    def recovered_epoch(self, within=0.05):
        """First epoch whose top-1 is within ``within`` of baseline, else None."""
        for epoch, r in enumerate(self.trace):
            if r.top1 >= self.baseline.top1 - within:
                return epoch
        return None


def retrain_after_truncation(model, cfg, train_data, eval_data, epochs, lr=0.1, batch=32, seed=0):
    """Truncate every target at its most aggressive keep, then retrain and track accuracy."""
    baseline = evaluate(model, eval_data)
    pairs = [(t, min(t.keeps)) for t in cfg.targets]
    truncated, reports = truncate_model(model, pairs, cfg)
    trace = [evaluate(truncated, eval_data)]
    result = train_toy(
        truncated, train_data, epochs=epochs, lr=lr, batch=batch, seed=seed,
        on_epoch=lambda epoch, m: trace.append(evaluate(m, eval_data)),
    )
    return ReboundResult(baseline, reports, trace, result.loss_trace)


def rebound_to_csv(res):
    buf = io.StringIO(newline="")
    buf.write("epoch,top1,top5,top1_best_so_far\n")
    buf.write(f"baseline,{_fmt(res.baseline.top1)},{_fmt(res.baseline.top5)},\n")
    for epoch, (r, best) in enumerate(zip(res.trace, res.best_so_far())):
        buf.write(f"{epoch},{_fmt(r.top1)},{_fmt(r.top5)},{_fmt(best)}\n")
    return buf.getvalue()
