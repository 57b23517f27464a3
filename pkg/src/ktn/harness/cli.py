"""Command-line entry point: ``ktn <subcommand> ...``."""

import argparse
import sys
import warnings

from .. import kernels
from ..costmodel import (
    EXAMPLE_CHIS, PAPER_MEMORY_CR, PAPER_SPEEDUP, ConvShape, example_table,
    round_half_up, tucker_conv_costs,
)
from ..decomp import tt_reconstruct, tt_svd
from ..errors import KtnError
from ..tensor import frobenius_norm
from ..trunc import (
    Bipartition, entanglement_entropy, norm_loss_pct, settle_norm, spectrum, truncate_bipartition, truncate_cp,
)
from .data import load_data, split
from .model import Conv, replace_kernel, toy_architecture
from .modelio import load_model, save_model
from .sweep import (
    SweepConfig, rebound_to_csv, retrain_after_truncation, rows_to_csv, run_sweep,
)
from .train import evaluate, train_toy


def _ints(text, n=None):
    vals = tuple(int(v) for v in text.split(","))
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated ints, got {text!r}")
    return vals


def _kernel(model, layer):
    conv = model.layer(layer)
    if not isinstance(conv, Conv):
        raise KtnError(f"layer {layer!r} is not a conv layer")
    return model.params[conv.kernel]


def _print_report(rep):
    for name in ("target", "kept", "norm_before", "norm_after", "norm_loss_pct", "entropy_before",
                 "entropy_after", "corr_loss_pct", "compression_ratio", "zero_kernel"):
        print(f"{name}: {getattr(rep, name)}")


def cmd_spectrum(args):
    model = load_model(args.model)
    k = _kernel(model, args.layer)
    s = spectrum(k, Bipartition.parse(args.cut))
    for v in s:
        print(repr(float(v)))
    norm = frobenius_norm(k)
    print(f"# norm {norm!r}")
    print(f"# entropy {entanglement_entropy(s)!r}" if norm > 0 else "# entropy 0.0 (zero kernel)")


def cmd_truncate(args):
    model = load_model(args.model)
    kt, rep = truncate_bipartition(_kernel(model, args.layer), Bipartition.parse(args.cut), args.keep)
    save_model(replace_kernel(model, args.layer, kt), args.out)
    _print_report(rep)


def cmd_cp(args):
    model = load_model(args.model)
    kt, rep = truncate_cp(_kernel(model, args.layer), args.rank, max_iters=args.max_iters, tol=args.tol, seed=args.seed)
    save_model(replace_kernel(model, args.layer, kt), args.out)
    _print_report(rep)


def cmd_tt(args):
    model = load_model(args.model)
    k = _kernel(model, args.layer)
    bonds = "full" if args.bonds == "full" else _ints(args.bonds, 3)
    f = tt_svd(k, bonds)
    kt = tt_reconstruct(f)
    save_model(replace_kernel(model, args.layer, kt), args.out)
    print(f"bond_dims: {','.join(str(b) for b in f.bond_dims)}")
    before = frobenius_norm(k)
    print(f"norm_loss_pct: {norm_loss_pct(before, settle_norm(before, frobenius_norm(kt)))!r}")


def cmd_cost(args):
    X, Y, cin, cout = _ints(args.shape, 4)
    shape = ConvShape(X, Y, cin, cout, args.hout, args.wout, _ints(args.ranks, 4))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = tucker_conv_costs(shape)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for name in ("dense_cost", "cost1", "cost2", "cost3", "tucker_cost", "speedup", "memory_cr"):
        print(f"{name}: {getattr(est, name)}")
    if args.paper_table:
        a, b = shape.ranks[:2]
        print()
        print("chi  memory_cr(formula)  memory_cr(rounded)  memory_cr(printed)  speedup(formula)  speedup(printed)")
        for chi, cr, sp in example_table(X, Y, cin, cout, args.hout, args.wout, a, b, EXAMPLE_CHIS):
            print(f"{chi:<4} {cr:<19.3f} {round_half_up(cr):<19} {PAPER_MEMORY_CR[chi]:<19} "
                  f"{sp:<17.3f} {PAPER_SPEEDUP[chi]}")
        print("note: printed speedups do not follow from the cost formulas; formula values are authoritative here")


def cmd_sweep(args):
    model = load_model(args.model)
    cfg = SweepConfig.load(args.config)
    rows = run_sweep(model, cfg, load_data(args.data))
    text = rows_to_csv(rows)
    with open(args.csv, "w", newline="") as fh:
        fh.write(text)
    print(f"wrote {len(rows)} rows to {args.csv}")


def cmd_rebound(args):
    model = load_model(args.model)
    cfg = SweepConfig.load(args.config)
    train_data, val_data = split(load_data(args.data), args.val_fraction)
    opts = {"lr": 0.1, "batch": 32, "seed": cfg.seed, **cfg.train}
    res = retrain_after_truncation(model, cfg, train_data, val_data, args.epochs, **opts)
    with open(args.csv, "w", newline="") as fh:
        fh.write(rebound_to_csv(res))
    print(f"baseline top1 {res.baseline.top1!r}")
    print("top1 trace      " + " ".join(f"{r.top1:.4f}" for r in res.trace))
    print("best-so-far     " + " ".join(f"{b:.4f}" for b in res.best_so_far()))
    ep = res.recovered_epoch(0.05)
    print("within 5% of baseline: " + (f"epoch {ep}" if ep is not None else "not reached"))


def cmd_train(args):
    if args.arch != "toy":
        raise KtnError(f"unknown architecture {args.arch!r}")
    train_data, val_data = split(load_data(args.data), args.val_fraction)
    model = toy_architecture(train_data.images.shape[1:], max(train_data.classes, val_data.classes), seed=args.seed)
    res = train_toy(
        model, train_data, epochs=args.epochs, lr=args.lr, batch=args.batch, seed=args.seed,
        on_epoch=lambda e, m: print(f"epoch {e}: val top1 {evaluate(m, val_data).top1:.4f}"),
    )
    save_model(res.model, args.out)
    print("loss trace " + " ".join(f"{v:.6f}" for v in res.loss_trace))


def cmd_eval(args):
    r = evaluate(load_model(args.model), load_data(args.data))
    print(f"top1: {r.top1!r}\ntop5: {r.top5!r}\nn_samples: {r.n_samples}")


def build_parser():
    p = argparse.ArgumentParser(prog="ktn", description=__doc__)
    p.add_argument("--backend", choices=kernels.available_backends(), help="kernel backend override")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="singular values of a conv kernel across a cut")
    s.add_argument("--model", required=True)
    s.add_argument("--layer", required=True)
    s.add_argument("--cut", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("truncate", help="SVD truncation across a cut")
    s.add_argument("--model", required=True)
    s.add_argument("--layer", required=True)
    s.add_argument("--cut", required=True)
    s.add_argument("--keep", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_truncate)

    s = sub.add_parser("cp", help="replace a kernel by its CP fit")
    s.add_argument("--model", required=True)
    s.add_argument("--layer", required=True)
    s.add_argument("--rank", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cp)

    s = sub.add_parser("tt", help="replace a kernel by a bond-limited tensor train")
    s.add_argument("--model", required=True)
    s.add_argument("--layer", required=True)
    s.add_argument("--bonds", required=True, help="a,b,c or 'full'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_tt)

    s = sub.add_parser("cost", help="dense vs Tucker convolution cost")
    s.add_argument("--shape", required=True, help="X,Y,Cin,Cout")
    s.add_argument("--ranks", required=True, help="alpha,beta,gamma,delta")
    s.add_argument("--hout", type=int, required=True)
    s.add_argument("--wout", type=int, required=True)
    s.add_argument("--paper-table", action="store_true")
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("sweep", help="evaluated truncation sweep")
    s.add_argument("--model", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True, help="CIFAR-10 batch file or synth:N:CLASSES:SEED")
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("rebound", help="truncate hard, retrain, track accuracy")
    s.add_argument("--model", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--csv", required=True)
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_rebound)

    s = sub.add_parser("train", help="train a model from scratch")
    s.add_argument("--arch", default="toy")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--batch", type=int, default=32)
    s.add_argument("--val-fraction", type=float, default=0.2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="top-1/top-5 accuracy")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.backend:
        kernels.set_backend(args.backend)
    try:
        args.func(args)
    except (KtnError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
