"""Command line interface: ``qmsr generate | train | reconstruct | evaluate | inspect | experiment``.

Exit codes: 0 success, 1 numerical failure (rank deficiency, instability),
2 usage or input error.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from qmsr import __version__
from qmsr.datagen import (
    AcousticConfig,
    VlasovConfig,
    gen_acoustic,
    gen_advection_pulse,
    gen_vlasov,
    split_even_odd,
)
from qmsr.exceptions import QMSRError, ValidationError
from qmsr.manifold import (
    GaussNewtonConfig,
    decode,
    encode_gauss_newton,
    reconstruct,
    relative_error,
)
from qmsr.numerics import DEFAULT_RANK_TOLERANCE, reduced_svd
from qmsr.persistence import (
    atomic_write,
    read_csv_matrix,
    read_matrix,
    read_model,
    write_csv_matrix,
    write_matrix,
    write_model,
)
from qmsr.sampling import apply_sampling
from qmsr.training import TRAINERS, TrainingConfig, default_candidates

log = logging.getLogger("qmsr")

EVALUATE_COLUMNS = ("method", "r", "m", "encoder", "relative_error", "wall_time")
TRAIN_LOG_COLUMNS = ("step", "index", "objective", "pool_size", "wall_time")
M_RULES = ("1r", "2r", "3r", "4r", "explicit")
ENCODER_CHOICES = ("sparse-linear", "gauss-newton")


class UsageError(Exception):
    pass


def load_matrix(path):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv_matrix(path)
    return read_matrix(path)


def save_matrix(path, A):
    path = Path(path)
    if path.suffix.lower() == ".csv":
        write_csv_matrix(path, A)
    else:
        write_matrix(path, A)


def write_manifest(path, command, params):
    manifest = {"command": command, "version": __version__, "parameters": params}
    with atomic_write(f"{path}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def write_rows(path, columns, rows):
    with atomic_write(path, "w") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n",
                                extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _thread_limit():
    value = os.environ.get("QMSR_THREADS", "0").strip() or "0"
    try:
        count = int(value)
    except ValueError:
        raise UsageError(f"QMSR_THREADS must be an integer, got {value!r}") from None
    if count <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=count)


def _encoder_key(name):
    return name.replace("-", "_")


# ---- generate -------------------------------------------------------------

def generate_matrix(args):
    if args.generator == "vlasov":
        cfg = VlasovConfig(
            N=args.grid or 128, dt=args.dt or 2e-3,
            final_time=args.final_time or 5.0, stride=args.stride,
        )
        return gen_vlasov(cfg), vars(cfg)
    if args.generator == "acoustic":
        cfg = AcousticConfig(
            N=args.grid or 96, dt=args.dt or 5e-3,
            final_time=args.final_time or 8.0, stride=args.stride,
        )
        return gen_acoustic(cfg), vars(cfg)
    params = {"n": args.n, "k": args.k, "speed": args.speed, "width": args.width}
    return gen_advection_pulse(**params), params


def cmd_generate(args):
    S, resolved = generate_matrix(args)
    save_matrix(args.out, S)
    outputs = [str(args.out)]
    if args.split:
        train, test = split_even_odd(S)
        stem = Path(args.out)
        for tag, part in (("train", train), ("test", test)):
            target = stem.with_name(f"{stem.stem}-{tag}{stem.suffix}")
            save_matrix(target, part)
            outputs.append(str(target))
    write_manifest(args.out, "generate", {
        "generator": args.generator, **resolved, "shape": list(S.shape),
        "outputs": outputs,
    })
    print(f"wrote {S.shape[0]} x {S.shape[1]} snapshots to {', '.join(outputs)}")
    return 0


# ---- train ------------------------------------------------------------------

def _train(S, method, r, m, M, gamma, objective, rank_tolerance, generator, svd=None):
    cfg = TrainingConfig(
        r=r, m=m, M=M, gamma=gamma, rank_tolerance=rank_tolerance,
        objective_mode=objective, generator=generator,
    )
    return TRAINERS[method](S, cfg, svd=svd)


def cmd_train(args):
    S = load_matrix(args.data)
    if args.method != "qm-full" and args.samples is None:
        raise UsageError(f"--samples/-m is required for method {args.method}")
    t0 = time.perf_counter()
    model = _train(S, args.method, args.rank, args.samples, args.candidates, args.gamma,
                   args.objective, args.rank_tolerance, args.generator or Path(args.data).stem)
    elapsed = time.perf_counter() - t0
    write_model(args.out, model)
    log_path = args.log or f"{args.out}.log.csv"
    write_rows(log_path, TRAIN_LOG_COLUMNS, model.training_log)
    write_manifest(args.out, "train", {
        **{k: v for k, v in vars(args).items() if k != "func"},
        "resolved_candidates": model.n_candidates, "resolved_samples": model.m,
        "log": str(log_path), "data_shape": list(S.shape), "wall_time": elapsed,
    })
    print(f"trained {args.method} model r={model.r} m={model.m} M={model.n_candidates}; "
          f"selected (1-based) {[int(i) + 1 for i in model.selected_indices]}")
    return 0


# ---- reconstruct -------------------------------------------------------------

def cmd_reconstruct(args):
    model = read_model(args.model)
    X = load_matrix(args.input)
    if args.samples_given:
        if X.shape[0] != model.m:
            raise ValidationError(f"sample matrix has {X.shape[0]} rows, model expects {model.m}")
        samples, full = X, None
    else:
        if X.shape[0] != model.n:
            raise ValidationError(f"snapshot matrix has {X.shape[0]} rows, model expects {model.n}")
        samples, full = apply_sampling(model.sampler, X), X
    encoder = _encoder_key(args.encoder)
    diagnostics = []
    if encoder == "gauss_newton":
        if args.gn_selection == "full" and full is None:
            raise UsageError("--gn-selection full needs full snapshots as input")
        cfg = GaussNewtonConfig(max_iterations=args.gn_iterations, selection=args.gn_selection)
        cols = []
        for c in range(samples.shape[1]):
            ref = None if full is None else full[:, c]
            q, diag = encode_gauss_newton(model, samples[:, c], cfg, ref)
            cols.append(q)
            diagnostics.append({
                "column": c, "initial_residual": repr(diag.initial_residual),
                "residual": repr(diag.residual),
                "chosen_damping": "" if diag.chosen_damping is None else repr(diag.chosen_damping),
                "selection": diag.selection,
                "runs": ";".join(f"{run.damping:g}:{run.iterations}:{run.status}"
                                 for run in diag.runs),
            })
        rec = decode(model, np.column_stack(cols)) if cols else np.zeros((model.n, 0))
    else:
        rec = reconstruct(model, samples, "sparse_linear")
    save_matrix(args.out, rec)
    if diagnostics:
        diag_path = args.diagnostics or f"{args.out}.diagnostics.csv"
        write_rows(diag_path, ("column", "initial_residual", "residual", "chosen_damping",
                               "selection", "runs"), diagnostics)
    write_manifest(args.out, "reconstruct",
                   {k: v for k, v in vars(args).items() if k != "func"})
    print(f"wrote {rec.shape[1]} reconstructions of dimension {rec.shape[0]} to {args.out}")
    return 0


# ---- evaluate ----------------------------------------------------------------

def evaluate_model(model, S_test, encoder, gn_selection="full"):
    """Relative test error of one model and the wall time it took."""
    t0 = time.perf_counter()
    samples = apply_sampling(model.sampler, S_test)
    key = _encoder_key(encoder)
    if key == "gauss_newton":
        cfg = GaussNewtonConfig(selection=gn_selection)
        rec = reconstruct(model, samples, key, cfg, reference=S_test)
    else:
        rec = reconstruct(model, samples, key)
    err = relative_error(S_test, rec)
    return err, time.perf_counter() - t0


def _result_row(model, encoder, err, wall):
    return {
        "method": model.method, "r": model.r, "m": model.m, "encoder": encoder,
        "relative_error": repr(err), "wall_time": f"{wall:.6f}",
    }


def cmd_evaluate(args):
    S_test = load_matrix(args.test)
    if S_test.shape[1] == 0:
        raise ValidationError("test matrix has no columns")
    rows = []
    for path in args.model:
        model = read_model(path)
        if model.n != S_test.shape[0]:
            raise ValidationError(f"{path}: model dimension {model.n} != test {S_test.shape[0]}")
        err, wall = evaluate_model(model, S_test, args.encoder, args.gn_selection)
        rows.append(_result_row(model, args.encoder, err, wall))
        print(f"{path}: {model.method} r={model.r} m={model.m} E_rel={err:.6e}")
    write_rows(args.out, EVALUATE_COLUMNS, rows)
    write_manifest(args.out, "evaluate", {k: v for k, v in vars(args).items() if k != "func"})
    return 0


# ---- inspect -----------------------------------------------------------------

def cmd_inspect(args):
    model = read_model(args.model, validate=False)
    report = model.invariant_report()
    if args.json:
        out = {
            "n": model.n, "r": model.r, "p": model.p, "m": model.m,
            "M": model.n_candidates, "gamma": model.gamma, "method": model.method,
            "generator": model.generator,
            "selected_indices": model.selected_indices.tolist(),
            "sampler_indices": model.sampler.indices.tolist(),
            "checks": [{"name": n, "passed": bool(ok), "value": v, "tolerance": t}
                       for n, ok, v, t in report],
        }
        print(json.dumps(out, indent=2))
    else:
        buf = io.StringIO()
        buf.write(f"model       {args.model}\n")
        buf.write(f"method      {model.method}\n")
        buf.write(f"generator   {model.generator or '-'}\n")
        buf.write(f"n={model.n} r={model.r} p={model.p} m={model.m} "
                  f"M={model.n_candidates} gamma={model.gamma:g}\n")
        buf.write("selected singular vectors (1-based): "
                  f"{' '.join(str(i + 1) for i in model.selected_indices)}\n")
        if model.sampler.is_full:
            buf.write("sampled rows: all\n")
        else:
            buf.write("sampled rows (1-based): "
                      f"{' '.join(str(i + 1) for i in model.sampler.indices)}\n")
        for name, ok, value, tol in report:
            buf.write(f"check {name:<30} {'PASS' if ok else 'FAIL'}  "
                      f"value={value:.3e} tol={tol:.3e}\n")
        print(buf.getvalue(), end="")
    return 0 if all(ok for _, ok, _, _ in report) else 1


# ---- experiment ---------------------------------------------------------------

def resolve_m(r, rule, explicit):
    if rule == "explicit":
        if explicit is None:
            raise UsageError("--m-rule explicit needs --samples/-m")
        m = explicit
    else:
        m = int(rule[0]) * r
    if m < r:
        raise UsageError(f"sample count m={m} is below r={r}")
    return m


def cmd_experiment(args):
    """Train every method for every r in the sweep and evaluate on held-out data."""
    if args.data:
        S = load_matrix(args.data)
        if args.test:
            train, test = S, load_matrix(args.test)
        else:
            train, test = split_even_odd(S)
        source = str(args.data)
    else:
        gen_args = argparse.Namespace(
            generator=args.generator, grid=args.grid, dt=None, final_time=None, stride=1,
            n=args.n, k=args.k, speed=args.speed, width=args.width,
        )
        S, _ = generate_matrix(gen_args)
        train, test = split_even_odd(S)
        source = args.generator
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    svd = reduced_svd(train, args.rank_tolerance)
    rows = []
    for r in args.r_sweep:
        m = resolve_m(r, args.m_rule, args.samples)
        for method in args.methods:
            model = _train(train, method, r, m, args.candidates, args.gamma, args.objective,
                           args.rank_tolerance, source, svd=svd)
            write_model(out_dir / f"{method}-r{r}-m{m}.qmm", model)
            err, wall = evaluate_model(model, test, args.encoder)
            rows.append(_result_row(model, args.encoder, err, wall))
            print(f"{method:<10} r={r:<3} m={model.m:<6} E_rel={err:.6e}")
    write_rows(out_dir / "results.csv", EVALUATE_COLUMNS, rows)
    params = {k: v for k, v in vars(args).items() if k != "func"}
    params["default_candidates"] = {
        r: default_candidates(r, train.shape[1], svd.rank) for r in args.r_sweep
    }
    write_manifest(out_dir / "results.csv", "experiment", params)
    return 0


# ---- parser ------------------------------------------------------------------

def _int_list(text):
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _add_training_flags(p):
    p.add_argument("-r", "--rank", type=int, required=True, help="reduced dimension r")
    p.add_argument("-m", "--samples", type=int, help="number of sparse samples m (>= r)")
    p.add_argument("-M", "--candidates", type=int,
                   help="candidate pool size (default min(k, rank, 4r+50))")
    _add_common_training_flags(p)


def _add_common_training_flags(p):
    p.add_argument("--gamma", type=_positive_float, default=1e-8)
    p.add_argument("--objective", choices=("direct", "reduced"), default="reduced")
    p.add_argument("--rank-tolerance", type=_positive_float, default=DEFAULT_RANK_TOLERANCE)
    p.add_argument("--seed", type=int, default=0,
                   help="recorded for synthetic runs; training itself is deterministic")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qmsr", description="Quadratic manifold sparse regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a snapshot matrix")
    g.add_argument("generator", choices=("vlasov", "acoustic", "advection"))
    g.add_argument("--out", required=True)
    g.add_argument("--grid", type=int, help="grid points per dimension (PDE generators)")
    g.add_argument("--dt", type=_positive_float)
    g.add_argument("--final-time", type=_positive_float)
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--n", type=int, default=256, help="advection grid size")
    g.add_argument("--k", type=int, default=200, help="advection snapshot count")
    g.add_argument("--speed", type=float, default=1.0)
    g.add_argument("--width", type=_positive_float)
    g.add_argument("--split", action="store_true",
                   help="also write even/odd train and test files")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model from a snapshot matrix")
    t.add_argument("data")
    t.add_argument("--method", choices=tuple(TRAINERS), default="qmsr")
    _add_training_flags(t)
    t.add_argument("--generator", default="", help="provenance label stored in the model")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--log", help="training log CSV (default <out>.log.csv)")
    t.set_defaults(func=cmd_train)

    rc = sub.add_parser("reconstruct", help="reconstruct full vectors from samples")
    rc.add_argument("--model", required=True)
    rc.add_argument("--input", required=True,
                    help="full snapshots (n rows) or, with --samples, sampled values (m rows)")
    rc.add_argument("--samples", dest="samples_given", action="store_true")
    rc.add_argument("--encoder", choices=ENCODER_CHOICES, default="sparse-linear")
    rc.add_argument("--gn-selection", choices=("sampled", "full"), default="sampled")
    rc.add_argument("--gn-iterations", type=int, default=20)
    rc.add_argument("--diagnostics", help="Gauss-Newton diagnostics CSV")
    rc.add_argument("--out", required=True)
    rc.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="relative test error of trained models")
    e.add_argument("--model", nargs="+", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--encoder", choices=ENCODER_CHOICES, default="sparse-linear")
    e.add_argument("--gn-selection", choices=("sampled", "full"), default="full")
    e.add_argument("--out", required=True, help="results CSV")
    e.set_defaults(func=cmd_evaluate)

    i = sub.add_parser("inspect", help="print a model header and invariant checks")
    i.add_argument("model")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_inspect)

    x = sub.add_parser("experiment", help="sweep r for several methods")
    src = x.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="snapshot matrix (split even/odd unless --test)")
    src.add_argument("--generator", choices=("vlasov", "acoustic", "advection"))
    x.add_argument("--test")
    x.add_argument("--grid", type=int)
    x.add_argument("--n", type=int, default=256)
    x.add_argument("--k", type=int, default=200)
    x.add_argument("--speed", type=float, default=1.0)
    x.add_argument("--width", type=_positive_float)
    x.add_argument("--methods", type=lambda s: s.split(","), default=list(TRAINERS))
    x.add_argument("--r-sweep", type=_int_list, required=True)
    x.add_argument("--m-rule", choices=M_RULES, default="2r")
    x.add_argument("-m", "--samples", type=int)
    x.add_argument("-M", "--candidates", type=int)
    x.add_argument("--encoder", choices=ENCODER_CHOICES, default="sparse-linear")
    _add_common_training_flags(x)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(func=cmd_experiment)
    return parser


def _validate_args(parser, args):
    if args.command == "train":
        if args.samples is not None and args.samples < args.rank:
            parser.error(f"--samples ({args.samples}) must be >= --rank ({args.rank})")
        if args.candidates is not None and args.candidates < args.rank:
            parser.error(f"--candidates ({args.candidates}) must be >= --rank ({args.rank})")
    if args.command == "experiment":
        unknown = set(args.methods) - set(TRAINERS)
        if unknown:
            parser.error(f"unknown methods: {', '.join(sorted(unknown))}")
        for r in args.r_sweep:
            try:
                resolve_m(r, args.m_rule, args.samples)
            except UsageError as exc:
                parser.error(str(exc))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_args(parser, args)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        print(f"qmsr: error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"qmsr: invalid input: {exc}", file=sys.stderr)
        return 2
    except QMSRError as exc:
        print(f"qmsr: numerical failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"qmsr: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
