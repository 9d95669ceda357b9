"""Command-line entry point.

Exit status: 0 on success, 2 for configuration errors, 1 for runtime errors.
Option precedence: command-line flags, then ``--config`` JSON file, then
built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluator, map_core, pipeline
from .lstm_core import LstmConfig, StructuralError
from .trainer import CheckpointError, TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("qpforecast")

PRESETS = {
    "c1a": ("C1", 3.6, 0.5),
    "c1b": ("C1", 3.9, 1.0),
    "c2a": ("C2", 3.0, 1.0),
    "c2b": ("C2", 3.1, 0.8),
}

DEFAULT_SWEEP_UNITS = "2,4,8,16,32,64"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


CONFIG_ERRORS = (
    ConfigError,
    map_core.MapDomainError,
    pipeline.ConfigError,
    pipeline.DegenerateScaleError,
    StructuralError,
)


# ---------------------------------------------------------------- parsing

def _add_map_args(p: argparse.ArgumentParser, n_default: int = 100_000) -> None:
    g = p.add_argument_group("map")
    g.add_argument("--regime-preset", choices=sorted(PRESETS), default=None,
                   help="c1a: 3.6/0.5, c1b: 3.9/1.0, c2a: 3.0/1.0, c2b: 3.1/0.8 (alpha/eps')")
    g.add_argument("--alpha", type=float, default=None)
    g.add_argument("--eps-prime", type=float, default=None, help="rescaled drive in [0, 1]")
    g.add_argument("--epsilon", type=float, default=None, help="raw forcing amplitude")
    g.add_argument("--omega", type=float, default=map_core.GOLDEN_OMEGA)
    g.add_argument("--x0", type=float, default=map_core.DEFAULT_X0)
    g.add_argument("--phi0", type=float, default=map_core.DEFAULT_PHI0)
    g.add_argument("--n", type=int, default=n_default, help="recorded iterations")
    g.add_argument("--burn-in", type=int, default=map_core.DEFAULT_BURN_IN)


def _add_pipeline_args(p: argparse.ArgumentParser, horizon: int = 1) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--train-fraction", type=float, default=0.6)
    g.add_argument("--a", type=float, default=-1.0, help="scaled range low end")
    g.add_argument("--b", type=float, default=1.0, help="scaled range high end")
    g.add_argument("--window", type=int, default=1, help="lookback window W")
    g.add_argument("--horizon", type=int, default=horizon, help="forecast horizon H")
    g.add_argument("--fit-on-all", action="store_true",
                   help="fit the scaler on train+test instead of train only")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--layers", type=int, default=2)
    g.add_argument("--units", type=int, default=16)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float, default=d.learning_rate)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--beta1", type=float, default=d.beta1)
    g.add_argument("--beta2", type=float, default=d.beta2)
    g.add_argument("--eps-hat", type=float, default=d.eps_hat)
    g.add_argument("--no-shuffle", action="store_true")
    g.add_argument("--val-fraction", type=float, default=d.val_fraction)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file of option values")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="qpforecast",
        description="Quasiperiodically forced logistic map: simulation, Lyapunov "
                    "exponents and LSTM forecasting experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("simulate", parents=[common], help="write a trajectory CSV (n,x,phi)")
    _add_map_args(p)
    p.add_argument("--output", default="trajectory.csv")
    subs["simulate"] = p

    p = sub.add_parser("lyapunov", parents=[common], help="print the Lyapunov exponent")
    _add_map_args(p)
    subs["lyapunov"] = p

    p = sub.add_parser("phase-scan", parents=[common], help="Lyapunov exponent over an (alpha, eps') grid")
    _add_map_args(p, n_default=5000)
    p.add_argument("--alpha-min", type=float, default=2.6)
    p.add_argument("--alpha-max", type=float, default=4.0)
    p.add_argument("--alpha-steps", type=int, default=141)
    p.add_argument("--eps-min", type=float, default=0.0)
    p.add_argument("--eps-max", type=float, default=1.0)
    p.add_argument("--eps-steps", type=int, default=101)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", default="phase_scan.csv")
    subs["phase-scan"] = p

    p = sub.add_parser("prepare", parents=[common], help="simulate, split, scale and save a dataset")
    _add_map_args(p)
    _add_pipeline_args(p)
    p.add_argument("--output", default="dataset.npz")
    subs["prepare"] = p

    p = sub.add_parser("train", parents=[common], help="train on a prepared dataset")
    p.add_argument("--data", required=False, default=None, help="dataset .npz from 'prepare'")
    _add_model_args(p)
    _add_train_args(p)
    p.add_argument("--out-dir", default=".")
    subs["train"] = p

    p = sub.add_parser("eval", parents=[common], help="score a checkpoint on a prepared dataset")
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out-dir", default=".")
    subs["eval"] = p

    for name, horizon, help_ in (
        ("run", 1, "end-to-end experiment: simulate, train, evaluate, emit artifacts"),
        ("multistep", 5, "direct multi-step experiment with per-step RMSE"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        _add_map_args(p)
        _add_pipeline_args(p, horizon=horizon)
        _add_model_args(p)
        _add_train_args(p)
        p.add_argument("--out-dir", default="runs")
        if name == "multistep":
            p.add_argument("--compare-recursive", action="store_true",
                           help="also train a one-step model and score it in closed loop")
        subs[name] = p

    p = sub.add_parser("sweep-units", parents=[common], help="RMSE versus LSTM layer width")
    _add_map_args(p)
    _add_pipeline_args(p)
    _add_model_args(p)
    _add_train_args(p)
    p.add_argument("--units-list", default=DEFAULT_SWEEP_UNITS)
    p.add_argument("--restarts", type=int, default=1, help="best of k seeds per width")
    p.add_argument("--output", default="sweep_units.csv")
    subs["sweep-units"] = p
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config file {args.config}: {exc}")
        if not isinstance(values, dict):
            parser.error("config file must hold a JSON object")
        values = {k.replace("-", "_"): v for k, v in values.items()}
        values.pop("config", None)
        unknown = set(values) - set(vars(args))
        if unknown:
            parser.error(f"unknown keys in config file: {', '.join(sorted(unknown))}")
        subs[args.command].set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- helpers

def map_params(args) -> tuple[str, map_core.MapParams, float]:
    """Resolve (regime label, params, eps') from preset / alpha / eps' / epsilon."""
    label = ""
    alpha, eps_prime = args.alpha, args.eps_prime
    if args.regime_preset:
        label, pa, pe = PRESETS[args.regime_preset]
        alpha = pa if alpha is None else alpha
        if eps_prime is None and args.epsilon is None:
            eps_prime = pe
    if alpha is None:
        raise ConfigError("give --alpha or --regime-preset")
    if eps_prime is not None and args.epsilon is not None:
        raise ConfigError("--eps-prime and --epsilon are mutually exclusive")
    if args.epsilon is not None:
        params = map_core.MapParams(alpha, args.epsilon, args.omega)
        eps_prime = params.eps_prime
    else:
        eps_prime = 0.0 if eps_prime is None else eps_prime
        if alpha >= 4.0 and eps_prime == 0.0:
            params = map_core.MapParams(alpha, 0.0, args.omega)
        else:
            params = map_core.MapParams.from_prime(alpha, eps_prime, args.omega)
    return label, params, eps_prime


def lstm_config(args, W: int, H: int) -> LstmConfig:
    return LstmConfig(num_layers=args.layers, units=args.units, input_dim=1, output_dim=H, window=W)


def train_config(args) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
            seed=args.seed, beta1=args.beta1, beta2=args.beta2, eps_hat=args.eps_hat,
            shuffle=not args.no_shuffle, val_fraction=args.val_fraction,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_datasets(series, args):
    train_s, test_s = pipeline.split(series, args.train_fraction)
    fit_on = series if args.fit_on_all else train_s
    scaler = pipeline.fit_scaler(fit_on, args.a, args.b)
    train_set = pipeline.window(pipeline.scale(train_s, scaler), args.window, args.horizon)
    test_set = pipeline.window(pipeline.scale(test_s, scaler), args.window, args.horizon)
    return train_s, test_s, scaler, train_set, test_set


def run_dir_name(args, label_preset: str | None, alpha: float, eps_prime: float) -> str:
    name = label_preset or f"a{alpha:g}_e{eps_prime:g}"
    name += f"_seed{args.seed}"
    if args.window != 1:
        name += f"_W{args.window}"
    if args.horizon != 1:
        name += f"_H{args.horizon}"
    return name


def _attach_run_log(directory: Path) -> logging.Handler:
    handler = logging.FileHandler(directory / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("qpforecast").addHandler(handler)
    return handler


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, *CONFIG_ERRORS)):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    _, params, _ = map_params(args)
    traj = map_core.iterate(params, args.x0, args.phi0, args.n, args.burn_in)
    traj.to_csv(args.output)
    log.info("wrote %d rows to %s", len(traj), args.output)
    return 0


def compute_lyapunov(params, x0, phi0, n, burn_in) -> float:
    try:
        return map_core.lyapunov(params, x0, phi0, n, burn_in)
    except map_core.SingularTermError as exc:
        log.warning("%s; retrying with x0 + 1e-9", exc)
        return map_core.lyapunov(params, x0 + 1e-9, phi0, n, burn_in)


def cmd_lyapunov(args) -> int:
    _, params, _ = map_params(args)
    lam = compute_lyapunov(params, args.x0, args.phi0, args.n, args.burn_in)
    print(f"{format(lam, '.17g')}\t{map_core.classify(lam)}")
    return 0


def cmd_phase_scan(args) -> int:
    if args.alpha_steps < 1 or args.eps_steps < 1:
        raise ConfigError("grid steps must be >= 1")
    cells = map_core.phase_scan(
        (args.alpha_min, args.alpha_max, args.alpha_steps),
        (args.eps_min, args.eps_max, args.eps_steps),
        n=args.n, burn_in=args.burn_in, x0=args.x0, phi0=args.phi0,
        omega=args.omega, workers=args.workers,
    )
    map_core.write_scan_csv(cells, args.output)
    log.info("wrote %d cells to %s", len(cells), args.output)
    return 0


def cmd_prepare(args) -> int:
    label, params, eps_prime = map_params(args)
    traj = map_core.iterate(params, args.x0, args.phi0, args.n, args.burn_in)
    train_s, test_s, scaler, _, _ = build_datasets(traj.x, args)
    np.savez(
        args.output,
        train_series=train_s, test_series=test_s,
        scaler=np.array([scaler.x_min, scaler.x_max, scaler.a, scaler.b]),
        window=args.window, horizon=args.horizon,
        alpha=params.alpha, eps_prime=eps_prime, regime=label,
    )
    log.info("wrote dataset %s (%d train / %d test points)", args.output, len(train_s), len(test_s))
    return 0


def _load_dataset(path):
    if path is None:
        raise ConfigError("--data is required")
    try:
        with np.load(path) as z:
            scaler = pipeline.ScalerParams(*z["scaler"].tolist())
            W, H = int(z["window"]), int(z["horizon"])
            train_set = pipeline.window(pipeline.scale(z["train_series"], scaler), W, H)
            test_set = pipeline.window(pipeline.scale(z["test_series"], scaler), W, H)
            meta = {"alpha": float(z["alpha"]), "eps_prime": float(z["eps_prime"]),
                    "regime": str(z["regime"])}
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load dataset {path}: {exc}") from exc
    return scaler, train_set, test_set, meta


def cmd_train(args) -> int:
    scaler, train_set, _, _ = _load_dataset(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = lstm_config(args, train_set.W, train_set.H)
    tc = train_config(args)
    weights, history = train(train_set, cfg, tc, scaler=scaler,
                             checkpoint_path=out / "checkpoint.json")
    save_checkpoint(weights, scaler, out / "checkpoint.json", extra={"train": tc.to_dict()})
    history.to_csv(out / "loss_history.csv")
    return 0


def cmd_eval(args) -> int:
    scaler, _, test_set, meta = _load_dataset(args.data)
    if args.checkpoint is None:
        raise ConfigError("--checkpoint is required")
    weights, ck_scaler, extra = load_checkpoint(args.checkpoint)
    if ck_scaler is not None and ck_scaler != scaler:
        raise ConfigError("checkpoint scaler differs from the dataset's scaler")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluator.evaluate(weights, scaler, test_set, meta["regime"], meta["alpha"], meta["eps_prime"])
    _emit_report(report, out, weights.config, extra.get("train", {}).get("seed", -1))
    return 0


def _emit_report(report, out: Path, cfg: LstmConfig, seed: int) -> dict:
    for step in range(1, report.H + 1):
        name = "scatter.csv" if report.H == 1 else f"scatter_step{step}.csv"
        evaluator.emit_scatter(report, out / name, step)
    summary = evaluator.summary_dict(report, cfg.window, cfg.output_dim, cfg.units, seed)
    evaluator.write_summary(summary, out / "summary.json")
    return summary


def _experiment(args, compare_recursive: bool = False) -> int:
    with _Stage("config"):
        label, params, eps_prime = map_params(args)
        tc = train_config(args)
    out = Path(args.out_dir) / run_dir_name(args, args.regime_preset, params.alpha, eps_prime)
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_run_log(out)
    try:
        with _Stage("simulate"):
            traj = map_core.iterate(params, args.x0, args.phi0, args.n, args.burn_in)
            traj.to_csv(out / "trajectory.csv")
        with _Stage("prepare"):
            _, _, scaler, train_set, test_set = build_datasets(traj.x, args)
            cfg = lstm_config(args, args.window, args.horizon)
        with _Stage("train"):
            weights, history = train(train_set, cfg, tc, scaler=scaler,
                                     checkpoint_path=out / "checkpoint.json")
            save_checkpoint(weights, scaler, out / "checkpoint.json", extra={"train": tc.to_dict()})
            history.to_csv(out / "loss_history.csv")
        with _Stage("evaluate"):
            report = evaluator.evaluate(weights, scaler, test_set, label, params.alpha, eps_prime)
            summary = _emit_report(report, out, cfg, tc.seed)
        if compare_recursive:
            with _Stage("recursive"):
                one_train = pipeline.SupervisedSet(train_set.inputs, train_set.targets[:, :1])
                one_cfg = lstm_config(args, args.window, 1)
                one_w, _ = train(one_train, one_cfg, tc, scaler=scaler)
                per_step = evaluator.multistep_eval(one_w, scaler, test_set, args.horizon, mode="recursive")
                summary["recursive_per_step_rmse"] = per_step
                evaluator.write_summary(summary, out / "summary.json")
        log.info("rmse=%.6g per_step=%s -> %s", report.rmse, report.per_step_rmse, out)
        print(json.dumps(summary, sort_keys=True))
    finally:
        logging.getLogger("qpforecast").removeHandler(handler)
        handler.close()
    return 0


def cmd_run(args) -> int:
    return _experiment(args)


def cmd_multistep(args) -> int:
    if args.horizon < 2:
        raise ConfigError("multistep needs --horizon >= 2")
    rc = _experiment(args, compare_recursive=args.compare_recursive)
    return rc


def cmd_sweep_units(args) -> int:
    try:
        units = [int(u) for u in str(args.units_list).split(",") if u.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --units-list: {exc}") from exc
    if not units or any(u < 1 for u in units):
        raise ConfigError("--units-list needs positive integers")
    with _Stage("config"):
        _, params, _ = map_params(args)
        tc = train_config(args)
    with _Stage("simulate"):
        traj = map_core.iterate(params, args.x0, args.phi0, args.n, args.burn_in)
    with _Stage("prepare"):
        _, _, scaler, train_set, test_set = build_datasets(traj.x, args)
    with _Stage("sweep"):
        base = lstm_config(args, args.window, args.horizon)
        results = evaluator.unit_sweep(units, train_set, test_set, scaler, base, tc, args.restarts)
        evaluator.write_sweep_csv(results, args.output)
    for r in results:
        print(f"{r.units},{format(r.rmse, '.17g')}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "phase-scan": cmd_phase_scan,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "run": cmd_run,
    "multistep": cmd_multistep,
    "sweep-units": cmd_sweep_units,
}


_console: logging.Handler | None = None


def _setup_console_logging(verbose: bool) -> None:
    global _console
    logger = logging.getLogger("qpforecast")
    logger.setLevel(logging.INFO)  # run.log always gets INFO
    if _console is None:
        _console = logging.StreamHandler()
        _console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(_console)
    _console.setLevel(logging.INFO if verbose else logging.WARNING)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code) if exc.code is not None else 0
    _setup_console_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"qpforecast {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"qpforecast {args.command}: {exc}", file=sys.stderr)
        return 1
    except (map_core.DivergenceError, map_core.SingularTermError, CheckpointError,
            ArithmeticError, RuntimeError, OSError) as exc:
        print(f"qpforecast {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
