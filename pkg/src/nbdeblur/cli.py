"""Command-line harness: simulate, recover, evaluate, benchmark.

The benchmark sweep reproduces the NB-vs-Poisson comparison protocol at desk
scale: for every (model, dispersion, trial) cell it simulates a fresh noisy
observation with a stable derived seed, recovers it under the requested data
model, scores PSNR/SSIM against the truth, and emits a per-trial CSV plus an
aggregated markdown table (models as rows, dispersion values as PSNR/SSIM
column groups).

Every artifact is written next to a manifest that records all parameters and
seeds, so any output can be regenerated bit-identically.

Exit codes: 0 success, 1 usage error, 2 runtime/solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .admm import MODEL_NB, MODEL_POISSON, SolverConfig, run_admm
from .grids import (
    ImageGrid,
    load_counts,
    load_image,
    save_counts,
    save_image,
)
from .metrics import psnr, ssim
from .noise import NbModelParams, NbObservation, POISSON, simulate_observation
from .operators import gaussian_kernel, spectral_of_kernel
from .phantom import make_phantom

_MODEL_LABEL = {MODEL_NB: "NB", MODEL_POISSON: "Poisson"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Manifests: flat "key = value" text, one entry per line.
# ---------------------------------------------------------------------------


def write_manifest(path, entries: dict) -> None:
    lines = ["%s = %s" % (k, v) for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    entries = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" = ")
        entries[key] = value
    return entries


def derive_seed(base_seed: int, model: str, r: float, trial: int) -> int:
    """Stable per-cell seed.  Uses a keyed digest, not Python's salted hash,
    so reruns across processes derive identical seeds."""
    key = ("%s|%r|%d" % (model, float(r), trial)).encode()
    offset = int.from_bytes(hashlib.blake2s(key, digest_size=6).digest(), "big")
    return base_seed + offset


def load_image_auto(path) -> ImageGrid:
    """Load by extension: .png, .pgm (bit depth from the header), or a
    counts .txt rendered as an image."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".png":
        return load_image(p, "png8")
    if suffix == ".pgm":
        try:
            return load_image(p, "pgm8")
        except ValueError as exc:
            if "bit depth" in str(exc):
                return load_image(p, "pgm16")
            raise
    if suffix == ".txt":
        return load_counts(p).as_image()
    raise ValueError("cannot infer image format from %r (use .png/.pgm/.txt)" % str(path))


# ---------------------------------------------------------------------------
# Benchmark configuration and runner.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark sweep: image x models x dispersion values x trials."""

    truth_path: str | None = None
    phantom_size: int = 128
    phantom_ramp: bool = True
    peak: float = 255.0
    models: tuple[str, ...] = (MODEL_NB, MODEL_POISSON)
    r_values: tuple[float, ...] = (1.0, 10.0, 25.0, 100.0, 1000.0)
    trials: int = 10
    base_seed: int = 1234
    blur_size: int = 10
    blur_sigma: float = 2.5
    solver: SolverConfig = field(default_factory=SolverConfig)
    clip_before_score: bool = False
    output_dir: str = "benchmark_out"
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.r_values or any(r <= 0 for r in self.r_values):
            raise ValueError("r_values must be non-empty and positive")
        for m in self.models:
            if m not in (MODEL_NB, MODEL_POISSON):
                raise ValueError("unknown model %r" % m)
        if self.base_seed < 0:
            raise ValueError("base_seed must be nonnegative")

    @property
    def image_name(self) -> str:
        if self.truth_path is not None:
            return Path(self.truth_path).stem
        return "phantom%d" % self.phantom_size

    def load_truth(self) -> ImageGrid:
        if self.truth_path is not None:
            return load_image_auto(self.truth_path)
        return make_phantom(self.phantom_size, self.phantom_size, self.peak, ramp=self.phantom_ramp)

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        read = parser.read(path)
        if not read:
            raise ValueError("cannot read config file %r" % str(path))
        exp = parser["experiment"] if parser.has_section("experiment") else {}
        blur = parser["blur"] if parser.has_section("blur") else {}
        solver = parser["solver"] if parser.has_section("solver") else {}

        def _get(section, key, cast, default):
            if key not in section:
                return default
            raw = section[key]
            if cast is bool:
                return str(raw).strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)

        models = _get(exp, "models", str, "nb, poisson")
        r_values = _get(exp, "r_values", str, "1, 10, 25, 100, 1000")
        solver_cfg = SolverConfig(
            tau=_get(solver, "tau", float, 0.05),
            alpha=_get(solver, "alpha", float, 0.8),
            beta0=_get(solver, "beta0", float, 1e-4),
            sigma=_get(solver, "sigma", float, 1.05),
            epsilon=_get(solver, "epsilon", float, 1e-5),
            max_iters=_get(solver, "max_iters", int, 500),
            nonneg_clip=_get(solver, "nonneg_clip", bool, False),
        )
        return cls(
            truth_path=_get(exp, "truth", str, None),
            phantom_size=_get(exp, "phantom_size", int, 128),
            phantom_ramp=_get(exp, "phantom_ramp", bool, True),
            peak=_get(exp, "peak", float, 255.0),
            models=tuple(m.strip().lower() for m in models.split(",") if m.strip()),
            r_values=tuple(float(tok) for tok in r_values.split(",") if tok.strip()),
            trials=_get(exp, "trials", int, 10),
            base_seed=_get(exp, "base_seed", int, 1234),
            blur_size=_get(blur, "size", int, 10),
            blur_sigma=_get(blur, "sigma", float, 2.5),
            solver=solver_cfg,
            clip_before_score=_get(exp, "clip_before_score", bool, False),
            output_dir=_get(exp, "output_dir", str, "benchmark_out"),
        )

    def manifest_entries(self) -> dict:
        entries = {
            "version": __version__,
            "image": self.image_name,
            "truth": self.truth_path or "(phantom)",
            "phantom_size": self.phantom_size,
            "phantom_ramp": self.phantom_ramp,
            "peak": self.peak,
            "models": ",".join(self.models),
            "r_values": ",".join(repr(r) for r in self.r_values),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "blur_size": self.blur_size,
            "blur_sigma": self.blur_sigma,
            "clip_before_score": self.clip_before_score,
        }
        for key, value in dataclasses.asdict(self.solver).items():
            entries["solver_%s" % key] = value
        return entries


@dataclass(frozen=True)
class TrialOutcome:
    image: str
    model: str
    r: float
    trial: int
    seed: int
    psnr: float | None
    ssim: float | None
    iterations: int | None
    status: str


@dataclass(frozen=True)
class BenchmarkRow:
    image_name: str
    model: str
    r: float
    mean_psnr: float
    mean_ssim: float
    trial_count: int
    seed_range: str


def _benchmark_trial(config: ExperimentConfig, model: str, r: float, trial: int) -> TrialOutcome:
    seed = derive_seed(config.base_seed, model, r, trial)
    try:
        truth = config.load_truth()
        kernel = gaussian_kernel(config.blur_size, config.blur_sigma)
        blur = spectral_of_kernel(kernel, truth.height, truth.width)
        obs = simulate_observation(truth, blur, r, seed, kernel=kernel)
        solver_cfg = dataclasses.replace(config.solver, model=model)
        result = run_admm(obs, blur, solver_cfg)
        recon = result.f_hat.clipped(0.0, config.peak) if config.clip_before_score else result.f_hat
        return TrialOutcome(
            image=config.image_name,
            model=model,
            r=r,
            trial=trial,
            seed=seed,
            psnr=psnr(truth, recon, config.peak),
            ssim=ssim(truth, recon),
            iterations=result.iterations,
            status="ok",
        )
    except Exception as exc:  # noqa: BLE001 - one bad trial must not kill the sweep
        return TrialOutcome(
            image=config.image_name,
            model=model,
            r=r,
            trial=trial,
            seed=seed,
            psnr=None,
            ssim=None,
            iterations=None,
            status="error: %s" % exc,
        )


def run_benchmark(config: ExperimentConfig) -> tuple[list[TrialOutcome], list[BenchmarkRow]]:
    """Run every (model, r, trial) cell; aggregation covers ok trials only."""
    cells = [
        (model, r, trial)
        for model in config.models
        for r in config.r_values
        for trial in range(config.trials)
    ]
    seeds = [derive_seed(config.base_seed, *cell) for cell in cells]
    if len(set(seeds)) != len(seeds):
        raise RuntimeError("derived seeds collide; choose a different base_seed")

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_benchmark_trial, *zip(*[(config, m, r, t) for m, r, t in cells])))
    else:
        outcomes = [_benchmark_trial(config, m, r, t) for m, r, t in cells]
    outcomes.sort(key=lambda o: (o.image, o.model, o.r, o.trial))

    rows = []
    for model in sorted(config.models):
        for r in sorted(config.r_values):
            ok = [o for o in outcomes if o.model == model and o.r == r and o.status == "ok"]
            if not ok:
                continue
            rows.append(
                BenchmarkRow(
                    image_name=config.image_name,
                    model=model,
                    r=r,
                    mean_psnr=float(np.mean([o.psnr for o in ok])),
                    mean_ssim=float(np.mean([o.ssim for o in ok])),
                    trial_count=len(ok),
                    seed_range="%d..%d" % (min(o.seed for o in ok), max(o.seed for o in ok)),
                )
            )
    rows.sort(key=lambda row: (row.image_name, row.model, row.r))
    return outcomes, rows


def write_trials_csv(path, outcomes: list[TrialOutcome]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "model", "r", "trial", "seed", "psnr", "ssim", "iterations", "status"])
        for o in outcomes:
            writer.writerow(
                [
                    o.image,
                    o.model,
                    repr(o.r),
                    o.trial,
                    o.seed,
                    "" if o.psnr is None else repr(o.psnr),
                    "" if o.ssim is None else repr(o.ssim),
                    "" if o.iterations is None else o.iterations,
                    o.status,
                ]
            )


def write_summary_csv(path, rows: list[BenchmarkRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "model", "r", "mean_psnr", "mean_ssim", "trial_count", "seed_range"])
        for row in rows:
            writer.writerow(
                [
                    row.image_name,
                    row.model,
                    repr(row.r),
                    repr(row.mean_psnr),
                    repr(row.mean_ssim),
                    row.trial_count,
                    row.seed_range,
                ]
            )


def format_markdown_table(rows: list[BenchmarkRow], r_values: tuple[float, ...]) -> str:
    """Models as rows; one PSNR column then one SSIM column per dispersion."""
    r_sorted = sorted(r_values)

    def _rlabel(r: float) -> str:
        return "%g" % r

    header = (
        ["Image", "Model"]
        + ["PSNR r=%s" % _rlabel(r) for r in r_sorted]
        + ["SSIM r=%s" % _rlabel(r) for r in r_sorted]
    )
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    by_key = {(row.image_name, row.model, row.r): row for row in rows}
    images = sorted({row.image_name for row in rows})
    models = sorted({row.model for row in rows})
    for image in images:
        for model in models:
            cells = [image, _MODEL_LABEL.get(model, model)]
            for r in r_sorted:
                row = by_key.get((image, model, r))
                cells.append("%.2f" % row.mean_psnr if row else "-")
            for r in r_sorted:
                row = by_key.get((image, model, r))
                cells.append("%.3f" % row.mean_ssim if row else "-")
            lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_truth_arg(args) -> ImageGrid:
    if args.truth is not None:
        return load_image_auto(args.truth)
    if args.phantom_size is not None:
        return make_phantom(args.phantom_size, args.phantom_size, args.peak, ramp=args.phantom_ramp)
    raise UsageError("either --truth or --phantom-size is required")


def cmd_simulate(args) -> int:
    truth = _load_truth_arg(args)
    r = POISSON if args.poisson else args.r
    if r is None:
        raise UsageError("--r is required unless --poisson is given")
    if not r > 0:
        raise UsageError("--r must be positive")
    kernel = gaussian_kernel(args.blur_size, args.blur_sigma)
    blur = spectral_of_kernel(kernel, truth.height, truth.width)
    obs = simulate_observation(truth, blur, r, args.seed, kernel=kernel)

    out = _outdir(args)
    save_counts(obs.counts, out / "counts.txt")
    # 16-bit PGM at peak 65535 stores native integer units exactly (counts
    # above 65535 saturate); used for the preview and the truth snapshot.
    save_image(obs.counts.as_image(), out / "preview.pgm", "pgm16", peak=65535.0)
    save_image(truth, out / "truth.pgm", "pgm16", peak=65535.0)
    write_manifest(
        out / "manifest.txt",
        {
            "version": __version__,
            "command": "simulate",
            "truth": args.truth or "(phantom %d)" % args.phantom_size,
            "height": truth.height,
            "width": truth.width,
            "peak": args.peak,
            "r": "poisson" if math.isinf(r) else repr(float(r)),
            "blur_size": args.blur_size,
            "blur_sigma": args.blur_sigma,
            "seed": args.seed,
        },
    )
    print("wrote %s" % (out / "counts.txt"))
    return 0


def cmd_recover(args) -> int:
    counts = load_counts(args.counts)
    if args.model == MODEL_NB and args.r is None:
        raise UsageError("--r is required with the NB model")
    params = NbModelParams(args.r if args.r is not None else POISSON)
    obs = NbObservation(counts, params)
    kernel = gaussian_kernel(args.blur_size, args.blur_sigma)
    blur = spectral_of_kernel(kernel, counts.height, counts.width)
    solver_cfg = SolverConfig(
        tau=args.tau,
        alpha=args.alpha,
        beta0=args.beta0,
        sigma=args.sigma,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        model=args.model,
        r=args.r,
        nonneg_clip=args.nonneg_clip,
    )
    result = run_admm(obs, blur, solver_cfg)

    out = _outdir(args)
    # native units in the 16-bit PGM; display scaling only in the PNG
    save_image(result.f_hat, out / "recovered.pgm", "pgm16", peak=65535.0)
    save_image(result.f_hat, out / "recovered.png", "png8", peak=args.peak)
    with open(out / "history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "objective", "data_fit", "aitv", "residual_fit", "residual_grad", "rel_change"]
        )
        for i, rec in enumerate(result.history, start=1):
            writer.writerow(
                [i, repr(rec.objective), repr(rec.data_fit), repr(rec.aitv),
                 repr(rec.residual_fit), repr(rec.residual_grad), repr(rec.rel_change)]
            )
    manifest = {
        "version": __version__,
        "command": "recover",
        "counts": args.counts,
        "model": args.model,
        "r": "poisson" if args.r is None else repr(float(args.r)),
        "tau": args.tau,
        "alpha": args.alpha,
        "beta0": args.beta0,
        "sigma": args.sigma,
        "epsilon": args.epsilon,
        "max_iters": args.max_iters,
        "nonneg_clip": args.nonneg_clip,
        "blur_size": args.blur_size,
        "blur_sigma": args.blur_sigma,
        "peak": args.peak,
        "iterations": result.iterations,
        "terminated_by": result.terminated_by,
    }
    if result.history:
        final = result.history[-1]
        manifest.update(
            {
                "final_objective": repr(final.objective),
                "final_residual_fit": repr(final.residual_fit),
                "final_residual_grad": repr(final.residual_grad),
                "final_rel_change": repr(final.rel_change),
            }
        )
    write_manifest(out / "manifest.txt", manifest)
    print("wrote %s (%d iterations, %s)" % (out / "recovered.pgm", result.iterations, result.terminated_by))
    return 0


def cmd_evaluate(args) -> int:
    reference = load_image_auto(args.reference)
    test = load_image_auto(args.test)
    if args.clip_before_score:
        test = test.clipped(0.0, args.peak)
    print("psnr=%r ssim=%r" % (psnr(reference, test, args.peak), ssim(reference, test)))
    return 0


def cmd_benchmark(args) -> int:
    if args.config is None:
        raise UsageError("benchmark requires --config")
    config = ExperimentConfig.from_ini(args.config)
    overrides = {}
    if args.output_dir != ".":
        overrides["output_dir"] = args.output_dir
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        config = dataclasses.replace(config, **overrides)

    outcomes, rows = run_benchmark(config)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials_csv(out / "trials.csv", outcomes)
    write_summary_csv(out / "summary.csv", rows)
    (out / "table.md").write_text(format_markdown_table(rows, config.r_values))
    write_manifest(out / "manifest.txt", config.manifest_entries())

    print(format_markdown_table(rows, config.r_values), end="")
    failures = [o for o in outcomes if o.status != "ok"]
    if failures:
        print("%d trial(s) failed" % len(failures), file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument("--output-dir", default=".", help="directory for written artifacts")
    common.add_argument("--config", default=None, help="INI config file (benchmark)")

    parser = _Parser(prog="nbdeblur", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="blur a truth image and sample noisy counts")
    sim.add_argument("--truth", default=None, help="truth image (.pgm/.png)")
    sim.add_argument("--phantom-size", type=int, default=None, help="use the built-in phantom at this size")
    sim.add_argument("--phantom-ramp", action="store_true", help="add the gradient strip to the phantom")
    sim.add_argument("--peak", type=float, default=255.0)
    sim.add_argument("--r", type=float, default=None, help="dispersion parameter")
    sim.add_argument("--poisson", action="store_true", help="sample Poisson noise instead of NB")
    sim.add_argument("--blur-size", type=int, default=10)
    sim.add_argument("--blur-sigma", type=float, default=2.5)
    sim.set_defaults(func=cmd_simulate)

    rec = sub.add_parser("recover", parents=[common], help="run the ADMM solver on a counts file")
    rec.add_argument("--counts", required=True, help="counts matrix (.txt)")
    rec.add_argument("--model", choices=[MODEL_NB, MODEL_POISSON], default=MODEL_NB)
    rec.add_argument("--r", type=float, default=None, help="dispersion parameter (NB model)")
    rec.add_argument("--tau", type=float, default=0.05)
    rec.add_argument("--alpha", type=float, default=0.8)
    rec.add_argument("--beta0", type=float, default=1e-4)
    rec.add_argument("--sigma", type=float, default=1.05)
    rec.add_argument("--epsilon", type=float, default=1e-5)
    rec.add_argument("--max-iters", type=int, default=500)
    rec.add_argument("--nonneg-clip", action="store_true")
    rec.add_argument("--blur-size", type=int, default=10)
    rec.add_argument("--blur-sigma", type=float, default=2.5)
    rec.add_argument("--peak", type=float, default=255.0)
    rec.set_defaults(func=cmd_recover)

    ev = sub.add_parser("evaluate", parents=[common], help="print PSNR/SSIM of test vs reference")
    ev.add_argument("--reference", required=True)
    ev.add_argument("--test", required=True)
    ev.add_argument("--peak", type=float, default=255.0)
    ev.add_argument("--clip-before-score", action="store_true")
    ev.set_defaults(func=cmd_evaluate)

    bench = sub.add_parser("benchmark", parents=[common], help="run the full comparison sweep")
    bench.add_argument("--jobs", type=int, default=None, help="run trials in parallel processes")
    bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
