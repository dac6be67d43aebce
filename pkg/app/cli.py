"""
Command-line interface. Every subcommand writes under --out-dir (MAR_OUT_DIR by
default) and exits with 0 on success, 2 on configuration errors, 3 on data
errors and 4 on numerical divergence.
"""
import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from app.config import RunConfig, configure_logging, load_run_config, settings
from app.errors import ConfigError, MARError
from app.mar.completion import li_complete, nmar_complete
from app.physics.phantoms import ellipse_phantom, mask_family, random_metal_mask, random_phantom
from app.physics.simulator import CONTENT_STREAM, case_rng, simulate_case
from app.pipeline.evaluation import ablate, evaluate_dataset, generalize, robustness_sweep
from app.pipeline.framework import MARModel, prepare_case
from app.pipeline.inference import InferenceResult, infer_image, infer_sinogram
from app.pipeline.training import train
from app.services.dataset import case_id, generate_dataset, open_dataset
from app.services.panels import save_png
from app.services.report_pdf import generate_report_pdf
from app.services.storage import load_case, load_image, load_sinogram, save_case, save_image, save_sinogram
from app.tomo.geometry import toy_geometry
from app.tomo.projector import fbp

logger = logging.getLogger("app.cli")


def _override(config: RunConfig, section: str, **updates) -> RunConfig:
    '''Re-validate `config` with the given (non-None) CLI overrides of one section.'''
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return config
    data = config.model_dump()
    data[section].update(updates)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid command-line override: {e}") from e


def _split(path: Path):
    '''`dir/name` or `dir/name.raw|.json` -> (dir, name).'''
    path = Path(path)
    if path.suffix in (".raw", ".json"):
        path = path.with_suffix("")
    return path.parent, path.name


def cmd_gen_data(args, config: RunConfig) -> None:
    out = Path(args.out_dir) / "data"
    index = generate_dataset(out, config.train.n_train if args.n_train is None else args.n_train,
                             config.train.n_test if args.n_test is None else args.n_test,
                             args.seed if args.seed is not None else 0, config)
    logger.info("Dataset written to %s (%d train, %d test)", index.root, len(index.train_ids), len(index.test_ids))


def cmd_simulate(args, config: RunConfig) -> None:
    grid, geom = toy_geometry(config.geometry.n)
    seed = args.seed if args.seed is not None else 0
    rng = case_rng(seed, args.index, CONTENT_STREAM)
    if args.phantom == "shepp":
        phantom = ellipse_phantom(grid, smooth=0.5)
    else:
        phantom = random_phantom(grid, rng, args.phantom)
    mask, params = random_metal_mask(grid, rng, args.family)
    pair = simulate_case(phantom, mask, geom, seed, config.simulation, index=args.index)
    out = Path(args.out_dir) / case_id(args.index)
    save_case(out, pair, {**pair.meta, "phantom_family": args.phantom, "mask_family": args.family, "mask": params})
    save_png(pair.x_ma.values, out / "X_ma.png")
    save_png(pair.x_gt.values, out / "X_gt.png")
    logger.info("Simulated case written to %s", out)


def cmd_recon(args, config: RunConfig) -> None:
    directory, name = _split(args.sinogram)
    s = load_sinogram(directory, name)
    x = fbp(s, s.geom).to_hu()
    out = Path(args.out_dir)
    save_image(out, f"{name}_fbp", x)
    save_png(x.values, out / f"{name}_fbp.png")
    logger.info("Reconstruction written to %s", out)


def _classical(args, config: RunConfig, method: str) -> None:
    pair = load_case(args.case)
    geom = pair.s_ma.geom
    if method == "LI":
        s = li_complete(pair.s_ma, pair.trace)
    else:
        s = nmar_complete(pair.s_ma, pair.trace, pair.x_ma, geom, config.mar, pair.mask)
    x = fbp(s, geom).to_hu()
    out = Path(args.out_dir)
    save_sinogram(out, f"S_{method}", s)
    save_image(out, f"X_{method}", x)
    save_png(x.values, out / f"X_{method}.png")
    logger.info("%s result written to %s", method, out)


def cmd_mar_li(args, config: RunConfig) -> None:
    _classical(args, config, "LI")


def cmd_mar_nmar(args, config: RunConfig) -> None:
    _classical(args, config, "NMAR")


def cmd_train(args, config: RunConfig) -> None:
    config = _override(config, "train", variant=args.variant, epochs=args.epochs)
    index = open_dataset(args.data)
    result = train(config, index, Path(args.out_dir) / "train" / config.train.variant)
    logger.info("Checkpoint written to %s", result.checkpoint)


def _save_inference(result: InferenceResult, out: Path) -> None:
    save_image(out, "X_out", result.x_out)
    save_sinogram(out, "S_corr", result.s_corr)
    save_png(result.x_out.values, out / "X_out.png")
    if result.x_prior is not None:
        save_image(out, "X_prior", result.x_prior)
        save_png(result.x_prior.values, out / "X_prior.png")


def cmd_infer(args, config: RunConfig) -> None:
    model = MARModel.load(args.checkpoint)
    if (args.sinogram is None) == (args.image is None):
        raise ConfigError("Give exactly one of --sinogram or --image")
    mar = _override(config, "mar", metal_threshold_hu=args.threshold).mar
    if args.sinogram:
        s = load_sinogram(*_split(args.sinogram))
        result = infer_sinogram(model, s, config=mar)
    else:
        result = infer_image(model, load_image(*_split(args.image)), config=mar)
    _save_inference(result, Path(args.out_dir))
    logger.info("Inference written to %s (corrected=%s)", args.out_dir, result.corrected)


def _ablation_checkpoints(pairs: Optional[List[str]]) -> Dict[str, Path]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"Expected variant=path, got {item!r}")
        variant, path = item.split("=", 1)
        out[variant] = Path(path)
    return out


def cmd_eval(args, config: RunConfig) -> None:
    index = open_dataset(args.data)
    model = MARModel.load(args.checkpoint, index.geometry) if args.checkpoint else None
    output = evaluate_dataset(model, index, Path(args.out_dir) / "eval", config, panels=args.panels)
    if args.pdf:
        pdf = generate_report_pdf(output.report, output.panels, output.out_dir / "report.pdf")
        logger.info("PDF report written to %s", pdf)


def cmd_ablate(args, config: RunConfig) -> None:
    index = open_dataset(args.data)
    ablate(config, index, Path(args.out_dir) / "ablate", _ablation_checkpoints(args.checkpoint))


def cmd_sweep_mask(args, config: RunConfig) -> None:
    index = open_dataset(args.data)
    model = MARModel.load(args.checkpoint, index.geometry)
    cid = args.case or index.test_ids[0]
    pair = index.load(cid)
    case = prepare_case(cid, pair.s_ma, pair.trace, pair.mask, pair.s_gt, pair.x_gt.values, pair.x_ma.values)
    radii = config.sweep_radii if args.radii is None else args.radii
    robustness_sweep(model, case, radii, Path(args.out_dir) / "sweep" / cid)


def cmd_generalize(args, config: RunConfig) -> None:
    model = MARModel.load(args.checkpoint)
    seed = args.seed if args.seed is not None else 0
    generalize(model, config, args.n_cases, seed, Path(args.out_dir) / "generalize")


def cmd_serve(args, config: RunConfig) -> None:
    import uvicorn

    uvicorn.run("app.api:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mar", description="Dual-domain metal artifact reduction toolkit")
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="Dataset / training seed")
    parser.add_argument("--out-dir", type=Path, default=settings.out_dir)
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="Simulate a training/test dataset")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("simulate", help="Simulate one case")
    p.add_argument("--phantom", choices=("body", "head", "shepp"), default="body")
    p.add_argument("--family", type=int, default=0, help="Metal-mask family")
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recon", help="FBP of a stored sinogram")
    p.add_argument("--sinogram", type=Path, required=True)
    p.set_defaults(func=cmd_recon)

    for name, func in (("mar-li", cmd_mar_li), ("mar-nmar", cmd_mar_nmar)):
        p = sub.add_parser(name, help=f"Classical {name[4:].upper()} correction of a stored case")
        p.add_argument("--case", type=Path, required=True, help="Case directory")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="Joint PriorNet/SinoNet training")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--variant", choices=("full", "no_prior", "no_residual", "metal_only"))
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="Correct a sinogram or an image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--sinogram", type=Path)
    p.add_argument("--image", type=Path)
    p.add_argument("--threshold", type=float, help="Metal threshold in HU")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="Compare methods on the test split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--panels", type=int, default=4)
    p.add_argument("--pdf", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="Train and compare the ablation variants")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", action="append", help="variant=path, reuse a trained variant")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-mask", help="Dilate/erode the metal mask of one case")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--case")
    p.add_argument("--radii", type=int, nargs="+")
    p.set_defaults(func=cmd_sweep_mask)

    p = sub.add_parser("generalize", help="Evaluate on the held-out head family")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--n-cases", type=int, default=20)
    p.set_defaults(func=cmd_generalize)

    p = sub.add_parser("serve", help="Serve the results registry")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_run_config(args.config, args.seed)
        if args.command == "simulate":
            mask_family(args.family)
        args.func(args, config)
    except MARError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except ValueError as e:
        logger.error("Invalid argument: %s", e)
        return ConfigError.exit_code
    return 0
