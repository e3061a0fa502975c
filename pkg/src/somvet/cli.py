"""Command-line entry point: the full pipeline as subcommands.

Numeric options may also come from a JSON config file (--config); explicit
flags win over config values. Every training command requires --seed and is
bit-reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import formats, pngio
from .model import (
    AeConfig,
    CombinedConfig,
    DesomModel,
    SomConfig,
    load_model,
    save_model,
    train_combined,
    train_separate,
)
from .nn import fit_autoencoder
from .presets import get_preset
from .som import DecaySchedule, SomMap, fit_som
from .stamps import OffsetFit, as_pixel_array, build_stamp_set, fit_offset_threshold
from .synth import FieldConfig, StampSetConfig, synth_field, synth_stamp_set


def _add_config_arg(p):
    p.add_argument("--config", help="JSON file with default option values")


def _apply_config(args):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as f:
        cfg = json.load(f)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _split_labeled(stamps):
    real = [s for s in stamps if s.label == "real"]
    bogus = [s for s in stamps if s.label == "bogus"]
    if not real or not bogus:
        raise SystemExit("error: stamp set must contain both real and bogus labels")
    return as_pixel_array(real), as_pixel_array(bogus)


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    field_cfg = FieldConfig(
        width=args.width,
        height=args.height,
        n_static=args.n_static,
        n_transient=args.n_transient,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    science, reference, difference, truth = synth_field(field_cfg)
    formats.write_image(out / "science.imgf", science)
    formats.write_image(out / "reference.imgf", reference)
    formats.write_image(out / "difference.imgf", difference)
    truth_rows = [
        {"kind": t.kind, "x": t.x, "y": t.y, "flux": t.flux, "magnitude": t.magnitude}
        for t in truth
    ]
    (out / "truth.json").write_text(json.dumps(truth_rows, sort_keys=True, indent=1))
    written = ["science.imgf", "reference.imgf", "difference.imgf", "truth.json"]
    if args.n_real or args.n_bogus:
        corpus = synth_stamp_set(
            StampSetConfig(amplitude=args.amplitude),
            args.n_real,
            args.n_bogus,
            seed=args.seed,
        )
        formats.write_stamps(out / "stamps.stmp", corpus)
        written.append("stamps.stmp")
    print(f"wrote {', '.join(written)} to {out}")


def cmd_extract(args):
    science = formats.read_image(args.science)
    difference = formats.read_image(args.difference)
    fit = OffsetFit()
    if args.offset_fit:
        with open(args.offset_fit) as f:
            d = json.load(f)
        fit = OffsetFit(d["amplitude"], d["m0"], d["sigma"], d.get("floor", 3.0))
    stamps = build_stamp_set(
        science, difference, args.mode, fit, k_sigma=args.k_sigma, frame_id=args.frame_id
    )
    formats.write_stamps(args.out, stamps)
    print(f"extracted {len(stamps)} stamps ({args.mode} mode) -> {args.out}")


def cmd_fit_offset(args):
    pairs = []
    with open(args.pairs) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith(("#", "magnitude")):
                continue
            m, off = line.split(",")
            pairs.append((float(m), float(off)))
    fit = fit_offset_threshold(np.array(pairs))
    payload = {
        "amplitude": fit.amplitude,
        "m0": fit.m0,
        "sigma": fit.sigma,
        "floor": fit.floor,
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=1))
    print(f"fit: A={fit.amplitude:.2f} m0={fit.m0:.2f} sigma={fit.sigma:.2f} -> {args.out}")


def _preset_args(args):
    p = get_preset(args.preset)
    return p, {
        "epochs": args.epochs if args.epochs is not None else p.epochs,
        "learning_rate": args.lr if args.lr is not None else p.learning_rate,
        "batch_size": args.batch_size if args.batch_size is not None else p.batch_size,
    }


def _sched(args, preset):
    return DecaySchedule(
        t0=args.t0 if args.t0 is not None else preset.t0,
        t_min=args.t_min if args.t_min is not None else preset.t_min,
        n_iters=args.iterations if args.iterations is not None else preset.som_iters,
    )


def cmd_train_ae(args):
    preset, hp = _preset_args(args)
    stamps = formats.read_stamps(args.stamps)
    data = as_pixel_array(stamps)
    ae = fit_autoencoder(
        preset.encoder,
        preset.decoder,
        data,
        epochs=hp["epochs"],
        learning_rate=hp["learning_rate"],
        batch_size=hp["batch_size"],
        momentum=preset.momentum,
        seed=args.seed,
    )
    from .model import encode_stamps

    latents = encode_stamps(ae.encoder, data[:1000])
    som0 = SomMap.from_samples(preset.m, latents, seed=args.seed)
    model = DesomModel(
        ae.encoder,
        ae.decoder,
        som0,
        gamma=args.gamma if args.gamma is not None else preset.gamma,
        provenance={"mode": "ae-only", "seed": args.seed, "preset": preset.name},
    )
    save_model(args.out, model)
    print(f"autoencoder trained ({hp['epochs']} epochs, final loss {ae.loss_history[-1]:.5f}) -> {args.out}")


def cmd_train_som(args):
    model = load_model(args.model)
    stamps = formats.read_stamps(args.stamps)
    data = as_pixel_array(stamps)
    latents = model.encode(data)
    sched = _sched(args, get_preset(args.preset))
    som0 = SomMap.from_samples(model.m, latents[:1000], seed=args.seed)
    trained, history = fit_som(som0, latents, sched, seed=args.seed)
    model = DesomModel(
        model.encoder,
        model.decoder,
        trained,
        model.gamma,
        provenance={**model.provenance, "mode": "separate", "som_seed": args.seed},
    )
    save_model(args.out, model)
    print(f"map trained ({sched.n_iters} iters, qe {history[0][1]:.5f} -> {history[-1][1]:.5f}) -> {args.out}")


def cmd_train_desom(args):
    preset, hp = _preset_args(args)
    stamps = formats.read_stamps(args.stamps)
    data = as_pixel_array(stamps)
    gamma = args.gamma if args.gamma is not None else preset.gamma
    if args.mode == "separate":
        model, history = train_separate(
            data,
            AeConfig(preset.encoder, preset.decoder, momentum=preset.momentum, **hp),
            SomConfig(m=preset.m, sched=_sched(args, preset)),
            seed=args.seed,
            gamma=gamma,
        )
        summary = f"l_dec {history['l_dec'][-1]:.5f}, qe {history['l_som'][-1][1]:.5f}"
    else:
        cfg = CombinedConfig(
            preset.encoder,
            preset.decoder,
            m=preset.m,
            epochs=hp["epochs"],
            learning_rate=hp["learning_rate"],
            batch_size=hp["batch_size"],
            t0=args.t0 if args.t0 is not None else preset.t0,
            t_min=args.t_min if args.t_min is not None else preset.t_min,
        )
        model, history = train_combined(data, cfg, seed=args.seed, gamma=gamma)
        summary = f"l_dec {history['l_dec'][-1]:.5f}, l_som {history['l_som'][-1]:.5f}"
    save_model(args.out, model)
    print(f"{args.mode} training done ({summary}) -> {args.out}")


def cmd_decode_map(args):
    model = load_model(args.model)
    from .model import decode_prototypes

    tiles = decode_prototypes(model)
    sheet = pngio.contact_sheet(tiles, gap=args.gap, scale=args.scale)
    pngio.write_gray_png(args.out, sheet)
    print(f"decoded {model.m}x{model.m} prototype sheet -> {args.out}")


def cmd_evaluate(args):
    model = load_model(args.model)
    stamps = formats.read_stamps(args.stamps)
    real, bogus = _split_labeled(stamps)
    with open(args.selection) as f:
        sel = ev.PvSelection.from_json(json.load(f))
    mdr, fpr = ev.confusion_rates(model, sel, real, bogus)
    payload = {"mdr": mdr, "fpr": fpr, "n_real": len(real), "n_bogus": len(bogus)}
    text = json.dumps(payload, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def cmd_roc(args):
    model = load_model(args.model)
    stamps = formats.read_stamps(args.stamps)
    real, bogus = _split_labeled(stamps)
    scorer = ev.train_reference_scorer(model, stamps, seed=args.scorer_seed)
    ordering = ev.order_cells_by_percentile(model, scorer, stamps, args.q)
    roc = ev.roc_switch_off(model, ordering, real, bogus, q=args.q)
    csv = ev.roc_to_csv(roc)
    Path(args.out).write_text(csv)
    print(
        f"roc (q={args.q}, scorer acc {scorer.holdout_accuracy:.3f}): "
        f"{len(roc.points)} points, fom {ev.figure_of_merit(roc):.4f} -> {args.out}"
    )


def cmd_ratio_map(args):
    model = load_model(args.model)
    stamps = formats.read_stamps(args.stamps)
    real, bogus = _split_labeled(stamps)
    rm = ev.ratio_map(model, real, bogus)
    Path(args.out).write_text(json.dumps(rm.to_json_grid()))
    print(f"ratio map ({int(rm.real_only.sum())} real-only cells) -> {args.out}")


def cmd_serve(args):
    from .server import serve

    model = load_model(args.model)
    stamps = formats.read_stamps(args.stamps) if args.stamps else []
    serve(
        model,
        stamps,
        host=args.host,
        port=args.port,
        selection_file=args.selection_file,
        ui_dir=args.ui_dir,
        scorer_seed=args.scorer_seed,
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="somvet", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic frames (IMGF) and a stamp corpus (STMP)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--n-static", type=int, default=80)
    p.add_argument("--n-transient", type=int, default=6)
    p.add_argument("--noise-sigma", type=float, default=5.0)
    p.add_argument("--n-real", type=int, default=0)
    p.add_argument("--n-bogus", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=10.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="frames -> normalized stamp set")
    p.add_argument("--science", required=True)
    p.add_argument("--difference", required=True)
    p.add_argument("--mode", choices=("dc", "sc"), required=True)
    p.add_argument("--offset-fit", help="JSON file from fit-offset")
    p.add_argument("--k-sigma", type=float, default=3.0)
    p.add_argument("--frame-id", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit-offset", help="fit the cross-match radius from (mag, offset) pairs")
    p.add_argument("--pairs", required=True, help="CSV with magnitude,offset_arcsec rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_offset)

    for name, fn in (("train-ae", cmd_train_ae), ("train-som", cmd_train_som),
                     ("train-desom", cmd_train_desom)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a stamp set")
        p.add_argument("--stamps", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--preset", default="desk-8x8")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--gamma", type=float)
        p.add_argument("--t0", type=float)
        p.add_argument("--t-min", type=float)
        p.add_argument("--iterations", type=int)
        _add_config_arg(p)
        if name == "train-som":
            p.add_argument("--model", required=True)
        if name == "train-desom":
            p.add_argument("--mode", choices=("separate", "combined"), default="separate")
        p.set_defaults(func=fn)

    p = sub.add_parser("decode-map", help="PNG contact sheet of decoded prototypes")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--gap", type=int, default=1)
    p.set_defaults(func=cmd_decode_map)

    p = sub.add_parser("evaluate", help="MDR/FPR of a selection on a labeled stamp set")
    p.add_argument("--model", required=True)
    p.add_argument("--stamps", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roc", help="switch-off ROC ordered by percentile scores")
    p.add_argument("--model", required=True)
    p.add_argument("--stamps", required=True)
    p.add_argument("--q", type=float, default=99.0)
    p.add_argument("--scorer-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("ratio-map", help="per-cell real/bogus occupancy ratios as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--stamps", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ratio_map)

    p = sub.add_parser("serve", help="HTTP API for the map inspector UI")
    p.add_argument("--model", required=True)
    p.add_argument("--stamps", help="labeled stamp set backing metrics/members")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--selection-file", default="selection.json")
    p.add_argument("--ui-dir", help="directory of static UI files to serve at /")
    p.add_argument("--scorer-seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_config(args)
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
