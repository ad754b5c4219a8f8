"""Command-line front end for training, adaptation and scenario runs.

One optional JSON config file feeds every subcommand; flags override file
values field by field. Schema (all sections optional, all keys optional):

    {
      "receiver":  {"n_units": 64, "n_dense": 8, "rng_seed": 0},
      "optimizer": {"learning_rate": 0.001, "clip_norm": 10.0},
      "train":     {"epochs": 100, "iters_per_epoch": 1000,
                    "batch_size": 128, "rng_seed": 1234,
                    "ebn0_range_db": [8, 30],
                    "velocity_range_kmh": [0, 200],
                    "taps_range_first": [4, 10],
                    "taps_range_second": [1, 14]},
      "scenario":  {"preset": "edge-interference"} or full ScenarioConfig
                   fields (interference given as {"subcarriers": [...],
                   "penalty_db": 6.0}),
      "adapt":     {"ebn0_db": 14.0, "num_taps": 8, "velocity_kmh": 100.0,
                    "interference": {...}, "n_batches": 32,
                    "frames_per_batch": 50, "learning_rate": 0.001,
                    "min_syndrome_fraction": 0.82, "min_ebn0_db": 7.0,
                    "seed": 0}
    }
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .framing import default_codec
from .harness import (AdaptSettings, SCENARIO_PRESETS, ScenarioConfig,
                      adapt_at_point, ber_confidence, run_scenario,
                      scenario_preset)
from .rnn import (RnnReceiver, TrainConfig, TrainSchedule, initial_train,
                  load_checkpoint, save_checkpoint)
from .simulate import InterferenceSpec


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


_RECEIVER_KEYS = ("n_units", "n_dense", "bits_per_symbol", "rng_seed")


def _section(cfg: dict, name: str, allowed) -> dict:
    """A config section checked against the keys it may construct with."""
    section = dict(cfg.get(name, {}))
    if not isinstance(allowed, (set, tuple)):
        allowed = tuple(f.name for f in fields(allowed))
    unknown = set(section) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in config section {name!r}: "
                         f"{sorted(unknown)}")
    return section


def _override(section: dict, **flag_values) -> dict:
    section.update({k: v for k, v in flag_values.items() if v is not None})
    return section


def _tuplize(section: dict, *keys: str) -> dict:
    for key in keys:
        if key in section:
            section[key] = tuple(section[key])
    return section


def _interference_from(value) -> InterferenceSpec | None:
    if value is None:
        return None
    if isinstance(value, dict):
        value = dict(value)
        if "subcarriers" in value:
            value["subcarriers"] = tuple(int(s) for s in value["subcarriers"])
        return InterferenceSpec(**value)
    raise ValueError("interference must be an object with "
                     "'subcarriers'/'penalty_db'")


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _csv_names(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


# --- subcommands -------------------------------------------------------------

def _cmd_train_initial(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    rx_kw = _override(_section(cfg, "receiver", _RECEIVER_KEYS),
                      n_units=args.n_units, n_dense=args.n_dense,
                      rng_seed=args.net_seed)
    sched_kw = _tuplize(
        _override(_section(cfg, "train", TrainSchedule),
                  epochs=args.epochs, iters_per_epoch=args.iters_per_epoch,
                  batch_size=args.batch_size, rng_seed=args.seed),
        "ebn0_range_db", "velocity_range_kmh", "taps_range_first",
        "taps_range_second")
    opt_kw = _override(_section(cfg, "optimizer", TrainConfig),
                       learning_rate=args.learning_rate)

    receiver = RnnReceiver(**rx_kw)
    schedule = TrainSchedule(**sched_kw)
    opt_kw.setdefault("batch_size", schedule.batch_size)
    config = TrainConfig(**opt_kw)
    print(f"training {receiver.num_parameters()} parameters: "
          f"{schedule.epochs} epochs x {schedule.iters_per_epoch} iters "
          f"x batch {schedule.batch_size}")
    state, history = initial_train(receiver, default_codec(), schedule,
                                   config, log_every=args.log_every)
    save_checkpoint(args.out, receiver, state,
                    extra={"schedule": asdict(schedule),
                           "final_loss": history[-1]})
    print(f"saved {args.out} after {state.step} steps; "
          f"final loss {history[-1]:.4f}")
    return 0


def _scenario_from(args: argparse.Namespace) -> ScenarioConfig:
    cfg = _load_config(args.config)
    section = dict(cfg.get("scenario", {}))
    preset = args.preset or section.pop("preset", None)
    if "interference" in section:
        section["interference"] = _interference_from(section["interference"])
    if "adapt" in section:
        section["adapt"] = AdaptSettings(**section["adapt"])
    section = _tuplize(section, "ebn0_points_db", "receivers")
    _override(section, ebn0_points_db=args.points, receivers=args.receivers,
              frames_per_point=args.frames, seed=args.seed,
              eval_chunk=args.eval_chunk)
    if preset is not None:
        return scenario_preset(preset, **section)
    try:
        return ScenarioConfig(**section)
    except TypeError as exc:
        raise ValueError(f"incomplete scenario config: {exc}") from None


def _cmd_run_scenario(args: argparse.Namespace) -> int:
    config = _scenario_from(args)
    records = run_scenario(config, args.out_dir, checkpoint=args.checkpoint)
    print(f"{'receiver':<14} {'ebn0_db':>7} {'ber':>12} {'errors':>8} "
          f"{'ci95':>12}")
    for rec in records:
        print(f"{rec.receiver:<14} {rec.ebn0_db:>7g} {rec.ber:>12.4e} "
              f"{rec.errors:>8d} {ber_confidence(rec):>12.4e}")
    print(f"wrote {Path(args.out_dir) / (config.name + '.csv')}")
    return 0


def _cmd_adapt(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    section = dict(cfg.get("adapt", {}))
    interference = _interference_from(section.pop("interference", None))
    if args.interference_db is not None:
        subcarriers = (args.interference_subcarriers
                       or (interference.subcarriers if interference
                           else InterferenceSpec.subcarriers))
        interference = InterferenceSpec(subcarriers=tuple(subcarriers),
                                        penalty_db=args.interference_db)
    channel_kw = {k: section.pop(k) for k in ("num_taps", "velocity_kmh",
                                              "decay_total_db", "ebn0_db")
                  if k in section}
    _override(channel_kw, num_taps=args.num_taps,
              velocity_kmh=args.velocity_kmh, ebn0_db=args.ebn0)
    if "ebn0_db" not in channel_kw:
        raise ValueError("adapt needs --ebn0 (or adapt.ebn0_db in config)")
    if "num_taps" not in channel_kw:
        raise ValueError("adapt needs --num-taps (or adapt.num_taps)")
    ebn0_db = float(channel_kw.pop("ebn0_db"))
    allowed = {f.name for f in fields(AdaptSettings)}
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown keys in config section 'adapt': "
                         f"{sorted(unknown)}")
    settings = AdaptSettings(**_override(section, seed=args.seed))

    scenario = ScenarioConfig(
        name="adapt", ebn0_points_db=(ebn0_db,), interference=interference,
        adapt=settings, seed=settings.seed,
        num_taps=channel_kw["num_taps"],
        velocity_kmh=channel_kw.get("velocity_kmh", 0.0),
        decay_total_db=channel_kw.get("decay_total_db", -13.0))
    receiver, meta = adapt_at_point(args.checkpoint, scenario,
                                    scenario.channel_params(), ebn0_db, 0)
    save_checkpoint(args.out, receiver,
                    extra={"adapted_from": Path(args.checkpoint).name,
                           "ebn0_db": ebn0_db, "adaptation": meta})
    print(json.dumps(meta, indent=2, sort_keys=True))
    print(f"saved {args.out}")
    return 0


def _cmd_export_checkpoint(args: argparse.Namespace) -> int:
    receiver, state = load_checkpoint(args.checkpoint)
    with np.load(args.checkpoint, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    extra = dict(meta.get("extra", {}))
    extra["exported_from"] = Path(args.checkpoint).name
    save_checkpoint(args.out, receiver,
                    state if args.keep_optimizer else None, extra=extra)
    n_params = receiver.num_parameters()
    print(f"{args.checkpoint}: {n_params} parameters, "
          f"n_units={receiver.n_units}, n_dense={receiver.n_dense}, "
          f"adam_step={meta.get('adam_step')}")
    print(f"saved {args.out} "
          f"({'with' if args.keep_optimizer and state else 'without'} "
          f"optimizer state)")
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptrx",
        description="Adaptive OFDM receiver simulator: train, adapt, "
                    "evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-initial",
                       help="train universal weights from scratch")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output checkpoint (.npz)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--iters-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int, help="training ensemble seed")
    p.add_argument("--net-seed", type=int, help="weight init seed")
    p.add_argument("--n-units", type=int)
    p.add_argument("--n-dense", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=_cmd_train_initial)

    p = sub.add_parser("run-scenario",
                       help="paired BER evaluation over an Eb/N0 sweep")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", choices=sorted(SCENARIO_PRESETS),
                   help="shipped scenario preset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint", help="universal weights (.npz), needed "
                                        "for RNN receivers")
    p.add_argument("--points", type=_csv_floats,
                   help="Eb/N0 sweep, e.g. 10,12,14")
    p.add_argument("--receivers", type=_csv_names,
                   help="comma-separated receiver names")
    p.add_argument("--frames", type=int, help="frames per sweep point")
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-chunk", type=int)
    p.set_defaults(func=_cmd_run_scenario)

    p = sub.add_parser("adapt",
                       help="one retraining pass at a fixed operating point")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--checkpoint", required=True, help="universal weights")
    p.add_argument("--out", required=True, help="adapted checkpoint (.npz)")
    p.add_argument("--ebn0", type=float, help="operating Eb/N0 in dB")
    p.add_argument("--num-taps", type=int)
    p.add_argument("--velocity-kmh", type=float)
    p.add_argument("--interference-db", type=float,
                   help="SNR penalty of added edge interference")
    p.add_argument("--interference-subcarriers", type=_csv_ints,
                   help="affected subcarriers, e.g. 0,1,62,63")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("export-checkpoint",
                       help="re-save a checkpoint, stripping optimizer "
                            "state by default")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep-optimizer", action="store_true")
    p.set_defaults(func=_cmd_export_checkpoint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
