"""Command-line surface: generate / train / eval / ber.

Config files are flat ``key=value`` text, one pair per line, ``#`` starting
a comment.  Keys must exactly match the field names of the relevant config
dataclasses; unknown keys are errors.  Metrics go to standard output and
files are only written at explicit --out paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import typing

import numpy as np

from . import autograd as ag
from .channel import (GenConfig, PreprocState, crop_shift, energy_containment,
                      fit_normalization, generate_dataset, invert_preprocess,
                      preprocess_dataset, split_normalize, to_angular_delay)
from .evaluation import LinkConfig, ber_simulation, nmse, nmse_db
from .fileio import read_checkpoint, read_dataset, write_checkpoint, write_dataset
from .network import Autoencoder, ModelConfig
from .quantizer import dequantize, pack, quantize, saturate_open_unit, unpack
from .training import Adam, TrainConfig, evaluate_mse, train_model


def read_config(path) -> dict:
    """Flat key=value pairs; later lines override earlier ones."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            out[key.strip()] = value.strip()
    return out


def _coerce(key: str, text: str, typ):
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key}: expected a boolean, got {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is str:
        return text
    if typ is list or typing.get_origin(typ) is list:
        return [float(t) for t in text.split(",") if t.strip()]
    raise ValueError(f"config key {key}: unsupported field type {typ!r}")


def build_config(cls, mapping: dict, **overrides):
    """Instantiate a config dataclass from string values; unknown keys error."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - names
    if unknown:
        raise ValueError(f"unknown config keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {k: _coerce(k, v, hints[k]) for k, v in mapping.items()}
    kwargs.update(overrides)
    return cls(**kwargs)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _echo_config(cfg, skip=()) -> None:
    for f in dataclasses.fields(cfg):
        if f.name in skip:
            continue
        print(f"# {f.name}={_format_value(getattr(cfg, f.name))}")


def _load_config_file(path) -> dict:
    return read_config(path) if path else {}


def _codec_roundtrip(model: Autoencoder, hcp: np.ndarray, batch_size: int = 128,
                     collect: list | None = None) -> np.ndarray:
    """Eval-mode reconstruction routed through the packed-bit codec."""
    hcp = np.asarray(hcp, dtype=np.float64)
    bits = model.cfg.B
    out = np.empty_like(hcp)
    for lo in range(0, hcp.shape[0], batch_size):
        codes = model.encode(hcp[lo:lo + batch_size])
        values = np.empty_like(codes)
        for i, code in enumerate(codes):
            flow = pack(quantize(saturate_open_unit(code), bits), bits)
            if collect is not None:
                collect.append(flow.payload)
            values[i] = dequantize(unpack(flow), bits)
        with ag.no_grad():
            out[lo:lo + batch_size] = model.decoder(ag.Tensor(values), False).data
    return out


def _load_eval_inputs(ckpt_path, data_path):
    model, preproc, _ = read_checkpoint(ckpt_path)
    h_set = read_dataset(data_path)
    cfg = model.cfg
    if h_set.shape[0] == 0:
        raise ValueError("dataset is empty")
    if h_set.shape[2] != cfg.nt:
        raise ValueError(f"dataset nt={h_set.shape[2]} does not match checkpoint nt={cfg.nt}")
    if h_set.shape[1] < cfg.nc_crop:
        raise ValueError(f"dataset nc={h_set.shape[1]} smaller than checkpoint "
                         f"nc_crop={cfg.nc_crop}")
    return model, preproc, h_set


def cmd_generate(args) -> int:
    cfg = build_config(GenConfig, _load_config_file(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    samples = generate_dataset(cfg, args.count)
    write_dataset(args.out, samples)
    print(f"wrote {args.count} samples (nc={cfg.nc}, nt={cfg.nt}) to {args.out}")
    if args.count:
        frac = energy_containment(to_angular_delay(samples), cfg.nc_crop)
        print(f"containment: mean={frac.mean():.6f} min={frac.min():.6f} "
              f"(first {cfg.nc_crop} delay rows)")
    else:
        print("containment: n/a (0 samples)")
    return 0


_SHARED_KEYS = ("B", "M", "block_style", "quant_aware")


def cmd_train(args) -> int:
    raw = _load_config_file(args.config)
    train_names = {f.name for f in dataclasses.fields(TrainConfig)}
    model_names = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(raw) - train_names - model_names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    overrides = {}
    if args.data is not None:
        overrides["data"] = args.data
    if args.val is not None:
        overrides["val"] = args.val
    if args.steps is not None:
        overrides["steps"] = args.steps
    tc = build_config(TrainConfig, {k: v for k, v in raw.items() if k in train_names},
                      **overrides)
    if not tc.data:
        raise ValueError("no training data: pass --data or set data= in the config")

    h_set = read_dataset(tc.data)
    if h_set.shape[0] == 0:
        raise ValueError("training dataset is empty")
    model_raw = {k: v for k, v in raw.items() if k in model_names and k not in train_names}
    mc = build_config(ModelConfig, model_raw, B=tc.B, M=tc.M, block_style=tc.block_style,
                      quant_aware=tc.quant_aware, nt=h_set.shape[2])
    if "nt" in raw and int(raw["nt"]) != h_set.shape[2]:
        raise ValueError(f"config nt={raw['nt']} does not match dataset nt={h_set.shape[2]}")
    if h_set.shape[1] < mc.nc_crop:
        raise ValueError(f"dataset nc={h_set.shape[1]} smaller than nc_crop={mc.nc_crop}")

    _echo_config(tc)
    _echo_config(mc, skip=_SHARED_KEYS)

    hcc = crop_shift(to_angular_delay(h_set), PreprocState(0.0, 1.0, 0), mc.nc_crop)
    a, b = fit_normalization(hcc)
    preproc = PreprocState(a=a, b=b, shift=0)
    train_set = split_normalize(hcc, preproc)
    val_set = None
    if tc.val:
        val_raw = read_dataset(tc.val)
        if val_raw.shape[1:] != h_set.shape[1:]:
            raise ValueError("validation dataset extents do not match training data")
        val_set = preprocess_dataset(val_raw, preproc, mc.nc_crop)

    model = Autoencoder(mc, rng=tc.seed)
    optimizer = Adam(model.params())

    def report_val(step):
        if val_set is not None:
            print(f"# val step={step} mse={evaluate_mse(model, val_set):.10g}")
        write_checkpoint(args.out, model, preproc, optimizer)

    def on_step(step, loss):
        print(f"{step},{loss:.10g}")

    if tc.steps:
        train_model(model, train_set, tc, optimizer=optimizer,
                    on_step=on_step, on_checkpoint=report_val)
    if val_set is not None and (not tc.checkpoint_interval
                                or tc.steps % tc.checkpoint_interval != 0):
        print(f"# val step={tc.steps} mse={evaluate_mse(model, val_set):.10g}")
    write_checkpoint(args.out, model, preproc, optimizer)
    return 0


def cmd_eval(args) -> int:
    model, preproc, h_set = _load_eval_inputs(args.ckpt, args.data)
    cfg = model.cfg
    hcp = preprocess_dataset(h_set, preproc, cfg.nc_crop)
    payloads: list | None = [] if args.dump_codewords else None
    recon = _codec_roundtrip(model, hcp, collect=payloads)
    if payloads is not None:
        with open(args.dump_codewords, "wb") as fh:
            fh.write(b"".join(payloads))
    true_cc = crop_shift(to_angular_delay(h_set), preproc, cfg.nc_crop)
    rec_cc, _ = invert_preprocess(recon, preproc, h_set.shape[1])
    linear = nmse(true_cc, rec_cc)
    print(f"nmse: {linear:.8g}")
    print(f"nmse_db: {nmse_db(linear):.6g}")
    print(f"{cfg.num_bits} bits/sample")
    return 0


def cmd_ber(args) -> int:
    model, preproc, h_set = _load_eval_inputs(args.ckpt, args.data)
    cfg = model.cfg
    snr_list = [float(t) for t in args.snr.split(",") if t.strip()]
    link = LinkConfig(snr_db_list=snr_list, symbols_per_subcarrier=args.symbols,
                      noise_seed=args.noise_seed)
    hcp = preprocess_dataset(h_set, preproc, cfg.nc_crop)
    recon = _codec_roundtrip(model, hcp)
    _, rec_full = invert_preprocess(recon, preproc, h_set.shape[1])
    print("# recovered")
    for snr_db, ber, num_bits in ber_simulation(h_set, rec_full, link):
        print(f"{snr_db:g},{ber:.8g},{num_bits}")
    print("# perfect")
    for snr_db, ber, num_bits in ber_simulation(h_set, h_set, link):
        print(f"{snr_db:g},{ber:.8g},{num_bits}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csiquant",
                                     description="Bit-level CSI feedback toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a channel dataset")
    p.add_argument("--config", default=None, help="generator config (key=value lines)")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--count", required=True, type=int, help="number of samples")
    p.add_argument("--seed", default=None, type=int, help="override config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an autoencoder")
    p.add_argument("--config", default=None, help="training config (key=value lines)")
    p.add_argument("--data", default=None, help="training dataset path")
    p.add_argument("--val", default=None, help="validation dataset path")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--steps", default=None, type=int, help="override config steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="reconstruction quality through the bit codec")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset path")
    p.add_argument("--dump-codewords", default=None,
                   help="write concatenated packed payloads to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ber", help="link-level bit error rate sweep")
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset path")
    p.add_argument("--snr", default="0,5,10", help="comma-separated SNR list in dB")
    p.add_argument("--symbols", default=1, type=int, help="QPSK symbols per subcarrier")
    p.add_argument("--noise-seed", default=0, type=int, help="noise stream seed")
    p.set_defaults(func=cmd_ber)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
