"""Command-line interface: one executable, one verb per pipeline stage.

Verbs: gen, psd, train, calibrate, detect, eval, agent, collect.
Exit codes: 0 success, 1 domain error, 2 usage error. Diagnostics go to
standard error; data goes to files or standard output.

Configuration precedence is flags > environment > config file. The
config file is plain ``key = value`` lines with ``#`` comments; keys
mirror the dataclass fields: ``welch.window_len``, ``welch.fft_len``,
``welch.hop_len``, ``welch.slide_len``, ``welch.window_fn``,
``welch.scale``, ``detector.t_e``, ``detector.t_o``,
``detector.batch_psds``, ``train.batch_size``, ``train.epochs``,
``train.learning_rate``, ``train.l1_lambda``, ``train.seed``,
``broker_url``, ``node_id``. Environment variables:
``PAELLA_BROKER_URL``, ``PAELLA_NODE_ID``.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autoencoder, detector, evaluation, netmon, psd, synth, trace
from .errors import PaellaError

ENV_BROKER_URL = "PAELLA_BROKER_URL"
ENV_NODE_ID = "PAELLA_NODE_ID"


@dataclass(frozen=True)
class RunManifest:
    """Parsed run manifest: (run_id, benchmark_id, label, path) entries."""

    entries: tuple
    format_version: int = 1


def read_manifest(path) -> RunManifest:
    """TSV manifest with # comments; paths resolve relative to the file."""
    base = Path(path).parent
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split("\t")
            if len(parts) != 4:
                raise ValueError(
                    f"{path}: line {lineno}: expected 4 tab-separated fields, "
                    f"got {len(parts)}"
                )
            run_id, benchmark_id, label, rel = (p.strip() for p in parts)
            if label not in evaluation.LABELS:
                raise ValueError(
                    f"{path}: line {lineno}: label must be healthy/malware, "
                    f"got {label!r}"
                )
            entries.append((run_id, benchmark_id, label, str((base / rel))))
    if not entries:
        raise ValueError(f"{path}: empty manifest")
    return RunManifest(tuple(entries))


def load_runs(manifest: RunManifest) -> list:
    runs = []
    for run_id, benchmark_id, label, fpath in manifest.entries:
        fm = psd.read_features(fpath)
        runs.append(evaluation.LabeledRun(run_id, benchmark_id, label, fm.values))
    return runs


def read_config_file(path) -> dict:
    """key = value lines, # comments; values stay strings."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            out[key.strip()] = value.strip()
    return out


def _resolve(flag, cfg: dict, key: str, default, cast, env: str = None):
    """flags > env > config file > default."""
    if flag is not None:
        return flag
    if env is not None:
        from_env = os.environ.get(env)
        if from_env:
            return cast(from_env)
    if key in cfg:
        return cast(cfg[key])
    return default


def _welch_from_args(args, cfg: dict) -> psd.WelchConfig:
    return psd.WelchConfig(
        window_len=_resolve(args.window_len, cfg, "welch.window_len", 8192, int),
        fft_len=_resolve(args.fft_len, cfg, "welch.fft_len", 2048, int),
        hop_len=_resolve(args.hop_len, cfg, "welch.hop_len", 1024, int),
        slide_len=_resolve(args.slide_len, cfg, "welch.slide_len", 1000, int),
        window_fn=_resolve(args.window_fn, cfg, "welch.window_fn", "hann", str),
        output_scale=_resolve(args.scale, cfg, "welch.scale", "db", str),
    )


def _detector_from_args(args, cfg: dict, model_id: str = "") -> detector.DetectorConfig:
    return detector.DetectorConfig(
        t_e=_resolve(args.t_e, cfg, "detector.t_e", 0.91, float),
        t_o=_resolve(args.t_o, cfg, "detector.t_o", 0.30, float),
        batch_psds=_resolve(args.batch_psds, cfg, "detector.batch_psds", 500, int),
        model_id=model_id,
    )


def _parse_tone(text: str) -> tuple:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"tone must be freq:amp or freq:amp:phase, got {text!r}")
    return tuple(float(p) for p in parts)


def _add_welch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-len", type=int, default=None, help="analysis window samples (8192)")
    p.add_argument("--fft-len", type=int, default=None, help="FFT size (2048)")
    p.add_argument("--hop-len", type=int, default=None, help="segment hop (1024)")
    p.add_argument("--slide-len", type=int, default=None, help="samples between PSDs (1000)")
    p.add_argument("--window-fn", choices=("hann", "rect"), default=None)
    p.add_argument("--scale", choices=("db", "linear"), default=None)


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-e", type=float, default=None, help="per-PSD error threshold (0.91)")
    p.add_argument("--t-o", type=float, default=None, help="outlier fraction threshold (0.30)")
    p.add_argument("--batch-psds", type=int, default=None, help="PSDs per verdict (500)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paella",
        description="Power-trace PSD features and autoencoder malware detection",
    )
    parser.add_argument("--config", default=None, help="key = value config file")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_gen = sub.add_parser("gen", help="generate synthetic traces")
    gen_sub = p_gen.add_subparsers(dest="kind", required=True)
    for kind in ("pulse", "signature", "perturb"):
        g = gen_sub.add_parser(kind)
        g.add_argument("-o", "--out", required=True, help="output trace file")
        g.add_argument("--quantize", type=float, default=None,
                       help="apply 12-bit quantization with this full scale (watts)")
        if kind == "pulse":
            g.add_argument("--freq", type=float, required=True)
            g.add_argument("--duty", type=float, default=0.5)
            g.add_argument("--high", type=float, default=1.0)
            g.add_argument("--low", type=float, default=0.0)
            g.add_argument("--rate", type=float, default=trace.DEFAULT_SAMPLE_RATE_HZ)
            g.add_argument("--secs", type=float, required=True)
        else:
            g.add_argument("--baseline", type=float, default=0.0)
            g.add_argument("--tone", action="append", default=[],
                           help="freq:amp or freq:amp:phase, repeatable")
            g.add_argument("--noise-sigma", type=float, default=0.0)
            g.add_argument("--seed", type=int, default=0)
            if kind == "signature":
                g.add_argument("--rate", type=float, default=trace.DEFAULT_SAMPLE_RATE_HZ)
                g.add_argument("--secs", type=float, required=True)
            else:
                g.add_argument("--trace", required=True, dest="in_trace",
                               help="trace to perturb")

    p_psd = sub.add_parser("psd", help="extract sliding-window PSD features")
    p_psd.add_argument("trace", help="input trace file")
    p_psd.add_argument("-o", "--out", default=None,
                       help="feature file (.csv or binary); stdout CSV if omitted")
    _add_welch_flags(p_psd)

    p_train = sub.add_parser("train", help="train the autoencoder on healthy features")
    p_train.add_argument("features", nargs="+", help="feature files (rows concatenated)")
    p_train.add_argument("-o", "--out", required=True, help="output model file")
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--learning-rate", type=float, default=None)
    p_train.add_argument("--l1-lambda", type=float, default=None)
    p_train.add_argument("--seed", type=int, default=None)

    p_cal = sub.add_parser("calibrate", help="pick t_e from healthy validation errors")
    p_cal.add_argument("--model", required=True)
    p_cal.add_argument("--features", required=True, action="append",
                       help="healthy validation feature file, repeatable")
    p_cal.add_argument("--percentile", type=float, default=99.0)

    p_det = sub.add_parser("detect", help="stream a trace through the detector")
    p_det.add_argument("--model", required=True)
    p_det.add_argument("--trace", required=True)
    p_det.add_argument("-o", "--out", default=None,
                       help="verdict log file; stdout if omitted")
    p_det.add_argument("--speed", type=float, default=0.0,
                       help="replay speed; 1.0 is real time, 0 as fast as possible")
    p_det.add_argument("--node-id", default=None)
    _add_detector_flags(p_det)
    _add_welch_flags(p_det)

    p_eval = sub.add_parser("eval", help="classify labeled runs and report metrics")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--model-dir", required=True,
                        help="directory of <benchmark_id>.paem models")
    p_eval.add_argument("-o", "--out", default=None, help="report CSV path")
    p_eval.add_argument("--w-m", type=float, default=None, help="malware class weight")
    p_eval.add_argument("--w-h", type=float, default=None, help="healthy class weight")
    _add_detector_flags(p_eval)

    p_agent = sub.add_parser("agent", help="run the edge agent over a trace")
    p_agent.add_argument("--trace", required=True)
    p_agent.add_argument("--model-dir", required=True)
    p_agent.add_argument("--model-id", required=True)
    p_agent.add_argument("--node-id", default=None)
    p_agent.add_argument("--broker-url", default=None,
                         help="loopback: or mqtt://host[:port]")
    p_agent.add_argument("--speed", type=float, default=0.0)
    p_agent.add_argument("--heartbeat-secs", type=float, default=10.0)
    p_agent.add_argument("--collect-log", default=None,
                         help="with loopback: run a collector in-process, log here")
    _add_detector_flags(p_agent)
    _add_welch_flags(p_agent)

    p_col = sub.add_parser("collect", help="aggregate alarms into a log")
    p_col.add_argument("--broker-url", default=None)
    p_col.add_argument("--log", required=True)
    p_col.add_argument("--dead-letter", default=None)
    p_col.add_argument("--duration", type=float, default=None,
                       help="seconds to run; default until interrupted")
    return parser


def _cmd_gen(args, cfg: dict) -> int:
    if args.kind == "pulse":
        out = synth.gen_pulse_train(synth.PulseTrainSpec(
            freq_hz=args.freq, duty=args.duty, high_w=args.high, low_w=args.low,
            duration_s=args.secs, sample_rate_hz=args.rate,
        ))
    else:
        spec = synth.SignatureSpec(
            baseline_w=args.baseline,
            tones=tuple(_parse_tone(t) for t in args.tone),
            noise_sigma_w=args.noise_sigma,
            seed=args.seed,
        )
        if args.kind == "signature":
            out = synth.gen_signature(spec, args.secs, sample_rate_hz=args.rate)
        else:
            out = synth.perturb(trace.read_trace(args.in_trace), spec)
    if args.quantize is not None:
        out = synth.quantize_12bit(out, args.quantize)
    trace.write_trace(out, args.out)
    print(f"wrote {len(out)} samples at {out.sample_rate_hz:g} Hz to {args.out}",
          file=sys.stderr)
    return 0


def _cmd_psd(args, cfg: dict) -> int:
    welch_cfg = _welch_from_args(args, cfg)
    t = trace.read_trace(args.trace)
    features = psd.sliding_psd(t, welch_cfg)
    fm = psd.FeatureMatrix(
        psd.feature_matrix(features),
        bin_hz=t.sample_rate_hz / welch_cfg.fft_len,
        scale=welch_cfg.output_scale,
    )
    if args.out:
        psd.write_features(fm, args.out)
        print(f"wrote {fm.values.shape[0]} features to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(f"# bin_hz={fm.bin_hz!r}\n# scale={fm.scale}\n")
        for row in fm.values:
            sys.stdout.write(",".join(repr(float(v)) for v in row) + "\n")
    return 0


def _cmd_train(args, cfg: dict) -> int:
    matrices = [psd.read_features(f).values for f in args.features]
    rows = np.concatenate(matrices, axis=0)
    train_cfg = autoencoder.TrainConfig(
        batch_size=_resolve(args.batch_size, cfg, "train.batch_size", 8, int),
        epochs=_resolve(args.epochs, cfg, "train.epochs", 5, int),
        learning_rate=_resolve(args.learning_rate, cfg, "train.learning_rate", 0.01, float),
        l1_lambda=_resolve(args.l1_lambda, cfg, "train.l1_lambda", 1e-5, float),
        seed=_resolve(args.seed, cfg, "train.seed", 0, int),
    )
    history = []
    model = autoencoder.train(rows, train_cfg, loss_history=history)
    autoencoder.save_model(model, args.out)
    print(
        f"trained on {rows.shape[0]} rows, final epoch mean loss {history[-1]:.6g}, "
        f"model saved to {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_calibrate(args, cfg: dict) -> int:
    model = autoencoder.load_model(args.model)
    rows = np.concatenate([psd.read_features(f).values for f in args.features], axis=0)
    threshold = detector.calibrate_threshold(model, rows, percentile=args.percentile)
    print(repr(threshold))
    return 0


def _cmd_detect(args, cfg: dict) -> int:
    model = autoencoder.load_model(args.model)
    det_cfg = _detector_from_args(args, cfg)
    welch_cfg = _welch_from_args(args, cfg)
    t = trace.read_trace(args.trace)
    node_id = _resolve(args.node_id, cfg, "node_id", "local", str, env=ENV_NODE_ID)

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    counts = {"healthy": 0, "malware": 0}

    def sink(verdict: detector.BatchVerdict) -> None:
        counts[verdict.decision] += 1
        alarm = netmon.alarm_from_verdict(verdict, node_id)
        out.write(netmon.encode_log_line(alarm) + "\n")

    try:
        detector.run_stream(
            detector.replay(t, speed=args.speed), model, welch_cfg, det_cfg, sink,
            sample_rate_hz=t.sample_rate_hz, t0_ns=t.t0_ns,
        )
    finally:
        if out is not sys.stdout:
            out.close()
    print(
        f"{counts['healthy'] + counts['malware']} verdicts: "
        f"{counts['healthy']} healthy, {counts['malware']} malware",
        file=sys.stderr,
    )
    return 0


def _cmd_eval(args, cfg: dict) -> int:
    manifest = read_manifest(args.manifest)
    runs = load_runs(manifest)
    det_cfg = _detector_from_args(args, cfg)
    if (args.w_m is None) != (args.w_h is None):
        raise ValueError("--w-m and --w-h must be given together")
    weights = (args.w_m, args.w_h) if args.w_m is not None else None
    models = {}
    results = []
    for run in runs:
        if run.benchmark_id not in models:
            models[run.benchmark_id] = autoencoder.load_model(
                Path(args.model_dir) / f"{run.benchmark_id}.paem"
            )
        predicted = evaluation.classify_run(models[run.benchmark_id], run, det_cfg)
        results.append((run.benchmark_id, run.label, predicted))
    report = evaluation.build_report(results, weights=weights)
    csv_text = evaluation.report_to_csv(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        sys.stdout.write(evaluation.report_to_text(report))
    else:
        sys.stdout.write(csv_text)
    return 0


def _cmd_agent(args, cfg: dict) -> int:
    url = _resolve(args.broker_url, cfg, "broker_url", "loopback:", str,
                   env=ENV_BROKER_URL)
    node_id = _resolve(args.node_id, cfg, "node_id", "local", str, env=ENV_NODE_ID)
    broker = netmon.make_transport(url)
    collector = None
    if args.collect_log:
        if not isinstance(broker, netmon.LoopbackBroker):
            raise ValueError("--collect-log requires the loopback broker")
        collector = netmon.Collector(broker, args.collect_log)
    det_cfg = _detector_from_args(args, cfg, model_id=args.model_id)
    welch_cfg = _welch_from_args(args, cfg)
    t = trace.read_trace(args.trace)
    try:
        netmon.agent_run(
            detector.replay(t, speed=args.speed),
            args.model_dir, welch_cfg, det_cfg, broker, node_id,
            sample_rate_hz=t.sample_rate_hz, t0_ns=t.t0_ns,
            heartbeat_every_s=args.heartbeat_secs,
        )
    finally:
        if collector is not None:
            for node, state in sorted(collector.status().items()):
                print(f"{node}: {state}", file=sys.stderr)
            collector.close()
        if hasattr(broker, "close"):
            broker.close()
    return 0


def _cmd_collect(args, cfg: dict) -> int:
    url = _resolve(args.broker_url, cfg, "broker_url", None, str, env=ENV_BROKER_URL)
    if not url:
        raise ValueError("no broker url: pass --broker-url or set " + ENV_BROKER_URL)
    broker = netmon.make_transport(url)
    collector = netmon.Collector(broker, args.log, dead_letter_path=args.dead_letter)
    try:
        if args.duration is not None:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        for node, state in sorted(collector.status().items()):
            print(f"{node}: {state}", file=sys.stderr)
        collector.close()
        if hasattr(broker, "close"):
            broker.close()
    return 0


_HANDLERS = {
    "gen": _cmd_gen,
    "psd": _cmd_psd,
    "train": _cmd_train,
    "calibrate": _cmd_calibrate,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "agent": _cmd_agent,
    "collect": _cmd_collect,
}


def dispatch(argv) -> int:
    """Parse argv and run the verb; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    cfg = {}
    try:
        if args.config:
            cfg = read_config_file(args.config)
        return _HANDLERS[args.verb](args, cfg)
    except (PaellaError, ValueError, OSError) as exc:
        print(f"paella {args.verb}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
