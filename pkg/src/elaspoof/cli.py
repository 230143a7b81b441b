"""Command-line interface: prepare, train, eval, predict, ela, synth."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import ela
from .checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from .errors import ElaSpoofError, InvalidArgumentError, InvalidConfigError, InvalidDatasetError
from .layers import default_model_config
from .metrics import compute_metrics, confusion_from_predictions, history_to_csv
from .training import Adam, TrainConfig, evaluate, fit

log = logging.getLogger("elaspoof")

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ELASPOOF_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InvalidArgumentError(f"ELASPOOF_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _amplification(text: str):
    return text if text == "auto" else float(text)


def format_prediction(p: float) -> str:
    label = "Fake" if p >= 0.5 else "Real"
    return f"Class: {label} Confidence: {100.0 * max(p, 1.0 - p):.2f}"


def cmd_prepare(args) -> int:
    manifest = ela.load_manifest(args.manifest)
    if len(manifest) == 0:
        raise InvalidDatasetError("manifest is empty")
    kept = []
    for rec in manifest.records:
        try:
            img = ela.decode_image(manifest.resolve(rec))
        except ela.DecodeError as exc:
            print(f"warning: skipping undecodable {exc}", file=sys.stderr)
            continue
        score = ela.noise_score(img)
        if score > args.noise_threshold:
            print(f"warning: noisy image {rec.path} (score {score:.2f} > {args.noise_threshold})", file=sys.stderr)
        kept.append(rec)
    train, test = ela.stratified_split([r.label for r in kept], args.split, _seed(args), shuffle=True)
    train_recs = [kept[i] for i in train]
    test_recs = [kept[i] for i in test]
    ela.write_manifest(train_recs, args.train_out, manifest.root)
    ela.write_manifest(test_recs, args.test_out, manifest.root)
    for name, recs in (("train", train_recs), ("test", test_recs)):
        n_fake = sum(r.label == ela.FAKE for r in recs)
        print(f"{name}: {len(recs)} images (fake {n_fake}, real {len(recs) - n_fake})")
    return 0


def cmd_train(args) -> int:
    seed = _seed(args)
    ela_cfg = ela.ElaConfig(args.ela_quality, _amplification(args.amplify), args.input_size)
    train_cfg = TrainConfig(
        validation_split=args.val_split, shuffle=args.shuffle, epochs=args.epochs,
        batch_size=args.batch_size, learning_rate=args.lr, seed=seed,
    )
    config = default_model_config(args.input_size)
    manifest = ela.load_manifest(args.manifest)
    samples, skipped = ela.load_samples(manifest, ela_cfg)
    if skipped:
        print(f"warning: skipped {len(skipped)} undecodable images", file=sys.stderr)
    if not samples:
        raise InvalidDatasetError("no decodable images in manifest")
    optimizer = Adam()
    params, history = fit(config, samples, train_cfg, optimizer=optimizer)
    checkpoint_save(args.out, Checkpoint(config, params, train_cfg, ela_cfg, optimizer))
    if args.history:
        history_to_csv(history, args.history)
    last = history[-1]
    print(
        f"epoch {last.epoch}: loss {last.train_loss:.4f} acc {last.train_accuracy:.4f} "
        f"val_loss {last.val_loss:.4f} val_acc {last.val_accuracy:.4f}"
    )
    return 0


def _load_model(path):
    ckpt = checkpoint_load(path)
    if ckpt.ela_config is None:
        ela_cfg = ela.ElaConfig(target_size=ckpt.model_config.input_height)
    else:
        ela_cfg = ckpt.ela_config
    if ela_cfg.target_size != ckpt.model_config.input_height or ckpt.model_config.input_channels != 3:
        raise InvalidConfigError("checkpoint preprocessing does not match its model input")
    return ckpt, ela_cfg


def cmd_eval(args) -> int:
    ckpt, ela_cfg = _load_model(args.model)
    manifest = ela.load_manifest(args.manifest)
    samples, skipped = ela.load_samples(manifest, ela_cfg)
    if skipped:
        print(f"warning: skipped {len(skipped)} undecodable images", file=sys.stderr)
    loss, preds = evaluate(ckpt.params, ckpt.model_config, samples)
    cm = confusion_from_predictions(preds.tolist(), [s.label for s in samples], args.threshold)
    report = compute_metrics(cm, args.threshold)
    if args.report:
        path = Path(args.report)
        path.write_text(report.to_json() if path.suffix.lower() == ".json" else report.to_text(), encoding="utf-8")
    print(f"Recall: {report.recall:.4f}")
    print(f"Precision: {report.precision:.4f}")
    print(f"F1 Score: {report.f1:.4f}")
    print(f"Accuracy: {report.accuracy:.4f}")
    print(f"Loss: {loss:.4f}  (TP {cm.tp} FP {cm.fp} FN {cm.fn} TN {cm.tn})")
    return 0


def cmd_predict(args) -> int:
    from .model import Network
    from .tensor import Tensor

    ckpt, ela_cfg = _load_model(args.model)
    features = ela.preprocess(ela.decode_image(args.image), ela_cfg)
    p = float(Network(ckpt.model_config, ckpt.params).predict(Tensor.wrap(features.array[None]))[0])
    print(format_prediction(p))
    return 0


def cmd_ela(args) -> int:
    cfg = ela.ElaConfig(args.quality, _amplification(args.amplify))
    ela.save_png(ela.ela_transform(ela.decode_image(args.image), cfg), args.out)
    return 0


def cmd_synth(args) -> int:
    from .synthetic import write_corpus

    path = write_corpus(args.out_dir, args.n_real, args.n_fake, args.size, _seed(args))
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elaspoof", description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: $ELASPOOF_SEED, else {DEFAULT_SEED})")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="stratified train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--split", type=float, default=0.7, help="training fraction per class (default: 0.7)")
    p.add_argument("--noise-threshold", type=float, default=ela.DEFAULT_NOISE_THRESHOLD,
                   help=f"warn above this noise score (default: {ela.DEFAULT_NOISE_THRESHOLD})")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the classifier on a manifest",
                       description="Train with binary cross-entropy loss and the ADAM optimizer.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default="model.ckpt", help="checkpoint path (default: model.ckpt)")
    p.add_argument("--epochs", type=int, default=20, help="epochs (default: 20)")
    p.add_argument("--batch-size", type=int, default=32, help="batch size (default: 32)")
    p.add_argument("--val-split", type=float, default=0.2, help="validation split (default: 0.2)")
    p.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=True,
                   help="shuffle training order each epoch")
    p.add_argument("--lr", type=float, default=0.001, help="ADAM learning rate (default: 0.001)")
    p.add_argument("--ela-quality", type=int, default=90, help="ELA JPEG quality (default: 90)")
    p.add_argument("--amplify", default="auto", help="ELA amplification, 'auto' or a factor (default: auto)")
    p.add_argument("--input-size", type=int, default=128, help="network input size in pixels (default: 128)")
    p.add_argument("--history", default="history.csv", help="history CSV path (default: history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", default="model.ckpt", help="checkpoint path (default: model.ckpt)")
    p.add_argument("--threshold", type=float, default=0.5, help="decision threshold (default: 0.5)")
    p.add_argument("--report", default=None, help="write the metrics report here (.json for JSON)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--image", required=True)
    p.add_argument("--model", default="model.ckpt", help="checkpoint path (default: model.ckpt)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ela", help="write the ELA map of an image as PNG")
    p.add_argument("--image", required=True)
    p.add_argument("--out", default="out.png", help="output PNG (default: out.png)")
    p.add_argument("--quality", type=int, default=90, help="JPEG quality 1-100 (default: 90)")
    p.add_argument("--amplify", default="auto", help="'auto' or a positive factor (default: auto)")
    p.set_defaults(func=cmd_ela)

    p = sub.add_parser("synth", help="generate a synthetic clean/spliced corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-real", type=int, default=100, help="clean images (default: 100)")
    p.add_argument("--n-fake", type=int, default=100, help="spliced images (default: 100)")
    p.add_argument("--size", type=int, default=128, help="image size (default: 128)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ElaSpoofError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: invalid-argument: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
