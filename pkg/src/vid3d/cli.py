"""Command-line surface: reproducible experiments over all modules.

Configuration precedence is flag > config file > default. Config files are
flat ``key = value`` text; unknown keys are rejected. Every training or
probing run writes its fully resolved configuration into the run directory,
and `train` additionally writes ``arch.txt``, which later commands accept
via --config to rebuild the same architecture for a weight file.
"""

import argparse
import os
import sys


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    _pin_blas_threads(argv)
    sys.exit(dispatch(argv))


def _pin_blas_threads(argv):
    # BLAS pools are sized at numpy import; honor --threads before that.
    if "--threads" in argv:
        try:
            n = int(argv[argv.index("--threads") + 1])
        except (IndexError, ValueError):
            return
        if n > 0:
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, str(n))


# ---------------------------------------------------------------------------
# settings: schema-driven defaults, config file, flags

ARCH_SCHEMA = {
    "preset": (str, "custom", "preset name (depth-1/3/5/7, increase, decrease, "
                              "net-64/128/256, c3d) or 'custom'"),
    "depths": (str, "3,3,3,3,3", "custom family: per-conv temporal depths"),
    "filters": (str, "8,16,32,32,32", "custom family: per-conv filter counts"),
    "fc_width": (int, 64, "custom family: fully connected width"),
    "crop": (str, "auto", "custom family: input crop 'H,W' (auto = frame minus 4)"),
    "channels": (int, 0, "input channels (0 = from data)"),
    "classes": (int, 0, "class count (0 = from data, or the preset default)"),
    "init_gain": (float, 2.449, "custom family: weight init bound scale "
                                "(1.0 = plain uniform fan-in)"),
    "input_offset": (float, 0.5, "custom family: constant subtracted from inputs"),
}

TRAIN_SCHEMA = {
    **ARCH_SCHEMA,
    "batch_size": (int, 30, "clips per mini-batch"),
    "lr": (float, 0.003, "initial learning rate"),
    "lr_divisor": (float, 10.0, "learning-rate division factor"),
    "lr_every": (int, 4, "divide the rate every N schedule units"),
    "stop": (int, 16, "stop after N schedule units"),
    "schedule_unit": (str, "epochs", "schedule unit: epochs or iters"),
    "momentum": (float, 0.9, "SGD momentum"),
    "val_fraction": (float, 0.2, "held-out fraction per class"),
    "weight_decay": (float, 0.0, "L2 penalty (off by default)"),
    "augment": (bool, True, "random crop/window/flip jittering"),
    "seed": (int, 0, "master seed"),
}

GEN_SCHEMA = {
    "mode": (str, "motion", "motion or appearance"),
    "classes": (int, 8, "class count"),
    "videos_per_class": (int, 50, "videos per class"),
    "height": (int, 24, "frame height"),
    "width": (int, 24, "frame width"),
    "length": (int, 16, "frames per video (>= 16)"),
    "channels": (int, 3, "1 or 3"),
    "blob_count_min": (int, 1, "min blobs per video"),
    "blob_count_max": (int, 2, "max blobs per video"),
    "blob_size_min": (int, 7, "min blob size in pixels"),
    "blob_size_max": (int, 10, "max blob size in pixels"),
    "speed_min": (float, 1.0, "min drift speed, pixels/frame"),
    "speed_max": (float, 2.0, "max drift speed, pixels/frame"),
    "noise": (float, 0.02, "additive uniform noise level"),
    "seed": (int, 0, "generator seed"),
}


def _parse_value(key, raw, typ):
    from .errors import ConfigError
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: cannot parse {raw!r} as {typ.__name__}")


def _read_config_file(path, schema):
    from .errors import ConfigError
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in schema:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw, schema[key][0])
    return values


def resolve_settings(schema, args):
    """defaults <- config file <- flags."""
    settings = {key: default for key, (typ, default, _) in schema.items()}
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config, schema))
    for key in schema:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            settings[key] = flag_val
    return settings


def _add_schema_flags(parser, schema):
    for key, (typ, default, help_text) in schema.items():
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            parser.add_argument(flag, dest=key, default=None,
                                action=argparse.BooleanOptionalAction, help=help_text)
        else:
            parser.add_argument(flag, dest=key, type=typ, default=None,
                                help=f"{help_text} (default {default})")


def write_resolved_config(settings, path):
    with open(path, "w") as f:
        for key in sorted(settings):
            f.write(f"{key} = {settings[key]}\n")


def _parse_int_list(raw, what):
    from .errors import ConfigError
    try:
        return [int(tok) for tok in str(raw).split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse {what} list from {raw!r}")


def resolve_input_path(path):
    """Relative paths that do not exist locally are tried against
    $VID3D_DATA_DIR."""
    if path and not os.path.isabs(path) and not os.path.exists(path):
        base = os.environ.get("VID3D_DATA_DIR")
        if base and os.path.exists(os.path.join(base, path)):
            return os.path.join(base, path)
    return path


# ---------------------------------------------------------------------------
# architecture resolution

def _auto_crop(h, w):
    return max(h - 4, min(h, 4)), max(w - 4, min(w, 4))


def resolve_arch(settings, records=None):
    """Fill channels/classes/crop from the data when unset; returns the
    updated settings (arch keys resolved to concrete values)."""
    from .errors import ConfigError
    s = dict(settings)
    if records:
        data_channels = records[0].channels
        data_classes = max(r.label for r in records) + 1
        frame_h, frame_w = records[0].frames.shape[2], records[0].frames.shape[3]
    else:
        data_channels, data_classes, frame_h, frame_w = 3, 0, 116, 116
    if s["channels"] == 0:
        s["channels"] = data_channels
    if s["classes"] == 0:
        if s["preset"] != "custom":
            s["classes"] = data_classes or (487 if s["preset"] == "c3d" else 101)
        else:
            if not data_classes:
                raise ConfigError("classes must be given when no dataset is supplied")
            s["classes"] = data_classes
    if s["preset"] == "custom" and s["crop"] == "auto":
        ch, cw = _auto_crop(frame_h, frame_w)
        s["crop"] = f"{ch},{cw}"
    return s


def spec_from_settings(settings):
    from . import network
    from .errors import ConfigError
    if settings["preset"] != "custom":
        return network.preset_spec(settings["preset"], settings["classes"])
    depths = _parse_int_list(settings["depths"], "depths")
    filters = _parse_int_list(settings["filters"], "filters")
    crop = _parse_int_list(settings["crop"], "crop")
    if len(crop) != 2:
        raise ConfigError(f"crop must be 'H,W', got {settings['crop']!r}")
    gain = settings["init_gain"]
    init = None if gain == 1.0 else ("uniform-fan-in", gain)
    return network.family_spec(
        tuple(depths), settings["classes"],
        input_shape=(settings["channels"], 16, crop[0], crop[1]),
        filters=tuple(filters), fc_width=settings["fc_width"], init=init,
        input_offset=settings["input_offset"])


def write_arch_config(settings, path):
    arch = {key: settings[key] for key in ARCH_SCHEMA}
    write_resolved_config(arch, path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    from . import videodata
    s = resolve_settings(GEN_SCHEMA, args)
    cfg = videodata.MotionBlobsConfig(
        mode=s["mode"], classes=s["classes"], videos_per_class=s["videos_per_class"],
        height=s["height"], width=s["width"], length=s["length"],
        channels=s["channels"],
        blob_count=(s["blob_count_min"], s["blob_count_max"]),
        blob_size=(s["blob_size_min"], s["blob_size_max"]),
        speed=(s["speed_min"], s["speed_max"]),
        noise=s["noise"], seed=s["seed"])
    records = videodata.generate_motionblobs(cfg)
    videodata.save_dataset(records, args.out)
    print(f"wrote {len(records)} videos ({s['classes']} classes, mode={s['mode']}) "
          f"to {args.out}")
    return 0


def _load_data(args):
    from . import videodata
    return videodata.load_dataset(resolve_input_path(args.data))


def cmd_train(args):
    from . import network, trainer
    records = _load_data(args)
    s = resolve_arch(resolve_settings(TRAIN_SCHEMA, args), records)
    spec = spec_from_settings(s)
    net = network.build(spec, seed=s["seed"])
    config = trainer.TrainConfig(
        batch_size=s["batch_size"], initial_lr=s["lr"],
        schedule=trainer.StepSchedule(s["schedule_unit"], s["lr_divisor"],
                                      s["lr_every"], s["stop"]).validate(),
        momentum=s["momentum"], seed=s["seed"], augmentation=s["augment"],
        val_fraction=s["val_fraction"], weight_decay=s["weight_decay"])
    os.makedirs(args.out, exist_ok=True)
    write_resolved_config(s, os.path.join(args.out, "config.txt"))
    write_arch_config(s, os.path.join(args.out, "arch.txt"))
    report = trainer.train(net, records, config, log=lambda msg: print(msg, file=sys.stderr))
    network.save_weights(net, os.path.join(args.out, "weights.c3dw"))
    report.save_csv(os.path.join(args.out, "train_report.csv"))
    print(f"final held-out clip accuracy: {report.final_accuracy:.4f}")
    print(f"run artifacts in {args.out}")
    return 0


def cmd_arch_search(args):
    from . import network, trainer
    from .errors import ConfigError
    records = _load_data(args)
    s = resolve_arch(resolve_settings(TRAIN_SCHEMA, args), records)
    if s["preset"] != "custom":
        raise ConfigError("arch-search varies the custom family; do not set a preset")
    depths = _parse_int_list(args.search_depths, "depths")
    seeds = _parse_int_list(args.seeds, "seeds")
    n_convs = len(_parse_int_list(s["filters"], "filters"))
    os.makedirs(args.out, exist_ok=True)
    write_resolved_config({**s, "search_depths": args.search_depths,
                           "seeds": args.seeds}, os.path.join(args.out, "config.txt"))
    run_rows = []
    mean_rows = []
    for d in depths:
        arch = {**s, "depths": ",".join([str(d)] * n_convs)}
        spec = spec_from_settings(arch)
        _, params = network.count_params(spec)
        accs = []
        for seed in seeds:
            net = network.build(spec, seed=seed)
            config = trainer.TrainConfig(
                batch_size=s["batch_size"], initial_lr=s["lr"],
                schedule=trainer.StepSchedule(s["schedule_unit"], s["lr_divisor"],
                                              s["lr_every"], s["stop"]).validate(),
                momentum=s["momentum"], seed=seed, augmentation=s["augment"],
                val_fraction=s["val_fraction"], weight_decay=s["weight_decay"])
            report = trainer.train(net, records, config)
            acc = report.final_accuracy
            accs.append(acc)
            run_rows.append((d, seed, acc))
            print(f"depth-{d} seed {seed}: clip accuracy {acc:.4f}", file=sys.stderr)
        mean_rows.append((d, params, sum(accs) / len(accs)))
    with open(os.path.join(args.out, "arch_search.csv"), "w") as f:
        f.write("depth,params,clip_accuracy\n")
        for d, params, acc in mean_rows:
            f.write(f"{d},{params},{acc!r}\n")
    with open(os.path.join(args.out, "arch_search_runs.csv"), "w") as f:
        f.write("depth,seed,clip_accuracy\n")
        for d, seed, acc in run_rows:
            f.write(f"{d},{seed},{acc!r}\n")
    for d, params, acc in mean_rows:
        print(f"depth-{d}: params {params}, mean clip accuracy {acc:.4f}")
    return 0


def cmd_count_params(args):
    from . import network
    s = resolve_arch(resolve_settings(ARCH_SCHEMA, args))
    spec = spec_from_settings(s)
    per_layer, total = network.count_params(spec)
    width = max(len(name) for name, _ in per_layer)
    for name, count in per_layer:
        print(f"{name:<{width}s} {count:>12,d}")
    print(f"{'total':<{width}s} {total:>12,d}  ({total / 1e6:.2f}M)")
    return 0


def cmd_gradcheck(args):
    from . import gradcheck
    results = gradcheck.run_all(eps=args.eps, seed=args.seed or 0)
    failed = False
    for name, err in results:
        status = "ok" if err < args.tol else "FAIL"
        print(f"{name:14s} max relative error {err:.3e}  {status}")
        failed = failed or err >= args.tol
    return 1 if failed else 0


def _load_net(args, records=None):
    from . import network
    s = resolve_arch(resolve_settings(dict(ARCH_SCHEMA), args), records)
    spec = spec_from_settings(s)
    net = network.load_weights(resolve_input_path(args.weights), spec)
    return net, s


def cmd_extract(args):
    from . import descriptor
    records = _load_data(args)
    net, s = _load_net(args, records)
    descs = []
    for i, rec in enumerate(records):
        descs.append(descriptor.video_descriptor(net, rec.frames, args.layer,
                                                 video_id=i, overlap=args.overlap))
    os.makedirs(args.out, exist_ok=True)
    descriptor.save_descriptors(descs, os.path.join(args.out, "features.desc"))
    descriptor.save_descriptors_csv(descs, os.path.join(args.out, "features.csv"))
    with open(os.path.join(args.out, "labels.csv"), "w") as f:
        f.write("video_id,label\n")
        for i, rec in enumerate(records):
            f.write(f"{i},{rec.label}\n")
    write_resolved_config({**s, "layer": args.layer, "overlap": args.overlap},
                          os.path.join(args.out, "config.txt"))
    print(f"extracted {len(descs)} descriptors of dimension {len(descs[0].values)} "
          f"(layer {args.layer}) to {args.out}")
    return 0


def cmd_predict(args):
    from . import descriptor
    import numpy as np
    records = _load_data(args)
    net, s = _load_net(args, records)
    correct = 0
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "predictions.csv"), "w") as f:
        f.write("video_id,label,predicted" +
                "".join(f",score_{c}" for c in range(net.spec.class_count)) + "\n")
        for i, rec in enumerate(records):
            probs = descriptor.video_predict(net, rec.frames, n_clips=args.n_clips,
                                             seed=(args.seed or 0) * 1000003 + i)
            pred = int(np.argmax(probs))
            correct += int(pred == rec.label)
            f.write(f"{i},{rec.label},{pred}" +
                    "".join(f",{p!r}" for p in probs) + "\n")
    acc = correct / len(records)
    print(f"video accuracy: {acc:.4f} ({correct}/{len(records)})")
    return 0


def _load_features(path):
    from . import descriptor
    import numpy as np
    path = resolve_input_path(path)
    if path.endswith(".desc"):
        return descriptor.load_descriptors(path)
    rows = []
    with open(path) as f:
        for line in f:
            parts = line.strip().split(",")
            if parts and parts[0] != "":
                rows.append([float(v) for v in parts[1:]])  # first column is video_id
    return np.array(rows)


def _load_labels(path):
    import numpy as np
    labels = []
    with open(resolve_input_path(path)) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("video_id"):
                continue
            labels.append(int(line.split(",")[1]))
    return np.array(labels)


def _protocol(folds):
    return ("leave-one-out",) if folds == 0 else ("k-fold", folds)


def cmd_probe_svm(args):
    from . import probes
    X = _load_features(args.features)
    y = _load_labels(args.labels)
    result = probes.cross_validate(X, y, _protocol(args.folds), seed=args.seed or 0,
                                   lam=args.lam, epochs=args.epochs)
    os.makedirs(args.out, exist_ok=True)
    probes.save_cv_csv(result, os.path.join(args.out, "svm_cv.csv"))
    print(f"mean accuracy over {len(result.fold_accuracy)} folds: "
          f"{result.mean_accuracy:.4f}")
    return 0


def cmd_probe_pca(args):
    from . import probes
    import numpy as np
    from .errors import ConfigError
    X = _load_features(args.features)
    y = _load_labels(args.labels)
    dim_tokens = [tok.strip() for tok in args.dims.split(",") if tok.strip()]
    os.makedirs(args.out, exist_ok=True)
    seed = args.seed or 0
    folds = probes.fold_indices(len(y), _protocol(args.folds), seed)
    rows = []
    for tok in dim_tokens:
        accs = []
        for f, (train, test) in enumerate(folds):
            k = min(len(train) - 1, X.shape[1]) if tok == "full" else int(tok)
            if k > min(len(train) - 1, X.shape[1]):
                raise ConfigError(f"dim {k} exceeds min(samples-1, dim) = "
                                  f"{min(len(train) - 1, X.shape[1])}")
            pca = probes.pca_fit(X[train], k)
            model = probes.svm_train(probes.pca_project(pca, X[train]), y[train],
                                     lam=args.lam, epochs=args.epochs,
                                     seed=seed * 100003 + f)
            pred, _ = probes.svm_predict(model, probes.pca_project(pca, X[test]))
            accs.append(float((pred == y[test]).mean()))
        rows.append((tok, accs))
    with open(os.path.join(args.out, "pca_svm.csv"), "w") as f:
        f.write("dim,fold,accuracy\n")
        for tok, accs in rows:
            for i, acc in enumerate(accs):
                f.write(f"{tok},{i},{acc!r}\n")
            f.write(f"{tok},mean,{float(np.mean(accs))!r}\n")
    for tok, accs in rows:
        print(f"dim {tok}: mean accuracy {float(np.mean(accs)):.4f}")
    return 0


def build_pairs(labels_by_video, holdout, count, rng):
    """Balanced (video_a, video_b, same?) pairs from the held-out classes."""
    import numpy as np
    from .errors import DataError
    by_class = {c: [i for i, lab in labels_by_video.items() if lab == c] for c in holdout}
    for c, vids in by_class.items():
        if len(vids) < 2:
            raise DataError(f"held-out class {c} has fewer than 2 videos")
    pairs = []
    classes = sorted(holdout)
    for _ in range(count):
        c = classes[int(rng.integers(len(classes)))]
        a, b = rng.choice(len(by_class[c]), size=2, replace=False)
        pairs.append((by_class[c][a], by_class[c][b], 1))
    for _ in range(count):
        ca, cb = rng.choice(len(classes), size=2, replace=False)
        a = by_class[classes[ca]][int(rng.integers(len(by_class[classes[ca]])))]
        b = by_class[classes[cb]][int(rng.integers(len(by_class[classes[cb]])))]
        pairs.append((a, b, 0))
    return pairs


def cmd_probe_sim(args):
    from . import probes
    import numpy as np
    records = _load_data(args)
    net, s = _load_net(args, records)
    present = sorted({rec.label for rec in records})
    if args.holdout_classes == "auto":
        holdout = present[len(present) // 2:]
    else:
        holdout = _parse_int_list(args.holdout_classes, "holdout classes")
    rng = np.random.default_rng(args.seed or 0)
    labels_by_video = {i: rec.label for i, rec in enumerate(records)}
    pairs = build_pairs(labels_by_video, holdout, args.pairs, rng)
    wanted = sorted({i for a, b, _ in pairs for i in (a, b)})
    feats = {i: probes.video_feature_set(net, records[i].frames, video_id=i)
             for i in wanted}
    X = np.stack([probes.pair_feature_from_descriptors(feats[a], feats[b])
                  for a, b, _ in pairs])
    y = np.array([same for _, _, same in pairs])
    result = probes.cross_validate(X, y, _protocol(args.folds), seed=args.seed or 0,
                                   lam=args.lam, epochs=args.epochs, normalize=True)
    # pooled test-fold margins for the ROC export
    scores = np.zeros(len(y))
    for f, (train, test) in enumerate(probes.fold_indices(len(y), _protocol(args.folds),
                                                          args.seed or 0)):
        norm = probes.znorm_fit(X[train])
        model = probes.svm_train(probes.znorm_apply(norm, X[train]), y[train],
                                 lam=args.lam, epochs=args.epochs,
                                 seed=(args.seed or 0) * 100003 + f)
        sc = probes.svm_scores(model, probes.znorm_apply(norm, X[test]))
        scores[test] = sc[:, 1] - sc[:, 0]
    fpr, tpr = probes.roc_points(scores, y)
    os.makedirs(args.out, exist_ok=True)
    probes.save_cv_csv(result, os.path.join(args.out, "sim_cv.csv"))
    with open(os.path.join(args.out, "roc.csv"), "w") as f:
        f.write("fpr,tpr\n")
        for a, b in zip(fpr, tpr):
            f.write(f"{a!r},{b!r}\n")
    write_resolved_config({**s, "holdout_classes": ",".join(str(c) for c in holdout),
                           "pairs": args.pairs, "folds": args.folds},
                          os.path.join(args.out, "config.txt"))
    print(f"held-out classes: {holdout}")
    print(f"mean accuracy {result.mean_accuracy:.4f}, mean AUC {result.mean_auc:.4f}")
    return 0


def cmd_visualize(args):
    from . import deconv, videodata
    from .errors import ConfigError
    records = _load_data(args)
    net, s = _load_net(args, records)
    c, clip_len, crop_h, crop_w = net.spec.input_shape
    layer = args.layer
    if not layer:
        convs = [l.name for l in net.spec.layers if l.kind == "conv3d"]
        layer = convs[-1]
    clips, meta = [], []
    if args.clip:
        vid, start = (int(tok) for tok in args.clip.split(":"))
        frames = records[vid].frames
        clips.append(videodata.center_crop(frames[:, start:start + clip_len],
                                           crop_h, crop_w))
        meta.append((vid, start))
    else:
        limit = args.max_clips if args.max_clips > 0 else len(records)
        for vid, rec in enumerate(records[:limit]):
            for start in videodata.split_into_clips(rec.length, clip_len, 0):
                clips.append(videodata.center_crop(
                    rec.frames[:, start:start + clip_len], crop_h, crop_w))
                meta.append((vid, start))
    if args.position:
        pos = tuple(_parse_int_list(args.position, "position"))
        targets = [(0, pos, None)]
    else:
        targets = deconv.top_activations(net, clips, layer, args.channel, args.top)
    os.makedirs(args.out, exist_ok=True)
    for rank, (ci, pos, value) in enumerate(targets):
        vid, start = meta[ci]
        req = deconv.DeconvRequest(layer, args.channel, pos, args.relu_mode)
        projected = deconv.deconv_feature_map(net, clips[ci], req)
        base = os.path.join(args.out, f"act{rank:02d}_video{vid}_start{start}")
        deconv.write_image_sequence(projected, os.path.join(base, "deconv"))
        deconv.write_image_sequence(clips[ci], os.path.join(base, "input"))
        shown = "top-1" if value is None else f"value {value:.4f}"
        print(f"{base}: layer {layer} channel {args.channel} pos {pos} ({shown})")
    return 0


def cmd_benchmark(args):
    import statistics
    import time
    from . import descriptor, kernels, network, videodata
    from .errors import ConfigError, DataError

    data_path = resolve_input_path(args.data)
    probe_records = videodata.load_dataset(data_path)
    if not probe_records:
        raise DataError("benchmark needs a non-empty dataset")
    if args.weights:
        net, _ = _load_net(args, probe_records)
    else:
        s = resolve_arch(resolve_settings(dict(ARCH_SCHEMA), args), probe_records)
        net = network.build(spec_from_settings(s), seed=args.seed or 0)
    del probe_records

    if args.backend == "active":
        backends = [kernels.active_backend()]
    elif args.backend == "both":
        backends = ["numba", "numpy"]
    elif args.backend in ("numba", "numpy"):
        backends = [args.backend]
    else:
        raise ConfigError(f"backend must be active, numba, numpy or both, "
                          f"got {args.backend!r}")

    rows = []
    for backend in backends:
        kernels.use_backend(backend)
        reps = []
        for rep in range(args.reps):
            t0 = time.perf_counter()
            records = videodata.load_dataset(data_path)  # timed: I/O included
            n_clips = 0
            for i, rec in enumerate(records):
                descriptor.video_descriptor(net, rec.frames, args.layer,
                                            video_id=i, overlap=args.overlap)
                n_clips += len(videodata.split_into_clips(rec.length, 16, args.overlap))
            dt = time.perf_counter() - t0
            reps.append((dt, n_clips))
        med = statistics.median(dt for dt, _ in reps)
        n_clips = reps[0][1]
        clips_per_sec = n_clips / med
        fps = clips_per_sec * 16.0  # by definition: 16 frames per clip
        rows.append((backend, len(records), n_clips, med, clips_per_sec, fps))

    print(f"{'backend':8s} {'videos':>7s} {'clips':>7s} {'seconds':>9s} "
          f"{'clips/s':>9s} {'fps':>9s}")
    for backend, n_videos, n_clips, med, cps, fps in rows:
        print(f"{backend:8s} {n_videos:>7d} {n_clips:>7d} {med:>9.3f} "
              f"{cps:>9.2f} {fps:>9.1f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "benchmark.csv"), "w") as f:
            f.write("backend,videos,clips,median_seconds,clips_per_sec,fps\n")
            for backend, n_videos, n_clips, med, cps, fps in rows:
                f.write(f"{backend},{n_videos},{n_clips},{med!r},{cps!r},{fps!r}\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="vid3d",
        description="3D convolutional network engine for spatiotemporal video "
                    "features: training, descriptor extraction, probes and "
                    "deconvolution visualization on synthetic video data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schema=None):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--threads", type=int, default=0,
                       help="worker thread cap (1 = strictly sequential)")
        if schema:
            _add_schema_flags(p, {k: v for k, v in schema.items() if k != "seed"})

    p = sub.add_parser("gen-data", help="generate a synthetic motion-blobs dataset")
    common(p, GEN_SCHEMA)
    p.add_argument("--out", required=True, help="output .vset path")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a dataset")
    common(p, TRAIN_SCHEMA)
    p.add_argument("--data", required=True, help="input .vset dataset")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("arch-search", help="train the family at several temporal depths")
    common(p, {k: v for k, v in TRAIN_SCHEMA.items() if k != "depths"})
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depths", dest="search_depths", default="1,3,5,7",
                   help="comma list of temporal depths to try (default 1,3,5,7)")
    p.add_argument("--seeds", default="0", help="comma list of seeds per depth")
    p.set_defaults(fn=cmd_arch_search)

    p = sub.add_parser("count-params", help="print per-layer and total parameter counts")
    common(p, ARCH_SCHEMA)
    p.set_defaults(fn=cmd_count_params)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    common(p)
    p.add_argument("--eps", type=float, default=1e-3, help="central-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("extract", help="extract video descriptors to a feature file")
    common(p, ARCH_SCHEMA)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True, help="weight file from train")
    p.add_argument("--layer", default="fc6", help="feature layer (default fc6)")
    p.add_argument("--overlap", type=int, default=8, help="clip overlap (default 8)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("predict", help="clip-averaged video label prediction")
    common(p, ARCH_SCHEMA)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--n-clips", type=int, default=10,
                   help="random clips averaged per video (default 10)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("probe-svm", help="cross-validated linear SVM on features")
    common(p)
    p.add_argument("--features", required=True, help=".desc or .csv feature file")
    p.add_argument("--labels", required=True, help="labels.csv from extract")
    p.add_argument("--folds", type=int, default=10, help="folds (0 = leave-one-out)")
    p.add_argument("--lam", type=float, default=1e-4, help="SVM regularization")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_probe_svm)

    p = sub.add_parser("probe-pca", help="SVM accuracy after PCA projection")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--dims", default="2,10,50,full",
                   help="comma list of dimensions, 'full' = no reduction")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_probe_pca)

    p = sub.add_parser("probe-sim", help="same/different pair pipeline on held-out classes")
    common(p, ARCH_SCHEMA)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--holdout-classes", default="auto",
                   help="comma list of class ids, or 'auto' for the upper half")
    p.add_argument("--pairs", type=int, default=120,
                   help="positive (and negative) pair count")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_probe_sim)

    p = sub.add_parser("visualize", help="deconvolution of strong activations to pixels")
    common(p, ARCH_SCHEMA)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--layer", default="", help="conv layer name (default: last conv)")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--top", type=int, default=1, help="how many top activations")
    p.add_argument("--position", default="", help="explicit 't,y,x' instead of top-N")
    p.add_argument("--clip", default="", help="'video:start' to restrict to one clip")
    p.add_argument("--max-clips", type=int, default=32,
                   help="cap on scanned clips (0 = all)")
    p.add_argument("--relu-mode", default="deconvnet", choices=("deconvnet", "forward-mask"))
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_visualize)

    p = sub.add_parser("benchmark", help="descriptor extraction throughput incl. I/O")
    common(p, ARCH_SCHEMA)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", default="", help="optional weight file")
    p.add_argument("--layer", default="fc6")
    p.add_argument("--overlap", type=int, default=8)
    p.add_argument("--reps", type=int, default=3, help="repetitions; median reported")
    p.add_argument("--backend", default="active",
                   help="kernel backend: active, numba, numpy or both")
    p.add_argument("--out", default="", help="optional directory for benchmark.csv")
    p.set_defaults(fn=cmd_benchmark)

    return parser


def dispatch(argv):
    """Parse and run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.threads and args.threads > 0:
        try:
            import numba
            numba.set_num_threads(args.threads)
        except ImportError:
            pass
    from .errors import Vid3dError
    try:
        return args.fn(args)
    except (Vid3dError, FloatingPointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    main()
