"""Command-line entry points.

Subcommands: ``synth2d`` and ``synth3d`` generate the analytic fixtures,
``register`` runs warm start plus training and writes a checkpoint,
``evaluate`` computes the requested metrics from a checkpoint, and
``inspect-checkpoint`` prints a summary. Every run ends by atomically
writing a manifest that names its inputs, outputs, resolved config and
final metrics.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O or format
error, 4 numerical abort during training.
"""

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import ConfigError, FormatError, NumericalAbort, WarpregError
from .field import pretrain
from .formats import (Checkpoint, load_checkpoint, load_image, load_landmarks,
                      load_mesh, save_checkpoint, save_image, save_landmarks)
from .grids import ImageGrid, pixel_centers, sample_batch
from .landmarks import LandmarkSet
from .meshes import MeshRegion, RingRegion
from .metrics import (extract_profile, jacobian_map, landmark_error_stats,
                      mse, ssim, strain_curves, track_landmarks)
from .presets import (PRESETS, RING_DEFAULTS, SYNTH2D_NOISE_REL,
                      SYNTH2D_NOISE_SEED, SYNTH2D_RESOLUTION, get_preset)
from .ringbench import (RingOracle, RingSpec, annular_shell_mesh,
                        extruded_sequence, fixture_landmarks, synthesize_pair)
from .training import TrainConfig, config_from_text, make_field, train

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class _Manifest:
    def __init__(self, command, args):
        self.data = {"command": command,
                     "argv": list(args),
                     "code_version": __version__,
                     "inputs": [], "outputs": [],
                     "seeds": {}, "final_metrics": {}}
        self.t0 = time.perf_counter()

    def write(self, out_dir):
        self.data["wall_clock_s"] = time.perf_counter() - self.t0
        path = os.path.join(out_dir, "manifest.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2)
        os.replace(tmp, path)
        return path


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write-probe")
    try:
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise FormatError(f"output directory not writable: {exc}") from exc


def _parse_floats(text, n, what):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != n:
        raise ConfigError(f"{what} needs {n} comma-separated values, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad {what}: {text!r}") from exc


def _write_csv(path, columns: dict):
    keys = list(columns)
    n = len(next(iter(columns.values())))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for i in range(n):
            fh.write(",".join(f"{np.asarray(columns[k]).ravel()[i]:.12g}"
                              for k in keys) + "\n")


def _ring_spec(args) -> RingSpec:
    radii = _parse_floats(args.radii, 4, "--radii") if args.radii else \
        [RING_DEFAULTS["R1"], RING_DEFAULTS["R2"], RING_DEFAULTS["r1"], RING_DEFAULTS["r2"]]
    center = _parse_floats(args.center, 2, "--center") if args.center else \
        list(RING_DEFAULTS["center"])
    return RingSpec(R1=radii[0], R2=radii[1], r1=radii[2], r2=radii[3],
                    center=tuple(center))


def cmd_synth2d(args):
    spec = _ring_spec(args)
    _ensure_out(args.out)
    man = _Manifest("synth2d", sys.argv[1:])
    r_img, t_img, oracle = synthesize_pair(spec, args.resolution, args.seed,
                                           args.noise)
    paths = {"reference": os.path.join(args.out, "reference.img"),
             "template": os.path.join(args.out, "template.img"),
             "oracle": os.path.join(args.out, "oracle.csv")}
    save_image(paths["reference"], r_img)
    save_image(paths["template"], t_img)
    xs = np.linspace(0.0, 1.0, 64)
    g = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    u = oracle.displacement(g)
    J = oracle.jacobian(g)
    E = oracle.strain(g)
    _write_csv(paths["oracle"], {
        "x": g[:, 0], "y": g[:, 1], "u_x": u[:, 0], "u_y": u[:, 1], "J": J,
        "E_xx": E[:, 0, 0], "E_xy": E[:, 0, 1], "E_yy": E[:, 1, 1]})
    man.data["ring"] = {"R1": spec.R1, "R2": spec.R2, "r1": spec.r1,
                        "r2": spec.r2, "center": list(spec.center),
                        "area_defect": spec.area_defect}
    man.data["resolution"] = args.resolution
    man.data["noise_rel"] = args.noise
    man.data["seeds"]["noise_seed"] = args.seed
    man.data["outputs"] = sorted(paths.values())
    print(man.write(args.out))
    return 0


def cmd_synth3d(args):
    spec = _ring_spec(args)
    dims = [int(v) for v in _parse_floats(args.dims, 3, "--dims")]
    _ensure_out(args.out)
    man = _Manifest("synth3d", sys.argv[1:])
    frames, times = extruded_sequence(spec, dims, args.z_extent, args.frames,
                                      args.seed, args.noise)
    outputs = []
    for j, img in enumerate(frames):
        p = os.path.join(args.out, f"frame{j:03d}.img")
        save_image(p, img)
        outputs.append(p)
    z_lo, z_hi = 0.2 * args.z_extent, 0.8 * args.z_extent
    mesh = annular_shell_mesh(spec, z_lo, z_hi)
    mesh_path = os.path.join(args.out, "lv_mesh.txt")
    from .formats import save_mesh
    save_mesh(mesh_path, mesh)
    outputs.append(mesh_path)
    names, pts0 = fixture_landmarks(spec, z_lo, z_hi)
    oracle = RingOracle(spec, spatial_dim=3, time_scaled=True)
    sets = []
    for j, t in enumerate(times):
        pts = pts0 + oracle.displacement(pts0, t)
        sets.append(LandmarkSet(points=pts, walls=[n[0] for n in names],
                                levels=[n[1] for n in names], frame=j))
    lm_path = os.path.join(args.out, "landmarks_gt.csv")
    save_landmarks(lm_path, sets)
    outputs.append(lm_path)
    man.data["ring"] = {"R1": spec.R1, "R2": spec.R2, "r1": spec.r1,
                        "r2": spec.r2, "center": list(spec.center)}
    man.data["dims"] = dims
    man.data["z_extent"] = args.z_extent
    man.data["n_frames"] = args.frames
    man.data["noise_rel"] = args.noise
    man.data["seeds"]["noise_seed"] = args.seed
    man.data["outputs"] = sorted(outputs)
    print(man.write(args.out))
    return 0


def _resolve_config(args) -> TrainConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = config_from_text(fh.read())
    elif args.preset:
        config = get_preset(args.preset)
    else:
        raise ConfigError("register needs --preset or --config")
    overrides = {}
    for name in ("mu", "iterations", "learning_rate", "fourier_sigma",
                 "fourier_m", "p_norm", "n_inc", "n_bg", "weight_seed",
                 "fourier_seed", "collocation_seed", "frame_seed",
                 "warmstart_iters"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.no_fourier:
        overrides["fourier_enabled"] = False
    config = dataclasses.replace(config, **overrides)
    return config.validate()


def _resolve_region(text, reference):
    kind, _, rest = text.partition(":")
    if kind == "ring":
        vals = _parse_floats(rest, 4, "--region ring")
        return RingRegion(center=np.array(vals[:2]), r_inner=vals[2],
                          r_outer=vals[3])
    if kind == "mesh":
        mesh = load_mesh(rest)
        return MeshRegion.from_mesh(mesh, reference)
    raise ConfigError(f"--region must be ring:cx,cy,R1,R2 or mesh:path, got {text!r}")


def cmd_register(args):
    man = _Manifest("register", sys.argv[1:])
    config = _resolve_config(args)        # config errors precede any output
    reference = load_image(args.reference)
    templates = [load_image(p) for p in args.templates]
    region = _resolve_region(args.region, reference)
    _ensure_out(args.out)
    for s in ("weight_seed", "fourier_seed", "collocation_seed", "frame_seed"):
        man.data["seeds"][s] = getattr(config, s)
    man.data["preset"] = args.preset
    man.data["config"] = dataclasses.asdict(config)
    man.data["inputs"] = [args.reference, *args.templates]
    man.data["fourier_ablated"] = not config.fourier_enabled

    field = make_field(config, reference.origin, reference.extent)
    report = pretrain(field, pixel_centers(reference), config)
    man.data["warmstart"] = report
    history_path = os.path.join(args.out, "history.csv")
    ckpt_path = os.path.join(args.out, "checkpoint.wrckpt")
    outputs = [history_path, ckpt_path]
    try:
        result = train(field, reference, templates, region, config,
                       history_file=history_path)
    except NumericalAbort as exc:
        save_checkpoint(ckpt_path, config, field, iteration=exc.iteration or 0)
        man.data["aborted_at"] = exc.iteration
        man.data["outputs"] = sorted(outputs)
        man.write(args.out)
        raise
    tail = [list(row) for row in result.history[-100:].tolist()]
    save_checkpoint(ckpt_path, config, field, iteration=result.iteration,
                    adam=result.adam, rng_collocation=result.rng_collocation,
                    rng_frame=result.rng_frame, loss_tail=tail)
    if result.history.size:
        man.data["final_metrics"]["loss_total"] = result.history[-1, 1]
        man.data["final_metrics"]["loss_similarity"] = result.history[-1, 2]
    if args.dump_frames:
        times = (np.arange(len(templates)) / max(len(templates) - 1, 1)
                 if config.time_dependent else [None])
        pix = pixel_centers(reference)
        for j in sorted({int(v) for v in args.dump_frames.split(",")}):
            if not 0 <= j < len(templates):
                raise ConfigError(f"--dump-frames index {j} out of range")
            t = times[j] if config.time_dependent else None
            u = field.displacement_batch(pix, t)
            vals, _ = sample_batch(templates[j], pix + u)
            warped = ImageGrid(reference.dims, reference.spacing,
                               reference.origin, vals.reshape(reference.dims))
            p = os.path.join(args.out, f"warped_frame{j:03d}.img")
            save_image(p, warped)
            outputs.append(p)
    man.data["outputs"] = sorted(outputs)
    print(man.write(args.out))
    return 0


def _load_field(path) -> Checkpoint:
    return load_checkpoint(path)


def cmd_evaluate(args):
    man = _Manifest("evaluate", sys.argv[1:])
    ck = _load_field(args.checkpoint)
    field = ck.field
    _ensure_out(args.out)
    man.data["inputs"].append(args.checkpoint)
    outputs = []
    ran_anything = False

    if args.mse_ssim:
        if not (args.reference and args.template):
            raise ConfigError("--mse-ssim needs --reference and --template")
        reference = load_image(args.reference)
        template = load_image(args.template)
        man.data["inputs"] += [args.reference, args.template]
        pix = pixel_centers(reference)
        t = args.frame_time if field.time_dependent else None
        u = field.displacement_batch(pix, t)
        vals, _ = sample_batch(template, pix + u)
        warped = ImageGrid(reference.dims, reference.spacing, reference.origin,
                           vals.reshape(reference.dims))
        wpath = os.path.join(args.out, "warped.img")
        save_image(wpath, warped)
        outputs.append(wpath)
        man.data["final_metrics"]["mse"] = mse(reference, warped)
        man.data["final_metrics"]["ssim"] = ssim(reference, warped)
        ran_anything = True

    if args.profiles is not None:
        if not args.profiles.startswith("y="):
            raise ConfigError(f"--profiles expects y=VALUE, got {args.profiles!r}")
        y = float(args.profiles[2:])
        oracle = None
        if args.ring:
            vals = _parse_floats(args.ring, 4, "--ring")
            oracle = RingOracle(RingSpec(R1=vals[0], R2=vals[1], r1=vals[2],
                                         r2=vals[3])).as_field()
        cols = extract_profile(field, y, n_samples=args.profile_samples,
                               oracle=oracle, t=args.frame_time)
        for quantity in ("u_x", "du_x_dX", "J"):
            path = os.path.join(args.out, f"profile_{quantity}.csv")
            sub = {"x": cols["x"], quantity: cols[quantity]}
            if oracle is not None:
                sub["oracle_" + quantity] = cols["oracle_" + quantity]
            _write_csv(path, sub)
            outputs.append(path)
        ran_anything = True

    if args.landmarks:
        sets = load_landmarks(args.landmarks)
        man.data["inputs"].append(args.landmarks)
        ref_sets = [s for s in sets if s.frame == 0]
        if not ref_sets:
            raise ConfigError("landmark file has no frame-0 reference landmarks")
        lm0 = ref_sets[0]
        frames = sorted({s.frame for s in sets})
        n_frames = max(frames) + 1
        times = np.arange(n_frames) / max(n_frames - 1, 1)
        predicted = track_landmarks(field, lm0, times)
        wanted = []
        for tag in (args.frames or "es,ed").split(","):
            tag = tag.strip()
            if tag == "es":
                if args.es_frame is None:
                    raise ConfigError("--frames es needs --es-frame")
                wanted.append(args.es_frame)
            elif tag == "ed":
                wanted.append(n_frames - 1)
            else:
                wanted.append(int(tag))
        by_frame = {s.frame: s for s in sets}
        pairs = [(predicted[j], by_frame[j]) for j in wanted if j in by_frame]
        if not pairs:
            raise ConfigError("no ground-truth landmarks at the requested frames")
        stats = landmark_error_stats([p for p, _ in pairs], [g for _, g in pairs])
        path = os.path.join(args.out, "landmark_distances.csv")
        _write_csv(path, {"distance": stats.distances})
        outputs.append(path)
        man.data["final_metrics"]["landmark_median"] = stats.median
        man.data["final_metrics"]["landmark_q1"] = stats.q1
        man.data["final_metrics"]["landmark_q3"] = stats.q3
        man.data["final_metrics"]["landmark_outliers"] = stats.outliers.tolist()
        ran_anything = True

    if args.strain_curves or args.jacobian_map:
        if not args.mesh:
            raise ConfigError("strain curves and Jacobian maps need --mesh")
        mesh = load_mesh(args.mesh)
        man.data["inputs"].append(args.mesh)
        if args.strain_curves:
            times = np.arange(args.n_frames) / max(args.n_frames - 1, 1)
            curves = strain_curves(field, mesh, times)
            path = os.path.join(args.out, "strain_curves.csv")
            rows = {"time": [], "value": [], "direction": [], "group": []}
            for c in curves:
                rows["time"] += list(c.times)
                rows["value"] += list(c.values)
                rows["direction"] += [c.direction] * len(c.times)
                rows["group"] += [c.group] * len(c.times)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("time,value,direction,group\n")
                for i in range(len(rows["time"])):
                    fh.write(f"{rows['time'][i]:.12g},{rows['value'][i]:.12g},"
                             f"{rows['direction'][i]},{rows['group'][i]}\n")
            outputs.append(path)
        if args.jacobian_map:
            J, summary = jacobian_map(field, mesh, t=args.frame_time)
            path = os.path.join(args.out, "jacobian_vertices.csv")
            _write_csv(path, {"vertex": np.arange(len(J)), "J": J})
            outputs.append(path)
            man.data["final_metrics"]["jacobian"] = summary
        ran_anything = True

    if not ran_anything:
        raise ConfigError("evaluate: request at least one metric "
                          "(--mse-ssim, --profiles, --landmarks, "
                          "--strain-curves, --jacobian-map)")
    man.data["outputs"] = sorted(outputs)
    print(man.write(args.out))
    return 0


def cmd_inspect(args):
    ck = load_checkpoint(args.checkpoint)
    info = {
        "iteration": ck.iteration,
        "layer_sizes": list(ck.field.net.layer_sizes),
        "spatial_dim": ck.field.spatial_dim,
        "time_dependent": ck.field.time_dependent,
        "fourier": None if not hasattr(ck.field.embedding, "B") else
                   {"m": ck.field.embedding.m, "sigma": ck.field.embedding.sigma,
                    "seed": ck.field.embedding.rng_seed},
        "config": dataclasses.asdict(ck.config),
        "loss_tail": ck.loss_tail[-5:],
    }
    print(json.dumps(info, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="warpreg",
                                 description="Deformable registration with a "
                                 "displacement network and volume-change "
                                 "penalties, plus strain evaluation.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    syn = sub.add_parser("synth2d", help="generate the 2D ring benchmark pair")
    syn.add_argument("--out", required=True)
    syn.add_argument("--resolution", type=int, default=SYNTH2D_RESOLUTION)
    syn.add_argument("--radii", help="R1,R2,r1,r2")
    syn.add_argument("--center", help="cx,cy")
    syn.add_argument("--noise", type=float, default=SYNTH2D_NOISE_REL)
    syn.add_argument("--seed", type=int, default=SYNTH2D_NOISE_SEED)
    syn.set_defaults(fn=cmd_synth2d)

    s3 = sub.add_parser("synth3d", help="generate the extruded 3D+t fixture")
    s3.add_argument("--out", required=True)
    s3.add_argument("--dims", default="64,64,8")
    s3.add_argument("--z-extent", type=float, default=0.25)
    s3.add_argument("--frames", type=int, default=6)
    s3.add_argument("--radii", help="R1,R2,r1,r2")
    s3.add_argument("--center", help="cx,cy")
    s3.add_argument("--noise", type=float, default=SYNTH2D_NOISE_REL)
    s3.add_argument("--seed", type=int, default=660)
    s3.set_defaults(fn=cmd_synth3d)

    reg = sub.add_parser("register", help="train a deformation field")
    reg.add_argument("--reference", required=True)
    reg.add_argument("--templates", required=True, nargs="+")
    reg.add_argument("--region", required=True,
                     help="ring:cx,cy,R1,R2 or mesh:path")
    reg.add_argument("--out", required=True)
    reg.add_argument("--preset", choices=sorted(PRESETS))
    reg.add_argument("--config", help="key = value config file (seeds mandatory)")
    reg.add_argument("--no-fourier", action="store_true",
                     help="ablation: identity embedding")
    reg.add_argument("--mu", type=float)
    reg.add_argument("--iterations", type=int)
    reg.add_argument("--learning-rate", dest="learning_rate", type=float)
    reg.add_argument("--fourier-sigma", dest="fourier_sigma", type=float)
    reg.add_argument("--fourier-m", dest="fourier_m", type=int)
    reg.add_argument("--p-norm", dest="p_norm", type=int)
    reg.add_argument("--n-inc", dest="n_inc", type=int)
    reg.add_argument("--n-bg", dest="n_bg", type=int)
    reg.add_argument("--warmstart-iters", dest="warmstart_iters", type=int)
    reg.add_argument("--weight-seed", dest="weight_seed", type=int)
    reg.add_argument("--fourier-seed", dest="fourier_seed", type=int)
    reg.add_argument("--collocation-seed", dest="collocation_seed", type=int)
    reg.add_argument("--frame-seed", dest="frame_seed", type=int)
    reg.add_argument("--dump-frames", help="comma-separated frame indices to "
                     "write warped images for")
    reg.add_argument("--workers", type=int,
                     default=int(os.environ.get("WARPREG_WORKERS", "0")),
                     help="cap the linear-algebra thread pool (0 = library "
                     "default); batch reductions use a fixed chunk order "
                     "either way")
    reg.set_defaults(fn=cmd_register)

    ev = sub.add_parser("evaluate", help="metrics from a trained checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--mse-ssim", action="store_true")
    ev.add_argument("--reference")
    ev.add_argument("--template")
    ev.add_argument("--frame-time", type=float, default=None,
                    help="time in [0,1] for time-dependent fields")
    ev.add_argument("--profiles", help="y=VALUE sweep of u_x, du_x/dX and J")
    ev.add_argument("--profile-samples", type=int, default=512)
    ev.add_argument("--ring", help="R1,R2,r1,r2: adds analytic oracle columns")
    ev.add_argument("--landmarks", help="ground-truth landmark CSV")
    ev.add_argument("--frames", help="comma list of frame tags: es, ed or indices")
    ev.add_argument("--es-frame", type=int, help="end-systole frame index")
    ev.add_argument("--strain-curves", action="store_true")
    ev.add_argument("--n-frames", type=int, default=11,
                    help="time samples for strain curves")
    ev.add_argument("--jacobian-map", action="store_true")
    ev.add_argument("--mesh", help="surface mesh for strain/Jacobian evaluation")
    ev.set_defaults(fn=cmd_evaluate)

    ins = sub.add_parser("inspect-checkpoint", help="print checkpoint summary")
    ins.add_argument("--checkpoint", required=True)
    ins.set_defaults(fn=cmd_inspect)
    return ap


def _apply_workers(args):
    workers = getattr(args, "workers", 0)
    if workers and workers > 0:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=workers)
        except ImportError:
            print("note: threadpoolctl not installed; --workers ignored",
                  file=sys.stderr)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        _apply_workers(args)
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WarpregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
