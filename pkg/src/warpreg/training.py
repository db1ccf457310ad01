"""Loss assembly, collocation sampling and the Adam training loop.

Per iteration: one template frame is picked (uniformly at random in the
time-dependent case), the intensity residual is evaluated over every pixel
of the reference and backpropagated through the warped template lookup;
a fresh collocation batch is drawn and the neo-Hookean regularizer is
evaluated on it with the tissue/background split; the two gradients are
combined with the weight mu and applied with Adam. All randomness flows
through explicitly seeded generators so runs are bit-reproducible.
"""

import math
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff, fourier
from .errors import ConfigError, DimensionError, NumericalAbort
from .field import DeformationField
from .grids import ImageGrid, pixel_centers, sample_batch
from .mechanics import neo_hookean_batch
from .optim import AdamState, adam_step

SEED_FIELDS = ("weight_seed", "fourier_seed", "collocation_seed", "frame_seed")


@dataclass
class TrainConfig:
    spatial_dim: int = 2
    time_dependent: bool = False
    n_frames: int = 0                  # 0 = derive from the template list
    hidden_sizes: tuple = (32, 32, 32)
    fourier_enabled: bool = True
    fourier_m: int = 8
    fourier_sigma: float = 10.0
    mu: float = 1e-5
    lambda_inc: float = 1000.0
    lambda_bg: float = 1.0
    p_norm: int = 2
    learning_rate: float = 1e-3
    iterations: int = 30000
    n_inc: int = 100
    n_bg: int = 100
    warmstart_tol: float = 1e-4
    warmstart_iters: int = 2000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history_every: int = 100
    weight_seed: int = 101
    fourier_seed: int = 202
    collocation_seed: int = 303
    frame_seed: int = 404

    def validate(self):
        if self.spatial_dim not in (2, 3):
            raise ConfigError("spatial_dim must be 2 or 3")
        if self.mu < 0:
            raise ConfigError("mu must be >= 0")
        if self.p_norm not in (1, 2):
            raise ConfigError("p_norm must be 1 or 2")
        if not (0 <= self.lambda_bg <= self.lambda_inc):
            raise ConfigError("need 0 <= lambda_bg <= lambda_inc")
        if min(self.n_inc, self.n_bg) < 1:
            raise ConfigError("collocation counts must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 0 or self.warmstart_iters < 0:
            raise ConfigError("iteration counts must be >= 0")
        if self.warmstart_tol <= 0:
            raise ConfigError("warmstart_tol must be positive")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")
        if self.fourier_enabled and (self.fourier_m < 1 or self.fourier_sigma <= 0):
            raise ConfigError("fourier_m must be >= 1 and fourier_sigma > 0")
        if self.history_every < 1:
            raise ConfigError("history_every must be >= 1")
        return self


def config_to_text(config: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        v = getattr(config, f.name)
        if f.name == "hidden_sizes":
            v = ",".join(str(h) for h in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    """Parse the key = value config format; every seed is mandatory."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = (value, lineno)
    missing = [s for s in SEED_FIELDS if s not in raw]
    if missing:
        raise ConfigError(f"seeds are mandatory in config files; missing {missing}")
    kwargs = {}
    defaults = TrainConfig()
    for key, (value, lineno) in raw.items():
        ref = getattr(defaults, key)
        try:
            if key == "hidden_sizes":
                kwargs[key] = tuple(int(p) for p in value.split(",") if p.strip())
            elif isinstance(ref, bool):
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(value)
                kwargs[key] = value.lower() in ("true", "1")
            elif isinstance(ref, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return TrainConfig(**kwargs).validate()


def make_field(config: TrainConfig, domain_origin, domain_extent) -> DeformationField:
    """Fresh field per the config: embedding, Xavier weights, zero biases.

    The embedding seed is independent of the weight seed, so embedding
    ablations hold the initial weights fixed.
    """
    config.validate()
    d = config.spatial_dim
    if config.fourier_enabled:
        emap = fourier.sample_fourier(config.fourier_m, config.fourier_sigma,
                                      d, config.fourier_seed)
    else:
        emap = fourier.IdentityMap(d)
    in_width = emap.output_width + (1 if config.time_dependent else 0)
    net = autodiff.init_xavier([in_width, *config.hidden_sizes, d], config.weight_seed)
    return DeformationField(net=net, embedding=emap, spatial_dim=d,
                            time_dependent=config.time_dependent,
                            domain_origin=domain_origin, domain_extent=domain_extent)


@dataclass
class CollocationBatch:
    tissue_points: np.ndarray
    background_points: np.ndarray
    tissue_times: np.ndarray = None
    background_times: np.ndarray = None


def _rejection_sample(rng, lo, hi, n, keep_fn, what):
    pts = np.empty((n, len(lo)))
    have = 0
    drawn = 0
    budget = 10000 * n
    while have < n:
        want = max(4 * (n - have), 64)
        cand = rng.uniform(lo, hi, size=(want, len(lo)))
        drawn += want
        good = cand[keep_fn(cand)]
        take = min(len(good), n - have)
        pts[have:have + take] = good[:take]
        have += take
        if drawn > budget and have == 0:
            raise ValueError(f"rejection sampling found no {what} points in "
                             f"{drawn} draws (degenerate region?)")
        if drawn > budget:
            raise ValueError(f"rejection sampling exhausted its budget for {what} "
                             f"points ({have}/{n} found)")
    return pts


def sample_collocation(region, n_inc: int, n_bg: int, time_mode: bool,
                       rng, domain_lo, domain_hi) -> CollocationBatch:
    """Uniform points inside the tissue region and over its complement.

    Tissue points come from rejection sampling in the region's bounding
    box, background points from the image domain minus the region; a
    bounded draw budget turns a degenerate region into an error instead
    of a hang. Per-point times are uniform in [0, 1] in time mode.
    """
    domain_lo = np.asarray(domain_lo, dtype=np.float64)
    domain_hi = np.asarray(domain_hi, dtype=np.float64)
    lo_r, hi_r = region.bounding_box()
    lo_r = np.maximum(lo_r, domain_lo)
    hi_r = np.minimum(hi_r, domain_hi)
    tissue = _rejection_sample(rng, lo_r, hi_r, n_inc, region.contains, "tissue")
    bg = _rejection_sample(rng, domain_lo, domain_hi, n_bg,
                           lambda p: ~region.contains(p), "background")
    tt = rng.uniform(0.0, 1.0, n_inc) if time_mode else None
    bt = rng.uniform(0.0, 1.0, n_bg) if time_mode else None
    return CollocationBatch(tissue_points=tissue, background_points=bg,
                            tissue_times=tt, background_times=bt)


class _PixelLossEngine:
    """Intensity term over the full pixel grid with reused buffers.

    The spatial embedding of the (fixed) pixel centers is computed once;
    per call only the time column, the network passes and the warped
    lookup run.
    """

    def __init__(self, field: DeformationField, reference: ImageGrid, p_norm: int):
        self.field = field
        self.p_norm = p_norm
        self.pix = pixel_centers(reference)
        self.ref_values = reference.intensities.ravel()
        emb = fourier.embed(field.embedding, field._normalize(self.pix))
        if field.time_dependent:
            self.inputs = np.empty((len(self.pix), emb.shape[1] + 1))
            self.inputs[:, :-1] = emb
        else:
            self.inputs = emb
        self.ws = autodiff.Workspace(field.net, len(self.pix))
        self.phi = np.empty_like(self.pix)
        self.cot = np.empty((len(self.pix), field.spatial_dim))

    def loss_and_grad(self, template: ImageGrid, t_frame=None):
        if self.field.time_dependent:
            self.inputs[:, -1] = t_frame
        u = autodiff.forward_ws(self.field.net, self.inputs, self.ws)
        np.add(self.pix, u, out=self.phi)
        vals, grads = sample_batch(template, self.phi)
        resid = self.ref_values - vals
        n = len(resid)
        if self.p_norm == 2:
            loss = float(np.mean(resid * resid))
            weight = (-2.0 / n) * resid
        else:
            loss = float(np.mean(np.abs(resid)))
            weight = (-1.0 / n) * np.sign(resid)
        np.multiply(grads, weight[:, None], out=self.cot)
        grad = autodiff.backward_ws(self.field.net, self.inputs, self.ws, self.cot)
        return loss, grad


def similarity_loss(field: DeformationField, reference: ImageGrid,
                    template: ImageGrid, t_frame, p_norm: int):
    """Mean p-norm intensity residual over all reference pixels, with its
    parameter gradient flowing through the warped-template interpolation."""
    if reference.dims != template.dims:
        raise DimensionError("reference and template dims differ")
    engine = _PixelLossEngine(field, reference, p_norm)
    return engine.loss_and_grad(template, t_frame)


def regularizer_loss(field: DeformationField, batch: CollocationBatch,
                     lambda_inc: float, lambda_bg: float):
    """Region-split neo-Hookean penalty and its exact parameter gradient.

    Returns (scalar, gradient, diagnostics); inverted points (det F <= 0)
    contribute the clamped energy and repelling gradient and are counted
    in diagnostics["inverted"].
    """
    n_inc = len(batch.tissue_points)
    n_bg = len(batch.background_points)
    if n_inc == 0 or n_bg == 0:
        raise ValueError("collocation batch must cover both regions")
    pts = np.concatenate((batch.tissue_points, batch.background_points), axis=0)
    if field.time_dependent:
        times = np.concatenate((batch.tissue_times, batch.background_times))
    else:
        times = None
    dual = field.dual_batch(pts, times)
    F = np.swapaxes(dual.directional_derivatives, 1, 2).copy()
    idx = np.arange(field.spatial_dim)
    F[:, idx, idx] += 1.0
    lam = np.concatenate((np.full(n_inc, lambda_inc), np.full(n_bg, lambda_bg)))
    W, dWdF, inverted = neo_hookean_batch(F, lam)
    weight = np.concatenate((np.full(n_inc, 1.0 / n_inc), np.full(n_bg, 1.0 / n_bg)))
    loss = float(np.sum(W * weight))
    tangent_cot = np.swapaxes(dWdF * weight[:, None, None], 1, 2)
    grad = autodiff.backward_dual(field.net, dual, None, tangent_cot)
    return loss, grad, {"inverted": int(np.count_nonzero(inverted))}


@dataclass
class TrainResult:
    field: DeformationField
    history: np.ndarray          # columns: iteration, total, similarity, reg, inverted
    adam: AdamState
    rng_collocation: np.random.Generator
    rng_frame: np.random.Generator
    iteration: int = 0


def train(field: DeformationField, reference: ImageGrid, templates, region,
          config: TrainConfig, history_file=None, resume=None) -> TrainResult:
    """Run the registration loop; see the module docstring for one step.

    ``templates`` is the frame list (the 2D static case passes exactly
    one); in the time-dependent case frame j is matched at
    t_j = j / (n_frames - 1), so passing the reference as frame 0 anchors
    the field to the identity at t=0. ``resume`` accepts a TrainResult
    (or checkpoint state) to continue a run with its optimizer moments and
    generator states, which makes a save/load round trip bit-identical to
    an uninterrupted run. A non-finite loss aborts with NumericalAbort.
    """
    config.validate()
    templates = list(templates)
    if config.time_dependent:
        if len(templates) < 2:
            raise ConfigError("time-dependent training needs at least 2 frames")
    elif len(templates) != 1:
        raise ConfigError("static training takes exactly one template")
    if config.n_frames and config.n_frames != len(templates):
        raise ConfigError(f"config expects {config.n_frames} frames, "
                          f"got {len(templates)}")
    for t_img in templates:
        if t_img.dims != reference.dims:
            raise DimensionError("all frames must share the reference dims")

    n_frames = len(templates)
    times = (np.arange(n_frames) / (n_frames - 1)) if config.time_dependent else None
    engine = _PixelLossEngine(field, reference, config.p_norm)
    params = autodiff.net_params(field.net)
    if resume is not None:
        adam = resume.adam
        rng_col = resume.rng_collocation
        rng_frame = resume.rng_frame
        start = resume.iteration
    else:
        adam = AdamState.for_params(params, config.beta1, config.beta2, config.eps)
        rng_col = np.random.default_rng(config.collocation_seed)
        rng_frame = np.random.default_rng(config.frame_seed)
        start = 0

    domain_lo = reference.origin
    domain_hi = reference.origin + reference.extent
    history = []
    pending = []

    def flush():
        if history_file is not None and pending:
            with open(history_file, "a", encoding="utf-8") as fh:
                for row in pending:
                    fh.write("%d,%.17g,%.17g,%.17g,%d\n" % row)
            pending.clear()

    if history_file is not None and start == 0:
        with open(history_file, "w", encoding="utf-8") as fh:
            fh.write("iteration,total,similarity,regularizer,inverted\n")

    for it in range(start, start + config.iterations):
        if config.time_dependent:
            j = int(rng_frame.integers(n_frames))
            template = templates[j]
            t_frame = times[j]
        else:
            template = templates[0]
            t_frame = None
        loss_sim, grad = engine.loss_and_grad(template, t_frame)
        batch = sample_collocation(region, config.n_inc, config.n_bg,
                                   config.time_dependent, rng_col,
                                   domain_lo, domain_hi)
        loss_reg, grad_reg, diag = regularizer_loss(field, batch,
                                                    config.lambda_inc,
                                                    config.lambda_bg)
        total = loss_sim + config.mu * loss_reg
        if not math.isfinite(total):
            flush()
            raise NumericalAbort(f"non-finite loss {total} at iteration {it}",
                                 iteration=it)
        grad.add_scaled(grad_reg, config.mu)
        adam_step(adam, params, grad.flat(), config.learning_rate)
        row = (it, total, loss_sim, loss_reg, diag["inverted"])
        history.append(row)
        pending.append(row)
        if (it + 1) % config.history_every == 0:
            flush()
    flush()
    hist = np.array(history, dtype=np.float64).reshape(-1, 5)
    return TrainResult(field=field, history=hist, adam=adam,
                       rng_collocation=rng_col, rng_frame=rng_frame,
                       iteration=start + config.iterations)
