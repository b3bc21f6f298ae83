"""End-to-end training: autoencoder pretraining, then joint clustering/adversarial updates."""

from __future__ import annotations

import csv
import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .adversary import AdversarySchedule, adversarial_split, discriminate, fairness_loss, grl_coeff
from .cluster import ClusterState, concat_views, kl_consensus_loss, kmeans, one_hot_consensus, soft_assign
from .data import MultiViewDataset, make_batches
from .errors import BoundsError, NonFiniteError, StructuralError
from .metrics import accuracy, balance, nmi
from .nn import AdamState, DenseNetwork, adam_step, backward, forward, mse_loss, save_checkpoint

TRACE_COLUMNS = ("epoch", "L_R", "L_C", "L_F", "coeff")
METRIC_COLUMNS = ("acc", "nmi", "bal")
VARIANTS = {
    # name: (uses L_R, uses L_F, uses L_C)
    "A": (True, False, True),
    "B": (False, True, True),
    "C": (True, True, False),
    "D": (True, True, True),
}


class TrainingError(NonFiniteError):
    def __init__(self, term, epoch=None, batch=None, view=None):
        self.term, self.epoch, self.batch, self.view = term, epoch, batch, view
        where = [f"{k} {v}" for k, v in (("epoch", epoch), ("batch", batch), ("view", view)) if v is not None]
        super().__init__(f"non-finite {term}" + (f" at {', '.join(where)}" if where else ""))


@dataclass
class TrainConfig:
    n_clusters: int = 2
    lambda_c: float = 0.1
    lambda_f: float = 0.01
    update_interval: int = 50
    epochs: int = 1000
    beta: float = 10.0
    alpha: float = 1.0
    batch_size: int = 256
    pretrain_epochs: int = 200
    lr: float = 1e-3
    disc_lr: float | None = None
    seed: int = 0
    encoder_hidden: tuple = (256, 64)
    latent_dim: int = 10
    disc_hidden: tuple = (64,)
    centroid_init: str = "kmeans"
    schedule_unit: str = "epoch"
    final_assignment: str = "kmeans"
    use_reconstruction: bool = True
    standardize: bool = True
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300
    trace_metrics: bool = False

    def __post_init__(self):
        self.encoder_hidden = tuple(int(w) for w in self.encoder_hidden)
        self.disc_hidden = tuple(int(w) for w in self.disc_hidden)
        self.validate()

    def validate(self):
        if self.n_clusters < 2:
            raise BoundsError("n_clusters must be >= 2")
        for name in ("epochs", "update_interval", "batch_size", "latent_dim", "kmeans_restarts", "kmeans_max_iter"):
            if getattr(self, name) < 1:
                raise BoundsError(f"{name} must be positive")
        if self.pretrain_epochs < 0:
            raise BoundsError("pretrain_epochs must be non-negative")
        if self.update_interval > self.epochs:
            raise BoundsError("update_interval must not exceed epochs")
        for name in ("lambda_c", "lambda_f"):
            if getattr(self, name) < 0:
                raise BoundsError(f"{name} must be non-negative")
        for name in ("beta", "alpha", "lr"):
            if not getattr(self, name) > 0:
                raise BoundsError(f"{name} must be positive")
        if self.disc_lr is not None and not self.disc_lr > 0:
            raise BoundsError("disc_lr must be positive")
        if self.centroid_init not in ("kmeans", "gaussian"):
            raise StructuralError(f"unknown centroid_init {self.centroid_init!r}")
        if self.schedule_unit not in ("epoch", "minibatch"):
            raise StructuralError(f"unknown schedule_unit {self.schedule_unit!r}")
        if self.final_assignment not in ("kmeans", "mean_q"):
            raise StructuralError(f"unknown final_assignment {self.final_assignment!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise StructuralError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainedModel:
    encoders: list[DenseNetwork]
    decoders: list[DenseNetwork]
    discriminator: DenseNetwork
    state: ClusterState
    assignments: np.ndarray
    trace: list[dict]
    config: TrainConfig
    pretrain_trace: list[float] = field(default_factory=list)
    refresh_epochs: list[int] = field(default_factory=list)
    optimizers: dict = field(default_factory=dict)

    def encode(self, dataset: MultiViewDataset):
        return encode(self.encoders, prepare(dataset, self.config))

    def save(self, path) -> None:
        nets = {f"encoder{v}": e for v, e in enumerate(self.encoders)}
        nets.update({f"decoder{v}": d for v, d in enumerate(self.decoders)})
        nets["discriminator"] = self.discriminator
        arrays = {f"centroids{v}": c for v, c in enumerate(self.state.centroids)}
        arrays["consensus"] = self.state.consensus
        arrays["assignments"] = self.assignments
        save_checkpoint(path, nets, self.optimizers, self.config.digest(), arrays)


def _stream(seed: int, name: str) -> np.random.Generator:
    # independent named streams so adding draws to one phase never shifts another
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def prepare(dataset: MultiViewDataset, config: TrainConfig) -> MultiViewDataset:
    return dataset.standardized() if config.standardize else dataset


def build_networks(dataset: MultiViewDataset, config: TrainConfig):
    """Fresh encoders, decoders and discriminator for `dataset`'s view widths."""
    rng = _stream(config.seed, "init")
    encoders, decoders = [], []
    for d in dataset.view_dims:
        widths = [d, *config.encoder_hidden, config.latent_dim]
        encoders.append(DenseNetwork.build(widths, "encoder", rng))
        decoders.append(DenseNetwork.build(widths[::-1], "decoder", rng))
    fused = config.latent_dim * dataset.n_views
    n_groups = max(dataset.n_groups, 2)
    disc = DenseNetwork.build([fused, *config.disc_hidden, n_groups], "discriminator", rng)
    return encoders, decoders, disc


def encode(encoders, dataset: MultiViewDataset):
    """Latents per view and their concatenation for an already prepared dataset."""
    zs = [forward(e, x)[0] for e, x in zip(encoders, dataset.views)]
    return zs, concat_views(zs)


def reconstruction_loss(encoders, decoders, dataset: MultiViewDataset) -> float:
    total = 0.0
    for e, dec, x in zip(encoders, decoders, dataset.views):
        total += mse_loss(dec(e(x)), x)[0]
    return total


def _adam(net_or_params, lr):
    params = net_or_params.parameters() if isinstance(net_or_params, DenseNetwork) else net_or_params
    return AdamState.zeros_like(params, lr=lr)


def pretrain(dataset: MultiViewDataset, config: TrainConfig, networks=None, prepared: bool = False):
    """Train each view's autoencoder on reconstruction alone.

    Returns ``(encoders, decoders, history)`` where ``history`` holds the
    full-data reconstruction loss before training and after every epoch.
    """
    data = dataset if prepared else prepare(dataset, config)
    encoders, decoders, _ = networks or build_networks(data, config)
    opt_e = [_adam(e, config.lr) for e in encoders]
    opt_d = [_adam(d, config.lr) for d in decoders]
    rng = _stream(config.seed, "pretrain-batches")
    bs = min(config.batch_size, data.n_instances)
    history = [reconstruction_loss(encoders, decoders, data)]
    for epoch in range(1, config.pretrain_epochs + 1):
        for b, idx in enumerate(make_batches(data.n_instances, bs, rng)):
            for v, (enc, dec, x) in enumerate(zip(encoders, decoders, data.views)):
                xb = x[idx]
                z, tape_e = forward(enc, xb)
                x_hat, tape_d = forward(dec, z)
                loss, g = mse_loss(x_hat, xb)
                if not np.isfinite(loss):
                    raise TrainingError("reconstruction loss", epoch, b, v)
                grads_d, dz = backward(dec, tape_d, g)
                grads_e, _ = backward(enc, tape_e, dz)
                dec.apply_adam(grads_d, opt_d[v], term=f"decoder {v}")
                enc.apply_adam(grads_e, opt_e[v], term=f"encoder {v}")
        history.append(reconstruction_loss(encoders, decoders, data))
    return encoders, decoders, history


def _align_labels(new, old, k):
    """Permute `new` cluster ids to maximize agreement with `old`."""
    overlap = np.zeros((k, k), dtype=np.int64)
    np.add.at(overlap, (new, old), 1)
    rows, cols = linear_sum_assignment(-overlap)
    mapping = np.empty(k, dtype=np.int64)
    mapping[rows] = cols
    return mapping[new]


def init_consensus(encoders, dataset: MultiViewDataset, k: int, seed: int, config: TrainConfig | None = None, prepared: bool = False) -> ClusterState:
    """One-hot consensus from k-means on the fused latents, plus per-view centroids."""
    config = config or TrainConfig(n_clusters=k, seed=seed)
    data = dataset if prepared else prepare(dataset, config)
    if k > data.n_instances:
        raise BoundsError(f"k={k} exceeds {data.n_instances} instances")
    zs, z = encode(encoders, data)
    result = kmeans(z, k, _stream(seed, "kmeans-init"), config.kmeans_restarts, config.kmeans_max_iter)
    consensus = one_hot_consensus(result.labels, k)
    widths = np.cumsum([0] + [zv.shape[1] for zv in zs])
    if config.centroid_init == "kmeans":
        # slices of the fused centroids, so centroid j of every view matches consensus column j
        centroids = [result.centroids[:, lo:hi].copy() for lo, hi in zip(widths[:-1], widths[1:])]
    else:
        rng = _stream(seed, "centroid-init")
        centroids = [rng.normal(zv.mean(axis=0), zv.std(axis=0) + 1e-12, size=(k, zv.shape[1])) for zv in zs]
    return ClusterState(centroids, consensus, config.alpha)


def _final_labels(zs, z, state, config):
    if config.final_assignment == "mean_q":
        q = np.mean([soft_assign(zv, mu, state.alpha) for zv, mu in zip(zs, state.centroids)], axis=0)
        return np.argmax(q, axis=1)
    return kmeans(z, config.n_clusters, _stream(config.seed, "kmeans-final"), config.kmeans_restarts, config.kmeans_max_iter).labels


def train(dataset: MultiViewDataset, config: TrainConfig) -> TrainedModel:
    """Pretrain, then alternate mini-batch minimax updates with periodic consensus refreshes."""
    config.validate()
    k = config.n_clusters
    if config.lambda_f > 0 and len(np.unique(dataset.sensitive)) < 2:
        raise StructuralError("fairness training needs at least two sensitive groups")
    if k > dataset.n_instances:
        raise BoundsError(f"n_clusters={k} exceeds {dataset.n_instances} instances")
    data = prepare(dataset, config)
    encoders, decoders, disc = build_networks(data, config)
    encoders, decoders, pre_hist = pretrain(data, config, (encoders, decoders, disc), prepared=True)
    state = init_consensus(encoders, data, k, config.seed, config, prepared=True)

    opt_e = [_adam(e, config.lr) for e in encoders]
    opt_d = [_adam(d, config.lr) for d in decoders]
    opt_mu = _adam(state.centroids, config.lr)
    opt_disc = _adam(disc, config.disc_lr or config.lr)
    batch_rng = _stream(config.seed, "train-batches")
    refresh_rng = _stream(config.seed, "kmeans-refresh")

    n = data.n_instances
    bs = min(config.batch_size, n)
    n_batches = -(-n // bs)
    total_steps = config.epochs * n_batches
    widths = np.cumsum([0] + [e.out_dim for e in encoders])
    slices = [slice(lo, hi) for lo, hi in zip(widths[:-1], widths[1:])]
    sensitive = data.sensitive
    trace, refreshes = [], []
    step = 0

    for epoch in range(1, config.epochs + 1):
        sums = np.zeros(3)
        coeff = 0.0
        for b, idx in enumerate(make_batches(n, bs, batch_rng)):
            if config.schedule_unit == "epoch":
                coeff = grl_coeff(AdversarySchedule(config.beta, config.epochs, epoch - 1))
            else:
                coeff = grl_coeff(AdversarySchedule(config.beta, total_steps, step))
            xs = [x[idx] for x in data.views]
            zs, tapes_e = zip(*(forward(e, x) for e, x in zip(encoders, xs)))
            z = concat_views(zs)

            l_r, dz_r, grads_dec = 0.0, [], []
            for v, (dec, zv, xv) in enumerate(zip(decoders, zs, xs)):
                x_hat, tape_d = forward(dec, zv)
                loss, g = mse_loss(x_hat, xv)
                l_r += loss
                if config.use_reconstruction:
                    gd, dzv = backward(dec, tape_d, g)
                    grads_dec.append(gd)
                    dz_r.append(dzv)

            l_c, dz_c, dmu = kl_consensus_loss(state.consensus[idx], zs, state.centroids, state.alpha)

            probs, tape_f = discriminate(disc, z)
            l_f, g_logits = fairness_loss(probs, sensitive[idx])
            disc_g, enc_g = adversarial_split(g_logits, coeff, config.lambda_f)
            grads_disc, _ = backward(disc, tape_f, disc_g, wrt_logits=True)
            _, dz_f = backward(disc, tape_f, enc_g, wrt_logits=True)

            for term, value in (("L_R", l_r), ("L_C", l_c), ("L_F", l_f)):
                if not np.isfinite(value):
                    raise TrainingError(term, epoch, b)
            sums += len(idx) * np.array([l_r, l_c, l_f])

            for v, enc in enumerate(encoders):
                dz = config.lambda_c * dz_c[v] + dz_f[:, slices[v]]
                if config.use_reconstruction:
                    dz = dz + dz_r[v]
                grads_e, _ = backward(enc, tapes_e[v], dz)
                enc.apply_adam(grads_e, opt_e[v], term=f"encoder {v}")
            if config.use_reconstruction:
                for v, dec in enumerate(decoders):
                    dec.apply_adam(grads_dec[v], opt_d[v], term=f"decoder {v}")
            try:
                adam_step(state.centroids, [config.lambda_c * g for g in dmu], opt_mu, term="centroids")
            except NonFiniteError as exc:
                raise TrainingError("L_C centroid gradient", epoch, b) from exc
            disc.apply_adam(grads_disc, opt_disc, term="discriminator (L_F)")
            step += 1

        row = {"epoch": epoch, "L_R": sums[0] / n, "L_C": sums[1] / n, "L_F": sums[2] / n, "coeff": coeff}
        if epoch % config.update_interval == 0:
            zs_full, z_full = encode(encoders, data)
            labels = kmeans(z_full, k, refresh_rng, config.kmeans_restarts, config.kmeans_max_iter).labels
            labels = _align_labels(labels, state.targets, k)
            state.consensus = one_hot_consensus(labels, k)
            refreshes.append(epoch)
            if config.trace_metrics and data.labels is not None:
                row.update(acc=accuracy(labels, data.labels), nmi=nmi(labels, data.labels), bal=balance(labels, sensitive))
        trace.append(row)

    zs_full, z_full = encode(encoders, data)
    assignments = _final_labels(zs_full, z_full, state, config)
    optimizers = {f"encoder{v}": o for v, o in enumerate(opt_e)}
    optimizers.update({f"decoder{v}": o for v, o in enumerate(opt_d)})
    optimizers.update(centroids=opt_mu, discriminator=opt_disc)
    return TrainedModel(encoders, decoders, disc, state, assignments, trace, config, pre_hist, refreshes, optimizers)


def ablate(dataset: MultiViewDataset, config: TrainConfig, variant: str) -> TrainedModel:
    """Train with one loss term switched off: A drops L_F, B drops L_R, C drops L_C, D keeps all."""
    if variant not in VARIANTS:
        raise StructuralError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    use_r, use_f, use_c = VARIANTS[variant]
    cfg = replace(
        config,
        use_reconstruction=config.use_reconstruction and use_r,
        lambda_f=config.lambda_f if use_f else 0.0,
        lambda_c=config.lambda_c if use_c else 0.0,
    )
    return train(dataset, cfg)


def sensitive_probe(
    z: np.ndarray,
    sensitive: np.ndarray,
    epochs: int = 200,
    seed: int = 0,
    batch_size: int = 256,
    lr: float = 1e-3,
    hidden=(64,),
    holdout: float = 0.3,
) -> float:
    """Fit a fresh discriminator on frozen latents and report how well it predicts the groups.

    A random `holdout` fraction is kept out of training and accuracy is
    measured on it; ``holdout=0`` scores the training rows themselves.
    """
    sensitive = np.asarray(sensitive)
    n_groups = max(int(sensitive.max()) + 1, 2)
    rng = _stream(seed, "probe")
    order = rng.permutation(len(z))
    n_test = int(round(holdout * len(z)))
    test, fit = (order[:n_test], order[n_test:]) if n_test > 0 else (order, order)
    disc = DenseNetwork.build([z.shape[1], *hidden, n_groups], "discriminator", rng)
    opt = _adam(disc, lr)
    bs = min(batch_size, len(fit))
    for _ in range(epochs):
        for idx in make_batches(len(fit), bs, rng):
            rows = fit[idx]
            probs, tape = forward(disc, z[rows])
            _, g = fairness_loss(probs, sensitive[rows])
            grads, _ = backward(disc, tape, g, wrt_logits=True)
            disc.apply_adam(grads, opt, term="probe")
    return float(np.mean(np.argmax(disc(z[test]), axis=1) == sensitive[test]))


def write_trace(trace: list[dict], path) -> None:
    cols = list(TRACE_COLUMNS)
    if any("acc" in r for r in trace):
        cols += list(METRIC_COLUMNS)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in trace:
            w.writerow([_fmt(r.get(c)) for c in cols])


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def read_trace(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k == "epoch" else float(v)) for k, v in r.items() if v != ""})
        return rows
