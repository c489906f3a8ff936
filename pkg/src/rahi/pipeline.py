"""Three-stage training, evaluation arms, ablations and time-window evaluation."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import crowd as cr
from . import fusion as fu
from . import machine as mi
from .config import RahiConfig, dump_config, parse_config
from .dataio import Dataset, PathLike
from .distributions import SeededRng
from .metrics import MetricsReport, evaluate

log = logging.getLogger(__name__)

# fixed child-stream offsets of the run seed
STREAM_SPLIT, STREAM_INIT, STREAM_TRAIN, STREAM_EVAL, STREAM_AUGMENT = 1, 2, 3, 4, 5

MINUTE, HOUR, DAY = 60, 3600, 86400
DEFAULT_SCHEDULE = (
    [m * MINUTE for m in (1, 2, 3, 4, 5, 10, 20, 30)]
    + [int(h * HOUR) for h in (1, 1.5, 2, 3, 4, 5, 12, 24)]
    + [d * DAY for d in (2, 3, 4, 7)]
)
ARMS = ("hybrid", "machine", "crowd", "machine_deterministic", "mv", "wv")


class PipelineError(RuntimeError):
    pass


@dataclass
class Split:
    train: list[str]
    valid: list[str]
    test: list[str]


def split_dataset(ds: Dataset, ratios: tuple[float, float, float], rng: SeededRng) -> Split:
    """Label-stratified random split."""
    gen = rng.generator()
    parts: tuple[list, list, list] = ([], [], [])
    for label in (0, 1):
        ids = sorted(n.id for n in ds.news if n.label == label)
        ids = [ids[k] for k in gen.permutation(len(ids))]
        n_train = int(round(ratios[0] * len(ids)))
        n_valid = int(round(ratios[1] * len(ids)))
        parts[0].extend(ids[:n_train])
        parts[1].extend(ids[n_train : n_train + n_valid])
        parts[2].extend(ids[n_train + n_valid :])
    return Split(*(sorted(p) for p in parts))


@dataclass
class TrainedModel:
    config: RahiConfig
    machine: mi.ClassifierParams
    reliab: cr.Reliabilities
    encoder: fu.FusionEncoderParams
    split: Split
    history: list[dict] = field(default_factory=list)

    def save(self, out_dir: PathLike) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savez(
            out / "model.npz",
            W1=self.machine.W1, b1=self.machine.b1, W2=self.machine.W2, b2=np.array(self.machine.b2),
            rho=self.reliab.rho,
            V_h=self.encoder.V_h, b_h=self.encoder.b_h, V_o=self.encoder.V_o, b_o=self.encoder.b_o,
        )
        meta = {"users": self.reliab.users, "split": dataclasses.asdict(self.split), "history": self.history}
        (out / "model.json").write_text(json.dumps(meta))
        (out / "model.cfg").write_text(dump_config(self.config))

    @classmethod
    def load(cls, out_dir: PathLike) -> "TrainedModel":
        out = Path(out_dir)
        with np.load(out / "model.npz") as z:
            arr = {k: z[k] for k in z.files}
        meta = json.loads((out / "model.json").read_text())
        cfg = parse_config((out / "model.cfg").read_text())
        return cls(
            cfg,
            mi.ClassifierParams(arr["W1"], arr["b1"], arr["W2"], float(arr["b2"])),
            cr.Reliabilities(meta["users"], arr["rho"]),
            fu.FusionEncoderParams(arr["V_h"], arr["b_h"], arr["V_o"], arr["b_o"]),
            Split(**meta["split"]),
            meta["history"],
        )

    @staticmethod
    def exists(out_dir: PathLike) -> bool:
        out = Path(out_dir)
        return all((out / f).is_file() for f in ("model.npz", "model.json", "model.cfg"))


class Features:
    """Hashed features for every news item, indexed by id."""

    def __init__(self, ds: Dataset, cfg: RahiConfig):
        self.index = {n.id: k for k, n in enumerate(ds.news)}
        self.X = mi.featurize_many([n.text for n in ds.news], cfg.dim, cfg.seed)

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        return self.X[[self.index[i] for i in ids]]


def _active(comments, inactive: set):
    return [c for c in comments if c.user_id not in inactive] if inactive else list(comments)


def crowd_assessments(
    ds: Dataset,
    ids: Sequence[str],
    reliab: cr.Reliabilities,
    cfg: RahiConfig,
    max_offset: Optional[int] = None,
) -> list[Optional[cr.CrowdAssessment]]:
    """Crowd assessment per news; ``None`` when no comment falls in the window."""
    out = []
    for nid in ids:
        cs = ds.comments_by_news.get(nid, [])
        if max_offset is not None:
            cs = [c for c in cs if c.time_offset_seconds <= max_offset]
        voters = _active(cs, ds.inactive_users)
        if not voters:
            out.append(None)
            continue
        out.append(cr.assess(nid, voters, reliab, cfg.eps, cfg.alpha_min, n_users=len(cs)))
    return out


def _hybrid_scores(encoder, machines, crowds, form: str) -> tuple[np.ndarray, list[fu.FusedParams]]:
    stats = fu.source_stats(machines, crowds)
    fused = fu.encode_many(encoder, stats.A, form)
    return np.array([fu.predict(f).y_hat for f in fused]), fused


def _valid_accuracy(model_parts, ds, feats, ids, cfg, rng) -> float:
    params, reliab, encoder = model_parts
    y = np.array([ds.by_id()[i].label for i in ids])
    machines = mi.mc_predict_many(params, feats.rows(ids), cfg.n_passes, cfg.dropout_rate, rng)
    scores, _ = _hybrid_scores(encoder, machines, crowd_assessments(ds, ids, reliab, cfg), cfg.fused_form)
    return float(np.mean((scores > 0.5) == (y == 1)))


def train_all(ds: Dataset, cfg: RahiConfig, split: Optional[Split] = None) -> TrainedModel:
    """Train the classifier, the user reliabilities and the fusion encoder.

    Each epoch updates the classifier on its cross-entropy, then the
    reliabilities on the crowd cross-entropy, then the encoder on pools
    drawn from fresh assessments of the training news (plus random source
    pairs so fallback and out-of-range inputs are covered). The snapshot
    with the best validation accuracy is returned; training stops after
    ``patience`` epochs without improvement.
    """
    cfg.validate()
    root = SeededRng(cfg.seed)
    split = split or split_dataset(ds, cfg.split_ratios(), root.child(STREAM_SPLIT))
    if not split.train:
        raise PipelineError("empty training split")
    labels = ds.labels
    train_labels = {i: labels[i] for i in split.train}
    y_train = np.array([labels[i] for i in split.train], dtype=float)
    feats = Features(ds, cfg)
    X_train = feats.rows(split.train)

    difficulties = cr.compute_difficulty(ds.comments_by_news, train_labels)
    reliab = cr.init_reliability(ds.comments_by_news, difficulties, train_labels, cfg.c_min, ds.inactive_users)
    active_by_news = {i: _active(ds.comments_by_news.get(i, []), ds.inactive_users) for i in split.train}
    crowd_ids = [i for i in split.train if active_by_news[i]]
    votes = cr.VoteMatrix.build(crowd_ids, active_by_news, reliab)
    y_crowd = np.array([labels[i] for i in crowd_ids], dtype=float)

    init = root.child(STREAM_INIT)
    params = mi.init_params(cfg.dim, cfg.hidden, init.child(0))
    encoder = fu.init_encoder(cfg.fusion_hidden, init.child(1))
    augment = fu.random_source_stats(cfg.fusion_augment, root.child(STREAM_AUGMENT), alpha_min=cfg.alpha_min) if cfg.fusion_augment else None

    train_rng = root.child(STREAM_TRAIN)
    best = (-1.0, None)
    history = []
    stale = 0
    for epoch in range(cfg.epochs):
        ep_rng = train_rng.child(epoch)
        params = mi.train_machine(params, X_train, y_train, 1, cfg.machine_lr, cfg.dropout_rate, ep_rng.child(0), cfg.machine_batch)
        if cfg.adjust and crowd_ids:
            reliab = cr.adjust_reliability(reliab, votes, y_crowd, cfg.crowd_steps, cfg.crowd_lr, cfg.eps)

        machines = mi.mc_predict_many(params, X_train, cfg.n_passes, cfg.dropout_rate, ep_rng.child(1))
        stats = fu.source_stats(machines, crowd_assessments(ds, split.train, reliab, cfg))
        if augment is not None:
            stats = fu.SourceStats.concat([stats, augment])
        pool_rng = ep_rng.child(2)
        encoder = fu.train_fusion(
            encoder, stats.A, lambda k: stats.pools(cfg.samples_per_side, pool_rng.child(k), cfg.delta),
            cfg.fusion_steps, cfg.fusion_lr, cfg.fused_form,
        )

        row = {
            "epoch": epoch,
            "machine_loss": mi.machine_loss_grad(params, X_train, y_train)[0],
            "crowd_loss": cr.crowd_loss_grad(votes, y_crowd, reliab.rho, cfg.eps)[0] if crowd_ids else float("nan"),
            "fusion_loss": fu.fusion_loss_grad(encoder, stats.A, stats.pools(cfg.samples_per_side, pool_rng.child(-1), cfg.delta), cfg.fused_form)[0],
        }
        if split.valid:
            acc = _valid_accuracy((params, reliab, encoder), ds, feats, split.valid, cfg, ep_rng.child(3))
        else:
            acc = float(epoch)  # no validation data: keep the latest epoch
        row["valid_accuracy"] = acc
        history.append(row)
        log.info("epoch %d %s", epoch, row)
        if acc > best[0]:
            best = (acc, (params.copy(), reliab.with_rho(reliab.rho), encoder.copy()))
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    params, reliab, encoder = best[1]
    return TrainedModel(cfg, params, reliab, encoder, split, history)


@dataclass
class ItemReport:
    news_id: str
    label: int
    machine: mi.MachineAssessment
    crowd: Optional[cr.CrowdAssessment]
    fused: fu.FusedParams
    prediction: fu.Prediction

    def as_dict(self) -> dict:
        beta = fu.crowd_beta(self.crowd)
        return {
            "news_id": self.news_id,
            "label": self.label,
            "machine_mean": self.machine.mean,
            "machine_variance": self.machine.variance,
            "crowd_available": self.crowd is not None,
            "e_crowd": None if self.crowd is None else self.crowd.e_crowd,
            "n_users": 0 if self.crowd is None else self.crowd.n_users,
            "alpha": beta.alpha,
            "beta": beta.beta,
            "form": self.fused.form,
            "mu": self.fused.mu,
            "sigma": self.fused.sigma,
            "y_hat": self.prediction.y_hat,
            "verdict": "fake" if self.prediction.label else "true",
        }


class Evaluator:
    """Scores a trained model on a fixed set of news ids.

    Machine assessments are computed once on a dedicated stream, so every
    time window and arm sees the same machine output.
    """

    def __init__(self, model: TrainedModel, ds: Dataset, ids: Sequence[str]):
        self.model = model
        self.ds = ds
        self.ids = list(ids)
        cfg = model.config
        by_id = ds.by_id()
        self.y = np.array([by_id[i].label for i in self.ids])
        feats = Features(ds, cfg)
        X = feats.rows(self.ids)
        self.machines = mi.mc_predict_many(model.machine, X, cfg.n_passes, cfg.dropout_rate, SeededRng(cfg.seed).child(STREAM_EVAL))
        self.deterministic = mi.deterministic_predict_many(model.machine, X)
        train_labels = {i: by_id[i].label for i in model.split.train}
        self.wv_weights = cr.accuracy_weights(
            {i: _active(ds.comments_by_news.get(i, []), ds.inactive_users) for i in model.split.train}, train_labels, cfg.c_min
        )

    def items(self, max_offset: Optional[int] = None) -> list[ItemReport]:
        cfg = self.model.config
        crowds = crowd_assessments(self.ds, self.ids, self.model.reliab, cfg, max_offset)
        _, fused = _hybrid_scores(self.model.encoder, self.machines, crowds, cfg.fused_form)
        return [
            ItemReport(i, int(y), m, c, f, fu.predict(f))
            for i, y, m, c, f in zip(self.ids, self.y, self.machines, crowds, fused)
        ]

    def _vote_scores(self, max_offset: Optional[int], weighted: bool) -> np.ndarray:
        cfg = self.model.config
        scores = []
        for nid in self.ids:
            cs = self.ds.comments_by_news.get(nid, [])
            if max_offset is not None:
                cs = [c for c in cs if c.time_offset_seconds <= max_offset]
            cs = _active(cs, self.ds.inactive_users)
            if not cs:
                scores.append(0.5)
                continue
            verdict = cr.weighted_vote(cs, self.wv_weights) if weighted else cr.majority_vote(cs)
            # ties resolve through the tie rule; 1.0/0.0 keep AUC rank-consistent with the verdict
            scores.append(float(cr.resolve(verdict, cfg.tie_rule)))
        return np.array(scores)

    def scores(self, max_offset: Optional[int] = None) -> dict[str, np.ndarray]:
        items = self.items(max_offset)
        return {
            "hybrid": np.clip([it.prediction.y_hat for it in items], 0.0, 1.0),
            "machine": np.array([m.mean for m in self.machines]),
            "crowd": np.array([0.5 if it.crowd is None else it.crowd.e_crowd for it in items]),
            "machine_deterministic": self.deterministic,
            "mv": self._vote_scores(max_offset, weighted=False),
            "wv": self._vote_scores(max_offset, weighted=True),
        }

    def reports(self, max_offset: Optional[int] = None, arms: Sequence[str] = ARMS) -> dict[str, MetricsReport]:
        mode = self.model.config.metric_mode
        s = self.scores(max_offset)
        return {arm: evaluate(self.y, s[arm], mode) for arm in arms}


def evaluate_model(model: TrainedModel, ds: Dataset, ids: Optional[Sequence[str]] = None, arms: Sequence[str] = ARMS) -> dict[str, MetricsReport]:
    return Evaluator(model, ds, model.split.test if ids is None else ids).reports(None, arms)


def ablate(ds: Dataset, cfg: RahiConfig, model: Optional[TrainedModel] = None) -> dict[str, MetricsReport]:
    """Test-split reports for the full model, single-source arms and the no-adjustment variant."""
    model = model or train_all(ds, cfg)
    reports = evaluate_model(model, ds)
    no_adjust = train_all(ds, dataclasses.replace(cfg, adjust=False), model.split)
    table = {
        "hybrid": reports["hybrid"],
        "machine-only": reports["machine"],
        "crowd-only": reports["crowd"],
        "no-adjustment": evaluate_model(no_adjust, ds, arms=("hybrid",))["hybrid"],
        "machine-deterministic": reports["machine_deterministic"],
        "mv": reports["mv"],
        "wv": reports["wv"],
    }
    return table


def dynamic_eval(
    model: TrainedModel,
    ds: Dataset,
    schedule: Sequence[int] = DEFAULT_SCHEDULE,
    ids: Optional[Sequence[str]] = None,
    arms: Sequence[str] = ("hybrid", "machine", "crowd"),
) -> list[tuple[int, dict[str, MetricsReport]]]:
    """Re-score the crowd using only comments posted within each threshold."""
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")
    ev = Evaluator(model, ds, model.split.test if ids is None else ids)
    return [(t, ev.reports(t, arms)) for t in schedule]
