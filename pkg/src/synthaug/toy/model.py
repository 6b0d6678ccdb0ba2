"""Domain-conditioned linear generator and its trainers.

The model predicts a feature vector as::

    y_hat = W phi(x) + E_spk[s] + P e_d

``W phi(x)`` is the linguistic path, ``E_spk`` the per-speaker acoustic
offset and ``P e_d`` the domain embedding pushed through a fixed map
``P: R^d_emb -> R^D``. The real domain is the reference level (``e_real``
is pinned at zero), so only ``e_synthetic`` is learned; this keeps the
speaker offset identifiable when a plan contains a single domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .._seeding import rng_for
from ..composer import CompositionPlan
from ..errors import ConfigError, DivergenceDetected, UnknownSpeaker
from ..manifest import Domain, Utterance
from .world import ToyWorld


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int | None = 32  # None -> full batch
    epochs: int = 600
    momentum: float = 0.8
    seed: int = 0
    d_emb: int = 64
    map_seed: int = 0
    # fine-tuning values used for the real generator, kept for reference only
    reference_learning_rate: float = 1e-5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.d_emb < 1:
            raise ConfigError("learning_rate, epochs and d_emb must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def domain_map(feature_dim: int, d_emb: int, seed: int = 0) -> np.ndarray:
    """Fixed random map R^d_emb -> R^D with orthonormal columns (or rows when d_emb > D)."""
    rng = rng_for(seed, "domain-map", feature_dim, d_emb)
    if d_emb <= feature_dim:
        q, _ = np.linalg.qr(rng.standard_normal((feature_dim, d_emb)))
        return q
    q, _ = np.linalg.qr(rng.standard_normal((d_emb, feature_dim)))
    return q.T.copy()


@dataclass
class TrainingData:
    """Rendered rows of a plan; ``counts`` holds each row's multiplicity."""

    phi: np.ndarray        # N x K
    y: np.ndarray          # N x D
    synthetic: np.ndarray  # N, bool
    speaker: np.ndarray    # N, index into ``speakers``
    counts: np.ndarray     # N, positive int
    speakers: tuple[str, ...]
    ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.counts)

    def expanded(self) -> "TrainingData":
        idx = np.repeat(np.arange(len(self)), self.counts)
        return TrainingData(self.phi[idx], self.y[idx], self.synthetic[idx], self.speaker[idx],
                            np.ones(len(idx), dtype=int), self.speakers,
                            tuple(self.ids[i] for i in idx) if self.ids else ())


def build_training_data(plan: CompositionPlan, world: ToyWorld, utterances: Mapping[str, Utterance]) -> TrainingData:
    rows = [utterances[e.utterance_id] for e in plan.entries]
    speakers = tuple(sorted({u.speaker_id for u in rows}))
    index = {s: i for i, s in enumerate(speakers)}
    K, D = world.text_dim, world.feature_dim
    return TrainingData(
        phi=np.array([world.phi(u.text) for u in rows]).reshape(len(rows), K),
        y=np.array([world.resolve(u) for u in rows]).reshape(len(rows), D),
        synthetic=np.array([e.domain_label is Domain.SYNTHETIC for e in plan.entries], dtype=bool),
        speaker=np.array([index[u.speaker_id] for u in rows], dtype=int),
        counts=np.array([e.multiplicity for e in plan.entries], dtype=int),
        speakers=speakers,
        ids=tuple(e.utterance_id for e in plan.entries),
    )


@dataclass
class ToyModel:
    W: np.ndarray                 # D x K
    E_spk: np.ndarray             # S x D
    e_syn: np.ndarray             # d_emb
    P: np.ndarray                 # D x d_emb, fixed
    speakers: tuple[str, ...]
    dc_enabled: bool
    loss_history: list[float] = field(default_factory=list)

    @property
    def E_dom(self) -> dict[Domain, np.ndarray]:
        return {Domain.REAL: np.zeros_like(self.e_syn), Domain.SYNTHETIC: self.e_syn.copy()}

    def domain_offset(self, domain: Domain) -> np.ndarray:
        if not self.dc_enabled or domain is Domain.REAL:
            return np.zeros(self.P.shape[0])
        return self.P @ self.e_syn

    def speaker_offset(self, speaker: str | None = None) -> np.ndarray:
        if speaker is None:
            if len(self.speakers) != 1:
                raise UnknownSpeaker("model has several speakers; name one")
            return self.E_spk[0]
        try:
            return self.E_spk[self.speakers.index(speaker)]
        except ValueError:
            raise UnknownSpeaker(f"speaker {speaker!r} was not in the training plan") from None

    def predict(self, data: TrainingData) -> np.ndarray:
        out = data.phi @ self.W.T + self.E_spk[data.speaker]
        if self.dc_enabled:
            out = out + np.outer(data.synthetic, self.P @ self.e_syn)
        return out

    def params(self) -> dict[str, np.ndarray]:
        blocks = {"W": self.W, "E_spk": self.E_spk}
        if self.dc_enabled:
            blocks["e_syn"] = self.e_syn
        return blocks

    def flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.params().values()])

    def copy(self) -> "ToyModel":
        return ToyModel(self.W.copy(), self.E_spk.copy(), self.e_syn.copy(), self.P, self.speakers,
                        self.dc_enabled, list(self.loss_history))

    def to_arrays(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            prefix + "W": self.W,
            prefix + "E_spk": self.E_spk,
            prefix + "e_syn": self.e_syn,
            prefix + "dc_enabled": np.array(self.dc_enabled),
            prefix + "speakers": np.array(self.speakers),
            prefix + "loss_history": np.array(self.loss_history),
        }

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], P: np.ndarray, prefix: str = "") -> "ToyModel":
        return cls(
            W=np.array(arrays[prefix + "W"]),
            E_spk=np.array(arrays[prefix + "E_spk"]),
            e_syn=np.array(arrays[prefix + "e_syn"]),
            P=P,
            speakers=tuple(str(s) for s in arrays[prefix + "speakers"]),
            dc_enabled=bool(arrays[prefix + "dc_enabled"]),
            loss_history=[float(v) for v in arrays[prefix + "loss_history"]],
        )


def init_model(data: TrainingData, feature_dim: int, text_dim: int, cfg: TrainConfig, dc_enabled: bool) -> ToyModel:
    return ToyModel(
        W=np.zeros((feature_dim, text_dim)),
        E_spk=np.zeros((len(data.speakers), feature_dim)),
        e_syn=np.zeros(cfg.d_emb),
        P=domain_map(feature_dim, cfg.d_emb, cfg.map_seed),
        speakers=data.speakers,
        dc_enabled=dc_enabled,
    )


def loss_and_grads(model: ToyModel, data: TrainingData) -> tuple[float, dict[str, np.ndarray]]:
    """Half mean squared residual norm over rows (rows weighted by ``counts``)."""
    w = data.counts.astype(float)
    total = w.sum()
    resid = model.predict(data) - data.y
    wr = resid * (w / total)[:, None]
    loss = 0.5 * float(np.sum(w * np.sum(resid * resid, axis=1)) / total)
    grads = {"W": wr.T @ data.phi, "E_spk": np.zeros_like(model.E_spk)}
    np.add.at(grads["E_spk"], data.speaker, wr)
    if model.dc_enabled:
        grads["e_syn"] = model.P.T @ wr[data.synthetic].sum(axis=0)
    return loss, grads


def _onehot(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(idx), n))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def fit(data: TrainingData, feature_dim: int, text_dim: int, cfg: TrainConfig, dc_enabled: bool) -> ToyModel:
    """Minibatch gradient descent with heavy-ball momentum from a zero start.

    Rows are physically repeated according to their multiplicity, so a plan
    entry with multiplicity m trains exactly like m adjacent copies.
    """
    model = init_model(data, feature_dim, text_dim, cfg, dc_enabled)
    x = data.expanded()
    n = len(x)
    if n == 0:
        raise ConfigError("empty training plan")
    phi, y, onehot = x.phi, x.y, _onehot(x.speaker, len(data.speakers))
    syn = x.synthetic.astype(float)
    P = model.P
    W, E, e = model.W, model.E_spk, model.e_syn
    vW, vE, ve = np.zeros_like(W), np.zeros_like(E), np.zeros_like(e)
    lr, beta = cfg.learning_rate, cfg.momentum
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    rng = rng_for(cfg.seed, "train-order")

    def full_loss() -> float:
        pred = phi @ W.T + onehot @ E
        if dc_enabled:
            pred += np.outer(syn, P @ e)
        r = pred - y
        return 0.5 * float(np.einsum("ij,ij->", r, r)) / n

    history = [full_loss()]
    initial = history[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            b = order[start:start + bs]
            pb, ob = phi[b], onehot[b]
            r = pb @ W.T + ob @ E - y[b]
            if dc_enabled:
                sb = syn[b]
                r += np.outer(sb, P @ e)
            r /= len(b)
            vW *= beta
            vW += r.T @ pb
            vE *= beta
            vE += ob.T @ r
            W -= lr * vW
            E -= lr * vE
            if dc_enabled:
                ve *= beta
                ve += P.T @ (sb @ r)
                e -= lr * ve
        loss = full_loss()
        history.append(loss)
        if not np.isfinite(loss) or loss > 10 * max(initial, 1e-300):
            raise DivergenceDetected(f"loss {loss:.4g} exceeded 10x the initial {initial:.4g}")
    model.loss_history = history
    return model


def train_model(plan: CompositionPlan, world: ToyWorld, cfg: TrainConfig,
                utterances: Mapping[str, Utterance]) -> ToyModel:
    data = build_training_data(plan, world, utterances)
    return fit(data, world.feature_dim, world.text_dim, cfg, plan.dc_enabled)


def solve_closed_form(data: TrainingData, feature_dim: int, text_dim: int, cfg: TrainConfig,
                      dc_enabled: bool) -> ToyModel:
    """Minimum-norm weighted least squares over the stacked per-dimension equations.

    Unknowns are ``vec(W)`` (column-major), ``E_spk`` row by row, and
    ``e_syn`` when DC is on. Each row contributes D equations with weight
    ``sqrt(count)``.
    """
    D, K, S = feature_dim, text_dim, len(data.speakers)
    P = domain_map(D, cfg.d_emb, cfg.map_seed)
    n_w, n_e = D * K, S * D
    n_cols = n_w + n_e + (cfg.d_emb if dc_enabled else 0)
    eye = np.eye(D)
    blocks, rhs = [], []
    for i in range(len(data)):
        row = np.zeros((D, n_cols))
        row[:, :n_w] = np.kron(data.phi[i][None, :], eye)
        s = data.speaker[i]
        row[:, n_w + s * D:n_w + (s + 1) * D] = eye
        if dc_enabled and data.synthetic[i]:
            row[:, n_w + n_e:] = P
        w = np.sqrt(data.counts[i])
        blocks.append(w * row)
        rhs.append(w * data.y[i])
    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    theta, *_ = np.linalg.lstsq(A, b, rcond=1e-12)
    W = theta[:n_w].reshape(K, D).T
    E = theta[n_w:n_w + n_e].reshape(S, D)
    e = theta[n_w + n_e:] if dc_enabled else np.zeros(cfg.d_emb)
    return ToyModel(W, E, e, P, data.speakers, dc_enabled)


def closed_form_solution(plan: CompositionPlan, world: ToyWorld, cfg: TrainConfig,
                         utterances: Mapping[str, Utterance]) -> ToyModel:
    data = build_training_data(plan, world, utterances)
    return solve_closed_form(data, world.feature_dim, world.text_dim, cfg, plan.dc_enabled)


def infer(model: ToyModel, text_phi: np.ndarray, domain: Domain = Domain.REAL, speaker: str | None = None) -> np.ndarray:
    """Generate a feature vector from text features, conditioned on ``domain``."""
    return model.W @ text_phi + model.speaker_offset(speaker) + model.domain_offset(domain)


def infer_text(model: ToyModel, world: ToyWorld, text: str, domain: Domain = Domain.REAL,
               speaker: str | None = None) -> np.ndarray:
    return infer(model, world.phi(text), domain, speaker)


def _set_flat(model: ToyModel, flat: np.ndarray) -> None:
    pos = 0
    for block in model.params().values():
        block.ravel()[:] = flat[pos:pos + block.size]
        pos += block.size


def grad_check(model: ToyModel, batch: TrainingData, eps: float = 1e-5) -> float:
    """Largest normwise relative error between analytic and central-difference gradients.

    The error of each parameter block is ``|g_a - g_n| / max(|g_a| + |g_n|, 1e-12)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    probe = model.copy()
    _, analytic = loss_and_grads(probe, batch)
    base = probe.flat().copy()
    numeric_flat = np.empty_like(base)
    for j in range(base.size):
        shifted = base.copy()
        shifted[j] += eps
        _set_flat(probe, shifted)
        up, _ = loss_and_grads(probe, batch)
        shifted[j] -= 2 * eps
        _set_flat(probe, shifted)
        down, _ = loss_and_grads(probe, batch)
        numeric_flat[j] = (up - down) / (2 * eps)
    _set_flat(probe, base)
    worst, pos = 0.0, 0
    for name, block in probe.params().items():
        g_a = analytic[name].ravel()
        g_n = numeric_flat[pos:pos + block.size]
        pos += block.size
        denom = max(np.linalg.norm(g_a) + np.linalg.norm(g_n), 1e-12)
        worst = max(worst, float(np.linalg.norm(g_a - g_n) / denom))
    return worst
