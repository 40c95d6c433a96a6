"""Denoisers p(X_0 | X_t): a permutation-equivariant neural model and an
oracle test double that knows the true X_0.

A denoiser predicts, for the latent X_t,

* a keep probability per point of X_t (is the point in X_0 ∩ X_t?),
* a categorical distribution over the number of thinned points |X_0 \\ X_t|,
* a diagonal-Gaussian mixture from which those thinned points are drawn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as np_logsumexp

from .core import LabeledState, PointSet
from .nn import autograd as ag
from .nn.layers import MLP, Linear, SetEncoder, sinusoidal_embed
from .nn.optim import ParameterStore

VAR_FLOOR = 1e-4
# initial component variance (normalized units) before training
INIT_VAR = 0.05
# inference batches are split so that batch * heads * n^2 stays below this
ATTN_BUDGET = 2**24
PROB_EPS = 1e-7
MAX_RESAMPLE = 16
LOG_2PI = float(np.log(2.0 * np.pi))


class CountOverflow(ValueError):
    """More thinned points than the count head can represent."""


@dataclass
class DenoiserOutput:
    keep_prob: np.ndarray
    count_logits: np.ndarray
    mix_weights: np.ndarray
    mix_means: np.ndarray
    mix_vars: np.ndarray

    @property
    def n_max(self) -> int:
        return len(self.count_logits) - 1

    def count_probs(self) -> np.ndarray:
        z = self.count_logits - np.max(self.count_logits)
        p = np.exp(z)
        return p / p.sum()


@dataclass
class Reconstruction:
    """A draw of X̃_0 built from X_t.

    ``x0`` lists the kept rows of X_t first (in X_t order), then the newly
    generated points; ``kept`` flags which rows of X_t were kept.
    """

    x0: PointSet
    kept: np.ndarray

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())


def mixture_log_prob(output: DenoiserOutput, x) -> np.ndarray:
    """log sum_k w_k N(x; mu_k, diag(var_k)) for one point or an (m, d) array."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    var = output.mix_vars
    with np.errstate(divide="ignore"):
        logw = np.log(output.mix_weights)
    diff = x[:, None, :] - output.mix_means[None]
    comp = -0.5 * np.sum(LOG_2PI + np.log(var)[None] + diff**2 / var[None], axis=-1)
    out = np_logsumexp(comp + logw[None], axis=1)
    return float(out[0]) if single else out


def sample_mixture(output: DenoiserOutput, m: int, lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` points from the mixture, resampling out-of-box draws up to
    16 times and clamping whatever is still outside."""
    d = output.mix_means.shape[1]
    if m == 0:
        return np.zeros((0, d))
    comps = rng.choice(len(output.mix_weights), size=m, p=output.mix_weights)
    mu, sd = output.mix_means[comps], np.sqrt(output.mix_vars[comps])
    pts = mu + sd * rng.standard_normal((m, d))
    for _ in range(MAX_RESAMPLE):
        bad = np.flatnonzero(np.any((pts < lower) | (pts > upper), axis=1))
        if len(bad) == 0:
            break
        pts[bad] = mu[bad] + sd[bad] * rng.standard_normal((len(bad), d))
    return np.clip(pts, lower, upper)


def sample_from_output(output: DenoiserOutput, X_t: PointSet, rng: np.random.Generator) -> Reconstruction:
    """Keep each x in X_t with its keep probability, then add m ~ count
    distribution points drawn from the mixture."""
    n = len(X_t)
    if len(output.keep_prob) != n:
        raise ValueError("keep_prob length does not match |X_t|")
    kept = rng.random(n) < output.keep_prob
    m = int(rng.choice(len(output.count_logits), p=output.count_probs()))
    dom = X_t.domain
    new = sample_mixture(output, m, dom.lo, dom.hi, rng)
    x0 = PointSet(np.concatenate([X_t.points[kept], new]), dom)
    return Reconstruction(x0, kept)


def _points(x) -> PointSet:
    return x.points if isinstance(x, LabeledState) else x


class NeuralDenoiser:
    """Transformer-encoded set denoiser.

    Each token is a point's coordinates concatenated with sinusoidal
    embeddings of n = |X_t| and t. The encoder output is mean-pooled; the
    classifier sees (token, pooled, emb_n, emb_t) per point, while the count
    and mixture heads see (pooled, emb_n, emb_t).
    """

    def __init__(
        self,
        dim: int,
        n_max: int,
        T: int,
        d_model: int = 32,
        heads: int = 4,
        depth: int = 2,
        components: int = 16,
        d_ff: int = 64,
        seed: int = 0,
        zero_init_heads: bool = True,
    ):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        self.hyper = dict(dim=dim, n_max=n_max, T=T, d_model=d_model, heads=heads, depth=depth,
                          components=components, d_ff=d_ff, seed=seed, zero_init_heads=zero_init_heads)
        self.dim, self.n_max, self.T = dim, n_max, T
        self.d_model, self.K, self.heads = d_model, components, heads
        K = components
        rng = np.random.default_rng(seed)
        self.store = ParameterStore()
        s, D, z = self.store, d_model, zero_init_heads
        self.embed = Linear(s, "embed", dim + 2 * D, D, rng)
        self.encoder = SetEncoder(s, "encoder", D, heads, depth, d_ff, rng)
        self.classifier = MLP(s, "classifier", [4 * D, D, D, 1], rng, zero_last=z)
        self.mixture_head = MLP(s, "mixture", [3 * D, D, components * (1 + 2 * dim)], rng, zero_last=z)
        self.count_head = MLP(s, "count", [3 * D, D, n_max + 1], rng, zero_last=z)
        # With a zeroed last layer all components would be identical and get
        # identical gradients forever. Spread the mean biases over the box and
        # start the variances at INIT_VAR; weight logits stay zero (uniform).
        last = self.mixture_head.layers[-1].bias
        last.data[K : K + K * dim] = rng.uniform(-1.0, 1.0, size=K * dim)
        last.data[K + K * dim :] = np.log(np.expm1(INIT_VAR - VAR_FLOOR))

    # network
    def forward(self, sets, t) -> dict:
        """Run the network on a list of (n_i, d) arrays at steps ``t``."""
        B, d, D, K = len(sets), self.dim, self.d_model, self.K
        n = np.array([len(x) for x in sets])
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,))
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"t must lie in [0, {self.T}]")
        N = max(1, int(n.max()) if B else 1)
        X = np.zeros((B, N, d))
        valid = np.zeros((B, N), dtype=bool)
        for i, x in enumerate(sets):
            X[i, : n[i]] = x
            valid[i, : n[i]] = True
        emb_n = sinusoidal_embed(n, D)
        emb_t = sinusoidal_embed(t, D)
        tok = np.concatenate(
            [X, np.broadcast_to(emb_n[:, None], (B, N, D)), np.broadcast_to(emb_t[:, None], (B, N, D))], axis=-1
        )
        h = self.encoder(self.embed(tok), valid)
        vm = valid[..., None].astype(np.float64)
        pooled = ag.tsum(h * vm, axis=1) * (1.0 / np.maximum(n, 1))[:, None]
        ctx = ag.concat([pooled, emb_n, emb_t], axis=-1)
        per_point = ag.concat([h, ag.broadcast_to(ag.reshape(ctx, (B, 1, 3 * D)), (B, N, 3 * D))], axis=-1)
        keep_logits = ag.reshape(self.classifier(per_point), (B, N))
        mix = self.mixture_head(ctx)
        logw = ag.log_softmax(mix[:, :K], axis=-1)
        means = ag.reshape(mix[:, K : K + K * d], (B, K, d))
        var = ag.softplus(ag.reshape(mix[:, K + K * d :], (B, K, d))) + VAR_FLOOR
        return dict(n=n, valid=valid, keep_logits=keep_logits, count_logits=self.count_head(ctx),
                    logw=logw, means=means, var=var)

    def predict_batch(self, sets, t) -> list:
        sets = [_points(x).points if not isinstance(x, np.ndarray) else x for x in sets]
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (len(sets),))
        outs = []
        for lo, hi in self._chunks([len(x) for x in sets]):
            with ag.no_grad():
                out = self.forward(sets[lo:hi], t[lo:hi])
            keep = ag._sigmoid(out["keep_logits"].data)
            w = np.exp(out["logw"].data)
            w = w / w.sum(axis=-1, keepdims=True)
            outs.extend(
                DenoiserOutput(
                    keep_prob=keep[i, : out["n"][i]].copy(),
                    count_logits=out["count_logits"].data[i].copy(),
                    mix_weights=w[i],
                    mix_means=out["means"].data[i].copy(),
                    mix_vars=out["var"].data[i].copy(),
                )
                for i in range(hi - lo)
            )
        return outs

    def _chunks(self, sizes):
        """Consecutive index ranges whose padded attention tensors stay under ATTN_BUDGET entries."""
        lo, widest = 0, 0
        for i, n in enumerate(sizes):
            w = max(widest, n, 1)
            if i > lo and (i - lo + 1) * self.heads * w * w > ATTN_BUDGET:
                yield lo, i
                lo, w = i, max(n, 1)
            widest = w
        if lo < len(sizes):
            yield lo, len(sizes)

    def predict(self, X_t, t: int) -> DenoiserOutput:
        return self.predict_batch([X_t], t)[0]

    def reconstruct(self, sets, t: int, rng: np.random.Generator) -> list:
        sets = [_points(x) for x in sets]
        outs = self.predict_batch(sets, t)
        return [sample_from_output(o, x, rng) for o, x in zip(outs, sets)]

    # training objective
    def batch_loss(self, X0s, states) -> tuple:
        """Mean over the batch of BCE(keep) + CE(count) + mixture NLL.

        Returns (total Tensor, mean BCE, mean count-CE + NLL).
        """
        B, d = len(states), self.dim
        xt, labels, missing = [], [], []
        for X0, s in zip(X0s, states):
            xt.append(s.points.points)
            labels.append(np.r_[np.ones(len(s.retained)), np.zeros(len(s.noise))])
            thinned = np.ones(len(X0), dtype=bool)
            thinned[s.source_idx] = False
            missing.append(X0.points[thinned])
        m = np.array([len(x) for x in missing])
        if m.max(initial=0) > self.n_max:
            raise CountOverflow(
                f"{m.max()} thinned points exceed n_max={self.n_max}; rebuild the model with a larger n_max"
            )
        out = self.forward(xt, [s.t for s in states])
        valid = out["valid"]
        y = np.zeros(valid.shape)
        for i, lab in enumerate(labels):
            y[i, : len(lab)] = lab
        z = out["keep_logits"]
        bce = ag.tsum((ag.softplus(z) - z * y) * valid, axis=1)

        onehot = np.zeros((B, self.n_max + 1))
        onehot[np.arange(B), m] = 1.0
        cl = out["count_logits"]
        count_ce = ag.logsumexp(cl, axis=-1) - ag.tsum(cl * onehot, axis=-1)

        M = max(1, int(m.max(initial=0)))
        Y = np.zeros((B, M, d))
        ymask = np.zeros((B, M))
        for i, x in enumerate(missing):
            Y[i, : len(x)] = x
            ymask[i, : len(x)] = 1.0
        means, var = out["means"], out["var"]
        diff = ag.reshape(means, (B, 1, self.K, d)) * -1.0 + Y[:, :, None, :]
        var4 = ag.reshape(var, (B, 1, self.K, d))
        comp = ag.tsum(ag.log(var4) + diff * diff / var4, axis=-1) * -0.5 - 0.5 * d * LOG_2PI
        lmix = ag.logsumexp(comp + ag.reshape(out["logw"], (B, 1, self.K)), axis=-1)
        nll = ag.tsum(lmix * ymask, axis=1) * -1.0

        total = ag.mean(bce + count_ce + nll)
        return total, float(bce.data.mean()), float((count_ce.data + nll.data).mean())

    # persistence
    def to_dict(self) -> dict:
        return {"kind": "neural", "hyper": self.hyper, "params": self.store.state_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralDenoiser":
        model = cls(**d["hyper"])
        model.store.load_state_dict(d["params"])
        return model


class OracleDenoiser:
    """Test double for p(X̃_0 | X_t) = δ_{X_0}.

    Points of X_t are recognised as data points by exact coordinate lookup,
    since the sampling chain hands over unlabeled latents.
    """

    def __init__(self, X0: PointSet):
        self.X0 = X0
        self._index = {tuple(p): i for i, p in enumerate(X0.points.tolist())}

    def _split(self, x):
        if isinstance(x, LabeledState):
            for p in x.retained.points.tolist():
                if tuple(p) not in self._index:
                    raise ValueError("retained points are not a subset of X0")
            x = x.points
        hits = [self._index.get(tuple(p), -1) for p in x.points.tolist()]
        hits = np.array(hits, dtype=np.int64).reshape(-1)
        kept = hits >= 0
        present = np.zeros(len(self.X0), dtype=bool)
        present[hits[kept]] = True
        return x, kept, np.flatnonzero(~present)

    def predict(self, X_t, t: int = None) -> DenoiserOutput:
        _, kept, missing = self._split(X_t)
        m, d = len(missing), self.X0.domain.dim
        n_max = max(len(self.X0), 1)
        logits = np.full(n_max + 1, -np.inf)
        logits[m] = 0.0
        if m:
            means = self.X0.points[missing]
            w = np.full(m, 1.0 / m)
        else:
            means, w = np.zeros((1, d)), np.ones(1)
        return DenoiserOutput(kept.astype(np.float64), logits, w, means.copy(), np.full(means.shape, VAR_FLOOR))

    def predict_batch(self, sets, t) -> list:
        return [self.predict(x, t) for x in sets]

    def reconstruct(self, sets, t: int, rng=None) -> list:
        recs = []
        for x in sets:
            pts, kept, missing = self._split(x)
            x0 = PointSet(np.concatenate([pts.points[kept], self.X0.points[missing]]), pts.domain)
            recs.append(Reconstruction(x0, kept))
        return recs


def oracle_denoiser(X0: PointSet) -> OracleDenoiser:
    return OracleDenoiser(X0)


def predict(model, X_t, t: int) -> DenoiserOutput:
    return model.predict(X_t, t)


def sample_x0_hat(model, X_t, t: int, rng: np.random.Generator) -> PointSet:
    """Draw X̃_0 = (X̃_0 \\ X_t) ∪ X̃_t^thin from the denoiser."""
    return model.reconstruct([X_t], t, rng)[0].x0


def output_loss(output: DenoiserOutput, X0: PointSet, state: LabeledState) -> tuple:
    """Loss of a fixed prediction; probabilities clamped to [1e-7, 1 - 1e-7]."""
    n_ret = len(state.retained)
    y = np.r_[np.ones(n_ret), np.zeros(len(state.noise))]
    p = np.clip(output.keep_prob, PROB_EPS, 1.0 - PROB_EPS)
    if len(p) != len(y):
        raise ValueError("keep_prob length does not match |X_t|")
    bce = float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    thinned = np.ones(len(X0), dtype=bool)
    thinned[state.source_idx] = False
    m = int(thinned.sum())
    if m > output.n_max:
        raise CountOverflow(f"{m} thinned points exceed n_max={output.n_max}")
    lp = output.count_logits - np_logsumexp(output.count_logits)
    nll = float(-lp[m] - np.sum(mixture_log_prob(output, X0.points[thinned]))) if m else float(-lp[m])
    return bce + nll, {"bce": bce, "nll": nll}


def loss(model, X0: PointSet, state: LabeledState) -> tuple:
    """Training loss for one example: (total, {"bce": ..., "nll": ...})."""
    if isinstance(model, NeuralDenoiser):
        total, bce, nll = model.batch_loss([X0], [state])
        return float(total.data), {"bce": bce, "nll": nll}
    return output_loss(model.predict(state, state.t), X0, state)
