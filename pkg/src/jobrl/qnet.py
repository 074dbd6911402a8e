"""Graph-attention Q-network over job-allocation graphs.

The network stacks context-aware embedding (CAE) modules.  Each module runs
one attention layer over the person/job selection graph and another over the
job conflict graph, then merges the two job streams symmetrically::

    merged = (f(a, b) + f(b, a)) / 2,   f(x, y) = 1 + lam * FC([x | y])

Between modules, rows are layer-normalised and passed through GELU.  The Q
value of a selection edge ``(p, j)`` is the dot product of the final person
and job embeddings.

Everything is float64 numpy.  Several graphs can be evaluated in one pass as
a disjoint union (:class:`GraphBatch`); every operation is row- or
neighbourhood-local, so this gives the same numbers as one graph at a time.
Gradients are computed by an explicit reverse pass over a tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import erf

from ._rng import make_rng
from .graph import JobAllocationGraph

LEAKY_SLOPE = 0.2
LN_EPS = 1e-5
DEFAULT_DIMS = (2, 16, 16, 8)
MSG_IN = "in"
MSG_OUT = "out"


class DimensionMismatch(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass
class AttentionLayerParams:
    W: np.ndarray
    attn: np.ndarray
    leaky_slope: float = LEAKY_SLOPE

    @property
    def d_in(self):
        return self.W.shape[0]

    @property
    def d_out(self):
        return self.W.shape[1]


@dataclass
class MergerParams:
    fc_W: np.ndarray
    fc_b: np.ndarray
    lam: np.ndarray  # 0-d


@dataclass
class CaeModuleParams:
    selection_attn: AttentionLayerParams
    conflict_attn: AttentionLayerParams
    merger: MergerParams
    norm_scale: np.ndarray | None = None
    norm_shift: np.ndarray | None = None

    @property
    def has_norm(self):
        return self.norm_scale is not None


@dataclass
class QNetworkParams:
    modules: list = field(default_factory=list)
    conflict_msg_dir: str = MSG_IN

    @property
    def dims(self):
        if not self.modules:
            return ()
        return (self.modules[0].selection_attn.d_in,) + tuple(m.selection_attn.d_out for m in self.modules)

    def flat(self):
        """Name -> array mapping; the arrays are the live parameter blocks."""
        out = {}
        for i, m in enumerate(self.modules):
            pre = f"cae{i}."
            out[pre + "sel.W"] = m.selection_attn.W
            out[pre + "sel.attn"] = m.selection_attn.attn
            out[pre + "conf.W"] = m.conflict_attn.W
            out[pre + "conf.attn"] = m.conflict_attn.attn
            out[pre + "fc.W"] = m.merger.fc_W
            out[pre + "fc.b"] = m.merger.fc_b
            out[pre + "lam"] = m.merger.lam
            if m.has_norm:
                out[pre + "norm.scale"] = m.norm_scale
                out[pre + "norm.shift"] = m.norm_shift
        return out

    @classmethod
    def from_flat(cls, flat, conflict_msg_dir=MSG_IN, leaky_slope=LEAKY_SLOPE):
        modules = []
        i = 0
        while f"cae{i}.sel.W" in flat:
            pre = f"cae{i}."
            g = lambda k: np.array(flat[pre + k], dtype=np.float64)  # noqa: E731
            modules.append(CaeModuleParams(
                AttentionLayerParams(g("sel.W"), g("sel.attn"), leaky_slope),
                AttentionLayerParams(g("conf.W"), g("conf.attn"), leaky_slope),
                MergerParams(g("fc.W"), g("fc.b"), g("lam").reshape(())),
                g("norm.scale") if pre + "norm.scale" in flat else None,
                g("norm.shift") if pre + "norm.shift" in flat else None,
            ))
            i += 1
        return cls(modules, conflict_msg_dir)

    def copy(self):
        return self.from_flat(self.flat(), self.conflict_msg_dir, self._slope())

    def map(self, fn, *others):
        """New params whose blocks are ``fn(block, *other_blocks)``."""
        flats = [o.flat() for o in others]
        new = {k: fn(v, *(f[k] for f in flats)) for k, v in self.flat().items()}
        return self.from_flat(new, self.conflict_msg_dir, self._slope())

    def zeros_like(self):
        return self.map(np.zeros_like)

    def _slope(self):
        return self.modules[0].selection_attn.leaky_slope if self.modules else LEAKY_SLOPE

    def allclose(self, other, **kw):
        a, b = self.flat(), other.flat()
        return a.keys() == b.keys() and all(np.allclose(a[k], b[k], **kw) for k in a)

    def array_equal(self, other):
        a, b = self.flat(), other.flat()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(seed=0, dims=DEFAULT_DIMS, conflict_msg_dir=MSG_IN, leaky_slope=LEAKY_SLOPE):
    """Glorot-uniform weights, zero biases, lam = 0, unit norm scale, zero shift."""
    if conflict_msg_dir not in (MSG_IN, MSG_OUT):
        raise ValueError(f"conflict_msg_dir must be 'in' or 'out', got {conflict_msg_dir!r}")
    rng = make_rng(seed)
    modules = []
    n_mod = len(dims) - 1
    for i in range(n_mod):
        d_in, d_out = dims[i], dims[i + 1]

        def layer():
            return AttentionLayerParams(
                _glorot(rng, d_in, d_out, (d_in, d_out)),
                _glorot(rng, 2 * d_out, 1, (2 * d_out,)),
                leaky_slope,
            )

        sel, conf = layer(), layer()
        merger = MergerParams(_glorot(rng, 2 * d_out, d_out, (2 * d_out, d_out)), np.zeros(d_out), np.array(0.0))
        last = i == n_mod - 1
        modules.append(CaeModuleParams(
            sel, conf, merger,
            None if last else np.ones(d_out),
            None if last else np.zeros(d_out),
        ))
    return QNetworkParams(modules, conflict_msg_dir)


class Neighborhood:
    """Attention neighbourhoods: each vertex attends to ``src`` of its incoming edges and itself.

    Edges are kept sorted by destination so segment reductions are contiguous.
    """

    def __init__(self, n, dst, src):
        self.n = int(n)
        loops = np.arange(self.n, dtype=np.int64)
        dst = np.concatenate([np.asarray(dst, dtype=np.int64), loops])
        src = np.concatenate([np.asarray(src, dtype=np.int64), loops])
        order = np.lexsort((src, dst))
        self.dst = dst[order]
        self.src = src[order]
        counts = np.bincount(self.dst, minlength=self.n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)])
        self.starts = self.indptr[:-1]
        self._pattern = None

    def matrix(self, values):
        """Sparse ``n x n`` matrix with ``values`` on the (dst, src) pattern."""
        if self._pattern is None:
            self._pattern = sp.csr_matrix((np.ones(len(self.src)), self.src, self.indptr), shape=(self.n, self.n))
        A = self._pattern.copy()
        A.data = np.asarray(values, dtype=np.float64)
        return A

    @classmethod
    def from_pairs(cls, n, pairs, undirected=False):
        """``pairs`` are ``(src, dst)`` arcs; ``undirected`` adds the reverse of each."""
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        src, dst = arr[:, 0], arr[:, 1]
        if undirected:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        return cls(n, dst, src)


def _segment_sum(values, nb):
    return np.add.reduceat(values, nb.starts, axis=0)


def attention_forward(nb: Neighborhood, H, p: AttentionLayerParams):
    """Single-head attention aggregation; returns ``(H_out, cache)``."""
    if H.ndim != 2 or H.shape[0] != nb.n or H.shape[1] != p.W.shape[0]:
        raise DimensionMismatch(f"H has shape {H.shape}, expected ({nb.n}, {p.W.shape[0]})")
    if p.attn.shape != (2 * p.W.shape[1],):
        raise DimensionMismatch(f"attn has shape {p.attn.shape}, expected ({2 * p.W.shape[1]},)")
    d = p.W.shape[1]
    a_dst, a_src = p.attn[:d], p.attn[d:]
    Z = H @ p.W
    s_dst = Z @ a_dst
    s_src = Z @ a_src
    raw = s_dst[nb.dst] + s_src[nb.src]
    slope = np.where(raw > 0, 1.0, p.leaky_slope)
    e = raw * slope
    # max-subtraction per destination keeps exp() finite
    ex = np.exp(e - np.maximum.reduceat(e, nb.starts)[nb.dst])
    alpha = ex / _segment_sum(ex, nb)[nb.dst]
    A = nb.matrix(alpha)
    out = A @ Z
    return out, (nb, H, p, Z, slope, alpha, A)


def attention_backward(cache, d_out):
    """Returns ``(dH, dW, dattn)``."""
    nb, H, p, Z, slope, alpha, A = cache
    d = p.W.shape[1]
    a_dst, a_src = p.attn[:d], p.attn[d:]
    dZ = A.T @ d_out
    d_alpha = np.einsum("ij,ij->i", d_out[nb.dst], Z[nb.src])
    d_e = alpha * (d_alpha - _segment_sum(alpha * d_alpha, nb)[nb.dst])
    d_raw = d_e * slope
    d_sdst = np.bincount(nb.dst, weights=d_raw, minlength=nb.n)
    d_ssrc = np.bincount(nb.src, weights=d_raw, minlength=nb.n)
    d_attn = np.concatenate([Z.T @ d_sdst, Z.T @ d_ssrc])
    dZ += np.outer(d_sdst, a_dst) + np.outer(d_ssrc, a_src)
    return dZ @ p.W.T, H.T @ dZ, d_attn


def merge_forward(nu0, nu1, m: MergerParams):
    """Symmetric merger of the two job streams."""
    if nu0.shape != nu1.shape or m.fc_W.shape != (2 * nu0.shape[1], nu0.shape[1]):
        raise DimensionMismatch(f"cannot merge {nu0.shape} and {nu1.shape} with FC {m.fc_W.shape}")
    d = nu0.shape[1]
    w_left, w_right = m.fc_W[:d], m.fc_W[d:]
    # FC([x | y]) = x @ W_left + y @ W_right + b
    a0, b0 = nu0 @ w_left, nu0 @ w_right
    a1, b1 = nu1 @ w_left, nu1 @ w_right
    f01 = a0 + b1 + m.fc_b
    f10 = a1 + b0 + m.fc_b
    out = 0.5 * ((1.0 + m.lam * f01) + (1.0 + m.lam * f10))
    return out, (nu0, nu1, m, f01, f10)


def merge_backward(cache, d_out):
    """Returns ``(d_nu0, d_nu1, d_fcW, d_fcb, d_lam)``."""
    nu0, nu1, m, f01, f10 = cache
    d = nu0.shape[1]
    d_f = 0.5 * m.lam * d_out
    d_lam = np.array(0.5 * np.sum(d_out * (f01 + f10)))
    both = (nu0 + nu1).T @ d_f
    d_fcW = np.vstack([both, both])
    d_fcb = 2.0 * d_f.sum(axis=0)
    d_nu = d_f @ (m.fc_W[:d] + m.fc_W[d:]).T
    return d_nu, d_nu.copy(), d_fcW, d_fcb, d_lam


def layer_norm_forward(x, scale, shift, eps=LN_EPS):
    mean = x.mean(axis=1, keepdims=True)
    centred = x - mean
    inv = 1.0 / np.sqrt((centred**2).mean(axis=1, keepdims=True) + eps)
    xhat = centred * inv
    return xhat * scale + shift, (xhat, inv, scale)


def layer_norm_backward(cache, d_out):
    xhat, inv, scale = cache
    d_xhat = d_out * scale
    dx = inv * (d_xhat - d_xhat.mean(axis=1, keepdims=True) - xhat * (d_xhat * xhat).mean(axis=1, keepdims=True))
    return dx, (d_out * xhat).sum(axis=0), d_out.sum(axis=0)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


class GraphBatch:
    """Disjoint union of graphs laid out for one network pass.

    Selection-graph vertices are all people first, then all jobs.  ``q``
    entries follow each graph's canonical selection order, graph after graph;
    ``q_slices[i]`` picks out graph ``i``.
    """

    def __init__(self, graphs, conflict_msg_dir=MSG_IN):
        graphs = list(graphs)
        self.graphs = graphs
        self.conflict_msg_dir = conflict_msg_dir
        n_p = [g.n_people for g in graphs]
        n_j = [g.n_jobs for g in graphs]
        p_off = np.concatenate([[0], np.cumsum(n_p)]).astype(np.int64)
        j_off = np.concatenate([[0], np.cumsum(n_j)]).astype(np.int64)
        self.n_people = int(p_off[-1])
        self.n_jobs = int(j_off[-1])

        feats = [g.degree_features for g in graphs]
        self.mu0 = np.vstack([f.person_features for f in feats]) if graphs else np.zeros((0, 2))
        self.nu0 = np.vstack([f.job_features for f in feats]) if graphs else np.zeros((0, 2))

        sel_p, sel_j, c_src, c_dst, sizes = [], [], [], [], []
        for g, po, jo in zip(graphs, p_off, j_off):
            s = g.selection_array
            sel_p.append(s[:, 0] + po)
            sel_j.append(s[:, 1] + jo)
            src, dst = g.conflict_arrays
            c_src.append(src + jo)
            c_dst.append(dst + jo)
            sizes.append(len(s))
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)  # noqa: E731
        self.q_person = cat(sel_p)
        self.q_job = cat(sel_j)
        c_src, c_dst = cat(c_src), cat(c_dst)

        n_sel = self.n_people + self.n_jobs
        job_nodes = self.q_job + self.n_people
        self.sel = Neighborhood(
            n_sel,
            np.concatenate([self.q_person, job_nodes]),
            np.concatenate([job_nodes, self.q_person]),
        )
        if conflict_msg_dir == MSG_IN:
            self.conf = Neighborhood(self.n_jobs, c_dst, c_src)
        elif conflict_msg_dir == MSG_OUT:
            self.conf = Neighborhood(self.n_jobs, c_src, c_dst)
        else:
            raise ValueError(f"conflict_msg_dir must be 'in' or 'out', got {conflict_msg_dir!r}")

        bounds = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.q_slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        self.q_graph = np.repeat(np.arange(len(graphs)), sizes)

    def __len__(self):
        return len(self.graphs)

    def split(self, q):
        return [q[s] for s in self.q_slices]

    def _scatter(self, idx, n):
        E = len(idx)
        return sp.csr_matrix((np.ones(E), (idx, np.arange(E))), shape=(n, E))


def _check_params(params: QNetworkParams):
    dims = params.dims
    if not dims or dims[0] != 2:
        raise DimensionMismatch(f"first module must take 2 input features, got dims {dims}")
    for m in params.modules:
        if m.conflict_attn.W.shape != m.selection_attn.W.shape:
            raise DimensionMismatch("selection and conflict layers must share dimensions")


def forward_batch(batch: GraphBatch, params: QNetworkParams, keep_tape=False):
    """Q values for every selection edge in the batch (and the tape if asked)."""
    _check_params(params)
    if batch.conflict_msg_dir != params.conflict_msg_dir:
        raise ValueError("batch and params disagree on conflict message direction")
    mu, nu = batch.mu0, batch.nu0
    n_p = batch.n_people
    tape = []
    last = len(params.modules) - 1
    for i, m in enumerate(params.modules):
        hs, c_sel = attention_forward(batch.sel, np.vstack([mu, nu]), m.selection_attn)
        hc, c_conf = attention_forward(batch.conf, nu, m.conflict_attn)
        mu_new = hs[:n_p]
        nu_new, c_merge = merge_forward(hs[n_p:], hc, m.merger)
        rec = {"sel": c_sel, "conf": c_conf, "merge": c_merge}
        if i < last:
            mu_ln, rec["ln_mu"] = layer_norm_forward(mu_new, m.norm_scale, m.norm_shift)
            nu_ln, rec["ln_nu"] = layer_norm_forward(nu_new, m.norm_scale, m.norm_shift)
            rec["gelu_mu"], rec["gelu_nu"] = mu_ln, nu_ln
            mu_new, nu_new = gelu(mu_ln), gelu(nu_ln)
        tape.append(rec)
        mu, nu = mu_new, nu_new
    q = np.einsum("ij,ij->i", mu[batch.q_person], nu[batch.q_job])
    if keep_tape:
        return q, (batch, params, tape, mu, nu)
    return q


def backward_batch(tape, cotangent):
    """Gradient of ``sum(cotangent * q)`` with respect to every parameter block."""
    batch, params, records, mu, nu = tape
    cotangent = np.asarray(cotangent, dtype=np.float64)
    if cotangent.shape != batch.q_person.shape:
        raise ShapeMismatch(f"cotangent has shape {cotangent.shape}, expected {batch.q_person.shape}")
    n_p = batch.n_people
    d_mu = batch._scatter(batch.q_person, n_p) @ (cotangent[:, None] * nu[batch.q_job])
    d_nu = batch._scatter(batch.q_job, batch.n_jobs) @ (cotangent[:, None] * mu[batch.q_person])
    d_mu, d_nu = np.asarray(d_mu), np.asarray(d_nu)

    grads = params.zeros_like()
    for m, g, rec in reversed(list(zip(params.modules, grads.modules, records))):
        if "ln_mu" in rec:
            d_mu = d_mu * gelu_grad(rec["gelu_mu"])
            d_nu = d_nu * gelu_grad(rec["gelu_nu"])
            d_mu, ds1, db1 = layer_norm_backward(rec["ln_mu"], d_mu)
            d_nu, ds2, db2 = layer_norm_backward(rec["ln_nu"], d_nu)
            g.norm_scale = ds1 + ds2
            g.norm_shift = db1 + db2
        d_nu0, d_nu1, g.merger.fc_W, g.merger.fc_b, g.merger.lam = merge_backward(rec["merge"], d_nu)
        dx_sel, g.selection_attn.W, g.selection_attn.attn = attention_backward(
            rec["sel"], np.vstack([d_mu, d_nu0])
        )
        dx_conf, g.conflict_attn.W, g.conflict_attn.attn = attention_backward(rec["conf"], d_nu1)
        d_mu = dx_sel[:n_p]
        d_nu = dx_sel[n_p:] + dx_conf
    return grads


def cae_forward(g: JobAllocationGraph, mu, nu, m: CaeModuleParams, conflict_msg_dir=MSG_IN):
    """One CAE module on a single graph (no normalisation); returns ``(mu', nu')``."""
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if mu.shape[0] != g.n_people or nu.shape[0] != g.n_jobs:
        raise DimensionMismatch(f"embeddings {mu.shape}/{nu.shape} do not match graph {g!r}")
    batch = GraphBatch([g], conflict_msg_dir)
    hs, _ = attention_forward(batch.sel, np.vstack([mu, nu]), m.selection_attn)
    hc, _ = attention_forward(batch.conf, nu, m.conflict_attn)
    merged, _ = merge_forward(hs[g.n_people:], hc, m.merger)
    return hs[: g.n_people], merged


def q_values(g: JobAllocationGraph, params: QNetworkParams):
    """Q values as an array in ``g``'s canonical selection order."""
    return forward_batch(GraphBatch([g], params.conflict_msg_dir), params)


def q_values_many(graphs, params: QNetworkParams):
    batch = GraphBatch(graphs, params.conflict_msg_dir)
    return batch.split(forward_batch(batch, params))


def q_forward(g: JobAllocationGraph, params: QNetworkParams):
    """Q values keyed by selection edge ``(person, job)``."""
    return dict(zip(g.selection, q_values(g, params).tolist()))


def q_backward(g: JobAllocationGraph, params: QNetworkParams, cotangent):
    """Gradient of ``sum(cotangent[e] * Q(e))``; ``cotangent`` is a map or an array."""
    if isinstance(cotangent, dict):
        unknown = set(cotangent) - g.selection_set
        if unknown:
            raise ShapeMismatch(f"cotangent names non-selection edges {sorted(unknown)[:3]}")
        cotangent = np.array([cotangent.get(e, 0.0) for e in g.selection])
    _, tape = forward_batch(GraphBatch([g], params.conflict_msg_dir), params, keep_tape=True)
    return backward_batch(tape, cotangent)
