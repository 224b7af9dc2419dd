"""Shared fixtures-as-functions for the test modules."""
import numpy as np

from gmr.body import BodySkeleton
from gmr.datagen import GeneratorSpec, generate, sample_specs, window
from gmr.objective import LossWeights
from gmr.tape import Tape
from gmr.trainer import loss_graph, prepare, stack_batch


def small_windows(length=5, count=4, seed=0, stride=3, duration=1.0):
    skel = BodySkeleton.default()
    out = []
    for i, spec in enumerate(sample_specs(count, seed, duration=duration)):
        out += window(generate(spec, skel, source_id=i), length, stride)
    return out


def loss_values(params, batch, ori_loss="chordal", weights=LossWeights()):
    tape = Tape()
    pv = {k: tape.const(v) for k, v in params.items()}
    parts = loss_graph(tape, pv, params.config, batch, ori_loss, weights)
    return {k: float(v.value) for k, v in parts.items()}


def analytic_grads(params, batch, term, ori_loss="chordal", weights=LossWeights()):
    tape = Tape()
    pv = {k: tape.param(v) for k, v in params.items()}
    parts = loss_graph(tape, pv, params.config, batch, ori_loss, weights)
    tape.backward(parts[term])
    return {k: np.zeros_like(v.value) if v.grad is None else v.grad for k, v in pv.items()}


def gradient_errors(params, batch, terms, ori_loss="chordal", eps=1e-5, entries=None, seed=0):
    """Per-tensor ``|g_analytic - g_fd| / |g_fd|`` over all (or ``entries`` sampled) entries.

    ``terms`` is one loss name or a tuple of them; every finite-difference
    evaluation yields all terms at once. Returns ``{term: {tensor: err}}``
    for a tuple and ``{tensor: err}`` for a single name.
    """
    single = isinstance(terms, str)
    terms = (terms,) if single else tuple(terms)
    grads = {t: analytic_grads(params, batch, t, ori_loss) for t in terms}
    rng = np.random.default_rng(seed)
    errs = {t: {} for t in terms}
    for name, value in params.items():
        flat = value.reshape(-1)
        idx = np.arange(flat.size)
        if entries is not None and flat.size > entries:
            idx = rng.choice(flat.size, entries, replace=False)
        num = {t: np.empty(idx.size) for t in terms}
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + eps
            fp = loss_values(params, batch, ori_loss)
            flat[k] = orig - eps
            fm = loss_values(params, batch, ori_loss)
            flat[k] = orig
            for t in terms:
                num[t][j] = (fp[t] - fm[t]) / (2 * eps)
        for t in terms:
            ana = grads[t][name].reshape(-1)[idx]
            scale = np.linalg.norm(num[t])
            diff = np.linalg.norm(ana - num[t])
            errs[t][name] = float(diff / scale) if scale > 1e-10 else float(diff)
    return errs[terms[0]] if single else errs


def batch_of(samples, skel=None):
    skel = skel or BodySkeleton.default()
    return stack_batch([prepare(s, skel) for s in samples])
