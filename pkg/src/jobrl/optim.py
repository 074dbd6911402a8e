from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qnet import QNetworkParams


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def optimizer_step(params: QNetworkParams, grads: QNetworkParams, state: AdamWState, lr=1e-3,
                   weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
    """One AdamW update (decoupled weight decay); returns ``(params, state)``.

    The decay term uses the pre-update parameters, as in the original
    decoupled-decay formulation::

        theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
    """
    b1, b2 = betas
    t = state.step + 1
    flat_p, flat_g = params.flat(), grads.flat()
    m_new, v_new, out = {}, {}, {}
    for k, p in flat_p.items():
        g = flat_g[k]
        m = b1 * state.m.get(k, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(k, np.zeros_like(p)) + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        out[k] = p - lr * weight_decay * p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[k], v_new[k] = m, v
    new_params = QNetworkParams.from_flat(out, params.conflict_msg_dir, params._slope())
    return new_params, AdamWState(m_new, v_new, t)


def soft_update(target: QNetworkParams, online: QNetworkParams, tau):
    """``tau * online + (1 - tau) * target`` block by block."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [0, 1]")
    return target.map(lambda t, o: tau * o + (1.0 - tau) * t, online)
