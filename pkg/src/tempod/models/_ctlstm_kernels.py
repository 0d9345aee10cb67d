"""Numba kernels for the continuous-time LSTM intensity model.

Shared layout conventions (see :mod:`tempod.models.ctlstm` for the
public wrapper):

* The seven gate blocks are stacked along the first axis in the fixed
  order [input, output, forget, limit-input, limit-forget, candidate,
  decay], so the combined recurrent matrix has shape (7*D, D) and a
  preactivation vector has shape (7*D,).
* A sequence with N input events has N+1 intervals.  Interval j covers
  (t_{j-1}, t_j] and decays from anchor t_{j-1}; interval 0 starts at
  the span begin with the rest state (c = cbar = 0, delta = 1,
  o = 0.5) and interval N runs to the span end.  State arrays have
  N+1 rows, row j holding the interval-j state.
* Eval points carry the index of the interval containing them; an eval
  point at an event time belongs to the interval ending there, which
  gives the left-limit intensity.
"""

from __future__ import annotations

import numpy as np
from numba import njit

N_GATES = 7


@njit(cache=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _softplus(x):
    if x > 0.0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@njit(cache=True)
def seq_states(t_begin, times, marks, proj, whc, d):
    """Run the event recurrence and return the interval states.

    proj holds the input-side preactivation per mark (Wx @ emb + b), so
    the per-event work is one recurrent matvec plus elementwise gates.
    Returns (status, bad_event, c, cbar, delta, ogate, hev, cdec,
    tanhcd, eev, act, sig6); status 1 flags a non-finite state and
    bad_event names the offending input event.
    """
    n = times.shape[0]
    g7 = N_GATES * d
    c = np.zeros((n + 1, d))
    cbar = np.zeros((n + 1, d))
    delta = np.ones((n + 1, d))
    ogate = np.full((n + 1, d), 0.5)
    hev = np.zeros((n, d))
    cdec = np.zeros((n, d))
    tanhcd = np.zeros((n, d))
    eev = np.zeros((n, d))
    act = np.zeros((n, g7))
    sig6 = np.zeros((n, d))
    status = 0
    bad = -1
    prev_t = t_begin
    for e in range(n):
        dt = times[e] - prev_t
        for k in range(d):
            ee = np.exp(-delta[e, k] * dt)
            eev[e, k] = ee
            cd = cbar[e, k] + (c[e, k] - cbar[e, k]) * ee
            cdec[e, k] = cd
            th = np.tanh(cd)
            tanhcd[e, k] = th
            hev[e, k] = ogate[e, k] * th
        a = proj[marks[e]] + np.dot(whc, hev[e])
        for k in range(d):
            act[e, k] = _sigmoid(a[k])
            act[e, d + k] = _sigmoid(a[d + k])
            act[e, 2 * d + k] = _sigmoid(a[2 * d + k])
            act[e, 3 * d + k] = _sigmoid(a[3 * d + k])
            act[e, 4 * d + k] = _sigmoid(a[4 * d + k])
            act[e, 5 * d + k] = np.tanh(a[5 * d + k])
            sig6[e, k] = _sigmoid(a[6 * d + k])
            act[e, 6 * d + k] = _softplus(a[6 * d + k])
        for k in range(d):
            cn = act[e, 2 * d + k] * cdec[e, k] + act[e, k] * act[e, 5 * d + k]
            cbn = act[e, 4 * d + k] * cbar[e, k] + act[e, 3 * d + k] * act[e, 5 * d + k]
            if not (np.isfinite(cn) and np.isfinite(cbn)):
                status = 1
                bad = e
            c[e + 1, k] = cn
            cbar[e + 1, k] = cbn
            delta[e + 1, k] = act[e, 6 * d + k]
            ogate[e + 1, k] = act[e, d + k]
        if status != 0:
            break
        prev_t = times[e]
    return status, bad, c, cbar, delta, ogate, hev, cdec, tanhcd, eev, act, sig6


@njit(cache=True)
def eval_lambda(t_begin, times, ts, ivs, c, cbar, delta, ogate, w_out, s):
    """Intensity at arbitrary times given precomputed interval states.

    ivs[q] is the interval containing ts[q].  Also returns the
    preactivation and the decay / tanh caches the backward pass needs.
    """
    m = ts.shape[0]
    d = w_out.shape[0]
    lam = np.zeros(m)
    xpre = np.zeros(m)
    eu = np.zeros((m, d))
    tcu = np.zeros((m, d))
    for q in range(m):
        j = ivs[q]
        anchor = t_begin if j == 0 else times[j - 1]
        dtq = ts[q] - anchor
        x = 0.0
        for k in range(d):
            ee = np.exp(-delta[j, k] * dtq)
            cu = cbar[j, k] + (c[j, k] - cbar[j, k]) * ee
            th = np.tanh(cu)
            eu[q, k] = ee
            tcu[q, k] = th
            x += w_out[k] * ogate[j, k] * th
        xpre[q] = x
        lam[q] = s * _softplus(x / s)
    return lam, xpre, eu, tcu


@njit(cache=True)
def seq_ll_grad(t_begin, times, marks, ev_pos, mc_t, mc_iv, mc_w,
                emb, wxc, whc, bc, w_out, s):
    """Log-likelihood of one sequence and its gradient.

    ll = sum of log lambda at the target positions ev_pos minus the
    Monte-Carlo integral sum(mc_w * lambda(mc_t)).  Returns (status,
    bad_event, ll, gemb, gwxc, gwhc, gbc, gw_out, gs); gs is the
    partial with respect to the scale s itself, the caller applies the
    softplus chain to its raw parameter.

    Event terms are differentiated through log lambda directly, which
    stays finite when lambda underflows.
    """
    d = w_out.shape[0]
    g7 = N_GATES * d
    nm = emb.shape[0]
    n = times.shape[0]
    p = ev_pos.shape[0]
    nmc = mc_t.shape[0]

    gemb = np.zeros((nm, d))
    gwxc = np.zeros((g7, d))
    gwhc = np.zeros((g7, d))
    gbc = np.zeros(g7)
    gw = np.zeros(d)
    gs = 0.0

    proj = np.zeros((nm, g7))
    for mk in range(nm):
        proj[mk] = np.dot(wxc, emb[mk]) + bc

    status, bad, c, cbar, delta, ogate, hev, cdec, tanhcd, eev, act, sig6 = \
        seq_states(t_begin, times, marks, proj, whc, d)
    if status != 0:
        return status, bad, 0.0, gemb, gwxc, gwhc, gbc, gw, gs

    ac = np.zeros((n + 1, d))
    acb = np.zeros((n + 1, d))
    ad = np.zeros((n + 1, d))
    ao = np.zeros((n + 1, d))

    ll = 0.0

    # Event terms: lambda at a target reuses the event's own decayed
    # state, so no extra forward work is needed.
    for q in range(p):
        e = ev_pos[q]
        x = 0.0
        for k in range(d):
            x += w_out[k] * hev[e, k]
        u = x / s
        sg = _sigmoid(u)
        sp = _softplus(u)
        if sp > 0.0:
            ll += np.log(s) + np.log(sp)
            dx = sg / (s * sp)
            ds = (sp - u * sg) / (s * sp)
        else:
            # softplus underflow: log lambda ~ log s + u
            ll += np.log(s) + u
            dx = 1.0 / s
            ds = (1.0 - u) / s
        gs += ds
        anchor = t_begin if e == 0 else times[e - 1]
        dte = times[e] - anchor
        for k in range(d):
            gw[k] += dx * hev[e, k]
            dh = dx * w_out[k]
            th = tanhcd[e, k]
            ao[e, k] += dh * th
            dcu = dh * ogate[e, k] * (1.0 - th * th)
            ee = eev[e, k]
            ac[e, k] += dcu * ee
            acb[e, k] += dcu * (1.0 - ee)
            ad[e, k] += dcu * (c[e, k] - cbar[e, k]) * (-dte * ee)

    # Monte-Carlo integral terms, weight -mc_w[q].
    lam_mc, x_mc, eu, tcu = eval_lambda(t_begin, times, mc_t, mc_iv,
                                        c, cbar, delta, ogate, w_out, s)
    for q in range(nmc):
        w = mc_w[q]
        ll -= w * lam_mc[q]
        j = mc_iv[q]
        u = x_mc[q] / s
        sg = _sigmoid(u)
        sp = _softplus(u)
        dx = -w * sg
        gs += -w * (sp - u * sg)
        anchor = t_begin if j == 0 else times[j - 1]
        dtq = mc_t[q] - anchor
        for k in range(d):
            th = tcu[q, k]
            gw[k] += dx * ogate[j, k] * th
            dh = dx * w_out[k]
            ao[j, k] += dh * th
            dcu = dh * ogate[j, k] * (1.0 - th * th)
            ee = eu[q, k]
            ac[j, k] += dcu * ee
            acb[j, k] += dcu * (1.0 - ee)
            ad[j, k] += dcu * (c[j, k] - cbar[j, k]) * (-dtq * ee)

    # Reverse sweep over events.  Processing event e consumes the
    # interval e+1 adjoints and pushes into interval e; interval 0 is
    # the constant rest state and its buffer is discarded.
    darows = np.zeros((n, g7))
    dc_dec = np.zeros(d)
    for e in range(n - 1, -1, -1):
        j = e + 1
        for k in range(d):
            dcn = ac[j, k]
            dcbn = acb[j, k]
            ii = act[e, k]
            oo = act[e, d + k]
            ff = act[e, 2 * d + k]
            ib = act[e, 3 * d + k]
            fb = act[e, 4 * d + k]
            zz = act[e, 5 * d + k]
            darows[e, k] = (dcn * zz) * ii * (1.0 - ii)
            darows[e, d + k] = ao[j, k] * oo * (1.0 - oo)
            darows[e, 2 * d + k] = (dcn * cdec[e, k]) * ff * (1.0 - ff)
            darows[e, 3 * d + k] = (dcbn * zz) * ib * (1.0 - ib)
            darows[e, 4 * d + k] = (dcbn * cbar[e, k]) * fb * (1.0 - fb)
            dz = dcn * ii + dcbn * ib
            darows[e, 5 * d + k] = dz * (1.0 - zz * zz)
            darows[e, 6 * d + k] = ad[j, k] * sig6[e, k]
            acb[e, k] += dcbn * fb
            dc_dec[k] = dcn * ff
        dh_prev = np.dot(darows[e], whc)
        anchor = t_begin if e == 0 else times[e - 1]
        dte = times[e] - anchor
        for k in range(d):
            th = tanhcd[e, k]
            ao[e, k] += dh_prev[k] * th
            dcu = dh_prev[k] * ogate[e, k] * (1.0 - th * th) + dc_dec[k]
            ee = eev[e, k]
            ac[e, k] += dcu * ee
            acb[e, k] += dcu * (1.0 - ee)
            ad[e, k] += dcu * (c[e, k] - cbar[e, k]) * (-dte * ee)

    # Weight gradients batched after the sweep: one gemm for the
    # recurrent matrix, rank-per-mark updates for the input side.
    if n > 0:
        gwhc += np.dot(np.ascontiguousarray(darows.T), hev)
        msum = np.zeros((nm, g7))
        for e in range(n):
            msum[marks[e]] += darows[e]
        for mk in range(nm):
            gemb[mk] += np.dot(msum[mk], wxc)
            for r in range(g7):
                gbc[r] += msum[mk, r]
                v = msum[mk, r]
                if v != 0.0:
                    for k in range(d):
                        gwxc[r, k] += v * emb[mk, k]
    return 0, -1, ll, gemb, gwxc, gwhc, gbc, gw, gs
