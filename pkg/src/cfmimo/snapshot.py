"""JSON snapshots of drops and per-pair statistics.

Complex arrays are stored as nested lists of [re, im] pairs so snapshots
can be replayed or checked from any language.  A snapshot captures the
network drop, the full per-pair correlation data, and optionally the
pilot-phase estimation statistics.
"""

import json

import numpy as np

from .channel import EstimationStatistics
from .scenario import NetworkDrop, PairSet

FORMAT = "cfmimo-snapshot-v1"


def _encode(arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


def _decode(data, complex_valued):
    arr = np.asarray(data, dtype=float)
    if complex_valued:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr


def save_snapshot(path, drop, pairs, est=None):
    doc = {
        "format": FORMAT,
        "drop": {
            "ap_positions": _encode(drop.ap_positions),
            "ue_positions": _encode(drop.ue_positions),
            "area_side": drop.area_side,
        },
        "pairs": {
            "beta": _encode(pairs.beta),
            "u_r": _encode(pairs.u_r),
            "u_t": _encode(pairs.u_t),
            "omega": _encode(pairs.omega),
            "r_full": _encode(pairs.r_full),
            "factor": _encode(pairs.factor),
        },
    }
    if est is not None:
        doc["estimation"] = {
            "psi": _encode(est.psi),
            "r_hat": _encode(est.r_hat),
            "c": _encode(est.c),
            "w_est": _encode(est.w_est),
            "tau_p": est.tau_p,
            "sigma2": est.sigma2,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_snapshot(path):
    """Returns (drop, pairs, est-or-None)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} file: {path}")
    drop = NetworkDrop(
        ap_positions=_decode(doc["drop"]["ap_positions"], False),
        ue_positions=_decode(doc["drop"]["ue_positions"], False),
        area_side=float(doc["drop"]["area_side"]),
    )
    p = doc["pairs"]
    pairs = PairSet(
        beta=_decode(p["beta"], False),
        u_r=_decode(p["u_r"], True),
        u_t=_decode(p["u_t"], True),
        omega=_decode(p["omega"], False),
        r_full=_decode(p["r_full"], True),
        factor=_decode(p["factor"], True),
    )
    est = None
    if "estimation" in doc:
        e = doc["estimation"]
        est = EstimationStatistics(
            psi=_decode(e["psi"], True),
            r_hat=_decode(e["r_hat"], True),
            c=_decode(e["c"], True),
            w_est=_decode(e["w_est"], True),
            tau_p=int(e["tau_p"]),
            sigma2=float(e["sigma2"]),
        )
    return drop, pairs, est
