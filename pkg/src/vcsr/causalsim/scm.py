"""Exact discrete structural causal model with a front-door mediator.

Graph: C -> V, V -> P, P -> A, C -> A, Q -> A. C is the unobserved confounder,
V the video, P the causal scene (mediator), Q the question and A the answer.
Every quantity is computed by enumerating the full joint table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12
FORMAT_TAG = "DSCM"
FORMAT_VERSION = 1


class ZeroProbabilityError(ValueError):
    """Conditioning on an event of probability zero."""


@dataclass
class DiscreteSCM:
    p_c: np.ndarray            # [C]
    p_v_given_c: np.ndarray    # [C, V]
    p_p_given_v: np.ndarray    # [V, P]
    p_a_given_pcq: np.ndarray  # [P, C, Q, A]
    p_q: np.ndarray            # [Q]

    def __post_init__(self):
        for name in ("p_c", "p_v_given_c", "p_p_given_v", "p_a_given_pcq", "p_q"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.validate()

    @property
    def cards(self) -> dict[str, int]:
        P, C, Q, A = self.p_a_given_pcq.shape
        return {"C": C, "V": self.p_v_given_c.shape[1], "P": P, "A": A, "Q": Q}

    def validate(self) -> None:
        c = self.cards
        expected = {
            "p_c": (c["C"],),
            "p_v_given_c": (c["C"], c["V"]),
            "p_p_given_v": (c["V"], c["P"]),
            "p_a_given_pcq": (c["P"], c["C"], c["Q"], c["A"]),
            "p_q": (c["Q"],),
        }
        for name, shape in expected.items():
            table = getattr(self, name)
            if table.shape != shape:
                raise ValueError(f"{name} has shape {table.shape}, expected {shape}")
            if np.any(table < 0):
                raise ValueError(f"{name} has negative entries")
            if np.any(np.abs(table.sum(axis=-1) - 1.0) > ROW_TOL):
                raise ValueError(f"{name} rows do not sum to 1")

    def joint(self) -> np.ndarray:
        """P(c, v, p, q, a) as a [C, V, P, Q, A] array."""
        return np.einsum("c,cv,vp,q,pcqa->cvpqa", self.p_c, self.p_v_given_c,
                         self.p_p_given_v, self.p_q, self.p_a_given_pcq)


def _check(scm: DiscreteSCM, v: int, q: int) -> None:
    c = scm.cards
    if not (0 <= v < c["V"] and 0 <= q < c["Q"]):
        raise IndexError(f"v={v} or q={q} out of range for {c}")


def frontdoor_adjust(scm: DiscreteSCM, v: int, q: int) -> np.ndarray:
    """``sum_p P(p|v) sum_v' P(A|p, v', q) P(v')`` with every factor read off the joint."""
    _check(scm, v, q)
    joint = scm.joint().sum(axis=0)                     # [V, P, Q, A]
    p_v = joint.sum(axis=(1, 2, 3))
    p_vp = joint.sum(axis=(2, 3))
    if p_v[v] <= 0:
        raise ZeroProbabilityError(f"P(V={v}) = 0")
    p_p_given_v = p_vp[v] / p_v[v]
    p_vpq = joint[:, :, q, :].sum(axis=-1)              # [V, P]
    out = np.zeros(scm.cards["A"])
    for p in range(scm.cards["P"]):
        if p_p_given_v[p] == 0:
            continue
        inner = np.zeros_like(out)
        for v2 in range(scm.cards["V"]):
            if p_v[v2] == 0:
                continue
            if p_vpq[v2, p] <= 0:
                raise ZeroProbabilityError(f"P(P={p}, V={v2}, Q={q}) = 0; positivity fails")
            inner += joint[v2, p, q] / p_vpq[v2, p] * p_v[v2]
        out += p_p_given_v[p] * inner
    return out


def interventional_truth(scm: DiscreteSCM, v: int, q: int) -> np.ndarray:
    """P(A | do(V=v), q) from the mutilated graph (C -> V removed, V clamped to v)."""
    _check(scm, v, q)
    c = scm.cards
    clamp = np.zeros(c["V"])
    clamp[v] = 1.0
    mutilated = np.einsum("c,v,vp,q,pcqa->cvpqa", scm.p_c, clamp, scm.p_p_given_v,
                          scm.p_q, scm.p_a_given_pcq)
    cond = mutilated[:, :, :, q, :].sum(axis=(0, 1, 2))
    return cond / cond.sum()


def naive_conditional(scm: DiscreteSCM, v: int, q: int) -> np.ndarray:
    """Observational P(A | v, q)."""
    _check(scm, v, q)
    slab = scm.joint()[:, v, :, q, :].sum(axis=(0, 1))
    total = slab.sum()
    if total <= 0:
        raise ZeroProbabilityError(f"P(V={v}, Q={q}) = 0")
    return slab / total


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def max_tv(scm: DiscreteSCM, a, b) -> float:
    c = scm.cards
    return max(total_variation(a(scm, v, q), b(scm, v, q))
               for v in range(c["V"]) for q in range(c["Q"]))


DEFAULT_CARDS = {"C": 3, "V": 4, "P": 4, "A": 5, "Q": 2}


def random_scm(rng: np.random.Generator, cards: dict | None = None,
               concentration: float = 1.0) -> DiscreteSCM:
    c = dict(DEFAULT_CARDS if cards is None else cards)

    def rows(*shape):
        return rng.dirichlet(np.full(shape[-1], concentration), size=shape[:-1])

    return DiscreteSCM(
        p_c=rng.dirichlet(np.full(c["C"], concentration)),
        p_v_given_c=rows(c["C"], c["V"]),
        p_p_given_v=rows(c["V"], c["P"]),
        p_a_given_pcq=rows(c["P"], c["C"], c["Q"], c["A"]),
        p_q=rng.dirichlet(np.full(c["Q"], concentration)),
    )


def search_confounded_scm(seed: int = 0, trials: int = 400, concentration: float = 0.3,
                          min_prob: float = 1e-3) -> tuple[DiscreteSCM, float]:
    """Seeded random search for the SCM with the largest naive-vs-interventional gap."""
    rng = np.random.default_rng(seed)
    best, best_gap = None, -1.0
    for _ in range(trials):
        scm = random_scm(rng, concentration=concentration)
        # keep positivity comfortably away from zero so the front-door terms exist
        scm = _floor(scm, min_prob)
        gap = max_tv(scm, naive_conditional, interventional_truth)
        if gap > best_gap:
            best, best_gap = scm, gap
    return best, best_gap


def _floor(scm: DiscreteSCM, eps: float) -> DiscreteSCM:
    def fix(t):
        t = np.maximum(t, eps)
        return t / t.sum(axis=-1, keepdims=True)

    return DiscreteSCM(fix(scm.p_c), fix(scm.p_v_given_c), fix(scm.p_p_given_v),
                       fix(scm.p_a_given_pcq), fix(scm.p_q))


# ------------------------------------------------------------------ text format
_SECTIONS = [
    ("P(C)", "p_c"),
    ("P(Q)", "p_q"),
    ("P(V|C)", "p_v_given_c"),
    ("P(P|V)", "p_p_given_v"),
    ("P(A|P,C,Q)", "p_a_given_pcq"),
]


def dumps_scm(scm: DiscreteSCM) -> str:
    """Header line with cardinalities, then one section per table; one row per line."""
    c = scm.cards
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION} " + " ".join(f"{k}={c[k]}" for k in "CVPAQ")]
    for title, attr in _SECTIONS:
        table = getattr(scm, attr)
        lines.append(f"table {title}")
        for row in table.reshape(-1, table.shape[-1]):
            lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def loads_scm(text: str) -> DiscreteSCM:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = lines[0].split()
    if head[0] != FORMAT_TAG or int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"not a {FORMAT_TAG} v{FORMAT_VERSION} file")
    c = {k: int(v) for k, v in (tok.split("=") for tok in head[2:])}
    shapes = {
        "p_c": (c["C"],),
        "p_q": (c["Q"],),
        "p_v_given_c": (c["C"], c["V"]),
        "p_p_given_v": (c["V"], c["P"]),
        "p_a_given_pcq": (c["P"], c["C"], c["Q"], c["A"]),
    }
    tables: dict[str, list[list[float]]] = {}
    current = None
    titles = dict(_SECTIONS)
    for ln in lines[1:]:
        if ln.startswith("table "):
            title = ln[len("table "):]
            if title not in titles:
                raise ValueError(f"unknown table {title!r}")
            current = titles[title]
            tables[current] = []
        elif current is None:
            raise ValueError("row before any table header")
        else:
            tables[current].append([float(x) for x in ln.split()])
    kwargs = {name: np.array(tables[name]).reshape(shape) for name, shape in shapes.items()}
    return DiscreteSCM(**kwargs)


FIXTURE_PATH = Path(__file__).resolve().parent.parent / "data" / "confounded_fixture.scm"


def load_fixture(path: str | Path | None = None) -> DiscreteSCM:
    return loads_scm(Path(path or FIXTURE_PATH).read_text())


def write_fixture(path: str | Path | None = None, seed: int = 0, trials: int = 400) -> float:
    scm, gap = search_confounded_scm(seed, trials)
    header = (f"# confounded demo SCM: seeded search (seed={seed}, trials={trials});"
              f" max TV(naive, interventional) = {gap:.6f}\n")
    Path(path or FIXTURE_PATH).write_text(header + dumps_scm(scm))
    return gap


if __name__ == "__main__":
    print(f"fixture written, gap={write_fixture():.6f}")
