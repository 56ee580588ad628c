"""Information Plane recording, smoothing and the ideal-autoencoder reference.

A trajectory holds, for every hidden layer T and checkpoint, the input MI
I(X;T), the output MI I(T;X') and the mean per-unit activation variance.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .mi import DEFAULT_ALPHA, WidthRule, mi_from_grams, renyi_entropy, rule_gram

TRAJECTORY_SCHEMA_VERSION = 1
CSV_COLUMNS = ["iteration", "layer_id", "input_mi_bits", "output_mi_bits",
               "mean_variance", "smoothed", "logspace"]


def fmt(x):
    """Nine significant digits, the precision used in every CSV output."""
    return f"{x:.9g}"


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class IPPoint:
    layer_id: str
    iteration: int
    input_mi: float
    output_mi: float
    mean_variance: float


@dataclass
class IPTrajectory:
    layers: list
    metadata: dict = field(default_factory=dict)
    points: list = field(default_factory=list)

    @property
    def iterations(self):
        seen = []
        for p in self.points:
            if not seen or seen[-1] != p.iteration:
                seen.append(p.iteration)
        return seen

    def extend(self, checkpoint):
        self.points.extend(checkpoint)

    def series(self, layer_id, attr):
        return np.array([getattr(p, attr) for p in self.points if p.layer_id == layer_id])

    def at(self, iteration):
        return [p for p in self.points if p.iteration == iteration]

    def final(self, last=5):
        """Per-layer (input MI, output MI, variance) averaged over the last ``last`` checkpoints."""
        out = {}
        for layer in self.layers:
            out[layer] = tuple(float(np.mean(self.series(layer, a)[-last:]))
                               for a in ("input_mi", "output_mi", "mean_variance"))
        return out

    def smoothed(self, span):
        """Copy of the points with every per-layer series Hanning-smoothed."""
        iters = self.iterations
        cols = {}
        for layer in self.layers:
            cols[layer] = [smooth_hanning(self.series(layer, a), span)
                           for a in ("input_mi", "output_mi", "mean_variance")]
        pts = []
        for k, it in enumerate(iters):
            for layer in self.layers:
                i, o, v = (c[k] for c in cols[layer])
                pts.append(IPPoint(layer, it, float(i), float(o), float(v)))
        return pts

    def write_csv(self, path, span=None, n_logspace=100):
        """Raw rows (``smoothed=0``) followed by smoothed rows (``smoothed=1``).

        ``logspace=1`` marks iterations in the log-spaced plotting subset.
        """
        iters = self.iterations
        if span is None:
            span = self.metadata.get("smoothing_span_checkpoints", 1)
        if len(iters) >= 2:
            subset = set(iters[k] for k in logspace_subsample(n_logspace, len(iters)))
        else:
            subset = set(iters)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for flag, pts in ((0, self.points), (1, self.smoothed(span) if self.points else [])):
                for p in pts:
                    w.writerow([p.iteration, p.layer_id, fmt(p.input_mi), fmt(p.output_mi),
                                fmt(p.mean_variance), flag, int(p.iteration in subset)])

    def write_metadata(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_trajectory_csv(path, smoothed=False):
    flag = "1" if smoothed else "0"
    layers, points = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["smoothed"] != flag:
                continue
            if row["layer_id"] not in layers:
                layers.append(row["layer_id"])
            points.append(IPPoint(row["layer_id"], int(row["iteration"]),
                                  float(row["input_mi_bits"]), float(row["output_mi_bits"]),
                                  float(row["mean_variance"])))
    return IPTrajectory(layers, {}, points)


# -- recording ---------------------------------------------------------------

def layer_rules(layer_names, rule, gamma_overrides=None):
    """Width rule per variable: ``X``, each hidden layer, and ``Xp``."""
    gamma_overrides = gamma_overrides or {}
    names = ["X", *layer_names]
    return {name: rule.with_gamma(gamma_overrides[name]) if name in gamma_overrides else rule
            for name in names}


def mean_unit_variance(T):
    return float(np.mean(np.var(T, axis=0)))


def _checkpoint_batch(network, P, rules, alpha):
    acts = network.forward(P)
    names = network.arch.layer_names
    A, _ = rule_gram(P, rules["X"])
    h_x = renyi_entropy(A, alpha)
    B, _ = rule_gram(acts[-1], rules[names[-1]])
    h_out = renyi_entropy(B, alpha)
    rows = []
    for name, T in zip(names[:-1], acts[:-1]):
        G, _ = rule_gram(T, rules[name])
        h_t = renyi_entropy(G, alpha)
        i_in = mi_from_grams(A, G, alpha, h_x, h_t)[0]
        i_out = mi_from_grams(G, B, alpha, h_t, h_out)[0]
        rows.append((i_in, i_out, mean_unit_variance(T)))
    return rows


def record_checkpoint(network, probe_batches, rule, alpha=DEFAULT_ALPHA, gamma_overrides=None):
    """IP coordinates of every hidden layer (encoder, bottleneck, decoder), batch-averaged.

    Parameters
    ----------
    network : Autoencoder
        Snapshot to evaluate; it is only read.
    probe_batches : list of (N, d) arrays
        Held-out input batches. Each batch yields one estimate per layer and
        the returned values are plain means over batches.
    rule : WidthRule
    gamma_overrides : dict, optional
        Layer name (``"X"``, ``"E1"``, ..., ``"Z"``, ..., ``"Xp"``) to gamma.
    """
    names = network.arch.layer_names
    rules = layer_rules(names, rule, gamma_overrides)
    per_batch = []
    for b, P in enumerate(probe_batches):
        try:
            per_batch.append(_checkpoint_batch(network, P, rules, alpha))
        except (ValueError, RuntimeError) as exc:
            raise EstimatorError(f"MI estimate failed at iteration {network.iteration}, "
                                 f"probe batch {b}: {exc}") from exc
    means = np.mean(np.array(per_batch), axis=0)
    return [IPPoint(name, network.iteration, float(i), float(o), float(v))
            for name, (i, o, v) in zip(names[:-1], means)]


def input_information(probe_batches, rule, alpha=DEFAULT_ALPHA):
    """Estimate of M = I(X;X), the information available at the input, batch-averaged."""
    vals = []
    for P in probe_batches:
        A, _ = rule_gram(P, rule)
        h = renyi_entropy(A, alpha)
        vals.append(mi_from_grams(A, A, alpha, h, h)[0])
    return float(np.mean(vals))


class IPRecorder:
    """Training callback that records a checkpoint every ``cadence`` iterations."""

    def __init__(self, probe_batches, rule, alpha=DEFAULT_ALPHA, gamma_overrides=None, cadence=10):
        if cadence < 1:
            raise ValueError("cadence must be >= 1")
        self.probe_batches = probe_batches
        self.rule = rule
        self.alpha = alpha
        self.gamma_overrides = gamma_overrides
        self.cadence = cadence
        self.checkpoints = []
        self.losses = []

    def __call__(self, network):
        if network.iteration % self.cadence == 0:
            self.checkpoints.append(record_checkpoint(network, self.probe_batches, self.rule,
                                                      self.alpha, self.gamma_overrides))


# -- smoothing and subsampling ---------------------------------------------

def hanning_weights(span):
    n = np.arange(span)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (span - 1)))


def smooth_hanning(series, span=500):
    """Slide a normalized Hanning window of ``span`` samples over ``series``.

    Near the ends the window is truncated and renormalized, so the output has
    the input's length. Spans of 1 or 2 (whose Hanning window has no interior
    weight) leave the series unchanged.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot smooth an empty series")
    span = int(span)
    if span < 1:
        raise ValueError("span must be >= 1")
    if span <= 2:
        return x.copy()
    w = hanning_weights(span)
    # window index c sits on the current sample (the lower middle for even spans)
    c = (span - 1) // 2
    num = np.convolve(x, w, mode="full")[c:c + x.size]
    den = np.convolve(np.ones_like(x), w, mode="full")[c:c + x.size]
    return num / den


def logspace_subsample(n_points, total_iters):
    """Sorted unique indices on a log grid over ``[0, total_iters - 1]``.

    The first grid point (``10**0``) is mapped to index 0. Rounding creates
    duplicates at the low end, so the grid is refined until it yields at
    least ``min(n_points, total_iters)`` distinct indices.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if total_iters < 1:
        raise ValueError("total_iters must be >= 1")
    if total_iters <= 2:
        return list(range(total_iters))
    target = min(n_points, total_iters)
    top = np.log10(total_iters - 1)
    m = n_points
    while True:
        idx = np.rint(10.0 ** np.linspace(0.0, top, m)).astype(int)
        idx[0] = 0
        idx[-1] = total_iters - 1
        uniq = np.unique(idx)
        if uniq.size >= target:
            return uniq.tolist()
        m = max(m + 1, int(m * 1.25))


# -- DPI checks and the theoretical reference -----------------------------

@dataclass(frozen=True)
class Violation:
    kind: str  # "forward_dpi" or "output_spread"
    positions: tuple
    layers: tuple
    amount: float


def dpi_report(points, tol=0.1):
    """Flag forward-DPI increases between adjacent layers and any output-MI spread above ``tol``.

    ``points`` must be ordered from the input side to the output side.
    Nothing is raised: real estimates are expected to violate these slightly.
    """
    out = []
    for k in range(len(points) - 1):
        a, b = points[k], points[k + 1]
        rise = b.input_mi - a.input_mi
        if rise > tol:
            out.append(Violation("forward_dpi", (k, k + 1), (a.layer_id, b.layer_id), rise))
    if points:
        o = [p.output_mi for p in points]
        spread = max(o) - min(o)
        if spread > tol:
            out.append(Violation("output_spread", (int(np.argmin(o)), int(np.argmax(o))),
                                 (points[int(np.argmin(o))].layer_id, points[int(np.argmax(o))].layer_id),
                                 spread))
    return out


def layer_roles(n_encoder_hidden):
    enc = [f"encoder_hidden_{i}" for i in range(1, n_encoder_hidden + 1)]
    dec = [f"decoder_hidden_{i}" for i in range(1, n_encoder_hidden + 1)]
    return enc + ["bottleneck"] + dec + ["output"]


@dataclass(frozen=True)
class TheoreticalIP:
    M: float
    lam: float
    layer_roles: tuple = tuple(layer_roles(3))

    def __post_init__(self):
        if self.M < 0 or self.lam < 0:
            raise ValueError("M and lambda must be non-negative")
        object.__setattr__(self, "layer_roles", tuple(self.layer_roles))


@dataclass(frozen=True)
class LayerTarget:
    """Converged IP location of one layer; the input MI is an interval.

    ``ordered`` marks encoder layers whose input MIs must also be
    non-increasing toward the bottleneck.
    """

    role: str
    input_mi_low: float
    input_mi_high: float
    output_mi: float
    ordered: bool = False

    def contains(self, input_mi, output_mi, tol=1e-9):
        return (self.input_mi_low - tol <= input_mi <= self.input_mi_high + tol
                and abs(output_mi - self.output_mi) <= tol)


def theoretical_convergence(t):
    """Where an ideal autoencoder's layers end up in the IP.

    With enough bottleneck capacity (``lam > M``) every layer reaches
    ``(M, M)``. Otherwise the bottleneck and decoder layers reach
    ``(lam, lam)``, while encoder layers keep an input MI somewhere in
    ``[lam, M]`` (non-increasing toward the bottleneck) and output MI ``lam``.
    """
    if t.lam == t.M:
        raise ValueError("boundary case undefined: lambda == M")
    targets = []
    if t.lam > t.M:
        for role in t.layer_roles:
            targets.append(LayerTarget(role, t.M, t.M, t.M))
        return targets
    for role in t.layer_roles:
        if role.startswith("encoder_hidden"):
            targets.append(LayerTarget(role, t.lam, t.M, t.lam, ordered=True))
        else:
            targets.append(LayerTarget(role, t.lam, t.lam, t.lam))
    return targets


def representative_points(targets, iteration=0):
    """One concrete IP point per target that satisfies every constraint.

    Encoder input MIs descend linearly from the top of their interval toward
    the bottleneck value.
    """
    enc = [k for k, tg in enumerate(targets) if tg.ordered]
    pts = []
    for k, tg in enumerate(targets):
        if tg.ordered:
            frac = (enc.index(k) + 1) / (len(enc) + 1)
            x = tg.input_mi_high - frac * (tg.input_mi_high - tg.input_mi_low)
        else:
            x = tg.input_mi_low
        pts.append(IPPoint(tg.role, iteration, x, tg.output_mi, 0.0))
    return pts


def feasible_region_check(point, M, tol=1e-9):
    """True iff ``(x, y)`` lies in the triangle (0,0), (M,0), (M,M)."""
    x, y = point
    return -tol <= y <= x + tol and x <= M + tol


def feasibility_report(points, M, slack=0.5):
    """Points falling outside the feasible triangle by more than ``slack`` bits."""
    return [p for p in points
            if not feasible_region_check((p.input_mi, p.output_mi), M, tol=slack)]


def check_targets(targets, points, tol=1e-9):
    """Do measured/final points satisfy the theoretical targets (including ordering)?"""
    ok = all(tg.contains(p.input_mi, p.output_mi, tol) for tg, p in zip(targets, points))
    enc = [p.input_mi for tg, p in zip(targets, points) if tg.ordered]
    bott = [p.input_mi for tg, p in zip(targets, points) if tg.role == "bottleneck"]
    chain = enc + bott
    return ok and all(a >= b - tol for a, b in zip(chain, chain[1:]))


# -- bottleneck sweep summaries -------------------------------------------

def knee_estimate(final_by_k, encoder_layers, threshold=0.3):
    """Smallest K whose encoder chain (incl. bottleneck) input-MI gap is below ``threshold``."""
    for K in sorted(final_by_k):
        vals = [final_by_k[K][layer][0] for layer in encoder_layers]
        if max(vals) - min(vals) < threshold:
            return K
    return None


def output_mi_monotone(final_by_k, tol=0.2):
    """Pairs of consecutive Ks where the layer-averaged final output MI drops by more than ``tol``."""
    ks = sorted(final_by_k)
    avg = {K: float(np.mean([v[1] for v in final_by_k[K].values()])) for K in ks}
    return [(a, b) for a, b in zip(ks, ks[1:]) if avg[b] < avg[a] - tol]
