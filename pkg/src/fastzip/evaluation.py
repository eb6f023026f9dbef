"""Desk-scale evaluation: TAR/FAR, attacks, pairing time, fingerprint entropy."""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .activity import ActivityThresholds, WindowSchedule, passes
from .errors import InsufficientContext, InsufficientCorpus, NoData
from .quantizer import OUTPUT_BITS, SIMILARITY, QuantizerParams, quantize
from .signals import CHANNELS, WINDOW_SECONDS, PipelineConfig, context_streams, cut_window

REPLAY_JITTER_S = 30.0
SIMILAR_WINDOW_S = 15.0


def sensor_sets(min_size=1):
    """All non-empty modality combinations in canonical order."""
    out = []
    for k in range(min_size, len(CHANNELS) + 1):
        out.extend(itertools.combinations(CHANNELS, k))
    return out


def set_label(modalities):
    return "+".join(modalities)


@dataclass
class EvalParams:
    thresholds: ActivityThresholds = field(default_factory=ActivityThresholds)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    similarity: dict = field(default_factory=lambda: dict(SIMILARITY))
    step: float = 5.0
    use_filter: bool = True

    def qparams(self, ch):
        return QuantizerParams.default(ch)


@dataclass
class DeviceBits:
    """Per-modality sub-fingerprints of one device on a grid of window starts.

    ``bits[ch]`` is an ``(len(starts), M)`` uint8 array and ``ok[ch]`` marks
    the starts whose window existed and passed the activity filter.
    """

    device: str
    starts: np.ndarray
    bits: dict
    ok: dict

    def fused(self, modalities):
        mask = np.ones(len(self.starts), dtype=bool)
        for ch in modalities:
            mask &= self.ok[ch]
        return np.concatenate([self.bits[ch] for ch in modalities], axis=1), mask


def window_starts(duration, step, t0=0.0):
    longest = max(WINDOW_SECONDS.values())
    count = int(math.floor((duration - longest) / step + 1e-9)) + 1
    return t0 + np.arange(max(count, 0)) * step


def device_bits(device, streams, starts, params=None):
    params = params or EvalParams()
    bits, ok = {}, {}
    for ch in CHANNELS:
        q = params.qparams(ch)
        b = np.zeros((len(starts), q.output_bits), dtype=np.uint8)
        m = np.zeros(len(starts), dtype=bool)
        stream = streams.get(ch)
        if stream is not None:
            for k, t in enumerate(starts):
                w = cut_window(stream, t, params.pipeline)
                if w is None or len(w) != q.input_len:
                    continue
                if params.use_filter and not passes(w, params.thresholds)[0]:
                    continue
                b[k] = quantize(w, q)
                m[k] = True
        bits[ch], ok[ch] = b, m
    return DeviceBits(device, np.asarray(starts, dtype=float), bits, ok)


def _device_job(args):
    dev, recordings, starts, params = args
    return device_bits(dev, context_streams(recordings, params.pipeline), starts, params)


def dataset_bits(ds, params=None, starts=None, jobs=1):
    """Sub-fingerprints for every device; ``jobs > 1`` spreads devices over processes."""
    params = params or EvalParams()
    if starts is None:
        starts = window_starts(ds.duration, params.step)
    work = [(dev, ds.recordings[dev], starts, params) for dev in ds.devices]
    if jobs > 1 and len(work) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_device_job, work))
    else:
        results = [_device_job(w) for w in work]
    return {r.device: r for r in results}


def _threshold(modalities, similarity):
    total = sum(OUTPUT_BITS[m] for m in modalities)
    return sum(OUTPUT_BITS[m] * Fraction(similarity[m]) for m in modalities) / total


def accept_matrix(matches, length, thr):
    """Exact ``matches / length >= thr`` on integer arrays."""
    thr = Fraction(thr)
    return matches * thr.denominator >= thr.numerator * length


@dataclass
class Rates:
    tar: float
    far: float
    colocated: int
    non_colocated: int
    true_accepts: int
    false_accepts: int
    scenario: str = ""


@dataclass(frozen=True)
class PairingTrialResult:
    device_pair: tuple
    colocated: bool
    start_time: float
    similarity: Fraction
    accepted: bool


def pairing_trials(ds, modalities, bits, params=None):
    """Every aligned window pair where both devices produced a fingerprint."""
    params = params or EvalParams()
    thr = _threshold(modalities, params.similarity)
    for a, b in itertools.combinations(sorted(bits), 2):
        fa, ma = bits[a].fused(modalities)
        fb, mb = bits[b].fused(modalities)
        for k in np.nonzero(ma & mb)[0]:
            sim = Fraction(int(np.count_nonzero(fa[k] == fb[k])), fa.shape[1])
            yield PairingTrialResult((a, b), ds.colocated(a, b), float(bits[a].starts[k]),
                                     sim, sim >= thr)


def compute_tar_far(ds, params=None, sets=None, bits=None, thr_override=None):
    """TAR/FAR per sensor set over time-aligned windows of every device pair.

    ``thr_override`` replaces the fused threshold of every set (for
    monotonicity checks).
    """
    params = params or EvalParams()
    sets = sets or sensor_sets()
    bits = bits or dataset_bits(ds, params)
    devices = sorted(bits)
    if len(devices) < 2:
        raise NoData("need at least two devices")
    out = {}
    for mods in sets:
        thr = thr_override if thr_override is not None else _threshold(mods, params.similarity)
        counts = {True: [0, 0], False: [0, 0]}
        for a, b in itertools.combinations(devices, 2):
            fa, ma = bits[a].fused(mods)
            fb, mb = bits[b].fused(mods)
            both = ma & mb
            if not both.any():
                continue
            matches = np.count_nonzero(fa[both] == fb[both], axis=1)
            acc = accept_matrix(matches, fa.shape[1], thr)
            c = counts[ds.colocated(a, b)]
            c[0] += len(acc)
            c[1] += int(acc.sum())
        (nc, ta), (nn, fa_) = counts[True], counts[False]
        if nc + nn == 0:
            out[set_label(mods)] = Rates(math.nan, math.nan, 0, 0, 0, 0, ds.scenario)
            continue
        out[set_label(mods)] = Rates(ta / nc if nc else math.nan, fa_ / nn if nn else math.nan,
                                     nc, nn, ta, fa_, ds.scenario)
    if all(r.colocated + r.non_colocated == 0 for r in out.values()):
        raise NoData("no overlapping accepted windows")
    return out


def full_protocol_check(ds, modalities, bits, count, params=None, rng=None):
    """Run real loopback sessions on sampled window pairs.

    Returns ``(agreements, count)`` where an agreement means the session
    outcome matched the fused-threshold predicate.  The protocol's error
    budget rounds the threshold, so rare disagreements sit at the boundary.
    """
    from .fpake.session import ProtocolConfig
    from .transport.loopback import loopback_pair

    params = params or EvalParams()
    rng = rng or np.random.default_rng(0)
    trials = list(pairing_trials(ds, modalities, bits, params))
    if not trials:
        raise NoData("no aligned windows for the protocol check")
    picks = rng.choice(len(trials), min(count, len(trials)), replace=False)
    thr = _threshold(modalities, params.similarity)
    agree = 0
    for i in picks:
        tr = trials[int(i)]
        a, b = tr.device_pair
        k = int(np.searchsorted(bits[a].starts, tr.start_time))
        fa, _ = bits[a].fused(modalities)
        fb, _ = bits[b].fused(modalities)
        cfg = ProtocolConfig(fa.shape[1], thr)
        res = loopback_pair(fa[k], fb[k], cfg)
        agree += res.agreed == tr.accepted
    return agree, len(picks)


# --- attacks ------------------------------------------------------------------

ATTACKS = ("injection", "replay", "similar_context")
ALIGNMENTS = ("unsynchronized", "rough_timeline", "best_match_single_sensor")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    alignment: str = "unsynchronized"
    sensor: str = None
    jitter: float = REPLAY_JITTER_S
    search: float = SIMILAR_WINDOW_S
    search_step: float = 1.0
    repeats: int = 8

    def __post_init__(self):
        if self.kind not in ATTACKS:
            raise ValueError(f"kind must be one of {ATTACKS}")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}")
        if (self.alignment == "best_match_single_sensor") != (self.kind == "similar_context"):
            raise ValueError("best-match alignment belongs to the similar-context attack only")
        if self.kind == "similar_context" and self.sensor not in CHANNELS:
            raise ValueError("similar-context attack needs one sensor to match")


@dataclass
class AttackResult:
    far: float
    trials: int
    accepts: int


def _victims(ds, car):
    return [d for d in ds.devices if ds.car_of[d] == car]


def _accepts(victim, attacker, thr):
    """Accept flags over all (victim row, attacker row) combinations."""
    if len(victim) == 0 or len(attacker) == 0:
        return np.zeros(0, dtype=bool)
    v = victim.astype(np.int32) * 2 - 1
    a = attacker.astype(np.int32) * 2 - 1
    length = v.shape[1]
    matches = (v @ a.T + length) // 2
    return accept_matrix(matches, length, thr).ravel()


def _result(flags, max_trials, rng):
    flags = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
    if max_trials is not None and len(flags) > max_trials:
        flags = flags[rng.choice(len(flags), max_trials, replace=False)]
    n, k = len(flags), int(flags.sum())
    return AttackResult(k / n if n else math.nan, n, k)


def run_attack(spec, ds, params=None, sets=None, bits=None, noise=None, rng=None,
               victim_car="car1", max_trials=None):
    """FAR per sensor set when an outsider tries to pair with ``victim_car``'s devices.

    ``noise`` supplies the injection attacker's recordings (device id ->
    recordings); other attacks use the devices of the other car in ``ds``.
    ``max_trials`` draws that many attempts uniformly from all candidates.
    """
    params = params or EvalParams()
    sets = sets or sensor_sets()
    rng = rng or np.random.default_rng(0)
    bits = bits or dataset_bits(ds, params)
    victims = _victims(ds, victim_car)
    attackers = [d for d in ds.devices if ds.car_of[d] != victim_car]
    out = {}

    if spec.kind == "injection":
        if noise is None:
            from .synthetic import stationary_noise
            noise = {"noise_0": stationary_noise(int(rng.integers(1 << 31)), ds.duration)}
        # the attacker's windows come straight from the noise, no activity filter
        raw = EvalParams(params.thresholds, params.pipeline, params.similarity,
                         params.step, use_filter=False)
        starts = bits[victims[0]].starts
        adv = [device_bits(k, context_streams(r, params.pipeline), starts, raw)
               for k, r in noise.items()]
        for mods in sets:
            thr = _threshold(mods, params.similarity)
            flags = []
            for v in victims:
                fv, mv = bits[v].fused(mods)
                for a in adv:
                    fa, ma = a.fused(mods)
                    flags.append(_accepts(fv[mv], fa[ma], thr))
            out[set_label(mods)] = _result(flags, max_trials, rng)
        return out

    if spec.kind == "replay":
        for mods in sets:
            thr = _threshold(mods, params.similarity)
            flags = []
            for v in victims:
                fv, mv = bits[v].fused(mods)
                for a in attackers:
                    fa, ma = bits[a].fused(mods)
                    if spec.alignment == "unsynchronized":
                        flags.append(_accepts(fv[mv], fa[ma], thr))
                    else:
                        flags.append(_rough_timeline(fv, mv, fa, ma, thr, spec,
                                                     params.step, rng))
            out[set_label(mods)] = _result(flags, max_trials, rng)
        return out

    return _similar_context(spec, ds, params, sets, bits, victims, attackers)


def _rough_timeline(fv, mv, fa, ma, thr, spec, step, rng):
    """Replay the attacker window nearest to ``t + U(-jitter, jitter)``."""
    idx = np.nonzero(mv)[0]
    flags = []
    for _ in range(spec.repeats):
        shift = np.rint(rng.uniform(-spec.jitter, spec.jitter, len(idx)) / step).astype(int)
        j = idx + shift
        good = (j >= 0) & (j < len(ma))
        good[good] &= ma[j[good]]
        matches = np.count_nonzero(fv[idx[good]] == fa[j[good]], axis=1)
        flags.append(accept_matrix(matches, fv.shape[1], thr))
    return np.concatenate(flags)


def _similar_context(spec, ds, params, sets, bits, victims, attackers):
    """The attacker picks, for one sensor, its best-matching window near ``t``.

    Candidates are the attacker's own accepted windows starting within
    ``spec.search`` seconds of the victim window, on a ``spec.search_step``
    grid.  The remaining sensors use the attacker's window at ``t``.
    """
    ch = spec.sensor
    starts = bits[victims[0]].starts
    offsets = np.arange(-spec.search, spec.search + 1e-9, spec.search_step)
    fine = np.unique(np.round((starts[:, None] + offsets[None, :]).ravel(), 6))
    fine = fine[(fine >= 0) & (fine <= starts[-1])]
    fine_bits = {}
    fine_params = EvalParams(params.thresholds, params.pipeline, params.similarity,
                             spec.search_step, params.use_filter)
    for a in attackers:
        streams = context_streams(ds.recordings[a], params.pipeline)
        only = {ch: streams[ch]} if ch in streams else {}
        fine_bits[a] = device_bits(a, only, fine, fine_params)
    out = {}
    for mods in sets:
        if ch not in mods:
            continue
        thr = _threshold(mods, params.similarity)
        trials = accepts = 0
        for v in victims:
            fv, mv = bits[v].fused(mods)
            sub_v = bits[v].bits[ch]
            for a in attackers:
                fa, ma = bits[a].fused([m for m in mods if m != ch] or [ch])
                others = [m for m in mods if m != ch]
                fb = fine_bits[a]
                for k in np.nonzero(mv)[0]:
                    if others and not ma[k]:
                        continue
                    lo = np.searchsorted(fb.starts, starts[k] - spec.search - 1e-6)
                    hi = np.searchsorted(fb.starts, starts[k] + spec.search + 1e-6)
                    cand = np.nonzero(fb.ok[ch][lo:hi])[0] + lo
                    if len(cand) == 0:
                        continue
                    sims = np.count_nonzero(fb.bits[ch][cand] == sub_v[k], axis=1)
                    best = fb.bits[ch][cand[int(np.argmax(sims))]]
                    guess = {m: bits[a].bits[m][k] for m in others}
                    guess[ch] = best
                    g = np.concatenate([guess[m] for m in mods])
                    matches = int(np.count_nonzero(g == fv[k]))
                    trials += 1
                    accepts += int(accept_matrix(matches, len(g), thr))
        out[set_label(mods)] = AttackResult(accepts / trials if trials else math.nan,
                                            trials, accepts)
    return out


# --- pairing time ---------------------------------------------------------------

def accumulate_pairing_time(streams, required_bits, modalities=None, sched=None,
                            params=None, others=(), overlapping=True):
    """Stream time needed to collect ``required_bits`` fused fingerprint bits.

    ``streams`` (and each of ``others``) maps channel -> processed stream; a
    window only counts when it passes the filter on every device.  With
    ``overlapping=False`` windows advance by the longest window length.
    """
    params = params or EvalParams()
    modalities = tuple(modalities or [ch for ch in CHANNELS if ch in streams])
    sched = sched or WindowSchedule()
    length = max(WINDOW_SECONDS[m] for m in modalities)
    step = sched.step if overlapping else length
    per_window = sum(OUTPUT_BITS[m] for m in modalities)
    t0 = min(streams[m].start_time for m in modalities)
    end = min(streams[m].end_time for m in modalities)
    for o in others:
        end = min(end, min(o[m].end_time for m in modalities))
    collected = 0
    k = 0
    while True:
        start = t0 + k * step
        if start + length > end + 1e-6:
            raise InsufficientContext(start - t0, collected)
        ok = True
        for dev in (streams, *others):
            for m in modalities:
                w = cut_window(dev[m], round(start, 9), params.pipeline)
                if w is None or (params.use_filter and not passes(w, params.thresholds)[0]):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            collected += per_window
            if collected >= required_bits:
                return start + length - t0
        k += 1


# --- entropy ------------------------------------------------------------------------

@dataclass
class EntropyReport:
    n_bits: int
    corpus_size: int
    walk_positions: dict
    expected_binomial: dict
    chi_square: float
    chi_square_p: float
    markov_p01: float
    markov_p11: float
    mcv_min_entropy: float
    markov_min_entropy: float


def _as_matrix(corpus):
    rows = [np.asarray(getattr(f, "bits", f), dtype=np.uint8) for f in corpus]
    if len(rows) < 100:
        raise InsufficientCorpus(f"need at least 100 fingerprints, got {len(rows)}")
    n = len(rows[0])
    if n < 2 or any(len(r) != n for r in rows):
        raise InsufficientCorpus("fingerprints must share one length of at least 2 bits")
    return np.vstack(rows)


def _chi_square(observed, expected):
    """Pool sparse tail bins (expected < 5) before the test."""
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e and exp:
        obs[-1] += acc_o
        exp[-1] += acc_e
    if len(exp) < 2:
        return 0.0, 1.0
    res = stats.chisquare(obs, exp)
    return float(res.statistic), float(res.pvalue)


def _viterbi_max_log2(pi1, p01, p11, n):
    """log2 of the most likely length-n path of a 2-state chain."""
    def lg(x):
        return math.log2(x) if x > 0 else -math.inf

    trans = [[lg(1 - p01), lg(p01)], [lg(1 - p11), lg(p11)]]
    best = [lg(1 - pi1), lg(pi1)]
    for _ in range(n - 1):
        best = [max(best[0] + trans[0][j], best[1] + trans[1][j]) for j in (0, 1)]
    return max(best)


def entropy_analysis(corpus):
    x = _as_matrix(corpus)
    count, n = x.shape
    pos = 2 * x.sum(axis=1).astype(int) - n
    support = np.arange(-n, n + 1, 2)
    hist = {int(p): int(np.count_nonzero(pos == p)) for p in support}
    expected = {int(p): count * math.comb(n, (p + n) // 2) / 2 ** n for p in support}
    chi, pval = _chi_square([hist[p] for p in hist], [expected[p] for p in hist])

    prev, nxt = x[:, :-1].ravel(), x[:, 1:].ravel()
    zeros, ones = np.count_nonzero(prev == 0), np.count_nonzero(prev == 1)
    p01 = np.count_nonzero((prev == 0) & (nxt == 1)) / zeros if zeros else math.nan
    p11 = np.count_nonzero((prev == 1) & (nxt == 1)) / ones if ones else math.nan

    freq1 = float(x.mean())
    mcv = -math.log2(max(freq1, 1 - freq1))
    # an unvisited state's transitions are irrelevant to the best path; 0.5 is a neutral fill
    pi1 = float(x[:, 0].mean())
    log2_best = _viterbi_max_log2(pi1, 0.5 if math.isnan(p01) else p01,
                                  0.5 if math.isnan(p11) else p11, n)
    markov = -log2_best / n
    return EntropyReport(n, count, hist, expected, chi, pval, float(p01), float(p11),
                         abs(mcv), abs(markov))
