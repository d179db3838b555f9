"""CTC training objectives and decoding.

The loss marginalizes over all monotonic alignments between per-slice
output distributions and a target sequence, with a reserved blank
symbol.  The dynamic program runs in log space over the blank-padded
state sequence; its gradient is the alpha/beta posterior, verified
against finite differences and an exponential brute-force enumerator.

Three assemblies share the same DP:

* baseline: pitch CTC + rhythm CTC over independent lattices,
* composite-symbol ("flag") CTC, where each emission probability is a
  product of independent normalized factors and the blank is the
  all-off configuration,
* multi-stream: the arithmetic mean of per-stream (pitch + rhythm)
  CTC losses.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .labels import ALL_OFF, FlagConfiguration, FlagSpace

NEG_INF = -np.inf


class CTCError(ValueError):
    pass


def min_alignment_length(target: list) -> int:
    """Shortest lattice that can emit the target: repeats need a blank between."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _skip_mask(target: list) -> np.ndarray:
    """skip_ok[s]: transition s-2 -> s allowed in the padded state sequence."""
    n_states = 2 * len(target) + 1
    skip = np.zeros(n_states, dtype=bool)
    for s in range(3, n_states, 2):
        j = (s - 1) // 2
        skip[s] = target[j] != target[j - 1]
    return skip


def ctc_state_loss(
    state_lp: Tensor,
    skip_ok: np.ndarray,
    on_infeasible: str = "raise",
) -> Tensor:
    """Negative log marginal over alignments, from per-state emissions.

    state_lp[t, s] is the log-probability of emitting padded state s at
    slice t (even s = blank, odd s = target symbol (s-1)/2); duplicated
    symbols simply repeat their column.  This factoring lets composite
    alphabets reuse the same recursion.
    """
    T, S = state_lp.shape
    L = (S - 1) // 2
    min_len = L + int(sum(~skip_ok[3::2]))
    if T < min_len:
        if on_infeasible == "raise":
            raise CTCError(
                f"target needs at least {min_len} slices but lattice has {T}"
            )
        return dc.tensor(np.inf)

    lp = state_lp.values.astype(np.float64)
    alphas = np.full((T, S), NEG_INF)
    alphas[0, 0] = lp[0, 0]
    if S > 1:
        alphas[0, 1] = lp[0, 1]
    for t in range(1, T):
        prev = alphas[t - 1]
        cand = prev.copy()
        cand[1:] = np.logaddexp(cand[1:], prev[:-1])
        if S > 2:
            with np.errstate(invalid="ignore"):
                cand[2:] = np.where(
                    skip_ok[2:], np.logaddexp(cand[2:], prev[:-2]), cand[2:]
                )
        alphas[t] = cand + lp[t]
    log_p = alphas[T - 1, S - 1]
    if S > 1:
        log_p = np.logaddexp(log_p, alphas[T - 1, S - 2])

    loss = -log_p
    out_values = np.asarray(loss)

    def backward(g):
        if not np.isfinite(log_p):
            return  # no useful gradient through an impossible alignment
        betas = np.full((T, S), NEG_INF)
        betas[T - 1, S - 1] = 0.0
        if S > 1:
            betas[T - 1, S - 2] = 0.0
        for t in range(T - 2, -1, -1):
            nxt = betas[t + 1] + lp[t + 1]
            cand = nxt.copy()
            cand[:-1] = np.logaddexp(cand[:-1], nxt[1:])
            if S > 2:
                with np.errstate(invalid="ignore"):
                    cand[:-2] = np.where(
                        skip_ok[2:], np.logaddexp(cand[:-2], nxt[2:]), cand[:-2]
                    )
            betas[t] = cand
        with np.errstate(invalid="ignore"):
            posterior = np.exp(alphas + betas - log_p)
        posterior[~np.isfinite(alphas + betas)] = 0.0
        state_lp.grad += (-posterior * float(g)).astype(state_lp.dtype)

    return dc.from_op(out_values, (state_lp,), backward, name="ctc")


def ctc_loss(
    log_lattice: Tensor,
    target: list[int],
    blank: int,
    on_infeasible: str = "raise",
) -> Tensor:
    """CTC loss from a (T, V+1) log-probability lattice and a token-index target."""
    T, V1 = log_lattice.shape
    for tok in target:
        if tok == blank:
            raise CTCError("target contains the blank index")
        if not 0 <= tok < V1:
            raise CTCError(f"target index {tok} outside vocabulary of {V1}")
    states = [blank]
    for tok in target:
        states.extend((tok, blank))
    state_lp = dc.gather_columns(log_lattice, np.array(states, dtype=np.intp))
    return ctc_state_loss(state_lp, _skip_mask(list(target)), on_infeasible)


def collapse(path, blank):
    """Best-path collapse: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return out


def ctc_bruteforce(prob_lattice: np.ndarray, target: list, blank, max_T: int = 8) -> float:
    """Exact loss by enumerating every path whose collapse equals the target.

    prob_lattice holds probabilities (not logs); rows index slices.
    Exponential in T, so T is capped.
    """
    T, V1 = prob_lattice.shape
    if T > max_T:
        raise CTCError(f"brute force limited to T <= {max_T}, got {T}")
    target = list(target)
    total = 0.0
    for path in itertools.product(range(V1), repeat=T):
        if collapse(path, blank) == target:
            p = 1.0
            for t, sym in enumerate(path):
                p *= prob_lattice[t, sym]
            total += p
    return -np.log(total) if total > 0.0 else np.inf


# ---------------------------------------------------------------------------
# composite-symbol (flag) emissions

class FlagActivation:
    """Per-slice factorized outputs of the flag decoder.

    staff_logits: (T, S) pre-sigmoid; rhythm_logits: (T, rows, R) and
    accidental_logits: (T, rows, A) pre-softmax.  The induced
    distribution over composite configurations is a product of
    independent normalized factors, so it sums to one by construction.
    """

    def __init__(
        self,
        staff_logits: Tensor,
        rhythm_logits: Tensor,
        accidental_logits: Tensor,
        space: FlagSpace,
    ):
        if staff_logits.shape[-1] != space.staff_bits:
            raise dc.ShapeError(
                f"flag activation: staff width {staff_logits.shape} "
                f"!= {space.staff_bits} bits"
            )
        if rhythm_logits.shape[1:] != (space.rows, space.rhythm_classes):
            raise dc.ShapeError(
                f"flag activation: rhythm shape {rhythm_logits.shape} does not "
                f"match {space.rows} rows x {space.rhythm_classes} classes"
            )
        if accidental_logits.shape[1:] != (space.rows, space.accidental_classes):
            raise dc.ShapeError(
                f"flag activation: accidental shape {accidental_logits.shape} "
                f"does not match {space.rows} rows x {space.accidental_classes}"
            )
        self.staff_logits = staff_logits
        self.rhythm_logits = rhythm_logits
        self.accidental_logits = accidental_logits
        self.space = space
        self.slices = staff_logits.shape[0]
        # shared normalized factors, built lazily once per graph
        self._log_sig = None
        self._log_not = None
        self._log_rhythm = None
        self._log_acc = None

    def _factors(self):
        if self._log_sig is None:
            self._log_sig = dc.logsigmoid(self.staff_logits)
            self._log_not = dc.logsigmoid(dc.scale(self.staff_logits, -1.0))
            T = self.slices
            sp = self.space
            self._log_rhythm = dc.reshape(
                dc.log_softmax(self.rhythm_logits, axis=-1),
                (T, sp.rows * sp.rhythm_classes),
            )
            self._log_acc = dc.reshape(
                dc.log_softmax(self.accidental_logits, axis=-1),
                (T, sp.rows * sp.accidental_classes),
            )
        return self._log_sig, self._log_not, self._log_rhythm, self._log_acc


def flag_symbol_logprob(activation: FlagActivation, symbol: FlagConfiguration) -> Tensor:
    """Per-slice log-probability of one composite configuration: (T,) tensor.

    log P = sum over staff bits of log(sig or 1-sig)
          + sum over grid rows of log P(rhythm class; noNote when empty)
          + sum over occupied rows of log P(accidental class).
    """
    sp = activation.space
    symbol.validate(sp)
    log_sig, log_not, log_rhythm, log_acc = activation._factors()
    T = activation.slices

    bits = np.zeros((sp.staff_bits, 1))
    for b in symbol.bits:
        bits[b, 0] = 1.0
    term = dc.add(
        dc.matmul(log_sig, dc.tensor(bits, dtype=log_sig.dtype)),
        dc.matmul(log_not, dc.tensor(1.0 - bits, dtype=log_not.dtype)),
    )
    total = dc.reshape(term, (T,))

    rhythm_class = np.zeros(sp.rows, dtype=np.intp)  # class 0 = noNote
    acc_idx = []
    for row, rhy, acc in symbol.rows:
        rhythm_class[row] = rhy
        acc_idx.append(row * sp.accidental_classes + acc)
    rhythm_idx = np.arange(sp.rows) * sp.rhythm_classes + rhythm_class
    total = dc.add(total, dc.sum_(dc.gather_columns(log_rhythm, rhythm_idx), axis=1))
    if acc_idx:
        total = dc.add(
            total, dc.sum_(dc.gather_columns(log_acc, np.array(acc_idx)), axis=1)
        )
    return total


def flag_ctc_loss(
    activation: FlagActivation,
    targets: tuple[FlagConfiguration, ...],
    on_infeasible: str = "raise",
) -> Tensor:
    """CTC over the composite alphabet with the all-off configuration as blank."""
    for sym in targets:
        if sym.is_all_off:
            raise CTCError("target contains the all-off (blank) configuration")
    cache: dict[FlagConfiguration, Tensor] = {}

    def lp(sym):
        if sym not in cache:
            cache[sym] = flag_symbol_logprob(activation, sym)
        return cache[sym]

    columns = [lp(ALL_OFF)]
    for sym in targets:
        columns.append(lp(sym))
        columns.append(lp(ALL_OFF))
    state_lp = dc.stack(columns, axis=1)
    return ctc_state_loss(state_lp, _skip_mask(list(targets)), on_infeasible)


# ---------------------------------------------------------------------------
# loss assemblies

def loss_baseline(
    pitch_lattice: Tensor,
    rhythm_lattice: Tensor,
    pitch_target: list[int],
    rhythm_target: list[int],
    pitch_blank: int,
    rhythm_blank: int,
) -> Tensor:
    """Sum of the two independently aligned CTC losses."""
    return dc.add(
        ctc_loss(pitch_lattice, pitch_target, pitch_blank),
        ctc_loss(rhythm_lattice, rhythm_target, rhythm_blank),
    )


def loss_flag(activation: FlagActivation, targets: tuple[FlagConfiguration, ...]) -> Tensor:
    return flag_ctc_loss(activation, targets)


def loss_rnn(
    stream_lattices: list[tuple[Tensor, Tensor]],
    stream_targets: list[tuple[list[int], list[int]]],
    pitch_blank: int,
    rhythm_blank: int,
) -> Tensor:
    """Arithmetic mean over streams of (pitch CTC + rhythm CTC)."""
    if len(stream_lattices) != len(stream_targets):
        raise CTCError(
            f"{len(stream_lattices)} lattice pairs vs {len(stream_targets)} target pairs"
        )
    terms = [
        loss_baseline(pl, rl, pt, rt, pitch_blank, rhythm_blank)
        for (pl, rl), (pt, rt) in zip(stream_lattices, stream_targets)
    ]
    total = terms[0]
    for t in terms[1:]:
        total = dc.add(total, t)
    return dc.scale(total, 1.0 / len(terms))


# ---------------------------------------------------------------------------
# greedy (best-path) decoding

def greedy_decode(log_probs: np.ndarray, blank: int) -> list[int]:
    """Per-slice argmax, collapse adjacent repeats, drop blanks."""
    return collapse(np.asarray(log_probs).argmax(axis=-1).tolist(), blank)


def greedy_decode_flag(
    staff_probs: np.ndarray,
    rhythm_probs: np.ndarray,
    accidental_probs: np.ndarray,
    threshold: float = 0.5,
) -> list[FlagConfiguration]:
    """Thresholded/argmax configuration per slice, then blank-collapse.

    staff_probs: (T, S) sigmoids; rhythm_probs: (T, rows, R) softmax rows;
    accidental_probs: (T, rows, A).  A bit is on strictly above threshold.
    """
    T = staff_probs.shape[0]
    configs = []
    for t in range(T):
        bits = frozenset(int(i) for i in np.nonzero(staff_probs[t] > threshold)[0])
        rows = []
        rhythm_class = rhythm_probs[t].argmax(axis=-1)
        acc_class = accidental_probs[t].argmax(axis=-1)
        for row in np.nonzero(rhythm_class != 0)[0]:
            rows.append((int(row), int(rhythm_class[row]), int(acc_class[row])))
        configs.append(FlagConfiguration(bits, tuple(rows)))
    out = []
    prev = None
    for cfg in configs:
        if cfg != prev and not cfg.is_all_off:
            out.append(cfg)
        prev = cfg
    return out
