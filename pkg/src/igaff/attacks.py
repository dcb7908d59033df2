"""The attack-score objective and the two black-box attacks.

Both attacks maximize a sigmoid of the victim's cross-entropy loss over
query-only access to the model:

* the iterative affine attack (ATA) re-warps the original batch each
  iteration with fresh per-image parameters and keeps the incumbent unless
  the new score is strictly higher, so transforms never compound;
* the genetic affine attack (AGA) evolves a population of candidate batches
  through mutation (one shared warp per candidate plus brightening noise),
  adjacent-pair row crossover, and argmax selection, reinitializing the
  population from the winner each generation, so edits compound.

Targeted runs come in two flavours.  ``targeted-literal`` scores sigma(+L_c)
exactly as the score formula prints; ``targeted-paper-intent`` (the default)
scores sigma(-L_c) so that maximizing the score drives the target-class loss
down.  Both are kept because they provably disagree.

RNG event schedule, fixed so seeded runs and provenance replay are
well-defined:

* ATA, iteration t: five parameter draws per image, in image order.
* AGA, generation t: for each candidate j in index order, one gate draw,
  then (if the gate fires) five parameter draws; afterwards, for each
  adjacent pair in order, one gate draw, then (if it fires) one integer
  draw for the cut row.  Mutation noise comes from the derived substream
  keyed (rng key, "aga-noise", t, j), so it is replayable by label alone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .imagecore import AffineParams, Batch, _affine_matrix, _invert_affine, _warp_arrays, sample_affine
from .models import VictimModel, cross_entropy
from .rng import RngStream

ALGORITHMS = ("ata", "aga")
MODE_UNTARGETED = "untargeted"
MODE_TARGETED_LITERAL = "targeted-literal"
MODE_TARGETED_INTENT = "targeted-paper-intent"
SCORE_MODES = (MODE_UNTARGETED, MODE_TARGETED_LITERAL, MODE_TARGETED_INTENT)

_NOISE_LABEL = "aga-noise"


@dataclass(frozen=True)
class AttackConfig:
    """All attack knobs; defaults follow the benchmarked configuration."""

    algorithm: str = "aga"
    iterations: int = 7
    population: int = 3
    p_mutation: float = 0.3
    p_crossover: float = 0.3
    epsilon: float = 0.1
    target: int | None = None
    targeted_mode: str = "paper-intent"
    seed: int = 0
    track_global_best: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.population < 1:
            raise ValueError("population must be >= 1")
        for name in ("p_mutation", "p_crossover", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.target is not None and self.target < 0:
            raise ValueError("target class must be non-negative")
        if self.targeted_mode not in ("literal", "paper-intent"):
            raise ValueError(f"targeted_mode must be 'literal' or 'paper-intent', got {self.targeted_mode!r}")
        if not 0 <= self.seed < (1 << 64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def score_mode(self) -> str:
        if self.target is None:
            return MODE_UNTARGETED
        return MODE_TARGETED_LITERAL if self.targeted_mode == "literal" else MODE_TARGETED_INTENT


@dataclass(frozen=True)
class ScoreRecord:
    """One scored evaluation; iteration -1 is the unattacked baseline."""

    iteration: int
    loss: float
    score: float
    best_score: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "loss": self.loss,
            "score": self.score,
            "best_score": self.best_score,
        }


@dataclass(frozen=True)
class Population:
    """Candidate batches evolved by the genetic attack: (n_p, B, C, H, W)."""

    candidates: np.ndarray
    scores: np.ndarray | None = None

    def __post_init__(self):
        if self.candidates.ndim != 5:
            raise ValueError(f"population must be (n_p, B, C, H, W), got {self.candidates.shape}")
        arr = np.ascontiguousarray(self.candidates, dtype=np.float32)
        if not np.all(np.isfinite(arr)):
            raise ValueError("population contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("population values must lie in [0, 1]")
        object.__setattr__(self, "candidates", arr)

    @classmethod
    def from_batch(cls, batch: Batch, n_p: int) -> "Population":
        if n_p < 1:
            raise ValueError("population size must be >= 1")
        return cls(np.repeat(batch.data[None], n_p, axis=0))

    @property
    def size(self) -> int:
        return self.candidates.shape[0]

    def candidate(self, j: int) -> Batch:
        return Batch(self.candidates[j].copy())


@dataclass
class AttackOutcome:
    """Adversarial batch plus everything needed to audit and replay the run."""

    batch: Batch
    records: list[ScoreRecord]
    provenance: dict = field(default_factory=dict)

    @property
    def initial_score(self) -> float:
        return self.records[0].score if self.records and self.records[0].iteration == -1 else math.nan

    @property
    def final_score(self) -> float:
        return self.records[-1].best_score


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def attack_score(loss: float, mode: str = MODE_UNTARGETED) -> float:
    """Map a cross-entropy loss to the fitness both attacks maximize.

    Untargeted and targeted-literal use sigma(+loss); targeted-paper-intent
    uses sigma(-loss) so the best score corresponds to the smallest
    target-class loss.
    """
    if mode not in SCORE_MODES:
        raise ValueError(f"mode must be one of {SCORE_MODES}, got {mode!r}")
    if not math.isfinite(loss):
        raise ValueError(f"loss must be finite, got {loss}")
    return _sigmoid(-loss if mode == MODE_TARGETED_INTENT else loss)


def _effective_labels(cfg: AttackConfig, labels, batch_size: int, num_classes: int) -> np.ndarray:
    if cfg.target is not None:
        if cfg.target >= num_classes:
            raise ValueError(f"target class {cfg.target} out of range for {num_classes} classes")
        return np.full(batch_size, cfg.target, dtype=np.int64)
    eff = np.asarray(labels, dtype=np.int64)
    if eff.shape != (batch_size,):
        raise ValueError(f"labels shape {eff.shape} does not match batch of {batch_size}")
    return eff


def _map_lanes(fn, items, lanes: int):
    if lanes <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=lanes) as pool:
        return list(pool.map(fn, items))


def _score_batch(model: VictimModel, data: np.ndarray, labels: np.ndarray, mode: str) -> tuple[float, float]:
    loss = cross_entropy(model.predict(Batch(data)), labels)
    return loss, attack_score(loss, mode)


# ---------------------------------------------------------------------------
# Iterative affine attack


def ata_attack(
    batch: Batch,
    labels,
    model: VictimModel,
    cfg: AttackConfig,
    rng: RngStream | None = None,
    lanes: int = 1,
) -> AttackOutcome:
    """Run the iterative attack; the incumbent starts as the original batch
    and is replaced only on strictly better scores, so the returned score can
    never fall below the unattacked one."""
    if cfg.algorithm != "ata":
        raise ValueError(f"config selects algorithm {cfg.algorithm!r}, not 'ata'")
    rng = rng if rng is not None else RngStream(cfg.seed)
    eff = _effective_labels(cfg, labels, batch.size, model.num_classes)
    mode = cfg.score_mode
    b, c, h, w = batch.data.shape

    base_loss, best_score = _score_batch(model, batch.data, eff, mode)
    records = [ScoreRecord(-1, base_loss, best_score, best_score)]
    best = batch
    winning_iteration: int | None = None
    winning_params: list[AffineParams] | None = None

    for t in range(cfg.iterations):
        params = [sample_affine(rng) for _ in range(b)]
        inverses = [_invert_affine(_affine_matrix(p, h, w)) for p in params]
        planes = _map_lanes(
            lambda ji: _warp_arrays(batch.data[ji[0]], ji[1]),
            list(enumerate(inverses)),
            lanes,
        )
        candidate = Batch(np.stack(planes))
        loss, score = _score_batch(model, candidate.data, eff, mode)
        if score > best_score:
            best_score = score
            best = candidate
            winning_iteration = t
            winning_params = params
        records.append(ScoreRecord(t, loss, score, best_score))

    provenance = {
        "algorithm": "ata",
        "rng_key": list(rng.key),
        "iterations": cfg.iterations,
        "winning_iteration": winning_iteration,
        "winning_params": [p.to_list() for p in winning_params] if winning_params else None,
    }
    return AttackOutcome(best, records, provenance)


def replay_ata(batch: Batch, provenance: dict) -> Batch:
    """Reproduce an ATA outcome from its recorded winning parameters."""
    if provenance.get("algorithm") != "ata":
        raise ValueError("provenance was not produced by the iterative attack")
    if provenance["winning_iteration"] is None:
        return Batch(batch.data.copy())
    b, c, h, w = batch.data.shape
    planes = []
    for j, values in enumerate(provenance["winning_params"]):
        inv = _invert_affine(_affine_matrix(AffineParams.from_list(values), h, w))
        planes.append(_warp_arrays(batch.data[j], inv))
    return Batch(np.stack(planes))


# ---------------------------------------------------------------------------
# Genetic affine attack


def _mutate_candidate(arr: np.ndarray, p: AffineParams, epsilon: float, noise_rng: RngStream) -> np.ndarray:
    """Warp all images of one candidate with shared params, then brighten."""
    nb, nc, h, w = arr.shape
    inv = _invert_affine(_affine_matrix(p, h, w))
    warped = _warp_arrays(arr.reshape(nb * nc, h, w), inv).reshape(arr.shape)
    delta = noise_rng.uniform_array(0.0, epsilon, arr.shape)
    return np.clip(warped.astype(np.float64) + delta, 0.0, 1.0).astype(np.float32)


def _mutation_pass(work: np.ndarray, cfg: AttackConfig, rng: RngStream, generation: int) -> list[dict]:
    events = []
    for j in range(work.shape[0]):
        if rng.uniform(0.0, 1.0) < cfg.p_mutation:
            p = sample_affine(rng)
            labels = (_NOISE_LABEL, generation, j)
            work[j] = _mutate_candidate(work[j], p, cfg.epsilon, rng.derive(*labels))
            events.append({"candidate": j, "params": p.to_list(), "noise": list(labels)})
    return events


def _crossover_pass(work: np.ndarray, cfg: AttackConfig, rng: RngStream) -> list[dict]:
    h = work.shape[3]
    if h < 2:
        raise ValueError("crossover needs image height >= 2")
    events = []
    for j in range(0, work.shape[0] - 1, 2):
        if rng.uniform(0.0, 1.0) < cfg.p_crossover:
            r = rng.integer(1, h)
            top = work[j, :, :, :r, :].copy()
            work[j, :, :, :r, :] = work[j + 1, :, :, :r, :]
            work[j + 1, :, :, :r, :] = top
            events.append({"pair": [j, j + 1], "cut": r})
    return events


def aga_mutate(pop: Population, cfg: AttackConfig, rng: RngStream, generation: int = 0) -> Population:
    """With probability p_mutation per candidate, warp the whole candidate
    batch with one fresh parameter set and add clamped U(0, epsilon) noise."""
    work = pop.candidates.copy()
    _mutation_pass(work, cfg, rng, generation)
    return Population(work)


def aga_crossover(pop: Population, cfg: AttackConfig, rng: RngStream) -> Population:
    """With probability p_crossover per adjacent disjoint pair, swap pixel
    rows [0, r) between the two candidates (all images, all channels)."""
    work = pop.candidates.copy()
    _crossover_pass(work, cfg, rng)
    return Population(work)


def aga_select(
    pop: Population,
    labels,
    model: VictimModel,
    mode: str = MODE_UNTARGETED,
    lanes: int = 1,
) -> tuple[int, Batch]:
    """Score every candidate and return the argmax (lowest index on ties)."""
    eff = np.asarray(labels, dtype=np.int64)
    scored = _map_lanes(
        lambda j: _score_batch(model, pop.candidates[j], eff, mode),
        list(range(pop.size)),
        lanes,
    )
    scores = np.array([s for _, s in scored])
    k = int(np.argmax(scores))
    return k, Batch(pop.candidates[k].copy())


def aga_attack(
    batch: Batch,
    labels,
    model: VictimModel,
    cfg: AttackConfig,
    rng: RngStream | None = None,
    lanes: int = 1,
) -> AttackOutcome:
    """Run the genetic attack and return the last generation's winner.

    No cross-generation elite is kept: the population is reseeded from each
    generation's best, and the final winner is returned even if an earlier
    generation scored higher.  With ``track_global_best`` the global best is
    noted in the provenance for diagnostics, but never returned.
    """
    if cfg.algorithm != "aga":
        raise ValueError(f"config selects algorithm {cfg.algorithm!r}, not 'aga'")
    rng = rng if rng is not None else RngStream(cfg.seed)
    eff = _effective_labels(cfg, labels, batch.size, model.num_classes)
    mode = cfg.score_mode
    n_p = cfg.population

    pop = np.repeat(batch.data[None], n_p, axis=0)
    records: list[ScoreRecord] = []
    generations: list[dict] = []
    global_best: dict | None = None
    best_data = batch.data

    for t in range(cfg.iterations):
        work = pop.copy()
        mutations = _mutation_pass(work, cfg, rng, t)
        swaps = _crossover_pass(work, cfg, rng)
        scored = _map_lanes(
            lambda j: _score_batch(model, work[j], eff, mode),
            list(range(n_p)),
            lanes,
        )
        scores = np.array([s for _, s in scored])
        k = int(np.argmax(scores))
        records.append(ScoreRecord(t, scored[k][0], scores[k], scores[k]))
        generations.append({"mutations": mutations, "swaps": swaps, "selected": k})
        if cfg.track_global_best and (global_best is None or scores[k] > global_best["score"]):
            global_best = {"generation": t, "score": float(scores[k])}
        best_data = work[k]
        pop = np.repeat(best_data[None], n_p, axis=0)

    provenance = {
        "algorithm": "aga",
        "rng_key": list(rng.key),
        "population": n_p,
        "epsilon": cfg.epsilon,
        "generations": generations,
    }
    if global_best is not None:
        provenance["global_best"] = global_best
    return AttackOutcome(Batch(best_data.copy()), records, provenance)


def replay_aga(batch: Batch, provenance: dict) -> Batch:
    """Reproduce an AGA outcome from its event log, without the model.

    Mutation noise is re-derived from the recorded substream labels under
    the recorded rng key, so the log plus the original batch determine the
    output bit-exactly.
    """
    if provenance.get("algorithm") != "aga":
        raise ValueError("provenance was not produced by the genetic attack")
    root = RngStream.from_key(provenance["rng_key"])
    n_p = provenance["population"]
    epsilon = provenance["epsilon"]
    current = batch.data
    for gen in provenance["generations"]:
        work = np.repeat(current[None], n_p, axis=0)
        for ev in gen["mutations"]:
            j = ev["candidate"]
            p = AffineParams.from_list(ev["params"])
            noise_rng = root.derive(*ev["noise"])
            work[j] = _mutate_candidate(work[j], p, epsilon, noise_rng)
        for ev in gen["swaps"]:
            j, jj = ev["pair"]
            r = ev["cut"]
            top = work[j, :, :, :r, :].copy()
            work[j, :, :, :r, :] = work[jj, :, :, :r, :]
            work[jj, :, :, :r, :] = top
        current = work[gen["selected"]]
    return Batch(current.copy())


def run_attack_config(
    batch: Batch,
    labels,
    model: VictimModel,
    cfg: AttackConfig,
    rng: RngStream | None = None,
    lanes: int = 1,
) -> AttackOutcome:
    """Dispatch to the configured algorithm."""
    fn = ata_attack if cfg.algorithm == "ata" else aga_attack
    return fn(batch, labels, model, cfg, rng=rng, lanes=lanes)
