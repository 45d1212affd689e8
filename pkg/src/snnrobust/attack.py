"""Adversarial attacks: FGSM (fixed and minimal-epsilon search) and the
one-pixel attack driven by differential evolution.

All attacks are read-only on the network and deterministic given their
seeds. Perturbed images stay inside [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import MaskedNetwork, backward, forward

IMG_SIDE = 28
INTENSITY_MAX = 255.0


class AttackError(ValueError):
    """Attack precondition violated."""


@dataclass
class AdversarialExample:
    """Per-image attack record."""

    original_index: int
    original_label: int
    predicted_label: int
    success: bool
    confidence: float
    perturbed_image: np.ndarray | None = None
    epsilon_used: float | None = None
    candidate: tuple[int, int, float] | None = None  # (p_x, p_y, intensity)
    generations_used: int | None = None

    def csv_row(self) -> list:
        px, py, intensity = self.candidate if self.candidate else ("", "", "")
        return [self.original_index, int(self.success), self.confidence,
                "" if self.epsilon_used is None else self.epsilon_used,
                px, py, intensity,
                "" if self.generations_used is None else self.generations_used]


ATTACK_CSV_HEADER = ["image_index", "success", "confidence", "epsilon_used",
                     "p_x", "p_y", "I", "generations_used"]


@dataclass
class DEConfig:
    pop_size: int = 500
    max_iter: int = 500
    F: float = 0.5
    CR: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.pop_size < 4:
            raise AttackError("pop_size must be >= 4 for rand/1 mutation")
        if self.F <= 0:
            raise AttackError("F must be positive")
        if not (0.0 <= self.CR <= 1.0):
            raise AttackError("CR must be in [0, 1]")


def _outcome_from_probs(probs: np.ndarray, y: int, index: int, **extra) -> AdversarialExample:
    pred = int(probs.argmax())
    return AdversarialExample(
        original_index=index,
        original_label=int(y),
        predicted_label=pred,
        success=pred != int(y),
        confidence=float(probs[pred]),
        **extra,
    )


def fgsm(net: MaskedNetwork, x: np.ndarray, y: int, eps: float,
         index: int = 0, keep_image: bool = True) -> AdversarialExample:
    """Single-step sign attack: x + eps * sign(d loss / d x), clipped to [0, 1].

    sign(0) is 0, so untouched-gradient pixels stay put.
    """
    if eps < 0:
        raise AttackError("eps must be >= 0")
    _, _, cache = forward(net, x)
    _, _, input_grad = backward(net, cache, y)
    x_adv = np.clip(x + eps * np.sign(input_grad), 0.0, 1.0)
    _, probs, _ = forward(net, x_adv)
    return _outcome_from_probs(probs, y, index,
                               perturbed_image=x_adv if keep_image else None,
                               epsilon_used=None)


def fgsm_many(net: MaskedNetwork, images: np.ndarray, labels: np.ndarray,
              eps: float, indices: np.ndarray | None = None,
              keep_images: bool = False) -> list[AdversarialExample]:
    """Batched fixed-epsilon FGSM over many images.

    The mean-loss input gradient of a batch scales each per-image gradient by
    a positive constant, so its sign equals the per-image sign.
    """
    if eps < 0:
        raise AttackError("eps must be >= 0")
    if indices is None:
        indices = np.arange(images.shape[0])
    _, _, cache = forward(net, images)
    _, _, input_grads = backward(net, cache, labels)
    adv = np.clip(images + eps * np.sign(input_grads), 0.0, 1.0)
    _, probs, _ = forward(net, adv)
    preds = probs.argmax(axis=1)
    out = []
    for i in range(images.shape[0]):
        out.append(AdversarialExample(
            original_index=int(indices[i]),
            original_label=int(labels[i]),
            predicted_label=int(preds[i]),
            success=bool(preds[i] != labels[i]),
            confidence=float(probs[i, preds[i]]),
            perturbed_image=adv[i] if keep_images else None,
        ))
    return out


def fgsm_eps_search(net: MaskedNetwork, x: np.ndarray, y: int,
                    start: float = 0.001, step: float = 0.01, cap: float = 1.0,
                    index: int = 0, keep_image: bool = False) -> AdversarialExample:
    """Smallest epsilon on the grid start, start+step, ... <= cap that flips
    the prediction.

    The input gradient is computed once at x; only the scale varies. Requires
    x to be correctly classified. If no grid point flips, the record is
    censored: success False, epsilon_used None.
    """
    _, probs0, cache = forward(net, x)
    if int(probs0.argmax()) != int(y):
        raise AttackError("eps search requires a correctly classified input")
    _, _, input_grad = backward(net, cache, y)
    direction = np.sign(input_grad)

    eps = start
    last = None
    while eps <= cap + 1e-12:
        x_adv = np.clip(x + eps * direction, 0.0, 1.0)
        _, probs, _ = forward(net, x_adv)
        pred = int(probs.argmax())
        if pred != int(y):
            return AdversarialExample(
                original_index=index, original_label=int(y), predicted_label=pred,
                success=True, confidence=float(probs[pred]),
                perturbed_image=x_adv if keep_image else None, epsilon_used=float(eps),
            )
        last = (pred, float(probs[pred]), x_adv)
        eps += step
    pred, conf, x_adv = last if last is not None else (int(y), float(probs0[int(probs0.argmax())]), x.copy())
    return AdversarialExample(
        original_index=index, original_label=int(y), predicted_label=pred,
        success=False, confidence=conf,
        perturbed_image=x_adv if keep_image else None, epsilon_used=None,
    )


def init_population(cfg: DEConfig, rng: np.random.Generator) -> np.ndarray:
    """Initial (pop_size, 3) candidates: coordinates from U(1, 28) rounded to
    integers, intensity from N(128, 127) clamped to [0, 255]."""
    coords = np.rint(rng.uniform(1, IMG_SIDE, size=(cfg.pop_size, 2)))
    intensity = np.clip(rng.normal(128.0, 127.0, size=(cfg.pop_size, 1)),
                        0.0, INTENSITY_MAX)
    return np.hstack([coords, intensity])


def _repair(cands: np.ndarray) -> np.ndarray:
    cands[:, 0] = np.clip(np.rint(cands[:, 0]), 1, IMG_SIDE)
    cands[:, 1] = np.clip(np.rint(cands[:, 1]), 1, IMG_SIDE)
    cands[:, 2] = np.clip(cands[:, 2], 0.0, INTENSITY_MAX)
    return cands


def apply_candidate(x: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Replace the single pixel at 1-indexed (p_x, p_y) = (column, row) with
    intensity/255."""
    px, py, intensity = candidate
    out = x.copy()
    flat = (int(py) - 1) * IMG_SIDE + (int(px) - 1)
    out[flat] = intensity / INTENSITY_MAX
    return out


def perturbed_batch(x: np.ndarray, cands: np.ndarray) -> np.ndarray:
    out = np.tile(x, (cands.shape[0], 1))
    flat = (cands[:, 1].astype(int) - 1) * IMG_SIDE + (cands[:, 0].astype(int) - 1)
    out[np.arange(cands.shape[0]), flat] = cands[:, 2] / INTENSITY_MAX
    return out


def de_evolve(
    population: np.ndarray,
    fitness_fn,
    cfg: DEConfig,
    rng: np.random.Generator | None = None,
    fitness: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One rand/1/bin generation with greedy >= selection.

    For each parent i, mutant = a + F * (b - c) over three distinct members
    other than i, followed by binomial crossover with one forced coordinate;
    children are repaired (coordinates rounded and clamped, intensity
    clamped) before evaluation. fitness_fn maps an (n, 3) candidate array to
    an (n,) fitness array. Returns the next population and its fitness.
    """
    n = population.shape[0]
    if n < 4:
        raise AttackError("population size must be >= 4")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if fitness is None:
        fitness = fitness_fn(population)

    idx = np.arange(n)
    children = np.empty_like(population)
    for i in range(n):
        a, b, c = rng.choice(np.delete(idx, i), size=3, replace=False)
        mutant = population[a] + cfg.F * (population[b] - population[c])
        cross = rng.random(3) < cfg.CR
        cross[rng.integers(3)] = True
        children[i] = np.where(cross, mutant, population[i])
    children = _repair(children)

    child_fitness = fitness_fn(children)
    replace = child_fitness >= fitness
    next_pop = np.where(replace[:, None], children, population)
    next_fit = np.where(replace, child_fitness, fitness)
    return next_pop, next_fit


def one_pixel(net: MaskedNetwork, x: np.ndarray, y: int, cfg: DEConfig,
              index: int = 0, keep_image: bool = True) -> AdversarialExample:
    """One-pixel attack: evolve (p_x, p_y, I) candidates maximizing
    1 - P(true class), stopping early as soon as any evaluated candidate
    makes the model misclassify."""
    rng = np.random.default_rng(cfg.seed)
    y = int(y)

    flipped: dict = {}

    def evaluate(cands: np.ndarray) -> np.ndarray:
        _, probs, _ = forward(net, perturbed_batch(x, cands))
        preds = probs.argmax(axis=1)
        fit = 1.0 - probs[:, y]
        hits = np.flatnonzero(preds != y)
        if hits.size and not flipped:
            best_hit = hits[np.argmax(fit[hits])]
            flipped["candidate"] = cands[best_hit].copy()
        return fit

    population = init_population(cfg, rng)
    fitness = evaluate(population)
    generations = 0
    while not flipped and generations < cfg.max_iter:
        population, fitness = de_evolve(population, evaluate, cfg, rng, fitness)
        generations += 1

    if flipped:
        best = flipped["candidate"]
    else:
        best = population[int(np.argmax(fitness))]
    x_adv = apply_candidate(x, best)
    _, probs, _ = forward(net, x_adv)
    return _outcome_from_probs(
        probs, y, index,
        perturbed_image=x_adv if keep_image else None,
        candidate=(int(best[0]), int(best[1]), float(best[2])),
        generations_used=generations,
    )
