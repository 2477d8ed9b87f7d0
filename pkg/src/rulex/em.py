"""Alternating optimization of the rule generator and the relation extractor.

Each iteration estimates a per-instance posterior over rules (the latent rule
set is approximated by softmax-normalized rule quality scores), refits the
generator toward posterior-favored rules, and retrains the extractor on fresh
rule sets drawn from the updated generator.  Diagnostics track the two halves
of the training objective and the training F1 per iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DEFAULT_MAX_RULE_LEN,
    Corpus,
    Document,
    LabeledInstance,
    RelationVocab,
    Rule,
    RuleSet,
)
from .extractor import (
    ExtractorWeights,
    FitConfig,
    _DesignMatrix,
    fit,
    fit_design,
    ground_body_value,
    ground_rule,
    ground_rule_all_pairs,
    prob,
)
from .generator import ENUM_LIMIT, RuleGenerator

# Grounding entries cached per (doc, body) are dropped wholesale past this
# size to bound memory; the warm working set repopulates quickly.
GROUNDING_CACHE_CAP = 800_000


@dataclass
class EMConfig:
    """Knobs for one training run; defaults follow the engine's standard setup."""

    n_rules: int = 50
    iterations: int = 10
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    convergence_eps: float = 1e-4
    inference_mode: str = "top"  # rule multiset used at prediction time: "top" | "sample"
    train_ruleset_mode: str = "sample"  # rule multiset for the extractor update
    beam: int = 200
    max_rule_len: int = DEFAULT_MAX_RULE_LEN

    def validate(self) -> None:
        if self.n_rules < 1:
            raise ValueError("n_rules must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inference_mode not in ("top", "sample"):
            raise ValueError(f"unknown inference mode {self.inference_mode!r}")
        if self.train_ruleset_mode not in ("top", "sample"):
            raise ValueError(f"unknown train ruleset mode {self.train_ruleset_mode!r}")
        if self.beam < self.n_rules:
            raise ValueError("beam must be >= n_rules")
        self.fit.validate()

    def to_json(self) -> dict:
        return {
            "n_rules": self.n_rules,
            "iterations": self.iterations,
            "seed": self.seed,
            "fit": {"lr": self.fit.lr, "epochs": self.fit.epochs, "l2": self.fit.l2},
            "convergence_eps": self.convergence_eps,
            "inference_mode": self.inference_mode,
            "train_ruleset_mode": self.train_ruleset_mode,
            "beam": self.beam,
            "max_rule_len": self.max_rule_len,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EMConfig":
        fit_obj = obj.get("fit", {})
        config = cls(
            n_rules=obj.get("n_rules", 50),
            iterations=obj.get("iterations", 10),
            seed=obj.get("seed", 0),
            fit=FitConfig(
                lr=fit_obj.get("lr", 0.1),
                epochs=fit_obj.get("epochs", 5),
                l2=fit_obj.get("l2", 1e-4),
            ),
            convergence_eps=obj.get("convergence_eps", 1e-4),
            inference_mode=obj.get("inference_mode", "top"),
            train_ruleset_mode=obj.get("train_ruleset_mode", "sample"),
            beam=obj.get("beam", 200),
            max_rule_len=obj.get("max_rule_len", DEFAULT_MAX_RULE_LEN),
        )
        config.validate()
        return config


class GroundingCache:
    """Grounding values memoized per (doc, body, head, tail).

    Bodies ground independently of the owning rule's head, so entries are
    shared across heads.  Documents are immutable, so entries never
    invalidate; the cache is safe to share across E-steps, M-steps, and
    inference within a run.  All-pairs matrices are cached separately for
    whole-document scoring.
    """

    def __init__(self, cap: int = GROUNDING_CACHE_CAP):
        self._values: dict[tuple, float] = {}
        self._matrices: dict[tuple, np.ndarray] = {}
        self.cap = cap

    def value_body(self, doc: Document, body: tuple[int, ...], h: int, t: int) -> float:
        key = (doc.doc_id, body, h, t)
        value = self._values.get(key)
        if value is None:
            mat = self._matrices.get((doc.doc_id, body))
            if mat is not None:
                value = float(mat[h, t])
            else:
                value = ground_body_value(doc, body, h, t)
            if len(self._values) >= self.cap:
                self._values.clear()
            self._values[key] = value
        return value

    def value(self, doc: Document, rule: Rule, h: int, t: int) -> float:
        return self.value_body(doc, rule.body, h, t)

    def matrix(self, doc: Document, rule: Rule) -> np.ndarray:
        key = (doc.doc_id, rule.body)
        mat = self._matrices.get(key)
        if mat is None:
            if len(self._matrices) >= self.cap:
                self._matrices.clear()
            mat = ground_rule_all_pairs(doc, rule)
            self._matrices[key] = mat
        return mat


def log_sigmoid_taylor(x: float) -> float:
    """First-order expansion of log-sigmoid around 0: ``-log 2 + x/2``.

    This is the truncation that makes the rule posterior decompose over
    individual rules; its error is bounded by ``x**2 / 8``.
    """
    return -math.log(2.0) + 0.5 * x


def rule_score_H(
    instance: LabeledInstance,
    rule: Rule,
    model: RuleGenerator,
    weights: ExtractorWeights,
    doc: Document,
    n_rules: int,
) -> float:
    """Quality score of one rule for one labeled query.

    Combines the generator's log-prior with the rule's signed contribution to
    the correct label: the per-rule share of the bias plus the weighted
    grounding value on this document.
    """
    if rule.head != instance.relation:
        raise ValueError(f"rule head {rule.head} does not match query relation {instance.relation}")
    log_prior = model.log_prob(instance.relation, rule.body)
    g = ground_rule(doc, rule, instance.head, instance.tail).value
    extract = weights.get_bias(instance.relation) / n_rules + weights.get_rule_weight(instance.relation, rule) * g
    return log_prior + (instance.label / 2.0) * extract


def _softmax(values: np.ndarray) -> np.ndarray:
    shifted = values - values.max()
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class RulePosterior:
    """Approximate posterior over the unique rules sampled for one instance.

    ``indices`` carries the rules' enumeration indices when the rule space is
    enumerable; index-aware consumers use them to stay vectorized.
    """

    instance: LabeledInstance
    rules: tuple[Rule, ...]
    prior_counts: np.ndarray
    h_values: np.ndarray
    weights: np.ndarray
    indices: np.ndarray | None = None

    @property
    def relation(self) -> int:
        return self.instance.relation


def posterior_over_rules(
    instance: LabeledInstance,
    rules: Sequence[Rule],
    model: RuleGenerator,
    weights: ExtractorWeights,
    doc: Document,
    n_rules: int,
) -> RulePosterior:
    """Softmax-normalized rule quality over an explicit rule list.

    This is the posterior computation of the E-step applied to a caller-chosen
    support (for example the fully enumerated rule space in oracle checks);
    adding any constant to every quality score leaves the weights unchanged.
    """
    h_values = np.array([rule_score_H(instance, rule, model, weights, doc, n_rules) for rule in rules])
    return RulePosterior(instance, tuple(rules), np.ones(len(rules), dtype=int), h_values, _softmax(h_values))


def e_step(
    instance: LabeledInstance,
    model: RuleGenerator,
    weights: ExtractorWeights,
    doc: Document,
    n_rules: int,
    rng: np.random.Generator,
    cache: GroundingCache | None = None,
    head_weights: np.ndarray | None = None,
    drawn: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> RulePosterior:
    """Sample N rules from the prior and weight the unique ones by softmaxed quality.

    Rules whose learned weight is still 0 skip grounding entirely: their
    extractor term vanishes no matter what the document says.  ``head_weights``
    optionally supplies the rule weights of the instance's relation as a dense
    vector over the enumeration order, saving per-rule lookups in the
    enumerable fast path.  ``drawn`` supplies an already drawn rule multiset
    from the same prior as (indices, multiplicities, log-priors), letting the
    caller share one draw per instance across the steps of an iteration.
    """
    relation = instance.relation
    if drawn is not None:
        uidx, counts, log_priors = drawn
        rules = model.rules_at(relation, uidx)
        if head_weights is not None:
            w = head_weights[uidx]
        else:
            w = np.array([weights.get_rule_weight(relation, rule) for rule in rules])
        indices = uidx
    elif model.enumerable_size() <= ENUM_LIMIT:
        uidx, counts, log_priors = model.sample_unique_indices(relation, n_rules, rng)
        rules = model.rules_at(relation, uidx)
        if head_weights is not None:
            w = head_weights[uidx]
        else:
            w = np.array([weights.get_rule_weight(relation, rule) for rule in rules])
        indices = uidx
    else:
        rule_list, counts, log_priors = model.sample_unique_rules(relation, n_rules, rng)
        rules = tuple(rule_list)
        w = np.array([weights.get_rule_weight(relation, rule) for rule in rules])
        indices = None
    extract = np.zeros(len(rules))
    nz = np.nonzero(w)[0]
    if nz.size:
        h, t = instance.head, instance.tail
        if cache is None:
            g = np.array([ground_body_value(doc, rules[i].body, h, t) for i in nz])
        else:
            g = np.array([cache.value_body(doc, rules[i].body, h, t) for i in nz])
        extract[nz] = w[nz] * g
    h_values = log_priors + (instance.label / 2.0) * (weights.get_bias(relation) / n_rules + extract)
    return RulePosterior(instance, rules, counts, h_values, _softmax(h_values), indices)


def m_step_generator(posteriors: Sequence[RulePosterior], model: RuleGenerator) -> RuleGenerator:
    """Refit the generator on posterior-weighted rules, grouped by query relation.

    Count additivity makes the per-head aggregate equivalent to one
    ``fit_weighted`` call per instance.
    """
    if not posteriors:
        raise ValueError("no posteriors to fit the generator on")
    dense: dict[int, np.ndarray] = {}
    sparse: dict[int, dict[Rule, float]] = {}
    for posterior in posteriors:
        if posterior.indices is not None:
            acc = dense.get(posterior.relation)
            if acc is None:
                acc = np.zeros(model.enumerable_size())
                dense[posterior.relation] = acc
            np.add.at(acc, posterior.indices, posterior.weights)
        else:
            bucket = sparse.setdefault(posterior.relation, {})
            for rule, weight in zip(posterior.rules, posterior.weights):
                bucket[rule] = bucket.get(rule, 0.0) + float(weight)
    for head in sorted(set(dense) | set(sparse)):
        pairs: dict[Rule, float] = sparse.get(head, {})
        acc = dense.get(head)
        if acc is not None:
            for i in np.nonzero(acc)[0]:
                rule = model.rule_at(head, int(i))
                pairs[rule] = pairs.get(rule, 0.0) + float(acc[i])
        model.fit_weighted(head, sorted(pairs.items(), key=lambda kv: kv[0].body))
    return model


def _build_ruleset(rules: Sequence[Rule], counts: np.ndarray) -> RuleSet:
    expanded: list[Rule] = []
    for rule, count in zip(rules, counts):
        expanded.extend([rule] * int(count))
    return RuleSet(expanded)


@dataclass
class MStepResult:
    weights: ExtractorWeights
    losses: list[float]
    l_r: float
    train_f1: float
    # Per-instance (indices, multiplicities, log-priors) of the rule sets this
    # step trained on, when they were freshly sampled; reusable as the next
    # E-step's draws from the same prior.
    samples: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None


def m_step_extractor(
    corpus: Corpus,
    model: RuleGenerator,
    weights: ExtractorWeights,
    fit_config: FitConfig,
    rng: np.random.Generator,
    *,
    n_rules: int,
    mode: str = "sample",
    beam: int = 200,
    cache: GroundingCache | None = None,
    reset: bool = False,
) -> MStepResult:
    """Retrain the extractor on rule sets from the updated generator.

    ``mode`` chooses fresh per-instance samples (the default) or the shared
    deterministic top rules per head.  Groundings are precomputed per unique
    rule before the descent loop runs.  ``reset`` clears the weights first,
    turning the step into a from-scratch calibration against the given rule
    sets instead of a warm continuation.
    """
    cache = cache or GroundingCache()
    if reset:
        weights.bias.clear()
        weights.rule_weight.clear()
    samples: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None
    if model.enumerable_size() <= ENUM_LIMIT:
        samples = [] if mode == "sample" else None
        result = fit_design(
            _index_design(
                corpus, model, weights, rng, n_rules=n_rules, mode=mode, beam=beam, cache=cache,
                samples_out=samples,
            ),
            weights,
            fit_config,
        )
    else:
        top_sets: dict[int, tuple[list[Rule], np.ndarray]] = {}
        if mode == "top":
            for relation in sorted({inst.relation for inst in corpus.instances}):
                ruleset = model.top_rules(relation, n_rules, beam)
                items = sorted(ruleset.counts().items(), key=lambda kv: kv[0].body)
                top_sets[relation] = ([rule for rule, _ in items], np.array([c for _, c in items]))
        batch = []
        for instance in corpus.instances:
            doc = corpus.docs[instance.doc_id]
            if mode == "top":
                rules, counts = top_sets[instance.relation]
            else:
                rules, counts, _ = model.sample_unique_rules(instance.relation, n_rules, rng)
            groundings = {rule: cache.value(doc, rule, instance.head, instance.tail) for rule in rules}
            batch.append((instance, _build_ruleset(rules, counts), groundings))
        result = fit(batch, weights, fit_config)
    predicted = result.final_scores > 0
    actual = result.labels > 0
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MStepResult(result.weights, result.losses, result.data_log_likelihood, f1, samples)


def _index_design(
    corpus: Corpus,
    model: RuleGenerator,
    weights: ExtractorWeights,
    rng: np.random.Generator,
    *,
    n_rules: int,
    mode: str,
    beam: int,
    cache: GroundingCache,
    samples_out: list | None = None,
) -> _DesignMatrix:
    """Feature build over enumeration indices (vectorized column mapping)."""
    keys = _DesignMatrix.stored_keys(weights)
    bias_col: dict[int, int] = {}
    colmaps: dict[int, np.ndarray] = {}
    for col, key in enumerate(keys):
        if key[0] == "bias":
            bias_col[key[1]] = col
        else:
            _, relation, rule = key
            colmap = colmaps.get(relation)
            if colmap is None:
                colmap = np.full(model.enumerable_size(), -1, dtype=np.int64)
                colmaps[relation] = colmap
            colmap[model.enum_index(relation, rule.body)] = col
    top_sets: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if mode == "top":
        for relation in sorted({inst.relation for inst in corpus.instances}):
            ruleset = model.top_rules(relation, n_rules, beam)
            items = sorted(ruleset.counts().items(), key=lambda kv: kv[0].body)
            idx = np.array([model.enum_index(relation, rule.body) for rule, _ in items], dtype=np.int64)
            top_sets[relation] = (idx, np.array([c for _, c in items], dtype=float))
    rows_parts, cols_parts, vals_parts = [], [], []
    y = np.empty(len(corpus.instances))
    for i, instance in enumerate(corpus.instances):
        relation = instance.relation
        doc = corpus.docs[instance.doc_id]
        if mode == "top":
            uidx, counts = top_sets[relation]
        else:
            uidx, counts, log_priors = model.sample_unique_indices(relation, n_rules, rng)
            if samples_out is not None:
                samples_out.append((uidx, counts, log_priors))
        colmap = colmaps.get(relation)
        if colmap is None:
            colmap = np.full(model.enumerable_size(), -1, dtype=np.int64)
            colmaps[relation] = colmap
        cols = colmap[uidx]
        for k in np.nonzero(cols < 0)[0]:
            idx = int(uidx[k])
            colmap[idx] = cols[k] = len(keys)
            keys.append(("rule", relation, model.rule_at(relation, idx)))
        bcol = bias_col.get(relation)
        if bcol is None:
            bcol = bias_col[relation] = len(keys)
            keys.append(("bias", relation))
        h, t = instance.head, instance.tail
        value_body = cache.value_body
        g = np.array([value_body(doc, body, h, t) for body in model.bodies_at(relation, uidx)])
        rows_parts.append(np.full(len(uidx) + 1, i, dtype=np.intp))
        cols_parts.append(np.concatenate((cols, [bcol])))
        vals_parts.append(np.concatenate((counts * g, [1.0])))
        y[i] = instance.label
    return _DesignMatrix(
        keys, np.concatenate(rows_parts), np.concatenate(cols_parts), np.concatenate(vals_parts), y
    )


def elbo(
    corpus: Corpus,
    model: RuleGenerator,
    weights: ExtractorWeights,
    n_rules: int,
    rng: np.random.Generator,
    samples: int = 1,
    cache: GroundingCache | None = None,
) -> tuple[float, float]:
    """Monte-Carlo estimate of the two objective halves (generator, extractor).

    The generator half is the posterior-weighted mean rule log-probability
    scaled by the multiset size; the extractor half is the mean log label
    probability under sampled rule sets.  Both are non-positive.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cache = cache or GroundingCache()
    lg_terms, lr_terms = [], []
    for _ in range(samples):
        for instance in corpus.instances:
            doc = corpus.docs[instance.doc_id]
            posterior = e_step(instance, model, weights, doc, n_rules, rng, cache)
            log_priors = model.rule_log_probs(instance.relation, list(posterior.rules))
            lg_terms.append(n_rules * float(posterior.weights @ log_priors))
            g = np.array(
                [cache.value(doc, rule, instance.head, instance.tail) for rule in posterior.rules]
            )
            w = np.array([weights.get_rule_weight(instance.relation, rule) for rule in posterior.rules])
            s = weights.get_bias(instance.relation) + float(posterior.prior_counts @ (w * g))
            lr_terms.append(-float(np.logaddexp(0.0, -instance.label * s)))
    return float(np.mean(lg_terms)), float(np.mean(lr_terms))


@dataclass
class IterationStats:
    iteration: int
    l_g: float
    l_r: float
    train_f1: float
    extractor_losses: list[float]


@dataclass
class EMResult:
    model: RuleGenerator
    weights: ExtractorWeights
    diagnostics: list[IterationStats]


def run_em(corpus: Corpus, vocab: RelationVocab, config: EMConfig) -> EMResult:
    """Alternate posterior estimation and the two model updates for T iterations.

    Stops early when the tracked objective moves less than the configured
    epsilon between iterations.  The last extractor update before returning
    always trains against the rule sets that inference will use, so sampled
    exploration during training cannot leave the scores miscalibrated for
    deterministic prediction.  Deterministic given (corpus, config, seed).
    """
    config.validate()
    if not corpus.instances:
        raise ValueError("corpus has no labeled instances")
    for instance in corpus.instances:
        if instance.doc_id not in corpus.docs:
            raise ValueError(f"instance references missing document {instance.doc_id!r}")
    rng = np.random.default_rng(config.seed)
    model = RuleGenerator(vocab, max_len=config.max_rule_len)
    weights = ExtractorWeights()
    cache = GroundingCache()
    diagnostics: list[IterationStats] = []
    previous = None
    stopped_early = False
    enumerable = model.enumerable_size() <= ENUM_LIMIT
    carried: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None
    for iteration in range(1, config.iterations + 1):
        final = iteration == config.iterations
        mode = config.inference_mode if final else config.train_ruleset_mode
        try:
            head_weights: dict[int, np.ndarray] = {}
            zero_vec = None
            if enumerable:
                zero_vec = np.zeros(model.enumerable_size())
                for (relation, rule), value in weights.rule_weight.items():
                    if value == 0.0:
                        continue
                    vec = head_weights.get(relation)
                    if vec is None:
                        vec = np.zeros(model.enumerable_size())
                        head_weights[relation] = vec
                    vec[model.enum_index(relation, rule.body)] = value
            # The previous extractor update's freshly sampled rule sets came
            # from the same prior this E-step targets, so they serve as its
            # draws; groundings for them are already cached.
            posteriors = [
                e_step(
                    inst,
                    model,
                    weights,
                    corpus.docs[inst.doc_id],
                    config.n_rules,
                    rng,
                    cache,
                    head_weights.get(inst.relation, zero_vec) if enumerable else None,
                    carried[i] if carried is not None else None,
                )
                for i, inst in enumerate(corpus.instances)
            ]
            m_step_generator(posteriors, model)
            l_g_terms = []
            for p in posteriors:
                if p.indices is not None:
                    log_priors = model.log_probs_by_index(p.relation, p.indices)
                else:
                    log_priors = model.rule_log_probs(p.relation, list(p.rules))
                l_g_terms.append(config.n_rules * float(p.weights @ log_priors))
            l_g = float(np.mean(l_g_terms))
            m_result = m_step_extractor(
                corpus,
                model,
                weights,
                config.fit,
                rng,
                n_rules=config.n_rules,
                mode=mode,
                beam=config.beam,
                cache=cache,
                reset=final and mode != config.train_ruleset_mode,
            )
        except Exception as exc:
            raise RuntimeError(f"EM iteration {iteration} failed: {exc}") from exc
        diagnostics.append(
            IterationStats(iteration, l_g, m_result.l_r, m_result.train_f1, m_result.losses)
        )
        carried = m_result.samples
        current = l_g + m_result.l_r
        if previous is not None and abs(current - previous) < config.convergence_eps:
            stopped_early = iteration < config.iterations and mode != config.inference_mode
            break
        previous = current
    if stopped_early:
        m_step_extractor(
            corpus,
            model,
            weights,
            config.fit,
            rng,
            n_rules=config.n_rules,
            mode=config.inference_mode,
            beam=config.beam,
            cache=cache,
            reset=config.inference_mode != config.train_ruleset_mode,
        )
    return EMResult(model, weights, diagnostics)


@dataclass
class RuleContribution:
    rule: Rule
    weight: float
    grounding: float
    multiplicity: int
    best_path: tuple[int, ...]
    contribution: float


@dataclass
class InferenceResult:
    label: int
    probability: float
    contributions: tuple[RuleContribution, ...]


def infer(
    doc: Document,
    query: tuple[int, int, int],
    model: RuleGenerator,
    weights: ExtractorWeights,
    config: EMConfig,
    rng: np.random.Generator | None = None,
) -> InferenceResult:
    """Score one query and explain it with the rules that actually fired.

    Contributions list only rules with a positive grounding, sorted by their
    weighted share of the score, each with its witness path.
    """
    h, relation, t = query
    if config.inference_mode == "top":
        ruleset = model.top_rules(relation, config.n_rules, config.beam)
    else:
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        ruleset = model.sample_ruleset(relation, config.n_rules, rng)
    total = weights.get_bias(relation)
    contributions = []
    for rule, multiplicity in sorted(ruleset.counts().items(), key=lambda kv: kv[0].body):
        result = ground_rule(doc, rule, h, t)
        weight = weights.get_rule_weight(relation, rule)
        total += multiplicity * weight * result.value
        if result.value > 0.0:
            contributions.append(
                RuleContribution(
                    rule, weight, result.value, multiplicity, result.best_path,
                    multiplicity * weight * result.value,
                )
            )
    contributions.sort(key=lambda c: (-c.contribution, c.rule.body))
    return InferenceResult(1 if total > 0 else -1, prob(1, total), tuple(contributions))


def inference_rulesets(
    model: RuleGenerator,
    vocab: RelationVocab,
    config: EMConfig,
    rng: np.random.Generator | None = None,
) -> dict[int, RuleSet]:
    """The rule multiset per head relation that inference scores against."""
    rulesets = {}
    for relation in range(vocab.size):
        if config.inference_mode == "top":
            rulesets[relation] = model.top_rules(relation, config.n_rules, config.beam)
        else:
            rng = rng if rng is not None else np.random.default_rng(config.seed)
            rulesets[relation] = model.sample_ruleset(relation, config.n_rules, rng)
    return rulesets


def predict_document(
    doc: Document,
    vocab: RelationVocab,
    model: RuleGenerator,
    weights: ExtractorWeights,
    config: EMConfig,
    rng: np.random.Generator | None = None,
    cache: GroundingCache | None = None,
    rulesets: Mapping[int, RuleSet] | None = None,
) -> dict[tuple[int, int, int], float]:
    """Positive predictions over all ordered entity pairs (h != t) of one document."""
    cache = cache or GroundingCache()
    if rulesets is None:
        rulesets = inference_rulesets(model, vocab, config, rng)
    n = doc.num_entities
    predictions: dict[tuple[int, int, int], float] = {}
    off_diagonal = ~np.eye(n, dtype=bool)
    for relation in range(vocab.size):
        scores = np.full((n, n), weights.get_bias(relation))
        for rule, multiplicity in rulesets[relation].counts().items():
            weight = weights.get_rule_weight(relation, rule)
            if weight != 0.0:
                scores += multiplicity * weight * cache.matrix(doc, rule)
        for h, t in np.argwhere((scores > 0) & off_diagonal):
            predictions[(int(h), relation, int(t))] = prob(1, float(scores[h, t]))
    return predictions
