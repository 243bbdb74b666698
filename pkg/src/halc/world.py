"""Deterministic synthetic stand-ins for the model, detector, tagger and scorer.

A Scene couples a vocabulary with per-token likelihood profiles over the FOV
space and a sentence skeleton that makes decoded captions syntactically
plausible. Scenes are constructed so that the qualitative FOV phenomena the
decoder exploits (stable, shifting, noisy and peaking token profiles) hold by
design, and so that hallucination traps are correctable through FOV search.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .geometry import Fov, ImageSpec, clamp_to_image, fov_distance

__all__ = [
    "StableHigh",
    "Peaking",
    "ContextShift",
    "Noisy",
    "SceneObject",
    "TrapInfo",
    "WordSlot",
    "NounSlot",
    "VerbSlot",
    "Scene",
    "CorpusSpec",
    "END_TOKEN",
    "IDK_TOKEN",
    "tag_token",
    "hallucination_category",
    "toy_model_logits",
    "toy_detector",
    "DetectorSim",
    "oracle_match_score",
    "noisy_match_score",
    "random_match_score",
    "constant_match_score",
    "demo_scene",
    "generate_corpus",
    "save_corpus",
    "load_corpus",
    "scene_to_json",
    "scene_from_json",
]

END_TOKEN = "[END]"
IDK_TOKEN = "[IDK]"

SLOT_BONUS = 8.0
FILLER_LEVEL = 4.0
FUNCTION_LEVEL = 3.0
VERB_LEVEL = 3.0
END_LEVEL = 2.0
IDK_LEVEL = -30.0

_PREPOSITIONS = frozenset({"on", "in", "under", "near", "beside", "above"})
_ARTICLES = frozenset({"a", "the"})

_M64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def hash_noise(seed: int, *values: int) -> float:
    """Stable 64-bit mix of integers mapped to [-1, 1]."""
    state = _mix64(seed & _M64)
    for v in values:
        state = _mix64(state ^ (int(v) & _M64))
    return (state >> 11) / float(1 << 53) * 2.0 - 1.0


def _string_noise(seed: int, text: str) -> float:
    state = _mix64(seed & _M64)
    for b in text.encode("utf-8"):
        state = _mix64(state ^ b)
    return (state >> 11) / float(1 << 53) * 2.0 - 1.0


# ---------------------------------------------------------------------------
# Token likelihood profiles (the four qualitative FOV patterns)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StableHigh:
    """Constant likelihood regardless of visual context."""

    level: float


@dataclass(frozen=True)
class Peaking:
    """Gaussian bump around an optimal window; the victim-token pattern."""

    v_star: Fov
    width: float
    amp: float
    base: float

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise InvalidParameterError("peak width must be positive")
        if self.amp < 0:
            raise InvalidParameterError("peak amplitude must be nonnegative")


@dataclass(frozen=True)
class ContextShift:
    """Likelihood drifting with the log area fraction of the window."""

    slope: float
    base: float


@dataclass(frozen=True)
class Noisy:
    """Seeded bounded noise over quantized windows."""

    amp: float
    noise_seed: int
    base: float

    def __post_init__(self) -> None:
        if self.amp < 0:
            raise InvalidParameterError("noise amplitude must be nonnegative")


TokenProfile = StableHigh | Peaking | ContextShift | Noisy


def profile_value(profile: TokenProfile, fov: Fov, image: ImageSpec) -> float:
    if isinstance(profile, StableHigh):
        return profile.level
    if isinstance(profile, Peaking):
        d = fov_distance(fov, profile.v_star)
        return profile.base + profile.amp * math.exp(-(d * d) / (2.0 * profile.width**2))
    if isinstance(profile, ContextShift):
        return profile.base + profile.slope * math.log(fov.area / image.area)
    if isinstance(profile, Noisy):
        q = (round(fov.width), round(fov.height), round(fov.center_x), round(fov.center_y))
        return profile.base + profile.amp * hash_noise(profile.noise_seed, *q)
    raise InvalidInputError(f"unknown profile type: {type(profile)!r}")


# ---------------------------------------------------------------------------
# Scene structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneObject:
    name: str
    region: Fov
    profile: TokenProfile
    is_ground_truth: bool = True
    anchor: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.is_ground_truth and not self.anchor:
            raise InvalidParameterError(
                f"hallucinated object {self.name!r} must name an anchor"
            )


@dataclass(frozen=True)
class TrapInfo:
    """Bookkeeping for a constructed victim/hallucination pair."""

    victim: str
    trap: str
    position: int
    correctable: bool


@dataclass(frozen=True)
class WordSlot:
    token: str


@dataclass(frozen=True)
class NounSlot:
    candidates: tuple[str, ...]


@dataclass(frozen=True)
class VerbSlot:
    candidates: tuple[str, ...]


Slot = WordSlot | NounSlot | VerbSlot


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable synthetic scene: image, objects, grammar and vocabulary."""

    image: ImageSpec
    objects: tuple[SceneObject, ...]
    verbs: tuple[str, ...]
    fillers: tuple[str, ...]
    skeleton: tuple[Slot, ...]
    cooccurrence: Mapping[tuple[str, str], float]
    reference_caption: tuple[str, ...]
    scene_id: str = "scene"
    trap: Optional[TrapInfo] = None
    vocabulary: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.vocabulary:
            object.__setattr__(self, "vocabulary", self._assemble_vocabulary())
        index = {tok: i for i, tok in enumerate(self.vocabulary)}
        if len(index) != len(self.vocabulary):
            raise InvalidParameterError("vocabulary contains duplicates")
        for obj in self.objects:
            if obj.name not in index:
                raise InvalidParameterError(f"object {obj.name!r} missing from vocabulary")
        gt = {o.name for o in self.objects if o.is_ground_truth}
        for tok in self.reference_caption:
            if tok in self._object_map() and tok not in gt:
                raise InvalidParameterError("reference caption uses a non-ground-truth object")
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_levels", self._static_levels(index))
        object.__setattr__(self, "_slot_cache", {})
        object.__setattr__(self, "_cooc_cache", {})
        object.__setattr__(self, "_lexicon", self._build_lexicon())

    def _assemble_vocabulary(self) -> tuple[str, ...]:
        words: list[str] = [END_TOKEN, IDK_TOKEN, "a", "the", ".", "on"]
        for v in self.verbs:
            if v not in words:
                words.append(v)
        for obj in self.objects:
            if obj.name not in words:
                words.append(obj.name)
        for f in self.fillers:
            if f not in words:
                words.append(f)
        return tuple(words)

    def _object_map(self) -> dict[str, SceneObject]:
        return {o.name: o for o in self.objects}

    def _static_levels(self, index: Mapping[str, int]) -> np.ndarray:
        object_names = {o.name for o in self.objects}
        levels = np.empty(len(self.vocabulary), dtype=float)
        for tok, i in index.items():
            if tok == END_TOKEN:
                levels[i] = END_LEVEL
            elif tok == IDK_TOKEN:
                levels[i] = IDK_LEVEL
            elif tok in object_names:
                levels[i] = 0.0  # overwritten per FOV
            elif tok in self.verbs:
                levels[i] = VERB_LEVEL
            elif tok in _ARTICLES or tok in _PREPOSITIONS or tok == ".":
                levels[i] = FUNCTION_LEVEL
            else:
                levels[i] = FILLER_LEVEL
        return levels

    # -- token bookkeeping ---------------------------------------------------

    @property
    def token_index(self) -> Mapping[str, int]:
        return self._index

    def token_id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise InvalidInputError(f"token {token!r} not in scene vocabulary") from None

    @property
    def ground_truth_names(self) -> frozenset[str]:
        return frozenset(o.name for o in self.objects if o.is_ground_truth)

    @property
    def lexicon(self) -> dict[str, str]:
        """Total POS map over this scene's vocabulary."""
        return self._lexicon

    def _build_lexicon(self) -> dict[str, str]:
        lex: dict[str, str] = {}
        object_names = {o.name for o in self.objects}
        for tok in self.vocabulary:
            if tok in object_names:
                lex[tok] = "noun"
            elif tok in self.verbs:
                lex[tok] = "verb"
            elif tok in _PREPOSITIONS:
                lex[tok] = "preposition"
            else:
                lex[tok] = "other"
        return lex

    def find_object(self, name: str) -> Optional[SceneObject]:
        return self._object_map().get(name)

    # -- grammar -------------------------------------------------------------

    def slot_at(self, position: int) -> Optional[Slot]:
        if position < len(self.skeleton):
            return self.skeleton[position]
        return None  # end-of-sequence slot

    def _slot_vector(self, position: int) -> np.ndarray:
        pos = min(position, len(self.skeleton))
        cached = self._slot_cache.get(pos)
        if cached is not None:
            return cached
        vec = np.zeros(len(self.vocabulary), dtype=float)
        slot = self.slot_at(pos)
        if slot is None:
            vec[self._index[END_TOKEN]] = SLOT_BONUS
        elif isinstance(slot, WordSlot):
            vec[self._index[slot.token]] = SLOT_BONUS
        else:
            for cand in slot.candidates:
                vec[self._index[cand]] = SLOT_BONUS
        self._slot_cache[pos] = vec
        return vec

    def _cooc_vector(self, prev: str) -> Optional[np.ndarray]:
        if prev in self._cooc_cache:
            return self._cooc_cache[prev]
        vec = None
        for (p, tok), bonus in self.cooccurrence.items():
            if p == prev:
                if vec is None:
                    vec = np.zeros(len(self.vocabulary), dtype=float)
                vec[self._index[tok]] += bonus
        self._cooc_cache[prev] = vec
        return vec


def tag_token(lexicon: Mapping[str, str], word: str) -> str:
    """Map a word to its hallucination category via its POS tag."""
    return hallucination_category(lexicon.get(word, "other"))


def hallucination_category(pos: str) -> str:
    if pos == "noun":
        return "existence"
    if pos in ("adjective", "adverb", "number", "verb", "pronoun"):
        return "attribute"
    if pos == "preposition":
        return "relationship"
    return "none"


# ---------------------------------------------------------------------------
# The conditional token model
# ---------------------------------------------------------------------------


def toy_model_logits(
    scene: Scene,
    fov: Fov,
    prefix: Optional[Sequence[str]],
) -> np.ndarray:
    """Token logits conditioned on a visual context window and a text prefix.

    With prefix=None the model returns bare visual conditioning: pure profile
    values with no grammar or co-occurrence terms. With a (possibly empty)
    prefix, the sentence-skeleton slot for the next position and the
    co-occurrence bonus of the last prefix token are added.
    """
    logits = scene._levels.copy()
    for obj in scene.objects:
        logits[scene._index[obj.name]] = profile_value(obj.profile, fov, scene.image)
    if prefix is None:
        return logits
    for tok in prefix:
        if tok not in scene._index:
            raise InvalidInputError(f"prefix token {tok!r} not in vocabulary")
    logits += scene._slot_vector(len(prefix))
    if prefix:
        cooc = scene._cooc_vector(prefix[-1])
        if cooc is not None:
            logits = logits + cooc
    return logits


# ---------------------------------------------------------------------------
# Detector simulator
# ---------------------------------------------------------------------------


def toy_detector(
    token: str,
    scene: Scene,
    eta: Optional[tuple[float, float, float, float]] = None,
    confidence_threshold: float = 0.3,
    rng: Optional[np.random.Generator] = None,
) -> Optional[Fov]:
    """Grounding box for a token, or None when nothing can be located.

    Ground-truth objects are located at their region; hallucinated tokens
    with an anchor snap to the anchor object's region. Both are offset by
    eta. When eta is None and an rng is supplied, a small random jitter is
    drawn instead; otherwise the box is exact.
    """
    obj = scene.find_object(token)
    if obj is None:
        return None
    confidence = 0.9 if obj.is_ground_truth else 0.5
    if confidence < confidence_threshold:
        return None
    region = obj.region
    if not obj.is_ground_truth:
        anchor = scene.find_object(obj.anchor)
        if anchor is None:
            return None
        region = anchor.region
    if eta is None:
        if rng is not None:
            eta = tuple(rng.normal(0.0, 4.0, size=4))
        else:
            eta = (0.0, 0.0, 0.0, 0.0)
    w = max(region.width + eta[0], 1e-6)
    h = max(region.height + eta[1], 1e-6)
    box = Fov(w, h, region.center_x + eta[2], region.center_y + eta[3])
    return clamp_to_image(box, scene.image)


class DetectorSim:
    """Detector with a fixed perturbation, usable as a (token, scene) callable."""

    def __init__(
        self,
        eta: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0),
        confidence_threshold: float = 0.3,
    ) -> None:
        self.eta = eta
        self.confidence_threshold = confidence_threshold

    def __call__(self, token: str, scene: Scene) -> Optional[Fov]:
        return toy_detector(token, scene, self.eta, self.confidence_threshold)


# ---------------------------------------------------------------------------
# Matching scorers
# ---------------------------------------------------------------------------

Scorer = Callable[[Sequence[str], Scene], float]


def oracle_match_score(
    sequence: Sequence[str],
    scene: Scene,
    penalty: float = 1.0,
) -> float:
    """Ground-truth text/image agreement over the sequence's noun tokens.

    Matched minus penalized hallucinated mentions, rescaled to [0, 1].
    A sequence with no nouns scores a neutral 0.5.
    """
    lex = scene.lexicon
    gt = scene.ground_truth_names
    nouns = [t for t in sequence if lex.get(t) == "noun"]
    if not nouns:
        return 0.5
    matched = sum(1 for t in nouns if t in gt)
    hallucinated = len(nouns) - matched
    raw = (matched - penalty * hallucinated) / len(nouns)
    return (raw + penalty) / (1.0 + penalty)


def noisy_match_score(base: Scorer, noise_amp: float, seed: int) -> Scorer:
    """Wrap a scorer with seeded bounded noise, clipped to [0, 1]."""
    if noise_amp < 0:
        raise InvalidParameterError("noise amplitude must be nonnegative")

    def scorer(sequence: Sequence[str], scene: Scene) -> float:
        value = base(sequence, scene)
        noise = noise_amp * _string_noise(seed, "\x1f".join(sequence))
        return min(1.0, max(0.0, value + noise))

    return scorer


def random_match_score(seed: int) -> Scorer:
    """Content-blind scorer: a seeded uniform draw per sequence."""

    def scorer(sequence: Sequence[str], scene: Scene) -> float:
        return (_string_noise(seed, "\x1f".join(sequence)) + 1.0) / 2.0

    return scorer


def constant_match_score(value: float = 0.5) -> Scorer:
    def scorer(sequence: Sequence[str], scene: Scene) -> float:
        return value

    return scorer


# ---------------------------------------------------------------------------
# Canonical demo scene (man holding a clock on the beach)
# ---------------------------------------------------------------------------

DEMO_DETECTOR_ETA = (30.0, 30.0, 20.0, -15.0)


def demo_scene(filler_count: int = 64) -> Scene:
    """Fixture scene where greedy decoding hallucinates and HALC corrects.

    The clock is the victim token with a peaking profile; the surfboard is
    the hallucination whose detector box snaps onto the clock; the book is a
    noisy decoy. Greedy full-image decoding emits "surfboard" at the object
    slot while windows near the clock's optimal context flip it to "clock".
    """
    image = ImageSpec(1000.0, 1000.0)
    clock_region = Fov(120.0, 120.0, 640.0, 300.0)
    man_region = Fov(260.0, 580.0, 330.0, 560.0)
    objects = (
        SceneObject("man", man_region, StableHigh(6.0)),
        SceneObject("beach", Fov(1000.0, 420.0, 500.0, 790.0), StableHigh(6.2)),
        SceneObject(
            "clock",
            clock_region,
            # The optimal window sits well outside the detector box, so direct
            # decoding from the grounding alone does not recover the victim.
            Peaking(v_star=Fov(300.0, 300.0, 640.0, 300.0), width=70.0, amp=5.0, base=2.0),
        ),
        SceneObject(
            "surfboard",
            clock_region,
            ContextShift(slope=0.8, base=5.2),
            is_ground_truth=False,
            anchor="clock",
        ),
        SceneObject(
            "book",
            man_region,
            Noisy(amp=0.8, noise_seed=7, base=1.5),
            is_ground_truth=False,
            anchor="man",
        ),
    )
    skeleton = (
        WordSlot("a"),
        NounSlot(("man",)),
        VerbSlot(("holds",)),
        WordSlot("a"),
        NounSlot(("clock", "surfboard", "book")),
        WordSlot("on"),
        WordSlot("the"),
        NounSlot(("beach",)),
        WordSlot("."),
    )
    return Scene(
        image=image,
        objects=objects,
        verbs=("holds",),
        fillers=tuple(f"w{i:02d}" for i in range(filler_count)),
        skeleton=skeleton,
        cooccurrence={("a", "surfboard"): 0.3},
        reference_caption=("a", "man", "holds", "a", "clock", "on", "the", "beach", "."),
        scene_id="demo",
        trap=TrapInfo(victim="clock", trap="surfboard", position=4, correctable=True),
    )


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    """Parameters of a generated scene corpus."""

    scene_count: int = 100
    trap_fraction: float = 0.5
    correctable_fraction: float = 1.0
    clauses: int = 7
    noun_pool: int = 24
    filler_count: int = 96
    image_width: float = 1000.0
    image_height: float = 1000.0
    # Clause indices eligible for trap placement, cycled in a 1:2:3 ratio so
    # hallucinations concentrate late in the caption.
    trap_clauses: tuple[int, ...] = (1, 3, 6)

    def __post_init__(self) -> None:
        if self.scene_count < 1:
            raise InvalidParameterError("corpus needs at least one scene")
        if not 0.0 <= self.trap_fraction <= 1.0:
            raise InvalidParameterError("trap fraction must lie in [0, 1]")
        if not 0.0 <= self.correctable_fraction <= 1.0:
            raise InvalidParameterError("correctable fraction must lie in [0, 1]")
        if self.noun_pool < 3 * self.clauses + 1:
            raise InvalidParameterError("noun pool too small for the clause count")
        if self.trap_fraction > 0 and max(self.trap_clauses) >= self.clauses:
            raise InvalidParameterError("trap clause index outside the skeleton")


_VERB_POOL = ("holds", "sees", "keeps", "shows")

VICTIM_BASE = 2.5
VICTIM_AMP = 5.0
VICTIM_WIDTH = 180.0
TRAP_BASE = 4.2
TRAP_SLOPE = 0.5
CORPUS_DETECTOR_ETA = (12.0, -9.0, 7.0, 5.0)

# Cycled over trap scenes in order; late tiers come first so that partial
# cycles always over-fill the latest clause, keeping the cumulative
# hallucination ratio non-decreasing in the token budget for any trap count.
_TIER_CYCLE = (2, 2, 2, 1, 1, 0)


def _noun_pool(size: int) -> tuple[str, ...]:
    base = (
        "beach", "man", "clock", "surfboard", "book", "dog", "kite", "boat",
        "chair", "tree", "bird", "lamp", "cup", "hat", "ball", "bench",
        "shell", "towel", "phone", "bag", "rock", "flag", "wave", "cloud",
        "crab", "net", "oar", "fence", "sign", "pier", "drum", "rope",
    )
    if size <= len(base):
        return base[:size]
    extra = tuple(f"obj{i:02d}" for i in range(size - len(base)))
    return base + extra


def _random_region(rng: np.random.Generator, image: ImageSpec) -> Fov:
    s = rng.uniform(0.15, 0.3)
    w = s * image.width
    h = s * rng.uniform(0.85, 1.15) * image.height
    cx = rng.uniform(w / 2.0, image.width - w / 2.0)
    cy = rng.uniform(h / 2.0, image.height - h / 2.0)
    return Fov(w, h, cx, cy)


def _victim_v_star(region: Fov, image: ImageSpec) -> Fov:
    return clamp_to_image(
        Fov(region.width * 1.25, region.height * 1.25, region.center_x, region.center_y),
        image,
    )


def generate_corpus(seed: int, count: int, spec: Optional[CorpusSpec] = None) -> list[Scene]:
    """Deterministic scene corpus controlled by a CorpusSpec.

    Exactly round(trap_fraction * count) scenes carry one victim/trap pair,
    and exactly round(correctable_fraction * traps) of those are correctable
    by some visual context window.
    """
    spec = spec or CorpusSpec()
    if count < 1:
        raise InvalidParameterError("corpus needs at least one scene")
    rng = np.random.default_rng(seed)
    image = ImageSpec(spec.image_width, spec.image_height)
    pool = _noun_pool(spec.noun_pool)
    fillers = tuple(f"w{i:03d}" for i in range(spec.filler_count))

    n_traps = round(spec.trap_fraction * count)
    trap_ids = sorted(rng.permutation(count)[:n_traps].tolist())
    n_corr = round(spec.correctable_fraction * n_traps)
    correctable_ids = set(trap_ids[:n_corr])
    tiers = {sid: _TIER_CYCLE[i % len(_TIER_CYCLE)] for i, sid in enumerate(trap_ids)}

    scenes = []
    for idx in range(count):
        scenes.append(
            _build_scene(
                rng=rng,
                image=image,
                pool=pool,
                fillers=fillers,
                spec=spec,
                scene_id=f"scene{idx:04d}",
                trapped=idx in trap_ids,
                correctable=idx in correctable_ids,
                tier=tiers.get(idx, 0),
            )
        )
    return scenes


def _build_scene(
    rng: np.random.Generator,
    image: ImageSpec,
    pool: tuple[str, ...],
    fillers: tuple[str, ...],
    spec: CorpusSpec,
    scene_id: str,
    trapped: bool,
    correctable: bool,
    tier: int,
) -> Scene:
    need = 3 * spec.clauses
    names = [pool[i] for i in rng.choice(len(pool), size=need, replace=False)]
    trap_token = None
    if trapped:
        remaining = [p for p in pool if p not in names]
        trap_token = remaining[int(rng.integers(len(remaining)))]

    trap_clause = spec.trap_clauses[tier % len(spec.trap_clauses)]
    trap_slot_position = trap_clause * 9 + 4
    victim_name = names[3 * trap_clause + 1] if trapped else None

    objects = []
    for i, name in enumerate(names):
        region = _random_region(rng, image)
        if trapped and name == victim_name:
            amp = VICTIM_AMP if correctable else 0.0
            profile: TokenProfile = Peaking(
                v_star=_victim_v_star(region, image),
                width=VICTIM_WIDTH,
                amp=amp,
                base=VICTIM_BASE,
            )
        else:
            profile = StableHigh(float(rng.uniform(4.0, 6.5)))
        objects.append(SceneObject(name, region, profile))
    if trapped:
        victim_region = next(o.region for o in objects if o.name == victim_name)
        trap_profile: TokenProfile = (
            ContextShift(slope=TRAP_SLOPE, base=TRAP_BASE)
            if correctable
            else StableHigh(TRAP_BASE)
        )
        objects.append(
            SceneObject(
                trap_token,
                victim_region,
                trap_profile,
                is_ground_truth=False,
                anchor=victim_name,
            )
        )

    verbs = tuple(
        _VERB_POOL[int(rng.integers(len(_VERB_POOL)))] for _ in range(spec.clauses)
    )
    skeleton: list[Slot] = []
    reference: list[str] = []
    cooccurrence: dict[tuple[str, str], float] = {}
    for c in range(spec.clauses):
        subj, obj, loc = names[3 * c], names[3 * c + 1], names[3 * c + 2]
        candidates: tuple[str, ...] = (obj,)
        if trapped and c == trap_clause:
            candidates = (obj, trap_token)
        skeleton.extend(
            [
                WordSlot("a"),
                NounSlot((subj,)),
                VerbSlot((verbs[c],)),
                WordSlot("a"),
                NounSlot(candidates),
                WordSlot("on"),
                WordSlot("the"),
                NounSlot((loc,)),
                WordSlot("."),
            ]
        )
        reference.extend(["a", subj, verbs[c], "a", obj, "on", "the", loc, "."])
        cooccurrence[(verbs[c], obj)] = float(rng.uniform(0.05, 0.25))

    trap_info = None
    if trapped:
        trap_info = TrapInfo(
            victim=victim_name,
            trap=trap_token,
            position=trap_slot_position,
            correctable=correctable,
        )
    all_verbs = tuple(dict.fromkeys(verbs))
    return Scene(
        image=image,
        objects=tuple(objects),
        verbs=all_verbs,
        fillers=fillers,
        skeleton=tuple(skeleton),
        cooccurrence=cooccurrence,
        reference_caption=tuple(reference),
        scene_id=scene_id,
        trap=trap_info,
    )


# ---------------------------------------------------------------------------
# Scene serialization (JSON corpus files)
# ---------------------------------------------------------------------------


def _profile_to_json(profile: TokenProfile) -> dict:
    if isinstance(profile, StableHigh):
        return {"kind": "stable_high", "level": profile.level}
    if isinstance(profile, Peaking):
        return {
            "kind": "peaking",
            "v_star": profile.v_star.to_json(),
            "width": profile.width,
            "amp": profile.amp,
            "base": profile.base,
        }
    if isinstance(profile, ContextShift):
        return {"kind": "context_shift", "slope": profile.slope, "base": profile.base}
    return {
        "kind": "noisy",
        "amp": profile.amp,
        "noise_seed": profile.noise_seed,
        "base": profile.base,
    }


def _profile_from_json(doc: dict) -> TokenProfile:
    kind = doc["kind"]
    if kind == "stable_high":
        return StableHigh(doc["level"])
    if kind == "peaking":
        return Peaking(Fov.from_json(doc["v_star"]), doc["width"], doc["amp"], doc["base"])
    if kind == "context_shift":
        return ContextShift(doc["slope"], doc["base"])
    if kind == "noisy":
        return Noisy(doc["amp"], doc["noise_seed"], doc["base"])
    raise InvalidInputError(f"unknown profile kind {kind!r}")


def _slot_to_json(slot: Slot) -> dict:
    if isinstance(slot, WordSlot):
        return {"kind": "word", "token": slot.token}
    if isinstance(slot, NounSlot):
        return {"kind": "noun", "candidates": list(slot.candidates)}
    return {"kind": "verb", "candidates": list(slot.candidates)}


def _slot_from_json(doc: dict) -> Slot:
    if doc["kind"] == "word":
        return WordSlot(doc["token"])
    if doc["kind"] == "noun":
        return NounSlot(tuple(doc["candidates"]))
    if doc["kind"] == "verb":
        return VerbSlot(tuple(doc["candidates"]))
    raise InvalidInputError(f"unknown slot kind {doc['kind']!r}")


def scene_to_json(scene: Scene) -> dict:
    return {
        "id": scene.scene_id,
        "image": {"w": scene.image.width, "h": scene.image.height},
        "vocabulary": list(scene.vocabulary),
        "objects": [
            {
                "name": o.name,
                "region": o.region.to_json(),
                "profile": _profile_to_json(o.profile),
                "ground_truth": o.is_ground_truth,
                "anchor": o.anchor,
            }
            for o in scene.objects
        ],
        "cooccurrence": [[p, t, b] for (p, t), b in sorted(scene.cooccurrence.items())],
        "reference": list(scene.reference_caption),
        "skeleton": [_slot_to_json(s) for s in scene.skeleton],
        "verbs": list(scene.verbs),
        "fillers": list(scene.fillers),
        "trap": (
            {
                "victim": scene.trap.victim,
                "trap": scene.trap.trap,
                "position": scene.trap.position,
                "correctable": scene.trap.correctable,
            }
            if scene.trap
            else None
        ),
    }


def scene_from_json(doc: dict) -> Scene:
    trap = None
    if doc.get("trap"):
        t = doc["trap"]
        trap = TrapInfo(t["victim"], t["trap"], t["position"], t["correctable"])
    return Scene(
        image=ImageSpec(doc["image"]["w"], doc["image"]["h"]),
        objects=tuple(
            SceneObject(
                name=o["name"],
                region=Fov.from_json(o["region"]),
                profile=_profile_from_json(o["profile"]),
                is_ground_truth=o["ground_truth"],
                anchor=o.get("anchor"),
            )
            for o in doc["objects"]
        ),
        verbs=tuple(doc["verbs"]),
        fillers=tuple(doc["fillers"]),
        skeleton=tuple(_slot_from_json(s) for s in doc["skeleton"]),
        cooccurrence={(p, t): b for p, t, b in doc.get("cooccurrence", [])},
        reference_caption=tuple(doc["reference"]),
        scene_id=doc.get("id", "scene"),
        trap=trap,
        vocabulary=tuple(doc["vocabulary"]),
    )


def save_corpus(scenes: Sequence[Scene], path) -> None:
    payload = {"scenes": [scene_to_json(s) for s in scenes]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_corpus(path) -> list[Scene]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return [scene_from_json(doc) for doc in payload["scenes"]]
