"""Sense inventories and annotated WSD corpora.

Two on-disk families are supported:

* inventory TSV: ``sense_id<TAB>lemma<TAB>pos<TAB>gloss[<TAB>example ...]``
* instance files: FEWS-style TSV (``sentence<TAB>gold_sense_id`` with the
  ambiguous span marked ``<WSD>...</WSD>`` inside the sentence, plus an
  optional third column of comma-separated binary candidates) or JSONL with
  one instance object per line.

Invalid instance rows are skipped and reported, never fatal: corpora at the
100K-row scale realistically contain stragglers and the load report keeps
the account auditable.  Inventory violations abort the load.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InstanceError, InventoryLoadError, MarkerError, SamplingError

WSD_OPEN = "<WSD>"
WSD_CLOSE = "</WSD>"

#: PRNG identity written into sample provenance headers.  Only the
#: ``random.Random().random()`` sequence is used, which Python guarantees
#: stable across versions for a fixed seed.
SAMPLING_ALGORITHM = "mt19937/python-random-v1"


class Pos(str, Enum):
    NOUN = "noun"
    VERB = "verb"
    ADJECTIVE = "adjective"
    ADVERB = "adverb"
    OTHER = "other"


_POS_ALIASES = {
    "noun": Pos.NOUN,
    "n": Pos.NOUN,
    "verb": Pos.VERB,
    "v": Pos.VERB,
    "adjective": Pos.ADJECTIVE,
    "adj": Pos.ADJECTIVE,
    "a": Pos.ADJECTIVE,
    "adverb": Pos.ADVERB,
    "adv": Pos.ADVERB,
    "r": Pos.ADVERB,
    "other": Pos.OTHER,
}


def parse_pos(text: str) -> Pos:
    try:
        return _POS_ALIASES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"unparseable part of speech: {text!r}") from None


class Source(str, Enum):
    FEWS_TRAIN = "fews_train"
    FEWS_TEST_FEWSHOT = "fews_test_fewshot"
    FEWS_TEST_ZEROSHOT = "fews_test_zeroshot"
    SEMCOR = "semcor"
    FOOL_ME_SET1 = "fool_me_set1"
    FOOL_ME_SET2 = "fool_me_set2"
    FOOL_ME_SET3 = "fool_me_set3"
    FOOL_ME_SET4 = "fool_me_set4"
    HARD_EN = "hard_en"
    DATASET_42D = "dataset_42d"
    USER = "user"


FOOL_ME_SOURCES = frozenset(
    {Source.FOOL_ME_SET1, Source.FOOL_ME_SET2, Source.FOOL_ME_SET3, Source.FOOL_ME_SET4}
)


@dataclass(frozen=True)
class SenseEntry:
    sense_id: str
    lemma: str
    pos: Pos
    gloss: str
    examples: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.sense_id:
            raise InventoryLoadError("sense_id must be non-empty")
        if not self.gloss:
            raise InventoryLoadError(f"sense {self.sense_id!r} has an empty gloss")


@dataclass(frozen=True)
class SenseInventory:
    """Lookup structure over sense entries.

    Index lists preserve source-file order so candidate ordering is
    deterministic everywhere downstream (prompts, tie-breaking, exports).
    """

    entries: tuple[SenseEntry, ...]
    by_id: dict[str, SenseEntry] = field(repr=False)
    index: dict[tuple[str, Pos], tuple[str, ...]] = field(repr=False)

    @classmethod
    def from_entries(cls, entries: Iterable[SenseEntry]) -> "SenseInventory":
        ordered = tuple(entries)
        by_id: dict[str, SenseEntry] = {}
        index: dict[tuple[str, Pos], list[str]] = {}
        for entry in ordered:
            if entry.sense_id in by_id:
                raise InventoryLoadError(f"duplicate sense_id {entry.sense_id!r}")
            by_id[entry.sense_id] = entry
            index.setdefault((entry.lemma, entry.pos), []).append(entry.sense_id)
        return cls(
            entries=ordered,
            by_id=by_id,
            index={key: tuple(ids) for key, ids in index.items()},
        )

    def candidates(self, lemma: str, pos: Pos) -> tuple[SenseEntry, ...]:
        ids = self.index.get((lemma.lower(), pos), ())
        return tuple(self.by_id[sense_id] for sense_id in ids)

    def __len__(self) -> int:
        return len(self.entries)


def load_sense_inventory(path: str | Path, format: str = "tsv") -> SenseInventory:
    """Load an inventory TSV.  Contract violations abort with the row number."""
    if format != "tsv":
        raise InventoryLoadError(f"unsupported inventory format: {format!r}")
    path = Path(path)
    entries: list[SenseEntry] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 4:
                raise InventoryLoadError(f"{path.name}:{lineno}: expected >=4 tab-separated fields")
            sense_id, lemma, pos_text, gloss = fields[0], fields[1], fields[2], fields[3]
            if sense_id in seen:
                raise InventoryLoadError(f"{path.name}:{lineno}: duplicate sense_id {sense_id!r}")
            seen.add(sense_id)
            try:
                pos = parse_pos(pos_text)
            except ValueError as exc:
                raise InventoryLoadError(f"{path.name}:{lineno}: {exc}") from None
            if not gloss:
                raise InventoryLoadError(f"{path.name}:{lineno}: empty gloss for {sense_id!r}")
            examples = tuple(col for col in fields[4:] if col)
            entries.append(
                SenseEntry(
                    sense_id=sense_id,
                    lemma=lemma.lower(),
                    pos=pos,
                    gloss=gloss,
                    examples=examples,
                )
            )
    return SenseInventory.from_entries(entries)


def candidate_senses(inventory: SenseInventory, lemma: str, pos: Pos) -> tuple[SenseEntry, ...]:
    """All senses for (lemma, pos) in inventory file order; empty when unknown."""
    return inventory.candidates(lemma, pos)


def split_marked_sentence(sentence: str) -> tuple[str, str, str]:
    """Split ``pre<WSD>target</WSD>post``; raises MarkerError on any violation."""
    opens = sentence.count(WSD_OPEN)
    closes = sentence.count(WSD_CLOSE)
    if opens == 0 and closes == 0:
        raise MarkerError("missing marker")
    if opens != 1 or closes != 1:
        raise MarkerError(f"expected exactly one marker pair, found {opens} open / {closes} close")
    start = sentence.index(WSD_OPEN)
    end = sentence.index(WSD_CLOSE)
    if end < start:
        raise MarkerError("closing marker precedes opening marker")
    target = sentence[start + len(WSD_OPEN) : end]
    if not target:
        raise MarkerError("empty span between markers")
    return sentence[:start], target, sentence[end + len(WSD_CLOSE) :]


@dataclass(frozen=True)
class WsdInstance:
    """One sentence with a single marked ambiguous span."""

    instance_id: str
    sentence: str
    lemma: str
    pos: Pos
    gold_sense_id: str | None = None
    source: Source = Source.USER
    candidates: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        split_marked_sentence(self.sentence)  # enforces the marker invariant
        if not self.lemma:
            raise InstanceError(f"{self.instance_id}: empty lemma")

    @property
    def target_surface(self) -> str:
        return split_marked_sentence(self.sentence)[1]

    @property
    def plain_sentence(self) -> str:
        pre, target, post = split_marked_sentence(self.sentence)
        return pre + target + post

    @property
    def span(self) -> tuple[int, int]:
        """(start, end) of the target inside :attr:`plain_sentence`."""
        pre, target, _ = split_marked_sentence(self.sentence)
        return len(pre), len(pre) + len(target)


@dataclass(frozen=True)
class RowError:
    row: int
    reason: str


@dataclass
class LoadReport:
    path: str
    loaded: int = 0
    errors: list[RowError] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.errors)


@dataclass
class LoadResult:
    instances: list[WsdInstance]
    report: LoadReport

    def __iter__(self):
        return iter(self.instances)

    def __len__(self) -> int:
        return len(self.instances)


def _lemma_pos_from_sense_id(sense_id: str) -> tuple[str, Pos] | None:
    # FEWS-style ids look like ``lemma.pos.N``; lemmas themselves may contain dots.
    parts = sense_id.split(".")
    if len(parts) < 3:
        return None
    try:
        pos = parse_pos(parts[-2])
    except ValueError:
        return None
    return ".".join(parts[:-2]).lower(), pos


def _resolve_lemma_pos(
    gold_sense_id: str | None, inventory: SenseInventory | None
) -> tuple[str, Pos] | None:
    if gold_sense_id is None:
        return None
    if inventory is not None:
        entry = inventory.by_id.get(gold_sense_id)
        if entry is not None:
            return entry.lemma, entry.pos
    return _lemma_pos_from_sense_id(gold_sense_id)


def _instance_from_tsv_row(
    row: str,
    instance_id: str,
    source: Source,
    inventory: SenseInventory | None,
) -> WsdInstance:
    fields = row.split("\t")
    if len(fields) < 2:
        raise InstanceError("expected sentence<TAB>gold_sense_id")
    sentence, gold = fields[0], fields[1]
    if not gold:
        raise InstanceError("empty gold sense id")
    if inventory is not None and gold not in inventory.by_id:
        raise InstanceError(f"unknown gold sense {gold!r}")
    resolved = _resolve_lemma_pos(gold, inventory)
    if resolved is None:
        raise InstanceError(f"cannot derive lemma/pos from sense id {gold!r}")
    lemma, pos = resolved
    candidates: tuple[str, ...] | None = None
    if len(fields) >= 3 and fields[2]:
        candidates = tuple(c.strip() for c in fields[2].split(",") if c.strip())
    return WsdInstance(
        instance_id=instance_id,
        sentence=sentence,
        lemma=lemma,
        pos=pos,
        gold_sense_id=gold,
        source=source,
        candidates=candidates,
    )


def _instance_from_json_obj(
    obj: dict,
    fallback_id: str,
    default_source: Source,
    inventory: SenseInventory | None,
) -> WsdInstance:
    sentence = obj.get("sentence")
    if not isinstance(sentence, str):
        raise InstanceError("missing sentence")
    gold = obj.get("gold_sense_id")
    if gold is not None and not isinstance(gold, str):
        raise InstanceError("gold_sense_id must be a string or null")
    if gold is not None and inventory is not None and gold not in inventory.by_id:
        raise InstanceError(f"unknown gold sense {gold!r}")
    lemma = obj.get("lemma")
    pos_text = obj.get("pos")
    if not lemma or not pos_text:
        resolved = _resolve_lemma_pos(gold, inventory)
        if resolved is None:
            raise InstanceError("missing lemma/pos and not derivable from gold sense id")
        lemma, pos = resolved
    else:
        pos = parse_pos(str(pos_text))
    source = Source(obj["source"]) if obj.get("source") else default_source
    raw_candidates = obj.get("candidates")
    candidates = tuple(raw_candidates) if raw_candidates else None
    return WsdInstance(
        instance_id=str(obj.get("instance_id") or fallback_id),
        sentence=sentence,
        lemma=str(lemma).lower(),
        pos=pos,
        gold_sense_id=gold,
        source=source,
        candidates=candidates,
    )


def load_instances(
    path: str | Path,
    format: str = "fews_tsv",
    inventory: SenseInventory | None = None,
    source: Source = Source.USER,
) -> LoadResult:
    """Load instances from ``fews_tsv`` or ``jsonl``.

    Row order is preserved; invalid rows are skipped and recorded in the
    report.  ``instance_id`` is synthesized as ``<file-stem>:<row>`` when
    absent.  When an inventory is given, unknown gold ids become row errors.
    Lines starting with ``#`` are provenance headers and are ignored.
    """
    path = Path(path)
    if format not in ("fews_tsv", "jsonl"):
        raise InstanceError(f"unsupported instance format: {format!r}")
    report = LoadReport(path=str(path))
    instances: list[WsdInstance] = []
    stem = path.stem
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fallback_id = f"{stem}:{lineno}"
            try:
                if format == "fews_tsv":
                    instance = _instance_from_tsv_row(line, fallback_id, source, inventory)
                else:
                    try:
                        obj = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise InstanceError(f"invalid JSON: {exc}") from None
                    instance = _instance_from_json_obj(obj, fallback_id, source, inventory)
            except (InstanceError, ValueError) as exc:
                report.errors.append(RowError(row=lineno, reason=str(exc)))
                continue
            instances.append(instance)
            report.loaded += 1
    return LoadResult(instances=instances, report=report)


_ADVERSARIAL_SOURCES = {
    "fool_me_1": Source.FOOL_ME_SET1,
    "fool_me_2": Source.FOOL_ME_SET2,
    "fool_me_3": Source.FOOL_ME_SET3,
    "fool_me_4": Source.FOOL_ME_SET4,
    "hard_en": Source.HARD_EN,
    "dataset_42d": Source.DATASET_42D,
}


def load_adversarial_set(
    path: str | Path,
    which: str,
    format: str = "fews_tsv",
    inventory: SenseInventory | None = None,
) -> LoadResult:
    """Load one ablation benchmark; ``which`` picks the source tag.

    Fool-Me rows must carry exactly two candidate sense ids (binary task);
    rows violating that become row errors.
    """
    try:
        tag = _ADVERSARIAL_SOURCES[which]
    except KeyError:
        raise InstanceError(
            f"unknown adversarial set {which!r}; expected one of {sorted(_ADVERSARIAL_SOURCES)}"
        ) from None
    result = load_instances(path, format=format, inventory=inventory, source=tag)
    if tag not in FOOL_ME_SOURCES:
        return result
    kept: list[WsdInstance] = []
    for instance in result.instances:
        if instance.candidates is None or len(instance.candidates) != 2:
            n = 0 if instance.candidates is None else len(instance.candidates)
            result.report.errors.append(
                RowError(
                    row=_row_of(instance.instance_id),
                    reason=f"{instance.instance_id}: Fool-Me rows need exactly 2 candidates, got {n}",
                )
            )
            continue
        kept.append(instance)
    result.instances = kept
    result.report.loaded = len(kept)
    return result


def _row_of(instance_id: str) -> int:
    tail = instance_id.rsplit(":", 1)[-1]
    return int(tail) if tail.isdigit() else -1


@dataclass(frozen=True)
class SampleSpec:
    per_pos_counts: dict[str, int]
    seed: int

    def counts(self) -> dict[Pos, int]:
        out: dict[Pos, int] = {}
        for key, count in self.per_pos_counts.items():
            if count < 0:
                raise SamplingError(f"negative count for {key}")
            out[parse_pos(key)] = count
        return out


def stratified_sample(instances: Sequence[WsdInstance], spec: SampleSpec) -> list[WsdInstance]:
    """Seeded per-POS draw without replacement.

    One Mersenne Twister stream seeded with ``spec.seed`` drives a partial
    Fisher–Yates over each POS group, groups processed in fixed enum order.
    Uses only ``Random.random()`` so equal inputs give equal outputs across
    Python versions and platforms.
    """
    counts = spec.counts()
    by_pos: dict[Pos, list[WsdInstance]] = {}
    for instance in instances:
        by_pos.setdefault(instance.pos, []).append(instance)

    rng = random.Random(spec.seed)
    sampled: list[WsdInstance] = []
    for pos in Pos:
        want = counts.get(pos, 0)
        if want == 0:
            continue
        pool = by_pos.get(pos, [])
        if want > len(pool):
            raise SamplingError(
                f"insufficient {pos.value} instances: requested {want}, available {len(pool)}"
                f" (shortfall {want - len(pool)})"
            )
        pool = list(pool)
        for i in range(want):
            # partial Fisher–Yates: pick uniformly from pool[i:]
            j = i + int(rng.random() * (len(pool) - i))
            if j >= len(pool):  # guard the half-open rounding edge
                j = len(pool) - 1
            pool[i], pool[j] = pool[j], pool[i]
        sampled.extend(pool[:want])
    return sampled


def instance_to_dict(instance: WsdInstance) -> dict:
    """The JSONL wire object, keys in schema order."""
    return {
        "instance_id": instance.instance_id,
        "sentence": instance.sentence,
        "lemma": instance.lemma,
        "pos": instance.pos.value,
        "gold_sense_id": instance.gold_sense_id,
        "source": instance.source.value,
        "candidates": list(instance.candidates) if instance.candidates else None,
    }


def dump_instances(
    instances: Iterable[WsdInstance],
    path: str | Path,
    header: str | None = None,
) -> int:
    """Write instances as JSONL; an optional ``#`` provenance header goes first."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        for instance in instances:
            fh.write(json.dumps(instance_to_dict(instance), ensure_ascii=False) + "\n")
            count += 1
    return count


def retag(instance: WsdInstance, source: Source) -> WsdInstance:
    return replace(instance, source=source)
