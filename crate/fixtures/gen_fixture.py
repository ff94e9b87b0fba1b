#!/usr/bin/env python3
"""Deterministic generator for the bundled QA corpus fixture.

Writes fixtures/corpus/{sources.jsonl,questions.jsonl,docs/*} and
fixtures/corpus_manifest.json. The manifest records what the generator
planted (counts, compound queries, PII) so tests can check the loader and
the query processor against values that do not come from the Rust code.

Run from the repository root:  python3 fixtures/gen_fixture.py
"""

import json
import os
import random
import shutil

SEED = 20251015
ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "corpus")

TOPICS = [
    ("astronomy", "science"), ("botany", "science"), ("geology", "science"),
    ("maritime history", "history"), ("architecture", "arts"), ("music", "arts"),
    ("cuisine", "culture"), ("medicine", "science"), ("railways", "engineering"),
    ("textiles", "engineering"), ("mathematics", "science"), ("ornithology", "science"),
    ("metallurgy", "engineering"), ("cartography", "history"), ("theater", "arts"),
    ("viticulture", "culture"), ("glassmaking", "engineering"), ("beekeeping", "culture"),
    ("clockmaking", "engineering"), ("linguistics", "science"),
]
LICENSES = ["cc-by-4.0", "cc-by-sa-4.0", "cc0-1.0", "proprietary"]

COMMON = (
    "the of a in to was is for on with as by at from that which this its were "
    "an also many several early later during after before between often most "
    "some other such these those their into over under about across"
).split()

TOPIC_WORDS = {
    "astronomy": "telescope orbit comet nebula eclipse meridian parallax lens star planet sky chart",
    "botany": "seed fern pollen orchid root leaf herbarium spore petal canopy grafting soil",
    "geology": "basalt stratum fault quarry mineral crystal erosion sediment granite ridge magma fossil",
    "maritime history": "harbor galleon voyage mast cargo admiral fleet lighthouse tide anchor wharf sail",
    "architecture": "vault arch facade column cornice atrium buttress gable masonry plan dome nave",
    "music": "sonata choir organ fugue rhythm chord tuning string motet score concert hymn",
    "cuisine": "broth spice pastry ferment grain oven sauce herb brine flour kitchen recipe",
    "medicine": "remedy fever surgeon ward tincture pulse infirmary dosage tonic clinic splint salve",
    "railways": "locomotive gauge signal sleeper junction freight boiler viaduct depot carriage track piston",
    "textiles": "loom weft warp dye spindle linen wool shuttle bobbin tapestry mill thread",
    "mathematics": "theorem lemma series proof integer geometry algebra axiom calculus prime matrix tableau",
    "ornithology": "plumage heron warbler migration nest falcon wren egg roost song wing flock",
    "metallurgy": "furnace alloy bronze ingot forge smelting ore crucible anvil temper slag bellows",
    "cartography": "atlas survey projection compass coastline meridian scale legend sounding chart map border",
    "theater": "stage playwright troupe curtain audience rehearsal actor prologue scenery comedy tragedy mask",
    "viticulture": "vine harvest cellar cask vintage grape terroir press barrel trellis cork must",
    "glassmaking": "kiln furnace pane bead cullet annealing mould blowpipe lens vessel sand tint",
    "beekeeping": "hive comb queen swarm nectar wax apiary smoker brood honey frame pollen",
    "clockmaking": "escapement pendulum spring gear dial balance movement bezel chime mainspring regulator wheel",
    "linguistics": "phoneme grammar dialect syntax lexicon morpheme vowel script glossary idiom accent corpus",
}

SYL = ["ka", "lo", "ve", "ra", "ti", "mon", "sel", "dor", "an", "ish", "ber", "qua",
       "ne", "vi", "zo", "ren", "tal", "mir", "os", "el", "fin", "gar", "hu", "jen"]

INTERROGATIVE_FREE_FILLER = True  # filler never contains question marks


def name(rng, parts=2):
    return "".join(rng.choice(SYL) for _ in range(parts)).capitalize()


def person(rng, hyphen=False):
    first = name(rng)
    if hyphen:
        first = first + "-" + name(rng)
    return f"{first} {name(rng, 3)}"


def filler_sentence(rng, topic):
    words = TOPIC_WORDS[topic].split()
    n = rng.randint(9, 24)
    out = []
    for i in range(n):
        pool = words if rng.random() < 0.45 else COMMON
        out.append(rng.choice(pool))
    s = " ".join(out)
    return s[0].upper() + s[1:] + "."


def paragraph(rng, topic, target):
    sents = []
    total = 0
    while total < target:
        s = filler_sentence(rng, topic)
        sents.append(s)
        total += len(s) + 1
    return sents


KINDS = ["founder", "location", "year", "inventor", "ingredient"]


def make_fact(rng, kind, idx, topic):
    ent_core = name(rng, 2) + " " + name(rng, 2)
    if kind == "founder":
        ent = f"{ent_core} Society"
        ans = person(rng, hyphen=(idx % 7 == 0))
        sent = f"The {ent} was founded by {ans} after a long period of planning."
        q = f"Who founded the {ent}?"
        q_and = ("Who founded the", ent)
    elif kind == "location":
        ent = f"{ent_core} Archive"
        ans = name(rng, 3) + "ford"
        sent = f"The {ent} is located in the town of {ans} near the old road."
        q = f"In which town is the {ent} located?"
        q_and = ("Where is the", ent)
    elif kind == "year":
        ent = f"{ent_core} Works"
        ans = str(rng.randint(1520, 1960))
        sent = f"Construction of the {ent} was completed in the year {ans} by local crews."
        q = f"In what year was the {ent} completed?"
        q_and = ("When was the", ent)
    elif kind == "inventor":
        ent = f"{ent_core} apparatus"
        ans = person(rng)
        sent = f"The {ent} was invented by {ans}, who refined it for {topic} work."
        q = f"Who invented the {ent}?"
        q_and = ("Who invented the", ent)
    else:
        ent = f"{ent_core} stew"
        ans = name(rng, 2).lower() + " root"
        sent = f"The chief ingredient of {ent} is {ans}, gathered in late autumn."
        q = f"What is the chief ingredient of {ent}?"
        q_and = ("What is the chief ingredient of", ent)
    return {"kind": kind, "entity": ent, "answer": ans, "sentence": sent,
            "question": q, "clause_head": q_and}


def clause(fact):
    head, ent = fact["clause_head"]
    kind = fact["kind"]
    if kind == "location":
        return f"{head} {ent} located"
    if kind == "year":
        return f"{head} {ent} completed"
    if kind == "founder":
        return f"{head} {ent}"
    if kind == "inventor":
        return f"{head} {ent}"
    return f"{head} {ent}"


def lower_first(s):
    return s[0].lower() + s[1:]


def main():
    rng = random.Random(SEED)
    if os.path.isdir(ROOT):
        shutil.rmtree(ROOT)
    os.makedirs(os.path.join(ROOT, "docs"))

    # sources and docs
    sources = []
    docs = []
    for i, (topic, domain) in enumerate(TOPICS):
        sid = f"src{i + 1:02d}"
        src = {
            "source_id": sid,
            "title": f"{topic.title()} Notes",
            "license": LICENSES[i % len(LICENSES)],
            "topics": [topic, domain],
            "topic": topic,
        }
        sources.append(src)
        ndocs = 2 if i < 10 else 1
        for d in range(ndocs):
            if i in (4, 11) and d == 0:
                media, ext = "html", "html"
            elif i in (7, 15):
                media, ext = "plain", "txt"
            else:
                media, ext = "markdown", "md"
            docs.append({
                "doc_id": f"{sid}-d{d + 1}",
                "source": src,
                "media_type": media,
                "ext": ext,
                "fetched_at": f"20{23 + (i + d) % 3}-{(i * 3 + d) % 12 + 1:02d}-{(i * 7 + d) % 27 + 1:02d}T00:00:00Z",
                "target_len": rng.randint(22000, 58000),
                "facts": [],
                "mentions": [],
            })

    # questions
    nq = 50
    plan = (["and"] * 8 + ["multi"] * 4 + ["please"] * 4 + ["spaces"] * 3
            + ["qq"] * 3 + ["email"] * 3 + ["phone"] * 2 + ["card"] * 1)
    plan += ["plain"] * (nq - len(plan))
    rng.shuffle(plan)

    questions = []
    fact_idx = 0
    for qi, style in enumerate(plan):
        nfacts = 2 if style in ("and", "multi") else 1
        facts = []
        for _ in range(nfacts):
            doc = rng.choice(docs)
            kind = KINDS[fact_idx % len(KINDS)]
            f = make_fact(rng, kind, fact_idx, doc["source"]["topic"])
            f["doc_id"] = doc["doc_id"]
            doc["facts"].append(f)
            # distractor mentions of the entity in two other documents
            for other in rng.sample(docs, 2):
                if other is not doc:
                    other["mentions"].append(f["entity"])
            facts.append(f)
            fact_idx += 1

        f0 = facts[0]
        if style == "and":
            f1 = facts[1]
            text = f"{clause(f0)} and {lower_first(clause(f1))}?"
        elif style == "multi":
            text = f"{f0['question']} {facts[1]['question']}"
        elif style == "please":
            text = "Please " + lower_first(f0["question"])
        elif style == "spaces":
            w = f0["question"].split(" ")
            text = w[0] + "  " + " ".join(w[1:])
        elif style == "qq":
            text = f0["question"] + "?"
        elif style == "email":
            text = f"{f0['question']} Send the reply to {name(rng).lower()}.{name(rng).lower()}@example.org"
        elif style == "phone":
            text = f"{f0['question']} You can call me at +1 415 555 {rng.randint(1000, 9999)}"
        elif style == "card":
            text = f"My card 4111 1111 1111 {rng.randint(1000, 9999)} was charged. {f0['question'][0].lower()}{f0['question'][1:]}"
            # keep a single question mark: the card prefix ends with a period
        else:
            text = f0["question"]

        answers = [f0["answer"]]
        if nfacts == 2:
            answers.append(facts[1]["answer"])

        answer_docs = sorted({f["doc_id"] for f in facts})
        others = [d["doc_id"] for d in docs if d["doc_id"] not in answer_docs]
        rank = rng.sample(others, 12 - len(answer_docs))
        for ad in answer_docs:
            rank.insert(rng.randint(0, 7), ad)
        questions.append({
            "qid": f"q{qi + 1:03d}",
            "question": text,
            "answers": answers,
            "source_rank": rank,
            "style": style,
        })

    # render documents
    sources_lines = []
    doc_sizes = {}
    for doc in docs:
        topic = doc["source"]["topic"]
        paras = []
        ents = [f["entity"] for f in doc["facts"]]
        intro = (f"This page collects notes on {topic}. "
                 + ("It discusses " + ", ".join(f"the {e}" for e in ents) + ". " if ents else "")
                 + " ".join(paragraph(rng, topic, 250)))
        paras.append(intro)
        total = len(intro)
        while total < doc["target_len"]:
            sents = paragraph(rng, topic, rng.randint(250, 850))
            if doc["mentions"] and rng.random() < 0.15:
                e = doc["mentions"].pop()
                sents.insert(rng.randint(0, len(sents)), f"Scholars sometimes compare this with the {e}.")
            p = " ".join(sents)
            paras.append(p)
            total += len(p) + 2
        for e in doc["mentions"]:
            paras.append(f"Scholars sometimes compare this with the {e}. " + " ".join(paragraph(rng, topic, 200)))
        for f in doc["facts"]:
            pos = rng.randint(1, len(paras) - 1)
            sents = paragraph(rng, topic, rng.randint(200, 500))
            sents.insert(rng.randint(0, len(sents)), f["sentence"])
            paras.insert(pos, " ".join(sents))

        title = f"{topic.title()} notes ({doc['doc_id']})"
        if doc["media_type"] == "html":
            body = [f"<!DOCTYPE html>\n<html>\n<head>\n<title>{title}</title>\n"
                    "<style>p { margin: 0 }</style>\n"
                    "<script>var tracker = \"<p>not content</p>\";</script>\n</head>\n<body>\n"
                    f"<h1>{title}</h1>\n"]
            for j, p in enumerate(paras):
                if j % 5 == 3:
                    body.append(f"<div class=\"note\">\n  <p>{p} <em>Notes</em> &amp; remarks.</p>\n</div>\n")
                else:
                    body.append(f"<p>{p}</p>\n")
            body.append("<!-- footer -->\n<footer>&copy; 2024</footer>\n</body>\n</html>\n")
            raw = "".join(body)
        elif doc["media_type"] == "plain":
            raw = f"{title}\r\n\r\n" + "\r\n\r\n".join(paras) + "\r\n"
        else:
            raw = f"# {title}\n\n" + "\n\n".join(paras) + "\n"

        fname = f"{doc['doc_id']}.{doc['ext']}"
        with open(os.path.join(ROOT, "docs", fname), "w", encoding="utf-8", newline="") as fh:
            fh.write(raw)
        doc_sizes[doc["doc_id"]] = len(raw.encode("utf-8"))
        src = doc["source"]
        sources_lines.append({
            "doc_id": doc["doc_id"],
            "source_id": src["source_id"],
            "uri": f"https://{src['source_id']}.example.net/{doc['doc_id']}",
            "media_type": doc["media_type"],
            "fetched_at": doc["fetched_at"],
            "file": f"docs/{fname}",
            "title": src["title"],
            "license": src["license"],
            "topics": src["topics"],
        })

    with open(os.path.join(ROOT, "sources.jsonl"), "w") as fh:
        for line in sources_lines:
            fh.write(json.dumps(line) + "\n")
    with open(os.path.join(ROOT, "questions.jsonl"), "w") as fh:
        for q in questions:
            fh.write(json.dumps({k: q[k] for k in ("qid", "question", "answers", "source_rank")}) + "\n")

    styles = [q["style"] for q in questions]
    decomposed = sum(s in ("and", "multi") for s in styles)
    rephrased = sum(s in ("please", "spaces", "qq") for s in styles)
    manifest = {
        "seed": SEED,
        "num_sources": len(sources),
        "num_documents": len(docs),
        "num_questions": len(questions),
        "query_processing": {
            "decomposed": decomposed,
            "rephrased": rephrased,
            "unchanged": len(questions) - decomposed - rephrased,
            "pii_removed": sum(s in ("email", "phone", "card") for s in styles),
            "pii_replacements": {
                "EMAIL": styles.count("email"),
                "PHONE": styles.count("phone"),
                "NUMBER": styles.count("card"),
            },
        },
        "decomposed_qids": [q["qid"] for q in questions if q["style"] in ("and", "multi")],
        "sources": [
            {"source_id": s["source_id"], "license": s["license"], "topics": s["topics"],
             "documents": [d["doc_id"] for d in docs if d["source"] is s]}
            for s in sources
        ],
        "document_bytes": doc_sizes,
    }
    with open(os.path.join(os.path.dirname(ROOT), "corpus_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    main()
