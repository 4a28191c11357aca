#!/usr/bin/env python3
"""Regenerates the bundled 20-video demo fixture under data/demo/.

Text is restricted to lower-case-able ASCII words, hyphens, commas and full
stops so the token annotations written here line up with the C++ tokenizer.
"""

import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "demo"

TERMS = [
    "blood pressure", "hypertension", "insulin", "type two diabetes", "blood sugar", "cholesterol",
    "statin", "heart attack", "stroke", "kidney disease", "dialysis", "inflammation", "antibiotics",
    "vaccine", "immune system", "chemotherapy", "tumor", "asthma", "inhaler", "metformin",
    "arrhythmia", "pneumonia", "anemia", "thyroid", "migraine", "osteoporosis", "insomnia",
    "allergy", "antihistamine", "sepsis",
]
# The baseline gazetteer knows most, not all, of the terms.
LEXICON_TERMS = TERMS[:22] + ["pressure", "sugar"]

SUBJECTS = ["a cardiologist", "our nurse", "the doctor", "a pharmacist", "this physician", "the specialist"]
FILLERS = ["every morning", "at home", "in simple words", "step by step", "for beginners", "in this episode"]
HIGH_TEMPLATES = [
    "{s} explains how {t1} is linked to {t2}.",
    "we review the evidence on {t1} and {t2} {f}.",
    "{s} describes early signs of {t1}, and when {t2} needs treatment.",
    "patients with {t1} often ask about {t2}.",
    "learn how {t1} changes the risk of {t2} {f}.",
    "{s} compares {t1} with {t2} using recent trials.",
]
LOW_TEMPLATES = [
    "we cook a quick dinner {f}.",
    "my friends and i try a new workout {f}.",
    "this vlog shows our trip to the lake {f}.",
    "today we talk about staying calm and feeling good.",
    "subscribe for more tips on sleep and {t1} {f}.",
    "a relaxing walk helps me unwind after work.",
    "we test three cheap gadgets {f}.",
]
CHANNELS = ["healthdesk", "dailyvlog", "clinicnotes", "kitchenfun", "medexplained"]
MEDICAL_OBJECTS = ["syringe", "stethoscope", "pill bottle", "lab coat", "medicine chest", "band aid",
                   "oxygen mask", "stretcher", "neck brace", "beaker"]
OTHER_OBJECTS = ["dining table", "plate", "pizza", "dog", "laptop", "television", "car", "guitar",
                 "basketball", "sunglasses", "coffee mug", "bookcase", "sofa", "bicycle"]

TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*|[^\sa-z0-9]")


def tokenize(sentence):
    return TOKEN_RE.findall(sentence.lower())


def term_labels(sentence, used_terms):
    tokens = tokenize(sentence)
    labels = ["NA"] * len(tokens)
    for term in used_terms:
        tt = term.split()
        for i in range(len(tokens) - len(tt) + 1):
            if tokens[i:i + len(tt)] == tt:
                for k in range(len(tt)):
                    labels[i + k] = "MT"
    return tokens, labels


def make_sentence(rng, high):
    t1, t2 = rng.sample(TERMS, 2)
    template = rng.choice(HIGH_TEMPLATES if high else LOW_TEMPLATES)
    text = template.format(s=rng.choice(SUBJECTS), f=rng.choice(FILLERS), t1=t1, t2=t2)
    used = [t for t in (t1, t2) if ("{t1}" in template and t == t1) or ("{t2}" in template and t == t2)]
    return text[0].upper() + text[1:], used


def srt_time(ms):
    h, ms = divmod(ms, 3600000)
    m, ms = divmod(ms, 60000)
    s, ms = divmod(ms, 1000)
    return f"{h:02d}:{m:02d}:{s:02d},{ms:03d}"


def caption_cues(rng, sentences):
    words = " ".join(sentences).split()
    cues, t, i = [], 0, 0
    while i < len(words):
        n = rng.randint(3, 7)
        cues.append((t, t + 1800, " ".join(words[i:i + n])))
        t += 2000
        i += n
    return cues


def write_srt(path, cues, rng):
    blocks = []
    for k, (a, b, text) in enumerate(cues, 1):
        if rng.random() < 0.2 and " " in text:
            first, rest = text.split(" ", 1)
            text = f"<i>{first}</i>\n{rest}"
        blocks.append(f"{k}\n{srt_time(a)} --> {srt_time(b)}\n{text}\n")
    path.write_text("\n".join(blocks))


def write_vtt(path, cues):
    blocks = ["WEBVTT\n"]
    for a, b, text in cues:
        blocks.append(f"{srt_time(a).replace(',', '.')} --> {srt_time(b).replace(',', '.')} align:start\n{text}\n")
    path.write_text("\n".join(blocks))


def frame_rows(rng, vid, duration, high):
    rows = []
    for f in range((duration + 1) // 2):
        k = 3 if rng.random() < 0.05 else 5
        p_med = 0.45 if high else 0.08
        cats = []
        for _ in range(k):
            pool = MEDICAL_OBJECTS if rng.random() < p_med else OTHER_OBJECTS
            c = rng.choice(pool)
            while c in cats:
                c = rng.choice(MEDICAL_OBJECTS + OTHER_OBJECTS)
            cats.append(c)
        weights = sorted((rng.random() ** 2 for _ in range(k)), reverse=True)
        total = sum(weights) * rng.uniform(1.05, 1.6)
        for r, (c, w) in enumerate(zip(cats, weights), 1):
            rows.append(f"{vid},{f},{r},{c},{round(w / total, 4)}")
    return rows


def main():
    rng = random.Random(20240601)
    (OUT / "captions").mkdir(parents=True, exist_ok=True)
    for old in (OUT / "captions").iterdir():
        old.unlink()

    labels = ["high"] * 12 + ["low"] * 8
    rng.shuffle(labels)
    metadata, annotations, second, frames = [], [], [], []
    for v, label in enumerate(labels):
        vid = f"demo{v + 1:02d}"
        # A few videos go against type so the classifier has something to get wrong.
        high = (label == "high") != (v in (4, 13))
        desc = [make_sentence(rng, high) for _ in range(rng.randint(2, 3))]
        caps = [make_sentence(rng, high) for _ in range(rng.randint(3, 5))] if v != 7 else []
        duration = rng.randint(16, 40)
        metadata.append({
            "video_id": vid,
            "title": f"Episode {v + 1}",
            "description": " ".join(s for s, _ in desc),
            "duration_s": duration,
            "channel": rng.choice(CHANNELS),
            "knowledge_label": label,
        })
        if caps:
            cues = caption_cues(rng, [s for s, _ in caps])
            if v % 6 == 5:
                write_vtt(OUT / "captions" / f"{vid}.vtt", cues)
            else:
                write_srt(OUT / "captions" / f"{vid}.srt", cues, rng)

        second_label = label if v not in (2, 11) else ("low" if label == "high" else "high")
        annotations.append(f"{vid}\tvideo\t-\t-\t-\t{label}")
        second.append(f"{vid}\tvideo\t-\t-\t-\t{second_label}")
        for source, sents in (("desc", desc), ("cap", caps)):
            for i, (text, used) in enumerate(sents):
                tokens, gold = term_labels(text, used)
                for t, (tok, lab) in enumerate(zip(tokens, gold)):
                    annotations.append(f"{vid}\t{source}\t{i}\t{t}\t{tok}\t{lab}")
                    other = lab
                    if rng.random() < 0.03:
                        other = "NA" if lab == "MT" else "MT"
                    second.append(f"{vid}\t{source}\t{i}\t{t}\t{tok}\t{other}")
                annotations.append("")
                second.append("")
        frames.extend(frame_rows(rng, vid, duration, high))

    header = "video_id\tsource\tsentence_index\ttoken_index\ttoken\tlabel"
    (OUT / "metadata.jsonl").write_text("".join(json.dumps(m) + "\n" for m in metadata))
    (OUT / "annotations.tsv").write_text(header + "\n" + "\n".join(annotations) + "\n")
    (OUT / "second_rater.tsv").write_text(header + "\n" + "\n".join(second) + "\n")
    (OUT / "frames.csv").write_text("video_id,frame_index,rank,category,probability\n" + "\n".join(frames) + "\n")
    (OUT / "medical_terms.txt").write_text(
        "# gazetteer for the lexicon baseline\n" + "\n".join(LEXICON_TERMS) + "\n")


if __name__ == "__main__":
    main()
