"""Regenerates corpus_a.txt and corpus_b.txt next to this script."""

import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(20240611)

# --- corpus A: casual first-person anecdote style ---
A_subj = ["I", "we", "my sister", "my dad", "our neighbor", "the kid next door", "my buddy Sam", "my aunt", "the guy at the shop", "my roommate", "Grandma", "the dog", "my cousin Lou", "this old man on the bus"]
A_verbs = ["grabbed", "dropped", "found", "fixed", "lost", "burned", "tossed", "painted", "dug up", "borrowed", "broke", "cleaned", "sold", "forgot"]
A_objs = ["the old bike", "a bag of apples", "that busted radio", "the back fence", "a box of letters", "the garden hose", "my good boots", "a jar of pickles", "the blue truck", "half the pie", "the porch light", "a pile of comics", "the cat's bowl", "his fishing rod"]
A_times = ["last night", "this morning", "on Sunday", "after lunch", "around noon", "way back in June", "yesterday", "the other day", "before dawn", "right after school"]
A_places = ["down by the creek", "in the garage", "out back", "at the market", "up the hill", "behind the barn", "at Joe's place", "on Main Street", "near the pond", "in the kitchen"]
A_asides = ["honestly", "no joke", "I swear", "believe it or not", "go figure", "of course", "turns out", "funny thing is", "long story short", "anyway"]
A_reacts = ["We laughed so hard.", "Nobody saw that coming.", "Dad just shook his head.", "What a mess!", "It was kinda great.", "I still can't believe it.", "Man, was it cold.", "Mom was not happy.", "That's life, I guess.", "Pretty wild, right?", "Oh well.", "We didn't eat till nine."]
A_feel = ["tired", "starving", "soaked", "grumpy", "happy", "sore", "stuck", "late", "broke", "lucky"]

def a_sentence():
    r = rng.random()
    s, v, o = rng.choice(A_subj), rng.choice(A_verbs), rng.choice(A_objs)
    t, p = rng.choice(A_times), rng.choice(A_places)
    if r < 0.25:
        return f"{s[0].upper()+s[1:]} {v} {o} {p} {t}."
    if r < 0.4:
        return f"{rng.choice(A_asides).capitalize()}, {s} {v} {o}."
    if r < 0.55:
        return rng.choice(A_reacts)
    if r < 0.7:
        return f"{t.capitalize()} we were {rng.choice(A_feel)}, so {s} {v} {o}."
    if r < 0.8:
        return f"Didn't {rng.choice(['matter', 'help', 'work'])} much, but {s} {v} {o} anyway."
    if r < 0.9:
        return f"So {s} goes, \"hey, who {v} {o}?\" and I'm like, not me."
    return f"{s[0].upper()+s[1:]}'s {rng.choice(A_feel)} now, {rng.choice(A_asides)}."

# --- corpus B: polished formal expository style ---
B_subj = ["The initiative", "This approach", "The framework", "The organization", "The proposed strategy", "The committee", "The research team", "This development", "The policy", "The comprehensive program", "The platform", "The analysis"]
B_verbs = ["demonstrates", "facilitates", "underscores", "enhances", "highlights", "ensures", "promotes", "strengthens", "reflects", "establishes", "optimizes", "supports"]
B_objs = ["a significant commitment to sustainable growth", "the importance of effective collaboration", "a robust foundation for future innovation", "meaningful engagement across stakeholders", "the overall efficiency of operations", "a comprehensive understanding of key challenges", "transparent and accountable governance", "the long-term resilience of communities", "measurable improvements in performance", "a holistic perspective on emerging trends", "seamless integration of diverse resources", "the strategic alignment of objectives"]
B_conn = ["Furthermore", "Additionally", "Moreover", "Consequently", "In addition", "Notably", "Overall", "Importantly", "As a result", "In this context"]
B_adj = ["crucial", "essential", "pivotal", "vital", "instrumental", "fundamental", "significant", "invaluable"]
B_nouns = ["innovation", "collaboration", "sustainability", "transparency", "efficiency", "inclusivity", "accountability", "adaptability"]

def b_sentence():
    r = rng.random()
    s, v, o = rng.choice(B_subj), rng.choice(B_verbs), rng.choice(B_objs)
    if r < 0.3:
        return f"{rng.choice(B_conn)}, {s[0].lower()+s[1:]} {v} {o}."
    if r < 0.5:
        return f"{s} {v} {o}, thereby fostering {rng.choice(B_nouns)} and {rng.choice(B_nouns)}."
    if r < 0.65:
        return f"It is {rng.choice(B_adj)} to recognize that {s[0].lower()+s[1:]} {v} {o}."
    if r < 0.8:
        return f"By prioritizing {rng.choice(B_nouns)}, {s[0].lower()+s[1:]} {v} {o}."
    if r < 0.9:
        return f"This underscores the {rng.choice(B_adj)} role of {rng.choice(B_nouns)} in achieving {rng.choice(B_objs)}."
    return f"{s} not only {v} {o}, but also {rng.choice(B_verbs)} {rng.choice(B_objs)}."

def build(sentence, target):
    out, size = [], 0
    while size < target:
        para = " ".join(sentence() for _ in range(rng.randint(3, 7)))
        out.append(para)
        size += len(para) + 1
    return "\n".join(out) + "\n"

open(os.path.join(HERE, "corpus_a.txt"), "w").write(build(a_sentence, 200_000))
open(os.path.join(HERE, "corpus_b.txt"), "w").write(build(b_sentence, 200_000))
