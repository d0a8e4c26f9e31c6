"""
Scoring parses: grounding and slot F1
=====================================

Trees carry no token offsets, so slot F1 first grounds each slot value
onto the utterance tokens.
"""

from tafkit.corpus_io import Example
from tafkit.evaluation import aggregate, evaluate, ground
from tafkit.parse_tree import Utterance, parse

tokens = "En qué año se convirtió T. Woods en profesional ?".split()
tree = parse("[IN:GET_INFO_CONTACT [SL:CONTACT T. Woods ] [SL:EVENT se convirtió en profesional ] ]")

# %%
# "T. Woods" matches directly; the event phrase is interrupted by the name,
# so it goes through character-level alignment instead.
g = ground(tree, tokens)
for tok, tag in zip(tokens, g.bio.tags):
    print(f"{tok:<12}{tag}")

# %%
# A small evaluation with two languages and two prediction runs.
gold = [
    Example("1", Utterance("ruf Anna an", "ruf Anna an".split(), "de"), parse("[IN:CREATE_CALL [SL:CONTACT Anna ] ]")),
    Example("2", Utterance("toca algo de rap", "toca algo de rap".split(), "es"), parse("[IN:PLAY_MUSIC [SL:MUSIC_GENRE rap ] ]")),
]
run_a = [gold[0], Example("2", gold[1].utterance, parse("[IN:PLAY_MUSIC [SL:MUSIC_GENRE algo de rap ] ]"))]
run_b = gold
reports = [evaluate(gold, run) for run in (run_a, run_b)]
print(reports[0].to_table())
print()
print(aggregate(reports).to_table())
