"""
Projection versus filling on one example
========================================

The same English example goes through annotation projection and through
the filler data path. A fixed lexicon stands in for a trained aligner.
"""

from tafkit.alignment import AlignmentModel, viterbi_align
from tafkit.corpus_io import Example
from tafkit.parse_tree import Utterance, parse
from tafkit.taf import ReferenceFiller, build_filler_infer, build_filler_train, fill, validate_filler_output
from tafkit.tap import LexiconPosTagger, pos_trim, project_parse

source = Example(
    "e1",
    Utterance("Play some Elvis for me", "Play some Elvis for me".split()),
    parse("[IN:PLAY_MUSIC [SL:MUSIC_ARTIST_NAME Elvis ] ]"),
)
translation = Utterance("Jouez à Elvis pour moi", "Jouez à Elvis pour moi".split(), "fr")
model = AlignmentModel(
    {"Play": {"Jouez": 0.6}, "Elvis": {"Elvis": 0.5, "à": 0.3}, "for": {"pour": 0.6}, "me": {"moi": 0.7}}
)

# %%
# Projection: the preposition is aligned to "Elvis" and ends up in the slot,
# until POS trimming strips it from the boundary.
links = viterbi_align(model, source.utterance.tokens, translation.tokens, "model1")
outcome = project_parse(source.parse, source.utterance.tokens, translation.tokens, links)
print("links:    ", sorted(links))
print("projected:", outcome.tree)
pos = LexiconPosTagger().tag_tokens(translation.tokens, "fr")
print("trimmed:  ", pos_trim(outcome.tree, pos, spans=outcome.spans))

# %%
# Filling: the training instance pairs the English utterance with the
# parse signature; inference swaps in the translation.
print(build_filler_train(source).input)
instance = build_filler_infer(translation, source)
print(instance.input)

# %%
# Any backend can fill it; here the alignment-based test double.
output = fill(instance, ReferenceFiller(model, {"e1": source}))
print(output, "->", validate_filler_output(output, instance).kind)
print(validate_filler_output("[IN:PLAY_MUSIC [SL:MUSIC_ARTIST_NAME Presley ] ]", instance))
