"""
Word alignment on a tiny parallel corpus
========================================

Train IBM Model 1, refine with the HMM aligner, and decode links.
"""

from tafkit.alignment import ParallelCorpus, alignment_posteriors, train_hmm, train_ibm1, viterbi_align

pairs = [
    ("set an alarm for 8 am", "seta ano larmo fro ocho ami"),
    ("set an alarm for 7 pm", "seta ano larmo fro sieto pimi"),
    ("play some rap music", "plei soma rapa musa"),
    ("play some music by elvis", "plei soma musa bai elviso"),
    ("call mom", "kalo mama"),
    ("call john today", "kalo jono todai"),
    ("remind me to call mom tomorrow", "rimo mi tu kalo mama morgo"),
]
corpus = ParallelCorpus([(s.split(), t.split()) for s, t in pairs])

# %%
# Model 1 gives a lexical table; its log-likelihood never decreases.
ibm1 = train_ibm1(corpus, iterations=5)
print("ibm1 loglik:", [round(x, 3) for x in ibm1.log_likelihoods])
print("t(larmo | alarm) =", round(ibm1.prob("larmo", "alarm"), 3))

# %%
# The HMM adds a jump distribution over relative source positions.
hmm = train_hmm(corpus, iterations=5, init=ibm1)
print("hmm loglik:", [round(x, 3) for x in hmm.log_likelihoods])
print("jump weights (-5..+5):", hmm.jump.round(3))

# %%
# Decode one pair both ways, and look at the posterior for one target word.
src, tgt = "call john today".split(), "kalo jono todai".split()
print("model1 links:", sorted(viterbi_align(hmm, src, tgt, "model1")))
print("hmm links:   ", sorted(viterbi_align(hmm, src, tgt, "hmm")))
post = alignment_posteriors(hmm, src, tgt)
print("P(source | 'jono'), NULL first:", post[:, 1].round(3))
