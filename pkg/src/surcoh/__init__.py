"""Surprisal and semantic-coherence analytics for transcribed spontaneous speech.

The toolkit ingests line-delimited interview transcripts, scores subject
speech with a token-probability provider (built-in Kneser-Ney n-gram model,
replay file, or external bridge process), measures semantic coherence with
a built-in LDA topic model and with sentence embeddings, and reproduces the
group/severity analyses as plot-ready CSV tables.  A synthetic-disruption
generator provides validation corpora when no clinical data is available.
"""

__version__ = "0.1.0"
