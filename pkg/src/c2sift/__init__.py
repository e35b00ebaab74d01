"""c2sift: host-centric NetFlow analytics for botnet C2 detection.

The package ingests flow records, aggregates them per external host and day,
computes flow-size / beaconing / quantile-distributional features, trains an
ensemble of six classifiers plus a stacked combiner, and triages the flagged
hosts against deny/allow lists and analyst-style rules.
"""

__version__ = "0.1.0"
