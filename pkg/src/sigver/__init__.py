"""Online signature verification.

Subpackages cover the full pipeline: SVC-format signature files
(``svc``), protocol splits and pair lists (``dataset``), time-function
extraction (``features``), the recurrent verifier (``lstm``,
``siamese``), an elastic-distance baseline (``dtw``), score evaluation
(``metrics``), and synthetic corpus generation (``synth``).
"""

__version__ = "0.1.0"
