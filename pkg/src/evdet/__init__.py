"""Set-prediction event detection in multi-channel time series.

Submodules:

* ``core``       - events, windows, class vocabularies, normalization
* ``signal``     - synthetic data, scaling, windowing, sampling, baselines
* ``assignment`` - interval IoU, Hungarian matching, greedy evaluation matcher
* ``metrics``    - event/sample F1 variants, mask conversion, gap filling
* ``autodiff``   - minimal reverse-mode tensor engine with gradient checking
* ``model``      - backbone, latent resampler, decoder, prediction heads
* ``objective``  - hybrid set/dense/consistency training loss
* ``train``      - AdamW, one-cycle schedule, early-stopped training loop
* ``harness``    - cross-validation driver, reports, SVG timelines, CLI
"""

__version__ = "0.1.0"

from . import assignment, autodiff, core, harness, metrics, model, objective, signal, train

__all__ = [
    "assignment",
    "autodiff",
    "core",
    "harness",
    "metrics",
    "model",
    "objective",
    "signal",
    "train",
    "__version__",
]
