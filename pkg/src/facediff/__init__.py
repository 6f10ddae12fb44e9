"""facediff: windowed transformer-diffusion engine for speech-driven
3D-morphable-model expression sequences.

Library layout mirrors the pipeline stages: ``numerics`` (autodiff
substrate), ``paf``/``dataset`` (storage and curation), ``morphable``
(coefficients -> vertices), ``style`` (personal-style autoencoder),
``conditioning``/``denoiser``/``diffusion`` (the generative model),
``losses``/``metrics`` (training objective and evaluation), ``trainer``
(training loops) and ``cli`` (operator surface).
"""

__version__ = "0.1.0"
