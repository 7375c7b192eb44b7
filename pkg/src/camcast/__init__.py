"""camcast: photographic weather-forecast visualization toolkit.

Turns a present webcam frame plus numerical-weather-prediction descriptors
into synthesized future frames via a conditional GAN, alongside
analog-retrieval and pixel-regression baselines and the human-evaluation
tooling (realism study, condition-matching audit) used to judge them.
"""

__version__ = "0.1.0"
