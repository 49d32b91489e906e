"""Imitation of human joint-angle demonstrations by a DQN-controlled planar biped.

Stages: keypoint ingest, angle extraction, Savitzky-Golay smoothing, a small
numpy neural network, a kinematic imitation environment, a DQN trainer and
comparison metrics.  ``python -m biped_imitation --help`` lists the commands.
"""
__version__ = "0.1.0"
