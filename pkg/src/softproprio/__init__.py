"""Sim-to-real proprioception for a soft crawling robot.

Dual cross-domain LSTM autoencoders with pressure-conditioned decoders align
simulated and perturbed ("synthetic real") strain-sensor streams in a shared
latent space; a kinematic head on that space estimates node positions, and the
reconstruction error flags collisions.
"""

__version__ = "0.1.0"
