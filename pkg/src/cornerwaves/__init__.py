"""Free-surface water waves with surface tension and a moving contact line
in a beach corner, together with audits of the energy and calculus
identities behind the model."""

__version__ = "0.1.0"
