"""Co-adaptation lab: agents that model other agents who are also learning.

Subpackages and modules:

- ``core``: shared data model (experiences, replay, config, logging)
- ``envs``: repeated-interaction environments with switching opponents
- ``representation``: latent strategy/dynamics encoders and predictor
- ``rl``: latent-conditioned soft actor-critic
- ``agents``: full training loops (rili, oracle, sac, lili, sili)
- ``pacbayes``: generalization bound evaluation
- ``experiments``: batch run orchestration and result tables
- ``service``: HTTP tag-game endpoint for playing against trained agents
"""

__version__ = "0.1.0"
